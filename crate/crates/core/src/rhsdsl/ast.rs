use std::fmt;

/// Binary operators of the expression grammar.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

/// Named functions of the grammar.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Tanh,
    Abs,
    Min,
    Max,
    /// `sat(a, b)` clamps `a` to `[-|b|, |b|]`.
    Sat,
    Pow,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            "sat" => Func::Sat,
            "pow" => Func::Pow,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
            Func::Sat => "sat",
            Func::Pow => "pow",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Exp | Func::Sin | Func::Cos | Func::Tanh | Func::Abs => 1,
            Func::Min | Func::Max | Func::Sat | Func::Pow => 2,
        }
    }
}

/// Expression tree. Indices are stored zero-based and printed one-based.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    /// `x[i]`
    X(usize),
    /// `xd[k][i]`: component `i` of the state delayed by `θ_k`.
    Xd(usize, usize),
    /// `u[j]`
    U(usize),
    /// Radius argument of a Lipschitz bound.
    R,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Variable bindings for evaluation. `xd` is flattened delay-major.
#[derive(Clone, Copy, Debug)]
pub struct Bindings<'a> {
    pub x: &'a [f64],
    pub xd: &'a [f64],
    pub u: &'a [f64],
    pub r: f64,
}

fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= 64.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

impl Expr {
    pub fn eval(&self, env: &Bindings<'_>) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::X(i) => env.x[*i],
            Expr::Xd(k, i) => env.xd[k * env.x.len() + i],
            Expr::U(j) => env.u[*j],
            Expr::R => env.r,
            Expr::Neg(a) => -a.eval(env),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(env), b.eval(env));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b),
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(env);
                match f {
                    Func::Exp => a.exp(),
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tanh => a.tanh(),
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval(env)),
                    Func::Max => a.max(args[1].eval(env)),
                    Func::Sat => {
                        let lim = args[1].eval(env).abs();
                        a.clamp(-lim, lim)
                    }
                    Func::Pow => pow(a, args[1].eval(env)),
                }
            }
        }
    }

    /// Evaluates an expression in the radius variable only.
    pub fn eval_r(&self, r: f64) -> f64 {
        self.eval(&Bindings {
            x: &[],
            xd: &[],
            u: &[],
            r,
        })
    }

    pub fn references_input(&self) -> bool {
        match self {
            Expr::U(_) => true,
            Expr::Neg(a) => a.references_input(),
            Expr::Bin(_, a, b) => a.references_input() || b.references_input(),
            Expr::Call(_, args) => args.iter().any(Expr::references_input),
            _ => false,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::X(i) => write!(f, "x[{}]", i + 1),
            Expr::Xd(k, i) => write!(f, "xd[{}][{}]", k + 1, i + 1),
            Expr::U(j) => write!(f, "u[{}]", j + 1),
            Expr::R => write!(f, "r"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}
