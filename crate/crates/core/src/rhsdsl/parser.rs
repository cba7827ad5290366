//! Recursive-descent parser for right-hand-side expressions.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('-' | '+') unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'pi' | 'r' | 'x' '[' int ']' | 'xd' '[' int ']' '[' int ']'
//!         | 'u' '[' int ']' | func '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Indices are one-based and checked against the declared dimensions.

use thiserror::Error;

use super::ast::{BinOp, Expr, Func};

/// Declared dimensions an expression may refer to.
#[derive(Clone, Copy, Debug)]
pub struct Scope {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    /// Whether `r` is allowed (Lipschitz bounds) instead of state variables.
    pub radius_only: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseErrorKind {
    #[error("unexpected character '{0}'")]
    BadChar(char),
    #[error("unexpected end of expression")]
    Eof,
    #[error("expected {expected}, found {found}")]
    Expected { expected: String, found: String },
    #[error("invalid number '{0}'")]
    BadNumber(String),
    #[error("unknown identifier '{0}'")]
    UnknownIdent(String),
    #[error("{name} takes {expected} argument(s), got {got}")]
    Arity {
        name: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("undeclared state x[{index}] (n = {n})")]
    UndeclaredState { index: usize, n: usize },
    #[error("undeclared delay xd[{index}] (p = {p})")]
    UndeclaredDelay { index: usize, p: usize },
    #[error("undeclared input u[{index}] (m = {m})")]
    UndeclaredInput { index: usize, m: usize },
    #[error("'{0}' is not allowed here")]
    NotAllowed(String),
}

/// Parse failure with the byte offset where it was detected.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("at column {}: {kind}", pos + 1)]
pub struct ParseError {
    pub pos: usize,
    pub kind: ParseErrorKind,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Sym(c) => format!("'{c}'"),
            Tok::End => "end of expression".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => out.push((start, Tok::Num(v))),
                _ => {
                    return Err(ParseError {
                        pos: start,
                        kind: ParseErrorKind::BadNumber(text.into()),
                    })
                }
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/^()[],".contains(c) {
            out.push((i, Tok::Sym(c)));
            i += 1;
        } else {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err(ParseError {
                pos: i,
                kind: ParseErrorKind::BadChar(ch),
            });
        }
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    scope: Scope,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].1.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err<T>(&self, kind: ParseErrorKind) -> Result<T, ParseError> {
        Err(ParseError {
            pos: self.pos(),
            kind,
        })
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            Ok(())
        } else if *self.peek() == Tok::End {
            self.err(ParseErrorKind::Eof)
        } else {
            self.err(ParseErrorKind::Expected {
                expected: format!("'{c}'"),
                found: self.peek().describe(),
            })
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Sym('-') => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Sym('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Sym('^') {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn index(&mut self) -> Result<(usize, usize), ParseError> {
        self.expect('[')?;
        let pos = self.pos();
        let value = match self.bump() {
            Tok::Num(v) if v >= 1.0 && v.fract() == 0.0 && v < 1e9 => v as usize,
            Tok::End => {
                return Err(ParseError {
                    pos,
                    kind: ParseErrorKind::Eof,
                })
            }
            other => {
                return Err(ParseError {
                    pos,
                    kind: ParseErrorKind::Expected {
                        expected: "a positive integer index".into(),
                        found: other.describe(),
                    },
                })
            }
        };
        self.expect(']')?;
        Ok((value, pos))
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => self.ident(name, start),
            Tok::End => Err(ParseError {
                pos: start,
                kind: ParseErrorKind::Eof,
            }),
            other => Err(ParseError {
                pos: start,
                kind: ParseErrorKind::Expected {
                    expected: "a number, variable, function or '('".into(),
                    found: other.describe(),
                },
            }),
        }
    }

    fn ident(&mut self, name: String, start: usize) -> Result<Expr, ParseError> {
        let sc = self.scope;
        let state_err = |name: &str| ParseError {
            pos: start,
            kind: ParseErrorKind::NotAllowed(name.to_string()),
        };
        match name.as_str() {
            "pi" => Ok(Expr::Const(std::f64::consts::PI)),
            "r" => {
                if sc.radius_only {
                    Ok(Expr::R)
                } else {
                    Err(state_err("r"))
                }
            }
            "x" => {
                if sc.radius_only {
                    return Err(state_err("x"));
                }
                let (i, pos) = self.index()?;
                if i > sc.n {
                    return Err(ParseError {
                        pos,
                        kind: ParseErrorKind::UndeclaredState { index: i, n: sc.n },
                    });
                }
                Ok(Expr::X(i - 1))
            }
            "xd" => {
                if sc.radius_only {
                    return Err(state_err("xd"));
                }
                let (k, kpos) = self.index()?;
                if k > sc.p {
                    return Err(ParseError {
                        pos: kpos,
                        kind: ParseErrorKind::UndeclaredDelay { index: k, p: sc.p },
                    });
                }
                let (i, ipos) = self.index()?;
                if i > sc.n {
                    return Err(ParseError {
                        pos: ipos,
                        kind: ParseErrorKind::UndeclaredState { index: i, n: sc.n },
                    });
                }
                Ok(Expr::Xd(k - 1, i - 1))
            }
            "u" => {
                if sc.radius_only {
                    return Err(state_err("u"));
                }
                let (j, pos) = self.index()?;
                if j > sc.m {
                    return Err(ParseError {
                        pos,
                        kind: ParseErrorKind::UndeclaredInput { index: j, m: sc.m },
                    });
                }
                Ok(Expr::U(j - 1))
            }
            other => {
                let func = Func::from_name(other).ok_or_else(|| ParseError {
                    pos: start,
                    kind: ParseErrorKind::UnknownIdent(other.to_string()),
                })?;
                self.expect('(')?;
                let mut args = vec![self.expr()?];
                while *self.peek() == Tok::Sym(',') {
                    self.bump();
                    args.push(self.expr()?);
                }
                self.expect(')')?;
                if args.len() != func.arity() {
                    return Err(ParseError {
                        pos: start,
                        kind: ParseErrorKind::Arity {
                            name: func.name(),
                            expected: func.arity(),
                            got: args.len(),
                        },
                    });
                }
                Ok(Expr::Call(func, args))
            }
        }
    }
}

/// Parses one expression, checking every index against `scope`.
pub fn parse_expr(src: &str, scope: Scope) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        at: 0,
        scope,
    };
    let e = p.expr()?;
    match p.peek() {
        Tok::End => Ok(e),
        other => {
            let found = other.describe();
            p.err(ParseErrorKind::Expected {
                expected: "operator or end of expression".into(),
                found,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rhsdsl::ast::Bindings;

    const SC: Scope = Scope {
        n: 2,
        m: 1,
        p: 2,
        radius_only: false,
    };

    fn eval(src: &str, x: &[f64], xd: &[f64], u: &[f64]) -> f64 {
        parse_expr(src, SC)
            .unwrap()
            .eval(&Bindings { x, xd, u, r: 0.0 })
    }

    #[test]
    fn precedence() {
        assert_eq!(eval("1 + 2 * 3", &[0.0, 0.0], &[0.0; 4], &[0.0]), 7.0);
        assert_eq!(eval("-2^2", &[0.0, 0.0], &[0.0; 4], &[0.0]), -4.0);
        assert_eq!(eval("2^3^2", &[0.0, 0.0], &[0.0; 4], &[0.0]), 512.0);
        assert_eq!(eval("8 / 4 / 2", &[0.0, 0.0], &[0.0; 4], &[0.0]), 1.0);
    }

    #[test]
    fn variables_are_one_based() {
        let v = eval(
            "x[2] - xd[2][1] + 10*u[1]",
            &[1.0, 2.0],
            &[0.0, 0.0, 5.0, 0.0],
            &[0.5],
        );
        assert_eq!(v, 2.0);
    }

    #[test]
    fn functions() {
        assert_eq!(eval("sat(3, 1)", &[0.0, 0.0], &[0.0; 4], &[0.0]), 1.0);
        assert_eq!(eval("sat(-3, 1)", &[0.0, 0.0], &[0.0; 4], &[0.0]), -1.0);
        assert_eq!(
            eval("max(1, min(4, 3))", &[0.0, 0.0], &[0.0; 4], &[0.0]),
            3.0
        );
        assert!(
            (eval("exp(1)", &[0.0, 0.0], &[0.0; 4], &[0.0]) - std::f64::consts::E).abs() < 1e-15
        );
    }

    #[test]
    fn reports_positions() {
        let e = parse_expr("x[1] + * 2", SC).unwrap_err();
        assert_eq!(e.pos, 7);
        let e = parse_expr("x[1] + u[2]", SC).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UndeclaredInput { index: 2, m: 1 });
        assert_eq!(e.pos, 9);
        let e = parse_expr("x[1] $", SC).unwrap_err();
        assert_eq!(e.pos, 5);
        assert!(matches!(
            parse_expr("sin(1, 2)", SC).unwrap_err().kind,
            ParseErrorKind::Arity { .. }
        ));
        assert!(matches!(
            parse_expr("foo(1)", SC).unwrap_err().kind,
            ParseErrorKind::UnknownIdent(_)
        ));
        assert!(matches!(
            parse_expr("(1 + 2", SC).unwrap_err().kind,
            ParseErrorKind::Eof
        ));
    }

    #[test]
    fn radius_scope() {
        let sc = Scope {
            radius_only: true,
            ..SC
        };
        assert_eq!(parse_expr("2*r", sc).unwrap().eval_r(3.0), 6.0);
        assert!(parse_expr("x[1]", sc).is_err());
        assert!(parse_expr("r", SC).is_err());
    }

    #[test]
    fn print_then_parse_is_stable() {
        for src in [
            "-xd[1][1]",
            "x[1]^2 + 0*xd[2][2]",
            "-(x[1] - 1e-7) / 3",
            "tanh(u[1]) * sat(x[2], 0.5)",
        ] {
            let a = parse_expr(src, SC).unwrap();
            let b = parse_expr(&a.to_string(), SC).unwrap();
            assert_eq!(a, b, "{src} -> {a}");
        }
    }
}
