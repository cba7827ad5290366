//! System definitions: parsing, evaluation of right-hand sides, Lipschitz
//! metadata and the built-in catalog.
//!
//! A system-spec document is JSON:
//!
//! ```json
//! {
//!   "name": "linear-delay",
//!   "description": "x'(t) = -x(t-1)",
//!   "n": 1, "m": 0,
//!   "delays": [1.0],
//!   "f": ["-xd[1][1]"],
//!   "kappa": "1",
//!   "zero_equilibrium": true,
//!   "validity_radius": null
//! }
//! ```
//!
//! `f` holds one expression per state component in the grammar of
//! [`parser`]. `kappa`, when present, is an expression in `r` bounding the
//! Lipschitz constant of `f` on the ball of radius `r`. `zero_equilibrium` is
//! optional; when given it is checked against `f(0, 0, 0)`.
//! `validity_radius` records the input radius on which the Lipschitz bound is
//! uniform in `u` (`null` means all inputs).

pub mod ast;
pub mod catalog;
pub mod parser;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::{Delays, HistoryError};
use crate::sampling::{ball_point, derive_seed};
pub use ast::{Bindings, Expr};
pub use parser::{parse_expr, ParseError, Scope};

/// Safety factor applied to sampled Lipschitz quotients.
pub const LIPSCHITZ_SAFETY: f64 = 1.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("invalid system document: {0}")]
    Json(String),
    #[error("{field}: {source}")]
    Syntax {
        field: String,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Delays(#[from] HistoryError),
    #[error("dimension mismatch: n = {n} but f has {got} component(s)")]
    DimensionMismatch { n: usize, got: usize },
    #[error("state dimension n must be positive")]
    ZeroDimension,
    #[error("kappa must be positive and nondecreasing for r > 0 (fails at r = {r})")]
    KappaShape { r: f64 },
    #[error("zero_equilibrium asserted but |f(0, 0, 0)| = {residual}")]
    NotAnEquilibrium { residual: f64 },
    #[error("unknown catalog entry '{0}'")]
    UnknownCatalogEntry(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RhsError {
    #[error("evaluation overflow: component {component} of f is not finite")]
    Overflow { component: usize },
    #[error("argument dimension mismatch: {what} has {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// Serialized form of a system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub n: usize,
    #[serde(default)]
    pub m: usize,
    pub delays: Vec<f64>,
    pub f: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_equilibrium: Option<bool>,
    #[serde(default)]
    pub validity_radius: Option<f64>,
}

/// A validated delay system `ẋ(t) = f(x(t), (x(t-θ_k))_k, u(t))`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemDef {
    pub name: String,
    pub description: String,
    n: usize,
    m: usize,
    delays: Delays,
    rhs: Vec<Expr>,
    kappa: Option<Expr>,
    zero_equilibrium: bool,
    validity_radius: Option<f64>,
}

impl SystemDef {
    pub fn from_spec(spec: &SystemSpec) -> Result<Self, SystemError> {
        if spec.n == 0 {
            return Err(SystemError::ZeroDimension);
        }
        let delays = Delays::new(spec.delays.clone())?;
        let scope = Scope {
            n: spec.n,
            m: spec.m,
            p: delays.count(),
            radius_only: false,
        };
        let rhs = spec
            .f
            .iter()
            .enumerate()
            .map(|(i, src)| {
                parse_expr(src, scope).map_err(|source| SystemError::Syntax {
                    field: format!("f[{}]", i + 1),
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if rhs.len() != spec.n {
            return Err(SystemError::DimensionMismatch {
                n: spec.n,
                got: rhs.len(),
            });
        }
        let kappa = match &spec.kappa {
            None => None,
            Some(src) => {
                let e = parse_expr(
                    src,
                    Scope {
                        radius_only: true,
                        ..scope
                    },
                )
                .map_err(|source| SystemError::Syntax {
                    field: "kappa".into(),
                    source,
                })?;
                check_kappa(&e)?;
                Some(e)
            }
        };
        let mut sys = SystemDef {
            name: spec.name.clone(),
            description: spec.description.clone(),
            n: spec.n,
            m: spec.m,
            delays,
            rhs,
            kappa,
            zero_equilibrium: false,
            validity_radius: spec.validity_radius,
        };
        let zeros_x = vec![0.0; sys.n];
        let zeros_xd = vec![0.0; sys.n * sys.p()];
        let zeros_u = vec![0.0; sys.m];
        let residual = sys
            .eval_rhs(&zeros_x, &zeros_xd, &zeros_u)
            .map(|v| crate::poly::norm(&v))
            .unwrap_or(f64::INFINITY);
        sys.zero_equilibrium = residual == 0.0;
        if spec.zero_equilibrium == Some(true) && !sys.zero_equilibrium {
            return Err(SystemError::NotAnEquilibrium { residual });
        }
        Ok(sys)
    }

    pub fn to_spec(&self) -> SystemSpec {
        SystemSpec {
            name: self.name.clone(),
            description: self.description.clone(),
            n: self.n,
            m: self.m,
            delays: self.delays.values().to_vec(),
            f: self.rhs.iter().map(|e| e.to_string()).collect(),
            kappa: self.kappa.as_ref().map(|e| e.to_string()),
            zero_equilibrium: Some(self.zero_equilibrium),
            validity_radius: self.validity_radius,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.delays.count()
    }

    pub fn delays(&self) -> &Delays {
        &self.delays
    }

    pub fn theta_p(&self) -> f64 {
        self.delays.max_delay()
    }

    pub fn rhs(&self) -> &[Expr] {
        &self.rhs
    }

    pub fn kappa(&self) -> Option<&Expr> {
        self.kappa.as_ref()
    }

    pub fn zero_equilibrium(&self) -> bool {
        self.zero_equilibrium
    }

    pub fn validity_radius(&self) -> Option<f64> {
        self.validity_radius
    }

    /// Evaluates `f` into `out`; `xd` is delay-major (`p` blocks of `n`).
    pub fn eval_into(
        &self,
        x: &[f64],
        xd: &[f64],
        u: &[f64],
        out: &mut [f64],
    ) -> Result<(), RhsError> {
        let env = Bindings { x, xd, u, r: 0.0 };
        for (i, (o, e)) in out.iter_mut().zip(&self.rhs).enumerate() {
            *o = e.eval(&env);
            if !o.is_finite() {
                return Err(RhsError::Overflow { component: i });
            }
        }
        Ok(())
    }

    /// Checked evaluation of `f(x, xd, u)`.
    pub fn eval_rhs(&self, x: &[f64], xd: &[f64], u: &[f64]) -> Result<Vec<f64>, RhsError> {
        let checks = [
            ("x", x.len(), self.n),
            ("xd", xd.len(), self.n * self.p()),
            ("u", u.len(), self.m),
        ];
        for (what, got, expected) in checks {
            if got != expected {
                return Err(RhsError::Dimension {
                    what,
                    got,
                    expected,
                });
            }
        }
        let mut out = vec![0.0; self.n];
        self.eval_into(x, xd, u, &mut out)?;
        Ok(out)
    }
}

fn check_kappa(e: &Expr) -> Result<(), SystemError> {
    let mut prev = 0.0;
    for i in -30..=30 {
        let r = 10f64.powf(i as f64 / 10.0);
        let v = e.eval_r(r);
        if !(v > 0.0) || !v.is_finite() || v < prev * (1.0 - 1e-12) {
            return Err(SystemError::KappaShape { r });
        }
        prev = v;
    }
    Ok(())
}

/// Parses a system-spec JSON document.
pub fn parse_system(text: &str) -> Result<SystemDef, SystemError> {
    let spec: SystemSpec =
        serde_json::from_str(text).map_err(|e| SystemError::Json(e.to_string()))?;
    SystemDef::from_spec(&spec)
}

/// `f(x, (xd_k)_k, u)` with the delayed arguments given as separate vectors.
pub fn eval_rhs(
    sys: &SystemDef,
    x: &[f64],
    xd: &[Vec<f64>],
    u: &[f64],
) -> Result<Vec<f64>, RhsError> {
    if xd.len() != sys.p() {
        return Err(RhsError::Dimension {
            what: "xd blocks",
            got: xd.len(),
            expected: sys.p(),
        });
    }
    let flat: Vec<f64> = xd.iter().flatten().copied().collect();
    sys.eval_rhs(x, &flat, u)
}

/// Norm on the joint argument `(x, xd_1, …, xd_p)`: the largest block norm,
/// matching the history norm the delayed arguments come from.
fn joint_norm(n: usize, v: &[f64]) -> f64 {
    v.chunks(n).map(crate::poly::norm).fold(0.0, f64::max)
}

/// Largest sampled difference quotient of `f` on the radius-`r` ball, `u = 0`.
fn sampled_quotient(sys: &SystemDef, r: f64, samples: usize, seed: u64) -> Result<f64, RhsError> {
    let n = sys.n;
    let blocks = sys.p() + 1;
    let u = vec![0.0; sys.m];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = vec![0.0; n * blocks];
    let mut b = vec![0.0; n * blocks];
    let mut fa = vec![0.0; n];
    let mut fb = vec![0.0; n];
    let mut best: f64 = 0.0;
    for i in 0..samples {
        let on_sphere = i % 2 == 0;
        for blk in 0..blocks {
            let pa = ball_point(&mut rng, n, r, on_sphere);
            a[blk * n..(blk + 1) * n].copy_from_slice(&pa);
            let pb = if i % 4 < 2 {
                ball_point(&mut rng, n, r, !on_sphere)
            } else {
                // local pair: small perturbation, pulled back into the ball
                let d = ball_point(&mut rng, n, 1e-4 * r, true);
                let mut q: Vec<f64> = pa.iter().zip(&d).map(|(x, y)| x + y).collect();
                let nq = crate::poly::norm(&q);
                if nq > r {
                    q.iter_mut().for_each(|v| *v *= r / nq);
                }
                q
            };
            b[blk * n..(blk + 1) * n].copy_from_slice(&pb);
        }
        let (xa, xda) = a.split_at(n);
        let (xb, xdb) = b.split_at(n);
        sys.eval_into(xa, xda, &u, &mut fa)?;
        sys.eval_into(xb, xdb, &u, &mut fb)?;
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let den = joint_norm(n, &diff);
        if den > 0.0 {
            let num: f64 = fa
                .iter()
                .zip(&fb)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            best = best.max(num / den);
        }
    }
    Ok(best)
}

/// Upper estimate of the Lipschitz constant of `f` on the radius-`r` ball of
/// the joint state/delayed argument, with `u = 0`.
///
/// The sampled quotient is inflated by [`LIPSCHITZ_SAFETY`]; an analytic
/// `kappa` on the system raises the result further if larger.
pub fn estimate_lipschitz(
    sys: &SystemDef,
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<f64, RhsError> {
    if !(r > 0.0) || samples < 2 {
        return Err(RhsError::Argument(format!(
            "need r > 0 and at least 2 samples (r = {r}, samples = {samples})"
        )));
    }
    let sampled = LIPSCHITZ_SAFETY * sampled_quotient(sys, r, samples, seed)?;
    Ok(match &sys.kappa {
        Some(k) => sampled.max(k.eval_r(r)),
        None => sampled,
    })
}

/// Lipschitz estimates over an increasing radius grid. The sample set for
/// `radii[i]` is the union of those for `radii[..=i]`, so the result is
/// nondecreasing.
pub fn lipschitz_profile(
    sys: &SystemDef,
    radii: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>, RhsError> {
    if radii.windows(2).any(|w| !(w[0] < w[1])) || radii.first().is_some_and(|&r| !(r > 0.0)) {
        return Err(RhsError::Argument(
            "radii must be positive and increasing".into(),
        ));
    }
    let mut running: f64 = 0.0;
    let mut out = Vec::with_capacity(radii.len());
    for (i, &r) in radii.iter().enumerate() {
        running = running.max(estimate_lipschitz(
            sys,
            r,
            samples,
            derive_seed(seed, i as u64),
        )?);
        out.push(running);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(f: &str, m: usize) -> SystemDef {
        SystemDef::from_spec(&SystemSpec {
            name: "t".into(),
            description: String::new(),
            n: 1,
            m,
            delays: vec![1.0],
            f: vec![f.into()],
            kappa: None,
            zero_equilibrium: None,
            validity_radius: None,
        })
        .unwrap()
    }

    #[test]
    fn parse_grammar_case() {
        let s = parse_system(r#"{"n": 1, "m": 0, "delays": [1.0], "f": ["-xd[1][1]"]}"#).unwrap();
        assert_eq!(s.p(), 1);
        assert_eq!(s.eval_rhs(&[0.3], &[2.0], &[]).unwrap(), vec![-2.0]);
        assert!(s.zero_equilibrium());
    }

    #[test]
    fn duplicate_delay_rejected() {
        let e = parse_system(r#"{"n": 1, "m": 0, "delays": [1.0, 1.0], "f": ["-xd[1][1]"]}"#)
            .unwrap_err();
        assert!(e.to_string().contains("duplicate delay"), "{e}");
    }

    #[test]
    fn undeclared_input_rejected() {
        let e = parse_system(r#"{"n": 1, "m": 0, "delays": [1.0], "f": ["u[1]"]}"#).unwrap_err();
        assert!(e.to_string().contains("undeclared input"), "{e}");
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let e = parse_system(r#"{"n": 2, "m": 0, "delays": [1.0], "f": ["x[1]"]}"#).unwrap_err();
        assert_eq!(e, SystemError::DimensionMismatch { n: 2, got: 1 });
    }

    #[test]
    fn kappa_must_be_monotone() {
        let e = parse_system(r#"{"n": 1, "delays": [1.0], "f": ["x[1]"], "kappa": "1/r"}"#)
            .unwrap_err();
        assert!(matches!(e, SystemError::KappaShape { .. }));
        let e = parse_system(r#"{"n": 1, "delays": [1.0], "f": ["x[1]"], "kappa": "x[1]"}"#)
            .unwrap_err();
        assert!(matches!(e, SystemError::Syntax { .. }));
    }

    #[test]
    fn false_equilibrium_claim_rejected() {
        let e = parse_system(
            r#"{"n": 1, "delays": [1.0], "f": ["1 + x[1]"], "zero_equilibrium": true}"#,
        )
        .unwrap_err();
        assert!(matches!(e, SystemError::NotAnEquilibrium { .. }));
    }

    #[test]
    fn eval_examples() {
        let s = sys("-x[1] + 0.5*xd[1][1]", 0);
        assert_eq!(eval_rhs(&s, &[2.0], &[vec![1.0]], &[]).unwrap(), vec![-1.5]);
        assert_eq!(
            eval_rhs(&sys("0", 0), &[7.0], &[vec![-3.0]], &[]).unwrap(),
            vec![0.0]
        );
        assert_eq!(
            eval_rhs(&sys("x[1]^2", 0), &[3.0], &[vec![0.0]], &[]).unwrap(),
            vec![9.0]
        );
    }

    #[test]
    fn overflow_is_an_error() {
        let s = sys("1/x[1]", 0);
        assert_eq!(
            s.eval_rhs(&[0.0], &[0.0], &[]),
            Err(RhsError::Overflow { component: 0 })
        );
        let s = sys("exp(x[1])", 0);
        assert!(s.eval_rhs(&[1000.0], &[0.0], &[]).is_err());
    }

    #[test]
    fn lipschitz_of_linear_map() {
        let l = estimate_lipschitz(&sys("-x[1]", 0), 5.0, 1000, 1).unwrap();
        assert!((1.0..=1.25 + 1e-12).contains(&l), "{l}");
    }

    #[test]
    fn lipschitz_of_square() {
        let l = estimate_lipschitz(&sys("x[1]^2", 0), 2.0, 1000, 1).unwrap();
        assert!((4.0..=5.0).contains(&l), "{l}");
    }

    #[test]
    fn lipschitz_of_zero() {
        assert_eq!(estimate_lipschitz(&sys("0", 0), 3.0, 100, 1).unwrap(), 0.0);
    }

    #[test]
    fn lipschitz_respects_analytic_kappa() {
        let mut spec = sys("-x[1]", 0).to_spec();
        spec.kappa = Some("3".into());
        let s = SystemDef::from_spec(&spec).unwrap();
        assert_eq!(estimate_lipschitz(&s, 1.0, 100, 1).unwrap(), 3.0);
    }

    #[test]
    fn lipschitz_rejects_bad_arguments() {
        assert!(estimate_lipschitz(&sys("x[1]", 0), 0.0, 10, 1).is_err());
        assert!(estimate_lipschitz(&sys("x[1]", 0), 1.0, 1, 1).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let s = sys("tanh(xd[1][1]) - x[1]^3 + u[1]", 1);
        let back = SystemDef::from_spec(&s.to_spec()).unwrap();
        assert_eq!(back, s);
    }
}
