//! Input signals on `[0, ∞)`: sampling from norm balls, shifting, and the
//! delayed-state signal `v_k(t) = (x₀ ⋄ x)(t - θ_k)` that turns a delay
//! system into an ODE with inputs.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::{Delays, PiecewiseHistory, MERGE_TOL};
use crate::piecewise::{PieceLiteral, PiecewiseError, PiecewiseFn};
use crate::poly::{Piece, Side};
use crate::sampling::{ball_point, rng_for, SampleMode};
use crate::trajectory::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error(transparent)]
    Piecewise(#[from] PiecewiseError),
    #[error("signal must start at 0 (starts at {0})")]
    BadStart(f64),
    #[error("shift {t0} outside the signal horizon {horizon}")]
    ShiftOutOfRange { t0: f64, horizon: f64 },
    #[error("history covers [-{history}, 0] but the largest delay is {delay}")]
    DelayMismatch { history: f64, delay: f64 },
}

/// Piecewise-polynomial signal on `[0, horizon)`; an unbounded last piece is
/// constant.
#[derive(Clone, Debug, PartialEq)]
pub struct InputSignal {
    func: PiecewiseFn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalLiteral {
    pub pieces: Vec<PieceLiteral>,
}

impl InputSignal {
    pub fn new(dim: usize, pieces: Vec<Piece>) -> Result<Self, SignalError> {
        let func = PiecewiseFn::new(dim, pieces)?;
        if func.start() != 0.0 {
            return Err(SignalError::BadStart(func.start()));
        }
        Ok(InputSignal { func })
    }

    pub fn zero(dim: usize) -> Self {
        InputSignal::constant(&vec![0.0; dim])
    }

    pub fn constant(value: &[f64]) -> Self {
        InputSignal::new(
            value.len(),
            vec![Piece::constant(0.0, f64::INFINITY, value)],
        )
        .expect("constant signal is well formed")
    }

    /// `edges` runs from `0` to the horizon (which may be `∞` when the last
    /// value is held forever); one value per interval.
    pub fn piecewise_constant(edges: &[f64], values: &[Vec<f64>]) -> Result<Self, SignalError> {
        if edges.len() != values.len() + 1 || values.is_empty() {
            return Err(PiecewiseError::Domain("need one value per interval".into()).into());
        }
        let dim = values[0].len();
        InputSignal::new(
            dim,
            edges
                .windows(2)
                .zip(values)
                .map(|(e, v)| Piece::constant(e[0], e[1], v))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.func.dim()
    }

    pub fn horizon(&self) -> f64 {
        self.func.end()
    }

    pub fn pieces(&self) -> &[Piece] {
        self.func.pieces()
    }

    /// Piece boundaries strictly inside `(a, b)`.
    pub fn breakpoints_in(&self, a: f64, b: f64) -> impl Iterator<Item = f64> + '_ {
        self.func.breakpoints().filter(move |&t| t > a && t < b)
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.func.eval(t)
    }

    pub(crate) fn eval_into(&self, t: f64, side: Side, h: f64, out: &mut [f64]) {
        if !out.is_empty() {
            self.func.eval_into(t, side, h, out);
        }
    }

    pub fn ess_sup(&self) -> f64 {
        self.func.ess_sup()
    }

    pub fn ess_sup_on(&self, a: f64, b: f64) -> f64 {
        self.func.ess_sup_on(a, b)
    }

    pub fn to_literal(&self) -> SignalLiteral {
        SignalLiteral {
            pieces: self.func.to_literals(),
        }
    }

    pub fn from_literal(dim: usize, lit: &SignalLiteral) -> Result<Self, SignalError> {
        InputSignal::new(dim, lit.pieces.iter().map(Piece::from).collect())
    }

    /// CSV with columns `t, u_1..u_m` on the given grid.
    pub fn to_csv(&self, times: &[f64]) -> String {
        let mut out = String::from("t");
        for j in 1..=self.dim() {
            out.push_str(&format!(",u_{j}"));
        }
        out.push('\n');
        for &t in times {
            out.push_str(&format!("{t:?}"));
            for v in self.eval(t) {
                out.push_str(&format!(",{v:?}"));
            }
            out.push('\n');
        }
        out
    }
}

impl Serialize for InputSignal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_literal().serialize(s)
    }
}

/// Piecewise-constant signal with `pieces` equal segments on `[0, horizon)`,
/// values drawn from the radius-`r` ball (for `dim = 1`: uniform on `[-r, r]`).
pub fn sample_input(dim: usize, r: f64, horizon: f64, pieces: usize, seed: u64) -> InputSignal {
    sample_input_mode(dim, r, horizon, pieces, seed, SampleMode::Uniform)
}

/// [`sample_input`] with a chosen value distribution.
pub fn sample_input_mode(
    dim: usize,
    r: f64,
    horizon: f64,
    pieces: usize,
    seed: u64,
    mode: SampleMode,
) -> InputSignal {
    let mut rng = rng_for(seed, 0);
    sample_input_with(&mut rng, dim, r, horizon, pieces, mode)
}

pub(crate) fn sample_input_with<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    r: f64,
    horizon: f64,
    pieces: usize,
    mode: SampleMode,
) -> InputSignal {
    if mode == SampleMode::ExtremalConstant || r == 0.0 {
        return InputSignal::constant(&ball_point(rng, dim, r, true));
    }
    let pieces = pieces.max(1);
    let on_sphere = mode == SampleMode::Extremal;
    let mut edges: Vec<f64> = (0..pieces)
        .map(|i| horizon * i as f64 / pieces as f64)
        .collect();
    edges.push(horizon);
    let values: Vec<Vec<f64>> = (0..pieces)
        .map(|_| ball_point(rng, dim, r, on_sphere))
        .collect();
    if dim == 0 {
        return InputSignal::zero(0);
    }
    InputSignal::piecewise_constant(&edges, &values).expect("sampled signal is well formed")
}

/// `t ↦ u(t0 + t)`.
pub fn shift_input(u: &InputSignal, t0: f64) -> Result<InputSignal, SignalError> {
    if !(t0 >= 0.0 && t0 < u.horizon()) {
        return Err(SignalError::ShiftOutOfRange {
            t0,
            horizon: u.horizon(),
        });
    }
    if t0 == 0.0 {
        return Ok(u.clone());
    }
    let mut pieces: Vec<Piece> = u
        .func
        .restrict(t0, u.horizon())
        .into_iter()
        .map(|p| p.translate(-t0))
        .collect();
    pieces[0].from = 0.0;
    InputSignal::new(u.dim(), pieces)
}

/// Delayed-state signal with `p·n` components: block `k` is
/// `t ↦ (x₀ ⋄ x)(t - θ_k)` on `[0, t_end)`, represented exactly by the shifted
/// history pieces and trajectory steps.
pub fn delayed_inputs(
    x0: &PiecewiseHistory,
    traj: &Trajectory,
    delays: &Delays,
) -> Result<InputSignal, SignalError> {
    if (x0.theta_p() - delays.max_delay()).abs() > MERGE_TOL {
        return Err(SignalError::DelayMismatch {
            history: x0.theta_p(),
            delay: delays.max_delay(),
        });
    }
    let n = x0.dim();
    let end = traj.t_end();
    let mut blocks: Vec<PiecewiseFn> = Vec::with_capacity(delays.count());
    for &theta in delays.values() {
        let mut pieces: Vec<Piece> = x0
            .func()
            .restrict(-theta, (end - theta).min(0.0))
            .into_iter()
            .map(|p| p.translate(theta))
            .collect();
        if end > theta {
            pieces.extend(
                traj.restrict(0.0, end - theta)
                    .into_iter()
                    .map(|p| p.translate(theta)),
            );
        }
        // Translation can collapse very short steps; drop them and re-chain.
        let mut chained: Vec<Piece> = Vec::with_capacity(pieces.len());
        for mut p in pieces {
            if let Some(prev) = chained.last() {
                p.from = prev.to;
            } else {
                p.from = 0.0;
            }
            if p.to > p.from {
                chained.push(p);
            }
        }
        blocks.push(PiecewiseFn::new(n, chained)?);
    }
    let mut edges: Vec<f64> = blocks.iter().flat_map(|b| b.breakpoints()).collect();
    edges.sort_by(f64::total_cmp);
    let mut cuts = vec![0.0];
    for e in edges {
        if e - cuts[cuts.len() - 1] > MERGE_TOL && end - e > MERGE_TOL {
            cuts.push(e);
        }
    }
    cuts.push(end);
    let pieces = cuts
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let comps = blocks
                .iter()
                .flat_map(|b| {
                    let p = &b.pieces()[b.locate(mid)];
                    p.restrict(w[0], w[1]).comps
                })
                .collect();
            Piece::new(w[0], w[1], comps)
        })
        .collect();
    InputSignal::new(n * delays.count(), pieces)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_radius_gives_zero_signal() {
        let u = sample_input(2, 0.0, 5.0, 4, 1);
        assert_eq!(u.ess_sup(), 0.0);
    }

    #[test]
    fn sampled_values_in_box() {
        let u = sample_input(1, 1.0, 3.0, 10, 11);
        assert_eq!(u.pieces().len(), 10);
        for p in u.pieces() {
            assert!(p.comps[0].0[0].abs() <= 1.0);
        }
        assert!(u.ess_sup() <= 1.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(
            sample_input(2, 1.5, 4.0, 6, 99),
            sample_input(2, 1.5, 4.0, 6, 99)
        );
        assert_ne!(
            sample_input(2, 1.5, 4.0, 6, 99),
            sample_input(2, 1.5, 4.0, 6, 98)
        );
    }

    #[test]
    fn shift_identity_and_indicator() {
        let u = InputSignal::piecewise_constant(
            &[0.0, 1.0, 2.0, f64::INFINITY],
            &[vec![0.0], vec![1.0], vec![0.0]],
        )
        .unwrap();
        assert_eq!(shift_input(&u, 0.0).unwrap(), u);
        let s = shift_input(&u, 1.0).unwrap();
        assert_eq!(s.eval(0.0), vec![1.0]);
        assert_eq!(s.eval(0.999), vec![1.0]);
        assert_eq!(s.eval(1.0), vec![0.0]);
        assert!(shift_input(&u, -1.0).is_err());
    }

    #[test]
    fn shift_composes() {
        let u = sample_input(1, 1.0, 8.0, 16, 5);
        let twice = shift_input(&shift_input(&u, 0.75).unwrap(), 1.25).unwrap();
        let once = shift_input(&u, 2.0).unwrap();
        assert_eq!(twice, once);
    }

    #[test]
    fn literal_round_trip() {
        let u = sample_input(2, 1.0, 3.0, 3, 4);
        let text = serde_json::to_string(&u).unwrap();
        let lit: SignalLiteral = serde_json::from_str(&text).unwrap();
        assert_eq!(InputSignal::from_literal(2, &lit).unwrap(), u);
    }
}
