//! States of a delay system: histories on `[-θ_p, 0]` with a distinguished
//! value at `0`, their norms, concatenation with a trajectory, and windows
//! `x_t` cut from the concatenation.
//!
//! A [`PiecewiseHistory`] never reads a piece at its right endpoint; the value
//! at `0` is stored separately in `point_value`, so two histories that agree
//! almost everywhere but differ at `0` are different states.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::piecewise::{PieceLiteral, PiecewiseError, PiecewiseFn};
use crate::poly::{norm, Piece, PieceChain, Poly, Side};
use crate::trajectory::Trajectory;

/// Breakpoints closer than this are merged when windows are cut.
pub const MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HistoryError {
    #[error(transparent)]
    Piecewise(#[from] PiecewiseError),
    #[error("at least one delay is required")]
    NoDelays,
    #[error("delay {value} is not positive")]
    NonPositiveDelay { value: f64 },
    #[error("duplicate delay {value}")]
    DuplicateDelay { value: f64 },
    #[error("delays must be strictly increasing ({prev} then {next})")]
    UnsortedDelays { prev: f64, next: f64 },
    #[error("history must end exactly at 0 (ends at {end})")]
    BadEnd { end: f64 },
    #[error("point value has {got} components, expected {expected}")]
    PointDimension { got: usize, expected: usize },
    #[error("history is discontinuous at {at} (jump {jump:e})")]
    Discontinuous { at: f64, jump: f64 },
    #[error("{what} = {at} is outside the domain [{lo}, {hi}]")]
    OutOfDomain {
        what: &'static str,
        at: f64,
        lo: f64,
        hi: f64,
    },
}

/// Discrete delays `0 < θ_1 < … < θ_p`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Delays(Vec<f64>);

impl Delays {
    pub fn new(values: Vec<f64>) -> Result<Self, HistoryError> {
        if values.is_empty() {
            return Err(HistoryError::NoDelays);
        }
        for &v in &values {
            if !(v > 0.0) || !v.is_finite() {
                return Err(HistoryError::NonPositiveDelay { value: v });
            }
        }
        for w in values.windows(2) {
            if w[0] == w[1] {
                return Err(HistoryError::DuplicateDelay { value: w[0] });
            }
            if w[0] > w[1] {
                return Err(HistoryError::UnsortedDelays {
                    prev: w[0],
                    next: w[1],
                });
            }
        }
        Ok(Delays(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn count(&self) -> usize {
        self.0.len()
    }

    pub fn max_delay(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    pub fn min_delay(&self) -> f64 {
        self.0[0]
    }

    /// `min(θ_1, min_{k≠j} |θ_k - θ_j|)`, the supremum of admissible lift
    /// windows.
    pub fn lift_window_bound(&self) -> f64 {
        self.0
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(self.0[0], f64::min)
    }
}

impl<'de> Deserialize<'de> for Delays {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Delays::new(v).map_err(serde::de::Error::custom)
    }
}

/// Element of `L∞((-θ_p, 0), Rⁿ) × Rⁿ` with piecewise-polynomial first part.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseHistory {
    func: PiecewiseFn,
    point_value: Vec<f64>,
}

/// JSON literal: pieces on `[-θ_p, 0)` plus the value at `0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryLiteral {
    pub pieces: Vec<PieceLiteral>,
    pub point_value: Vec<f64>,
}

impl PiecewiseHistory {
    pub fn new(pieces: Vec<Piece>, point_value: Vec<f64>) -> Result<Self, HistoryError> {
        let dim = point_value.len();
        let func = PiecewiseFn::new(dim, pieces)?;
        if func.end() != 0.0 {
            return Err(HistoryError::BadEnd { end: func.end() });
        }
        if point_value.iter().any(|v| !v.is_finite()) {
            return Err(PiecewiseError::NonFinite { index: usize::MAX }.into());
        }
        Ok(PiecewiseHistory { func, point_value })
    }

    /// `x₀ ≡ value` on `[-θ_p, 0]`.
    pub fn constant(theta_p: f64, value: &[f64]) -> Self {
        PiecewiseHistory::new(vec![Piece::constant(-theta_p, 0.0, value)], value.to_vec())
            .expect("constant history is well formed")
    }

    /// Piecewise-constant history. `breaks` are the interior breakpoints,
    /// `values` has one entry per resulting interval.
    pub fn piecewise_constant(
        theta_p: f64,
        breaks: &[f64],
        values: &[Vec<f64>],
        point_value: Vec<f64>,
    ) -> Result<Self, HistoryError> {
        let mut edges = Vec::with_capacity(breaks.len() + 2);
        edges.push(-theta_p);
        edges.extend_from_slice(breaks);
        edges.push(0.0);
        if values.len() + 1 != edges.len() {
            return Err(PiecewiseError::Domain(format!(
                "{} values for {} intervals",
                values.len(),
                edges.len() - 1
            ))
            .into());
        }
        let pieces = edges
            .windows(2)
            .zip(values)
            .map(|(w, v)| Piece::constant(w[0], w[1], v))
            .collect();
        PiecewiseHistory::new(pieces, point_value)
    }

    pub fn dim(&self) -> usize {
        self.point_value.len()
    }

    pub fn theta_p(&self) -> f64 {
        -self.func.start()
    }

    pub fn pieces(&self) -> &[Piece] {
        self.func.pieces()
    }

    pub fn func(&self) -> &PiecewiseFn {
        &self.func
    }

    pub fn point_value(&self) -> &[f64] {
        &self.point_value
    }

    /// Interior breakpoints in `(-θ_p, 0)`.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.func.breakpoints().collect()
    }

    /// Value at `s ∈ [-θ_p, 0]`; pieces are read half-open, `0` gives the
    /// point value.
    pub fn eval(&self, s: f64) -> Result<Vec<f64>, HistoryError> {
        let lo = -self.theta_p();
        if !(s >= lo && s <= 0.0) {
            return Err(HistoryError::OutOfDomain {
                what: "s",
                at: s,
                lo,
                hi: 0.0,
            });
        }
        if s == 0.0 {
            Ok(self.point_value.clone())
        } else {
            Ok(self.func.eval(s))
        }
    }

    pub(crate) fn eval_piece_into(&self, s: f64, side: Side, h: f64, out: &mut [f64]) {
        self.func.eval_into(s, side, h, out);
    }

    pub fn norm(&self) -> f64 {
        norm_xinf(self)
    }

    pub fn scaled(&self, alpha: f64) -> PiecewiseHistory {
        PiecewiseHistory {
            func: self.func.scaled(alpha),
            point_value: self.point_value.iter().map(|v| v * alpha).collect(),
        }
    }

    pub fn to_literal(&self) -> HistoryLiteral {
        HistoryLiteral {
            pieces: self.func.to_literals(),
            point_value: self.point_value.clone(),
        }
    }

    pub fn from_literal(lit: &HistoryLiteral) -> Result<Self, HistoryError> {
        PiecewiseHistory::new(
            lit.pieces.iter().map(Piece::from).collect(),
            lit.point_value.clone(),
        )
    }
}

impl Serialize for PiecewiseHistory {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_literal().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PiecewiseHistory {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let lit = HistoryLiteral::deserialize(d)?;
        PiecewiseHistory::from_literal(&lit).map_err(serde::de::Error::custom)
    }
}

/// Element of `C⁰([-θ_p, 0], Rⁿ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousHistory {
    inner: PiecewiseHistory,
}

impl ContinuousHistory {
    /// Checks that every interior breakpoint joins its neighbours; the point
    /// value is the limit of the last piece at `0`.
    pub fn new(pieces: Vec<Piece>) -> Result<Self, HistoryError> {
        let point_value = match pieces.last() {
            Some(p) => p.eval(0.0),
            None => return Err(PiecewiseError::Empty.into()),
        };
        let inner = PiecewiseHistory::new(pieces, point_value)?;
        for w in inner.pieces().windows(2) {
            let left = w[0].eval(w[0].to);
            let right = w[1].eval(w[1].from);
            let jump = left
                .iter()
                .zip(&right)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let scale = norm(&left).max(norm(&right)).max(1.0);
            if jump > 1e-12 * scale {
                return Err(HistoryError::Discontinuous {
                    at: w[1].from,
                    jump,
                });
            }
        }
        Ok(ContinuousHistory { inner })
    }

    pub fn constant(theta_p: f64, value: &[f64]) -> Self {
        ContinuousHistory {
            inner: PiecewiseHistory::constant(theta_p, value),
        }
    }

    /// Piecewise-linear interpolant through `(times[i], values[i])`, with
    /// `times` running from `-θ_p` to `0`.
    pub fn from_nodes(times: &[f64], values: &[Vec<f64>]) -> Result<Self, HistoryError> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(PiecewiseError::Domain("need at least two matching nodes".into()).into());
        }
        let pieces = times
            .windows(2)
            .zip(values.windows(2))
            .map(|(t, v)| {
                let h = t[1] - t[0];
                Piece::new(
                    t[0],
                    t[1],
                    v[0].iter()
                        .zip(&v[1])
                        .map(|(&a, &b)| Poly(vec![a, (b - a) / h]))
                        .collect(),
                )
            })
            .collect();
        let mut ch = ContinuousHistory::new(pieces)?;
        ch.inner.point_value = values[values.len() - 1].clone();
        Ok(ch)
    }

    /// Maximum of the norm over the closed interval.
    pub fn sup_norm(&self) -> f64 {
        self.inner.func.ess_sup().max(norm(&self.inner.point_value))
    }

    pub fn as_history(&self) -> &PiecewiseHistory {
        &self.inner
    }
}

/// `‖x₀‖ = max(ess-sup |x₀|, |x₀(0)|)`, with the ess-sup taken exactly per piece.
pub fn norm_xinf(h: &PiecewiseHistory) -> f64 {
    h.func.ess_sup().max(norm(&h.point_value))
}

/// Inclusion of continuous histories into the larger state space.
pub fn embed_continuous(ch: &ContinuousHistory) -> PiecewiseHistory {
    ch.inner.clone()
}

/// `(x₀ ⋄ x)(s)` for `s ∈ [-θ_p, t_end]`.
pub fn eval_diamond(
    x0: &PiecewiseHistory,
    traj: &Trajectory,
    s: f64,
) -> Result<Vec<f64>, HistoryError> {
    let lo = -x0.theta_p();
    let hi = traj.t_end();
    if !(s >= lo && s <= hi) {
        return Err(HistoryError::OutOfDomain {
            what: "s",
            at: s,
            lo,
            hi,
        });
    }
    if s < 0.0 {
        Ok(x0.func.eval(s))
    } else if s == 0.0 {
        Ok(x0.point_value.clone())
    } else {
        Ok(traj.eval(s))
    }
}

/// The window `x_t : θ ↦ (x₀ ⋄ x)(t + θ)` as a history.
pub fn segment_at(
    x0: &PiecewiseHistory,
    traj: &Trajectory,
    t: f64,
) -> Result<PiecewiseHistory, HistoryError> {
    if !(t >= 0.0 && t <= traj.t_end()) {
        return Err(HistoryError::OutOfDomain {
            what: "t",
            at: t,
            lo: 0.0,
            hi: traj.t_end(),
        });
    }
    if t == 0.0 {
        return Ok(x0.clone());
    }
    let theta_p = x0.theta_p();
    let lo = t - theta_p;
    let mut chain = PieceChain::new(MERGE_TOL);
    if lo < 0.0 {
        for p in x0.func.restrict(lo, 0.0) {
            chain.push(p.translate(-t));
        }
    }
    for p in traj.restrict(lo.max(0.0), t) {
        chain.push(p.translate(-t));
    }
    let pieces = chain.finish(-theta_p, 0.0);
    PiecewiseHistory::new(pieces, traj.eval(t))
}

/// `‖x_t‖` without materialising the window. Agrees with
/// `norm_xinf(&segment_at(x0, traj, t)?)`.
pub fn segment_norm(x0: &PiecewiseHistory, traj: &Trajectory, t: f64) -> f64 {
    let lo = t - x0.theta_p();
    let mut m = norm(&traj.eval(t));
    if lo < 0.0 {
        m = m.max(x0.func.ess_sup_on(lo, 0.0));
    }
    if t > 0.0 {
        m = m.max(traj.sup_norm_on(lo.max(0.0), t));
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delays_validation() {
        assert!(Delays::new(vec![1.0, 1.6]).is_ok());
        assert_eq!(
            Delays::new(vec![1.0, 1.0]),
            Err(HistoryError::DuplicateDelay { value: 1.0 })
        );
        assert!(matches!(
            Delays::new(vec![0.0]),
            Err(HistoryError::NonPositiveDelay { .. })
        ));
        assert!(matches!(
            Delays::new(vec![2.0, 1.0]),
            Err(HistoryError::UnsortedDelays { .. })
        ));
        assert_eq!(
            Delays::new(vec![1.0, 1.6]).unwrap().lift_window_bound(),
            1.6 - 1.0
        );
    }

    #[test]
    fn norm_of_constant_with_point_value() {
        let h = PiecewiseHistory::new(vec![Piece::constant(-1.0, 0.0, &[2.0])], vec![3.0]).unwrap();
        assert_eq!(norm_xinf(&h), 3.0);
    }

    #[test]
    fn norm_of_zero() {
        assert_eq!(norm_xinf(&PiecewiseHistory::constant(1.0, &[0.0])), 0.0);
    }

    #[test]
    fn norm_ess_sup_beats_point_value() {
        let h =
            PiecewiseHistory::piecewise_constant(1.0, &[-0.5], &[vec![0.0], vec![1.0]], vec![0.0])
                .unwrap();
        assert_eq!(norm_xinf(&h), 1.0);
    }

    #[test]
    fn norm_is_homogeneous() {
        let h = ContinuousHistory::from_nodes(
            &[-1.0, -0.3, 0.0],
            &[vec![1.0, -2.0], vec![0.5, 0.5], vec![-1.0, 0.0]],
        )
        .unwrap();
        let h = embed_continuous(&h);
        let n = norm_xinf(&h);
        assert!((norm_xinf(&h.scaled(-2.5)) - 2.5 * n).abs() < 1e-14);
    }

    #[test]
    fn embed_constant() {
        let ch = ContinuousHistory::constant(1.0, &[4.0]);
        let h = embed_continuous(&ch);
        assert_eq!(h.point_value(), &[4.0]);
        assert_eq!(h.eval(-0.2).unwrap(), vec![4.0]);
        assert_eq!(norm_xinf(&h), 4.0);
    }

    #[test]
    fn embed_ramp() {
        let ch = ContinuousHistory::new(vec![Piece::new(-1.0, 0.0, vec![Poly(vec![-1.0, 1.0])])])
            .unwrap();
        let h = embed_continuous(&ch);
        assert_eq!(h.point_value(), &[0.0]);
        assert_eq!(h.func().ess_sup(), 1.0);
        assert_eq!(norm_xinf(&h), 1.0);
        assert_eq!(
            norm_xinf(&embed_continuous(&ContinuousHistory::constant(1.0, &[0.0]))),
            0.0
        );
    }

    #[test]
    fn continuous_history_rejects_jump() {
        let err = ContinuousHistory::new(vec![
            Piece::constant(-1.0, -0.5, &[0.0]),
            Piece::constant(-0.5, 0.0, &[1.0]),
        ])
        .unwrap_err();
        assert!(matches!(err, HistoryError::Discontinuous { .. }));
    }

    #[test]
    fn point_value_is_independent_of_last_piece() {
        let h = PiecewiseHistory::new(vec![Piece::constant(-1.0, 0.0, &[1.0])], vec![0.0]).unwrap();
        assert_eq!(h.eval(0.0).unwrap(), vec![0.0]);
        assert_eq!(h.eval(-1e-9).unwrap(), vec![1.0]);
        assert!(h.eval(0.1).is_err());
    }

    #[test]
    fn literal_round_trip() {
        let h = PiecewiseHistory::new(
            vec![
                Piece::new(-1.3, -0.1, vec![Poly(vec![0.1, 1.0 / 3.0, -2.0])]),
                Piece::constant(-0.1, 0.0, &[std::f64::consts::PI]),
            ],
            vec![-0.7],
        )
        .unwrap();
        let text = serde_json::to_string(&h).unwrap();
        let back: PiecewiseHistory = serde_json::from_str(&text).unwrap();
        assert_eq!(back, h);
    }
}
