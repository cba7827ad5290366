//! Method-of-steps integration of delay systems and of their ODE reduction.
//!
//! Both solvers share one adaptive Dormand–Prince 5(4) core with a quartic
//! dense interpolant. Steps never cross a stop: for a delay system the stops
//! are the breakpoints of the history and the input pushed forward by every
//! delay, so every stage only sees smooth data and only reads steps that
//! were already accepted (steps are capped at the smallest delay).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::{segment_at, Delays, HistoryError, PiecewiseHistory, MERGE_TOL};
use crate::poly::{lookup_pos, norm, Piece, Poly, Side};
use crate::rhsdsl::{RhsError, SystemDef};
use crate::signals::{InputSignal, SignalError};
use crate::trajectory::{eval_steps, Escape, EscapeConfidence, SolveStats, Trajectory};

/// Upper bound on the number of propagated breakpoints kept per solve.
pub const MAX_BREAKPOINTS: usize = 200_000;

/// Number of collapsed steps tolerated below the escape threshold.
const MAX_COLLAPSED: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub escape_threshold: f64,
    pub escape_step_floor: f64,
    /// Accepted plus rejected steps before giving up.
    pub max_steps: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            escape_threshold: 1e12,
            escape_step_floor: 1e-13,
            max_steps: 5_000_000,
        }
    }
}

impl SolveConfig {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        SolveConfig {
            rel_tol,
            abs_tol,
            ..SolveConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |what: &str| Err(SolveError::Config(what.to_string()));
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return bad("rel_tol must be positive");
        }
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return bad("abs_tol must be positive");
        }
        if !(self.max_step > 0.0) {
            return bad("max_step must be positive");
        }
        if !(self.escape_threshold > 1.0) {
            return bad("escape_threshold must exceed 1");
        }
        if !(self.escape_step_floor > 0.0) {
            return bad("escape_step_floor must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {what} has {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("horizon must be finite and nonnegative (got {0})")]
    BadHorizon(f64),
    #[error("{what} is defined up to {defined} but the horizon is {horizon}")]
    ShortSignal {
        what: &'static str,
        defined: f64,
        horizon: f64,
    },
    #[error("history covers [-{history}, 0] but the largest delay is {delay}")]
    HistoryLength { history: f64, delay: f64 },
    #[error("lift window {delta} must lie in (0, {bound})")]
    LiftWindow { delta: f64, bound: f64 },
    #[error("step limit of {limit} reached at t = {t}")]
    StepLimit { limit: usize, t: f64 },
    #[error("step size collapsed at t = {t} with |x| = {norm} (below the escape threshold)")]
    Stalled { t: f64, norm: f64 },
    #[error("solution escaped at t = {time} before reaching {wanted}")]
    Escaped { time: f64, wanted: f64 },
    #[error(transparent)]
    Rhs(#[from] RhsError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Right-hand side as seen by the integrator: `(t, y, side, h, accepted
/// steps, start value, out)`.
trait Field {
    #[allow(clippy::too_many_arguments)]
    fn eval(
        &mut self,
        t: f64,
        y: &[f64],
        side: Side,
        h: f64,
        steps: &[Piece],
        start: &[f64],
        out: &mut [f64],
    ) -> Result<(), RhsError>;
}

impl<F> Field for F
where
    F: FnMut(f64, &[f64], Side, f64, &[Piece], &[f64], &mut [f64]) -> Result<(), RhsError>,
{
    fn eval(
        &mut self,
        t: f64,
        y: &[f64],
        side: Side,
        h: f64,
        steps: &[Piece],
        start: &[f64],
        out: &mut [f64],
    ) -> Result<(), RhsError> {
        self(t, y, side, h, steps, start, out)
    }
}

struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y1: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Stages {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y1: vec![0.0; n],
        }
    }
}

fn combo(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..out.len() {
        let mut acc = 0.0;
        for (a, k) in terms {
            acc += a * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

/// Scaled error of the embedded pair; infinite when the trial left the finite range.
#[allow(clippy::too_many_arguments)]
fn attempt<F: Field>(
    f: &mut F,
    t: f64,
    h: f64,
    y: &[f64],
    st: &mut Stages,
    steps: &[Piece],
    start: &[f64],
    cfg: &SolveConfig,
    stats: &mut SolveStats,
) -> Result<f64, RhsError> {
    let [k1, k2, k3, k4, k5, k6, k7] = &mut st.k;
    let tmp = &mut st.tmp;
    combo(tmp, y, h, &[(A21, k1)]);
    f.eval(t + C2 * h, tmp, Side::Exact, h, steps, start, k2)?;
    combo(tmp, y, h, &[(A31, k1), (A32, k2)]);
    f.eval(t + C3 * h, tmp, Side::Exact, h, steps, start, k3)?;
    combo(tmp, y, h, &[(A41, k1), (A42, k2), (A43, k3)]);
    f.eval(t + C4 * h, tmp, Side::Exact, h, steps, start, k4)?;
    combo(tmp, y, h, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]);
    f.eval(t + C5 * h, tmp, Side::Exact, h, steps, start, k5)?;
    combo(
        tmp,
        y,
        h,
        &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)],
    );
    f.eval(t + h, tmp, Side::Left, h, steps, start, k6)?;
    combo(
        &mut st.y1,
        y,
        h,
        &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)],
    );
    f.eval(t + h, &st.y1, Side::Left, h, steps, start, k7)?;
    stats.rhs_evals += 6;
    let mut acc = 0.0;
    for i in 0..y.len() {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(st.y1[i].abs());
        acc += (e / sc) * (e / sc);
    }
    let err = (acc / y.len().max(1) as f64).sqrt();
    Ok(if err.is_finite() && st.y1.iter().all(|v| v.is_finite()) {
        err
    } else {
        f64::INFINITY
    })
}

/// Quartic interpolant of an accepted step, expanded in `s - t`.
fn dense_piece(t: f64, h: f64, y: &[f64], st: &Stages) -> Piece {
    let [k1, _, k3, k4, k5, k6, k7] = &st.k;
    let comps = (0..y.len())
        .map(|i| {
            let r1 = y[i];
            let r2 = st.y1[i] - y[i];
            let r3 = h * k1[i] - r2;
            let r4 = r2 - h * k7[i] - r3;
            let r5 =
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            let theta = [r1, r2 + r3, -r3 + r4 + r5, -r4 - 2.0 * r5, r5];
            let mut scale = 1.0;
            Poly(
                theta
                    .iter()
                    .map(|c| {
                        let v = c / scale;
                        scale *= h;
                        v
                    })
                    .collect(),
            )
        })
        .collect();
    Piece::new(t, t + h, comps)
}

fn initial_step<F: Field>(
    f: &mut F,
    y: &[f64],
    f0: &[f64],
    span: f64,
    cfg: &SolveConfig,
    stats: &mut SolveStats,
    start: &[f64],
) -> f64 {
    let n = y.len().max(1) as f64;
    let sc: Vec<f64> = y
        .iter()
        .map(|v| cfg.abs_tol + cfg.rel_tol * v.abs())
        .collect();
    let rms = |v: &[f64]| {
        (v.iter()
            .zip(&sc)
            .map(|(a, s)| (a / s) * (a / s))
            .sum::<f64>()
            / n)
            .sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    stats.rhs_evals += 1;
    let d2 = match f.eval(h0, &y1, Side::Exact, h0, &[], start, &mut f1) {
        Ok(()) => rms(&f1.iter().zip(f0).map(|(a, b)| a - b).collect::<Vec<_>>()) / h0,
        Err(_) => return h0,
    };
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Integrates from `0` to `t_final`, ending a step exactly at every stop.
fn integrate<F: Field>(
    mut f: F,
    y0: &[f64],
    t_final: f64,
    stops: &[f64],
    hmax: f64,
    cfg: &SolveConfig,
) -> Result<Trajectory, SolveError> {
    let n = y0.len();
    let mut stats = SolveStats::default();
    let mut steps: Vec<Piece> = Vec::new();
    let mut breakpoints = vec![0.0];
    if t_final == 0.0 {
        return Ok(Trajectory::new(
            y0.to_vec(),
            steps,
            breakpoints,
            None,
            stats,
        ));
    }
    let start = y0.to_vec();
    let mut y = y0.to_vec();
    let mut st = Stages::new(n);
    let mut t = 0.0;
    let mut targets: Vec<f64> = stops
        .iter()
        .copied()
        .filter(|&s| s > 0.0 && s < t_final)
        .collect();
    targets.push(t_final);

    let mut escape: Option<Escape> = None;
    let mut h = f64::NAN;
    let mut min_step = f64::INFINITY;
    let mut collapsed = 0usize;
    'outer: for (ti, &target) in targets.iter().enumerate() {
        if ti > 0 {
            breakpoints.push(t);
        }
        // Fresh first stage: read right limits after a stop.
        let span = target - t;
        if let Err(e) = f.eval(
            t,
            &y,
            Side::Right,
            span.min(hmax),
            &steps,
            &start,
            &mut st.k[0],
        ) {
            escape = Some(low_escape(t, &y, min_step, e)?);
            break;
        }
        stats.rhs_evals += 1;
        if h.is_nan() {
            let f0 = st.k[0].clone();
            h = initial_step(&mut f, &y, &f0, span.min(hmax), cfg, &mut stats, &start);
        }
        let mut last_rejected = false;
        while t < target {
            if stats.accepted + stats.rejected >= cfg.max_steps {
                return Err(SolveError::StepLimit {
                    limit: cfg.max_steps,
                    t,
                });
            }
            h = h.min(hmax);
            let at_stop = t + 1.01 * h >= target;
            if at_stop {
                h = target - t;
            } else {
                // Equal steps up to the next stop, no sliver at the end.
                let rem = target - t;
                h = rem / (rem / h).ceil();
            }
            let t_new = if at_stop { target } else { t + h };
            if t_new <= t {
                let nrm = norm(&y);
                if nrm > 1e6 {
                    escape = Some(Escape {
                        time: t,
                        last_norm: nrm,
                        min_step,
                        confidence: EscapeConfidence::Low,
                    });
                    break 'outer;
                }
                return Err(SolveError::Stalled { t, norm: nrm });
            }
            let err = attempt(&mut f, t, h, &y, &mut st, &steps, &start, cfg, &mut stats)
                .unwrap_or(f64::INFINITY);
            let forced = h <= cfg.escape_step_floor && err.is_finite();
            if err <= 1.0 || forced {
                if forced {
                    collapsed += 1;
                    if collapsed > MAX_COLLAPSED {
                        return Err(SolveError::Stalled { t, norm: norm(&y) });
                    }
                }
                stats.accepted += 1;
                min_step = min_step.min(h);
                let piece = dense_piece(t, t_new - t, &y, &st);
                steps.push(if at_stop {
                    Piece {
                        to: target,
                        ..piece
                    }
                } else {
                    piece
                });
                t = t_new;
                std::mem::swap(&mut y, &mut st.y1);
                let mut factor = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
                if last_rejected {
                    factor = factor.min(1.0);
                }
                last_rejected = false;
                if !at_stop {
                    h *= factor;
                    let (k1, rest) = st.k.split_at_mut(1);
                    k1[0].copy_from_slice(&rest[5]);
                } else {
                    h = (h * factor).max(h);
                }
            } else {
                stats.rejected += 1;
                last_rejected = true;
                let factor = if err.is_finite() {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 1.0)
                } else {
                    0.2
                };
                h *= factor;
            }
            if h < cfg.escape_step_floor {
                let nrm = norm(&y);
                if nrm > cfg.escape_threshold {
                    escape = Some(Escape {
                        time: t,
                        last_norm: nrm,
                        min_step: min_step.min(h),
                        confidence: EscapeConfidence::High,
                    });
                    break 'outer;
                }
                if !err.is_finite() && h < cfg.escape_step_floor * 1e-3 {
                    escape = Some(Escape {
                        time: t,
                        last_norm: nrm,
                        min_step: min_step.min(h),
                        confidence: EscapeConfidence::Low,
                    });
                    break 'outer;
                }
                if err.is_finite() {
                    h = cfg.escape_step_floor;
                }
            }
        }
    }
    breakpoints.retain(|&b| b < t || b == 0.0);
    Ok(Trajectory::new(start, steps, breakpoints, escape, stats))
}

fn low_escape(t: f64, y: &[f64], min_step: f64, e: RhsError) -> Result<Escape, SolveError> {
    match e {
        RhsError::Overflow { .. } => Ok(Escape {
            time: t,
            last_norm: norm(y),
            min_step,
            confidence: EscapeConfidence::Low,
        }),
        other => Err(other.into()),
    }
}

#[derive(PartialEq)]
struct MinTime(f64);

impl Eq for MinTime {}

impl PartialOrd for MinTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MinTime {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0)
    }
}

/// Closure of `seeds` under `s ↦ s + θ_k`, restricted to `(0, t_final)`,
/// deduplicated at [`MERGE_TOL`].
pub fn propagate_breakpoints(seeds: &[f64], delays: &Delays, t_final: f64) -> Vec<f64> {
    let mut heap: BinaryHeap<MinTime> = seeds
        .iter()
        .filter(|&&s| s > MERGE_TOL && s < t_final - MERGE_TOL)
        .map(|&s| MinTime(s))
        .collect();
    let mut out: Vec<f64> = Vec::new();
    while let Some(MinTime(e)) = heap.pop() {
        if out.last().is_some_and(|&l| e - l <= MERGE_TOL) {
            continue;
        }
        out.push(e);
        if out.len() >= MAX_BREAKPOINTS {
            break;
        }
        for &th in delays.values() {
            let next = e + th;
            if next < t_final - MERGE_TOL {
                heap.push(MinTime(next));
            }
        }
    }
    out
}

fn check_horizon(t_final: f64) -> Result<(), SolveError> {
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(SolveError::BadHorizon(t_final));
    }
    Ok(())
}

fn check_signal(
    what: &'static str,
    s: &InputSignal,
    dim: usize,
    t_final: f64,
) -> Result<(), SolveError> {
    if s.dim() != dim {
        return Err(SolveError::Dimension {
            what,
            got: s.dim(),
            expected: dim,
        });
    }
    if s.horizon() < t_final - MERGE_TOL {
        return Err(SolveError::ShortSignal {
            what,
            defined: s.horizon(),
            horizon: t_final,
        });
    }
    Ok(())
}

/// Solution of the delay system from `x0` under `u` on `[0, t_final]`.
pub fn solve_tds(
    sys: &SystemDef,
    x0: &PiecewiseHistory,
    u: &InputSignal,
    t_final: f64,
    cfg: &SolveConfig,
) -> Result<Trajectory, SolveError> {
    cfg.validate()?;
    check_horizon(t_final)?;
    let n = sys.n();
    if x0.dim() != n {
        return Err(SolveError::Dimension {
            what: "history",
            got: x0.dim(),
            expected: n,
        });
    }
    if (x0.theta_p() - sys.theta_p()).abs() > MERGE_TOL {
        return Err(SolveError::HistoryLength {
            history: x0.theta_p(),
            delay: sys.theta_p(),
        });
    }
    check_signal("input", u, sys.m(), t_final)?;
    let delays = sys.delays();

    let mut seeds: Vec<f64> = u.breakpoints_in(0.0, t_final).collect();
    for &th in delays.values() {
        seeds.push(th);
        seeds.extend(x0.breakpoints().iter().map(|s| s + th));
    }
    let stops = propagate_breakpoints(&seeds, delays, t_final);

    let p = sys.p();
    let mut xd = vec![0.0; n * p];
    let mut ub = vec![0.0; sys.m()];
    let field =
        |t: f64, y: &[f64], side: Side, h: f64, steps: &[Piece], start: &[f64], out: &mut [f64]| {
            for (k, &th) in delays.values().iter().enumerate() {
                let tau = t - th;
                let block = &mut xd[k * n..(k + 1) * n];
                if lookup_pos(tau, side, h) < 0.0 {
                    x0.eval_piece_into(tau, side, h, block);
                } else {
                    eval_steps(steps, start, tau, side, h, block);
                }
            }
            u.eval_into(t, side, h, &mut ub);
            sys.eval_into(y, &xd, &ub, out)
        };
    let hmax = cfg.max_step.min(delays.min_delay());
    integrate(field, x0.point_value(), t_final, &stops, hmax, cfg)
}

/// Solution of `ż = f(z, v, u)` on `[0, t_final]`, with `v` carrying `p·n`
/// components (delay-major).
pub fn solve_ode(
    sys: &SystemDef,
    z0: &[f64],
    v: &InputSignal,
    u: &InputSignal,
    t_final: f64,
    cfg: &SolveConfig,
) -> Result<Trajectory, SolveError> {
    cfg.validate()?;
    check_horizon(t_final)?;
    if z0.len() != sys.n() {
        return Err(SolveError::Dimension {
            what: "initial state",
            got: z0.len(),
            expected: sys.n(),
        });
    }
    check_signal("delayed input", v, sys.n() * sys.p(), t_final)?;
    check_signal("input", u, sys.m(), t_final)?;
    let mut stops: Vec<f64> = v
        .breakpoints_in(0.0, t_final)
        .chain(u.breakpoints_in(0.0, t_final))
        .collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup_by(|a, b| *a - *b <= MERGE_TOL);

    let mut vb = vec![0.0; v.dim()];
    let mut ub = vec![0.0; u.dim()];
    let field = |t: f64, y: &[f64], side: Side, h: f64, _: &[Piece], _: &[f64], out: &mut [f64]| {
        v.eval_into(t, side, h, &mut vb);
        u.eval_into(t, side, h, &mut ub);
        sys.eval_into(y, &vb, &ub, out)
    };
    integrate(field, z0, t_final, &stops, cfg.max_step, cfg)
}

/// History whose solution on `[0, delta)` is the ODE solution driven by `v`:
/// on each window `[-θ_k, -θ_k + delta)` it equals `v_k(· + θ_k)`, zero
/// elsewhere, with point value `z0`.
pub fn lift_to_tds(
    sys: &SystemDef,
    z0: &[f64],
    v: &InputSignal,
    delta: f64,
) -> Result<PiecewiseHistory, SolveError> {
    let delays = sys.delays();
    let bound = delays.lift_window_bound();
    if !(delta > 0.0 && delta < bound) {
        return Err(SolveError::LiftWindow { delta, bound });
    }
    let n = sys.n();
    if z0.len() != n {
        return Err(SolveError::Dimension {
            what: "initial state",
            got: z0.len(),
            expected: n,
        });
    }
    check_signal("delayed input", v, n * sys.p(), delta)?;

    let zero = vec![0.0; n];
    let mut pieces: Vec<Piece> = Vec::new();
    let mut cursor = -sys.theta_p();
    for (k, &th) in delays.values().iter().enumerate().rev() {
        let lo = -th;
        if lo > cursor {
            pieces.push(Piece::constant(cursor, lo, &zero));
        }
        for p in v.pieces().iter().filter(|p| p.from < delta) {
            let hi = p.to.min(delta);
            let comps = p.comps[k * n..(k + 1) * n].to_vec();
            let mut q = Piece::new(p.from, hi, comps).translate(-th);
            q.from = q.from.max(lo);
            pieces.push(q);
        }
        cursor = lo + delta;
        if let Some(last) = pieces.last_mut() {
            last.to = cursor;
        }
    }
    if cursor < 0.0 {
        pieces.push(Piece::constant(cursor, 0.0, &zero));
    }
    // Translation can leave one-ulp gaps; close them on the left end.
    for i in 1..pieces.len() {
        let prev_to = pieces[i - 1].to;
        if pieces[i].from != prev_to {
            pieces[i] = pieces[i].restrict(prev_to, pieces[i].to);
        }
    }
    Ok(PiecewiseHistory::new(pieces, z0.to_vec())?)
}

/// The state `x_t` reached from `x0` under `u`.
pub fn flow_segment(
    sys: &SystemDef,
    x0: &PiecewiseHistory,
    u: &InputSignal,
    t: f64,
    cfg: &SolveConfig,
) -> Result<PiecewiseHistory, SolveError> {
    if t == 0.0 {
        return Ok(x0.clone());
    }
    let traj = solve_tds(sys, x0, u, t, cfg)?;
    if let Some(e) = traj.escape() {
        return Err(SolveError::Escaped {
            time: e.time,
            wanted: t,
        });
    }
    Ok(segment_at(x0, &traj, t)?)
}
