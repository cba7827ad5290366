//! Empirical stability checks and comparison-function envelopes.
//!
//! A decay envelope `β` fitted on continuous initial data is turned into a
//! bound valid for all essentially bounded initial data:
//!
//! ```text
//! G(r)      = exp(θ_p·κ(μ(θ_p, r)))·r
//! β̃(r, t)  = β(r, 0)·e^{-t}  for t ∈ [-θ_p, 0),   β(r, t) for t ≥ 0
//! β̄(r, t)  = max(e^{θ_p - t}·G(r), β̃(G(r), t - θ_p))
//! ```
//!
//! `G` bounds the state over the first `θ_p` time units, after which the
//! solution is continuous and `β` applies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::{norm_xinf, segment_norm, PiecewiseHistory};
use crate::reachability::{time_grid, ReachError, ReachTable};
use crate::rhsdsl::{parse_expr, Expr, RhsError, Scope, SystemDef};
use crate::sampling::{
    derive_seed, random_continuous_history, random_history, rng_for, SampleMode,
};
use crate::signals::InputSignal;
use crate::solver::{solve_tds, SolveConfig, SolveError};

/// Safety factor on fitted `μ` and `β` values.
pub const FIT_MARGIN: f64 = 1.1;

/// Version tag of the envelope JSON document.
pub const ENVELOPE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("non-decaying data: {0}")]
    NonDecaying(String),
    #[error("system does not have 0 as an equilibrium (f(0, 0, 0) != 0)")]
    NotAnEquilibrium,
    #[error("reach table contains escapes; no growth bound can be fitted")]
    EscapeInTable,
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Shape(#[from] KlShapeError),
    #[error(transparent)]
    Reach(#[from] ReachError),
    #[error(transparent)]
    Rhs(#[from] RhsError),
    #[error("sample {sample} at radius {r}: {source}")]
    Solve {
        r: f64,
        sample: usize,
        #[source]
        source: SolveError,
    },
}

/// Which comparison-function property failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeViolation {
    NotFinite,
    Negative,
    NonzeroAtOrigin,
    DecreasingInRadius,
    IncreasingInTime,
    NoDecay,
}

#[derive(Debug, Error, Clone, PartialEq, Serialize)]
#[error("KL shape violated ({kind:?}) at r = {r}, t = {t}: value {value}, neighbour {neighbour}")]
pub struct KlShapeError {
    pub kind: ShapeViolation,
    pub r: f64,
    pub t: f64,
    pub value: f64,
    pub neighbour: f64,
}

/// Lipschitz bound `κ(r)` on the radius-`r` ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Kappa {
    Constant {
        value: f64,
    },
    Expr {
        #[serde(with = "radius_expr")]
        expr: Expr,
    },
    /// Piecewise linear through `(radii[i], values[i])`, constant outside.
    Profile {
        radii: Vec<f64>,
        values: Vec<f64>,
    },
}

mod radius_expr {
    use super::*;

    pub fn serialize<S: serde::Serializer>(e: &Expr, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&e.to_string())
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Expr, D::Error> {
        let text = String::deserialize(d)?;
        parse_expr(&text, RADIUS_SCOPE).map_err(serde::de::Error::custom)
    }
}

const RADIUS_SCOPE: Scope = Scope {
    n: 0,
    m: 0,
    p: 0,
    radius_only: true,
};

impl Kappa {
    pub fn parse(text: &str) -> Result<Kappa, StabilityError> {
        parse_expr(text, RADIUS_SCOPE)
            .map(|expr| Kappa::Expr { expr })
            .map_err(|e| StabilityError::Argument(format!("kappa: {e}")))
    }

    /// The analytic bound shipped with the system, if any.
    pub fn from_system(sys: &SystemDef) -> Option<Kappa> {
        sys.kappa().map(|e| Kappa::Expr { expr: e.clone() })
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Kappa::Constant { value } => *value,
            Kappa::Expr { expr } => expr.eval_r(r),
            Kappa::Profile { radii, values } => interp_clamped(radii, values, r),
        }
    }
}

fn interp_clamped(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let k = xs.len();
    if x >= xs[k - 1] {
        return ys[k - 1];
    }
    let i = xs.partition_point(|&v| v <= x).clamp(1, k - 1);
    let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    ys[i - 1] + w * (ys[i] - ys[i - 1])
}

/// Bracketing index and weight of `x` in an increasing grid, or `None`
/// beyond the last point.
fn bracket(xs: &[f64], x: f64) -> Option<(usize, f64)> {
    let k = xs.len();
    if x <= xs[0] {
        return Some((0, 0.0));
    }
    if x > xs[k - 1] {
        return None;
    }
    let i = xs.partition_point(|&v| v < x).clamp(1, k - 1);
    Some((i - 1, (x - xs[i - 1]) / (xs[i] - xs[i - 1])))
}

/// Growth bound `‖x_t(x0)‖ ≤ μ(t, ‖x0‖)`, nondecreasing in both arguments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MuBound {
    /// `values[j][i]` at `(times[j], radii[i])`; linear in between, through
    /// the origin below the first radius, extended by the last slope beyond
    /// the last one. Times beyond the grid use the last row.
    Grid {
        times: Vec<f64>,
        radii: Vec<f64>,
        values: Vec<Vec<f64>>,
        margin: f64,
    },
    /// `μ(t, r) = gain·r`.
    Linear { gain: f64 },
}

impl MuBound {
    pub fn eval(&self, t: f64, r: f64) -> f64 {
        match self {
            MuBound::Linear { gain } => gain * r,
            MuBound::Grid {
                times,
                radii,
                values,
                ..
            } => {
                let row = |j: usize| radial(radii, &values[j], r);
                match bracket(times, t) {
                    Some((j, w)) if w > 0.0 => row(j) + w * (row(j + 1) - row(j)),
                    Some((j, _)) => row(j),
                    None => row(times.len() - 1),
                }
            }
        }
    }
}

/// Piecewise-linear interpolation in `r` through the origin, extended by the
/// last slope.
fn radial(radii: &[f64], vals: &[f64], r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let k = radii.len();
    if r < radii[0] {
        return vals[0] * r / radii[0];
    }
    if r >= radii[k - 1] {
        if k == 1 {
            return vals[0] * r / radii[0];
        }
        let slope = (vals[k - 1] - vals[k - 2]) / (radii[k - 1] - radii[k - 2]);
        return vals[k - 1] + slope.max(0.0) * (r - radii[k - 1]);
    }
    let i = radii.partition_point(|&v| v <= r).clamp(1, k - 1);
    let w = (r - radii[i - 1]) / (radii[i] - radii[i - 1]);
    vals[i - 1] + w * (vals[i] - vals[i - 1])
}

/// `μ̂(t, r)`: running maximum over `t' ≤ t, r' ≤ r` of the sampled segment
/// norms, times [`FIT_MARGIN`].
pub fn fit_mu(table: &ReachTable) -> Result<MuBound, StabilityError> {
    if table.any_escape() {
        return Err(StabilityError::EscapeInTable);
    }
    let nr = table.radii.len();
    let nt = table.times.len();
    let mut values = vec![vec![0.0; nr]; nt];
    for j in 0..nt {
        for i in 0..nr {
            let mut v = table.segment_estimates[i][j];
            if i > 0 {
                v = v.max(values[j][i - 1]);
            }
            if j > 0 {
                v = v.max(values[j - 1][i]);
            }
            values[j][i] = v;
        }
    }
    for row in &mut values {
        row.iter_mut().for_each(|v| *v *= FIT_MARGIN);
    }
    Ok(MuBound::Grid {
        times: table.times.clone(),
        radii: table.radii.clone(),
        values,
        margin: FIT_MARGIN,
    })
}

/// `β(r, t)`: nondecreasing in `r` with `β(0, t) = 0`, nonincreasing in `t`
/// and tending to zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KLEnvelope {
    /// `gain·r·e^{-rate·t}`.
    Exponential { gain: f64, rate: f64 },
    /// `values[i][j]` at `(radii[i], times[j])` with `radii[0] = 0`;
    /// bilinear in between, linear in `r` beyond the last radius, and
    /// `β(r, t_last)·e^{-tail_rate (t - t_last)}` beyond the last time.
    Grid {
        radii: Vec<f64>,
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
        tail_rate: f64,
    },
    BarBeta {
        inner: Box<KLEnvelope>,
        kappa: Kappa,
        mu: MuBound,
        theta_p: f64,
    },
}

impl KLEnvelope {
    pub fn zero() -> KLEnvelope {
        KLEnvelope::Exponential {
            gain: 0.0,
            rate: 1.0,
        }
    }

    /// `β(r, t)` for `r ≥ 0`, `t ≥ 0`.
    pub fn eval(&self, r: f64, t: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self {
            KLEnvelope::Exponential { gain, rate } => gain * r * (-rate * t).exp(),
            KLEnvelope::Grid {
                radii,
                times,
                values,
                tail_rate,
            } => {
                let t_last = times[times.len() - 1];
                let (tc, tail) = if t > t_last {
                    (t_last, (-tail_rate * (t - t_last)).exp())
                } else {
                    (t.max(0.0), 1.0)
                };
                let at_time = |row: &Vec<f64>| match bracket(times, tc) {
                    Some((j, w)) if w > 0.0 => row[j] + w * (row[j + 1] - row[j]),
                    Some((j, _)) => row[j],
                    None => row[row.len() - 1],
                };
                let k = radii.len();
                let v = match bracket(radii, r) {
                    Some((i, w)) if w > 0.0 => {
                        let a = at_time(&values[i]);
                        a + w * (at_time(&values[i + 1]) - a)
                    }
                    Some((i, _)) => at_time(&values[i]),
                    None => at_time(&values[k - 1]) * r / radii[k - 1],
                };
                v * tail
            }
            KLEnvelope::BarBeta {
                inner,
                kappa,
                mu,
                theta_p,
            } => {
                let g = gronwall_bound(r, kappa, mu, *theta_p);
                let first = (theta_p - t).exp() * g;
                first.max(tilde_beta(inner, g, t - theta_p, *theta_p))
            }
        }
    }

    /// Exponential decay rate guaranteed for large `t`.
    pub fn tail_rate(&self) -> f64 {
        match self {
            KLEnvelope::Exponential { rate, .. } => *rate,
            KLEnvelope::Grid { tail_rate, .. } => *tail_rate,
            KLEnvelope::BarBeta { inner, .. } => inner.tail_rate().min(1.0),
        }
    }

    /// Last time at which the envelope is backed by data.
    fn reference_time(&self) -> f64 {
        match self {
            KLEnvelope::Exponential { rate, .. } => 10.0 / rate.max(1e-12),
            KLEnvelope::Grid { times, .. } => times[times.len() - 1],
            KLEnvelope::BarBeta { inner, theta_p, .. } => inner.reference_time() + theta_p,
        }
    }
}

/// `β̃(r, t)`: `β(r, 0)·e^{-t}` for `t ∈ [-θ_p, 0)` and `β(r, t)` for `t ≥ 0`.
pub fn tilde_beta(beta: &KLEnvelope, r: f64, t: f64, theta_p: f64) -> f64 {
    debug_assert!(t >= -theta_p - 1e-12);
    if t < 0.0 {
        beta.eval(r, 0.0) * (-t).exp()
    } else {
        beta.eval(r, t)
    }
}

/// `e^{θ_p·κ(μ(θ_p, r))}·r`.
pub fn gronwall_bound(r: f64, kappa: &Kappa, mu: &MuBound, theta_p: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    (theta_p * kappa.eval(mu.eval(theta_p, r))).exp() * r
}

/// Checks the comparison-function properties of `env` on the grid
/// `radii × times` (both increasing, `radii` may start at 0) plus a decay
/// check far in the tail.
pub fn validate_kl(env: &KLEnvelope, radii: &[f64], times: &[f64]) -> Result<(), KlShapeError> {
    let fail = |kind, r, t, value, neighbour| {
        Err(KlShapeError {
            kind,
            r,
            t,
            value,
            neighbour,
        })
    };
    let tol = |v: f64| 1e-12 * v.abs();
    let grid: Vec<Vec<f64>> = radii
        .iter()
        .map(|&r| times.iter().map(|&t| env.eval(r, t)).collect())
        .collect();
    for (i, &r) in radii.iter().enumerate() {
        for (j, &t) in times.iter().enumerate() {
            let v = grid[i][j];
            if !v.is_finite() {
                return fail(ShapeViolation::NotFinite, r, t, v, v);
            }
            if v < 0.0 {
                return fail(ShapeViolation::Negative, r, t, v, 0.0);
            }
            if r == 0.0 && v != 0.0 {
                return fail(ShapeViolation::NonzeroAtOrigin, r, t, v, 0.0);
            }
            if i > 0 && v < grid[i - 1][j] - tol(v) {
                return fail(ShapeViolation::DecreasingInRadius, r, t, v, grid[i - 1][j]);
            }
            if j > 0 && v > grid[i][j - 1] + tol(v) {
                return fail(ShapeViolation::IncreasingInTime, r, t, v, grid[i][j - 1]);
            }
        }
    }
    let rate = env.tail_rate();
    let t_ref = env
        .reference_time()
        .max(times.last().copied().unwrap_or(0.0));
    for &r in radii.iter().filter(|&&r| r > 0.0) {
        let v0 = env.eval(r, 0.0);
        if !(rate > 0.0) {
            return fail(ShapeViolation::NoDecay, r, f64::INFINITY, v0, v0);
        }
        let far = t_ref + 30.0 / rate;
        let v = env.eval(r, far);
        if v > 1e-6 * v0 {
            return fail(ShapeViolation::NoDecay, r, far, v, v0);
        }
    }
    Ok(())
}

/// The envelope for all essentially bounded initial data built from an
/// envelope `beta` for continuous ones; validated on a 50×50 grid.
pub fn build_bar_beta(
    beta: KLEnvelope,
    kappa: Kappa,
    mu: MuBound,
    theta_p: f64,
    r_max: f64,
) -> Result<KLEnvelope, StabilityError> {
    if !(theta_p > 0.0) {
        return Err(StabilityError::Argument("theta_p must be positive".into()));
    }
    let env = KLEnvelope::BarBeta {
        inner: Box::new(beta),
        kappa,
        mu,
        theta_p,
    };
    let t_max = env.reference_time();
    let radii: Vec<f64> = (0..50).map(|i| r_max * i as f64 / 49.0).collect();
    let times: Vec<f64> = (0..50).map(|j| t_max * j as f64 / 49.0).collect();
    validate_kl(&env, &radii, &times)?;
    Ok(env)
}

/// Envelope JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeDocument {
    pub schema_version: u32,
    pub envelope: KLEnvelope,
    pub margins: Margins,
    pub provenance: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub mu: f64,
    pub envelope: f64,
    pub lipschitz: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Margins {
            mu: FIT_MARGIN,
            envelope: FIT_MARGIN,
            lipschitz: crate::rhsdsl::LIPSCHITZ_SAFETY,
        }
    }
}

/// Options of the envelope fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Nodes of the sampled piecewise-linear histories.
    pub nodes: usize,
    /// Fraction of the time grid used for the tail rate.
    pub tail_fraction: f64,
    pub margin: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            nodes: 6,
            tail_fraction: 0.1,
            margin: FIT_MARGIN,
        }
    }
}

/// The `i`-th continuous initial history used for radius index `ri`.
pub fn draw_continuous(
    sys: &SystemDef,
    r: f64,
    seed: u64,
    ri: usize,
    i: usize,
    nodes: usize,
) -> PiecewiseHistory {
    let mut rng = rng_for(derive_seed(seed, ri as u64), i as u64);
    random_continuous_history(
        &mut rng,
        sys.theta_p(),
        sys.n(),
        r,
        nodes,
        SampleMode::for_sample(i),
    )
    .as_history()
    .clone()
}

/// Largest `‖x_s‖` over `s ∈ [t_j, t_{j+1}]` for each grid time (the last
/// entry is `‖x_{t_last}‖`). `None` on escape.
fn window_norms(
    sys: &SystemDef,
    x0: &PiecewiseHistory,
    times: &[f64],
    cfg: &SolveConfig,
) -> Result<Option<Vec<f64>>, SolveError> {
    let u = InputSignal::zero(sys.m());
    let horizon = times[times.len() - 1];
    let traj = solve_tds(sys, x0, &u, horizon, cfg)?;
    if traj.escaped() {
        return Ok(None);
    }
    Ok(Some(
        times
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                let seg = segment_norm(x0, &traj, t);
                match times.get(j + 1) {
                    Some(&next) => seg.max(traj.sup_norm_on(t, next)),
                    None => seg,
                }
            })
            .collect(),
    ))
}

/// Result of an envelope fit with its raw data.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeFit {
    pub envelope: KLEnvelope,
    /// Radii including the leading `0`.
    pub radii: Vec<f64>,
    pub times: Vec<f64>,
    /// Monotone hull of the sampled data, `[radius][time]`.
    pub hull: Vec<Vec<f64>>,
}

/// [`fit_envelope_with`] with default options and a time grid of spacing
/// about `0.25`.
pub fn fit_envelope(
    sys: &SystemDef,
    radii: &[f64],
    horizon: f64,
    samples: usize,
    seed: u64,
    cfg: &SolveConfig,
) -> Result<KLEnvelope, StabilityError> {
    let times = time_grid(horizon, (horizon / 0.25).ceil() as usize + 1, &[]);
    Ok(fit_envelope_with(
        sys,
        radii,
        &times,
        samples,
        seed,
        cfg,
        &FitOptions::default(),
    )?
    .envelope)
}

/// Fits a grid envelope dominating the sampled `‖x_t(x0)‖` for continuous
/// `x0` with `‖x0‖ ≤ r`.
///
/// Coercion order: running max in `r`, then the nonincreasing upper hull in
/// `t`, then the tail rate from the last `tail_fraction` of the grid. Grid
/// values are shifted one cell up in `r` and back in `t` before the margin is
/// applied, so bilinear interpolation stays above the data between nodes.
pub fn fit_envelope_with(
    sys: &SystemDef,
    radii: &[f64],
    times: &[f64],
    samples: usize,
    seed: u64,
    cfg: &SolveConfig,
    opts: &FitOptions,
) -> Result<EnvelopeFit, StabilityError> {
    if !sys.zero_equilibrium() {
        return Err(StabilityError::NotAnEquilibrium);
    }
    if samples == 0
        || radii.is_empty()
        || radii.windows(2).any(|w| !(w[0] < w[1]))
        || radii[0] < 0.0
    {
        return Err(StabilityError::Argument(
            "need samples ≥ 1 and an increasing radius grid".into(),
        ));
    }
    if times.len() < 3 || times[0] != 0.0 || times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(StabilityError::Argument(
            "need an increasing time grid from 0 with ≥ 3 points".into(),
        ));
    }
    let mut grid_r = vec![0.0];
    grid_r.extend(radii.iter().copied().filter(|&r| r > 0.0));
    let nr = grid_r.len();
    let nt = times.len();

    let jobs: Vec<(usize, usize)> = (1..nr)
        .flat_map(|ri| (0..samples).map(move |i| (ri, i)))
        .collect();
    let results: Vec<Result<Option<Vec<f64>>, StabilityError>> = jobs
        .par_iter()
        .map(|&(ri, i)| {
            let r = grid_r[ri];
            let x0 = draw_continuous(sys, r, seed, ri, i, opts.nodes);
            window_norms(sys, &x0, times, cfg).map_err(|source| StabilityError::Solve {
                r,
                sample: i,
                source,
            })
        })
        .collect();
    let mut raw = vec![vec![0.0; nt]; nr];
    for (&(ri, i), res) in jobs.iter().zip(results) {
        match res? {
            Some(norms) => {
                for j in 0..nt {
                    raw[ri][j] = f64::max(raw[ri][j], norms[j]);
                }
            }
            None => {
                return Err(StabilityError::NonDecaying(format!(
                    "sample {i} at radius {} escaped in finite time",
                    grid_r[ri]
                )))
            }
        }
    }
    for i in 1..nr {
        let (lo, hi) = raw.split_at_mut(i);
        for (v, &below) in hi[0].iter_mut().zip(&lo[i - 1]) {
            *v = v.max(below);
        }
    }
    for row in raw.iter_mut() {
        for j in (0..nt - 1).rev() {
            row[j] = row[j].max(row[j + 1]);
        }
    }
    let hull = raw;

    let all_zero = hull.iter().flatten().all(|&v| v == 0.0);
    let tail_rate =
        if all_zero {
            1.0
        } else {
            let t_last = times[nt - 1];
            let ja = times
                .partition_point(|&t| t < t_last * (1.0 - opts.tail_fraction))
                .min(nt - 2);
            let mut rate = f64::INFINITY;
            for (i, row) in hull.iter().enumerate().skip(1) {
                if row[0] == 0.0 {
                    continue;
                }
                if row[nt - 1] >= row[0] {
                    return Err(StabilityError::NonDecaying(format!(
                    "at radius {} the norm bound does not decrease over [0, {t_last}] ({} → {})",
                    grid_r[i], row[0], row[nt - 1]
                )));
                }
                if row[nt - 1] > 0.0 {
                    rate = rate.min((row[ja] / row[nt - 1]).ln() / (t_last - times[ja]));
                }
            }
            if !(rate > 0.0) {
                return Err(StabilityError::NonDecaying(format!(
                    "no decay over the last {:.0}% of the horizon",
                    100.0 * opts.tail_fraction
                )));
            }
            if rate.is_finite() {
                rate
            } else {
                1.0
            }
        };

    let values: Vec<Vec<f64>> = (0..nr)
        .map(|i| {
            if i == 0 {
                return vec![0.0; nt];
            }
            let src = &hull[(i + 1).min(nr - 1)];
            (0..nt)
                .map(|j| opts.margin * src[j.saturating_sub(1)])
                .collect()
        })
        .collect();
    let envelope = if all_zero {
        KLEnvelope::zero()
    } else {
        KLEnvelope::Grid {
            radii: grid_r.clone(),
            times: times.to_vec(),
            values,
            tail_rate,
        }
    };
    Ok(EnvelopeFit {
        envelope,
        radii: grid_r,
        times: times.to_vec(),
        hull,
    })
}

/// One failed domination check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub sample: usize,
    pub r: f64,
    pub norm0: f64,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub escaped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UgasReport {
    pub samples: usize,
    pub checks: usize,
    pub seed: u64,
    /// Largest observed `lhs / rhs` over checks with `rhs > 0`.
    pub max_ratio: f64,
    pub violations: Vec<Violation>,
}

impl UgasReport {
    /// CSV with columns `sample, r, norm0, t, lhs, rhs, escaped`.
    pub fn violations_csv(&self) -> String {
        let mut out = String::from("sample,r,norm0,t,lhs,rhs,escaped\n");
        for v in &self.violations {
            out.push_str(&format!(
                "{},{:?},{:?},{:?},{:?},{:?},{}\n",
                v.sample,
                v.r,
                v.norm0,
                v.t,
                v.lhs,
                v.rhs,
                u8::from(v.escaped)
            ));
        }
        out
    }
}

/// The `i`-th essentially bounded (generally discontinuous) history of a
/// check run.
pub fn draw_xinf(sys: &SystemDef, r: f64, seed: u64, i: usize, pieces: usize) -> PiecewiseHistory {
    let mut rng = rng_for(seed, i as u64);
    random_history(
        &mut rng,
        sys.theta_p(),
        sys.n(),
        r,
        pieces,
        SampleMode::for_sample(i),
    )
}

/// Checks `‖x_t(x0)‖ ≤ β̄(‖x0‖, t)` on a time grid of spacing about `0.25`
/// for `samples` histories; sample `i` uses radius `radii[i % radii.len()]`.
pub fn check_ugas(
    sys: &SystemDef,
    bar_beta: &KLEnvelope,
    radii: &[f64],
    horizon: f64,
    samples: usize,
    seed: u64,
    cfg: &SolveConfig,
) -> Result<UgasReport, StabilityError> {
    if radii.is_empty() || !(horizon > 0.0) {
        return Err(StabilityError::Argument(
            "need radii and a positive horizon".into(),
        ));
    }
    let times = time_grid(horizon, (horizon / 0.25).ceil() as usize + 1, &[]);
    let u = InputSignal::zero(sys.m());
    type SampleOutcome = Result<(Vec<Violation>, f64, usize), StabilityError>;
    let per_sample: Vec<SampleOutcome> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let r = radii[i % radii.len()];
            let x0 = draw_xinf(sys, r, seed, i, 4);
            let norm0 = norm_xinf(&x0);
            let traj =
                solve_tds(sys, &x0, &u, horizon, cfg).map_err(|source| StabilityError::Solve {
                    r,
                    sample: i,
                    source,
                })?;
            let mut found = Vec::new();
            let mut worst: f64 = 0.0;
            let mut checks = 0;
            for &t in &times {
                let rhs = bar_beta.eval(norm0, t);
                if t > traj.t_end() {
                    found.push(Violation {
                        sample: i,
                        r,
                        norm0,
                        t,
                        lhs: f64::INFINITY,
                        rhs,
                        escaped: true,
                    });
                    break;
                }
                let lhs = segment_norm(&x0, &traj, t);
                checks += 1;
                if rhs > 0.0 {
                    worst = worst.max(lhs / rhs);
                }
                if lhs > rhs {
                    found.push(Violation {
                        sample: i,
                        r,
                        norm0,
                        t,
                        lhs,
                        rhs,
                        escaped: false,
                    });
                }
            }
            Ok((found, worst, checks))
        })
        .collect();
    let mut report = UgasReport {
        samples,
        checks: 0,
        seed,
        max_ratio: 0.0,
        violations: Vec::new(),
    };
    for res in per_sample {
        let (v, worst, checks) = res?;
        report.violations.extend(v);
        report.max_ratio = report.max_ratio.max(worst);
        report.checks += checks;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LsEntry {
    pub eps: f64,
    /// Largest tested `δ = ε/1.1^k` with no exceedance, if any.
    pub safe_delta: Option<f64>,
    pub candidates_tried: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaEntry {
    pub r: f64,
    pub samples: usize,
    pub converged: usize,
    /// Time for `‖x_t‖ ≤ 0.01·‖x0‖`, per sample; `None` if not reached.
    pub times: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LsGaReport {
    pub horizon: f64,
    pub ls: Vec<LsEntry>,
    pub ga: Vec<GaEntry>,
}

impl LsGaReport {
    pub fn locally_stable(&self) -> bool {
        self.ls.iter().all(|e| e.safe_delta.is_some())
    }

    pub fn globally_attractive(&self) -> bool {
        self.ga.iter().all(|e| e.converged == e.samples)
    }
}

/// Number of `δ` candidates tried per `ε`.
const LS_CANDIDATES: usize = 40;

/// Local-stability and attractivity probes over sampled histories.
#[allow(clippy::too_many_arguments)]
pub fn check_ls_ga(
    sys: &SystemDef,
    eps_grid: &[f64],
    radii: &[f64],
    horizon: f64,
    samples: usize,
    seed: u64,
    cfg: &SolveConfig,
) -> Result<LsGaReport, StabilityError> {
    if !sys.zero_equilibrium() {
        return Err(StabilityError::NotAnEquilibrium);
    }
    if !(horizon > 0.0) || samples == 0 {
        return Err(StabilityError::Argument(
            "need a positive horizon and samples ≥ 1".into(),
        ));
    }
    let u = InputSignal::zero(sys.m());
    let ls_seed = derive_seed(seed, 1);
    let ga_seed = derive_seed(seed, 2);

    let mut ls = Vec::with_capacity(eps_grid.len());
    for (ei, &eps) in eps_grid.iter().enumerate() {
        let mut entry = LsEntry {
            eps,
            safe_delta: None,
            candidates_tried: 0,
        };
        for k in 1..=LS_CANDIDATES {
            let delta = eps / 1.1f64.powi(k as i32);
            entry.candidates_tried = k;
            let exceed: Vec<Result<bool, StabilityError>> = (0..samples)
                .into_par_iter()
                .map(|i| {
                    let x0 = draw_xinf(
                        sys,
                        delta,
                        derive_seed(ls_seed, ei as u64),
                        k * samples + i,
                        4,
                    );
                    let traj = solve_tds(sys, &x0, &u, horizon, cfg).map_err(|source| {
                        StabilityError::Solve {
                            r: delta,
                            sample: i,
                            source,
                        }
                    })?;
                    Ok(traj.escaped() || norm_xinf(&x0).max(traj.sup_norm()) > eps)
                })
                .collect();
            let mut any = false;
            for e in exceed {
                any |= e?;
            }
            if !any {
                entry.safe_delta = Some(delta);
                break;
            }
        }
        ls.push(entry);
    }

    let times = time_grid(horizon, 401, &[]);
    let mut ga = Vec::with_capacity(radii.len());
    for (ri, &r) in radii.iter().enumerate() {
        let found: Vec<Result<Option<f64>, StabilityError>> = (0..samples)
            .into_par_iter()
            .map(|i| {
                let x0 = draw_xinf(sys, r, derive_seed(ga_seed, ri as u64), i, 4);
                let n0 = norm_xinf(&x0);
                let traj = solve_tds(sys, &x0, &u, horizon, cfg).map_err(|source| {
                    StabilityError::Solve {
                        r,
                        sample: i,
                        source,
                    }
                })?;
                Ok(times
                    .iter()
                    .take_while(|&&t| t <= traj.t_end())
                    .find(|&&t| segment_norm(&x0, &traj, t) <= 0.01 * n0)
                    .copied())
            })
            .collect();
        let times_r: Vec<Option<f64>> = found.into_iter().collect::<Result<_, _>>()?;
        ga.push(GaEntry {
            r,
            samples,
            converged: times_r.iter().filter(|t| t.is_some()).count(),
            times: times_r,
        });
    }
    Ok(LsGaReport { horizon, ls, ga })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rhsdsl::catalog;
    use std::f64::consts::E;

    fn exp_case() -> KLEnvelope {
        KLEnvelope::BarBeta {
            inner: Box::new(KLEnvelope::Exponential {
                gain: 1.0,
                rate: 1.0,
            }),
            kappa: Kappa::Constant { value: 1.0 },
            mu: MuBound::Linear { gain: 1.0 },
            theta_p: 1.0,
        }
    }

    #[test]
    fn gronwall_examples() {
        let mu = MuBound::Linear { gain: 1.0 };
        assert!((gronwall_bound(1.0, &Kappa::Constant { value: 1.0 }, &mu, 1.0) - E).abs() < 1e-15);
        assert_eq!(
            gronwall_bound(0.0, &Kappa::Constant { value: 1.0 }, &mu, 1.0),
            0.0
        );
        let k = Kappa::parse("r").unwrap();
        let mu2 = MuBound::Linear { gain: 2.0 };
        assert!((gronwall_bound(1.0, &k, &mu2, 1.0) - E * E).abs() < 1e-14);
    }

    #[test]
    fn bar_beta_arithmetic() {
        let b = exp_case();
        assert!((b.eval(1.0, 0.0) - E * E).abs() < 1e-12);
        let inner = KLEnvelope::Exponential {
            gain: 1.0,
            rate: 1.0,
        };
        assert!((tilde_beta(&inner, 1.0, -0.5, 1.0) - 0.5f64.exp()).abs() < 1e-12);
        for t in [0.0, 1.0, 7.0] {
            assert_eq!(b.eval(0.0, t), 0.0);
        }
    }

    #[test]
    fn validation_reports_cell() {
        let bad = KLEnvelope::Grid {
            radii: vec![0.0, 1.0, 2.0],
            times: vec![0.0, 1.0],
            values: vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![2.0, 1.0]],
            tail_rate: 1.0,
        };
        let e = validate_kl(&bad, &[0.0, 1.0, 2.0], &[0.0, 1.0]).unwrap_err();
        assert_eq!(e.kind, ShapeViolation::IncreasingInTime);
        assert_eq!((e.r, e.t), (1.0, 1.0));
    }

    #[test]
    fn envelope_json_round_trip() {
        let b = KLEnvelope::BarBeta {
            inner: Box::new(KLEnvelope::Exponential {
                gain: 1.3,
                rate: 0.7,
            }),
            kappa: Kappa::parse("1 + 0.5*r^2").unwrap(),
            mu: MuBound::Grid {
                times: vec![0.0, 1.0],
                radii: vec![0.5, 1.0],
                values: vec![vec![0.55, 1.1], vec![0.6, 1.2]],
                margin: 1.1,
            },
            theta_p: 1.0,
        };
        let text = serde_json::to_string(&b).unwrap();
        let back: KLEnvelope = serde_json::from_str(&text).unwrap();
        for (r, t) in [(0.3, 0.0), (1.0, 0.5), (4.0, 3.0)] {
            assert_eq!(b.eval(r, t).to_bits(), back.eval(r, t).to_bits());
        }
    }

    #[test]
    fn decay_fit_and_growth_refusal() {
        let cfg = SolveConfig::default();
        let decay = catalog::load("decay").unwrap();
        let radii = crate::reachability::geometric_radii(0.05, 2.0, 8);
        let env = fit_envelope(&decay, &radii, 6.0, 12, 1, &cfg).unwrap();
        for t in [1.0, 2.0, 4.0, 6.0] {
            let v = env.eval(1.0, t);
            assert!(v <= 2.2 * (-(t - 1.0)).exp() + 1e-12, "t={t}: {v}");
        }
        let growth = catalog::load("growth").unwrap();
        let e = fit_envelope(&growth, &[1.0], 5.0, 6, 1, &cfg).unwrap_err();
        assert!(e.to_string().contains("non-decaying"), "{e}");
        let zero = catalog::load("zero").unwrap();
        assert!(matches!(
            fit_envelope(&zero, &[1.0], 5.0, 6, 1, &cfg),
            Err(StabilityError::NonDecaying(_))
        ));
        let only_zero = fit_envelope(&zero, &[0.0], 5.0, 3, 1, &cfg).unwrap();
        assert_eq!(only_zero.eval(1.0, 0.0), 0.0);
    }

    #[test]
    fn ls_ga_probes() {
        let cfg = SolveConfig::default();
        let decay = catalog::load("decay").unwrap();
        let rep = check_ls_ga(&decay, &[0.1, 1.0], &[1.0], 10.0, 6, 2, &cfg).unwrap();
        for e in &rep.ls {
            assert!(e.safe_delta.unwrap() >= e.eps / 1.1 - 1e-15);
        }
        assert!(rep.globally_attractive());
        let growth = catalog::load("growth").unwrap();
        let rep = check_ls_ga(&growth, &[0.1], &[1.0], 10.0, 4, 2, &cfg).unwrap();
        assert!(!rep.locally_stable());
        let zero = catalog::load("zero").unwrap();
        let rep = check_ls_ga(&zero, &[0.1], &[1.0], 5.0, 4, 2, &cfg).unwrap();
        assert!(!rep.globally_attractive());
    }
}
