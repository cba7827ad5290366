//! Sampled reachability sets, the time-extension recursion for reach bounds,
//! and finite-escape probing.
//!
//! Estimates are lower bounds on the true suprema: only the sampled family
//! of histories and inputs is explored (piecewise-constant histories and
//! inputs, cycling through uniform, bang-bang and constant extremal draws).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::{segment_norm, PiecewiseHistory};
use crate::rhsdsl::SystemDef;
use crate::sampling::{derive_seed, random_history, rng_for, SampleMode};
use crate::signals::{sample_input_with, InputSignal};
use crate::solver::{solve_tds, SolveConfig, SolveError};
use crate::trajectory::EscapeConfidence;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReachError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("radius grid must be nonnegative and strictly increasing")]
    RadiusGrid,
    #[error("time grid must start at 0, increase strictly and end at the horizon")]
    TimeGrid,
    #[error("sample {sample} at radius {r}: {source}")]
    Solve {
        r: f64,
        sample: usize,
        #[source]
        source: SolveError,
    },
}

/// Shape of the sampled family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleFamily {
    pub history_pieces: usize,
    pub input_pieces: usize,
}

impl Default for SampleFamily {
    fn default() -> Self {
        SampleFamily {
            history_pieces: 4,
            input_pieces: 8,
        }
    }
}

/// `time_points` equally spaced times on `[0, horizon]`, plus `extra` times
/// inside the interval.
pub fn time_grid(horizon: f64, time_points: usize, extra: &[f64]) -> Vec<f64> {
    let k = time_points.max(2) - 1;
    let mut t: Vec<f64> = (0..=k).map(|j| horizon * j as f64 / k as f64).collect();
    t[k] = horizon;
    t.extend(extra.iter().copied().filter(|&e| e > 0.0 && e < horizon));
    t.sort_by(f64::total_cmp);
    t.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    t
}

/// Geometric radius grid with `per_decade` points per factor ten, ending
/// exactly at `r_max`.
pub fn geometric_radii(r_min: f64, r_max: f64, per_decade: usize) -> Vec<f64> {
    let decades = (r_max / r_min).log10();
    let k = ((decades * per_decade as f64).ceil() as usize).max(1);
    (0..=k)
        .map(|i| r_max * 10f64.powf(-decades * (k - i) as f64 / k as f64))
        .collect()
}

/// One sample that escaped.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EscapeWitness {
    pub r: f64,
    pub sample: usize,
    pub x0: PiecewiseHistory,
    pub u: InputSignal,
    pub t_star: f64,
    pub confidence: EscapeConfidence,
}

/// Sampled suprema over the radius-`r` balls of initial states and inputs.
///
/// `sup_estimates[i][j]` is the largest `sup_{s ≤ t_j} |x(s)|` seen for radius
/// `radii[i]`; `segment_estimates[i][j]` the largest `‖x_{t_j}‖`. Both are
/// made nondecreasing along the radius axis. Entries at or after an observed
/// escape are `+∞` and flagged.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReachTable {
    pub radii: Vec<f64>,
    pub times: Vec<f64>,
    pub sup_estimates: Vec<Vec<f64>>,
    pub segment_estimates: Vec<Vec<f64>>,
    pub escaped: Vec<Vec<bool>>,
    pub sample_count: usize,
    pub seed: u64,
    pub family: SampleFamily,
    #[serde(skip)]
    pub witnesses: Vec<EscapeWitness>,
}

impl ReachTable {
    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn any_escape(&self) -> bool {
        self.escaped.iter().flatten().any(|&e| e)
    }

    /// Estimate for `radii[i]` at `times[j]`.
    pub fn estimate(&self, i: usize, j: usize) -> f64 {
        self.sup_estimates[i][j]
    }

    /// CSV with columns `r, t, estimate, segment_estimate, escaped`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,t,estimate,segment_estimate,escaped\n");
        for (i, r) in self.radii.iter().enumerate() {
            for (j, t) in self.times.iter().enumerate() {
                out.push_str(&format!(
                    "{r:?},{t:?},{:?},{:?},{}\n",
                    self.sup_estimates[i][j],
                    self.segment_estimates[i][j],
                    u8::from(self.escaped[i][j])
                ));
            }
        }
        out
    }
}

struct SampleOutcome {
    sup: Vec<f64>,
    seg: Vec<f64>,
    escape: Option<(f64, EscapeConfidence)>,
}

/// Draws the `sample`-th (history, input) pair for radius index `ri`.
pub fn draw_pair(
    sys: &SystemDef,
    r: f64,
    horizon: f64,
    seed: u64,
    ri: usize,
    sample: usize,
    family: &SampleFamily,
) -> (PiecewiseHistory, InputSignal) {
    let mut rng = rng_for(derive_seed(seed, ri as u64), sample as u64);
    let mode = SampleMode::for_sample(sample);
    let x0 = random_history(
        &mut rng,
        sys.theta_p(),
        sys.n(),
        r,
        family.history_pieces,
        mode,
    );
    let u = if sys.m() == 0 {
        InputSignal::zero(0)
    } else {
        sample_input_with(&mut rng, sys.m(), r, horizon, family.input_pieces, mode)
    };
    (x0, u)
}

fn run_sample(
    sys: &SystemDef,
    x0: &PiecewiseHistory,
    u: &InputSignal,
    times: &[f64],
    cfg: &SolveConfig,
) -> Result<SampleOutcome, SolveError> {
    let horizon = times[times.len() - 1];
    let traj = solve_tds(sys, x0, u, horizon, cfg)?;
    let t_end = traj.t_end();
    let escaped = traj.escape().map(|e| (e.time, e.confidence));
    let mut sup = Vec::with_capacity(times.len());
    let mut seg = Vec::with_capacity(times.len());
    let mut running: f64 = 0.0;
    let mut prev = 0.0;
    for &t in times {
        if escaped.is_some() && t >= t_end {
            sup.push(f64::INFINITY);
            seg.push(f64::INFINITY);
            continue;
        }
        running = running.max(traj.sup_norm_on(prev, t));
        prev = t;
        sup.push(running);
        seg.push(segment_norm(x0, &traj, t));
    }
    Ok(SampleOutcome {
        sup,
        seg,
        escape: escaped,
    })
}

/// [`estimate_reach_with`] with the default family and an 11-point time grid
/// (which includes `θ_p` when it lies inside the horizon).
pub fn estimate_reach(
    sys: &SystemDef,
    radii: &[f64],
    horizon: f64,
    samples: usize,
    seed: u64,
    cfg: &SolveConfig,
) -> Result<ReachTable, ReachError> {
    let times = time_grid(horizon, 11, &[sys.theta_p()]);
    estimate_reach_with(
        sys,
        radii,
        &times,
        samples,
        seed,
        cfg,
        &SampleFamily::default(),
    )
}

/// Sampled reach table on the given grids. Sample `i` at radius index `k`
/// uses its own generator derived from `(seed, k, i)`, so growing `samples`
/// only adds draws and the result does not depend on scheduling.
pub fn estimate_reach_with(
    sys: &SystemDef,
    radii: &[f64],
    times: &[f64],
    samples: usize,
    seed: u64,
    cfg: &SolveConfig,
    family: &SampleFamily,
) -> Result<ReachTable, ReachError> {
    if samples == 0 {
        return Err(ReachError::Argument("samples must be at least 1".into()));
    }
    if radii.is_empty() || radii[0] < 0.0 || radii.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(ReachError::RadiusGrid);
    }
    if times.first() != Some(&0.0) || times.len() < 2 || times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(ReachError::TimeGrid);
    }
    let horizon = times[times.len() - 1];
    let jobs: Vec<(usize, usize)> = (0..radii.len())
        .flat_map(|ri| (0..samples).map(move |i| (ri, i)))
        .collect();
    let outcomes: Vec<Result<(SampleOutcome, Option<EscapeWitness>), ReachError>> = jobs
        .par_iter()
        .map(|&(ri, i)| {
            let r = radii[ri];
            let (x0, u) = draw_pair(sys, r, horizon, seed, ri, i, family);
            let out = run_sample(sys, &x0, &u, times, cfg).map_err(|source| ReachError::Solve {
                r,
                sample: i,
                source,
            })?;
            let witness = out.escape.map(|(t_star, confidence)| EscapeWitness {
                r,
                sample: i,
                x0,
                u,
                t_star,
                confidence,
            });
            Ok((out, witness))
        })
        .collect();

    let nt = times.len();
    let mut sup = vec![vec![0.0; nt]; radii.len()];
    let mut seg = vec![vec![0.0; nt]; radii.len()];
    let mut escaped = vec![vec![false; nt]; radii.len()];
    let mut witnesses = Vec::new();
    for (&(ri, _), res) in jobs.iter().zip(outcomes) {
        let (out, witness) = res?;
        for j in 0..nt {
            sup[ri][j] = f64::max(sup[ri][j], out.sup[j]);
            seg[ri][j] = f64::max(seg[ri][j], out.seg[j]);
            escaped[ri][j] |= out.sup[j].is_infinite();
        }
        witnesses.extend(witness);
    }
    for ri in 1..radii.len() {
        for j in 0..nt {
            sup[ri][j] = sup[ri][j].max(sup[ri - 1][j]);
            seg[ri][j] = seg[ri][j].max(seg[ri - 1][j]);
            escaped[ri][j] |= escaped[ri - 1][j];
        }
    }
    Ok(ReachTable {
        radii: radii.to_vec(),
        times: times.to_vec(),
        sup_estimates: sup,
        segment_estimates: seg,
        escaped,
        sample_count: samples,
        seed,
        family: family.clone(),
        witnesses,
    })
}

/// `r ↦ bound(r)` on a radius grid, piecewise linear in between and extended
/// by the end slopes outside; exact at grid points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachBound {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub horizon: f64,
    pub provenance: String,
    /// Set when the bound was evaluated outside its grid while being built.
    pub extrapolated: bool,
}

impl ReachBound {
    pub fn new(
        radii: Vec<f64>,
        values: Vec<f64>,
        horizon: f64,
        provenance: impl Into<String>,
    ) -> Result<Self, ReachError> {
        if radii.len() < 2
            || radii.len() != values.len()
            || radii.windows(2).any(|w| !(w[0] < w[1]))
        {
            return Err(ReachError::RadiusGrid);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ReachError::Argument("bound values must be finite".into()));
        }
        Ok(ReachBound {
            radii,
            values,
            horizon,
            provenance: provenance.into(),
            extrapolated: false,
        })
    }

    /// Tabulates a closed-form bound.
    pub fn from_fn(
        radii: &[f64],
        horizon: f64,
        provenance: &str,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self, ReachError> {
        ReachBound::new(
            radii.to_vec(),
            radii.iter().map(|&r| f(r)).collect(),
            horizon,
            provenance,
        )
    }

    /// Bound from a table: for each radius, the largest estimate over the
    /// whole time grid (the sup over `[0, horizon]`).
    pub fn from_table(table: &ReachTable) -> Result<Self, ReachError> {
        if table.any_escape() {
            return Err(ReachError::Argument("table contains escapes".into()));
        }
        let values = table
            .sup_estimates
            .iter()
            .map(|row| row.iter().copied().fold(0.0, f64::max))
            .collect();
        ReachBound::new(
            table.radii.clone(),
            values,
            table.horizon(),
            format!(
                "sampled: {} samples, seed {}",
                table.sample_count, table.seed
            ),
        )
    }

    pub fn is_extrapolated(&self, r: f64) -> bool {
        r < self.radii[0] || r > self.radii[self.radii.len() - 1]
    }

    pub fn eval(&self, r: f64) -> f64 {
        let k = self.radii.len();
        if let Ok(i) = self.radii.binary_search_by(|x| x.total_cmp(&r)) {
            return self.values[i];
        }
        let i = self.radii.partition_point(|&x| x < r).clamp(1, k - 1);
        let (r0, r1) = (self.radii[i - 1], self.radii[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        v0 + (v1 - v0) * ((r - r0) / (r1 - r0))
    }
}

/// `B_n` for horizon `n·T` from `R1` for horizon `T`, via
/// `B_{k+1}(r) = max(B_k(r), R1(max(r, B_k(r))))`, on `R1`'s grid.
pub fn extend_reach_bound(r1: &ReachBound, n: usize) -> Result<ReachBound, ReachError> {
    if n == 0 {
        return Err(ReachError::Argument("n must be at least 1".into()));
    }
    let mut values = r1.values.clone();
    let mut extrapolated = r1.extrapolated;
    for _ in 1..n {
        values = r1
            .radii
            .iter()
            .zip(&values)
            .map(|(&r, &b)| {
                let rho = r.max(b);
                extrapolated |= r1.is_extrapolated(rho);
                b.max(r1.eval(rho))
            })
            .collect();
    }
    Ok(ReachBound {
        radii: r1.radii.clone(),
        values,
        horizon: r1.horizon * n as f64,
        provenance: format!("extended x{n} from [{}]", r1.provenance),
        extrapolated,
    })
}

/// Result of a finite-escape probe.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FcReport {
    pub r_max: f64,
    pub horizon: f64,
    pub samples: usize,
    pub seed: u64,
    pub witnesses: Vec<EscapeWitness>,
}

/// Searches the radius-`r_max` ball for solutions escaping before `horizon`.
/// Sample `i` uses radius `r_max·(i+1)/samples`, so small and large data
/// are both represented.
pub fn fc_probe(
    sys: &SystemDef,
    r_max: f64,
    horizon: f64,
    samples: usize,
    seed: u64,
    cfg: &SolveConfig,
) -> Result<FcReport, ReachError> {
    if !(r_max > 0.0) || !(horizon > 0.0) {
        return Err(ReachError::Argument(
            "r_max and horizon must be positive".into(),
        ));
    }
    let family = SampleFamily::default();
    let found: Vec<Option<EscapeWitness>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let r = r_max * (i + 1) as f64 / samples as f64;
            let (x0, u) = draw_pair(sys, r, horizon, seed, 0, i, &family);
            let traj =
                solve_tds(sys, &x0, &u, horizon, cfg).map_err(|source| ReachError::Solve {
                    r,
                    sample: i,
                    source,
                })?;
            Ok(traj.escape().map(|e| EscapeWitness {
                r,
                sample: i,
                t_star: e.time,
                confidence: e.confidence,
                x0,
                u,
            }))
        })
        .collect::<Result<_, ReachError>>()?;
    Ok(FcReport {
        r_max,
        horizon,
        samples,
        seed,
        witnesses: found.into_iter().flatten().collect(),
    })
}
