//! Dense solver output.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::poly::{lookup_pos, norm, Piece, Side};

/// How strongly an escape report is supported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EscapeConfidence {
    /// Magnitude above threshold while the step size collapsed.
    High,
    /// The right-hand side or the state stopped being finite first.
    Low,
}

/// Finite escape evidence: `time` is the last accepted time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Escape {
    pub time: f64,
    pub last_norm: f64,
    pub min_step: f64,
    pub confidence: EscapeConfidence,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Solution on `[0, t_end]` as contiguous polynomial steps.
#[derive(Clone, Debug)]
pub struct Trajectory {
    dim: usize,
    start: Vec<f64>,
    steps: Vec<Piece>,
    breakpoints: Vec<f64>,
    t_end: f64,
    escape: Option<Escape>,
    stats: SolveStats,
    step_sups: OnceLock<Vec<f64>>,
}

impl Trajectory {
    pub(crate) fn new(
        start: Vec<f64>,
        steps: Vec<Piece>,
        breakpoints: Vec<f64>,
        escape: Option<Escape>,
        stats: SolveStats,
    ) -> Self {
        let t_end = steps.last().map_or(0.0, |s| s.to);
        Trajectory {
            dim: start.len(),
            start,
            steps,
            breakpoints,
            t_end,
            escape,
            stats,
            step_sups: OnceLock::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Last time the solution is known at (the escape time when escaped).
    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn start_value(&self) -> &[f64] {
        &self.start
    }

    pub fn steps(&self) -> &[Piece] {
        &self.steps
    }

    /// Propagated breakpoints in `[0, t_end)`, starting with `0`.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn escape(&self) -> Option<&Escape> {
        self.escape.as_ref()
    }

    pub fn escaped(&self) -> bool {
        self.escape.is_some()
    }

    pub fn stats(&self) -> &SolveStats {
        &self.stats
    }

    /// Value at `t ∈ [0, t_end]`; continuous, so step boundaries are unambiguous.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        eval_steps(&self.steps, &self.start, t, Side::Exact, 0.0, &mut out);
        out
    }

    /// Derivative of the interpolant at `t`, read from `side`.
    pub fn derivative(&self, t: f64, side: Side) -> Vec<f64> {
        if self.steps.is_empty() {
            return vec![0.0; self.dim];
        }
        let i = locate(&self.steps, lookup_pos(t, side, 1e-9));
        self.steps[i].derivative_at(t)
    }

    /// Steps intersected with `[a, b)`, re-expanded at their new left ends.
    pub fn restrict(&self, a: f64, b: f64) -> Vec<Piece> {
        let first = self.steps.partition_point(|s| s.to <= a);
        self.steps[first..]
            .iter()
            .take_while(|s| s.from < b)
            .filter_map(|s| {
                let lo = s.from.max(a);
                let hi = s.to.min(b);
                (hi > lo).then(|| {
                    if lo == s.from {
                        Piece::new(lo, hi, s.comps.clone())
                    } else {
                        s.restrict(lo, hi)
                    }
                })
            })
            .collect()
    }

    fn step_sups(&self) -> &[f64] {
        self.step_sups
            .get_or_init(|| self.steps.iter().map(Piece::max_norm).collect())
    }

    /// Exact maximum of `|x|` on `[a, b] ⊂ [0, t_end]`.
    pub fn sup_norm_on(&self, a: f64, b: f64) -> f64 {
        let mut m = norm(&self.eval(a)).max(norm(&self.eval(b)));
        if self.steps.is_empty() || b <= a {
            return m;
        }
        let sups = self.step_sups();
        let first = self.steps.partition_point(|s| s.to <= a);
        for (i, s) in self.steps.iter().enumerate().skip(first) {
            if s.from >= b {
                break;
            }
            if s.from >= a && s.to <= b {
                m = m.max(sups[i]);
            } else {
                m = m.max(s.max_norm_on(s.from.max(a), s.to.min(b)));
            }
        }
        m
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm_on(0.0, self.t_end)
    }

    /// Step junctions where the derivative jumps by more than `threshold`,
    /// with the jump size.
    pub fn kinks(&self, threshold: f64) -> Vec<(f64, f64)> {
        self.steps
            .windows(2)
            .filter_map(|w| {
                let left = w[0].derivative_at(w[0].to);
                let right = w[1].derivative_at(w[1].from);
                let jump = norm(
                    &left
                        .iter()
                        .zip(&right)
                        .map(|(a, b)| a - b)
                        .collect::<Vec<_>>(),
                );
                (jump > threshold).then_some((w[1].from, jump))
            })
            .collect()
    }

    /// Default output grid: `0` and every step end.
    pub fn step_times(&self) -> Vec<f64> {
        std::iter::once(0.0)
            .chain(self.steps.iter().map(|s| s.to))
            .collect()
    }

    /// CSV with columns `t, x_1..x_n, breakpoint`.
    pub fn to_csv(&self, times: &[f64]) -> String {
        let mut out = String::from("t");
        for i in 1..=self.dim {
            out.push_str(&format!(",x_{i}"));
        }
        out.push_str(",breakpoint\n");
        for &t in times {
            out.push_str(&format!("{t:?}"));
            for v in self.eval(t) {
                out.push_str(&format!(",{v:?}"));
            }
            let i = self.breakpoints.partition_point(|&b| b < t - 1e-9);
            let flag = self
                .breakpoints
                .get(i)
                .is_some_and(|&b| (b - t).abs() <= 1e-9);
            out.push_str(if flag { ",1\n" } else { ",0\n" });
        }
        out
    }
}

fn locate(steps: &[Piece], pos: f64) -> usize {
    steps.partition_point(|s| s.from <= pos).saturating_sub(1)
}

/// Evaluates a (possibly partial) chain of steps starting at `start`.
pub(crate) fn eval_steps(
    steps: &[Piece],
    start: &[f64],
    t: f64,
    side: Side,
    h: f64,
    out: &mut [f64],
) {
    if steps.is_empty() {
        out.copy_from_slice(start);
        return;
    }
    let i = locate(steps, lookup_pos(t, side, h));
    steps[i].eval_into(t, out);
}
