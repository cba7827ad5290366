//! Seeded random histories, inputs and ball points.
//!
//! Every randomized experiment derives one generator per sample from
//! `(seed, stream)` so results do not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::history::{ContinuousHistory, PiecewiseHistory};

/// SplitMix64 finaliser applied to `seed` combined with `stream`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

/// Point in the closed Euclidean ball of radius `r` in `R^dim`: uniform in
/// the ball, or uniform on its boundary sphere when `on_sphere`.
pub fn ball_point<R: Rng + ?Sized>(rng: &mut R, dim: usize, r: f64, on_sphere: bool) -> Vec<f64> {
    if dim == 0 {
        return Vec::new();
    }
    if r == 0.0 {
        return vec![0.0; dim];
    }
    if dim == 1 {
        return if on_sphere {
            vec![if rng.random::<bool>() { r } else { -r }]
        } else {
            vec![rng.random_range(-r..=r)]
        };
    }
    let mut dir: Vec<f64> = (0..dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let len = crate::poly::norm(&dir);
    if len == 0.0 {
        dir = vec![0.0; dim];
        dir[0] = 1.0;
    } else {
        dir.iter_mut().for_each(|v| *v /= len);
    }
    let rad = if on_sphere {
        r
    } else {
        r * rng.random::<f64>().powf(1.0 / dim as f64)
    };
    dir.into_iter().map(|v| (v * rad).min(r).max(-r)).collect()
}

/// How values of a sampled history or input are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMode {
    /// Every piece value uniform in the ball.
    Uniform,
    /// Every piece value on the boundary sphere (bang-bang).
    Extremal,
    /// One boundary value held constant everywhere.
    ExtremalConstant,
}

impl SampleMode {
    /// Mixture used by the experiments: cycles through all modes.
    pub fn for_sample(i: usize) -> SampleMode {
        match i % 3 {
            0 => SampleMode::Uniform,
            1 => SampleMode::Extremal,
            _ => SampleMode::ExtremalConstant,
        }
    }

    fn on_sphere(self) -> bool {
        !matches!(self, SampleMode::Uniform)
    }
}

/// Sorted random cut points in `(lo, hi)`, at least `1e-9` apart.
fn cuts<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let mut c: Vec<f64> = (0..count)
        .map(|_| lo + (hi - lo) * rng.random::<f64>())
        .collect();
    c.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(c.len());
    for v in c {
        let prev = out.last().copied().unwrap_or(lo);
        if v - prev > 1e-9 && hi - v > 1e-9 {
            out.push(v);
        }
    }
    out
}

/// Piecewise-constant history with `pieces` random intervals, jumps at
/// random places and an independent point value; norm at most `r`.
pub fn random_history<R: Rng + ?Sized>(
    rng: &mut R,
    theta_p: f64,
    n: usize,
    r: f64,
    pieces: usize,
    mode: SampleMode,
) -> PiecewiseHistory {
    if mode == SampleMode::ExtremalConstant {
        let c = ball_point(rng, n, r, true);
        return PiecewiseHistory::constant(theta_p, &c);
    }
    let breaks = cuts(rng, -theta_p, 0.0, pieces.max(1) - 1);
    let values: Vec<Vec<f64>> = (0..=breaks.len())
        .map(|_| ball_point(rng, n, r, mode.on_sphere()))
        .collect();
    let point = ball_point(rng, n, r, mode.on_sphere());
    PiecewiseHistory::piecewise_constant(theta_p, &breaks, &values, point)
        .expect("sampled history is well formed")
}

/// Continuous piecewise-linear history through `nodes + 1` values in the
/// radius-`r` ball.
pub fn random_continuous_history<R: Rng + ?Sized>(
    rng: &mut R,
    theta_p: f64,
    n: usize,
    r: f64,
    nodes: usize,
    mode: SampleMode,
) -> ContinuousHistory {
    if mode == SampleMode::ExtremalConstant {
        let c = ball_point(rng, n, r, true);
        return ContinuousHistory::constant(theta_p, &c);
    }
    let mut times = vec![-theta_p];
    times.extend(cuts(rng, -theta_p, 0.0, nodes.max(1) - 1));
    times.push(0.0);
    let values: Vec<Vec<f64>> = times
        .iter()
        .map(|_| ball_point(rng, n, r, mode.on_sphere()))
        .collect();
    ContinuousHistory::from_nodes(&times, &values).expect("sampled history is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::norm_xinf;

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn ball_points_stay_in_ball() {
        let mut rng = rng_for(1, 0);
        for dim in 1..4 {
            for i in 0..200 {
                let p = ball_point(&mut rng, dim, 2.5, i % 2 == 0);
                let nrm = crate::poly::norm(&p);
                assert!(nrm <= 2.5 + 1e-12);
                if i % 2 == 0 {
                    assert!((nrm - 2.5).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sampled_histories_respect_radius() {
        let mut rng = rng_for(2, 0);
        for i in 0..100 {
            let mode = SampleMode::for_sample(i);
            let h = random_history(&mut rng, 1.3, 2, 0.7, 5, mode);
            assert!(norm_xinf(&h) <= 0.7 + 1e-12);
            let c = random_continuous_history(&mut rng, 1.3, 2, 0.7, 5, mode);
            assert!(c.sup_norm() <= 0.7 + 1e-12);
        }
    }
}
