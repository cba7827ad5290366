//! From sampled decay on continuous data to a uniform bound on all data.
//!
//! Steps: reach table on `[0, θ_p]` → `μ̂` → `κ` → Grönwall radius `R*` →
//! envelope fitted on continuous histories up to `R*` → `β̄` → held-out
//! check on discontinuous histories with a fresh seed.

use serde::Serialize;

use crate::reachability::{estimate_reach_with, geometric_radii, time_grid, SampleFamily};
use crate::rhsdsl::{lipschitz_profile, SystemDef};
use crate::sampling::derive_seed;
use crate::solver::SolveConfig;
use crate::stability::{
    build_bar_beta, check_ugas, fit_envelope_with, fit_mu, gronwall_bound, FitOptions, KLEnvelope,
    Kappa, MuBound, StabilityError, UgasReport,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineConfig {
    /// Largest initial-data radius checked.
    pub r_max: f64,
    pub horizon: f64,
    pub radii_per_decade: usize,
    /// Decades below `r_max` covered by the grids.
    pub decades: f64,
    pub reach_samples: usize,
    /// Continuous histories per fit radius.
    pub fit_samples: usize,
    pub check_samples: usize,
    pub time_step: f64,
    pub lipschitz_samples: usize,
    pub seed: u64,
    /// Seed of the held-out check; derived from `seed` when absent.
    pub check_seed: Option<u64>,
    pub solve: SolveConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            r_max: 5.0,
            horizon: 50.0,
            radii_per_decade: 8,
            decades: 2.0,
            reach_samples: 60,
            fit_samples: 40,
            check_samples: 1000,
            time_step: 0.25,
            lipschitz_samples: 4000,
            seed: 1,
            check_seed: None,
            solve: SolveConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn effective_check_seed(&self) -> u64 {
        self.check_seed
            .unwrap_or_else(|| derive_seed(self.seed, 0xC4EC))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineReport {
    pub system: String,
    pub config: PipelineConfig,
    pub check_seed: u64,
    pub mu: MuBound,
    pub kappa: Kappa,
    /// `max_r G(r)` over the checked radii; the envelope is fitted up to it.
    pub r_star: f64,
    pub beta: KLEnvelope,
    pub bar_beta: KLEnvelope,
    pub ugas: UgasReport,
}

/// Runs the whole chain; fails with [`StabilityError::NonDecaying`] when the
/// sampled data do not decay.
pub fn run_gas_to_ugas(
    sys: &SystemDef,
    cfg: &PipelineConfig,
) -> Result<PipelineReport, StabilityError> {
    if !sys.zero_equilibrium() {
        return Err(StabilityError::NotAnEquilibrium);
    }
    if !(cfg.r_max > 0.0 && cfg.horizon > 0.0 && cfg.time_step > 0.0) {
        return Err(StabilityError::Argument(
            "r_max, horizon and time_step must be positive".into(),
        ));
    }
    let theta_p = sys.theta_p();
    let r_min = cfg.r_max * 10f64.powf(-cfg.decades);
    let radii = geometric_radii(r_min, cfg.r_max, cfg.radii_per_decade);

    let reach_times = time_grid(theta_p, 11, &[]);
    let table = estimate_reach_with(
        sys,
        &radii,
        &reach_times,
        cfg.reach_samples,
        derive_seed(cfg.seed, 1),
        &cfg.solve,
        &SampleFamily::default(),
    )?;
    let mu = fit_mu(&table)?;

    let kappa = match Kappa::from_system(sys) {
        Some(k) => k,
        None => {
            let mu_max = mu.eval(theta_p, cfg.r_max);
            let k_radii = geometric_radii(
                mu_max * 10f64.powf(-cfg.decades),
                mu_max,
                cfg.radii_per_decade,
            );
            let values = lipschitz_profile(
                sys,
                &k_radii,
                cfg.lipschitz_samples,
                derive_seed(cfg.seed, 2),
            )?;
            Kappa::Profile {
                radii: k_radii,
                values,
            }
        }
    };
    let r_star = radii
        .iter()
        .map(|&r| gronwall_bound(r, &kappa, &mu, theta_p))
        .fold(0.0, f64::max);

    let fit_radii = geometric_radii(
        r_star * 10f64.powf(-cfg.decades - 1.0),
        r_star,
        cfg.radii_per_decade,
    );
    let fit_times = time_grid(
        cfg.horizon,
        (cfg.horizon / cfg.time_step).ceil() as usize + 1,
        &[],
    );
    let fit = fit_envelope_with(
        sys,
        &fit_radii,
        &fit_times,
        cfg.fit_samples,
        derive_seed(cfg.seed, 3),
        &cfg.solve,
        &FitOptions::default(),
    )?;
    let beta = fit.envelope;
    let bar_beta = build_bar_beta(beta.clone(), kappa.clone(), mu.clone(), theta_p, cfg.r_max)?;
    let check_seed = cfg.effective_check_seed();
    let ugas = check_ugas(
        sys,
        &bar_beta,
        &radii,
        cfg.horizon,
        cfg.check_samples,
        check_seed,
        &cfg.solve,
    )?;
    Ok(PipelineReport {
        system: sys.name.clone(),
        config: cfg.clone(),
        check_seed,
        mu,
        kappa,
        r_star,
        beta,
        bar_beta,
        ugas,
    })
}
