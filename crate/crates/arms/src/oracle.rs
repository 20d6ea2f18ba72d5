//! Reference values that need more than a closed form: plain splitting on
//! the full-order thermal model.

use std::sync::Arc;

use anyhow::Result;
use arms_core::ams::{ams_to_critical_level, AmsParams, CheckPolicy};
use arms_core::ensemble::Ensemble;
use arms_core::mcmc::KernelConfig;
use arms_core::rng::mix_seed;
use arms_core::surrogates::{FullOrderScore, ThermalBlockModel};
use arms_core::{ReferenceDistribution, RngStream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Settings of a plain multilevel splitting run on the true model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlainAms {
    pub n_particles: usize,
    pub kill_fraction: f64,
    pub t_mutations: usize,
    pub l_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlainAmsRun {
    pub p_hat: f64,
    pub ln_z: f64,
    /// Full-order solves spent.
    pub solves: u64,
}

/// Independent plain splitting runs on the full-order thermal score, run on
/// a pool of `workers` threads. Run `r` uses the stream `mix_seed(seed, 0, r)`.
pub fn plain_ams_full_order(
    model: Arc<ThermalBlockModel>,
    dist: &ReferenceDistribution,
    cfg: &PlainAms,
    runs: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<PlainAmsRun>> {
    let params = AmsParams {
        n_particles: cfg.n_particles,
        kill_fraction: cfg.kill_fraction,
        l_max: cfg.l_max,
        c_threshold: f64::INFINITY,
        t_mutations: cfg.t_mutations,
        checks: CheckPolicy::Disabled,
    };
    params.validate()?;
    let score = FullOrderScore { model };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()?;
    let results: Vec<arms_core::Result<PlainAmsRun>> = pool.install(|| {
        (0..runs)
            .into_par_iter()
            .map(|r| {
                let mut rng = RngStream::new(mix_seed(seed, 0, r as u64), 0);
                let mut ens =
                    Ensemble::from_reference(dist, params.n_particles, &score, 0, &mut rng)?;
                let mut kernel = KernelConfig::default();
                ams_to_critical_level(&mut ens, &score, dist, &params, &mut kernel, &mut rng)?;
                let above = ens.empirical_fraction(|p| p.score > cfg.l_max);
                Ok(PlainAmsRun {
                    p_hat: ens.z() * above,
                    ln_z: ens.ln_z,
                    solves: ens.eval_count,
                })
            })
            .collect()
    });
    Ok(results.into_iter().collect::<arms_core::Result<Vec<_>>>()?)
}
