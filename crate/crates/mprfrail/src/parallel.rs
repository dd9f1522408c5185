//! Thread-pool runners for independent fits: simulation replicates, bootstrap
//! replicates and structure comparisons. Results are gathered by index, so the
//! output does not depend on the number of threads.

use mprfrail_core::estimation::{fit, FitSettings, ModelFit};
use mprfrail_core::inference::{bootstrap_replicate, bootstrap_setup, percentile_bands, HazardRatioCurve};
use mprfrail_core::simulation::{
    calibrate_censoring, pilot_rng, run_replicate, summarize, ScenarioSpec, ScenarioSummary,
};
use mprfrail_core::{BaselineFamily, Design, Result, Structure};
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

/// A pool with `threads` workers; `None` or `Some(0)` uses every core.
pub fn pool(threads: Option<usize>) -> ThreadPool {
    ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build().expect("thread pool construction")
}

pub fn run_scenario(
    pool: &ThreadPool,
    spec: &ScenarioSpec,
    structure: Structure,
    settings: &FitSettings,
) -> Result<ScenarioSummary> {
    spec.validate()?;
    let c_max = calibrate_censoring(spec, &mut pilot_rng(spec.seed))?;
    let outcomes: Vec<_> = pool.install(|| {
        (0..spec.replicates).into_par_iter().map(|b| run_replicate(spec, structure, settings, c_max, b)).collect()
    });
    summarize(spec, structure, c_max, &outcomes)
}

pub fn bootstrap_hr_ci(
    pool: &ThreadPool,
    fit: &ModelFit,
    covariate: &str,
    times: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<HazardRatioCurve> {
    let (mut curve, sampler, reference) = bootstrap_setup(fit, covariate, times, replicates)?;
    let draws = pool.install(|| {
        (0..replicates)
            .into_par_iter()
            .map(|b| bootstrap_replicate(&sampler, &reference, times, seed, b))
            .collect::<Result<Vec<_>>>()
    })?;
    percentile_bands(&mut curve, &draws)?;
    Ok(curve)
}

/// Fits every structure on the same design, in the order given.
pub fn fit_structures(
    pool: &ThreadPool,
    family: BaselineFamily,
    design: &Design,
    structures: &[Structure],
    settings: &FitSettings,
) -> Vec<Result<ModelFit>> {
    pool.install(|| structures.par_iter().map(|&s| fit(family, design, s, settings)).collect())
}
