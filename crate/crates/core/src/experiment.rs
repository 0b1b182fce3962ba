//! End-to-end experiment pipeline: data preparation, schedule calibration,
//! training and generation driven by a [`RunConfig`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{grad_stats_from_records, kl_to_target, mmd_to_haar_analytic, GradStats, KL_BINS};
use crate::config::{RunConfig, ORIGINAL_H_END};
use crate::duddpm::{
    forward_diffuse, generate_trace, initial_denoise_input, train, DiffusionSchedule, TrainOutcome, TrainSettings,
    Variant,
};
use crate::error::{Error, Result};
use crate::qsim::Ensemble;
use crate::random::{ghz_ensemble, near_zero_ensemble, RandomSource};

/// Seed streams of a run. Each component gets its own child source.
mod stream {
    pub const TARGET: u64 = 0;
    pub const DIFFUSE: u64 = 1;
    pub const INITIAL: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const GENERATE: u64 = 4;
}

/// Outcome of a bisection on `h_end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub variant: Variant,
    pub n_data: usize,
    pub cycles: usize,
    pub h_start: f64,
    pub h_end: f64,
    pub target: f64,
    pub achieved: f64,
    pub iterations: usize,
    /// `(h_end, mmd_to_haar(S_T))` over the searched bracket.
    pub scan: Vec<(f64, f64)>,
    pub monotone: bool,
    pub converged: bool,
}

impl Calibration {
    /// Writes the calibrated scale back into a configuration.
    pub fn apply(&self, config: &mut RunConfig) {
        config.h_end = Some(self.h_end);
        config.h_start = self.h_start;
    }
}

const CALIBRATION_STEPS: usize = 20;
const SCAN_POINTS: usize = 9;
const MONOTONE_SLACK: f64 = 0.01;

fn endpoint_mmd(initial: &Ensemble, h_start: f64, h_end: f64, cycles: usize, source: &RandomSource) -> Result<f64> {
    let schedule = DiffusionSchedule::linspace(h_start, h_end, cycles, Variant::Original)?;
    let mut path = forward_diffuse(initial, &schedule, source)?;
    mmd_to_haar_analytic(&path.pop().expect("T+1 ensembles")).map(|e| e.value)
}

/// Starting ensemble of a variant's forward process and the source of its
/// scrambling angles, on the same streams the run itself uses.
fn diffusion_start(config: &RunConfig, variant: Variant) -> Result<(Ensemble, RandomSource)> {
    let src = RandomSource::new(config.seed);
    match variant {
        Variant::Original => Ok((
            ghz_ensemble(config.n_data, config.ensemble_size, &src.child(stream::TARGET))?,
            src.child(stream::DIFFUSE),
        )),
        Variant::Improved => {
            let src = src.child(stream::INITIAL);
            let start = near_zero_ensemble(config.n_data, config.ensemble_size, config.epsilon, &src.child(0))?;
            Ok((start, src.child(1)))
        }
    }
}

/// Bisection on `h_end ∈ [lo, hi]` for `mmd_to_haar(S_T) = target`, with the
/// variant's starting ensemble diffused under common random numbers so the
/// endpoint distance is a deterministic function of `h_end` and matches the
/// endpoint later seen by the run.
pub fn calibrate_h_end(config: &RunConfig, variant: Variant, target: f64, bracket: (f64, f64)) -> Result<Calibration> {
    let (mut lo, mut hi) = bracket;
    if !(0.0 <= lo && lo < hi && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad bracket {bracket:?}")));
    }
    let (initial, diffuse_src) = diffusion_start(config, variant)?;
    let eval = |h: f64| endpoint_mmd(&initial, config.h_start, h, config.cycles, &diffuse_src);

    let scan = (0..SCAN_POINTS)
        .into_par_iter()
        .map(|i| {
            let h = lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64;
            Ok((h, eval(h)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let monotone = scan.windows(2).all(|w| w[1].1 <= w[0].1 + MONOTONE_SLACK);
    if !(scan[0].1 >= target && scan[SCAN_POINTS - 1].1 <= target) {
        return Err(Error::InvalidArgument(format!(
            "target {target} not bracketed: mmd({lo}) = {}, mmd({hi}) = {}",
            scan[0].1,
            scan[SCAN_POINTS - 1].1
        )));
    }
    let mut achieved = f64::NAN;
    let mut h = 0.5 * (lo + hi);
    let mut iterations = 0;
    for _ in 0..CALIBRATION_STEPS {
        iterations += 1;
        h = 0.5 * (lo + hi);
        achieved = eval(h)?;
        if achieved > target {
            lo = h;
        } else {
            hi = h;
        }
        if (achieved - target).abs() <= 0.01 * target {
            break;
        }
    }
    Ok(Calibration {
        variant,
        n_data: config.n_data,
        cycles: config.cycles,
        h_start: config.h_start,
        h_end: h,
        target,
        achieved,
        iterations,
        scan,
        monotone,
        converged: (achieved - target).abs() <= 0.1 * target,
    })
}

/// Default calibration of a variant's schedule.
pub fn calibrate_default(config: &RunConfig, variant: Variant) -> Result<Calibration> {
    match variant {
        Variant::Original => calibrate_h_end(config, variant, 0.005, (config.h_start, 2.0 * ORIGINAL_H_END)),
        Variant::Improved => calibrate_h_end(config, variant, config.improved_target_mmd, (config.h_start, ORIGINAL_H_END)),
    }
}

/// Schedule for `variant`; calibrates the improved `h_end` when it is not set.
pub fn resolve_schedule(config: &RunConfig, variant: Variant) -> Result<DiffusionSchedule> {
    let h_end = match (config.h_end, variant) {
        (Some(h), _) => h,
        (None, Variant::Original) => ORIGINAL_H_END,
        (None, Variant::Improved) => calibrate_default(config, variant)?.h_end,
    };
    DiffusionSchedule::linspace(config.h_start, h_end, config.cycles, variant)
}

pub fn train_settings(config: &RunConfig, variant: Variant, schedule: DiffusionSchedule) -> TrainSettings {
    TrainSettings {
        n_data: config.n_data,
        n_ancilla: config.n_ancilla,
        n_layers: config.n_layers,
        epochs: config.epochs,
        lr: config.lr,
        generated_size: config.generated_size,
        variant,
        init: config.init_for(variant),
        schedule,
        epsilon: config.epsilon,
        max_cycles: None,
        track_quality: true,
    }
}

/// Real trajectory and backward starting ensemble of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRun {
    pub settings: TrainSettings,
    /// `S_0 … S_T`.
    pub real: Vec<Ensemble>,
    /// `S̃_T`, `|S̃|` members.
    pub initial: Ensemble,
    /// Distance to Haar of the real endpoint `S_T`.
    pub real_endpoint_mmd: f64,
    /// Distance to Haar of the `|S|`-member backward starting ensemble
    /// (the improved variant's forward endpoint).
    pub initial_mmd: f64,
}

/// Diffuses the GHZ target ensemble and draws the backward starting states.
/// For the improved variant, fails unless the forward endpoint of the
/// near-zero ensemble keeps at least `distance_floor` from the Haar ensemble.
pub fn prepare_run(config: &RunConfig, variant: Variant) -> Result<PreparedRun> {
    config.validate()?;
    let src = RandomSource::new(config.seed);
    let schedule = resolve_schedule(config, variant)?;
    let targets = ghz_ensemble(config.n_data, config.ensemble_size, &src.child(stream::TARGET))?;
    let real = forward_diffuse(&targets, &schedule, &src.child(stream::DIFFUSE))?;
    let settings = train_settings(config, variant, schedule);
    let pool = initial_denoise_input(&settings, config.ensemble_size, &src.child(stream::INITIAL))?;
    let real_endpoint_mmd = mmd_to_haar_analytic(real.last().expect("T+1 ensembles"))?.value;
    let initial_mmd = mmd_to_haar_analytic(&pool)?.value;
    if variant == Variant::Improved && initial_mmd < config.distance_floor {
        return Err(Error::InvalidArgument(format!(
            "improved schedule fell below the Haar-distance floor {}: {initial_mmd}",
            config.distance_floor
        )));
    }
    let initial = pool.select(&(0..config.generated_size).collect::<Vec<_>>())?;
    Ok(PreparedRun { settings, real, initial, real_endpoint_mmd, initial_mmd })
}

/// Forward trajectory of the near-zero starting ensemble under a schedule.
pub fn diffuse_near_zero(config: &RunConfig, schedule: &DiffusionSchedule) -> Result<Vec<Ensemble>> {
    let (start, src) = diffusion_start(config, Variant::Improved)?;
    forward_diffuse(&start, schedule, &src)
}

/// Real GHZ trajectory for a variant.
pub fn diffuse_targets(config: &RunConfig, schedule: &DiffusionSchedule) -> Result<Vec<Ensemble>> {
    let (targets, src) = diffusion_start(config, Variant::Original)?;
    forward_diffuse(&targets, schedule, &src)
}

/// Trains a prepared run, optionally limited to the first `max_cycles` cycles.
pub fn run_training(config: &RunConfig, prepared: &PreparedRun, max_cycles: Option<usize>) -> Result<TrainOutcome> {
    let mut settings = prepared.settings.clone();
    settings.max_cycles = max_cycles;
    let src = RandomSource::new(config.seed).child(stream::TRAIN);
    train(&settings, &prepared.real, &prepared.initial, &src)
}

/// Ensembles of a fresh `generation_size` generation run, starting ensemble
/// first and one entry per trained cycle after it.
pub fn generation_trace(config: &RunConfig, outcome: &TrainOutcome) -> Result<Vec<Ensemble>> {
    let src = RandomSource::new(config.seed).child(stream::GENERATE);
    let input = initial_denoise_input(&outcome.model.settings, config.generation_size, &src.child(0))?;
    generate_trace(&outcome.model, &input, &src.child(1))
}

/// KL to the target family along [`generation_trace`].
pub fn generation_kl_trace(config: &RunConfig, outcome: &TrainOutcome) -> Result<Vec<f64>> {
    generation_trace(config, outcome)?.iter().map(|e| kl_to_target(e, KL_BINS)).collect()
}

/// Gradient statistics of the first `config.sweep_cycles` cycles for one
/// register size.
pub fn grad_stats_training(config: &RunConfig, variant: Variant) -> Result<GradStats> {
    let prepared = prepare_run(config, variant)?;
    let outcome = run_training(config, &prepared, Some(config.sweep_cycles))?;
    grad_stats_from_records(&outcome.records, config.n_data)
}
