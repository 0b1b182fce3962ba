//! Sequential cycle-by-cycle training of the denoiser chain and sampled generation.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, Adam, AdamState};
use super::gradient::loss_and_gradient;
use super::loss::denoise_step_sampled;
use super::schedule::{forward_diffuse, DiffusionSchedule, Variant};
use crate::analysis::{kl_to_target, mmd_to_haar_analytic};
use crate::ansatz::{PqcParams, PqcShape};
use crate::error::{Error, Result};
use crate::qsim::Ensemble;
use crate::random::{haar_ensemble, near_zero_ensemble, RandomSource};

/// Parameter initialization for each cycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitMode {
    Normal { std: f64 },
    Uniform { scale: f64 },
}

impl InitMode {
    fn draw<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<f64>> {
        match *self {
            InitMode::Normal { std } => {
                let dist = Normal::new(0.0, std)
                    .map_err(|e| Error::InvalidArgument(format!("init std {std}: {e}")))?;
                Ok((0..count).map(|_| dist.sample(rng)).collect())
            }
            InitMode::Uniform { scale } if scale > 0.0 && scale.is_finite() => {
                Ok((0..count).map(|_| rng.random_range(-scale..scale)).collect())
            }
            InitMode::Uniform { scale } => Err(Error::InvalidArgument(format!("init scale {scale}"))),
        }
    }
}

/// Everything the trainer and generator need besides the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub n_data: usize,
    pub n_ancilla: usize,
    pub n_layers: usize,
    pub epochs: usize,
    pub lr: f64,
    /// `|S̃|`: generated ensemble size and target subset size.
    pub generated_size: usize,
    pub variant: Variant,
    pub init: InitMode,
    /// Schedule used to build the improved variant's starting ensemble.
    pub schedule: DiffusionSchedule,
    pub epsilon: f64,
    /// Train only the first `max_cycles` cycles (counting from `t = T−1`).
    pub max_cycles: Option<usize>,
    /// Attach KL and MMD-to-Haar of each cycle's output to its last record.
    pub track_quality: bool,
}

impl TrainSettings {
    pub fn shape(&self) -> Result<PqcShape> {
        PqcShape::standard(self.n_data + self.n_ancilla, self.n_layers)
    }
}

/// One epoch of one cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub variant: Variant,
    pub cycle: usize,
    pub epoch: usize,
    pub loss: f64,
    pub grad_l2: f64,
    pub grad_max_abs: f64,
    pub grad_mean_abs: f64,
    pub n_params: usize,
    pub kl: Option<f64>,
    pub mmd_to_haar: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleState {
    pub cycle: usize,
    pub params: PqcParams,
    pub adam: AdamState,
}

/// Trained denoisers, ordered as trained (`t = T−1` first).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub cycles: Vec<CycleState>,
    pub lr: f64,
    pub epoch: usize,
}

/// A trained chain ready for generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub settings: TrainSettings,
    pub state: TrainState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub records: Vec<MetricRecord>,
    /// `S̃_T, S̃_{T−1}, …` as produced during training.
    pub generated: Vec<Ensemble>,
}

/// Starting ensemble of the backward process: Haar states for the original
/// variant, near-zero states pushed through the forward schedule for the
/// improved one.
pub fn initial_denoise_input(settings: &TrainSettings, count: usize, source: &RandomSource) -> Result<Ensemble> {
    match settings.variant {
        Variant::Original => haar_ensemble(settings.n_data, count, source),
        Variant::Improved => {
            let start = near_zero_ensemble(settings.n_data, count, settings.epsilon, &source.child(0))?;
            let mut path = forward_diffuse(&start, &settings.schedule, &source.child(1))?;
            Ok(path.pop().expect("forward_diffuse returns T+1 ensembles"))
        }
    }
}

fn sampled_step(input: &Ensemble, params: &PqcParams, n_ancilla: usize, source: &RandomSource) -> Result<Ensemble> {
    let states = input
        .states()
        .par_iter()
        .enumerate()
        .map(|(i, s)| denoise_step_sampled(s, params, n_ancilla, &mut source.child(i as u64).rng()))
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(states)
}

fn grad_summary(grad: &[f64]) -> (f64, f64, f64) {
    let l2 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let max = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mean = grad.iter().map(|g| g.abs()).sum::<f64>() / grad.len() as f64;
    (l2, max, mean)
}

/// Trains cycles `t = T−1, …, 0` in sequence.
///
/// `real` holds `S_0 … S_T`; cycle `t` maps the generated `S̃_{t+1}` towards
/// a fresh subset of `S_t` at every epoch. `initial` is `S̃_T`.
pub fn train(
    settings: &TrainSettings,
    real: &[Ensemble],
    initial: &Ensemble,
    source: &RandomSource,
) -> Result<TrainOutcome> {
    if real.len() < 2 {
        return Err(Error::Empty("real trajectory"));
    }
    if initial.len() != settings.generated_size {
        return Err(Error::Dimension { expected: settings.generated_size, actual: initial.len() });
    }
    if real.iter().any(|e| e.len() < settings.generated_size || e.n_qubits() != settings.n_data)
        || initial.n_qubits() != settings.n_data
    {
        return Err(Error::InvalidArgument(
            "real ensembles must match n_data and hold at least |S̃| members".into(),
        ));
    }
    let total_cycles = real.len() - 1;
    let n_cycles = settings.max_cycles.map_or(total_cycles, |m| m.min(total_cycles));
    let shape = settings.shape()?;
    let optimizer = Adam::new(settings.lr);

    let mut records = Vec::with_capacity(n_cycles * settings.epochs);
    let mut cycles = Vec::with_capacity(n_cycles);
    let mut generated = vec![initial.clone()];
    let mut current = initial.clone();

    for step in 0..n_cycles {
        let t = total_cycles - 1 - step;
        let cycle_src = source.child(t as u64);
        let theta = settings.init.draw(shape.param_count(), &mut cycle_src.child(0).rng())?;
        let mut params = PqcParams::from_vec(shape.clone(), theta)?;
        let mut adam = AdamState::new(shape.param_count());
        let mut subset_rng = cycle_src.child(1).rng();
        let pool = &real[t];

        for epoch in 0..settings.epochs {
            let picks = sample_indices(&mut subset_rng, pool.len(), settings.generated_size).into_vec();
            let targets = pool.select(&picks)?;
            let (loss, grad) = loss_and_gradient(&params, &current, &targets, settings.n_ancilla)?;
            let (grad_l2, grad_max_abs, grad_mean_abs) = grad_summary(&grad);
            records.push(MetricRecord {
                variant: settings.variant,
                cycle: t,
                epoch,
                loss,
                grad_l2,
                grad_max_abs,
                grad_mean_abs,
                n_params: grad.len(),
                kl: None,
                mmd_to_haar: None,
            });
            adam_step(&optimizer, &mut adam, params.theta_mut(), &grad)?;
        }

        current = sampled_step(&current, &params, settings.n_ancilla, &cycle_src.child(2))?;
        if settings.track_quality && settings.epochs > 0 {
            let last = records.last_mut().expect("epochs > 0");
            last.kl = Some(kl_to_target(&current, crate::analysis::KL_BINS)?);
            last.mmd_to_haar = Some(mmd_to_haar_analytic(&current)?.value);
        }
        generated.push(current.clone());
        cycles.push(CycleState { cycle: t, params, adam });
    }

    let state = TrainState { cycles, lr: settings.lr, epoch: settings.epochs };
    Ok(TrainOutcome { model: TrainedModel { settings: settings.clone(), state }, records, generated })
}

/// Runs the sampled chain from `input` through every trained cycle and
/// returns each intermediate ensemble, `input` first.
pub fn generate_trace(model: &TrainedModel, input: &Ensemble, source: &RandomSource) -> Result<Vec<Ensemble>> {
    let mut trace = vec![input.clone()];
    let mut current = input.clone();
    for cycle in &model.state.cycles {
        current = sampled_step(&current, &cycle.params, model.settings.n_ancilla, &source.child(cycle.cycle as u64))?;
        trace.push(current.clone());
    }
    Ok(trace)
}

/// Draws `count` fresh starting states and returns the final generated ensemble.
pub fn generate(model: &TrainedModel, count: usize, source: &RandomSource) -> Result<Ensemble> {
    let input = initial_denoise_input(&model.settings, count, &source.child(0))?;
    let mut trace = generate_trace(model, &input, &source.child(1))?;
    Ok(trace.pop().expect("trace holds the input"))
}
