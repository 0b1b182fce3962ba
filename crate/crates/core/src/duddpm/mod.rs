//! Denoising-diffusion pipeline: forward scrambling, MMD loss, gradients,
//! optimisation, cycle-by-cycle training and generation.

mod adam;
mod gradient;
mod loss;
mod schedule;
mod train;

pub use adam::{adam_step, Adam, AdamState};
pub use gradient::{
    loss_and_gradient, loss_gradient_analytic, loss_gradient_shift, loss_partial_shift, AnalyticTerms,
};
pub use loss::{
    attach_ancilla, cycle_loss, denoise_joint, denoise_step_expected, denoise_step_sampled, mean_fidelity, mmd,
};
pub use schedule::{forward_diffuse, DiffusionSchedule, Variant};
pub use train::{
    generate, generate_trace, initial_denoise_input, train, CycleState, InitMode, MetricRecord, TrainOutcome,
    TrainSettings, TrainState, TrainedModel,
};
