//! Verification and diagnostics: gradient statistics, bound checks,
//! distance-to-Haar and target-distribution KL metrics.

mod bp;
mod haar;
mod kl;
mod stats;
mod theorem2;

pub use bp::{
    bound_report, grad_stats_from_records, grad_stats_haar, variance_bound_appendix, variance_bound_theorem,
    BoundReport, GradStats, HaarGradSettings,
};
pub use haar::{
    check_haar_moments, mmd_to_haar, mmd_to_haar_analytic, mmd_to_haar_sampled, MmdEstimate, MmdMode,
    MomentReport,
};
pub use kl::{fold_angle, kl_to_target, KL_BINS};
pub use stats::{kendall_tau, slope, KendallResult, Moments};
pub use theorem2::{
    expected_cos_sq, expected_sin_sq, theorem2_check, Theorem2Instance, Theorem2Report, Theorem2Row,
    Theorem2Settings,
};
