use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::Moments;
use crate::ansatz::{PqcParams, PqcShape};
use crate::duddpm::{loss_partial_shift, MetricRecord};
use crate::error::{Error, Result};
use crate::qsim::Ensemble;
use crate::random::{haar_state_with, sample_ghz, RandomSource};

/// Largest register used by the Haar-input gradient sweep.
pub const HAAR_GRAD_MAX_QUBITS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradStats {
    pub n_data: usize,
    /// Inclusive cycle interval the samples come from, when drawn from training.
    pub cycle_range: Option<(usize, usize)>,
    pub samples: usize,
    pub mean_abs_grad: f64,
    pub grad_mean: f64,
    pub grad_variance: f64,
    /// Standard error of `grad_mean` (or of `mean_abs_grad` for training stats).
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HaarGradSettings {
    pub n_data: usize,
    pub n_layers: usize,
    pub samples: usize,
    pub param_index: usize,
}

fn haar_gradient_sample(shape: &PqcShape, index: usize, source: &RandomSource) -> Result<f64> {
    let n = shape.n_total;
    let mut rng = source.rng();
    let input = Ensemble::new(vec![haar_state_with(n, &mut rng)?])?;
    let target = Ensemble::new(vec![sample_ghz(n, rng.random_range(0.0..std::f64::consts::TAU))?])?;
    let theta = (0..shape.param_count()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let params = PqcParams::from_vec(shape.clone(), theta)?;
    loss_partial_shift(&params, index, &input, &target, 0)
}

/// Gradient of the single-pair loss with respect to one fixed parameter,
/// sampled over Haar inputs, random GHZ targets and `N(0,1)` circuit
/// parameters, on a circuit without ancilla.
pub fn grad_stats_haar(settings: &HaarGradSettings, source: &RandomSource) -> Result<GradStats> {
    let n = settings.n_data;
    if n > HAAR_GRAD_MAX_QUBITS {
        return Err(Error::SubsystemTooLarge(n, HAAR_GRAD_MAX_QUBITS));
    }
    let shape = PqcShape::standard(n, settings.n_layers)?;
    if settings.param_index >= shape.param_count() {
        return Err(Error::Dimension { expected: shape.param_count(), actual: settings.param_index });
    }
    let grads = (0..settings.samples)
        .into_par_iter()
        .map(|i| haar_gradient_sample(&shape, settings.param_index, &source.child(i as u64)))
        .collect::<Result<Vec<f64>>>()?;
    let m = Moments::of(&grads)?;
    Ok(GradStats {
        n_data: n,
        cycle_range: None,
        samples: grads.len(),
        mean_abs_grad: grads.iter().map(|g| g.abs()).sum::<f64>() / grads.len() as f64,
        grad_mean: m.mean,
        grad_variance: m.variance,
        stderr: m.stderr(),
    })
}

/// Mean absolute gradient over every parameter and epoch of the given records.
///
/// Each record contributes its per-epoch mean; the standard error treats
/// epochs as samples.
pub fn grad_stats_from_records(records: &[MetricRecord], n_data: usize) -> Result<GradStats> {
    let values: Vec<f64> = records.iter().map(|r| r.grad_mean_abs).collect();
    let m = Moments::of(&values)?;
    let lo = records.iter().map(|r| r.cycle).min().expect("non-empty");
    let hi = records.iter().map(|r| r.cycle).max().expect("non-empty");
    Ok(GradStats {
        n_data,
        cycle_range: Some((lo, hi)),
        samples: values.len(),
        mean_abs_grad: m.mean,
        grad_mean: m.mean,
        grad_variance: m.variance,
        stderr: m.stderr(),
    })
}

/// `8 / (|S|⁴ (2^{2n} − 1))`.
pub fn variance_bound_theorem(n_data: usize, ensemble_size: usize) -> f64 {
    8.0 / ((ensemble_size as f64).powi(4) * (4f64.powi(n_data as i32) - 1.0))
}

/// `8 / (|S|⁴ (2^n − 1))`.
pub fn variance_bound_appendix(n_data: usize, ensemble_size: usize) -> f64 {
    8.0 / ((ensemble_size as f64).powi(4) * (2f64.powi(n_data as i32) - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n_data: usize,
    pub ensemble_size: usize,
    pub samples: usize,
    pub empirical_mean: f64,
    pub mean_stderr: f64,
    pub empirical_variance: f64,
    pub bound_theorem: f64,
    pub bound_appendix: f64,
    pub mean_pass: bool,
    pub appendix_pass: bool,
    pub theorem_pass: bool,
}

pub fn bound_report(stats: &GradStats, ensemble_size: usize) -> BoundReport {
    let bound_theorem = variance_bound_theorem(stats.n_data, ensemble_size);
    let bound_appendix = variance_bound_appendix(stats.n_data, ensemble_size);
    BoundReport {
        n_data: stats.n_data,
        ensemble_size,
        samples: stats.samples,
        empirical_mean: stats.grad_mean,
        mean_stderr: stats.stderr,
        empirical_variance: stats.grad_variance,
        bound_theorem,
        bound_appendix,
        mean_pass: stats.grad_mean.abs() <= 3.0 * stats.stderr,
        appendix_pass: stats.grad_variance <= bound_appendix,
        theorem_pass: stats.grad_variance <= bound_theorem,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duddpm::Variant;

    #[test]
    fn bounds_are_ordered() {
        for n in 1..10 {
            assert!(variance_bound_appendix(n, 1) >= variance_bound_theorem(n, 1));
        }
        assert_eq!(variance_bound_appendix(2, 1), 8.0 / 3.0);
        assert_eq!(variance_bound_theorem(2, 1), 8.0 / 15.0);
        assert_eq!(variance_bound_appendix(1, 2), 0.5);
    }

    #[test]
    fn haar_gradient_is_centred_and_bounded() {
        let settings = HaarGradSettings { n_data: 3, n_layers: 2, samples: 4000, param_index: 0 };
        let stats = grad_stats_haar(&settings, &RandomSource::new(1)).unwrap();
        let rep = bound_report(&stats, 1);
        assert!(rep.mean_pass, "{rep:?}");
        assert!(rep.appendix_pass);
        assert!(stats.grad_variance >= 0.0);
        assert!((stats.stderr - (stats.grad_variance / 4000.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn haar_gradient_matches_direct_shift() {
        // One sample recomputed by hand: ∂L = −(F⁺ − F⁻) for L = 2 − 2F.
        let src = RandomSource::new(9);
        let mut rng = src.child(0).rng();
        let input = haar_state_with(2, &mut rng).unwrap();
        let target = sample_ghz(2, rng.random_range(0.0..std::f64::consts::TAU)).unwrap();
        let shape = PqcShape::standard(2, 2).unwrap();
        let theta: Vec<f64> = (0..shape.param_count()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let params = PqcParams::from_vec(shape, theta).unwrap();
        let fid = |delta: f64| {
            let mut s = input.clone();
            crate::ansatz::apply_pqc(&mut s, &params.shifted(4, delta)).unwrap();
            s.fidelity(&target).unwrap()
        };
        let expected = -(fid(std::f64::consts::FRAC_PI_2) - fid(-std::f64::consts::FRAC_PI_2));
        let shape = PqcShape::standard(2, 2).unwrap();
        let first = haar_gradient_sample(&shape, 4, &src.child(0)).unwrap();
        assert!((first - expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_large_or_bad_index() {
        let s = HaarGradSettings { n_data: 9, n_layers: 1, samples: 2, param_index: 0 };
        assert!(grad_stats_haar(&s, &RandomSource::new(0)).is_err());
        let s = HaarGradSettings { n_data: 2, n_layers: 1, samples: 2, param_index: 6 };
        assert!(grad_stats_haar(&s, &RandomSource::new(0)).is_err());
    }

    #[test]
    fn training_stats_aggregate_records() {
        let rec = |cycle, g| MetricRecord {
            variant: Variant::Original,
            cycle,
            epoch: 0,
            loss: 0.0,
            grad_l2: 0.0,
            grad_max_abs: 0.0,
            grad_mean_abs: g,
            n_params: 3,
            kl: None,
            mmd_to_haar: None,
        };
        let stats = grad_stats_from_records(&[rec(9, 1.0), rec(8, 2.0), rec(8, 3.0)], 4).unwrap();
        assert_eq!(stats.mean_abs_grad, 2.0);
        assert_eq!(stats.cycle_range, Some((8, 9)));
        assert!((stats.stderr - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
