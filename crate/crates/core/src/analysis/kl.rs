use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::qsim::{Ensemble, StateVector};

pub const KL_BINS: usize = 20;
const SMOOTHING: f64 = 1e-9;

/// `atan2(|⟨1…1|ψ⟩|, |⟨0…0|ψ⟩|)`, the GHZ angle folded into `[0, π/2]`.
pub fn fold_angle(state: &StateVector) -> f64 {
    let amps = state.amplitudes();
    amps[amps.len() - 1].norm().atan2(amps[0].norm())
}

/// KL divergence of the folded-angle histogram of `ensemble` from the uniform
/// law on `[0, π/2]`, which is the image of the GHZ target family.
pub fn kl_to_target(ensemble: &Ensemble, bins: usize) -> Result<f64> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be positive".into()));
    }
    let mut counts = vec![0usize; bins];
    for s in ensemble.states() {
        let x = fold_angle(s) / FRAC_PI_2;
        counts[((x * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let n = ensemble.len() as f64;
    let q = 1.0 / bins as f64;
    let norm = 1.0 + bins as f64 * SMOOTHING;
    Ok(counts
        .iter()
        .map(|&c| {
            let p = (c as f64 / n + SMOOTHING) / norm;
            p * (p / q).ln()
        })
        .sum::<f64>()
        .max(0.0))
}
