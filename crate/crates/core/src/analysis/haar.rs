use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::Moments;
use crate::duddpm::mmd;
use crate::error::{Error, Result};
use crate::qsim::{dot, Ensemble};
use crate::random::{haar_ensemble, RandomSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmdMode {
    Analytic,
    Sampled { haar_samples: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// `F̄_offdiag(S,S) − 1/N`: MMD to the Haar ensemble using the exact Haar
/// means `E|⟨ψ|φ⟩|² = 1/N` and a U-statistic for the self-term.
pub fn mmd_to_haar_analytic(ensemble: &Ensemble) -> Result<MmdEstimate> {
    let n = ensemble.len();
    if n < 2 {
        return Err(Error::InvalidArgument("mmd_to_haar needs at least two states".into()));
    }
    let states = ensemble.states();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| dot(states[i].amplitudes(), states[j].amplitudes()).norm_sqr())
                .collect()
        })
        .collect();
    let all: Vec<f64> = rows.iter().flatten().copied().collect();
    let pairs = Moments::of(&all)?;
    let row_means: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    let zeta1 = if n > 2 { Moments::of(&row_means)?.variance } else { 0.0 };
    let nf = n as f64;
    let var = (4.0 * (nf - 2.0) * zeta1 + 2.0 * pairs.variance) / (nf * (nf - 1.0));
    let dim = states[0].dim() as f64;
    Ok(MmdEstimate { value: pairs.mean - 1.0 / dim, stderr: var.max(0.0).sqrt() })
}

/// V-statistic MMD against `haar_samples` freshly drawn Haar states.
pub fn mmd_to_haar_sampled(ensemble: &Ensemble, haar_samples: usize, source: &RandomSource) -> Result<MmdEstimate> {
    if ensemble.len() < 2 {
        return Err(Error::InvalidArgument("mmd_to_haar needs at least two states".into()));
    }
    let haar = haar_ensemble(ensemble.n_qubits(), haar_samples, source)?;
    Ok(MmdEstimate { value: mmd(ensemble, &haar)?, stderr: 1.0 / (haar_samples as f64).sqrt() })
}

pub fn mmd_to_haar(ensemble: &Ensemble, mode: MmdMode, source: &RandomSource) -> Result<MmdEstimate> {
    match mode {
        MmdMode::Analytic => mmd_to_haar_analytic(ensemble),
        MmdMode::Sampled { haar_samples } => mmd_to_haar_sampled(ensemble, haar_samples, source),
    }
}

/// Deviations of sampled unitaries from the exact Haar moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub dim: usize,
    pub samples: usize,
    /// `max_ij |E[U_ij]|` (exact value 0).
    pub mean_error: f64,
    /// `max |E[U A U†] − Tr(A) I/N|` over entries, for a fixed `A = |0⟩⟨0|`.
    pub first_moment_error: f64,
    /// Largest deviation among the fourth-moment identities checked.
    pub fourth_moment_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Monte-Carlo check of first and (for `dim ≥ 2`) fourth moments.
///
/// Fourth-moment identities: `E|u_11|⁴ = 2/(N(N+1))`,
/// `E|u_11|²|u_22|² = 1/(N²−1)`, `E[u_11 u_22 ū_12 ū_21] = −1/(N(N²−1))`.
pub fn check_haar_moments<F>(dim: usize, samples: usize, source: &RandomSource, sampler: F) -> Result<MomentReport>
where
    F: Fn(usize, &mut rand_chacha::ChaCha8Rng) -> Result<DMatrix<Complex64>> + Sync,
{
    if dim < 2 || samples < 2 {
        return Err(Error::InvalidArgument("moment check needs dim ≥ 2 and two samples".into()));
    }
    let chunks = 64usize;
    let per = samples.div_ceil(chunks);
    let zero = Complex64::new(0.0, 0.0);
    let partials = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = source.child(c as u64).rng();
            let mut sum_u = DMatrix::from_element(dim, dim, zero);
            let mut sum_rho = DMatrix::from_element(dim, dim, zero);
            let mut f = [zero; 3];
            let count = per.min(samples.saturating_sub(c * per));
            for _ in 0..count {
                let u = sampler(dim, &mut rng)?;
                let col = u.column(0);
                sum_rho += col * col.adjoint();
                sum_u += &u;
                f[0] += Complex64::new(u[(0, 0)].norm_sqr().powi(2), 0.0);
                f[1] += Complex64::new(u[(0, 0)].norm_sqr() * u[(1, 1)].norm_sqr(), 0.0);
                f[2] += u[(0, 0)] * u[(1, 1)] * u[(0, 1)].conj() * u[(1, 0)].conj();
            }
            Ok((sum_u, sum_rho, f))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sum_u = DMatrix::from_element(dim, dim, zero);
    let mut sum_rho = DMatrix::from_element(dim, dim, zero);
    let mut f = [zero; 3];
    for (u, r, p) in partials {
        sum_u += u;
        sum_rho += r;
        for k in 0..3 {
            f[k] += p[k];
        }
    }
    let m = samples as f64;
    let n = dim as f64;
    let mean_error = sum_u.iter().map(|z| (z / m).norm()).fold(0.0, f64::max);
    let first_moment_error = sum_rho
        .iter()
        .enumerate()
        .map(|(idx, z)| {
            let diag = idx % dim == idx / dim;
            (z / m - Complex64::new(if diag { 1.0 / n } else { 0.0 }, 0.0)).norm()
        })
        .fold(0.0, f64::max);
    let exact = [2.0 / (n * (n + 1.0)), 1.0 / (n * n - 1.0), -1.0 / (n * (n * n - 1.0))];
    let fourth_moment_error = f
        .iter()
        .zip(exact)
        .map(|(z, e)| (z / m - Complex64::new(e, 0.0)).norm())
        .fold(0.0, f64::max);
    let tolerance = 5.0 / m.sqrt();
    Ok(MomentReport {
        dim,
        samples,
        mean_error,
        first_moment_error,
        fourth_moment_error,
        tolerance,
        pass: mean_error <= tolerance && first_moment_error <= tolerance && fourth_moment_error <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::StateVector;
    use crate::random::haar_unitary_with;

    #[test]
    fn haar_ensemble_is_at_zero_distance() {
        for (n, seed) in [(2, 1), (4, 2), (3, 3)] {
            let ens = haar_ensemble(n, 200, &RandomSource::new(seed)).unwrap();
            let est = mmd_to_haar_analytic(&ens).unwrap();
            assert!(est.value.abs() <= 3.0 * est.stderr, "{est:?}");
            assert!(est.stderr > 0.0);
        }
    }

    #[test]
    fn repeated_basis_state_distance() {
        let ens = Ensemble::new(vec![StateVector::zero(3).unwrap(); 10]).unwrap();
        let est = mmd_to_haar_analytic(&ens).unwrap();
        assert!((est.value - (1.0 - 1.0 / 8.0)).abs() < 1e-14);
        assert!(mmd_to_haar_analytic(&Ensemble::new(vec![StateVector::zero(1).unwrap()]).unwrap()).is_err());
    }

    #[test]
    fn sampled_mode_tracks_analytic_mode() {
        let src = RandomSource::new(7);
        let ens = crate::random::ghz_ensemble(3, 100, &src.child(0)).unwrap();
        let a = mmd_to_haar(&ens, MmdMode::Analytic, &src).unwrap();
        let m = 2000;
        let s = mmd_to_haar(&ens, MmdMode::Sampled { haar_samples: m }, &src.child(1)).unwrap();
        assert!((a.value - s.value).abs() < 5.0 / (m as f64).sqrt(), "{a:?} {s:?}");
    }

    #[test]
    fn haar_sampler_passes_moment_checks() {
        let rep = check_haar_moments(4, 100_000, &RandomSource::new(5), haar_unitary_with).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn biased_phases_fail_moment_checks() {
        // Rotating each column so its diagonal entry is real and positive
        // keeps unitarity but breaks invariance: E[U_jj] > 0.
        let biased = |d: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let mut u = haar_unitary_with(d, rng)?;
            for j in 0..d {
                let phase = u[(j, j)].conj() / u[(j, j)].norm();
                for i in 0..d {
                    u[(i, j)] *= phase;
                }
            }
            Ok(u)
        };
        let rep = check_haar_moments(4, 100_000, &RandomSource::new(5), biased).unwrap();
        assert!(!rep.pass, "{rep:?}");
        assert!(rep.mean_error > 10.0 * rep.tolerance);
    }
}
