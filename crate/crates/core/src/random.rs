//! Seedable random sources and the state samplers used by the pipeline.
//!
//! Every sampler takes a [`RandomSource`], a `(seed, stream_id)` pair. Parallel
//! workers never share a generator: they derive children with
//! [`RandomSource::child`], so results do not depend on thread scheduling.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::{Axis, Ensemble, StateVector};

/// Largest matrix dimension accepted by [`haar_unitary`].
pub const MAX_HAAR_DIM: usize = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomSource {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream_id: 0 }
    }

    pub fn with_stream(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Derives an independent source for sub-task `index`.
    pub fn child(&self, index: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(1))),
        }
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

pub(crate) fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Ginibre matrix: i.i.d. standard complex Gaussian entries.
pub fn ginibre<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<Complex64> {
    DMatrix::from_fn(dim, dim, |_, _| complex_normal(rng))
}

fn check_haar_dim(dim: usize) -> Result<()> {
    if !(2..=MAX_HAAR_DIM).contains(&dim) {
        return Err(Error::InvalidArgument(format!(
            "Haar dimension {dim} outside 2..={MAX_HAAR_DIM}"
        )));
    }
    Ok(())
}

/// Haar-random unitary via Ginibre + QR, with each column of Q rescaled by
/// the phase of the matching diagonal entry of R.
pub fn haar_unitary_with<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<DMatrix<Complex64>> {
    check_haar_dim(dim)?;
    let qr = ginibre(dim, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        let d = r[(j, j)];
        let norm = d.norm();
        let phase = if norm > 0.0 { d / norm } else { Complex64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    Ok(q)
}

pub fn haar_unitary(dim: usize, source: &RandomSource) -> Result<DMatrix<Complex64>> {
    haar_unitary_with(dim, &mut source.rng())
}

/// Haar-random pure state: a normalized complex Gaussian vector, which has
/// the same law as the first column of a Haar unitary.
pub fn haar_state_with<R: Rng + ?Sized>(n_qubits: usize, rng: &mut R) -> Result<StateVector> {
    StateVector::check_qubits(n_qubits)?;
    let dim = 1usize << n_qubits;
    let amps: Vec<Complex64> = (0..dim).map(|_| complex_normal(rng)).collect();
    StateVector::from_unnormalized(n_qubits, amps)
}

pub fn haar_state(n_qubits: usize, source: &RandomSource) -> Result<StateVector> {
    haar_state_with(n_qubits, &mut source.rng())
}

/// `count` Haar states, member `i` drawn from `source.child(i)`.
pub fn haar_ensemble(n_qubits: usize, count: usize, source: &RandomSource) -> Result<Ensemble> {
    let states = (0..count)
        .map(|i| haar_state(n_qubits, &source.child(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(states)
}

/// Extended GHZ state `cos θ |0…0⟩ + sin θ |1…1⟩`.
pub fn sample_ghz(n_data: usize, theta: f64) -> Result<StateVector> {
    StateVector::check_qubits(n_data)?;
    let dim = 1usize << n_data;
    let mut amps = vec![Complex64::new(0.0, 0.0); dim];
    amps[0] += Complex64::new(theta.cos(), 0.0);
    amps[dim - 1] += Complex64::new(theta.sin(), 0.0);
    StateVector::from_amplitudes(n_data, amps)
}

/// Extended GHZ ensemble with θ uniform on [0, 2π).
pub fn ghz_ensemble(n_data: usize, count: usize, source: &RandomSource) -> Result<Ensemble> {
    if count == 0 {
        return Err(Error::Empty("GHZ ensemble"));
    }
    let mut rng = source.rng();
    let states = (0..count)
        .map(|_| sample_ghz(n_data, rng.random_range(0.0..2.0 * PI)))
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(states)
}

/// States near `|0…0⟩`: each qubit gets R_X, R_Y, R_Z with angles U(−ε, ε).
pub fn near_zero_ensemble(
    n_data: usize,
    count: usize,
    epsilon: f64,
    source: &RandomSource,
) -> Result<Ensemble> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    if count == 0 {
        return Err(Error::Empty("near-zero ensemble"));
    }
    let states = (0..count)
        .map(|i| {
            let mut rng = source.child(i as u64).rng();
            let mut state = StateVector::zero(n_data)?;
            for q in 0..n_data {
                for axis in Axis::ALL {
                    state.apply_rotation(q, axis, rng.random_range(-epsilon..epsilon))?;
                }
            }
            Ok(state)
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(states)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_error(u: &DMatrix<Complex64>) -> f64 {
        let prod = u.adjoint() * u;
        let n = u.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let src = RandomSource::new(11);
        for i in 0..100 {
            let u = haar_unitary(8, &src.child(i)).unwrap();
            assert!(identity_error(&u) < 1e-10);
        }
    }

    #[test]
    fn haar_dim_bounds() {
        let src = RandomSource::new(1);
        assert!(haar_unitary(1, &src).is_err());
        assert!(haar_unitary(MAX_HAAR_DIM + 1, &src).is_err());
    }

    #[test]
    fn same_source_same_draws() {
        let a = haar_ensemble(3, 5, &RandomSource::with_stream(42, 7)).unwrap();
        let b = haar_ensemble(3, 5, &RandomSource::with_stream(42, 7)).unwrap();
        for (x, y) in a.states().iter().zip(b.states()) {
            assert_eq!(x.amplitudes(), y.amplitudes());
        }
        let c = haar_ensemble(3, 5, &RandomSource::with_stream(42, 8)).unwrap();
        assert_ne!(a.states()[0].amplitudes(), c.states()[0].amplitudes());
    }

    #[test]
    fn ghz_special_angles() {
        let s = sample_ghz(3, 0.0).unwrap();
        assert!((s.amplitudes()[0].re - 1.0).abs() < 1e-15);
        let s = sample_ghz(3, PI / 2.0).unwrap();
        assert!((s.amplitudes()[7].re - 1.0).abs() < 1e-15);
        assert!(s.amplitudes()[0].norm() < 1e-15);
        let s = sample_ghz(2, PI / 4.0).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.amplitudes()[0].re - h).abs() < 1e-15);
        assert!((s.amplitudes()[3].re - h).abs() < 1e-15);
        assert!(s.amplitudes()[1].norm() == 0.0 && s.amplitudes()[2].norm() == 0.0);
    }

    #[test]
    fn ghz_ensemble_support_and_mean_overlap() {
        let ens = ghz_ensemble(3, 10_000, &RandomSource::new(5)).unwrap();
        let mut mean0 = 0.0;
        for s in ens.states() {
            for (k, a) in s.amplitudes().iter().enumerate() {
                if k != 0 && k != 7 {
                    assert_eq!(a.norm(), 0.0);
                }
            }
            mean0 += s.amplitudes()[0].norm_sqr();
        }
        mean0 /= ens.len() as f64;
        // Var(cos²θ) = 1/8, so stderr ≈ 0.0035.
        assert!((mean0 - 0.5).abs() < 0.015, "{mean0}");
    }

    #[test]
    fn near_zero_limits() {
        let ens = near_zero_ensemble(4, 50, 1e-9, &RandomSource::new(3)).unwrap();
        let zero = StateVector::zero(4).unwrap();
        for s in ens.states() {
            assert!(zero.fidelity(s).unwrap() >= 1.0 - 1e-12);
            assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        }
        let ens = near_zero_ensemble(4, 500, 0.1, &RandomSource::new(3)).unwrap();
        let mean: f64 =
            ens.states().iter().map(|s| zero.fidelity(s).unwrap()).sum::<f64>() / ens.len() as f64;
        assert!(mean >= 0.99, "{mean}");
        assert!(near_zero_ensemble(2, 3, 0.0, &RandomSource::new(0)).is_err());
    }
}
