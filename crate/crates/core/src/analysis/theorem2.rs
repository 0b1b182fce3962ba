//! Small-angle lower bound on the mean squared gradient of
//! `f(θ) = Tr[O V(θ) ρ V(θ)†]`, `V(θ) = Π_l W_l exp(−iθ_l H_l/2)`,
//! with `O = I ⊗ |ψ⟩⟨ψ|` and `ρ = |0⟩⟨0| ⊗ |ψ̃⟩⟨ψ̃|` (first qubit ancilla).

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::Moments;
use crate::error::{Error, Result};
use crate::qsim::Axis;
use crate::random::{haar_state_with, haar_unitary_with, RandomSource};

pub const THEOREM2_MAX_QUBITS: usize = 3;

/// Absolute slack for instances where both sides vanish up to round-off.
const ROUNDOFF: f64 = 1e-12;

/// `E[cos² x]` for `x ~ U(−s, s)`.
pub fn expected_cos_sq(s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        0.5 * (1.0 + (2.0 * s).sin() / (2.0 * s))
    }
}

/// `E[sin² x]` for `x ~ U(−s, s)`.
pub fn expected_sin_sq(s: f64) -> f64 {
    1.0 - expected_cos_sq(s)
}

fn pauli_2x2(p: usize) -> DMatrix<Complex64> {
    match p {
        0 => DMatrix::identity(2, 2),
        _ => DMatrix::from_row_slice(2, 2, &Axis::ALL[p - 1].pauli().concat()),
    }
}

/// Pauli word from its base-4 code, most significant digit on qubit 0.
fn pauli_word(n: usize, code: usize) -> (DMatrix<Complex64>, String) {
    let mut m = DMatrix::identity(1, 1);
    let mut label = String::with_capacity(n);
    for q in 0..n {
        let p = (code >> (2 * (n - 1 - q))) & 3;
        m = m.kronecker(&pauli_2x2(p));
        label.push(['I', 'X', 'Y', 'Z'][p]);
    }
    (m, label)
}

/// One random instance: Haar `W_l`, non-identity Pauli-word `H_l`, Haar data states.
#[derive(Debug, Clone)]
pub struct Theorem2Instance {
    pub n_total: usize,
    pub w: Vec<DMatrix<Complex64>>,
    pub h: Vec<DMatrix<Complex64>>,
    pub h_labels: Vec<String>,
    /// Input `|0⟩ ⊗ |ψ̃⟩`.
    pub input: DVector<Complex64>,
    /// `O = I ⊗ |ψ⟩⟨ψ|`.
    pub observable: DMatrix<Complex64>,
    pub k: usize,
}

impl Theorem2Instance {
    pub fn random<R: Rng + ?Sized>(n_total: usize, n_layers: usize, rng: &mut R) -> Result<Self> {
        if !(2..=THEOREM2_MAX_QUBITS).contains(&n_total) {
            return Err(Error::SubsystemTooLarge(n_total, THEOREM2_MAX_QUBITS));
        }
        if n_layers == 0 {
            return Err(Error::Empty("theorem-2 circuit"));
        }
        let dim = 1usize << n_total;
        let mut w = Vec::with_capacity(n_layers);
        let mut h = Vec::with_capacity(n_layers);
        let mut h_labels = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            w.push(haar_unitary_with(dim, rng)?);
            let (m, label) = pauli_word(n_total, rng.random_range(1..dim * dim));
            h.push(m);
            h_labels.push(label);
        }
        let psi_tilde = haar_state_with(n_total - 1, rng)?;
        let psi = haar_state_with(n_total - 1, rng)?;
        let mut input = DVector::zeros(dim);
        for (i, a) in psi_tilde.amplitudes().iter().enumerate() {
            input[i] = *a;
        }
        let pv = DVector::from_column_slice(psi.amplitudes());
        let observable = DMatrix::<Complex64>::identity(2, 2).kronecker(&(&pv * pv.adjoint()));
        let k = rng.random_range(0..n_layers);
        Ok(Self { n_total, w, h, h_labels, input, observable, k })
    }

    pub fn n_layers(&self) -> usize {
        self.w.len()
    }

    /// `V(θ)|0,ψ̃⟩`.
    pub fn output(&self, theta: &[f64]) -> DVector<Complex64> {
        let mut v = self.input.clone();
        for ((w, h), &t) in self.w.iter().zip(&self.h).zip(theta) {
            let rotated = &v * Complex64::new((t / 2.0).cos(), 0.0) - h * &v * Complex64::new(0.0, (t / 2.0).sin());
            v = w * rotated;
        }
        v
    }

    pub fn f(&self, theta: &[f64]) -> f64 {
        let v = self.output(theta);
        (v.adjoint() * &self.observable * &v)[(0, 0)].re
    }

    /// `∂f/∂θ_k` by the two-term shift rule (exact for unitary Hermitian `H_k`).
    pub fn grad(&self, theta: &[f64], k: usize) -> f64 {
        let mut plus = theta.to_vec();
        let mut minus = theta.to_vec();
        plus[k] += FRAC_PI_2;
        minus[k] -= FRAC_PI_2;
        0.5 * (self.f(&plus) - self.f(&minus))
    }

    /// `½ Tr[W_{k−1:1} ρ W†_{k−1:1} [H_k, W†_{L:k} O W_{L:k} H_k]]` at θ = 0.
    pub fn hessian_kk(&self) -> f64 {
        let k = self.k;
        let dim = self.input.len();
        let mut before = DMatrix::<Complex64>::identity(dim, dim);
        for w in &self.w[..k] {
            before = w * before;
        }
        let mut after = DMatrix::<Complex64>::identity(dim, dim);
        for w in &self.w[k..] {
            after = w * after;
        }
        let rho_in = &self.input * self.input.adjoint();
        let rho = &before * rho_in * before.adjoint();
        let o = after.adjoint() * &self.observable * &after;
        let h = &self.h[k];
        let oh = &o * h;
        let comm = h * &oh - &oh * h;
        0.5 * (rho * comm).trace().re
    }

    /// Independent Hessian value: `f` is `a + b cos θ_k + c sin θ_k` along
    /// `θ_k`, so `f''(0) = (f(π) − f(0))/2`.
    pub fn hessian_kk_oracle(&self) -> f64 {
        let zero = vec![0.0; self.n_layers()];
        let mut pi = zero.clone();
        pi[self.k] = std::f64::consts::PI;
        0.5 * (self.f(&pi) - self.f(&zero))
    }

    /// Right-hand side of the bound for per-layer half-widths `scales`.
    pub fn rhs(&self, scales: &[f64]) -> f64 {
        let k = self.k;
        let g0 = self.grad(&vec![0.0; self.n_layers()], k);
        let others: f64 = scales.iter().enumerate().filter(|(l, _)| *l != k).map(|(_, &s)| expected_cos_sq(s)).product();
        g0 * g0 * others * expected_cos_sq(scales[k]) + self.hessian_kk().powi(2) * expected_sin_sq(scales[k]) * others
    }

    /// Monte-Carlo `E[(∂f/∂θ_k)²]` with antithetic pairs `(θ, −θ)`.
    /// Returns the mean and its standard error over pairs.
    pub fn lhs<R: Rng + ?Sized>(&self, scales: &[f64], pairs: usize, rng: &mut R) -> Result<(f64, f64)> {
        let values: Vec<f64> = (0..pairs)
            .map(|_| {
                let theta: Vec<f64> =
                    scales.iter().map(|&s| if s > 0.0 { rng.random_range(-s..s) } else { 0.0 }).collect();
                let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
                0.5 * (self.grad(&theta, self.k).powi(2) + self.grad(&neg, self.k).powi(2))
            })
            .collect();
        let m = Moments::of(&values)?;
        Ok((m.mean, m.stderr()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Settings {
    pub n_total: usize,
    pub n_layers: usize,
    /// One half-width per layer.
    pub scales: Vec<f64>,
    /// θ draws per instance (antithetic pairs count as two).
    pub samples: usize,
    pub instances: usize,
    /// Half-width of the small-angle equality check.
    pub limit_scale: f64,
    pub limit_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Row {
    pub instance: usize,
    pub k: usize,
    pub generator: String,
    pub grad0: f64,
    pub hessian_kk: f64,
    pub lhs: f64,
    pub stderr: f64,
    pub rhs: f64,
    pub pass: bool,
    /// `|LHS − RHS|` at the small-angle limit scale.
    pub limit_gap: f64,
    pub limit_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub rows: Vec<Theorem2Row>,
    pub all_pass: bool,
    pub limit_pass: bool,
}

pub fn theorem2_check(settings: &Theorem2Settings, source: &RandomSource) -> Result<Theorem2Report> {
    if settings.scales.len() != settings.n_layers {
        return Err(Error::Dimension { expected: settings.n_layers, actual: settings.scales.len() });
    }
    if settings.scales.iter().chain([&settings.limit_scale]).any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidArgument("scales must be positive".into()));
    }
    let pairs = (settings.samples / 2).max(2);
    let rows = (0..settings.instances)
        .into_par_iter()
        .map(|i| {
            let src = source.child(i as u64);
            let inst = Theorem2Instance::random(settings.n_total, settings.n_layers, &mut src.child(0).rng())?;
            let (lhs, stderr) = inst.lhs(&settings.scales, pairs, &mut src.child(1).rng())?;
            let rhs = inst.rhs(&settings.scales);
            let small = vec![settings.limit_scale; settings.n_layers];
            let (lhs_small, _) = inst.lhs(&small, pairs, &mut src.child(2).rng())?;
            let limit_gap = (lhs_small - inst.rhs(&small)).abs();
            Ok(Theorem2Row {
                instance: i,
                k: inst.k,
                generator: inst.h_labels[inst.k].clone(),
                grad0: inst.grad(&vec![0.0; settings.n_layers], inst.k),
                hessian_kk: inst.hessian_kk(),
                lhs,
                stderr,
                rhs,
                pass: lhs >= rhs - 3.0 * stderr - ROUNDOFF,
                limit_gap,
                limit_pass: limit_gap <= settings.limit_tolerance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let all_pass = rows.iter().all(|r| r.pass);
    let limit_pass = rows.iter().all(|r| r.limit_pass);
    Ok(Theorem2Report { rows, all_pass, limit_pass })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration.
    fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
        (1..=n)
            .map(|i| {
                let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
                let mut dp = 0.0;
                for _ in 0..100 {
                    let (mut p0, mut p1) = (1.0, x);
                    for j in 2..=n {
                        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                    let dx = p1 / dp;
                    x -= dx;
                    if dx.abs() < 1e-16 {
                        break;
                    }
                }
                (x, 2.0 / ((1.0 - x * x) * dp * dp))
            })
            .collect()
    }

    fn quadrature_lhs(inst: &Theorem2Instance, scales: &[f64]) -> f64 {
        let nodes = gauss_legendre(12);
        let l = inst.n_layers();
        let mut total = 0.0;
        let mut idx = vec![0usize; l];
        loop {
            let mut weight = 1.0;
            let theta: Vec<f64> = idx
                .iter()
                .zip(scales)
                .map(|(&i, &s)| {
                    weight *= nodes[i].1 / 2.0;
                    nodes[i].0 * s
                })
                .collect();
            total += weight * inst.grad(&theta, inst.k).powi(2);
            let mut d = 0;
            while d < l {
                idx[d] += 1;
                if idx[d] < nodes.len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == l {
                return total;
            }
        }
    }

    #[test]
    fn quadrature_rule_is_exact_on_polynomials() {
        let nodes = gauss_legendre(12);
        let int: f64 = nodes.iter().map(|(x, w)| w * x.powi(10)).sum();
        assert!((int - 2.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn cos_sq_integral_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in [0.3, 1.0] {
            let n = 200_000;
            let draws: Vec<f64> = (0..n).map(|_| rng.random_range(-s..s)).collect();
            let cos: Vec<f64> = draws.iter().map(|x: &f64| x.cos().powi(2)).collect();
            let m = Moments::of(&cos).unwrap();
            assert!((m.mean - expected_cos_sq(s)).abs() < 4.0 * m.stderr());
            assert!((expected_sin_sq(s) - 0.5 * (1.0 - (2.0 * s).sin() / (2.0 * s))).abs() < 1e-15);
        }
    }

    #[test]
    fn shift_gradient_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = Theorem2Instance::random(2, 3, &mut rng).unwrap();
        let theta = [0.2, -0.4, 0.1];
        for k in 0..3 {
            let h = 1e-5;
            let mut p = theta;
            let mut m = theta;
            p[k] += h;
            m[k] -= h;
            let fd = (inst.f(&p) - inst.f(&m)) / (2.0 * h);
            assert!((inst.grad(&theta, k) - fd).abs() < 1e-9);
        }
    }

    #[test]
    fn hessian_formula_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2, 3] {
            for _ in 0..20 {
                let inst = Theorem2Instance::random(n, 3, &mut rng).unwrap();
                assert!((inst.hessian_kk() - inst.hessian_kk_oracle()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn monte_carlo_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let scales = [0.5, 0.5, 0.5];
        for _ in 0..3 {
            let inst = Theorem2Instance::random(2, 3, &mut rng).unwrap();
            let exact = quadrature_lhs(&inst, &scales);
            let (mc, se) = inst.lhs(&scales, 20_000, &mut rng).unwrap();
            assert!((mc - exact).abs() < 4.0 * se + 1e-12, "{mc} vs {exact} ± {se}");
        }
    }

    #[test]
    fn small_angle_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inst = Theorem2Instance::random(2, 3, &mut rng).unwrap();
        let s = [1e-3; 3];
        let exact = quadrature_lhs(&inst, &s);
        assert!((exact - inst.rhs(&s)).abs() < 1e-6);
        let g0 = inst.grad(&[0.0; 3], inst.k);
        assert!((inst.rhs(&s) - g0 * g0).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_settings() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(Theorem2Instance::random(4, 2, &mut rng).is_err());
        assert!(Theorem2Instance::random(1, 2, &mut rng).is_err());
        let settings = Theorem2Settings {
            n_total: 2,
            n_layers: 3,
            scales: vec![0.5; 2],
            samples: 100,
            instances: 1,
            limit_scale: 1e-3,
            limit_tolerance: 1e-6,
        };
        assert!(theorem2_check(&settings, &RandomSource::new(0)).is_err());
    }
}
