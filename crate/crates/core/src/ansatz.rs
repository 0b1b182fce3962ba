//! Circuit families: the forward scrambling step and the layered denoising PQC.
//!
//! A PQC layer applies, on every qubit λ, the rotations
//! `R_{axes[0]}(θ[l][λτ]) … R_{axes[τ-1]}(θ[l][λτ+τ-1])` in slot order and then
//! the fixed entangler. Parameters are stored flat, layer-major.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::{Axis, Gate, StateVector};

/// Fixed two-qubit layer that follows every rotation block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Entangler {
    /// CZ on (0,1), (1,2), …, (n-2,n-1).
    Ladder,
    /// Ladder with the (n_ancilla-1, n_ancilla) link removed, so the circuit
    /// is a product of an ancilla part and a data part.
    Factorized { n_ancilla: usize },
}

/// Open CZ ladder over `n_total` qubits.
pub fn build_entangler(n_total: usize) -> Vec<Gate> {
    (1..n_total).map(|q| Gate::Cz { q1: q - 1, q2: q }).collect()
}

impl Entangler {
    pub fn gates(&self, n_total: usize) -> Vec<Gate> {
        match *self {
            Entangler::Ladder => build_entangler(n_total),
            Entangler::Factorized { n_ancilla } => build_entangler(n_total)
                .into_iter()
                .filter(|g| !matches!(g, Gate::Cz { q2, .. } if *q2 == n_ancilla))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqcShape {
    pub n_total: usize,
    pub n_layers: usize,
    pub axis_sequence: Vec<Axis>,
    pub entangler: Entangler,
}

impl PqcShape {
    pub fn new(n_total: usize, n_layers: usize, axis_sequence: Vec<Axis>, entangler: Entangler) -> Result<Self> {
        if n_total == 0 {
            return Err(Error::InvalidArgument("PQC needs at least one qubit".into()));
        }
        if n_layers == 0 {
            return Err(Error::InvalidArgument("PQC needs at least one layer".into()));
        }
        if axis_sequence.is_empty() {
            return Err(Error::InvalidArgument("axis sequence must be non-empty".into()));
        }
        if let Entangler::Factorized { n_ancilla } = entangler {
            if n_ancilla > n_total {
                return Err(Error::InvalidArgument(format!(
                    "{n_ancilla} ancilla qubits exceed register of {n_total}"
                )));
            }
        }
        Ok(Self { n_total, n_layers, axis_sequence, entangler })
    }

    /// τ = 3 with X, Y, Z rotations and the full CZ ladder.
    pub fn standard(n_total: usize, n_layers: usize) -> Result<Self> {
        Self::new(n_total, n_layers, Axis::ALL.to_vec(), Entangler::Ladder)
    }

    pub fn tau(&self) -> usize {
        self.axis_sequence.len()
    }

    pub fn params_per_layer(&self) -> usize {
        self.n_total * self.tau()
    }

    pub fn param_count(&self) -> usize {
        self.n_layers * self.params_per_layer()
    }

    /// In-layer index `k` for rotation slot `slot` on `qubit`.
    pub fn layer_index(&self, qubit: usize, slot: usize) -> usize {
        qubit * self.tau() + slot
    }

    /// `(qubit, slot)` for in-layer index `k`.
    pub fn split_layer_index(&self, k: usize) -> (usize, usize) {
        (k / self.tau(), k % self.tau())
    }

    pub fn flat_index(&self, layer: usize, k: usize) -> usize {
        layer * self.params_per_layer() + k
    }

    /// `(layer, qubit, slot)` for a flat parameter index.
    pub fn locate(&self, flat: usize) -> (usize, usize, usize) {
        let layer = flat / self.params_per_layer();
        let (qubit, slot) = self.split_layer_index(flat % self.params_per_layer());
        (layer, qubit, slot)
    }
}

/// A gate with the flat index of the parameter that drives it, if any.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundGate {
    pub gate: Gate,
    pub param: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqcParams {
    pub shape: PqcShape,
    theta: Vec<f64>,
}

impl PqcParams {
    pub fn zeros(shape: PqcShape) -> Self {
        let theta = vec![0.0; shape.param_count()];
        Self { shape, theta }
    }

    pub fn from_vec(shape: PqcShape, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != shape.param_count() {
            return Err(Error::Dimension { expected: shape.param_count(), actual: theta.len() });
        }
        Ok(Self { shape, theta })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn get(&self, layer: usize, k: usize) -> f64 {
        self.theta[self.shape.flat_index(layer, k)]
    }

    /// Copy with parameter `flat` moved by `delta`.
    pub fn shifted(&self, flat: usize, delta: f64) -> Self {
        let mut out = self.clone();
        out.theta[flat] += delta;
        out
    }

    /// Gate list of the full circuit, in application order.
    pub fn bound_gates(&self) -> Vec<BoundGate> {
        let shape = &self.shape;
        let entangler = shape.entangler.gates(shape.n_total);
        let mut gates = Vec::with_capacity(shape.param_count() + shape.n_layers * entangler.len());
        for layer in 0..shape.n_layers {
            for qubit in 0..shape.n_total {
                for (slot, &axis) in shape.axis_sequence.iter().enumerate() {
                    let flat = shape.flat_index(layer, shape.layer_index(qubit, slot));
                    gates.push(BoundGate {
                        gate: Gate::Rotation { qubit, axis, angle: self.theta[flat] },
                        param: Some(flat),
                    });
                }
            }
            gates.extend(entangler.iter().map(|&gate| BoundGate { gate, param: None }));
        }
        gates
    }

    pub fn gates(&self) -> Vec<Gate> {
        self.bound_gates().into_iter().map(|b| b.gate).collect()
    }
}

/// Applies `∏_l W V(θ_l)` to `state` in place.
pub fn apply_pqc(state: &mut StateVector, params: &PqcParams) -> Result<()> {
    if state.n_qubits() != params.shape.n_total {
        return Err(Error::Dimension { expected: params.shape.n_total, actual: state.n_qubits() });
    }
    state.apply_gates(&params.gates())
}

/// Inverse of [`apply_pqc`].
pub fn apply_pqc_inverse(state: &mut StateVector, params: &PqcParams) -> Result<()> {
    if state.n_qubits() != params.shape.n_total {
        return Err(Error::Dimension { expected: params.shape.n_total, actual: state.n_qubits() });
    }
    params.gates().iter().rev().try_for_each(|g| state.apply_gate(&g.inverse()))
}

/// Half-width of the raw angle distribution of a scrambling step.
pub const QSC_ANGLE_RANGE: f64 = PI / 8.0;

/// One forward-diffusion scrambling step: raw angles plus the step scale.
#[derive(Debug, Clone, PartialEq)]
pub struct QscStepSpec {
    pub n_qubits: usize,
    /// `[R_X, R_Y, R_Z]` raw angles per qubit.
    pub single_qubit_angles: Vec<[f64; 3]>,
    /// Raw R_ZZ angle for each neighbour pair (q, q+1).
    pub coupling_angles: Vec<f64>,
    pub scale: f64,
}

impl QscStepSpec {
    /// Draws raw angles i.i.d. from U(−π/8, π/8).
    pub fn sample<R: Rng + ?Sized>(n_qubits: usize, scale: f64, rng: &mut R) -> Self {
        let mut draw = || rng.random_range(-QSC_ANGLE_RANGE..QSC_ANGLE_RANGE);
        let single_qubit_angles = (0..n_qubits).map(|_| [draw(), draw(), draw()]).collect();
        let coupling_angles = (1..n_qubits).map(|_| draw()).collect();
        Self { n_qubits, single_qubit_angles, coupling_angles, scale }
    }

    pub fn gates(&self) -> Result<Vec<Gate>> {
        if self.single_qubit_angles.len() != self.n_qubits {
            return Err(Error::Dimension { expected: self.n_qubits, actual: self.single_qubit_angles.len() });
        }
        if self.coupling_angles.len() != self.n_qubits.saturating_sub(1) {
            return Err(Error::Dimension {
                expected: self.n_qubits.saturating_sub(1),
                actual: self.coupling_angles.len(),
            });
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale must be finite and ≥ 0, got {}", self.scale)));
        }
        let mut gates = Vec::with_capacity(4 * self.n_qubits);
        for (qubit, angles) in self.single_qubit_angles.iter().enumerate() {
            for (axis, raw) in Axis::ALL.into_iter().zip(angles) {
                gates.push(Gate::Rotation { qubit, axis, angle: raw * self.scale });
            }
        }
        for (q, raw) in self.coupling_angles.iter().enumerate() {
            gates.push(Gate::Rzz { q1: q, q2: q + 1, angle: raw * self.scale });
        }
        Ok(gates)
    }
}

pub fn apply_qsc_step(state: &mut StateVector, spec: &QscStepSpec) -> Result<()> {
    if state.n_qubits() != spec.n_qubits {
        return Err(Error::Dimension { expected: spec.n_qubits, actual: state.n_qubits() });
    }
    state.apply_gates(&spec.gates()?)
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::random::haar_state_with;

    #[test]
    fn entangler_ladder() {
        assert_eq!(build_entangler(3), vec![Gate::Cz { q1: 0, q2: 1 }, Gate::Cz { q1: 1, q2: 2 }]);
        assert!(build_entangler(1).is_empty());
        assert_eq!(
            Entangler::Factorized { n_ancilla: 1 }.gates(4),
            vec![Gate::Cz { q1: 1, q2: 2 }, Gate::Cz { q1: 2, q2: 3 }]
        );
    }

    #[test]
    fn entangler_twice_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..=4 {
            let psi = haar_state_with(n, &mut rng).unwrap();
            let mut s = psi.clone();
            let w = build_entangler(n);
            s.apply_gates(&w).unwrap();
            s.apply_gates(&w).unwrap();
            for (a, b) in s.amplitudes().iter().zip(psi.amplitudes()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_params_fix_zero_state() {
        let shape = PqcShape::standard(4, 3).unwrap();
        let mut s = StateVector::zero(4).unwrap();
        apply_pqc(&mut s, &PqcParams::zeros(shape)).unwrap();
        assert!((s.amplitudes()[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn single_qubit_reduces_to_rx() {
        let shape = PqcShape::standard(1, 1).unwrap();
        let params = PqcParams::from_vec(shape, vec![PI, 0.0, 0.0]).unwrap();
        let mut s = StateVector::zero(1).unwrap();
        apply_pqc(&mut s, &params).unwrap();
        assert!((s.amplitudes()[1] - Complex64::new(0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        assert!(PqcShape::standard(0, 1).is_err());
        assert!(PqcShape::standard(2, 0).is_err());
        assert!(PqcShape::new(2, 1, vec![], Entangler::Ladder).is_err());
        let shape = PqcShape::standard(2, 1).unwrap();
        assert!(PqcParams::from_vec(shape.clone(), vec![0.0; 5]).is_err());
        let mut s = StateVector::zero(3).unwrap();
        assert!(apply_pqc(&mut s, &PqcParams::zeros(shape)).is_err());
    }

    #[test]
    fn parameter_count_law() {
        let (t, l, n, tau) = (30, 5, 10, 3);
        let shape = PqcShape::standard(n, l).unwrap();
        assert_eq!(shape.tau(), tau);
        assert_eq!(t * shape.param_count(), t * l * n * tau);
    }

    #[test]
    fn qsc_zero_scale_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = haar_state_with(3, &mut rng).unwrap();
        let spec = QscStepSpec::sample(3, 0.0, &mut rng);
        let mut s = psi.clone();
        apply_qsc_step(&mut s, &spec).unwrap();
        assert_eq!(s, psi);
    }

    #[test]
    fn qsc_single_qubit_example() {
        let spec = QscStepSpec {
            n_qubits: 1,
            single_qubit_angles: vec![[PI, 0.0, 0.0]],
            coupling_angles: vec![],
            scale: 1.0,
        };
        let mut s = StateVector::zero(1).unwrap();
        apply_qsc_step(&mut s, &spec).unwrap();
        assert!((s.amplitudes()[1] - Complex64::new(0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn qsc_angles_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = QscStepSpec::sample(5, 2.0, &mut rng);
        assert_eq!(spec.coupling_angles.len(), 4);
        let all = spec.single_qubit_angles.iter().flatten().chain(&spec.coupling_angles);
        assert!(all.into_iter().all(|a| a.abs() < QSC_ANGLE_RANGE));
    }

    proptest! {
        #[test]
        fn flat_index_round_trip(n in 1usize..8, l in 1usize..5, tau in 1usize..4, flat in 0usize..1000) {
            let axes = Axis::ALL[..tau].to_vec();
            let shape = PqcShape::new(n, l, axes, Entangler::Ladder).unwrap();
            let flat = flat % shape.param_count();
            let (layer, qubit, slot) = shape.locate(flat);
            prop_assert_eq!(shape.flat_index(layer, shape.layer_index(qubit, slot)), flat);
            prop_assert!(qubit < n && slot < tau && layer < l);
        }

        #[test]
        fn pqc_inverse_round_trip(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shape = PqcShape::standard(4, 3).unwrap();
            let theta = (0..shape.param_count()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let params = PqcParams::from_vec(shape, theta).unwrap();
            let psi = haar_state_with(4, &mut rng).unwrap();
            let mut s = psi.clone();
            apply_pqc(&mut s, &params).unwrap();
            prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
            apply_pqc_inverse(&mut s, &params).unwrap();
            for (a, b) in s.amplitudes().iter().zip(psi.amplitudes()) {
                prop_assert!((a - b).norm() < 1e-10);
            }
        }
    }
}
