//! Dense statevector simulation.
//!
//! Qubit 0 is the most significant bit of a basis index: in a 3-qubit state
//! the amplitude of `|q0 q1 q2⟩ = |100⟩` lives at index 4. Ancilla registers
//! are placed on the lowest qubit indices, so `|0⟩_anc ⊗ |ψ⟩_data` is a block
//! layout with the data index varying fastest.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on simulated register size.
pub const MAX_QUBITS: usize = 16;
/// Largest subsystem for which [`StateVector::reduced_density_matrix`] builds a matrix.
pub const MAX_REDUCED_QUBITS: usize = 12;
/// Norm tolerance enforced on construction.
pub const NORM_TOLERANCE: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// Pauli matrix for this axis, row-major.
    pub fn pauli(self) -> [[Complex64; 2]; 2] {
        match self {
            Axis::X => [[ZERO, ONE], [ONE, ZERO]],
            Axis::Y => [[ZERO, -I], [I, ZERO]],
            Axis::Z => [[ONE, ZERO], [ZERO, -ONE]],
        }
    }

    /// `exp(-i angle σ / 2)`.
    pub fn rotation(self, angle: f64) -> [[Complex64; 2]; 2] {
        let c = Complex64::new((angle / 2.0).cos(), 0.0);
        let s = (angle / 2.0).sin();
        match self {
            Axis::X => [[c, Complex64::new(0.0, -s)], [Complex64::new(0.0, -s), c]],
            Axis::Y => [[c, Complex64::new(-s, 0.0)], [Complex64::new(s, 0.0), c]],
            Axis::Z => [
                [Complex64::from_polar(1.0, -angle / 2.0), ZERO],
                [ZERO, Complex64::from_polar(1.0, angle / 2.0)],
            ],
        }
    }
}

/// Primitive gates understood by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    Rotation { qubit: usize, axis: Axis, angle: f64 },
    Cz { q1: usize, q2: usize },
    Rzz { q1: usize, q2: usize, angle: f64 },
}

impl Gate {
    /// The inverse gate.
    pub fn inverse(self) -> Gate {
        match self {
            Gate::Rotation { qubit, axis, angle } => Gate::Rotation { qubit, axis, angle: -angle },
            Gate::Cz { .. } => self,
            Gate::Rzz { q1, q2, angle } => Gate::Rzz { q1, q2, angle: -angle },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub(crate) fn check_qubits(n_qubits: usize) -> Result<()> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::QubitCount(n_qubits, MAX_QUBITS));
        }
        Ok(())
    }

    /// `|0…0⟩` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        Self::check_qubits(n_qubits)?;
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        Ok(Self { n_qubits, amps })
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        Self::check_qubits(n_qubits)?;
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::Dimension { expected: dim, actual: index });
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Ok(Self { n_qubits, amps })
    }

    /// Wraps amplitudes that must already be normalized.
    pub fn from_amplitudes(n_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        Self::check_qubits(n_qubits)?;
        if amps.len() != 1 << n_qubits {
            return Err(Error::Dimension { expected: 1 << n_qubits, actual: amps.len() });
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !norm.is_finite() {
            return Err(Error::NonFinite("amplitudes"));
        }
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidArgument(format!("state norm² is {norm}, expected 1")));
        }
        Ok(Self { n_qubits, amps })
    }

    /// Normalizes `amps` and wraps them.
    pub fn from_unnormalized(n_qubits: usize, mut amps: Vec<Complex64>) -> Result<Self> {
        Self::check_qubits(n_qubits)?;
        if amps.len() != 1 << n_qubits {
            return Err(Error::Dimension { expected: 1 << n_qubits, actual: amps.len() });
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidArgument("cannot normalize a zero or non-finite vector".into()));
        }
        amps.iter_mut().for_each(|a| *a /= norm);
        Ok(Self { n_qubits, amps })
    }

    /// Wraps amplitudes without any norm check (adjoint vectors, scratch).
    pub(crate) fn from_raw(n_qubits: usize, amps: Vec<Complex64>) -> Self {
        debug_assert_eq!(amps.len(), 1 << n_qubits);
        Self { n_qubits, amps }
    }

    /// The 0-qubit state (the scalar 1) left after measuring every qubit.
    pub fn scalar() -> Self {
        Self { n_qubits: 0, amps: vec![ONE] }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    #[inline]
    fn stride(&self, qubit: usize) -> usize {
        1 << (self.n_qubits - 1 - qubit)
    }

    fn check_index(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(Error::QubitIndex { index: qubit, n_qubits: self.n_qubits });
        }
        Ok(())
    }

    fn check_pair(&self, q1: usize, q2: usize) -> Result<()> {
        self.check_index(q1)?;
        self.check_index(q2)?;
        if q1 == q2 {
            return Err(Error::RepeatedQubit(q1));
        }
        Ok(())
    }

    /// Applies an arbitrary 2×2 matrix to `qubit`.
    pub fn apply_single(&mut self, qubit: usize, m: &[[Complex64; 2]; 2]) -> Result<()> {
        self.check_index(qubit)?;
        let stride = self.stride(qubit);
        let [[m00, m01], [m10, m11]] = *m;
        for chunk in self.amps.chunks_exact_mut(2 * stride) {
            let (lo, hi) = chunk.split_at_mut(stride);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = m00 * x + m01 * y;
                *b = m10 * x + m11 * y;
            }
        }
        Ok(())
    }

    /// `R_axis(angle) = exp(-i angle σ / 2)` on `qubit`.
    pub fn apply_rotation(&mut self, qubit: usize, axis: Axis, angle: f64) -> Result<()> {
        if !angle.is_finite() {
            return Err(Error::NonFinite("rotation angle"));
        }
        if axis == Axis::Z {
            self.check_index(qubit)?;
            let stride = self.stride(qubit);
            let p0 = Complex64::from_polar(1.0, -angle / 2.0);
            let p1 = p0.conj();
            for chunk in self.amps.chunks_exact_mut(2 * stride) {
                let (lo, hi) = chunk.split_at_mut(stride);
                lo.iter_mut().for_each(|a| *a *= p0);
                hi.iter_mut().for_each(|a| *a *= p1);
            }
            return Ok(());
        }
        self.apply_single(qubit, &axis.rotation(angle))
    }

    /// Pauli `σ_axis` on `qubit`.
    pub fn apply_pauli(&mut self, qubit: usize, axis: Axis) -> Result<()> {
        self.apply_single(qubit, &axis.pauli())
    }

    pub fn apply_cz(&mut self, q1: usize, q2: usize) -> Result<()> {
        self.check_pair(q1, q2)?;
        let mask = self.stride(q1) | self.stride(q2);
        for (k, a) in self.amps.iter_mut().enumerate() {
            if k & mask == mask {
                *a = -*a;
            }
        }
        Ok(())
    }

    /// `exp(-i angle Z⊗Z / 2)`: phase `e^{-iθ/2}` where the two qubits agree,
    /// `e^{+iθ/2}` where they differ.
    pub fn apply_rzz(&mut self, q1: usize, q2: usize, angle: f64) -> Result<()> {
        self.check_pair(q1, q2)?;
        if !angle.is_finite() {
            return Err(Error::NonFinite("rotation angle"));
        }
        let (m1, m2) = (self.stride(q1), self.stride(q2));
        let even = Complex64::from_polar(1.0, -angle / 2.0);
        let odd = even.conj();
        for (k, a) in self.amps.iter_mut().enumerate() {
            let parity = ((k & m1) != 0) ^ ((k & m2) != 0);
            *a *= if parity { odd } else { even };
        }
        Ok(())
    }

    pub fn apply_gate(&mut self, gate: &Gate) -> Result<()> {
        match *gate {
            Gate::Rotation { qubit, axis, angle } => self.apply_rotation(qubit, axis, angle),
            Gate::Cz { q1, q2 } => self.apply_cz(q1, q2),
            Gate::Rzz { q1, q2, angle } => self.apply_rzz(q1, q2, angle),
        }
    }

    pub fn apply_gates<'a>(&mut self, gates: impl IntoIterator<Item = &'a Gate>) -> Result<()> {
        gates.into_iter().try_for_each(|g| self.apply_gate(g))
    }

    /// `⟨self|other⟩`.
    pub fn inner_product(&self, other: &StateVector) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension { expected: self.dim(), actual: other.dim() });
        }
        Ok(dot(&self.amps, &other.amps))
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner_product(other)?.norm_sqr().min(1.0))
    }

    /// `⟨self| σ_axis(qubit) |other⟩` without materializing `σ|other⟩`.
    pub fn pauli_matrix_element(&self, qubit: usize, axis: Axis, other: &StateVector) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension { expected: self.dim(), actual: other.dim() });
        }
        self.check_index(qubit)?;
        Ok(pauli_sandwich(&self.amps, &other.amps, self.stride(qubit), axis))
    }

    /// `self ⊗ other`, with `self` on the leading (lower-index) qubits.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let n = self.n_qubits + other.n_qubits;
        Self::check_qubits(n)?;
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amps {
            amps.extend(other.amps.iter().map(|b| a * b));
        }
        Ok(StateVector { n_qubits: n, amps })
    }

    fn check_subset(&self, qubits: &[usize]) -> Result<Vec<usize>> {
        let mut sorted = qubits.to_vec();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(Error::RepeatedQubit(w[0]));
            }
        }
        for &q in &sorted {
            self.check_index(q)?;
        }
        Ok(sorted)
    }

    /// Splits the register into `targets` and the complement; returns
    /// `(target_index, rest_index)` for every basis index, in basis order.
    fn split_indices(&self, targets: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let rest: Vec<usize> = (0..self.n_qubits).filter(|q| !targets.contains(q)).collect();
        let gather = |k: usize, qs: &[usize]| {
            qs.iter().fold(0usize, |acc, &q| (acc << 1) | ((k >> (self.n_qubits - 1 - q)) & 1))
        };
        let t = (0..self.dim()).map(|k| gather(k, targets)).collect();
        let r = (0..self.dim()).map(|k| gather(k, &rest)).collect();
        (t, r)
    }

    fn outcome_from_index(&self, targets: &[usize], outcome: usize, probability: f64) -> Result<MeasurementOutcome> {
        let (t_idx, r_idx) = self.split_indices(targets);
        let rest_qubits = self.n_qubits - targets.len();
        let mut post = vec![ZERO; 1 << rest_qubits];
        for k in 0..self.dim() {
            if t_idx[k] == outcome {
                post[r_idx[k]] = self.amps[k];
            }
        }
        let post_state = if rest_qubits == 0 {
            StateVector::scalar()
        } else {
            StateVector::from_unnormalized(rest_qubits, post)?
        };
        let bits = (0..targets.len()).map(|i| (outcome >> (targets.len() - 1 - i)) & 1 == 1).collect();
        Ok(MeasurementOutcome { bits, probability, post_state })
    }

    /// Born probabilities for measuring `targets` (sorted ascending), indexed
    /// by the outcome bit string read with the lowest target as MSB.
    pub fn outcome_probabilities(&self, targets: &[usize]) -> Result<Vec<f64>> {
        let targets = self.check_subset(targets)?;
        if targets.is_empty() {
            return Err(Error::Empty("measurement target set"));
        }
        let (t_idx, _) = self.split_indices(&targets);
        let mut probs = vec![0.0; 1 << targets.len()];
        for (k, a) in self.amps.iter().enumerate() {
            probs[t_idx[k]] += a.norm_sqr();
        }
        Ok(probs)
    }

    /// Projective computational-basis measurement of `targets`.
    pub fn measure_qubits<R: Rng + ?Sized>(&self, targets: &[usize], rng: &mut R) -> Result<MeasurementOutcome> {
        let sorted = self.check_subset(targets)?;
        let probs = self.outcome_probabilities(&sorted)?;
        let total: f64 = probs.iter().sum();
        let r: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (m, &p) in probs.iter().enumerate() {
            acc += p;
            if p > 0.0 && (r < acc || m == probs.len() - 1) {
                chosen = Some(m);
                break;
            }
        }
        // Rounding can leave r just above the last non-zero cumulative sum.
        let chosen = chosen.or_else(|| probs.iter().rposition(|&p| p > 0.0));
        let m = chosen.ok_or_else(|| Error::Internal("all measurement branches have zero probability".into()))?;
        self.outcome_from_index(&sorted, m, probs[m])
    }

    /// All outcomes with non-zero probability, in outcome order.
    pub fn enumerate_outcomes(&self, targets: &[usize]) -> Result<Vec<MeasurementOutcome>> {
        let sorted = self.check_subset(targets)?;
        let probs = self.outcome_probabilities(&sorted)?;
        probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(m, &p)| self.outcome_from_index(&sorted, m, p))
            .collect()
    }

    /// `Tr_complement |ψ⟩⟨ψ|` on the qubits in `keep` (ordered ascending).
    pub fn reduced_density_matrix(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let keep = self.check_subset(keep)?;
        if keep.is_empty() {
            return Err(Error::Empty("kept subsystem"));
        }
        if keep.len() > MAX_REDUCED_QUBITS {
            return Err(Error::SubsystemTooLarge(keep.len(), MAX_REDUCED_QUBITS));
        }
        let (k_idx, r_idx) = self.split_indices(&keep);
        let dk = 1usize << keep.len();
        let dr = 1usize << (self.n_qubits - keep.len());
        let mut m = DMatrix::<Complex64>::zeros(dk, dr);
        for (k, a) in self.amps.iter().enumerate() {
            m[(k_idx[k], r_idx[k])] = *a;
        }
        let entries = &m * m.adjoint();
        Ok(DensityMatrix { n_qubits: keep.len(), entries })
    }
}

/// Dense matrix of the linear map `op` on `n` qubits, built column by column.
pub fn dense_operator(n: usize, op: impl Fn(&mut StateVector) -> Result<()>) -> Result<DMatrix<Complex64>> {
    let dim = 1usize << n;
    let mut m = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        let mut s = StateVector::basis(n, col)?;
        op(&mut s)?;
        m.set_column(col, &nalgebra::DVector::from_column_slice(s.amplitudes()));
    }
    Ok(m)
}

/// Dense unitary of a gate sequence.
pub fn gates_unitary(n: usize, gates: &[Gate]) -> Result<DMatrix<Complex64>> {
    dense_operator(n, |s| s.apply_gates(gates))
}

#[inline]
pub(crate) fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).fold(ZERO, |acc, (x, y)| acc + x.conj() * y)
}

/// `⟨a| σ |b⟩` where σ acts on the qubit with the given stride.
pub(crate) fn pauli_sandwich(a: &[Complex64], b: &[Complex64], stride: usize, axis: Axis) -> Complex64 {
    let mut acc = ZERO;
    for (ca, cb) in a.chunks_exact(2 * stride).zip(b.chunks_exact(2 * stride)) {
        let (a0, a1) = ca.split_at(stride);
        let (b0, b1) = cb.split_at(stride);
        match axis {
            Axis::X => {
                acc += dot(a0, b1) + dot(a1, b0);
            }
            Axis::Y => {
                acc += -I * dot(a0, b1) + I * dot(a1, b0);
            }
            Axis::Z => {
                acc += dot(a0, b0) - dot(a1, b1);
            }
        }
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOutcome {
    /// Outcome bits, one per measured qubit in ascending qubit order.
    pub bits: Vec<bool>,
    pub probability: f64,
    /// Normalized state of the unmeasured qubits.
    pub post_state: StateVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub n_qubits: usize,
    pub entries: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn pure(state: &StateVector) -> Self {
        let v = nalgebra::DVector::from_column_slice(state.amplitudes());
        DensityMatrix { n_qubits: state.n_qubits(), entries: &v * v.adjoint() }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    /// Largest elementwise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        let diff = &self.entries - self.entries.adjoint();
        diff.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `Tr(ρσ)`, the mixed-state fidelity kernel.
    pub fn overlap(&self, other: &DensityMatrix) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension { expected: self.dim(), actual: other.dim() });
        }
        // Tr(AB) = Σ_ij A_ij B_ji
        let mut acc = ZERO;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += self.entries[(i, j)] * other.entries[(j, i)];
            }
        }
        Ok(acc.re)
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn expectation(&self, state: &StateVector) -> Result<f64> {
        if self.dim() != state.dim() {
            return Err(Error::Dimension { expected: self.dim(), actual: state.dim() });
        }
        let v = nalgebra::DVector::from_column_slice(state.amplitudes());
        Ok((v.adjoint() * &self.entries * &v)[(0, 0)].re)
    }

    /// Smallest eigenvalue (Hermitian eigensolver).
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.entries + self.entries.adjoint()) * Complex64::new(0.5, 0.0);
        herm.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Ordered collection of states with a common qubit count.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    states: Vec<StateVector>,
}

impl Ensemble {
    pub fn new(states: Vec<StateVector>) -> Result<Self> {
        let first = states.first().ok_or(Error::Empty("ensemble"))?;
        let n = first.n_qubits();
        if let Some(bad) = states.iter().find(|s| s.n_qubits() != n) {
            return Err(Error::Dimension { expected: n, actual: bad.n_qubits() });
        }
        Ok(Self { states })
    }

    pub fn n_qubits(&self) -> usize {
        self.states[0].n_qubits()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn into_states(self) -> Vec<StateVector> {
        self.states
    }

    /// Members at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Ensemble> {
        let states = indices
            .iter()
            .map(|&i| {
                self.states
                    .get(i)
                    .cloned()
                    .ok_or(Error::Dimension { expected: self.len(), actual: i })
            })
            .collect::<Result<Vec<_>>>()?;
        Ensemble::new(states)
    }
}
