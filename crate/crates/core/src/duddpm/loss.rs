//! Fidelity-kernel MMD and the per-cycle denoising loss.
//!
//! A denoiser output is the joint state `U(θ)(|0⟩^{n_a} ⊗ |ψ⟩)`. With the
//! ancilla on the leading qubits, the joint amplitudes split into `2^{n_a}`
//! unnormalized data-register branches `φ_a`, and the reduced data state is
//! `ρ = Σ_a |φ_a⟩⟨φ_a|`. The mixed-state kernels follow directly:
//! `⟨ψ|ρ|ψ⟩ = Σ_a |⟨ψ|φ_a⟩|²` and `Tr(ρρ') = Σ_{a,b} |⟨φ_a|φ'_b⟩|²`.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::ansatz::{apply_pqc, PqcParams};
use crate::error::{Error, Result};
use crate::qsim::{dot, DensityMatrix, Ensemble, StateVector};

/// Mean pairwise fidelity over all ordered pairs, diagonal included.
pub fn mean_fidelity(s1: &Ensemble, s2: &Ensemble) -> Result<f64> {
    if s1.n_qubits() != s2.n_qubits() {
        return Err(Error::Dimension { expected: s1.n_qubits(), actual: s2.n_qubits() });
    }
    let total: f64 = s1
        .states()
        .par_iter()
        .map(|a| s2.states().iter().map(|b| dot(a.amplitudes(), b.amplitudes()).norm_sqr()).sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(total / (s1.len() * s2.len()) as f64)
}

/// `F̄(S1,S1) + F̄(S2,S2) − 2 F̄(S1,S2)` with the fidelity kernel.
pub fn mmd(s1: &Ensemble, s2: &Ensemble) -> Result<f64> {
    if s1.n_qubits() != s2.n_qubits() {
        return Err(Error::Dimension { expected: s1.n_qubits(), actual: s2.n_qubits() });
    }
    Ok(mean_fidelity(s1, s1)? + mean_fidelity(s2, s2)? - 2.0 * mean_fidelity(s1, s2)?)
}

/// `|0⟩^{n_ancilla} ⊗ state`.
pub fn attach_ancilla(state: &StateVector, n_ancilla: usize) -> Result<StateVector> {
    if n_ancilla == 0 {
        return Ok(state.clone());
    }
    StateVector::zero(n_ancilla)?.tensor(state)
}

fn check_denoiser(n_data: usize, params: &PqcParams, n_ancilla: usize) -> Result<()> {
    if params.shape.n_total != n_data + n_ancilla {
        return Err(Error::Dimension { expected: n_data + n_ancilla, actual: params.shape.n_total });
    }
    Ok(())
}

/// Runs the denoiser on one input and returns the joint output state.
pub fn denoise_joint(state_in: &StateVector, params: &PqcParams, n_ancilla: usize) -> Result<StateVector> {
    check_denoiser(state_in.n_qubits(), params, n_ancilla)?;
    let mut joint = attach_ancilla(state_in, n_ancilla)?;
    apply_pqc(&mut joint, params)?;
    Ok(joint)
}

/// Reduced data-register state after the denoiser: the average over ancilla
/// outcomes of the post-measurement states.
pub fn denoise_step_expected(state_in: &StateVector, params: &PqcParams, n_ancilla: usize) -> Result<DensityMatrix> {
    let joint = denoise_joint(state_in, params, n_ancilla)?;
    let data: Vec<usize> = (n_ancilla..joint.n_qubits()).collect();
    joint.reduced_density_matrix(&data)
}

/// Denoiser followed by a computational-basis measurement of the ancilla.
pub fn denoise_step_sampled<R: Rng + ?Sized>(
    state_in: &StateVector,
    params: &PqcParams,
    n_ancilla: usize,
    rng: &mut R,
) -> Result<StateVector> {
    let joint = denoise_joint(state_in, params, n_ancilla)?;
    if n_ancilla == 0 {
        return Ok(joint);
    }
    let ancilla: Vec<usize> = (0..n_ancilla).collect();
    Ok(joint.measure_qubits(&ancilla, rng)?.post_state)
}

/// Shared validation for the loss and gradient entry points.
pub(crate) fn check_cycle(params: &PqcParams, inputs: &Ensemble, targets: &Ensemble, n_ancilla: usize) -> Result<()> {
    if inputs.len() != targets.len() {
        return Err(Error::Dimension { expected: inputs.len(), actual: targets.len() });
    }
    if inputs.n_qubits() != targets.n_qubits() {
        return Err(Error::Dimension { expected: inputs.n_qubits(), actual: targets.n_qubits() });
    }
    check_denoiser(inputs.n_qubits(), params, n_ancilla)
}

/// Joint outputs of a cycle and their kernel values against the targets.
pub(crate) struct CycleEvaluation {
    pub data_dim: usize,
    pub branches_per_state: usize,
    pub outputs: Vec<StateVector>,
    /// `gram[r][c] = ⟨φ_r|φ_c⟩` over all output branches `r = i·A + a`.
    pub gram: Vec<Vec<Complex64>>,
    /// `cross[j][r] = ⟨ψ_j|φ_r⟩`.
    pub cross: Vec<Vec<Complex64>>,
    pub target_self: f64,
}

impl CycleEvaluation {
    pub fn new(outputs: Vec<StateVector>, targets: &Ensemble, target_self: Option<f64>) -> Result<Self> {
        let data_dim = targets.states()[0].dim();
        let branches_per_state = outputs[0].dim() / data_dim;
        let branches: Vec<&[Complex64]> =
            outputs.iter().flat_map(|o| o.amplitudes().chunks_exact(data_dim)).collect();
        let nb = branches.len();
        let upper: Vec<Vec<Complex64>> = (0..nb)
            .into_par_iter()
            .map(|r| (r..nb).map(|c| dot(branches[r], branches[c])).collect())
            .collect();
        let mut gram = vec![vec![Complex64::new(0.0, 0.0); nb]; nb];
        for (r, row) in upper.iter().enumerate() {
            for (off, z) in row.iter().enumerate() {
                gram[r][r + off] = *z;
                gram[r + off][r] = z.conj();
            }
        }
        let cross: Vec<Vec<Complex64>> = targets
            .states()
            .par_iter()
            .map(|psi| branches.iter().map(|b| dot(psi.amplitudes(), b)).collect())
            .collect();
        let target_self = match target_self {
            Some(v) => v,
            None => mean_fidelity(targets, targets)?,
        };
        Ok(Self { data_dim, branches_per_state, outputs, gram, cross, target_self })
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn n_targets(&self) -> usize {
        self.cross.len()
    }

    /// `F̄(S̃,S̃)` with the mixed-state kernel.
    pub fn generated_self(&self) -> f64 {
        let s = self.n_outputs() as f64;
        let total: f64 = self.gram.iter().flat_map(|row| row.iter().map(|z| z.norm_sqr())).sum();
        total / (s * s)
    }

    /// `F̄(S̃,S')` with the mixed-state kernel.
    pub fn cross_mean(&self) -> f64 {
        let total: f64 = self.cross.iter().flat_map(|row| row.iter().map(|z| z.norm_sqr())).sum();
        total / (self.n_outputs() * self.n_targets()) as f64
    }

    pub fn loss(&self) -> f64 {
        self.generated_self() + self.target_self - 2.0 * self.cross_mean()
    }
}

pub(crate) fn run_outputs(params: &PqcParams, inputs: &Ensemble, n_ancilla: usize) -> Result<Vec<StateVector>> {
    inputs.states().par_iter().map(|s| denoise_joint(s, params, n_ancilla)).collect()
}

/// MMD between the expected denoised ensemble and `targets`.
pub fn cycle_loss(params: &PqcParams, inputs: &Ensemble, targets: &Ensemble, n_ancilla: usize) -> Result<f64> {
    check_cycle(params, inputs, targets, n_ancilla)?;
    let outputs = run_outputs(params, inputs, n_ancilla)?;
    let loss = CycleEvaluation::new(outputs, targets, None)?.loss();
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    Ok(loss)
}
