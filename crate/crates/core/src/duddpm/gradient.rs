//! Gradients of the cycle loss.
//!
//! Three independent routes:
//! * [`loss_and_gradient`]: reverse-mode (adjoint) sweep through the gate
//!   list, used for training.
//! * [`loss_gradient_shift`]: parameter shift. The loss is bilinear in the
//!   denoiser outputs (the generated self-term pairs two circuit copies), so
//!   the ±π/2 shift is applied to one copy at a time and combined by the
//!   product rule; each shifted term is an expectation value and the rule is
//!   exact.
//! * [`loss_gradient_analytic`]: the commutator-trace formula evaluated with
//!   dense matrices on the data register, valid when the circuit factorizes
//!   into ancilla and data parts.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::loss::{check_cycle, run_outputs, CycleEvaluation};
use crate::ansatz::{Entangler, PqcParams};
use crate::error::{Error, Result};
use crate::qsim::{dense_operator, dot, gates_unitary, Ensemble, Gate, StateVector};

/// Register size limit of the dense analytic route.
pub const ANALYTIC_MAX_QUBITS: usize = 8;

/// Loss and its full gradient via one adjoint sweep per input state.
pub fn loss_and_gradient(
    params: &PqcParams,
    inputs: &Ensemble,
    targets: &Ensemble,
    n_ancilla: usize,
) -> Result<(f64, Vec<f64>)> {
    check_cycle(params, inputs, targets, n_ancilla)?;
    let outputs = run_outputs(params, inputs, n_ancilla)?;
    let eval = CycleEvaluation::new(outputs, targets, None)?;
    let loss = eval.loss();
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }

    // dL = Σ_i 2 Re⟨Φ_i|(I ⊗ Ω)|dΦ_i⟩ with
    // Ω = (2/S²) Σ_k ρ_k − (2/(S·S')) Σ_j |ψ_j⟩⟨ψ_j|.
    let s = eval.n_outputs() as f64;
    let s_t = eval.n_targets() as f64;
    let self_coef = 2.0 / (s * s);
    let cross_coef = 2.0 / (s * s_t);
    let d = eval.data_dim;
    let a_count = eval.branches_per_state;
    let branches: Vec<&[Complex64]> =
        eval.outputs.iter().flat_map(|o| o.amplitudes().chunks_exact(d)).collect();
    let n_total = params.shape.n_total;
    let gates = params.bound_gates();

    let per_state: Vec<Vec<f64>> = (0..eval.n_outputs())
        .into_par_iter()
        .map(|i| {
            let mut costate = vec![Complex64::new(0.0, 0.0); d * a_count];
            for a in 0..a_count {
                let r = i * a_count + a;
                let out = &mut costate[a * d..(a + 1) * d];
                for (rb, branch) in branches.iter().enumerate() {
                    let coef = eval.gram[rb][r] * self_coef;
                    out.iter_mut().zip(branch.iter()).for_each(|(o, b)| *o += coef * b);
                }
                for (j, psi) in targets.states().iter().enumerate() {
                    let coef = eval.cross[j][r] * cross_coef;
                    out.iter_mut().zip(psi.amplitudes()).for_each(|(o, p)| *o -= coef * p);
                }
            }
            let mut lambda = StateVector::from_raw(n_total, costate);
            let mut phi = eval.outputs[i].clone();
            let mut grad = vec![0.0; params.shape.param_count()];
            for bound in gates.iter().rev() {
                if let (Some(p), Gate::Rotation { qubit, axis, .. }) = (bound.param, bound.gate) {
                    grad[p] += lambda.pauli_matrix_element(qubit, axis, &phi)?.im;
                }
                let inv = bound.gate.inverse();
                phi.apply_gate(&inv)?;
                lambda.apply_gate(&inv)?;
            }
            Ok(grad)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut grad = vec![0.0; params.shape.param_count()];
    for g in &per_state {
        grad.iter_mut().zip(g).for_each(|(acc, x)| *acc += x);
    }
    Ok((loss, grad))
}

/// `Σ_{a,b} |⟨φ_a|φ'_b⟩|²` for two joint outputs split into data branches.
fn pair_kernel(x: &StateVector, y: &StateVector, d: usize) -> f64 {
    let mut total = 0.0;
    for bx in x.amplitudes().chunks_exact(d) {
        for by in y.amplitudes().chunks_exact(d) {
            total += dot(bx, by).norm_sqr();
        }
    }
    total
}

/// `Σ_a |⟨ψ|φ_a⟩|²`.
fn target_kernel(x: &StateVector, psi: &StateVector) -> f64 {
    x.amplitudes().chunks_exact(psi.dim()).map(|b| dot(psi.amplitudes(), b).norm_sqr()).sum()
}

fn shift_partial_with(
    params: &PqcParams,
    index: usize,
    base: &[StateVector],
    inputs: &Ensemble,
    targets: &Ensemble,
    n_ancilla: usize,
) -> Result<f64> {
    let plus = run_outputs(&params.shifted(index, FRAC_PI_2), inputs, n_ancilla)?;
    let minus = run_outputs(&params.shifted(index, -FRAC_PI_2), inputs, n_ancilla)?;
    let d = targets.states()[0].dim();
    let s = base.len() as f64;
    let s_t = targets.len() as f64;
    let mut self_term = 0.0;
    let mut cross_term = 0.0;
    for (p, m) in plus.iter().zip(&minus) {
        for k in base {
            self_term += pair_kernel(p, k, d) - pair_kernel(m, k, d);
        }
        for psi in targets.states() {
            cross_term += target_kernel(p, psi) - target_kernel(m, psi);
        }
    }
    // d/dθ (1/S²)Σ_ik K(Φ_i,Φ_k) = (2/S²) Σ_ik ½[K(Φ_i⁺,Φ_k) − K(Φ_i⁻,Φ_k)]
    Ok(self_term / (s * s) - cross_term / (s * s_t))
}

/// Parameter-shift derivative of the cycle loss with respect to one parameter.
pub fn loss_partial_shift(
    params: &PqcParams,
    index: usize,
    inputs: &Ensemble,
    targets: &Ensemble,
    n_ancilla: usize,
) -> Result<f64> {
    check_cycle(params, inputs, targets, n_ancilla)?;
    if index >= params.shape.param_count() {
        return Err(Error::Dimension { expected: params.shape.param_count(), actual: index });
    }
    let base = run_outputs(params, inputs, n_ancilla)?;
    shift_partial_with(params, index, &base, inputs, targets, n_ancilla)
}

/// Parameter-shift gradient of the cycle loss.
pub fn loss_gradient_shift(
    params: &PqcParams,
    inputs: &Ensemble,
    targets: &Ensemble,
    n_ancilla: usize,
) -> Result<Vec<f64>> {
    check_cycle(params, inputs, targets, n_ancilla)?;
    let base = run_outputs(params, inputs, n_ancilla)?;
    (0..params.shape.param_count())
        .into_par_iter()
        .map(|p| shift_partial_with(params, p, &base, inputs, targets, n_ancilla))
        .collect()
}

/// Dense data-register pieces of the analytic gradient for one parameter.
pub struct AnalyticTerms {
    /// Circuit after the generator insertion point: later layers and this layer's entangler.
    pub after: DMatrix<Complex64>,
    /// Circuit up to and including this layer's rotations.
    pub before: DMatrix<Complex64>,
    /// Heisenberg-picture generator `K`.
    pub generator: DMatrix<Complex64>,
}

fn data_gates(gates: &[Gate], n_ancilla: usize) -> Vec<Gate> {
    gates
        .iter()
        .filter_map(|g| match *g {
            Gate::Rotation { qubit, axis, angle } if qubit >= n_ancilla => {
                Some(Gate::Rotation { qubit: qubit - n_ancilla, axis, angle })
            }
            Gate::Cz { q1, q2 } if q1 >= n_ancilla && q2 >= n_ancilla => {
                Some(Gate::Cz { q1: q1 - n_ancilla, q2: q2 - n_ancilla })
            }
            _ => None,
        })
        .collect()
}

/// Builds the dense factors for parameter `index` restricted to the data
/// register. Returns `None` for parameters on ancilla qubits, whose
/// rotations cannot reach the reduced data state of a factorized circuit.
pub fn analytic_terms(params: &PqcParams, index: usize, n_ancilla: usize) -> Result<Option<AnalyticTerms>> {
    let shape = &params.shape;
    let (layer, qubit, slot) = shape.locate(index);
    if qubit < n_ancilla {
        return Ok(None);
    }
    let n_data = shape.n_total - n_ancilla;
    let per_layer = shape.params_per_layer();
    let entangler = data_gates(&shape.entangler.gates(shape.n_total), n_ancilla);
    let layer_rotations = |l: usize| -> Vec<Gate> {
        let gates: Vec<Gate> = params.bound_gates()[..]
            .iter()
            .filter(|b| b.param.is_some_and(|p| p / per_layer == l))
            .map(|b| b.gate)
            .collect();
        data_gates(&gates, n_ancilla)
    };

    let mut before_gates = Vec::new();
    for l in 0..layer {
        before_gates.extend(layer_rotations(l));
        before_gates.extend(entangler.iter().copied());
    }
    before_gates.extend(layer_rotations(layer));
    let mut after_gates = entangler.clone();
    for l in layer + 1..shape.n_layers {
        after_gates.extend(layer_rotations(l));
        after_gates.extend(entangler.iter().copied());
    }

    // K = M σ M† with M the rotations that follow slot α in this layer, on every qubit.
    let trailing: Vec<Gate> = (0..shape.n_total)
        .filter(|&q| q >= n_ancilla)
        .flat_map(|q| {
            (slot + 1..shape.tau()).map(move |i| Gate::Rotation {
                qubit: q - n_ancilla,
                axis: shape.axis_sequence[i],
                angle: params.get(layer, shape.layer_index(q, i)),
            })
        })
        .collect();
    let m = gates_unitary(n_data, &trailing)?;
    let axis = shape.axis_sequence[slot];
    let sigma = dense_operator(n_data, |s| s.apply_pauli(qubit - n_ancilla, axis))?;
    let generator = &m * sigma * m.adjoint();

    Ok(Some(AnalyticTerms {
        after: gates_unitary(n_data, &after_gates)?,
        before: gates_unitary(n_data, &before_gates)?,
        generator,
    }))
}

fn projector_sum(ens: &Ensemble) -> DMatrix<Complex64> {
    let d = ens.states()[0].dim();
    let mut p = DMatrix::zeros(d, d);
    for s in ens.states() {
        let v = nalgebra::DVector::from_column_slice(s.amplitudes());
        p += &v * v.adjoint();
    }
    p
}

/// Gradient from `∂L = (i/(S·S')) Σ_ij Tr(σ_j A [K, B ρ_i B†] A†)`.
///
/// Requires a data/ancilla product circuit (or no ancilla), where the
/// generated self-term is constant and only the cross term varies.
pub fn loss_gradient_analytic(
    params: &PqcParams,
    inputs: &Ensemble,
    targets: &Ensemble,
    n_ancilla: usize,
) -> Result<Vec<f64>> {
    check_cycle(params, inputs, targets, n_ancilla)?;
    if params.shape.n_total > ANALYTIC_MAX_QUBITS {
        return Err(Error::SubsystemTooLarge(params.shape.n_total, ANALYTIC_MAX_QUBITS));
    }
    if n_ancilla > 0 && params.shape.entangler != (Entangler::Factorized { n_ancilla }) {
        return Err(Error::InvalidArgument(
            "analytic gradient needs an entangler factorized at the ancilla boundary".into(),
        ));
    }
    let p_targets = projector_sum(targets);
    let r_inputs = projector_sum(inputs);
    let norm = Complex64::new(0.0, 1.0 / (inputs.len() * targets.len()) as f64);
    (0..params.shape.param_count())
        .into_par_iter()
        .map(|index| {
            let Some(terms) = analytic_terms(params, index, n_ancilla)? else {
                return Ok(0.0);
            };
            let x = &terms.before * &r_inputs * terms.before.adjoint();
            let comm = &terms.generator * &x - &x * &terms.generator;
            let value = (&p_targets * &terms.after * comm * terms.after.adjoint()).trace() * norm;
            Ok(value.re)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::ansatz::PqcShape;
    use crate::duddpm::cycle_loss;
    use crate::qsim::Axis;
    use crate::random::{ghz_ensemble, haar_ensemble, RandomSource};

    fn random_params(shape: PqcShape, rng: &mut impl Rng) -> PqcParams {
        let theta = (0..shape.param_count()).map(|_| rng.random_range(-PI..PI)).collect();
        PqcParams::from_vec(shape, theta).unwrap()
    }

    fn central_difference(params: &PqcParams, inputs: &Ensemble, targets: &Ensemble, n_a: usize) -> Vec<f64> {
        let h = 1e-5;
        (0..params.shape.param_count())
            .map(|p| {
                let up = cycle_loss(&params.shifted(p, h), inputs, targets, n_a).unwrap();
                let down = cycle_loss(&params.shifted(p, -h), inputs, targets, n_a).unwrap();
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn shift_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let src = RandomSource::new(1);
        for trial in 0..5 {
            let inputs = haar_ensemble(2, 3, &src.child(2 * trial)).unwrap();
            let targets = ghz_ensemble(2, 3, &src.child(2 * trial + 1)).unwrap();
            let params = random_params(PqcShape::standard(3, 2).unwrap(), &mut rng);
            let shift = loss_gradient_shift(&params, &inputs, &targets, 1).unwrap();
            let fd = central_difference(&params, &inputs, &targets, 1);
            for (a, b) in shift.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-3), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn adjoint_matches_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let src = RandomSource::new(2);
        for (n_data, n_a, layers) in [(2, 1, 2), (1, 2, 3), (3, 0, 2), (2, 2, 1)] {
            let inputs = haar_ensemble(n_data, 4, &src.child(n_data as u64)).unwrap();
            let targets = haar_ensemble(n_data, 4, &src.child(10 + n_a as u64)).unwrap();
            let params = random_params(PqcShape::standard(n_data + n_a, layers).unwrap(), &mut rng);
            let (loss, adj) = loss_and_gradient(&params, &inputs, &targets, n_a).unwrap();
            assert!((loss - cycle_loss(&params, &inputs, &targets, n_a).unwrap()).abs() < 1e-14);
            let shift = loss_gradient_shift(&params, &inputs, &targets, n_a).unwrap();
            for (a, b) in adj.iter().zip(&shift) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn single_partial_matches_full_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = RandomSource::new(3);
        let inputs = haar_ensemble(2, 2, &src.child(0)).unwrap();
        let targets = haar_ensemble(2, 2, &src.child(1)).unwrap();
        let params = random_params(PqcShape::standard(3, 2).unwrap(), &mut rng);
        let full = loss_gradient_shift(&params, &inputs, &targets, 1).unwrap();
        for p in [0, 5, 17] {
            let single = loss_partial_shift(&params, p, &inputs, &targets, 1).unwrap();
            assert!((single - full[p]).abs() < 1e-14);
        }
        assert!(loss_partial_shift(&params, 18, &inputs, &targets, 1).is_err());
    }

    #[test]
    fn zero_gradient_at_exact_fit() {
        // Inputs = targets = |0…0⟩, θ = 0: loss is 0, its global minimum.
        let zero = StateVector::zero(2).unwrap();
        let ens = Ensemble::new(vec![zero.clone(), zero.clone(), zero]).unwrap();
        let params = PqcParams::zeros(PqcShape::standard(3, 2).unwrap());
        assert!(cycle_loss(&params, &ens, &ens, 1).unwrap().abs() < 1e-14);
        for g in loss_gradient_shift(&params, &ens, &ens, 1).unwrap() {
            assert!(g.abs() < 1e-12);
        }
    }

    fn factorized(n_data: usize, n_a: usize, layers: usize) -> PqcShape {
        PqcShape::new(n_data + n_a, layers, Axis::ALL.to_vec(), Entangler::Factorized { n_ancilla: n_a }).unwrap()
    }

    #[test]
    fn analytic_matches_shift_on_factorized_circuits() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let src = RandomSource::new(4);
        for trial in 0..10 {
            let inputs = haar_ensemble(2, 3, &src.child(2 * trial)).unwrap();
            let targets = ghz_ensemble(2, 3, &src.child(2 * trial + 1)).unwrap();
            let params = random_params(factorized(2, 1, 2), &mut rng);
            let analytic = loss_gradient_analytic(&params, &inputs, &targets, 1).unwrap();
            let shift = loss_gradient_shift(&params, &inputs, &targets, 1).unwrap();
            for (a, b) in analytic.iter().zip(&shift) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn analytic_without_ancilla() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let src = RandomSource::new(5);
        let inputs = haar_ensemble(3, 2, &src.child(0)).unwrap();
        let targets = haar_ensemble(3, 2, &src.child(1)).unwrap();
        let params = random_params(PqcShape::standard(3, 2).unwrap(), &mut rng);
        let analytic = loss_gradient_analytic(&params, &inputs, &targets, 0).unwrap();
        let shift = loss_gradient_shift(&params, &inputs, &targets, 0).unwrap();
        for (a, b) in analytic.iter().zip(&shift) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn analytic_rejects_entangled_or_large_circuits() {
        let src = RandomSource::new(6);
        let inputs = haar_ensemble(2, 2, &src).unwrap();
        let params = PqcParams::zeros(PqcShape::standard(3, 1).unwrap());
        assert!(loss_gradient_analytic(&params, &inputs, &inputs, 1).is_err());
        let big_in = haar_ensemble(8, 1, &src).unwrap();
        let big = PqcParams::zeros(factorized(8, 1, 1));
        assert_eq!(
            loss_gradient_analytic(&big, &big_in, &big_in, 1),
            Err(Error::SubsystemTooLarge(9, ANALYTIC_MAX_QUBITS))
        );
    }

    #[test]
    fn trailing_z_has_zero_gradient_for_basis_targets() {
        // Last-layer R_Z followed only by diagonal CZs cannot change overlaps
        // with computational-basis targets.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let src = RandomSource::new(7);
        let inputs = haar_ensemble(2, 3, &src).unwrap();
        let zero = StateVector::zero(2).unwrap();
        let targets = Ensemble::new(vec![zero.clone(), zero.clone(), zero]).unwrap();
        let shape = factorized(2, 1, 2);
        let params = random_params(shape.clone(), &mut rng);
        let grad = loss_gradient_analytic(&params, &inputs, &targets, 1).unwrap();
        for q in 1..3 {
            let p = shape.flat_index(1, shape.layer_index(q, 2));
            assert!(grad[p].abs() < 1e-14);
        }
        for q in 0..1 {
            for slot in 0..3 {
                assert_eq!(grad[shape.flat_index(0, shape.layer_index(q, slot))], 0.0);
            }
        }
    }

    #[test]
    fn swapping_commutator_roles_flips_sign() {
        // Tr(P A[K,X]A†) = −Tr(X [K, A†PA]): propagating the targets instead
        // of the inputs through the commutator negates each cross-term entry.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let src = RandomSource::new(8);
        let inputs = haar_ensemble(2, 3, &src.child(0)).unwrap();
        let targets = haar_ensemble(2, 3, &src.child(1)).unwrap();
        let params = random_params(factorized(2, 1, 2), &mut rng);
        let p_t = projector_sum(&targets);
        let r_in = projector_sum(&inputs);
        for index in 0..params.shape.param_count() {
            let Some(t) = analytic_terms(&params, index, 1).unwrap() else {
                continue;
            };
            let x = &t.before * &r_in * t.before.adjoint();
            let y = t.after.adjoint() * &p_t * &t.after;
            let forward = (&p_t * &t.after * (&t.generator * &x - &x * &t.generator) * t.after.adjoint()).trace();
            let swapped = (&x * (&t.generator * &y - &y * &t.generator)).trace();
            assert!((forward + swapped).norm() < 1e-12);
            // The self-terms do not enter: the generated Gram is constant here.
        }
    }
}
