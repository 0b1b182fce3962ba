use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{apply_qsc_step, QscStepSpec};
use crate::error::{Error, Result};
use crate::qsim::Ensemble;
use crate::random::RandomSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Targets diffuse to Haar; denoising starts from Haar states.
    Original,
    /// Diffusion stops short of Haar; denoising starts from the diffused
    /// neighbourhood of `|0…0⟩`.
    Improved,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Improved => "improved",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Variant::Original),
            "improved" => Ok(Variant::Improved),
            other => Err(Error::InvalidArgument(format!("unknown variant `{other}`"))),
        }
    }
}

/// Per-step scrambling scales, evenly spaced from `h_start` to `h_end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    pub h_start: f64,
    pub h_end: f64,
    pub h: Vec<f64>,
    pub variant: Variant,
}

impl DiffusionSchedule {
    pub fn linspace(h_start: f64, h_end: f64, steps: usize, variant: Variant) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("diffusion needs at least one step".into()));
        }
        if !(h_start.is_finite() && h_end.is_finite() && h_start >= 0.0 && h_end >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "scales must be finite and non-negative, got {h_start}..{h_end}"
            )));
        }
        let h = if steps == 1 {
            vec![h_start]
        } else {
            let step = (h_end - h_start) / (steps - 1) as f64;
            (0..steps)
                .map(|t| if t == steps - 1 { h_end } else { h_start + step * t as f64 })
                .collect()
        };
        Ok(Self { h_start, h_end, h, variant })
    }

    pub fn steps(&self) -> usize {
        self.h.len()
    }
}

/// Runs the forward scrambling process and returns `S_0 … S_T`.
///
/// Member `i` draws its raw angles from `source.child(i)`, fresh at every
/// step, so the same source with a rescaled schedule reuses the same draws.
pub fn forward_diffuse(
    initial: &Ensemble,
    schedule: &DiffusionSchedule,
    source: &RandomSource,
) -> Result<Vec<Ensemble>> {
    let n = initial.n_qubits();
    let steps = schedule.steps();
    let trajectories = initial
        .states()
        .par_iter()
        .enumerate()
        .map(|(i, state)| {
            let mut rng = source.child(i as u64).rng();
            let mut current = state.clone();
            let mut path = Vec::with_capacity(steps + 1);
            path.push(current.clone());
            for &scale in &schedule.h {
                let spec = QscStepSpec::sample(n, scale, &mut rng);
                apply_qsc_step(&mut current, &spec)?;
                path.push(current.clone());
            }
            Ok(path)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut per_step: Vec<Vec<_>> = (0..=steps).map(|_| Vec::with_capacity(initial.len())).collect();
    for path in trajectories {
        for (t, state) in path.into_iter().enumerate() {
            per_step[t].push(state);
        }
    }
    per_step.into_iter().map(Ensemble::new).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::ghz_ensemble;

    #[test]
    fn linspace_endpoints() {
        let s = DiffusionSchedule::linspace(0.1, 4.0, 30, Variant::Original).unwrap();
        assert_eq!(s.h.len(), 30);
        assert_eq!(s.h[0], 0.1);
        assert_eq!(s.h[29], 4.0);
        let d = s.h[1] - s.h[0];
        for w in s.h.windows(2) {
            assert!((w[1] - w[0] - d).abs() < 1e-12);
        }
        assert_eq!(DiffusionSchedule::linspace(0.3, 1.0, 1, Variant::Original).unwrap().h, vec![0.3]);
        assert!(DiffusionSchedule::linspace(0.1, 1.0, 0, Variant::Original).is_err());
        assert!(DiffusionSchedule::linspace(-0.1, 1.0, 3, Variant::Original).is_err());
    }

    #[test]
    fn zero_schedule_keeps_states() {
        let src = RandomSource::new(2);
        let s0 = ghz_ensemble(3, 10, &src).unwrap();
        let sched = DiffusionSchedule::linspace(0.0, 0.0, 5, Variant::Original).unwrap();
        let traj = forward_diffuse(&s0, &sched, &src.child(1)).unwrap();
        assert_eq!(traj.len(), 6);
        for ens in &traj {
            assert_eq!(ens, &s0);
        }
    }

    #[test]
    fn diffusion_is_deterministic_and_normalized() {
        let src = RandomSource::new(8);
        let s0 = ghz_ensemble(3, 8, &src).unwrap();
        let sched = DiffusionSchedule::linspace(0.1, 2.0, 6, Variant::Original).unwrap();
        let a = forward_diffuse(&s0, &sched, &src.child(1)).unwrap();
        let b = forward_diffuse(&s0, &sched, &src.child(1)).unwrap();
        assert_eq!(a, b);
        for ens in &a {
            for s in ens.states() {
                assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("improved".parse::<Variant>().unwrap(), Variant::Improved);
        assert!("other".parse::<Variant>().is_err());
    }
}
