//! Experiment configuration.

use serde::{Deserialize, Serialize};

use crate::duddpm::{InitMode, Variant};
use crate::error::{Error, Result};

/// Full description of a run. Unknown keys are rejected when parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_data: usize,
    /// Register sizes swept by the barren-plateau experiment.
    pub n_data_grid: Vec<usize>,
    pub n_ancilla: usize,
    /// Number of diffusion steps and denoising cycles `T`.
    pub cycles: usize,
    pub epochs: usize,
    pub n_layers: usize,
    pub lr: f64,
    pub tau: usize,
    /// `|S|`, real ensemble size per step.
    pub ensemble_size: usize,
    /// `|S̃|`, generated ensemble size.
    pub generated_size: usize,
    pub variant: Variant,
    pub h_start: f64,
    /// Final scrambling scale; `None` selects the variant default
    /// (fixed for the original schedule, calibrated for the improved one).
    pub h_end: Option<f64>,
    pub distance_floor: f64,
    /// Target distance to Haar when calibrating the improved schedule.
    pub improved_target_mmd: f64,
    /// Half-width of the near-zero starting ensemble.
    pub epsilon: f64,
    pub init: InitMode,
    /// Initialization used by the improved variant, when it differs.
    pub improved_init: Option<InitMode>,
    /// Cycles trained by the barren-plateau sweep.
    pub sweep_cycles: usize,
    /// Ensemble size used for the final generation and its KL trace.
    pub generation_size: usize,
    pub theorem1_grid: Vec<usize>,
    pub theorem1_layers: usize,
    pub theorem1_samples: usize,
    pub theorem2_instances: usize,
    pub theorem2_layers: usize,
    pub theorem2_scale: f64,
    pub theorem2_samples: usize,
    pub seed: u64,
    pub output_dir: Option<String>,
}

/// Default final scale of the original schedule.
pub const ORIGINAL_H_END: f64 = 4.0;

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_data: 4,
            n_data_grid: vec![1, 4, 7],
            n_ancilla: 3,
            cycles: 30,
            epochs: 300,
            n_layers: 5,
            lr: 0.005,
            tau: 3,
            ensemble_size: 100,
            generated_size: 20,
            variant: Variant::Original,
            h_start: 0.1,
            h_end: None,
            distance_floor: 0.1,
            improved_target_mmd: 0.15,
            epsilon: 0.1,
            init: InitMode::Normal { std: 1.0 },
            improved_init: Some(InitMode::Uniform { scale: 0.5 }),
            sweep_cycles: 6,
            generation_size: 200,
            theorem1_grid: vec![2, 4, 6],
            theorem1_layers: 2,
            theorem1_samples: 20_000,
            theorem2_instances: 50,
            theorem2_layers: 3,
            theorem2_scale: 0.5,
            theorem2_samples: 10_000,
            seed: 0,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.n_data == 0 || self.n_data_grid.contains(&0) {
            return fail("n_data must be positive");
        }
        if self.cycles == 0 || self.n_layers == 0 {
            return fail("cycles and n_layers must be positive");
        }
        if self.tau != 3 {
            return fail("tau must be 3 (R_X, R_Y, R_Z per qubit)");
        }
        if self.generated_size == 0 || self.generated_size > self.ensemble_size {
            return fail("need 0 < generated_size <= ensemble_size");
        }
        if self.ensemble_size < 2 || self.generation_size < 2 {
            return fail("ensembles need at least two members");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail("lr must be finite and non-negative");
        }
        if !(self.h_start >= 0.0 && self.h_start.is_finite()) || self.h_end.is_some_and(|h| !(h >= 0.0 && h.is_finite())) {
            return fail("schedule scales must be finite and non-negative");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 || self.theorem2_scale.is_nan() || self.theorem2_scale <= 0.0 {
            return fail("epsilon and theorem2_scale must be positive");
        }
        Ok(())
    }

    /// Initialization for `variant`.
    pub fn init_for(&self, variant: Variant) -> InitMode {
        match (variant, self.improved_init) {
            (Variant::Improved, Some(init)) => init,
            _ => self.init,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_table_one() {
        let c = RunConfig::default();
        assert_eq!((c.n_ancilla, c.cycles, c.epochs, c.n_layers, c.tau), (3, 30, 300, 5, 3));
        assert_eq!(c.lr, 0.005);
        assert_eq!((c.ensemble_size, c.generated_size), (100, 20));
        c.validate().unwrap();
    }

    #[test]
    fn json_round_trip_and_partial_documents() {
        let c = RunConfig { n_data: 2, h_end: Some(1.25), variant: Variant::Improved, ..RunConfig::default() };
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        let partial = RunConfig::from_json(r#"{"n_data": 7, "epochs": 50}"#).unwrap();
        assert_eq!(partial.n_data, 7);
        assert_eq!(partial.cycles, 30);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_json(r#"{"n_dat": 3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"generated_size": 200}"#).is_err());
        assert!(RunConfig::from_json(r#"{"tau": 2}"#).is_err());
        assert!(RunConfig::from_json(r#"{"lr": -1.0}"#).is_err());
    }
}
