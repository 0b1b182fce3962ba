use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Full-precision decimal with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Short stable identifier derived from the command name and configuration.
pub fn run_id(command: &str, config_json: &str) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update([0u8]);
    h.update(config_json.as_bytes());
    hex::encode(&h.finalize()[..8])
}

/// Output directory of one run. Every table gets `run_id` and `seed` as its
/// leading columns.
#[derive(Debug, Clone)]
pub struct Output {
    pub dir: PathBuf,
    pub run_id: String,
    pub seed: u64,
}

impl Output {
    pub fn create(dir: &Path, run_id: String, seed: u64) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), run_id, seed })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        let seed = self.seed.to_string();
        w.write_record(["run_id", "seed"].iter().chain(header))?;
        for row in rows {
            w.write_record([&self.run_id, &seed].into_iter().chain(row))?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn run_id_depends_on_inputs() {
        let a = run_id("train", "{}");
        assert_eq!(a.len(), 16);
        assert_eq!(a, run_id("train", "{}"));
        assert_ne!(a, run_id("diffuse", "{}"));
        assert_ne!(a, run_id("train", "{ }"));
    }

    #[test]
    fn csv_has_identity_columns() {
        let dir = tempfile::tempdir().unwrap();
        let out = Output::create(dir.path(), "abc".into(), 7).unwrap();
        let path = out.write_csv("t.csv", &["x"], &[vec!["1".into()], vec!["2".into()]]).unwrap();
        let text = fs::read_to_string(path).unwrap();
        assert_eq!(text, "run_id,seed,x\nabc,7,1\nabc,7,2\n");
    }
}
