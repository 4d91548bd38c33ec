// SPDX-License-Identifier: MIT OR Apache-2.0

//! Desk-scale studies of how schedules shape the diffusion process.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

pub mod ablation;
pub mod crps;
pub mod proxy;
pub mod robustness;
pub mod trace;

pub use ablation::{de_ablation, AblationConfig, AblationReport};
pub use crps::crps;
pub use proxy::{proxy_step_classification, ConfusionMatrix, ProxyConfig, ProxyOutcome};
pub use robustness::{robustness_scan, ScanReport};
pub use trace::{generation_trace, GenerationTrace};

/// JSON envelope written next to every experiment's artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct Report<C: Serialize, R: Serialize> {
    pub experiment: String,
    pub dataset: String,
    pub spec: String,
    pub seed: u64,
    pub config: C,
    pub results: R,
}

/// File stem `experiment_dataset_spec_seedN` with characters outside
/// `[A-Za-z0-9.-]` replaced by `-`.
pub fn artifact_stem(experiment: &str, dataset: &str, spec: &str, seed: u64) -> String {
    let clean = |s: &str| -> String {
        s.chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '-' })
            .collect()
    };
    format!("{}_{}_{}_seed{seed}", clean(experiment), clean(dataset), clean(spec))
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_artifact(dir, name, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems_are_filename_safe() {
        assert_eq!(artifact_stem("proxy", "ar1", "cos:T=20,tau=2.0", 7), "proxy_ar1_cos-T-20-tau-2.0_seed7");
        assert_eq!(artifact_stem("scan", "my data/x", "lin:T=10+zero", 0), "scan_my-data-x_lin-T-10-zero_seed0");
    }

    #[test]
    fn writes_into_fresh_directory() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("a/b");
        let p = write_json(&sub, "r.json", &serde_json::json!({"k": 1})).unwrap();
        assert_eq!(fs::read_to_string(p).unwrap(), "{\n  \"k\": 1\n}\n");
    }
}
