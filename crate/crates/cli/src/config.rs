use std::path::{Path, PathBuf};

use hhn_core::blocksel::SelectionBudget;
use hhn_core::datagen::{ArrayConfig, DatasetKind, SingleConfig};
use hhn_core::hyperinit::{InitScheme, MicroStack};
use hhn_core::nets::{ArchConfig, EvalMode, TrainConfig};
use hhn_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "HHN_OUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerOptions {
    pub snr_db: f64,
    pub k: f64,
    pub iterations: u64,
    pub max_antennas: usize,
}

impl Default for BerOptions {
    fn default() -> Self {
        Self {
            snr_db: 4.0,
            k: 2.8,
            iterations: 100_000,
            max_antennas: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    /// `None` probes every scheme.
    pub scheme: Option<InitScheme>,
    pub trials: usize,
    pub elu: bool,
    pub stack: MicroStack,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            scheme: None,
            trials: 10_000,
            elu: false,
            stack: MicroStack::default(),
        }
    }
}

/// Input locations. The output directory is not recorded, so identical
/// runs written to different places produce identical files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub simulator: Option<PathBuf>,
    pub resume: Option<PathBuf>,
}

/// Everything that determines a run's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub count: usize,
    pub kind: DatasetKind,
    pub single: SingleConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    /// Stop after this many epochs; a later `--resume` continues the run.
    pub stop_after: Option<usize>,
    pub init: InitScheme,
    pub selection: SelectionBudget,
    /// Point subset for block-selection losses.
    pub selection_points: Option<usize>,
    /// Explicit hyperhypernetwork layers; skips block selection.
    pub layers: Option<Vec<usize>>,
    pub ber: BerOptions,
    pub probe: ProbeOptions,
    pub eval_mode: EvalMode,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            seed: 0,
            count: 100,
            kind: DatasetKind::Single,
            single: SingleConfig::default(),
            arch: ArchConfig::default(),
            train: TrainConfig::default(),
            stop_after: None,
            init: InitScheme::HyperhyperFanin,
            // desk-scale dials; the full procedure uses 10000 trials and 1000 bins
            selection: SelectionBudget {
                trials: 50,
                bins: 20,
                probe_samples: 8,
                ..SelectionBudget::default()
            },
            selection_points: Some(512),
            layers: None,
            ber: BerOptions::default(),
            probe: ProbeOptions::default(),
            eval_mode: EvalMode::Model,
            paths: Paths::default(),
        }
    }
}

/// Overlays `patch` onto `base`, recursing into objects.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// First key of `patch` that has no counterpart in an object of `base`.
fn unknown_key(base: &Value, patch: &Value) -> Option<String> {
    let (Value::Object(b), Value::Object(p)) = (base, patch) else {
        return None;
    };
    p.iter().find_map(|(k, v)| match b.get(k) {
        None => Some(k.clone()),
        Some(inner) => unknown_key(inner, v).map(|sub| format!("{k}.{sub}")),
    })
}

impl RunConfig {
    /// Defaults overlaid with the JSON file at `path`, if any. Keys may be partial
    /// at any depth; unknown keys are rejected.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        let patch: Value = serde_json::from_str(&text)?;
        let mut value = serde_json::to_value(Self::default())?;
        if let Some(key) = unknown_key(&value, &patch) {
            return Err(Error::Config(format!(
                "config {}: unknown key {key:?}",
                path.display()
            )));
        }
        merge(&mut value, patch);
        Ok(serde_json::from_value(value)?)
    }

    /// Layout and grids of generated data follow the architecture.
    pub fn single_config(&self) -> SingleConfig {
        SingleConfig {
            voxels: self.arch.voxels,
            sphere: self.arch.sphere,
            ..self.single.clone()
        }
    }

    pub fn array_layout(&self) -> ArrayConfig {
        self.arch.array.clone()
    }

    /// Header lines embedded in every output file.
    pub fn header(&self) -> Result<Vec<String>> {
        Ok(vec![
            format!("hhn {}", env!("CARGO_PKG_VERSION")),
            format!("run_config {}", serde_json::to_string(self)?),
        ])
    }
}

/// `--out`, else `$HHN_OUT_ROOT/<command>`, else `runs/<command>`.
pub fn output_dir(out: Option<PathBuf>, command: &str) -> PathBuf {
    out.unwrap_or_else(|| {
        let root = std::env::var_os(OUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| "runs".into());
        root.join(command)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_overrides_nested_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(
            &path,
            r#"{"seed": 7, "arch": {"primary_hidden": 3}, "ber": {"k": 1.5}}"#,
        )
        .unwrap();
        let cfg = RunConfig::load(Some(&path)).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.arch.primary_hidden, 3);
        assert_eq!(cfg.arch.voxels, ArchConfig::default().voxels);
        assert_eq!(cfg.ber.k, 1.5);
        assert_eq!(cfg.ber.snr_db, 4.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"sede": 7}"#).unwrap();
        assert!(RunConfig::load(Some(&path)).is_err());
    }
}
