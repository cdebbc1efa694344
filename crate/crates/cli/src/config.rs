//! Per-command run configurations and their JSON loading rules.

use std::fs;
use std::path::{Path, PathBuf};

use gbcosface_core::gradcheck::GradCheckConfig;
use gbcosface_core::toy::{ToyDataset, TrainConfig};
use gbcosface_core::{LossConfig, Variant};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Settings shared by every command that scores verification pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub far_levels: Vec<f64>,
    pub max_pairs_per_class: usize,
    pub pair_seed: u64,
    /// Upper bound on ROC points kept in reports.
    pub roc_points: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            far_levels: vec![1e-3, 1e-2, 1e-1],
            max_pairs_per_class: 100_000,
            pair_seed: 7,
            roc_points: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckGradientsConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub suite: GradCheckConfig,
}

impl Default for CheckGradientsConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            suite: GradCheckConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainToyConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub dataset: ToyDataset,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub optimizer: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl Default for TrainToyConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            dataset: ToyDataset::default(),
            loss: LossConfig::default(),
            optimizer: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAlphaConfig {
    pub schema_version: u32,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub dataset: ToyDataset,
    /// Base loss; `alpha` is replaced by each grid value.
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub optimizer: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_alphas() -> Vec<f64> {
    vec![0.0, 0.05, 0.15, 0.25, 0.35, 0.6, 0.8, 1.0]
}

impl Default for SweepAlphaConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            alphas: default_alphas(),
            dataset: ToyDataset::default(),
            loss: LossConfig::default(),
            optimizer: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// One boundary map request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapEntry {
    pub variant: Variant,
    /// Cosine margin, or angular margin in radians for ArcFace.
    pub m: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "default_p_vg")]
    pub p_vg: f64,
}

fn default_p_vg() -> f64 {
    0.62
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryMapConfig {
    pub schema_version: u32,
    /// Angle between the two prototypes, degrees.
    #[serde(default = "default_angle")]
    pub angle_deg: f64,
    #[serde(default = "default_resolution")]
    pub grid_resolution: usize,
    #[serde(default = "default_maps")]
    pub maps: Vec<MapEntry>,
}

fn default_angle() -> f64 {
    gbcosface_core::geometry::DEFAULT_ANGLE_DEG
}

fn default_resolution() -> usize {
    96
}

fn default_maps() -> Vec<MapEntry> {
    let entry = |variant, m, alpha| MapEntry {
        variant,
        m,
        alpha,
        p_vg: default_p_vg(),
    };
    let mut maps = vec![
        entry(Variant::NormalizedSoftmax, 0.0, 0.0),
        entry(Variant::CosFace, 0.3, 0.0),
        entry(Variant::ArcFace, 0.3, 0.0),
    ];
    for alpha in [0.0, 0.2, 0.5, 0.8, 1.0] {
        maps.push(entry(Variant::GbCosFace, 0.15, alpha));
    }
    maps
}

impl Default for BoundaryMapConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            angle_deg: default_angle(),
            grid_resolution: default_resolution(),
            maps: default_maps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalPairsConfig {
    pub schema_version: u32,
    /// Embeddings CSV with an `id` column followed by coordinates.
    #[serde(default = "default_input")]
    pub input: PathBuf,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_input() -> PathBuf {
    PathBuf::from("embeddings_final.csv")
}

impl Default for EvalPairsConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            input: default_input(),
            eval: EvalConfig::default(),
        }
    }
}

/// Reads a config for `command`.
///
/// `path` may hold a plain config or a run manifest, whose `config` member is
/// used. Without a path the defaults apply. Each `key=value` override then
/// replaces the value at a dotted path; values parse as JSON and fall back
/// to plain strings.
pub fn load<T>(path: Option<&Path>, command: &str, overrides: &[String]) -> Result<T>
where
    T: Serialize + DeserializeOwned + Default,
{
    let mut value = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            let v: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            unwrap_manifest(v, command)?
        }
        None => serde_json::to_value(T::default()).expect("defaults serialize"),
    };
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    check_schema(&value)?;
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("config: {e}")))
}

fn unwrap_manifest(v: Value, command: &str) -> Result<Value> {
    let Value::Object(mut map) = v else {
        return Err(CliError::Usage("config must be a JSON object".into()));
    };
    if !map.contains_key("manifest_version") {
        return Ok(Value::Object(map));
    }
    match map.get("command").and_then(Value::as_str) {
        Some(c) if c == command => {}
        other => {
            return Err(CliError::Usage(format!(
                "manifest was written by {:?}, not {command}",
                other.unwrap_or("an unknown command")
            )))
        }
    }
    map.remove("config")
        .ok_or_else(|| CliError::Usage("manifest has no config".into()))
}

fn check_schema(v: &Value) -> Result<()> {
    match v.get("schema_version").and_then(Value::as_u64) {
        Some(n) if n == u64::from(SCHEMA_VERSION) => Ok(()),
        Some(n) => Err(CliError::Usage(format!(
            "unsupported schema_version {n}, expected {SCHEMA_VERSION}"
        ))),
        None => Err(CliError::Usage("config needs an integer schema_version".into())),
    }
}

/// Sets `key.path=value` inside `root`. Array elements are addressed by index.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {spec:?}")))?;
    if key.is_empty() {
        return Err(CliError::Usage(format!("--set has an empty key in {spec:?}")));
    }
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let last = depth + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert((*part).to_string(), parsed);
                    return Ok(());
                }
                map.get_mut(*part)
                    .ok_or_else(|| CliError::Usage(format!("unknown config key {key:?}")))?
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| CliError::Usage(format!("{part:?} in {key:?} is not an index")))?;
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| CliError::Usage(format!("index {idx} out of range in {key:?}")))?;
                if last {
                    *slot = parsed;
                    return Ok(());
                }
                slot
            }
            _ => return Err(CliError::Usage(format!("{key:?} descends into a scalar"))),
        };
    }
    unreachable!("the loop returns on the last segment")
}
