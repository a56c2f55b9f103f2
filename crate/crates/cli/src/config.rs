//! Run configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use rsd_core::lm::ModelPair;
use rsd_core::{DecoderKind, NGramModel, Token, Transforms};
use serde::Deserialize;
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub decoders: Vec<DecoderEntry>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub transforms: Transforms,
    pub output: OutputSpec,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default = "default_task")]
    pub task: String,
    pub draft: PathBuf,
    pub target: PathBuf,
    /// Parameter counts (any common unit) for the MBSU size ratio.
    pub draft_size: f64,
    pub target_size: f64,
}

fn default_task() -> String {
    "toy".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderEntry {
    pub kind: String,
    #[serde(default)]
    pub params: Value,
    #[serde(default = "default_mode")]
    pub mode: String,
}

fn default_mode() -> String {
    "exp1".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub length: usize,
    #[serde(default)]
    pub prompt: Vec<Token>,
}

/// Pass/fail thresholds for `verify`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub rrs_max_abs_error: f64,
    pub plackett_luce_min_p_value: f64,
    pub first_token_tv: f64,
    pub sequence_tv: f64,
    pub sequence_length: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            rrs_max_abs_error: 1e-9,
            plackett_luce_min_p_value: 1e-3,
            first_token_tv: 0.02,
            sequence_tv: 0.03,
            sequence_length: 3,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SdParams {
    #[serde(rename = "L")]
    l: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecTrParams {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "L")]
    l: usize,
    gamma: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RsdCParams {
    b: Vec<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RsdSParams {
    #[serde(rename = "W")]
    w: usize,
    #[serde(rename = "L")]
    l: usize,
}

impl DecoderEntry {
    pub fn decoder_kind(&self) -> Result<DecoderKind, CliError> {
        fn params<T: for<'de> Deserialize<'de>>(kind: &str, v: &Value) -> Result<T, CliError> {
            serde_json::from_value(v.clone())
                .map_err(|e| CliError::BadConfig(format!("decoder {kind}: params: {e}")))
        }
        let kind = match self.kind.as_str() {
            "AR" => {
                if !(self.params.is_null() || self.params.as_object().is_some_and(|o| o.is_empty())) {
                    return Err(CliError::BadConfig("decoder AR takes no params".into()));
                }
                DecoderKind::Ar
            }
            "SD" => {
                let p: SdParams = params("SD", &self.params)?;
                DecoderKind::Sd { draft_length: p.l }
            }
            "SpecTr" => {
                let p: SpecTrParams = params("SpecTr", &self.params)?;
                DecoderKind::SpecTr {
                    num_paths: p.k,
                    draft_length: p.l,
                    gamma: p.gamma.unwrap_or(p.k as f64),
                }
            }
            "RSD-C" => {
                let p: RsdCParams = params("RSD-C", &self.params)?;
                DecoderKind::RsdC { branching: p.b }
            }
            "RSD-S" => {
                let p: RsdSParams = params("RSD-S", &self.params)?;
                DecoderKind::RsdS {
                    beam_width: p.w,
                    draft_length: p.l,
                }
            }
            other => {
                return Err(CliError::BadConfig(format!(
                    "unknown decoder kind {other:?} (expected AR, SD, SpecTr, RSD-C or RSD-S)"
                )))
            }
        };
        kind.validate()
            .map_err(|e| CliError::BadConfig(format!("decoder {}: {e}", self.kind)))?;
        Ok(kind)
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::BadConfig(format!("{}: {e}", path.display())))?;
        let mut cfg: Config = serde_json::from_str(&text)
            .map_err(|e| CliError::BadConfig(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.models.is_empty() {
            return Err(CliError::BadConfig("`models` is empty".into()));
        }
        self.transforms
            .validate()
            .map_err(|e| CliError::BadConfig(format!("transforms: {e}")))?;
        for m in &self.models {
            if !(m.draft_size > 0.0 && m.target_size > 0.0) {
                return Err(CliError::BadConfig(format!("model {}: sizes must be positive", m.name)));
            }
        }
        for d in &self.decoders {
            d.decoder_kind()?;
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn load_pair(&self, spec: &ModelSpec) -> Result<ModelPair, CliError> {
        let load = |p: &Path| {
            let path = self.resolve(p);
            NGramModel::load(&path).map_err(|e| CliError::BadConfig(e.to_string()))
        };
        let pair = ModelPair::new(load(&spec.draft)?, load(&spec.target)?)
            .map_err(|e| CliError::BadConfig(format!("model {}: {e}", spec.name)))?;
        if let Some(&t) = self.output.prompt.iter().find(|&&t| t >= pair.vocab_size()) {
            return Err(CliError::BadConfig(format!(
                "prompt token {t} outside vocabulary of model {}",
                spec.name
            )));
        }
        Ok(pair)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(kind: &str, params: Value) -> DecoderEntry {
        DecoderEntry {
            kind: kind.into(),
            params,
            mode: "exp1".into(),
        }
    }

    #[test]
    fn decoder_params() {
        use serde_json::json;
        assert_eq!(entry("AR", Value::Null).decoder_kind().unwrap(), DecoderKind::Ar);
        assert_eq!(
            entry("SpecTr", json!({"K": 3, "L": 2})).decoder_kind().unwrap(),
            DecoderKind::SpecTr { num_paths: 3, draft_length: 2, gamma: 3.0 }
        );
        assert_eq!(
            entry("RSD-C", json!({"b": [2, 2]})).decoder_kind().unwrap(),
            DecoderKind::RsdC { branching: vec![2, 2] }
        );
        assert!(entry("SD", json!({"L": 2, "K": 1})).decoder_kind().is_err());
        assert!(entry("SD", json!({})).decoder_kind().is_err());
        assert!(entry("XYZ", Value::Null).decoder_kind().is_err());
        assert!(entry("SpecTr", json!({"K": 2, "L": 2, "gamma": 3})).decoder_kind().is_err());
    }

    #[test]
    fn unknown_top_level_key_is_rejected() {
        let text = r#"{"models": [], "trials": 1, "seed": 0, "output": {"length": 1}, "tirals": 3}"#;
        assert!(serde_json::from_str::<Config>(text).is_err());
    }
}
