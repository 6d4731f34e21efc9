//! Run configuration: a flat TOML file with one level of sections, strict
//! unknown-key rejection, and a CLI-override layer. Precedence is
//! command-line `--set` > config file > built-in default.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::PriorFamily;
use crate::ot::CostFn;
use crate::revnet::{preset, preset_names, ArchSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchitectureCfg {
    pub preset: String,
}

impl Default for ArchitectureCfg {
    fn default() -> Self {
        ArchitectureCfg { preset: "mnist-small".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorCfg {
    /// "standard-normal" or "uniform".
    pub family: String,
    /// Number of active latent dims (k most-varying encoder dims).
    pub k: usize,
    pub clip_bound: f64,
    /// Sample size used to pick the active dims at initialization.
    pub select_sample: usize,
}

impl Default for PriorCfg {
    fn default() -> Self {
        PriorCfg { family: "standard-normal".into(), k: 64, clip_bound: 2.0, select_sample: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossesCfg {
    pub lambda_l1: f64,
    pub lambda_l2: f64,
    /// Weight of the perturbation term in the transport regime.
    pub lambda_p: f64,
    /// Latent noise std for the perturbation term.
    pub noise_std: f64,
    /// "euclidean" (default) or "squared-euclidean".
    pub ot_cost: String,
}

impl Default for LossesCfg {
    fn default() -> Self {
        LossesCfg {
            lambda_l1: 1.0,
            lambda_l2: 1.0,
            lambda_p: 1.0,
            noise_std: 0.1,
            ot_cost: "euclidean".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingCfg {
    /// Reconstruction-only warm-up epochs before the adversary joins.
    pub recon_epochs: usize,
    /// Adversarial epochs after the warm-up.
    pub adv_epochs: usize,
    /// Transport-regime epochs.
    pub ot_epochs: usize,
    pub batch_size: usize,
    /// Rows per class in a transport minibatch (the assignment solver is
    /// cubic in this).
    pub per_class_batch: usize,
    pub lr_net: f64,
    pub lr_disc: f64,
    pub lr_prior: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed_net: u64,
    pub seed_data: u64,
    pub seed_adv: u64,
    /// Save a checkpoint every this many epochs (0 = only the final one).
    pub checkpoint_every: usize,
    /// Worker threads; this build is single-threaded by design, so 1 is the
    /// only accepted value — the key exists to make that contract explicit.
    pub threads: usize,
}

impl Default for TrainingCfg {
    fn default() -> Self {
        TrainingCfg {
            recon_epochs: 20,
            adv_epochs: 50,
            ot_epochs: 20,
            batch_size: 64,
            per_class_batch: 32,
            lr_net: 1e-4,
            lr_disc: 4e-4,
            lr_prior: 1e-3,
            beta1: 0.0,
            beta2: 0.9,
            seed_net: 1,
            seed_data: 2,
            seed_adv: 3,
            checkpoint_every: 0,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalCfg {
    /// Feature map for the distribution metric: "classifier" or "identity".
    pub feature: String,
    /// Samples drawn per evaluation.
    pub sample_n: usize,
    /// Count a latent dim as live when its std exceeds this fraction of the
    /// class's largest std.
    pub std_threshold: f64,
    pub classifier_seed: u64,
    pub classifier_epochs: usize,
    pub classifier_train_n: usize,
}

impl Default for EvalCfg {
    fn default() -> Self {
        EvalCfg {
            feature: "classifier".into(),
            sample_n: 256,
            std_threshold: 0.01,
            classifier_seed: 77,
            classifier_epochs: 3,
            classifier_train_n: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataCfg {
    /// "mnist" or "synthetic".
    pub source: String,
    pub mnist_dir: String,
    /// Cap on training examples per class (0 = use everything).
    pub subset_per_class: usize,
    pub synth_n: usize,
    pub synth_classes: usize,
    pub synth_side: usize,
    pub synth_seed: u64,
}

impl Default for DataCfg {
    fn default() -> Self {
        DataCfg {
            source: "mnist".into(),
            mnist_dir: "data/mnist".into(),
            subset_per_class: 0,
            synth_n: 512,
            synth_classes: 4,
            synth_side: 8,
            synth_seed: 9,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub architecture: ArchitectureCfg,
    pub prior: PriorCfg,
    pub losses: LossesCfg,
    pub training: TrainingCfg,
    pub eval: EvalCfg,
    pub data: DataCfg,
}

impl Config {
    pub fn arch_spec(&self) -> Result<ArchSpec> {
        preset(&self.architecture.preset).ok_or_else(|| {
            Error::Config(format!(
                "unknown architecture preset '{}', expected one of {:?}",
                self.architecture.preset,
                preset_names()
            ))
        })
    }

    pub fn prior_family(&self) -> Result<PriorFamily> {
        match self.prior.family.as_str() {
            "standard-normal" => Ok(PriorFamily::StandardNormal),
            "uniform" => Ok(PriorFamily::Uniform),
            other => Err(Error::Config(format!(
                "unknown prior family '{other}', expected standard-normal or uniform"
            ))),
        }
    }

    pub fn cost_fn(&self) -> Result<CostFn> {
        match self.losses.ot_cost.as_str() {
            "euclidean" => Ok(CostFn::Euclidean),
            "squared-euclidean" => Ok(CostFn::SquaredEuclidean),
            other => Err(Error::Config(format!(
                "unknown losses.ot_cost '{other}', expected euclidean or squared-euclidean"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch_spec()?;
        self.prior_family()?;
        self.cost_fn()?;
        if self.training.threads != 1 {
            return Err(Error::Config(format!(
                "training.threads must be 1 (single-threaded build), got {}",
                self.training.threads
            )));
        }
        if self.training.per_class_batch == 0 || self.training.per_class_batch >= 1000 {
            return Err(Error::Config(format!(
                "training.per_class_batch must be in [1, 1000), got {}",
                self.training.per_class_batch
            )));
        }
        if self.training.batch_size == 0 {
            return Err(Error::Config("training.batch_size must be positive".into()));
        }
        if self.prior.k == 0 {
            return Err(Error::Config("prior.k must be positive".into()));
        }
        if !(self.prior.clip_bound > 0.0) {
            return Err(Error::Config(format!(
                "prior.clip_bound must be positive, got {}",
                self.prior.clip_bound
            )));
        }
        for (name, v) in [
            ("losses.lambda_l1", self.losses.lambda_l1),
            ("losses.lambda_l2", self.losses.lambda_l2),
            ("losses.lambda_p", self.losses.lambda_p),
            ("losses.noise_std", self.losses.noise_std),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        for (name, v) in [
            ("training.lr_net", self.training.lr_net),
            ("training.lr_disc", self.training.lr_disc),
            ("training.lr_prior", self.training.lr_prior),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("training.beta1", self.training.beta1), ("training.beta2", self.training.beta2)]
        {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {v}")));
            }
        }
        match self.eval.feature.as_str() {
            "classifier" | "identity" => {}
            other => {
                return Err(Error::Config(format!(
                    "unknown eval feature '{other}', expected classifier or identity"
                )))
            }
        }
        match self.data.source.as_str() {
            "mnist" | "synthetic" => {}
            other => {
                return Err(Error::Config(format!(
                    "unknown data source '{other}', expected mnist or synthetic"
                )))
            }
        }
        Ok(())
    }

    /// Canonical TOML text (stable field order) for run-dir snapshots.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("serialize config: {e}")))
    }
}

/// Parse an override value with TOML scalar syntax; anything that does not
/// parse as a TOML scalar is taken as a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    if let Ok(table) = doc.parse::<toml::Table>() {
        if let Some(v) = table.get("v") {
            if !v.is_table() && !v.is_array() {
                return v.clone();
            }
        }
    }
    toml::Value::String(raw.to_string())
}

/// Apply one `section.key=value` override to a TOML table.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' is not of the form section.key=value")))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| Error::Config(format!("override key '{path}' is not of the form section.key")))?;
    if section.is_empty() || key.is_empty() || key.contains('.') {
        return Err(Error::Config(format!(
            "override key '{path}' must have exactly one section and one key"
        )));
    }
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(sec) = entry else {
        return Err(Error::Config(format!("config section '{section}' is not a table")));
    };
    sec.insert(key.to_string(), parse_override_value(raw.trim()));
    Ok(())
}

impl Config {
    /// Parse and validate TOML text (e.g. a checkpoint's embedded snapshot).
    pub fn from_toml_str(text: &str) -> Result<Config> {
        let table = text
            .parse::<toml::Table>()
            .map_err(|e| Error::Config(format!("config snapshot: {e}")))?;
        let cfg: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Load a config with full precedence: defaults, then the optional file,
/// then `--set section.key=value` overrides. Unknown keys anywhere are
/// rejected by name; the result is validated.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<Config> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for spec in overrides {
        apply_override(&mut table, spec)?;
    }
    let cfg: Config = toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}
