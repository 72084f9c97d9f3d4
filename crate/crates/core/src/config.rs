//! Experiment configuration.
//!
//! A config file is TOML; tables are flattened to dotted keys, so
//! `[aug.view1]\np_feat = 0.2` and `aug.view1.p_feat = 0.2` are the same
//! setting. Values are applied on top of a preset (`desk` or `full`).
//!
//! | key | meaning |
//! |---|---|
//! | `preset` | base preset, `desk` (default) or `full` |
//! | `experiment.name`, `experiment.master_seed`, `experiment.num_split_seeds` | run identity |
//! | `experiment.split` | `[train, val, test]` fractions |
//! | `experiment.out` | output directory |
//! | `experiment.baselines` | subset of baseline names to run |
//! | `data.bundles` | list of bundle directories, one per client |
//! | `data.synthetic` | `"desk"` to generate the synthetic desk clients instead |
//! | `data.synthetic_seed` | seed of the synthetic generator |
//! | `synth.feature_dim`, `synth.signal_dim`, `synth.signal_strength`, `synth.noise_std`, `synth.label_fraction` | generator settings |
//! | `synth.block_size`, `synth.p_in`, `synth.p_out` | block model settings, applied to every client |
//! | `model.hidden`, `model.predictor_hidden`, `model.sup_head_hidden`, `model.ema_base` | architecture |
//! | `fed.protocol` | `fed_self_lp1` or `fed_self_lp2` for the Fed-Self cells |
//! | `fed.local_epochs`, `fed.participation`, `fed.weighting`, `fed.lambda`, `fed.ckpt_every` | federation |
//! | `fed.self.rounds`, `fed.self.warmup_rounds`, `fed.self.lr`, `fed.self.wd` | self-supervised budget |
//! | `fed.sup.rounds`, `fed.sup.lr`, `fed.sup.wd` | supervised budget |
//! | `aug.view1.p_feat`, `aug.view1.p_edge`, `aug.view2.p_feat`, `aug.view2.p_edge` | augmentations |
//! | `eval.c_grid`, `eval.probe_max_iter`, `eval.finetune_steps`, `eval.finetune_lr`, `eval.finetune_wd`, `eval.head_hidden` | evaluation |

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::augment::{AugmentConfig, AugmentPair};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::federation::{ModelConfig, Protocol, Weighting};
use crate::synth::SyntheticSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Baseline {
    NoFedRandInit,
    NoFedSup,
    NoFedSelfFreeze,
    NoFedSelfFinetune,
    FedSup,
    FedSelfFreeze,
    FedSelfFinetune,
}

impl Baseline {
    pub const ALL: [Baseline; 7] = [
        Baseline::NoFedRandInit,
        Baseline::NoFedSup,
        Baseline::NoFedSelfFreeze,
        Baseline::NoFedSelfFinetune,
        Baseline::FedSup,
        Baseline::FedSelfFreeze,
        Baseline::FedSelfFinetune,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Baseline::NoFedRandInit => "No-Fed-Rand-Init-GNN",
            Baseline::NoFedSup => "No-Fed-Sup",
            Baseline::NoFedSelfFreeze => "No-Fed-Self-Freeze",
            Baseline::NoFedSelfFinetune => "No-Fed-Self-Finetune",
            Baseline::FedSup => "Fed-Sup",
            Baseline::FedSelfFreeze => "Fed-Self-Freeze",
            Baseline::FedSelfFinetune => "Fed-Self-Finetune",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown baseline {s:?}")))
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub rounds: usize,
    pub warmup_rounds: usize,
    pub lr: f64,
    pub wd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Bundles(Vec<PathBuf>),
    /// Generated clients.
    Synthetic { spec: SyntheticSpec, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub master_seed: u64,
    pub num_split_seeds: usize,
    pub split: (f64, f64, f64),
    pub out_dir: PathBuf,
    pub baselines: Vec<Baseline>,
    pub data: DataSource,
    pub model: ModelConfig,
    pub self_protocol: Protocol,
    pub local_epochs: usize,
    pub participation: f64,
    pub weighting: Weighting,
    pub lambda: Vec<f64>,
    pub ckpt_every: Option<usize>,
    pub self_budget: Budget,
    pub sup_budget: Budget,
    pub aug: AugmentPair,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Full,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            _ => Err(Error::Config(format!("unknown preset {s:?}"))),
        }
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let aug = AugmentPair {
            view1: AugmentConfig {
                p_feat: 0.2,
                p_edge: 0.3,
            },
            view2: AugmentConfig {
                p_feat: 0.1,
                p_edge: 0.2,
            },
        };
        match preset {
            Preset::Full => Self {
                name: "full".into(),
                master_seed: 0,
                num_split_seeds: 10,
                split: (0.6, 0.2, 0.2),
                out_dir: PathBuf::from("runs/full"),
                baselines: Baseline::ALL.to_vec(),
                data: DataSource::Bundles(Vec::new()),
                model: ModelConfig {
                    hidden: 128,
                    ..ModelConfig::default()
                },
                self_protocol: Protocol::FedSelfLp1,
                local_epochs: 1,
                participation: 1.0,
                weighting: Weighting::ByDataSize,
                lambda: vec![1.0],
                ckpt_every: None,
                self_budget: Budget {
                    rounds: 10_000,
                    warmup_rounds: 1_000,
                    lr: 1e-4,
                    wd: 1e-5,
                },
                sup_budget: Budget {
                    rounds: 500,
                    warmup_rounds: 0,
                    lr: 0.01,
                    wd: 1e-3,
                },
                aug,
                eval: EvalConfig::default(),
            },
            Preset::Desk => Self {
                name: "desk".into(),
                num_split_seeds: 5,
                split: (0.1, 0.1, 0.8),
                out_dir: PathBuf::from("runs/desk"),
                data: DataSource::Synthetic {
                    spec: SyntheticSpec::desk(),
                    seed: 0,
                },
                model: ModelConfig {
                    hidden: 32,
                    ..ModelConfig::default()
                },
                self_budget: Budget {
                    rounds: 200,
                    warmup_rounds: 20,
                    lr: 5e-3,
                    wd: 1e-5,
                },
                sup_budget: Budget {
                    rounds: 100,
                    warmup_rounds: 0,
                    lr: 0.01,
                    wd: 1e-3,
                },
                ..Self::preset(Preset::Full)
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.split;
        if !(a > 0.0 && b > 0.0 && c > 0.0) || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split {:?} must be positive and sum to 1", self.split)));
        }
        if self.num_split_seeds == 0 {
            return Err(Error::Config("num_split_seeds must be >= 1".into()));
        }
        if self.baselines.is_empty() {
            return Err(Error::Config("no baselines selected".into()));
        }
        match &self.data {
            DataSource::Bundles(b) if b.is_empty() => {
                return Err(Error::Config("data.bundles lists no clients".into()))
            }
            DataSource::Synthetic { spec, .. } => spec.validate()?,
            _ => {}
        }
        if self.self_protocol == Protocol::FedSup {
            return Err(Error::Config("fed.protocol must be fed_self_lp1 or fed_self_lp2".into()));
        }
        if self.model.hidden == 0 || self.model.predictor_hidden == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        for budget in [&self.self_budget, &self.sup_budget] {
            if budget.rounds == 0 {
                return Err(Error::Config("rounds must be >= 1".into()));
            }
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(Error::Config("fed.participation outside (0, 1]".into()));
        }
        self.aug.validate()?;
        self.eval.validate()
    }

    /// Loads a config file on top of its preset (or `preset_override`).
    /// Relative bundle paths resolve against the file's directory.
    pub fn load(path: &Path, preset_override: Option<Preset>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(path.to_path_buf())
            } else {
                Error::Io(e)
            }
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_str_with(&text, base, preset_override)
    }

    pub fn from_str_with(text: &str, base: &Path, preset_override: Option<Preset>) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut flat = BTreeMap::new();
        flatten("", &toml::Value::Table(table), &mut flat);

        let preset = match (preset_override, flat.remove("preset")) {
            (Some(p), _) => p,
            (None, Some(v)) => Preset::parse(&as_str("preset", &v)?)?,
            (None, None) => Preset::Desk,
        };
        let mut cfg = Self::preset(preset);
        for (key, value) in &flat {
            cfg.apply(key, value, base)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, v: &toml::Value, base: &Path) -> Result<()> {
        match key {
            "experiment.name" => self.name = as_str(key, v)?,
            "experiment.master_seed" => self.master_seed = as_uint(key, v)? as u64,
            "experiment.num_split_seeds" => self.num_split_seeds = as_uint(key, v)?,
            "experiment.split" => {
                let f = as_floats(key, v)?;
                let [a, b, c] = f[..] else {
                    return Err(Error::Config(format!("{key} needs three fractions")));
                };
                self.split = (a, b, c);
            }
            "experiment.out" => self.out_dir = PathBuf::from(as_str(key, v)?),
            "experiment.baselines" => {
                self.baselines = as_strs(key, v)?
                    .iter()
                    .map(|s| Baseline::parse(s))
                    .collect::<Result<_>>()?
            }
            "data.bundles" => {
                self.data = DataSource::Bundles(
                    as_strs(key, v)?.into_iter().map(|p| base.join(p)).collect(),
                )
            }
            "data.synthetic" => match as_str(key, v)?.as_str() {
                "desk" => {
                    let seed = match self.data {
                        DataSource::Synthetic { seed, .. } => seed,
                        _ => 0,
                    };
                    self.data = DataSource::Synthetic {
                        spec: SyntheticSpec::desk(),
                        seed,
                    };
                }
                other => return Err(Error::Config(format!("unknown synthetic preset {other:?}"))),
            },
            "data.synthetic_seed" => *self.synthetic(key)?.1 = as_uint(key, v)? as u64,
            "synth.feature_dim" => self.synthetic(key)?.0.feature_dim = as_uint(key, v)?,
            "synth.signal_dim" => self.synthetic(key)?.0.signal_dim = as_uint(key, v)?,
            "synth.signal_strength" => self.synthetic(key)?.0.signal_strength = as_float(key, v)?,
            "synth.noise_std" => self.synthetic(key)?.0.noise_std = as_float(key, v)?,
            "synth.label_fraction" => self.synthetic(key)?.0.label_fraction = as_float(key, v)?,
            "synth.block_size" | "synth.p_in" | "synth.p_out" => {
                let field = key.trim_start_matches("synth.");
                let (spec, _) = self.synthetic(key)?;
                for c in &mut spec.clients {
                    match field {
                        "block_size" => c.block_size = as_uint(key, v)?,
                        "p_in" => c.p_in = as_float(key, v)?,
                        _ => c.p_out = as_float(key, v)?,
                    }
                }
            }
            "model.hidden" => self.model.hidden = as_uint(key, v)?,
            "model.predictor_hidden" => self.model.predictor_hidden = as_uint(key, v)?,
            "model.sup_head_hidden" => {
                self.model.head_hidden = as_floats(key, v)?.into_iter().map(|x| x as usize).collect()
            }
            "model.ema_base" => self.model.ema_base = as_float(key, v)?,
            "fed.protocol" => self.self_protocol = Protocol::parse(&as_str(key, v)?)?,
            "fed.local_epochs" => self.local_epochs = as_uint(key, v)?,
            "fed.participation" => self.participation = as_float(key, v)?,
            "fed.weighting" => {
                self.weighting = match as_str(key, v)?.as_str() {
                    "data_size" | "node_count" => Weighting::ByDataSize,
                    "uniform" => Weighting::Uniform,
                    other => return Err(Error::Config(format!("unknown weighting {other:?}"))),
                }
            }
            "fed.lambda" => {
                self.lambda = match v {
                    toml::Value::Array(_) => as_floats(key, v)?,
                    _ => vec![as_float(key, v)?],
                }
            }
            "fed.ckpt_every" => {
                let k = as_uint(key, v)?;
                self.ckpt_every = (k > 0).then_some(k);
            }
            "fed.self.rounds" => self.self_budget.rounds = as_uint(key, v)?,
            "fed.self.warmup_rounds" => self.self_budget.warmup_rounds = as_uint(key, v)?,
            "fed.self.lr" => self.self_budget.lr = as_float(key, v)?,
            "fed.self.wd" => self.self_budget.wd = as_float(key, v)?,
            "fed.sup.rounds" => self.sup_budget.rounds = as_uint(key, v)?,
            "fed.sup.lr" => self.sup_budget.lr = as_float(key, v)?,
            "fed.sup.wd" => self.sup_budget.wd = as_float(key, v)?,
            "aug.view1.p_feat" => self.aug.view1.p_feat = as_float(key, v)?,
            "aug.view1.p_edge" => self.aug.view1.p_edge = as_float(key, v)?,
            "aug.view2.p_feat" => self.aug.view2.p_feat = as_float(key, v)?,
            "aug.view2.p_edge" => self.aug.view2.p_edge = as_float(key, v)?,
            "eval.c_grid" => self.eval.c_grid = as_floats(key, v)?,
            "eval.probe_max_iter" => self.eval.probe_max_iter = as_uint(key, v)?,
            "eval.finetune_steps" => self.eval.finetune_steps = as_uint(key, v)?,
            "eval.finetune_lr" => self.eval.finetune_lr = as_float(key, v)?,
            "eval.finetune_wd" => self.eval.finetune_wd = as_float(key, v)?,
            "eval.head_hidden" => self.eval.head_hidden = as_uint(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }
}

impl ExperimentConfig {
    fn synthetic(&mut self, key: &str) -> Result<(&mut SyntheticSpec, &mut u64)> {
        match &mut self.data {
            DataSource::Synthetic { spec, seed } => Ok((spec, seed)),
            DataSource::Bundles(_) => Err(Error::Config(format!("{key} needs synthetic data"))),
        }
    }
}

fn flatten(prefix: &str, v: &toml::Value, out: &mut BTreeMap<String, toml::Value>) {
    match v {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

fn type_err(key: &str, want: &str) -> Error {
    Error::Config(format!("{key} must be {want}"))
}

fn as_str(key: &str, v: &toml::Value) -> Result<String> {
    v.as_str().map(str::to_string).ok_or_else(|| type_err(key, "a string"))
}

fn as_uint(key: &str, v: &toml::Value) -> Result<usize> {
    v.as_integer()
        .filter(|&i| i >= 0)
        .map(|i| i as usize)
        .ok_or_else(|| type_err(key, "a non-negative integer"))
}

fn as_float(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(type_err(key, "a number")),
    }
}

fn as_floats(key: &str, v: &toml::Value) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| type_err(key, "an array of numbers"))?
        .iter()
        .map(|x| as_float(key, x))
        .collect()
}

fn as_strs(key: &str, v: &toml::Value) -> Result<Vec<String>> {
    v.as_array()
        .ok_or_else(|| type_err(key, "an array of strings"))?
        .iter()
        .map(|x| as_str(key, x))
        .collect()
}
