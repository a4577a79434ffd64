//! Run configuration, read from TOML.
//!
//! Keys may be written with dotted names (`train.m = 64`) or as tables
//! (`[train]` then `m = 64`); both produce the same configuration. Unknown
//! keys and ill-typed values are rejected with an error naming the key.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `seed` | 0 | master seed for every random stream |
//! | `max_steps` | 1000 | generator steps |
//! | `eval_every` | 50 | generator steps between evaluations/checkpoints |
//! | `data.kind` | `"ring"` | `ring` or `idx` |
//! | `data.modes`, `data.points`, `data.radius`, `data.sigma` | 10, 2000, 2.0, 0.02 | ring parameters |
//! | `data.path` | `$OTASSIGN_DATA_DIR/mnist` | IDX file or directory |
//! | `data.prefix` | `"train"` | file prefix when `data.path` is a directory |
//! | `data.subset` | 5000 | images kept |
//! | `data.size` | 32 | resize to `size × size`; 0 keeps the source size |
//! | `data.shuffle` | true | seeded shuffle before taking the subset |
//! | `cost.kind` | `"squared_euclidean"` | assignment cost `c` |
//! | `cost.scale` | `"auto"` | number, or `auto` for unit diameter |
//! | `cost.generator_kind` | `cost.kind` | generator cost `c̃` |
//! | `cost.generator_scale` | `"auto"` | as `cost.scale` |
//! | `train.m` | 64 | generated points per step |
//! | `train.n_critic` | 5 | assigner steps per generator step |
//! | `train.lr` | 5e-5 | RMSProp step for both networks |
//! | `train.assigner_lr`, `train.generator_lr` | `train.lr` | per-network overrides |
//! | `train.decay`, `train.epsilon` | 0.9, 1e-8 | RMSProp |
//! | `train.reassign` | false | re-assign with the latest assigner before the generator step |
//! | `train.chunk` | 4096 | rows per forward pass when generating |
//! | `train.patience`, `train.min_improvement` | 50, 1e-6 | plateau stop (0 disables) |
//! | `latent.k`, `latent.sigma` | 10, 0.1 | latent Gaussian mixture |
//! | `latent.dim` | 100 (images) / 2 | latent dimension |
//! | `net.hidden` | `[512, 512]` | hidden widths of both networks |
//! | `net.assigner_hidden`, `net.generator_hidden` | `net.hidden` | per-network overrides |
//! | `net.activation` | `"leaky_relu"` | hidden activation |
//! | `net.generator_head` | `sigmoid` (images) / `identity` | generator output activation |
//! | `eval.k` | 10 | oversampling factor for the metrics |
//! | `eval.w1` | false | also compute exact W1 at every evaluation |
//! | `eval.w1_reals` | 500 | reals used for W1 (first rows) |
//! | `log.wall_time` | false | record wall-clock ms (otherwise 0, keeping logs reproducible) |
//! | `snapshot.every` | 0 | write a snapshot every n evaluations (CLI) |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::costs::CostKind;
use crate::data::{find_idx_pair, load_idx, preprocess, ring_of_gaussians, Dataset, Preprocess};
use crate::error::{Error, Result};
use crate::net::Activation;

/// A cost multiplier, fixed or derived from the data domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataConfig {
    Ring {
        modes: usize,
        points: usize,
        radius: f64,
        sigma: f64,
    },
    Idx {
        path: PathBuf,
        prefix: String,
        subset: usize,
        /// Side of the square output; `None` keeps the source size.
        size: Option<usize>,
        shuffle: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub kind: CostKind,
    pub scale: Scale,
    pub generator_kind: CostKind,
    pub generator_scale: Scale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub m: usize,
    pub n_critic: usize,
    pub assigner_lr: f64,
    pub generator_lr: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub reassign: bool,
    pub chunk: usize,
    pub patience: usize,
    pub min_improvement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentConfig {
    pub k: usize,
    pub sigma: f64,
    pub dim: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub assigner_hidden: Vec<usize>,
    pub generator_hidden: Vec<usize>,
    pub activation: Activation,
    pub generator_head: Option<Activation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k: usize,
    pub w1: bool,
    pub w1_reals: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub max_steps: usize,
    pub eval_every: usize,
    pub data: DataConfig,
    pub cost: CostConfig,
    pub train: OptimConfig,
    pub latent: LatentConfig,
    pub net: NetConfig,
    pub eval: EvalConfig,
    pub wall_time: bool,
    pub snapshot_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_steps: 1000,
            eval_every: 50,
            data: DataConfig::Ring {
                modes: 10,
                points: 2000,
                radius: 2.0,
                sigma: 0.02,
            },
            cost: CostConfig {
                kind: CostKind::SquaredEuclidean,
                scale: Scale::Auto,
                generator_kind: CostKind::SquaredEuclidean,
                generator_scale: Scale::Auto,
            },
            train: OptimConfig {
                m: 64,
                n_critic: 5,
                assigner_lr: 5e-5,
                generator_lr: 5e-5,
                decay: crate::optim::DEFAULT_DECAY,
                epsilon: crate::optim::DEFAULT_EPSILON,
                reassign: false,
                chunk: 4096,
                patience: 50,
                min_improvement: 1e-6,
            },
            latent: LatentConfig {
                k: 10,
                sigma: 0.1,
                dim: None,
            },
            net: NetConfig {
                assigner_hidden: vec![512, 512],
                generator_hidden: vec![512, 512],
                activation: Activation::LeakyRelu,
                generator_head: None,
            },
            eval: EvalConfig {
                k: 10,
                w1: false,
                w1_reals: 500,
            },
            wall_time: false,
            snapshot_every: 0,
        }
    }
}

impl DataConfig {
    /// Builds the dataset this configuration describes.
    pub fn load(&self, seed: u64) -> Result<Dataset> {
        match self {
            DataConfig::Ring {
                modes,
                points,
                radius,
                sigma,
            } => ring_of_gaussians(*modes, *points, *radius, *sigma, seed),
            DataConfig::Idx {
                path,
                prefix,
                subset,
                size,
                shuffle,
            } => {
                let (images, labels) = if path.is_dir() {
                    find_idx_pair(path, prefix).ok_or_else(|| {
                        Error::config(
                            "data.path",
                            format!("no {prefix}-images-idx3-ubyte[.gz] in {}", path.display()),
                        )
                    })?
                } else {
                    (path.clone(), None)
                };
                let raw = load_idx(&images, labels.as_deref())?;
                preprocess(
                    &raw,
                    Preprocess {
                        subset: (*subset).min(raw.len()),
                        target: size.map(|s| (s, s)),
                        shuffle_seed: shuffle.then_some(seed),
                    },
                )
            }
        }
    }
}

/// Flattened `dotted.key → value` view that hands out typed values and
/// remembers which keys were consumed.
struct Keys(BTreeMap<String, toml::Value>);

impl Keys {
    fn flatten(prefix: &str, table: toml::Table, out: &mut BTreeMap<String, toml::Value>) {
        for (k, v) in table {
            let key = if prefix.is_empty() {
                k
            } else {
                format!("{prefix}.{k}")
            };
            match v {
                toml::Value::Table(t) => Self::flatten(&key, t, out),
                v => {
                    out.insert(key, v);
                }
            }
        }
    }

    fn take(&mut self, key: &str) -> Option<toml::Value> {
        self.0.remove(key)
    }

    fn int(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if i >= 0 => Ok(Some(i as usize)),
            Some(v) => Err(Error::config(key, format!("expected a nonnegative integer, got {v}"))),
        }
    }

    fn float(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Float(f)) => Ok(Some(f)),
            Some(toml::Value::Integer(i)) => Ok(Some(i as f64)),
            Some(v) => Err(Error::config(key, format!("expected a number, got {v}"))),
        }
    }

    fn boolean(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Boolean(b)) => Ok(Some(b)),
            Some(v) => Err(Error::config(key, format!("expected true or false, got {v}"))),
        }
    }

    fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(Error::config(key, format!("expected a string, got {v}"))),
        }
    }

    fn widths(&mut self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::Array(a)) => a
                .into_iter()
                .map(|v| match v {
                    toml::Value::Integer(i) if i > 0 => Ok(i as usize),
                    v => Err(Error::config(key, format!("expected positive widths, got {v}"))),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(v) => Err(Error::config(key, format!("expected an array of widths, got {v}"))),
        }
    }

    fn cost_kind(&mut self, key: &str) -> Result<Option<CostKind>> {
        self.string(key)?
            .map(|s| s.parse().map_err(|_| Error::config(key, format!("unknown cost `{s}`"))))
            .transpose()
    }

    fn activation(&mut self, key: &str) -> Result<Option<Activation>> {
        self.string(key)?
            .map(|s| {
                Activation::parse(&s)
                    .ok_or_else(|| Error::config(key, format!("unknown activation `{s}`")))
            })
            .transpose()
    }

    fn scale(&mut self, key: &str) -> Result<Option<Scale>> {
        match self.take(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) if s == "auto" => Ok(Some(Scale::Auto)),
            Some(toml::Value::Float(f)) => Ok(Some(Scale::Fixed(f))),
            Some(toml::Value::Integer(i)) => Ok(Some(Scale::Fixed(i as f64))),
            Some(v) => Err(Error::config(key, format!("expected a number or \"auto\", got {v}"))),
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_str_with(text, &[])
    }

    /// Parses `text`, then applies `overrides` on top. Each override is a
    /// dotted key and a TOML value; a value that is not valid TOML is taken
    /// as a bare string, so `("cost.kind", "psnr_cost")` works.
    pub fn from_toml_str_with(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
        let mut flat = BTreeMap::new();
        Keys::flatten("", table, &mut flat);
        for (key, raw) in overrides {
            let value = format!("v = {raw}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.clone()));
            flat.insert(key.clone(), value);
        }
        let mut keys = Keys(flat);
        let cfg = Self::from_keys(&mut keys)?;
        if let Some(key) = keys.0.keys().next() {
            return Err(Error::config(key.clone(), "unknown key"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_path_with(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        Self::from_toml_str_with(&std::fs::read_to_string(path)?, overrides)
    }

    fn from_keys(k: &mut Keys) -> Result<Self> {
        let d = Self::default();
        let data_kind = k.string("data.kind")?.unwrap_or_else(|| "ring".into());
        let data = match data_kind.as_str() {
            "ring" => {
                let DataConfig::Ring {
                    modes,
                    points,
                    radius,
                    sigma,
                } = d.data
                else {
                    unreachable!()
                };
                DataConfig::Ring {
                    modes: k.int("data.modes")?.unwrap_or(modes),
                    points: k.int("data.points")?.unwrap_or(points),
                    radius: k.float("data.radius")?.unwrap_or(radius),
                    sigma: k.float("data.sigma")?.unwrap_or(sigma),
                }
            }
            "idx" | "mnist" => DataConfig::Idx {
                path: k
                    .string("data.path")?
                    .map(PathBuf::from)
                    .unwrap_or_else(|| crate::data::data_dir().join("mnist")),
                prefix: k.string("data.prefix")?.unwrap_or_else(|| "train".into()),
                subset: k.int("data.subset")?.unwrap_or(5000),
                size: match k.int("data.size")? {
                    Some(0) => None,
                    Some(s) => Some(s),
                    None => Some(32),
                },
                shuffle: k.boolean("data.shuffle")?.unwrap_or(true),
            },
            other => {
                return Err(Error::config(
                    "data.kind",
                    format!("expected `ring` or `idx`, got `{other}`"),
                ))
            }
        };

        let kind = k.cost_kind("cost.kind")?.unwrap_or(d.cost.kind);
        let cost = CostConfig {
            kind,
            scale: k.scale("cost.scale")?.unwrap_or(d.cost.scale),
            generator_kind: k.cost_kind("cost.generator_kind")?.unwrap_or(kind),
            generator_scale: k.scale("cost.generator_scale")?.unwrap_or(d.cost.generator_scale),
        };

        let lr = k.float("train.lr")?;
        let train = OptimConfig {
            m: k.int("train.m")?.unwrap_or(d.train.m),
            n_critic: k.int("train.n_critic")?.unwrap_or(d.train.n_critic),
            assigner_lr: k
                .float("train.assigner_lr")?
                .or(lr)
                .unwrap_or(d.train.assigner_lr),
            generator_lr: k
                .float("train.generator_lr")?
                .or(lr)
                .unwrap_or(d.train.generator_lr),
            decay: k.float("train.decay")?.unwrap_or(d.train.decay),
            epsilon: k.float("train.epsilon")?.unwrap_or(d.train.epsilon),
            reassign: k.boolean("train.reassign")?.unwrap_or(d.train.reassign),
            chunk: k.int("train.chunk")?.unwrap_or(d.train.chunk),
            patience: k.int("train.patience")?.unwrap_or(d.train.patience),
            min_improvement: k
                .float("train.min_improvement")?
                .unwrap_or(d.train.min_improvement),
        };

        let latent = LatentConfig {
            k: k.int("latent.k")?.unwrap_or(d.latent.k),
            sigma: k.float("latent.sigma")?.unwrap_or(d.latent.sigma),
            dim: k.int("latent.dim")?,
        };

        let hidden = k.widths("net.hidden")?;
        let net = NetConfig {
            assigner_hidden: k
                .widths("net.assigner_hidden")?
                .or_else(|| hidden.clone())
                .unwrap_or(d.net.assigner_hidden),
            generator_hidden: k
                .widths("net.generator_hidden")?
                .or(hidden)
                .unwrap_or(d.net.generator_hidden),
            activation: k.activation("net.activation")?.unwrap_or(d.net.activation),
            generator_head: k.activation("net.generator_head")?,
        };

        let eval = EvalConfig {
            k: k.int("eval.k")?.unwrap_or(d.eval.k),
            w1: k.boolean("eval.w1")?.unwrap_or(d.eval.w1),
            w1_reals: k.int("eval.w1_reals")?.unwrap_or(d.eval.w1_reals),
        };

        Ok(Self {
            seed: k.int("seed")?.map(|s| s as u64).unwrap_or(d.seed),
            max_steps: k.int("max_steps")?.unwrap_or(d.max_steps),
            eval_every: k.int("eval_every")?.unwrap_or(d.eval_every),
            data,
            cost,
            train,
            latent,
            net,
            eval,
            wall_time: k.boolean("log.wall_time")?.unwrap_or(d.wall_time),
            snapshot_every: k.int("snapshot.every")?.unwrap_or(d.snapshot_every),
        })
    }

    /// Checks every numeric constraint, naming the first offending key.
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive, got {v}")))
            }
        };
        let at_least_one = |key: &str, v: usize| {
            if v >= 1 {
                Ok(())
            } else {
                Err(Error::config(key, "must be at least 1"))
            }
        };
        positive("train.assigner_lr", self.train.assigner_lr)?;
        positive("train.generator_lr", self.train.generator_lr)?;
        if !(self.train.decay > 0.0 && self.train.decay < 1.0) {
            return Err(Error::config("train.decay", "must lie in (0, 1)"));
        }
        if !(self.train.epsilon >= 0.0) {
            return Err(Error::config("train.epsilon", "must be nonnegative"));
        }
        at_least_one("train.m", self.train.m)?;
        at_least_one("train.n_critic", self.train.n_critic)?;
        at_least_one("train.chunk", self.train.chunk)?;
        at_least_one("eval_every", self.eval_every)?;
        at_least_one("latent.k", self.latent.k)?;
        at_least_one("eval.k", self.eval.k)?;
        at_least_one("eval.w1_reals", self.eval.w1_reals)?;
        positive("latent.sigma", self.latent.sigma)?;
        if let Some(dim) = self.latent.dim {
            at_least_one("latent.dim", dim)?;
        }
        if let Scale::Fixed(s) = self.cost.scale {
            positive("cost.scale", s)?;
        }
        if let Scale::Fixed(s) = self.cost.generator_scale {
            positive("cost.generator_scale", s)?;
        }
        match &self.data {
            DataConfig::Ring {
                modes,
                points,
                radius,
                sigma,
            } => {
                at_least_one("data.modes", *modes)?;
                at_least_one("data.points", *points)?;
                if !radius.is_finite() {
                    return Err(Error::config("data.radius", "must be finite"));
                }
                if !(*sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::config("data.sigma", "must be finite and nonnegative"));
                }
            }
            DataConfig::Idx { subset, size, .. } => {
                at_least_one("data.subset", *subset)?;
                if let Some(s) = size {
                    at_least_one("data.size", *s)?;
                }
            }
        }
        Ok(())
    }
}
