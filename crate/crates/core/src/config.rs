//! Flat `key = value` experiment configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Later assignments
//! win, so command-line overrides are applied by setting keys after the
//! file has been read. Recognised keys:
//!
//! | key | type | default |
//! |-----|------|---------|
//! | `task` | `blobs` \| `linear_regression` | `blobs` |
//! | `model` | `logistic_regression` \| `linear_regression` \| `mlp` | `logistic_regression` |
//! | `hidden_dim` | integer (mlp only) | 16 |
//! | `n_samples` | integer | 369 |
//! | `input_dim` | integer | 8 |
//! | `n_classes` | integer | 3 |
//! | `noise` | real | 1.5 |
//! | `n_centers` | integer | 17 |
//! | `beta` | real, Dirichlet concentration | 0.5 |
//! | `train_fraction` | real in (0, 1) | 0.8 |
//! | `rounds` | integer | 30 |
//! | `epochs` | integer, local epochs per round | 10 |
//! | `lr` | real | 0.05 |
//! | `batch_size` | integer | 8 |
//! | `strategies` | comma list of `fedavg`, `fedcostwavg`, `fedcostwintavg` | `fedavg,fedcostwavg` |
//! | `strategy` | single strategy, same as a one-element `strategies` | |
//! | `alpha` | real in [0, 1] | 0.5 |
//! | `window` | integer (fedcostwintavg) | 3 |
//! | `min_cost_floor` | real | 1e-12 |
//! | `seed` | integer | 7 |
//! | `cost_on` | `train` \| `local_val` | `train` |
//! | `timing` | bool, record wall-clock ms | false |

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::aggregation::{StrategyConfig, StrategyKind};
use crate::error::{Error, Result};
use crate::federation::ExperimentConfig;

const KEYS: &[&str] = &[
    "task",
    "model",
    "hidden_dim",
    "n_samples",
    "input_dim",
    "n_classes",
    "noise",
    "n_centers",
    "beta",
    "train_fraction",
    "rounds",
    "epochs",
    "lr",
    "batch_size",
    "strategies",
    "strategy",
    "alpha",
    "window",
    "min_cost_floor",
    "seed",
    "cost_on",
    "timing",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    values: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = ConfigMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                ))
            })?;
            map.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        // `strategy` and `strategies` are one setting.
        let key = if key == "strategy" { "strategies" } else { key };
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Parses a `key=value` command-line override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{pair}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::Config(format!("{key} = `{v}`: {e}")))
            })
            .transpose()
    }

    /// Builds and validates an experiment configuration on top of the defaults.
    pub fn to_experiment(&self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::default();
        macro_rules! take {
            ($($field:ident),*) => {
                $( if let Some(v) = self.parsed(stringify!($field))? { c.$field = v; } )*
            };
        }
        take!(
            hidden_dim,
            n_samples,
            input_dim,
            n_classes,
            noise,
            n_centers,
            beta,
            train_fraction,
            rounds,
            epochs,
            lr,
            batch_size,
            seed,
            timing,
            task,
            model,
            cost_on
        );

        let kinds: Vec<StrategyKind> = match self.get("strategies") {
            Some(list) => list
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(str::parse)
                .collect::<Result<_>>()?,
            None => c.strategies.iter().map(|s| s.kind).collect(),
        };
        let mut template = StrategyConfig::new(StrategyKind::FedAvg);
        if let Some(alpha) = self.parsed("alpha")? {
            template.alpha = alpha;
        }
        if let Some(window) = self.parsed("window")? {
            template.window = window;
        }
        if let Some(floor) = self.parsed("min_cost_floor")? {
            template.min_cost_floor = floor;
        }
        c.strategies = kinds
            .into_iter()
            .map(|kind| StrategyConfig { kind, ..template })
            .collect();
        c.validate()?;
        Ok(c)
    }
}
