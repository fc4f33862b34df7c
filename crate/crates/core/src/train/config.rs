//! Run configuration and its flat `key = value` file format.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AdamConfig, FusionMode, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F64,
    F32,
}

impl Precision {
    pub fn as_str(self) -> &'static str {
        match self {
            Precision::F64 => "f64",
            Precision::F32 => "f32",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f64" | "64" | "double" => Some(Precision::F64),
            "f32" | "32" | "single" => Some(Precision::F32),
            _ => None,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Feature metapaths with at most this many hops are used.
    pub max_hop_features: usize,
    /// Label metapaths with at most this many hops are used; 0 disables them.
    pub max_hop_labels: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub fusion: FusionMode,
    pub precision: Precision,
    /// Mini-batch size over the train split; 0 means full batch.
    pub batch_size: usize,
    pub projection_layers: usize,
    pub classifier_layers: usize,
    pub attention_scaling: bool,
    /// When set, the precomputed manifest must carry this graph hash.
    pub graph_hash: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_hop_features: 2,
            max_hop_labels: 2,
            hidden: 64,
            dropout: 0.5,
            lr: 1e-3,
            weight_decay: 0.0,
            max_epochs: 300,
            patience: 30,
            seed: 0,
            fusion: FusionMode::Transformer,
            precision: Precision::F64,
            batch_size: 0,
            projection_layers: 2,
            classifier_layers: 2,
            attention_scaling: false,
            graph_hash: None,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "max_hop_features",
    "max_hop_labels",
    "hidden",
    "dropout",
    "lr",
    "weight_decay",
    "max_epochs",
    "patience",
    "seed",
    "fusion",
    "precision",
    "batch_size",
    "projection_layers",
    "classifier_layers",
    "attention_scaling",
    "graph_hash",
];

fn parse_value<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

impl RunConfig {
    /// Sets one field by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "max_hop_features" => self.max_hop_features = parse_value(key, value)?,
            "max_hop_labels" => self.max_hop_labels = parse_value(key, value)?,
            "hidden" => self.hidden = parse_value(key, value)?,
            "dropout" => self.dropout = parse_value(key, value)?,
            "lr" => self.lr = parse_value(key, value)?,
            "weight_decay" => self.weight_decay = parse_value(key, value)?,
            "max_epochs" => self.max_epochs = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "fusion" => {
                self.fusion = FusionMode::parse(value)
                    .ok_or_else(|| Error::Config(format!("unknown fusion mode {value:?}")))?
            }
            "precision" => {
                self.precision = Precision::parse(value)
                    .ok_or_else(|| Error::Config(format!("unknown precision {value:?}")))?
            }
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "projection_layers" => self.projection_layers = parse_value(key, value)?,
            "classifier_layers" => self.classifier_layers = parse_value(key, value)?,
            "attention_scaling" => self.attention_scaling = parse_value(key, value)?,
            "graph_hash" => {
                self.graph_hash = if value.is_empty() {
                    None
                } else {
                    Some(value.to_string())
                }
            }
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: format!("expected `key = value`, got {line:?}"),
            })?;
            self.set(key, value).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = crate::graph::io::read_to_string(path)?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    /// Renders the config in the file format accepted by [`RunConfig::apply_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        line("max_hop_features", self.max_hop_features.to_string());
        line("max_hop_labels", self.max_hop_labels.to_string());
        line("hidden", self.hidden.to_string());
        line("dropout", self.dropout.to_string());
        line("lr", self.lr.to_string());
        line("weight_decay", self.weight_decay.to_string());
        line("max_epochs", self.max_epochs.to_string());
        line("patience", self.patience.to_string());
        line("seed", self.seed.to_string());
        line("fusion", self.fusion.as_str().to_string());
        line("precision", self.precision.as_str().to_string());
        line("batch_size", self.batch_size.to_string());
        line("projection_layers", self.projection_layers.to_string());
        line("classifier_layers", self.classifier_layers.to_string());
        line("attention_scaling", self.attention_scaling.to_string());
        line("graph_hash", self.graph_hash.clone().unwrap_or_default());
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight decay {} must be non-negative",
                self.weight_decay
            )));
        }
        self.model_config(2).validate()
    }

    pub fn model_config(&self, num_classes: usize) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden,
            num_classes,
            fusion: self.fusion,
            dropout: self.dropout,
            attention_scaling: self.attention_scaling,
            projection_layers: self.projection_layers,
            classifier_layers: self.classifier_layers,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let cfg = RunConfig {
            fusion: FusionMode::WeightedSum,
            precision: Precision::F32,
            graph_hash: Some("abc".into()),
            lr: 0.005,
            ..RunConfig::default()
        };
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text(), Path::new("x")).unwrap();
        assert_eq!(back, cfg);
        for key in CONFIG_KEYS {
            assert!(cfg.to_text().contains(&format!("{key} = ")));
        }
    }

    #[test]
    fn comments_and_errors() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# header\n\nhidden = 32 # trailing\n", Path::new("x"))
            .unwrap();
        assert_eq!(cfg.hidden, 32);
        let err = cfg.apply_text("hidden = 8\nbogus = 1\n", Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(cfg.apply_text("hidden 8", Path::new("x")).is_err());
        assert!(cfg.apply_text("fusion = mean", Path::new("x")).is_err());
    }

    #[test]
    fn validation() {
        assert!(RunConfig::default().validate().is_ok());
        let bad = |f: fn(&mut RunConfig)| {
            let mut c = RunConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.patience = 400));
        assert!(bad(|c| c.lr = 0.0));
        assert!(bad(|c| c.weight_decay = -1.0));
        assert!(bad(|c| c.hidden = 10));
        assert!(bad(|c| c.dropout = 1.0));
    }
}
