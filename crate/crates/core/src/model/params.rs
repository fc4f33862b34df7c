use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{glorot, Mlp};
use crate::dense::{Matrix, Real};
use crate::error::{Error, Result};
use crate::metapath::Metapath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    /// Mutual attention across metapaths with a `β`-scaled residual; outputs are concatenated.
    Transformer,
    /// Batch-averaged per-metapath scores, softmaxed into one weighted sum.
    WeightedSum,
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Transformer => "transformer",
            FusionMode::WeightedSum => "weighted-sum",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "transformer" => Some(FusionMode::Transformer),
            "weighted-sum" | "weighted_sum" => Some(FusionMode::WeightedSum),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: usize,
    pub num_classes: usize,
    pub fusion: FusionMode,
    pub dropout: f64,
    /// Divide attention logits by `sqrt(attn_dim)`. Off by default.
    pub attention_scaling: bool,
    pub projection_layers: usize,
    pub classifier_layers: usize,
}

impl ModelConfig {
    pub fn new(hidden: usize, num_classes: usize) -> Self {
        Self {
            hidden,
            num_classes,
            fusion: FusionMode::Transformer,
            dropout: 0.5,
            attention_scaling: false,
            projection_layers: 2,
            classifier_layers: 2,
        }
    }

    /// Query/key width: a quarter of the hidden width.
    pub fn attn_dim(&self) -> usize {
        self.hidden / 4
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || !self.hidden.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "hidden dimension {} must be a positive multiple of 4",
                self.hidden
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.projection_layers == 0 || self.classifier_layers == 0 {
            return Err(Error::Config("MLPs need at least one layer".into()));
        }
        Ok(())
    }
}

/// One model input: the metapath and the width of its semantic matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputSpec {
    pub metapath: Metapath,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FusionParams<T: Real> {
    Transformer {
        /// `hidden × attn_dim`
        query: Matrix<T>,
        /// `hidden × attn_dim`
        key: Matrix<T>,
        /// `hidden × hidden`
        value: Matrix<T>,
        /// `1 × 1`, shared across metapaths.
        beta: Matrix<T>,
    },
    WeightedSum {
        /// `hidden × attn_dim`
        weight: Matrix<T>,
        /// `1 × attn_dim`
        bias: Matrix<T>,
        /// `1 × attn_dim` semantic attention vector.
        query: Matrix<T>,
    },
}

impl<T: Real> FusionParams<T> {
    pub fn beta(&self) -> Option<T> {
        match self {
            FusionParams::Transformer { beta, .. } => Some(beta.get(0, 0)),
            FusionParams::WeightedSum { .. } => None,
        }
    }
}

/// Trainable parameters. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Real> {
    pub config: ModelConfig,
    pub inputs: Vec<InputSpec>,
    pub projections: Vec<Mlp<T>>,
    pub fusion: FusionParams<T>,
    pub classifier: Mlp<T>,
}

pub type Gradients<T> = ModelParams<T>;

pub fn init_params<T: Real>(config: &ModelConfig, inputs: &[InputSpec], seed: u64) -> Result<ModelParams<T>> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(Error::InputMismatch("model needs at least one metapath".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.hidden;
    let da = config.attn_dim();
    let projections = inputs
        .iter()
        .map(|inp| {
            let mut dims = vec![inp.dim];
            dims.extend(std::iter::repeat_n(d, config.projection_layers));
            Mlp::init(&mut rng, &dims)
        })
        .collect();
    let fusion = match config.fusion {
        FusionMode::Transformer => FusionParams::Transformer {
            query: glorot(&mut rng, d, da),
            key: glorot(&mut rng, d, da),
            value: glorot(&mut rng, d, d),
            beta: Matrix::from_vec(1, 1, vec![T::one()])?,
        },
        FusionMode::WeightedSum => FusionParams::WeightedSum {
            weight: glorot(&mut rng, d, da),
            bias: Matrix::zeros(1, da),
            query: glorot(&mut rng, 1, da),
        },
    };
    let fused_width = match config.fusion {
        FusionMode::Transformer => d * inputs.len(),
        FusionMode::WeightedSum => d,
    };
    let mut dims = vec![fused_width];
    dims.extend(std::iter::repeat_n(d, config.classifier_layers - 1));
    dims.push(config.num_classes);
    let classifier = Mlp::init(&mut rng, &dims);
    Ok(ModelParams {
        config: config.clone(),
        inputs: inputs.to_vec(),
        projections,
        fusion,
        classifier,
    })
}

impl<T: Real> ModelParams<T> {
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            inputs: self.inputs.clone(),
            projections: self.projections.iter().map(Mlp::zeros_like).collect(),
            fusion: match &self.fusion {
                FusionParams::Transformer {
                    query,
                    key,
                    value,
                    beta,
                } => FusionParams::Transformer {
                    query: zeros(query),
                    key: zeros(key),
                    value: zeros(value),
                    beta: zeros(beta),
                },
                FusionParams::WeightedSum {
                    weight,
                    bias,
                    query,
                } => FusionParams::WeightedSum {
                    weight: zeros(weight),
                    bias: zeros(bias),
                    query: zeros(query),
                },
            },
            classifier: self.classifier.zeros_like(),
        }
    }

    /// Every tensor in manifest order.
    pub fn tensors(&self) -> Vec<&Matrix<T>> {
        let mut out = Vec::new();
        for mlp in &self.projections {
            push_mlp(mlp, &mut out);
        }
        push_fusion(&self.fusion, &mut out);
        push_mlp(&self.classifier, &mut out);
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = Vec::new();
        for mlp in &mut self.projections {
            push_mlp_mut(mlp, &mut out);
        }
        match &mut self.fusion {
            FusionParams::Transformer {
                query,
                key,
                value,
                beta,
            } => out.extend([query, key, value, beta]),
            FusionParams::WeightedSum {
                weight,
                bias,
                query,
            } => out.extend([weight, bias, query]),
        }
        push_mlp_mut(&mut self.classifier, &mut out);
        out
    }

    /// Human-readable names aligned with [`tensors`](Self::tensors).
    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mlp_names = |prefix: &str, mlp: &Mlp<T>, out: &mut Vec<String>| {
            for l in 0..mlp.layers.len() {
                out.push(format!("{prefix}.{l}.weight"));
                out.push(format!("{prefix}.{l}.bias"));
                if l < mlp.norms.len() {
                    out.push(format!("{prefix}.{l}.norm_scale"));
                    out.push(format!("{prefix}.{l}.norm_shift"));
                }
            }
        };
        for (inp, mlp) in self.inputs.iter().zip(&self.projections) {
            mlp_names(&format!("projection[{}]", inp.metapath), mlp, &mut out);
        }
        match self.fusion {
            FusionParams::Transformer { .. } => {
                out.extend(["fusion.query", "fusion.key", "fusion.value", "fusion.beta"].map(String::from))
            }
            FusionParams::WeightedSum { .. } => {
                out.extend(["fusion.weight", "fusion.bias", "fusion.query"].map(String::from))
            }
        }
        mlp_names("classifier", &self.classifier, &mut out);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.as_slice().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

fn zeros<T: Real>(m: &Matrix<T>) -> Matrix<T> {
    Matrix::zeros(m.rows(), m.cols())
}

fn push_fusion<'a, T: Real>(f: &'a FusionParams<T>, out: &mut Vec<&'a Matrix<T>>) {
    match f {
        FusionParams::Transformer {
            query,
            key,
            value,
            beta,
        } => out.extend([query, key, value, beta]),
        FusionParams::WeightedSum {
            weight,
            bias,
            query,
        } => out.extend([weight, bias, query]),
    }
}

fn push_mlp<'a, T: Real>(mlp: &'a Mlp<T>, out: &mut Vec<&'a Matrix<T>>) {
    for (l, layer) in mlp.layers.iter().enumerate() {
        out.push(&layer.weight);
        out.push(&layer.bias);
        if let Some(n) = mlp.norms.get(l) {
            out.push(&n.scale);
            out.push(&n.shift);
        }
    }
}

fn push_mlp_mut<'a, T: Real>(mlp: &'a mut Mlp<T>, out: &mut Vec<&'a mut Matrix<T>>) {
    let Mlp { layers, norms } = mlp;
    let mut norms = norms.iter_mut();
    for layer in layers.iter_mut() {
        out.push(&mut layer.weight);
        out.push(&mut layer.bias);
        if let Some(n) = norms.next() {
            out.push(&mut n.scale);
            out.push(&mut n.shift);
        }
    }
}
