use serde::{Deserialize, Serialize};

use super::params::{Gradients, ModelParams};
use crate::dense::{Matrix, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay coefficient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T: Real> {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Matrix<T>>,
    second: Vec<Matrix<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(config: AdamConfig, params: &ModelParams<T>) -> Self {
        Self::for_shapes(config, params.tensors().iter().map(|t| t.shape()))
    }

    pub fn for_shapes(config: AdamConfig, shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let zeros: Vec<Matrix<T>> = shapes.into_iter().map(|(r, c)| Matrix::zeros(r, c)).collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// One bias-corrected update over aligned parameter/gradient lists.
    pub fn update(&mut self, params: Vec<&mut Matrix<T>>, grads: Vec<&Matrix<T>>) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let lr = T::of(c.lr);
        let b1 = T::of(c.beta1);
        let b2 = T::of(c.beta2);
        let eps = T::of(c.eps);
        let decay = T::of(c.lr * c.weight_decay);
        let correct1 = T::one() - T::of(c.beta1.powi(t));
        let correct2 = T::one() - T::of(c.beta2.powi(t));
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::Shape(format!(
                    "parameter {:?}, gradient {:?}, moment {:?}",
                    p.shape(),
                    g.shape(),
                    m.shape()
                )));
            }
            for (((pv, &gv), mv), vv) in p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                *mv = b1 * *mv + (T::one() - b1) * gv;
                *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                let m_hat = *mv / correct1;
                let v_hat = *vv / correct2;
                if c.weight_decay != 0.0 {
                    *pv -= decay * *pv;
                }
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

pub fn adam_step<T: Real>(
    params: &mut ModelParams<T>,
    grads: &Gradients<T>,
    state: &mut OptimizerState<T>,
) -> Result<()> {
    state.update(params.tensors_mut(), grads.tensors())
}
