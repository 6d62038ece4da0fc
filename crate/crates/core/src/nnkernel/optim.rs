use serde::{Deserialize, Serialize};

use super::graph::{Gradients, ModelGraph};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd,
    SgdMomentum {
        #[serde(default = "default_momentum")]
        momentum: f64,
    },
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_momentum() -> f64 {
    0.9
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-7
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        OptimizerState {
            kind,
            learning_rate,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::adam(), learning_rate)
    }

    /// Clears moment estimates and the step counter.
    pub fn reset(&mut self) {
        self.step = 0;
        self.first.clear();
        self.second.clear();
    }

    fn ensure_moments(&mut self, grads: &Gradients) {
        if self.first.len() != grads.params.len() {
            self.first = grads.params.iter().map(|g| vec![0.0; g.len()]).collect();
            self.second = self.first.clone();
        }
    }
}

/// Applies one optimizer step to `model`.
pub fn update(model: &mut ModelGraph, grads: &Gradients, opt: &mut OptimizerState) -> Result<()> {
    if model.is_frozen() {
        return Err(Error::FrozenModel(model.name().to_string()));
    }
    let shapes_match = {
        let params = model.parameters();
        params.len() == grads.params.len()
            && params.iter().zip(&grads.params).all(|((_, p), g)| p.shape() == g.shape())
    };
    if !shapes_match {
        return Err(Error::ContractViolation(format!(
            "gradients do not match the parameters of `{}`",
            model.name()
        )));
    }
    opt.ensure_moments(grads);
    opt.step += 1;
    let lr = opt.learning_rate;
    let t = opt.step as i32;
    let kind = opt.kind;
    let (first, second) = (&mut opt.first, &mut opt.second);
    model.modify_parameters(|i, values| {
        let g = grads.params[i].values();
        match kind {
            OptimizerKind::Sgd => {
                for (p, d) in values.iter_mut().zip(g) {
                    *p = (f64::from(*p) - lr * d) as f32;
                }
            }
            OptimizerKind::SgdMomentum { momentum } => {
                for ((p, d), v) in values.iter_mut().zip(g).zip(first[i].iter_mut()) {
                    *v = momentum * *v - lr * d;
                    *p = (f64::from(*p) + *v) as f32;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, d), m), v) in values.iter_mut().zip(g).zip(first[i].iter_mut()).zip(second[i].iter_mut()) {
                    *m = beta1 * *m + (1.0 - beta1) * d;
                    *v = beta2 * *v + (1.0 - beta2) * d * d;
                    let step = lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    *p = (f64::from(*p) - step) as f32;
                }
            }
        }
    })
}
