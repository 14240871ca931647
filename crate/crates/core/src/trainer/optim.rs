use ndarray::{Array2, ArrayView1, ArrayViewMut1};
use serde::{Deserialize, Serialize};

use super::graph::Gradients;
use super::model::Model;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    /// Adam moments with decoupled weight decay.
    #[default]
    Adamw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub grad_clip_norm: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adamw,
            learning_rate: 1e-5,
            grad_clip_norm: 1.0,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.learning_rate, self.grad_clip_norm, self.epsilon];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(
                "learning rate, clip norm and epsilon must be positive".into(),
            ));
        }
        if self.weight_decay.is_nan()
            || self.weight_decay < 0.0
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
        {
            return Err(Error::Config(
                "weight decay must be >= 0 and betas in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Scales `grads` in place so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> Result<f64> {
    let norm = grads.norm();
    if !norm.is_finite() {
        return Err(Error::Numerical(format!("non-finite gradient norm {norm}")));
    }
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    Ok(norm)
}

#[derive(Debug, Clone)]
struct Moments {
    first: Array2<f64>,
    second: Array2<f64>,
}

impl Moments {
    fn like(a: &Array2<f64>) -> Self {
        Self {
            first: Array2::zeros(a.raw_dim()),
            second: Array2::zeros(a.raw_dim()),
        }
    }
}

/// Optimizer state. Embedding rows are updated lazily: only rows with a
/// gradient in the current step move, including their weight decay.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    steps: u64,
    embeddings: Option<Moments>,
    projection: Option<Moments>,
    reducer: Option<Moments>,
}

struct AdamStep {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    decay: f64,
    bias1: f64,
    bias2: f64,
}

impl AdamStep {
    fn apply(
        &self,
        mut p: ArrayViewMut1<f64>,
        g: ArrayView1<f64>,
        mut m: ArrayViewMut1<f64>,
        mut v: ArrayViewMut1<f64>,
    ) {
        for i in 0..p.len() {
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let m_hat = m[i] / self.bias1;
            let v_hat = v[i] / self.bias2;
            p[i] -= self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.decay * p[i]);
        }
    }

    fn apply_dense(&self, p: &mut Array2<f64>, g: &Array2<f64>, state: &mut Moments) {
        for (((pr, gr), mr), vr) in p
            .outer_iter_mut()
            .zip(g.outer_iter())
            .zip(state.first.outer_iter_mut())
            .zip(state.second.outer_iter_mut())
        {
            self.apply(pr, gr, mr, vr);
        }
    }
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            steps: 0,
            embeddings: None,
            projection: None,
            reducer: None,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Clips, then updates `model`. `update_reducer` is false for heads that
    /// never read the reducer. Returns the pre-clip gradient norm.
    pub fn step(
        &mut self,
        model: &mut Model,
        grads: &mut Gradients,
        update_reducer: bool,
    ) -> Result<f64> {
        if !grads.is_finite() {
            return Err(Error::Numerical("non-finite gradient".into()));
        }
        let norm = clip_global_norm(grads, self.config.grad_clip_norm)?;
        self.steps += 1;
        let cfg = self.config;
        match cfg.optimizer {
            OptimizerKind::Sgd => {
                for (row, g) in &grads.embeddings {
                    model
                        .encoder
                        .embeddings
                        .row_mut(*row)
                        .scaled_add(-cfg.learning_rate, g);
                }
                model
                    .encoder
                    .projection
                    .scaled_add(-cfg.learning_rate, &grads.projection);
                if update_reducer {
                    model.reducer.scaled_add(-cfg.learning_rate, &grads.reducer);
                }
            }
            OptimizerKind::Adamw => {
                let t = self.steps as i32;
                let step = AdamStep {
                    lr: cfg.learning_rate,
                    beta1: cfg.beta1,
                    beta2: cfg.beta2,
                    eps: cfg.epsilon,
                    decay: cfg.weight_decay,
                    bias1: 1.0 - cfg.beta1.powi(t),
                    bias2: 1.0 - cfg.beta2.powi(t),
                };
                let emb = self
                    .embeddings
                    .get_or_insert_with(|| Moments::like(&model.encoder.embeddings));
                for (row, g) in &grads.embeddings {
                    step.apply(
                        model.encoder.embeddings.row_mut(*row),
                        g.view(),
                        emb.first.row_mut(*row),
                        emb.second.row_mut(*row),
                    );
                }
                let proj = self
                    .projection
                    .get_or_insert_with(|| Moments::like(&model.encoder.projection));
                step.apply_dense(&mut model.encoder.projection, &grads.projection, proj);
                if update_reducer {
                    let red = self
                        .reducer
                        .get_or_insert_with(|| Moments::like(&model.reducer));
                    step.apply_dense(&mut model.reducer, &grads.reducer, red);
                }
            }
        }
        if !model.is_finite() {
            return Err(Error::Numerical(format!(
                "parameters became non-finite at update {}",
                self.steps
            )));
        }
        Ok(norm)
    }
}
