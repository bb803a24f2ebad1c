use crate::error::{LabError, Result};
use crate::geometry::cosine_slices;
use crate::linalg::DenseVector;
use crate::rng::Rng;
use crate::toy_model::{sample_pairs, TranslationModelSpec};

use super::{loss_and_grads, AdapterPair, BaseWeight, Batch};

/// Loss above this (or any non-finite loss) aborts training.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    GradientDescent,
    /// Adam without weight decay.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            steps: 2000,
            batch_size: 64,
            optimizer: Optimizer::adam(),
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(LabError::config("lr", "learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(LabError::config("batch_size", "batch size must be positive"));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps.is_nan() || eps <= 0.0 {
                return Err(LabError::config("optimizer", "Adam needs betas in [0,1) and eps > 0"));
            }
        }
        Ok(())
    }
}

/// Where minibatches come from.
#[derive(Debug, Clone)]
pub enum TrainingData {
    /// Fresh pairs from the translation model every step.
    Model(TranslationModelSpec),
    /// A fixed paired dataset, sampled with replacement (full batch when
    /// `batch_size >= N`).
    Pairs(Batch),
}

impl TrainingData {
    fn minibatch(&self, batch_size: usize, rng: &mut Rng) -> Result<Batch> {
        match self {
            TrainingData::Model(spec) => {
                let (xv, xt) = sample_pairs(spec, batch_size, rng)?;
                Batch::new(xv, xt)
            }
            TrainingData::Pairs(batch) => {
                if batch_size >= batch.len() {
                    return Ok(batch.clone());
                }
                let idx: Vec<usize> = (0..batch_size).map(|_| rng.below(batch.len())).collect();
                Batch::new(batch.inputs.select_rows(&idx), batch.targets.select_rows(&idx))
            }
        }
    }
}

/// Per-step record. `losses[t]` is the minibatch loss before update `t`;
/// `alignment[t]` is `|cos|` between the leading left-singular direction of
/// `ΔW` after update `t` and the true gap (0 while `ΔW = 0`). `alignment` is
/// empty when no gap was supplied.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub losses: Vec<f64>,
    pub alignment: Vec<f64>,
}

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

fn step_params(
    params: &mut [f64],
    grads: &[f64],
    moments: &mut Moments,
    optimizer: Optimizer,
    lr: f64,
    t: usize,
) {
    match optimizer {
        Optimizer::GradientDescent => {
            for (p, g) in params.iter_mut().zip(grads) {
                *p -= lr * g;
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            let bc1 = 1.0 - beta1.powi(t as i32);
            let bc2 = 1.0 - beta2.powi(t as i32);
            for i in 0..params.len() {
                let g = grads[i];
                moments.m[i] = beta1 * moments.m[i] + (1.0 - beta1) * g;
                moments.v[i] = beta2 * moments.v[i] + (1.0 - beta2) * g * g;
                let m_hat = moments.m[i] / bc1;
                let v_hat = moments.v[i] / bc2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Minibatch training on the identity-base alignment loss.
pub fn train(
    adapter: &AdapterPair,
    data: &TrainingData,
    cfg: &TrainConfig,
    true_gap: Option<&DenseVector>,
) -> Result<(AdapterPair, TrainTrace)> {
    cfg.validate()?;
    if let Some(g) = true_gap {
        if g.dim() != adapter.d() {
            return Err(LabError::DimensionMismatch(format!(
                "true gap has dim {} but adapter d = {}",
                g.dim(),
                adapter.d()
            )));
        }
    }
    let mut current = adapter.clone();
    let mut trace = TrainTrace::default();
    let mut rng = Rng::new(cfg.seed);
    let mut mom_b = Moments::new(current.b().as_slice().len());
    let mut mom_a = Moments::new(current.a().as_slice().len());

    for step in 0..cfg.steps {
        let batch = data.minibatch(cfg.batch_size, &mut rng)?;
        let (loss, grads) = match loss_and_grads(&current, &BaseWeight::Identity, &batch) {
            Ok(out) => out,
            Err(LabError::NonFinite(_)) => return Err(LabError::Divergence { step, loss: f64::NAN }),
            Err(e) => return Err(e),
        };
        if loss > DIVERGENCE_THRESHOLD {
            return Err(LabError::Divergence { step, loss });
        }
        trace.losses.push(loss);

        let t = step + 1;
        let (b, a) = current.params_mut();
        step_params(b, grads.d_b.as_slice(), &mut mom_b, cfg.optimizer, cfg.learning_rate, t);
        step_params(a, grads.d_a.as_slice(), &mut mom_a, cfg.optimizer, cfg.learning_rate, t);
        if b.iter().chain(a.iter()).any(|p| !p.is_finite()) {
            return Err(LabError::Divergence { step, loss: f64::NAN });
        }

        if let Some(g) = true_gap {
            let align = match current.leading_direction() {
                Some(u) => cosine_slices(&u, g.as_slice()).map(f64::abs).unwrap_or(0.0),
                None => 0.0,
            };
            trace.alignment.push(align);
        }
    }
    Ok((current, trace))
}
