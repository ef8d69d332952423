use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::{DenoiserShape, ToyDenoiser};
use super::schedule::{forward_noise, NoiseSchedule};
use super::DiffusionError;
use crate::seed;

pub const DEFAULT_EMA_DECAY: f64 = 0.9999;

/// One training pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyExample {
    pub cond: Vec<f64>,
    pub a0: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub ema_decay: f64,
    /// Use `min(decay, (1 + t) / (10 + t))` so the shadow is usable early.
    pub ema_warmup: bool,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 64,
            lr: 1e-3,
            ema_decay: DEFAULT_EMA_DECAY,
            ema_warmup: true,
            hidden: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss per step.
    pub losses: Vec<f64>,
}

/// `shadow <- decay * shadow + (1 - decay) * params`.
pub fn ema_update(shadow: &mut [f64], params: &[f64], decay: f64) -> Result<(), DiffusionError> {
    if shadow.len() != params.len() {
        return Err(DiffusionError::ShapeMismatch {
            expected: shadow.len(),
            got: params.len(),
        });
    }
    if !(0.0..1.0).contains(&decay) {
        return Err(DiffusionError::DecayOutOfRange(decay));
    }
    for (s, p) in shadow.iter_mut().zip(params) {
        *s = decay * *s + (1.0 - decay) * p;
    }
    Ok(())
}

pub fn ema_decay_at(cfg: &TrainConfig, step: usize) -> f64 {
    if cfg.ema_warmup {
        cfg.ema_decay.min((1.0 + step as f64) / (10.0 + step as f64))
    } else {
        cfg.ema_decay
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

fn shape_of(data: &[ToyExample], hidden: usize) -> Result<DenoiserShape, DiffusionError> {
    let first = data.first().ok_or(DiffusionError::EmptyDataset)?;
    for ex in data {
        if ex.a0.len() != first.a0.len() {
            return Err(DiffusionError::ShapeMismatch {
                expected: first.a0.len(),
                got: ex.a0.len(),
            });
        }
        if ex.cond.len() != first.cond.len() {
            return Err(DiffusionError::ShapeMismatch {
                expected: first.cond.len(),
                got: ex.cond.len(),
            });
        }
    }
    Ok(DenoiserShape {
        hidden,
        ..DenoiserShape::new(first.a0.len(), first.cond.len())
    })
}

/// What one mini-batch element regresses onto.
enum Objective<'a> {
    Noise(&'a NoiseSchedule),
    /// Direct regression of `a0` from a zero input (the mean-seeking baseline).
    Mean,
}

fn fit(
    data: &[ToyExample],
    cfg: &TrainConfig,
    objective: Objective<'_>,
) -> Result<(ToyDenoiser, TrainReport), DiffusionError> {
    let shape = shape_of(data, cfg.hidden)?;
    if cfg.batch_size == 0 {
        return Err(DiffusionError::EmptyDataset);
    }
    let mut model = ToyDenoiser::init(shape, &mut seed::stream(cfg.seed, "denoiser-init"));
    let mut rng = seed::stream(cfg.seed, "denoiser-train");
    let mut adam = Adam::new(model.params.len());
    let mut grad = vec![0.0; model.params.len()];
    let mut losses = Vec::with_capacity(cfg.steps);
    let zeros = vec![0.0; shape.action_dim];
    let scale = 1.0 / cfg.batch_size as f64;
    for step in 0..cfg.steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for _ in 0..cfg.batch_size {
            let ex = &data[rng.random_range(0..data.len())];
            let view = model.view();
            loss += match objective {
                Objective::Noise(sched) => {
                    let k = rng.random_range(1..=sched.steps);
                    let eps: Vec<f64> = (0..shape.action_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let a_k = forward_noise(&ex.a0, k, &eps, sched)?;
                    view.accumulate_grad(&a_k, k, &ex.cond, &eps, scale, &mut grad)?
                }
                Objective::Mean => view.accumulate_grad(&zeros, 0, &ex.cond, &ex.a0, scale, &mut grad)?,
            };
        }
        loss *= scale;
        if !loss.is_finite() || !grad.iter().all(|g| g.is_finite()) {
            return Err(DiffusionError::Diverged { step, loss });
        }
        losses.push(loss);
        adam.step(&mut model.params, &grad, cfg.lr);
        let decay = ema_decay_at(cfg, step);
        let ToyDenoiser { params, shadow, .. } = &mut model;
        ema_update(shadow, params, decay)?;
    }
    Ok((model, TrainReport { losses }))
}

/// Epsilon-prediction training with uniform `k in 1..=K`.
pub fn train_toy(
    data: &[ToyExample],
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
) -> Result<(ToyDenoiser, TrainReport), DiffusionError> {
    fit(data, cfg, Objective::Noise(sched))
}

/// Same network trained to output `a0` directly; sample with
/// [`regress`].
pub fn train_regression(data: &[ToyExample], cfg: &TrainConfig) -> Result<(ToyDenoiser, TrainReport), DiffusionError> {
    fit(data, cfg, Objective::Mean)
}

pub fn regress(model: &ToyDenoiser, cond: &[f64]) -> Result<Vec<f64>, DiffusionError> {
    model.ema_view().forward(&vec![0.0; model.shape.action_dim], 0, cond)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ema_limits() {
        let mut s = vec![1.0, 2.0];
        ema_update(&mut s, &[5.0, 6.0], 0.0).unwrap();
        assert_eq!(s, vec![5.0, 6.0]);
        let mut c = vec![3.0; 4];
        for _ in 0..100 {
            ema_update(&mut c, &[3.0; 4], 0.9999).unwrap();
        }
        assert_eq!(c, vec![3.0; 4]);
        assert!(ema_update(&mut c, &[1.0], 0.5).is_err());
        assert!(ema_update(&mut c, &[1.0; 4], 1.0).is_err());
        assert_eq!(TrainConfig::default().ema_decay, 0.9999);
    }

    #[test]
    fn ema_error_shrinks_by_decay() {
        let mut s = vec![0.0];
        let mut prev = 1.0;
        for _ in 0..20 {
            ema_update(&mut s, &[1.0], 0.8).unwrap();
            let err = 1.0 - s[0];
            assert!((err / prev - 0.8).abs() < 1e-9);
            prev = err;
        }
    }

    #[test]
    fn empty_dataset_is_error() {
        let sched = super::super::cosine_schedule(10).unwrap();
        assert!(matches!(
            train_toy(&[], &sched, &TrainConfig::default()),
            Err(DiffusionError::EmptyDataset)
        ));
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let sched = super::super::cosine_schedule(10).unwrap();
        let data = vec![ToyExample {
            cond: vec![1.0],
            a0: vec![1.0],
        }];
        let cfg = TrainConfig {
            steps: 50,
            batch_size: 4,
            hidden: 8,
            lr: 1e200,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_toy(&data, &sched, &cfg),
            Err(DiffusionError::Diverged { .. })
        ));
    }
}
