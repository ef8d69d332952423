use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::DenoiserView;
use super::schedule::NoiseSchedule;
use super::DiffusionError;
use crate::action::{Action, ACTION_DIM};

/// Anything that predicts the noise in `x_k`.
pub trait NoisePredictor {
    fn dim(&self) -> usize;
    fn predict(&self, x: &[f64], k: usize, cond: &[f64]) -> Result<Vec<f64>, DiffusionError>;
}

impl NoisePredictor for DenoiserView<'_> {
    fn dim(&self) -> usize {
        self.shape().action_dim
    }

    fn predict(&self, x: &[f64], k: usize, cond: &[f64]) -> Result<Vec<f64>, DiffusionError> {
        self.forward(x, k, cond)
    }
}

/// Exact posterior-mean noise for data `N(mean, std^2 I)`:
/// `eps_hat = sqrt(1 - ab) (x - sqrt(ab) mu) / (ab sigma^2 + 1 - ab)`.
#[derive(Debug, Clone)]
pub struct AnalyticGaussian {
    pub mean: Vec<f64>,
    pub std: f64,
    pub schedule: NoiseSchedule,
}

impl NoisePredictor for AnalyticGaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn predict(&self, x: &[f64], k: usize, _cond: &[f64]) -> Result<Vec<f64>, DiffusionError> {
        let ab = self.schedule.alpha_bar(k)?;
        let var = ab * self.std * self.std + 1.0 - ab;
        Ok(x.iter()
            .zip(&self.mean)
            .map(|(x, m)| (1.0 - ab).sqrt() * (x - ab.sqrt() * m) / var)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DdimOptions {
    pub n_steps: usize,
    /// Clamp `x0_hat` to `[-c, c]` at every step.
    pub clip_x0: Option<f64>,
}

impl Default for DdimOptions {
    fn default() -> Self {
        Self {
            n_steps: 10,
            clip_x0: None,
        }
    }
}

/// Uniform-stride sub-schedule `K = k_0 > k_1 > ... > k_{n-1} > 0`.
pub fn ddim_timesteps(k_max: usize, n_steps: usize) -> Result<Vec<usize>, DiffusionError> {
    if n_steps == 0 || n_steps > k_max {
        return Err(DiffusionError::InvalidSampleSteps { n_steps, k_max });
    }
    Ok((0..n_steps).map(|j| k_max * (n_steps - j) / n_steps).collect())
}

pub fn gaussian_noise(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Deterministic (eta = 0) DDIM from a given initial `x_K`.
pub fn ddim_from<P: NoisePredictor + ?Sized>(
    pred: &P,
    cond: &[f64],
    sched: &NoiseSchedule,
    opts: &DdimOptions,
    mut x: Vec<f64>,
) -> Result<Vec<f64>, DiffusionError> {
    if x.len() != pred.dim() {
        return Err(DiffusionError::ShapeMismatch {
            expected: pred.dim(),
            got: x.len(),
        });
    }
    let ks = ddim_timesteps(sched.steps, opts.n_steps)?;
    for (j, &k) in ks.iter().enumerate() {
        let k_prev = ks.get(j + 1).copied().unwrap_or(0);
        let ab = sched.alpha_bar(k)?;
        let ab_prev = sched.alpha_bar(k_prev)?;
        let eps = pred.predict(&x, k, cond)?;
        for (xi, e) in x.iter_mut().zip(&eps) {
            let mut x0 = (*xi - (1.0 - ab).sqrt() * e) / ab.sqrt();
            if let Some(c) = opts.clip_x0 {
                x0 = x0.clamp(-c, c);
            }
            *xi = ab_prev.sqrt() * x0 + (1.0 - ab_prev).sqrt() * e;
        }
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(DiffusionError::NonFinite);
    }
    Ok(x)
}

/// DDIM starting from unit Gaussian noise keyed by `seed`.
pub fn ddim_sample<P: NoisePredictor + ?Sized>(
    pred: &P,
    cond: &[f64],
    sched: &NoiseSchedule,
    opts: &DdimOptions,
    seed: u64,
) -> Result<Vec<f64>, DiffusionError> {
    ddim_from(pred, cond, sched, opts, gaussian_noise(pred.dim(), seed))
}

/// `T_p` consecutive 11-D actions predicted at observation time `t0_obs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionChunkTensor {
    pub values: Vec<Action>,
    pub t0_obs: f64,
}

impl ActionChunkTensor {
    /// Splits a flat `T_p * 11` vector and canonicalizes every quaternion
    /// increment.
    pub fn from_flat(flat: &[f64], t0_obs: f64) -> Result<Self, DiffusionError> {
        if flat.is_empty() || !flat.len().is_multiple_of(ACTION_DIM) {
            return Err(DiffusionError::ShapeMismatch {
                expected: ACTION_DIM * (flat.len() / ACTION_DIM).max(1),
                got: flat.len(),
            });
        }
        let values = flat
            .chunks_exact(ACTION_DIM)
            .map(|c| {
                let mut a = Action(c.try_into().expect("chunk width"));
                a.canonicalize();
                a
            })
            .collect();
        Ok(Self { values, t0_obs })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|a| a.0).collect()
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }
}

pub fn sample_chunk<P: NoisePredictor + ?Sized>(
    pred: &P,
    cond: &[f64],
    sched: &NoiseSchedule,
    opts: &DdimOptions,
    seed: u64,
    t0_obs: f64,
) -> Result<ActionChunkTensor, DiffusionError> {
    ActionChunkTensor::from_flat(&ddim_sample(pred, cond, sched, opts, seed)?, t0_obs)
}
