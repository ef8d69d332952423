use serde::{Deserialize, Serialize};

use super::DiffusionError;

/// Offset of the cosine-squared schedule.
pub const COSINE_OFFSET: f64 = 0.008;
pub const ALPHA_BAR_MIN: f64 = 1e-5;

/// Cumulative signal fractions `alpha_bar[0..=K]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub steps: usize,
    pub alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn alpha_bar(&self, k: usize) -> Result<f64, DiffusionError> {
        self.alpha_bar
            .get(k)
            .copied()
            .ok_or(DiffusionError::StepOutOfRange { k, max: self.steps })
    }
}

/// `alpha_bar[k] = f(k) / f(0)` with `f(k) = cos^2(((k/K + s) / (1 + s)) * pi/2)`,
/// clipped to `[1e-5, 1]`.
pub fn cosine_schedule(steps: usize) -> Result<NoiseSchedule, DiffusionError> {
    if steps < 1 {
        return Err(DiffusionError::InvalidSteps(steps));
    }
    let s = COSINE_OFFSET;
    let f = |k: usize| {
        let x = ((k as f64 / steps as f64 + s) / (1.0 + s)) * std::f64::consts::FRAC_PI_2;
        x.cos().powi(2)
    };
    let f0 = f(0);
    let alpha_bar = (0..=steps).map(|k| (f(k) / f0).clamp(ALPHA_BAR_MIN, 1.0)).collect();
    Ok(NoiseSchedule { steps, alpha_bar })
}

/// `a_k = sqrt(alpha_bar_k) * a0 + sqrt(1 - alpha_bar_k) * eps`.
pub fn forward_noise(a0: &[f64], k: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>, DiffusionError> {
    if a0.len() != eps.len() {
        return Err(DiffusionError::ShapeMismatch {
            expected: a0.len(),
            got: eps.len(),
        });
    }
    let ab = sched.alpha_bar(k)?;
    let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(a0.iter().zip(eps).map(|(a, e)| sa * a + sn * e).collect())
}

/// Mean squared error over all elements.
pub fn mse_loss(eps: &[f64], eps_hat: &[f64]) -> Result<f64, DiffusionError> {
    if eps.len() != eps_hat.len() {
        return Err(DiffusionError::ShapeMismatch {
            expected: eps.len(),
            got: eps_hat.len(),
        });
    }
    if eps.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = eps.iter().zip(eps_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(s / eps.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints_and_monotonicity() {
        let s = cosine_schedule(100).unwrap();
        assert_eq!(s.alpha_bar.len(), 101);
        assert_eq!(s.alpha_bar[0], 1.0);
        assert!(s.alpha_bar[100] < 0.01);
        assert!(s.alpha_bar.windows(2).all(|w| w[1] < w[0]));
        assert!(cosine_schedule(0).is_err());
    }

    #[test]
    fn forward_noise_limits() {
        let s = cosine_schedule(100).unwrap();
        let a0 = [0.3, -1.0];
        let eps = [1.5, 0.2];
        assert_eq!(forward_noise(&a0, 0, &eps, &s).unwrap(), a0.to_vec());
        let last = forward_noise(&a0, 100, &eps, &s).unwrap();
        for (l, e) in last.iter().zip(eps) {
            assert!((l - e).abs() < 0.01);
        }
        assert!(forward_noise(&a0, 101, &eps, &s).is_err());
        assert!(forward_noise(&a0, 1, &eps[..1], &s).is_err());
    }

    #[test]
    fn mse_cases() {
        let e = [0.5, -0.25, 2.0];
        assert_eq!(mse_loss(&e, &e).unwrap(), 0.0);
        let shifted: Vec<f64> = e.iter().map(|v| v + 1.0).collect();
        assert!((mse_loss(&e, &shifted).unwrap() - 1.0).abs() < 1e-15);
        assert!(mse_loss(&e, &e[..2]).is_err());
    }
}
