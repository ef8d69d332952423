//! FiLM-conditioned two-layer MLP noise predictor with hand-written gradients.
//!
//! ```text
//! temb = W_t2 tanh(W_t1 sin_emb(k) + b_t1) + b_t2
//! [dg1 b1 dg2 b2] = W_f [cond; temb] + b_f
//! h1 = tanh((1 + dg1) * (W_in x + b_in) + b1)
//! h2 = tanh((1 + dg2) * (W_h h1 + b_h) + b2)
//! out = W_out h2 + b_out
//! ```
//!
//! All parameters live in one flat vector so EMA, Adam and finite-difference
//! checks can treat them uniformly.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::DiffusionError;

/// Sinusoidal features of the diffusion step.
pub const STEP_EMBED_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserShape {
    pub action_dim: usize,
    pub cond_dim: usize,
    pub hidden: usize,
    pub temb_dim: usize,
}

impl DenoiserShape {
    pub fn new(action_dim: usize, cond_dim: usize) -> Self {
        Self {
            action_dim,
            cond_dim,
            hidden: 64,
            temb_dim: 32,
        }
    }
}

/// Offsets of each tensor inside the flat parameter vector. Matrices are
/// row-major `[rows x cols]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    t1_w: usize,
    t1_b: usize,
    t2_w: usize,
    t2_b: usize,
    film_w: usize,
    film_b: usize,
    in_w: usize,
    in_b: usize,
    h_w: usize,
    h_b: usize,
    out_w: usize,
    out_b: usize,
    total: usize,
}

impl Layout {
    fn new(s: &DenoiserShape) -> Self {
        let (d, c, h, e, f) = (s.action_dim, s.cond_dim, s.hidden, s.temb_dim, STEP_EMBED_DIM);
        let mut off = 0;
        let mut take = |n: usize| {
            let o = off;
            off += n;
            o
        };
        let t1_w = take(e * f);
        let t1_b = take(e);
        let t2_w = take(e * e);
        let t2_b = take(e);
        let film_w = take(4 * h * (c + e));
        let film_b = take(4 * h);
        let in_w = take(h * d);
        let in_b = take(h);
        let h_w = take(h * h);
        let h_b = take(h);
        let out_w = take(d * h);
        let out_b = take(d);
        Layout {
            t1_w,
            t1_b,
            t2_w,
            t2_b,
            film_w,
            film_b,
            in_w,
            in_b,
            h_w,
            h_b,
            out_w,
            out_b,
            total: off,
        }
    }
}

pub fn step_embedding(k: usize) -> [f64; STEP_EMBED_DIM] {
    let half = STEP_EMBED_DIM / 2;
    let mut out = [0.0; STEP_EMBED_DIM];
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        let (s, c) = (k as f64 * freq).sin_cos();
        out[2 * i] = s;
        out[2 * i + 1] = c;
    }
    out
}

/// `y = W x + b` for row-major `W` of shape `[b.len() x x.len()]`.
fn affine(w: &[f64], b: &[f64], x: &[f64], y: &mut [f64]) {
    let n = x.len();
    for (r, yr) in y.iter_mut().enumerate() {
        let row = &w[r * n..(r + 1) * n];
        *yr = b[r] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
    }
}

/// `dW += g x^T`, `db += g`, and returns `W^T g` into `dx` when given.
fn affine_back(w: &[f64], dw: &mut [f64], db: &mut [f64], x: &[f64], g: &[f64], dx: Option<&mut [f64]>) {
    let n = x.len();
    for (r, gr) in g.iter().enumerate() {
        db[r] += gr;
        let row = &mut dw[r * n..(r + 1) * n];
        for (a, v) in row.iter_mut().zip(x) {
            *a += gr * v;
        }
    }
    if let Some(dx) = dx {
        dx.iter_mut().for_each(|v| *v = 0.0);
        for (r, gr) in g.iter().enumerate() {
            let row = &w[r * n..(r + 1) * n];
            for (d, a) in dx.iter_mut().zip(row) {
                *d += gr * a;
            }
        }
    }
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone, Default)]
struct Trace {
    se: Vec<f64>,
    e1: Vec<f64>,
    z: Vec<f64>,
    film: Vec<f64>,
    u1: Vec<f64>,
    h1: Vec<f64>,
    u2: Vec<f64>,
    h2: Vec<f64>,
    out: Vec<f64>,
}

/// The noise-prediction network with its EMA shadow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDenoiser {
    pub shape: DenoiserShape,
    pub params: Vec<f64>,
    pub shadow: Vec<f64>,
}

/// Borrowed parameter set that can run forward passes.
#[derive(Debug, Clone, Copy)]
pub struct DenoiserView<'a> {
    shape: DenoiserShape,
    layout: Layout,
    p: &'a [f64],
}

impl ToyDenoiser {
    pub fn param_count(shape: &DenoiserShape) -> usize {
        Layout::new(shape).total
    }

    /// Uniform Glorot-style initialization; FiLM weights start small so the
    /// untrained network is close to its unconditioned form.
    pub fn init<R: Rng>(shape: DenoiserShape, rng: &mut R) -> Self {
        let l = Layout::new(&shape);
        let mut p = vec![0.0; l.total];
        let (d, c, h, e, f) = (
            shape.action_dim,
            shape.cond_dim,
            shape.hidden,
            shape.temb_dim,
            STEP_EMBED_DIM,
        );
        let mut fill = |off: usize, rows: usize, cols: usize, gain: f64| {
            let a = gain * (6.0 / (rows + cols) as f64).sqrt();
            let u = Uniform::new_inclusive(-a, a).expect("finite bounds");
            for v in &mut p[off..off + rows * cols] {
                *v = u.sample(rng);
            }
        };
        fill(l.t1_w, e, f, 1.0);
        fill(l.t2_w, e, e, 1.0);
        fill(l.film_w, 4 * h, c + e, 0.1);
        fill(l.in_w, h, d, 1.0);
        fill(l.h_w, h, h, 1.0);
        fill(l.out_w, d, h, 1.0);
        Self {
            shape,
            shadow: p.clone(),
            params: p,
        }
    }

    pub fn view(&self) -> DenoiserView<'_> {
        DenoiserView {
            shape: self.shape,
            layout: Layout::new(&self.shape),
            p: &self.params,
        }
    }

    pub fn ema_view(&self) -> DenoiserView<'_> {
        DenoiserView {
            shape: self.shape,
            layout: Layout::new(&self.shape),
            p: &self.shadow,
        }
    }

    pub fn check_finite(&self) -> Result<(), DiffusionError> {
        if self.params.iter().chain(&self.shadow).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(DiffusionError::NonFinite)
        }
    }

    /// Zeroes every FiLM head parameter (gamma = 1, beta = 0 everywhere).
    pub fn clear_film(&mut self) {
        let l = Layout::new(&self.shape);
        self.params[l.film_w..l.in_w].iter_mut().for_each(|v| *v = 0.0);
    }

    /// Sets every weight matrix to zero, keeping the biases.
    pub fn zero_weights(&mut self) {
        let l = Layout::new(&self.shape);
        for (start, end) in [
            (l.t1_w, l.t1_b),
            (l.t2_w, l.t2_b),
            (l.film_w, l.film_b),
            (l.in_w, l.in_b),
            (l.h_w, l.h_b),
            (l.out_w, l.out_b),
        ] {
            self.params[start..end].iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn output_bias(&self) -> &[f64] {
        let l = Layout::new(&self.shape);
        &self.params[l.out_b..l.total]
    }

    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let l = Layout::new(&self.shape);
        &mut self.params[l.out_b..l.total]
    }

    /// Range of the output-layer parameters (weights then bias).
    pub fn output_layer_range(&self) -> std::ops::Range<usize> {
        let l = Layout::new(&self.shape);
        l.out_w..l.total
    }
}

impl<'a> DenoiserView<'a> {
    pub fn shape(&self) -> DenoiserShape {
        self.shape
    }

    fn check(&self, x: &[f64], cond: &[f64]) -> Result<(), DiffusionError> {
        if x.len() != self.shape.action_dim {
            return Err(DiffusionError::ShapeMismatch {
                expected: self.shape.action_dim,
                got: x.len(),
            });
        }
        if cond.len() != self.shape.cond_dim {
            return Err(DiffusionError::ShapeMismatch {
                expected: self.shape.cond_dim,
                got: cond.len(),
            });
        }
        if !self.p.iter().all(|v| v.is_finite()) {
            return Err(DiffusionError::NonFinite);
        }
        Ok(())
    }

    fn run(&self, x: &[f64], k: usize, cond: &[f64], film: bool) -> Trace {
        let (l, p) = (self.layout, self.p);
        let (d, c, h, e) = (
            self.shape.action_dim,
            self.shape.cond_dim,
            self.shape.hidden,
            self.shape.temb_dim,
        );
        let mut t = Trace {
            se: step_embedding(k).to_vec(),
            e1: vec![0.0; e],
            z: vec![0.0; c + e],
            film: vec![0.0; 4 * h],
            u1: vec![0.0; h],
            h1: vec![0.0; h],
            u2: vec![0.0; h],
            h2: vec![0.0; h],
            out: vec![0.0; d],
        };
        affine(&p[l.t1_w..l.t1_b], &p[l.t1_b..l.t2_w], &t.se, &mut t.e1);
        t.e1.iter_mut().for_each(|v| *v = v.tanh());
        t.z[..c].copy_from_slice(cond);
        affine(&p[l.t2_w..l.t2_b], &p[l.t2_b..l.film_w], &t.e1, &mut t.z[c..]);
        if film {
            affine(&p[l.film_w..l.film_b], &p[l.film_b..l.in_w], &t.z, &mut t.film);
        }
        affine(&p[l.in_w..l.in_b], &p[l.in_b..l.h_w], x, &mut t.u1);
        for i in 0..h {
            t.h1[i] = ((1.0 + t.film[i]) * t.u1[i] + t.film[h + i]).tanh();
        }
        affine(&p[l.h_w..l.h_b], &p[l.h_b..l.out_w], &t.h1, &mut t.u2);
        for i in 0..h {
            t.h2[i] = ((1.0 + t.film[2 * h + i]) * t.u2[i] + t.film[3 * h + i]).tanh();
        }
        affine(&p[l.out_w..l.out_b], &p[l.out_b..l.total], &t.h2, &mut t.out);
        t
    }

    /// Predicted noise `eps_hat(x, k, cond)`.
    pub fn forward(&self, x: &[f64], k: usize, cond: &[f64]) -> Result<Vec<f64>, DiffusionError> {
        self.check(x, cond)?;
        Ok(self.run(x, k, cond, true).out)
    }

    /// The same network with FiLM bypassed.
    pub fn forward_unconditioned(&self, x: &[f64], k: usize) -> Result<Vec<f64>, DiffusionError> {
        let cond = vec![0.0; self.shape.cond_dim];
        self.check(x, &cond)?;
        Ok(self.run(x, k, &cond, false).out)
    }

    /// Adds `scale * dL/dtheta` of `L = mean((out - target)^2)` (mean over
    /// this sample's elements) into `grad` and returns the sample loss.
    pub fn accumulate_grad(
        &self,
        x: &[f64],
        k: usize,
        cond: &[f64],
        target: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64, DiffusionError> {
        self.check(x, cond)?;
        if target.len() != self.shape.action_dim {
            return Err(DiffusionError::ShapeMismatch {
                expected: self.shape.action_dim,
                got: target.len(),
            });
        }
        if grad.len() != self.layout.total {
            return Err(DiffusionError::ShapeMismatch {
                expected: self.layout.total,
                got: grad.len(),
            });
        }
        let (l, p) = (self.layout, self.p);
        let (c, h, e) = (self.shape.cond_dim, self.shape.hidden, self.shape.temb_dim);
        let t = self.run(x, k, cond, true);
        let n = target.len() as f64;
        let loss = t.out.iter().zip(target).map(|(o, y)| (o - y).powi(2)).sum::<f64>() / n;
        let dout: Vec<f64> = t
            .out
            .iter()
            .zip(target)
            .map(|(o, y)| scale * 2.0 * (o - y) / n)
            .collect();

        let (g_lo, g_hi) = grad.split_at_mut(l.out_w);
        let (g_out_w, g_out_b) = g_hi.split_at_mut(l.out_b - l.out_w);
        let mut dh2 = vec![0.0; h];
        affine_back(&p[l.out_w..l.out_b], g_out_w, g_out_b, &t.h2, &dout, Some(&mut dh2));

        let mut dfilm = vec![0.0; 4 * h];
        let mut du2 = vec![0.0; h];
        for i in 0..h {
            let dp2 = dh2[i] * (1.0 - t.h2[i] * t.h2[i]);
            dfilm[2 * h + i] = dp2 * t.u2[i];
            dfilm[3 * h + i] = dp2;
            du2[i] = dp2 * (1.0 + t.film[2 * h + i]);
        }
        let (g_a, g_b) = g_lo.split_at_mut(l.h_w);
        let (g_h_w, g_h_b) = g_b.split_at_mut(l.h_b - l.h_w);
        let mut dh1 = vec![0.0; h];
        affine_back(&p[l.h_w..l.h_b], g_h_w, g_h_b, &t.h1, &du2, Some(&mut dh1));

        let mut du1 = vec![0.0; h];
        for i in 0..h {
            let dp1 = dh1[i] * (1.0 - t.h1[i] * t.h1[i]);
            dfilm[i] = dp1 * t.u1[i];
            dfilm[h + i] = dp1;
            du1[i] = dp1 * (1.0 + t.film[i]);
        }
        let (g_c, g_d) = g_a.split_at_mut(l.in_w);
        let (g_in_w, g_in_b) = g_d.split_at_mut(l.in_b - l.in_w);
        affine_back(&p[l.in_w..l.in_b], g_in_w, g_in_b, x, &du1, None);

        let (g_e, g_f) = g_c.split_at_mut(l.film_w);
        let (g_film_w, g_film_b) = g_f.split_at_mut(l.film_b - l.film_w);
        let mut dz = vec![0.0; c + e];
        affine_back(&p[l.film_w..l.film_b], g_film_w, g_film_b, &t.z, &dfilm, Some(&mut dz));

        let (g_g, g_h) = g_e.split_at_mut(l.t2_w);
        let (g_t2_w, g_t2_b) = g_h.split_at_mut(l.t2_b - l.t2_w);
        let mut de1 = vec![0.0; e];
        affine_back(&p[l.t2_w..l.t2_b], g_t2_w, g_t2_b, &t.e1, &dz[c..], Some(&mut de1));
        let dq: Vec<f64> = de1.iter().zip(&t.e1).map(|(g, v)| g * (1.0 - v * v)).collect();
        let (g_t1_w, g_t1_b) = g_g.split_at_mut(l.t1_b - l.t1_w);
        affine_back(&p[l.t1_w..l.t1_b], g_t1_w, g_t1_b, &t.se, &dq, None);
        Ok(loss)
    }
}

/// Loss and exact parameter gradient of `mse(eps, eps_hat(a_k, k, cond))`.
pub fn denoiser_backward(
    model: &ToyDenoiser,
    a_k: &[f64],
    k: usize,
    cond: &[f64],
    eps: &[f64],
) -> Result<(f64, Vec<f64>), DiffusionError> {
    let mut grad = vec![0.0; model.params.len()];
    let loss = model.view().accumulate_grad(a_k, k, cond, eps, 1.0, &mut grad)?;
    Ok((loss, grad))
}

pub fn denoiser_forward(model: &ToyDenoiser, a_k: &[f64], k: usize, cond: &[f64]) -> Result<Vec<f64>, DiffusionError> {
    model.view().forward(a_k, k, cond)
}
