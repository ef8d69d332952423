//! Savitzky-Golay smoothing of uniformly sampled series.

use super::PipelineError;
use crate::geometry::{Pose3, UnitQuat};

/// Solves `A x = b` for a small dense system by Gaussian elimination with
/// partial pivoting. `None` when singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Weights that evaluate the least-squares polynomial of degree `order`
/// through the `2 * half + 1` samples at the window center.
pub fn savgol_center_weights(half: usize, order: usize) -> Vec<f64> {
    let order = order.min(2 * half);
    let m = order + 1;
    let offsets: Vec<f64> = (-(half as i64)..=half as i64).map(|j| j as f64).collect();
    // normal equations (A^T A) c = e0, then w_j = sum_p c_p j^p
    let mut ata = vec![vec![0.0; m]; m];
    for (r, row) in ata.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = offsets.iter().map(|j| j.powi((r + c) as i32)).sum();
        }
    }
    let mut e0 = vec![0.0; m];
    e0[0] = 1.0;
    let c = solve(ata, e0).expect("Savitzky-Golay normal equations are nonsingular");
    offsets
        .iter()
        .map(|j| c.iter().enumerate().map(|(p, cp)| cp * j.powi(p as i32)).sum())
        .collect()
}

/// Smooths `series` with a centered least-squares polynomial fit. Near the
/// ends the window shrinks symmetrically to the largest that fits.
pub fn savgol_smooth(series: &[f64], window: usize, order: usize) -> Result<Vec<f64>, PipelineError> {
    if window.is_multiple_of(2) || window < 5 || window > series.len() {
        return Err(PipelineError::SavgolWindow {
            window,
            len: series.len(),
        });
    }
    let n = series.len();
    let full = window / 2;
    let mut cache: Vec<Option<Vec<f64>>> = vec![None; full + 1];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let half = full.min(i).min(n - 1 - i);
        let w = cache[half].get_or_insert_with(|| savgol_center_weights(half, order));
        let v: f64 = w.iter().enumerate().map(|(k, wk)| wk * series[i + k - half]).sum();
        out.push(v);
    }
    Ok(out)
}

/// Smooths a pose sequence: translations per axis, quaternions component-wise
/// after hemisphere alignment to the previous sample, then renormalized.
pub fn smooth_poses(poses: &[Pose3], window: usize, order: usize) -> Result<Vec<Pose3>, PipelineError> {
    let mut quats = Vec::with_capacity(poses.len());
    for p in poses {
        let q = match quats.last() {
            Some(prev) => p.rotation.aligned_to(prev),
            None => p.rotation,
        };
        quats.push(q);
    }
    let channel = |f: &dyn Fn(usize) -> f64| -> Result<Vec<f64>, PipelineError> {
        savgol_smooth(&(0..poses.len()).map(f).collect::<Vec<_>>(), window, order)
    };
    let tx = channel(&|i| poses[i].translation[0])?;
    let ty = channel(&|i| poses[i].translation[1])?;
    let tz = channel(&|i| poses[i].translation[2])?;
    let qw = channel(&|i| quats[i].w())?;
    let qx = channel(&|i| quats[i].x())?;
    let qy = channel(&|i| quats[i].y())?;
    let qz = channel(&|i| quats[i].z())?;
    Ok((0..poses.len())
        .map(|i| Pose3::new(UnitQuat::normalized(qw[i], qx[i], qy[i], qz[i]), [tx[i], ty[i], tz[i]]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_point_quadratic_weights() {
        // classic (-3, 12, 17, 12, -3) / 35
        let w = savgol_center_weights(2, 2);
        let expect = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|v| v / 35.0);
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reproduces_quadratics_and_constants() {
        let q: Vec<f64> = (0..40).map(|i| 0.3 * (i * i) as f64 - 2.0 * i as f64 + 5.0).collect();
        let s = savgol_smooth(&q, 9, 2).unwrap();
        for (a, b) in q.iter().zip(&s) {
            assert!((a - b).abs() < 1e-10);
        }
        let c = vec![4.2; 12];
        for v in savgol_smooth(&c, 5, 2).unwrap() {
            assert!((v - 4.2).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_windows() {
        let s = vec![0.0; 7];
        assert!(savgol_smooth(&s, 6, 2).is_err());
        assert!(savgol_smooth(&s, 3, 2).is_err());
        assert!(savgol_smooth(&s, 9, 2).is_err());
        assert!(savgol_smooth(&s, 7, 2).is_ok());
    }
}
