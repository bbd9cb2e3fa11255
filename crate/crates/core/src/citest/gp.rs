//! Gaussian-process regression used to strip conditional dependence before
//! distance correlation.
//!
//! Kernel: unit-amplitude squared exponential on standardized inputs plus a
//! white-noise term. The length scale comes from the median pairwise distance;
//! the noise variance is the grid point with the largest log marginal
//! likelihood.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use super::{check_lengths, standardized};
use crate::error::{Error, Result};

pub const NOISE_GRID: [f64; 4] = [1e-3, 1e-2, 1e-1, 1.0];

const JITTER: [f64; 5] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7];
const MAX_JITTER: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GpFit {
    /// Standardized target minus posterior mean at the training inputs.
    pub residuals: Vec<f64>,
    pub length_scale: f64,
    pub noise_variance: f64,
    pub log_marginal_likelihood: f64,
}

/// Residuals of `target` after GP regression on the columns `z`.
///
/// With no inputs the standardized target is returned; a constant target gives
/// all-zero residuals.
pub fn gp_regress(z: &[&[f64]], target: &[f64]) -> Result<Vec<f64>> {
    fit(z, target).map(|f| f.residuals)
}

pub fn fit(z: &[&[f64]], target: &[f64]) -> Result<GpFit> {
    let n = target.len();
    check_lengths(n, z.iter().map(|c| c.len()))?;
    let Some(y) = standardized(target) else {
        return Ok(GpFit {
            residuals: vec![0.0; n],
            length_scale: f64::NAN,
            noise_variance: f64::NAN,
            log_marginal_likelihood: f64::NAN,
        });
    };
    let inputs: Vec<Vec<f64>> = z.iter().filter_map(|c| standardized(c)).collect();
    if inputs.is_empty() {
        return Ok(GpFit {
            residuals: y,
            length_scale: f64::NAN,
            noise_variance: f64::NAN,
            log_marginal_likelihood: f64::NAN,
        });
    }

    let sq = squared_distances(&inputs, n);
    let length_scale = median_distance(&sq, n).max(1e-3);
    let inv = -0.5 / (length_scale * length_scale);
    let kernel = Mat::from_fn(n, n, |i, j| (sq[i * n + j] * inv).exp());

    let mut best: Option<GpFit> = None;
    for &noise in &NOISE_GRID {
        let (alpha, logdet, used) = solve_shifted(&kernel, noise, &y)?;
        let fit_term: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let lml = -0.5 * fit_term - 0.5 * logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        if best.as_ref().is_none_or(|b| lml > b.log_marginal_likelihood) {
            // y - K alpha = (K + s I) alpha - K alpha = s alpha
            let residuals = alpha.iter().map(|a| used * a).collect();
            best = Some(GpFit {
                residuals,
                length_scale,
                noise_variance: noise,
                log_marginal_likelihood: lml,
            });
        }
    }
    best.ok_or_else(|| Error::NumericalFailure("empty noise grid".into()))
}

/// Solves `(K + (noise + jitter) I) alpha = y`, escalating jitter until the
/// Cholesky factorization succeeds. Returns alpha, log-determinant and the
/// total diagonal shift used.
fn solve_shifted(kernel: &Mat<f64>, noise: f64, y: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    let n = y.len();
    for jitter in JITTER.into_iter().chain(std::iter::once(MAX_JITTER)) {
        let shift = noise + jitter;
        let mut a = kernel.clone();
        for i in 0..n {
            a[(i, i)] += shift;
        }
        let Ok(llt) = a.llt(Side::Lower) else {
            continue;
        };
        let l = llt.L();
        let logdet = 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
        let mut rhs = Mat::from_fn(n, 1, |i, _| y[i]);
        llt.solve_in_place(rhs.as_mut());
        let alpha: Vec<f64> = (0..n).map(|i| rhs[(i, 0)]).collect();
        if alpha.iter().all(|v| v.is_finite()) && logdet.is_finite() {
            return Ok((alpha, logdet, shift));
        }
    }
    Err(Error::NumericalFailure(format!(
        "kernel matrix not positive definite (noise {noise}, jitter up to {MAX_JITTER})"
    )))
}

fn squared_distances(inputs: &[Vec<f64>], n: usize) -> Vec<f64> {
    let mut sq = vec![0.0; n * n];
    for col in inputs {
        for i in 0..n {
            let xi = col[i];
            let row = &mut sq[i * n..(i + 1) * n];
            for (s, xj) in row.iter_mut().zip(col) {
                let d = xi - xj;
                *s += d * d;
            }
        }
    }
    sq
}

fn median_distance(sq: &[f64], n: usize) -> f64 {
    let mut d: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| sq[i * n + j].sqrt())
        .collect();
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

#[cfg(test)]
mod tests {
    use super::super::testutil::normals;
    use super::*;

    #[test]
    fn no_inputs_returns_standardized_target() {
        let y: Vec<f64> = (0..50).map(|i| (i as f64).sin() * 3.0 + 2.0).collect();
        let r = gp_regress(&[], &y).unwrap();
        let expect = standardized(&y).unwrap();
        assert_eq!(r, expect);
    }

    #[test]
    fn constant_target_has_zero_residuals() {
        let z = normals(60, 1);
        let y = vec![4.2; 60];
        let r = gp_regress(&[&z], &y).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn fits_smooth_nonlinearity() {
        let n = 500;
        let z = normals(n, 2);
        let e = normals(n, 3);
        let y: Vec<f64> = z.iter().zip(&e).map(|(z, e)| (3.0 * z).sin() + 0.05 * e).collect();
        let f = fit(&[&z], &y).unwrap();
        let target_sd = crate::timeseries::mean_variance(&y).1.sqrt();
        // Residuals are in standardized units; convert back.
        let rms = (f.residuals.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt() * target_sd;
        assert!(rms < 0.15 * target_sd, "rms {rms}, sd {target_sd}");
        assert!(NOISE_GRID.contains(&f.noise_variance));
    }

    #[test]
    fn median_distance_of_known_points() {
        let pts = vec![vec![0.0, 1.0, 3.0]];
        let sq = squared_distances(&pts, 3);
        // pairwise distances 1, 3, 2 -> median 2
        assert_eq!(median_distance(&sq, 3), 2.0);
    }
}
