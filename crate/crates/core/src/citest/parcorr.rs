use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{check_lengths, CITestResult};
use crate::error::{Error, Result};

/// Least-squares residuals of `target` regressed on `z` plus an intercept.
///
/// Solves the normal equations by Cholesky; a rank-deficient design falls
/// back to the eigen-decomposition pseudo-inverse.
pub fn residualize(target: &[f64], z: &[&[f64]]) -> Result<Vec<f64>> {
    let n = target.len();
    check_lengths(n, z.iter().map(|c| c.len()))?;
    let center = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / n as f64;
        xs.iter().map(|x| x - m).collect::<Vec<_>>()
    };
    let mut resid = center(target);
    if z.is_empty() {
        return Ok(resid);
    }
    let zc: Vec<Vec<f64>> = z.iter().map(|c| center(c)).collect();
    let q = zc.len();
    let gram = Mat::from_fn(q, q, |a, b| dot(&zc[a], &zc[b]));
    let mut coef = Mat::from_fn(q, 1, |a, _| dot(&zc[a], &resid));

    let solved = match gram.llt(Side::Lower) {
        Ok(llt) if well_conditioned(&gram, &llt) => {
            llt.solve_in_place(coef.as_mut());
            true
        }
        _ => false,
    };
    if !solved {
        coef = pseudo_inverse(&gram)? * &coef;
    }
    for (a, col) in zc.iter().enumerate() {
        let beta = coef[(a, 0)];
        for (r, v) in resid.iter_mut().zip(col) {
            *r -= beta * v;
        }
    }
    Ok(resid)
}

fn well_conditioned(gram: &Mat<f64>, llt: &faer::linalg::solvers::Llt<f64>) -> bool {
    let l = llt.L();
    let diag: Vec<f64> = (0..gram.nrows()).map(|i| l[(i, i)]).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    max > 0.0 && min / max > 1e-7
}

fn pseudo_inverse(gram: &Mat<f64>) -> Result<Mat<f64>> {
    let q = gram.nrows();
    let eig = gram
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NumericalFailure(format!("eigendecomposition failed: {e:?}")))?;
    let u = eig.U();
    let s = eig.S();
    let vals: Vec<f64> = (0..q).map(|i| s[i]).collect();
    let cutoff = vals.iter().cloned().fold(0.0, f64::max) * 1e-10;
    Ok(Mat::from_fn(q, q, |a, b| {
        (0..q)
            .filter(|&k| vals[k] > cutoff)
            .map(|k| u[(a, k)] * u[(b, k)] / vals[k])
            .sum()
    }))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Partial-correlation test of `x ⊥ y | z`: Pearson correlation of the
/// least-squares residuals, two-sided t-test on `n - |z| - 2` degrees of
/// freedom.
pub fn parcorr(x: &[f64], y: &[f64], z: &[&[f64]]) -> Result<CITestResult> {
    let n = x.len();
    check_lengths(n, std::iter::once(y.len()).chain(z.iter().map(|c| c.len())))?;
    if n <= z.len() + 3 {
        return Err(Error::InsufficientData(format!(
            "parcorr needs more than {} samples, got {n}",
            z.len() + 3
        )));
    }
    let rx = residualize(x, z)?;
    let ry = residualize(y, z)?;
    let (sxx, syy) = (dot(&rx, &rx), dot(&ry, &ry));
    let scale = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / n as f64;
        xs.iter().map(|v| (v - m).powi(2)).sum::<f64>()
    };
    for (ss, raw, name) in [(sxx, x, "x"), (syy, y, "y")] {
        let total = scale(raw);
        if !(total > 0.0) || ss <= 1e-14 * total {
            return Err(Error::DegenerateInput(format!(
                "residual variance of {name} vanishes"
            )));
        }
    }
    let r = (dot(&rx, &ry) / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - z.len() - 2) as f64;
    let p_value = if 1.0 - r.abs() < 1e-15 {
        f64::MIN_POSITIVE
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df)
            .map_err(|e| Error::NumericalFailure(e.to_string()))?;
        (2.0 * dist.sf(t.abs())).clamp(f64::MIN_POSITIVE, 1.0)
    };
    Ok(CITestResult {
        statistic: r,
        p_value,
    })
}
