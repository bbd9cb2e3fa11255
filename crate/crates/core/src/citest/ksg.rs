//! Kraskov–Stögbauer–Grassberger nearest-neighbour estimators of
//! (conditional) mutual information and transfer entropy, max-norm metric.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::digamma;

use super::check_lengths;
use super::permutation::shuffle_significance;
use crate::error::{Error, Result};

/// Relative size of the tie-breaking jitter.
const JITTER_SCALE: f64 = 1e-10;

fn jittered(cols: &[&[f64]], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cols.iter()
        .map(|c| {
            let (_, var) = crate::timeseries::mean_variance(c);
            let amp = JITTER_SCALE * if var > 0.0 { var.sqrt() } else { 1.0 };
            c.iter()
                .map(|v| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    v + amp * e
                })
                .collect()
        })
        .collect()
}

/// One column's sort order and each sample's rank in it.
struct Sorted {
    order: Vec<usize>,
    rank: Vec<usize>,
}

impl Sorted {
    fn new(c: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..c.len()).collect();
        order.sort_by(|&a, &b| c[a].total_cmp(&c[b]));
        let mut rank = vec![0; c.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        Self { order, rank }
    }

    /// Samples `j != i` with `|c[j] - c[i]| < eps` that also satisfy `keep`.
    fn count_within(&self, c: &[f64], i: usize, eps: f64, keep: impl Fn(usize) -> bool) -> usize {
        let r = self.rank[i];
        let below = self.order[..r].iter().rev().take_while(|&&j| c[i] - c[j] < eps);
        let above = self.order[r + 1..].iter().take_while(|&&j| c[j] - c[i] < eps);
        below.chain(above).filter(|&&j| keep(j)).count()
    }
}

/// KSG estimate of `I(x; y | z)` in nats with `k` neighbours.
///
/// `ψ(k) − ⟨ψ(n_xz + 1) + ψ(n_yz + 1) − ψ(n_z + 1)⟩`, counts taken strictly
/// inside the k-th neighbour distance of the joint space. With empty `z` this
/// is the KSG mutual-information estimator (n_z + 1 = n). Ties are broken by
/// a seeded jitter of relative magnitude 1e-10.
pub fn kraskov_cmi(x: &[f64], y: &[f64], z: &[&[f64]], k: usize, seed: u64) -> Result<f64> {
    let n = x.len();
    check_lengths(n, std::iter::once(y.len()).chain(z.iter().map(|c| c.len())))?;
    if k == 0 || 2 * k >= n {
        return Err(Error::InvalidArgument(format!("need 0 < k < n/2 (k = {k}, n = {n})")));
    }
    let mut cols: Vec<&[f64]> = vec![x, y];
    cols.extend_from_slice(z);
    let data = jittered(&cols, seed);
    let (xs, ys, zs) = (&data[0], &data[1], &data[2..]);

    let psi: Vec<f64> = (0..=n).map(|m| if m == 0 { 0.0 } else { digamma(m as f64) }).collect();
    let zdist = |i: usize, j: usize| zs.iter().fold(0.0f64, |m, c| m.max((c[i] - c[j]).abs()));
    let (sx, sy) = (Sorted::new(xs), Sorted::new(ys));
    let sz = zs.first().map(|c| Sorted::new(c));

    let mut knn = vec![f64::INFINITY; k];
    let mut total = 0.0;
    for i in 0..n {
        knn.iter_mut().for_each(|d| *d = f64::INFINITY);
        // Walk outward in x order; the x gap bounds the max-norm distance.
        let r = sx.rank[i];
        let (mut lo, mut hi) = (r, r + 1);
        loop {
            let gap_lo = if lo > 0 { xs[i] - xs[sx.order[lo - 1]] } else { f64::INFINITY };
            let gap_hi = if hi < n { xs[sx.order[hi]] - xs[i] } else { f64::INFINITY };
            let gap = gap_lo.min(gap_hi);
            if gap >= knn[k - 1] {
                break;
            }
            let j = if gap_lo <= gap_hi {
                lo -= 1;
                sx.order[lo]
            } else {
                hi += 1;
                sx.order[hi - 1]
            };
            let d = gap.max((ys[i] - ys[j]).abs()).max(zdist(i, j));
            if d < knn[k - 1] {
                let mut p = k - 1;
                while p > 0 && knn[p - 1] > d {
                    knn[p] = knn[p - 1];
                    p -= 1;
                }
                knn[p] = d;
            }
        }
        let eps = knn[k - 1];
        let n_xz = sx.count_within(xs, i, eps, |j| zdist(i, j) < eps);
        let n_yz = sy.count_within(ys, i, eps, |j| zdist(i, j) < eps);
        let n_z = match &sz {
            Some(s) => s.count_within(&zs[0], i, eps, |j| zdist(i, j) < eps),
            None => n - 1,
        };
        total += psi[n_z + 1] - psi[n_xz + 1] - psi[n_yz + 1];
    }
    Ok(psi[k] + total / n as f64)
}

/// Aligned samples for `source(t - lag) -> target(t)` given `target(t - lag)`.
fn te_columns(source: &[f64], target: &[f64], lag: usize, k: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    check_lengths(source.len(), [target.len()])?;
    if lag == 0 {
        return Err(Error::InvalidArgument("transfer entropy lag must be >= 1".into()));
    }
    let n = target.len();
    if n <= lag + k {
        return Err(Error::InsufficientData(format!(
            "series of length {n} too short for lag {lag} and k {k}"
        )));
    }
    let present = target[lag..].to_vec();
    let src_past = source[..n - lag].to_vec();
    let tgt_past = target[..n - lag].to_vec();
    Ok((present, src_past, tgt_past))
}

/// Transfer entropy `source -> target` at `lag`, in nats:
/// `I(target_t ; source_{t-lag} | target_{t-lag})`.
pub fn transfer_entropy(source: &[f64], target: &[f64], lag: usize, k: usize, seed: u64) -> Result<f64> {
    let (present, src_past, tgt_past) = te_columns(source, target, lag, k)?;
    kraskov_cmi(&present, &src_past, &[&tgt_past], k, seed)
}

/// Transfer entropy with a shuffle p-value from permuting the lagged source.
pub fn transfer_entropy_significance(
    source: &[f64],
    target: &[f64],
    lag: usize,
    k: usize,
    shuffles: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let (present, src_past, tgt_past) = te_columns(source, target, lag, k)?;
    let mut failure = None;
    let mut stat = |src: &[f64]| match kraskov_cmi(&present, src, &[&tgt_past], k, seed) {
        Ok(v) => v,
        Err(e) => {
            failure.get_or_insert(e);
            f64::NAN
        }
    };
    let observed = stat(&src_past);
    let p = shuffle_significance(&mut stat, &src_past, shuffles, seed ^ 0x5EED)?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((observed, p))
}

#[cfg(test)]
mod tests {
    use super::super::testutil::normals;
    use super::*;

    fn brute_cmi(x: &[f64], y: &[f64], z: &[&[f64]], k: usize, seed: u64) -> f64 {
        let mut cols: Vec<&[f64]> = vec![x, y];
        cols.extend_from_slice(z);
        let data = jittered(&cols, seed);
        let n = x.len();
        let dist = |c: &[usize], i: usize, j: usize| c.iter().fold(0.0f64, |m, &a| m.max((data[a][i] - data[a][j]).abs()));
        let all: Vec<usize> = (0..data.len()).collect();
        let (xz, yz): (Vec<usize>, Vec<usize>) = (
            std::iter::once(0).chain(2..data.len()).collect(),
            (1..data.len()).collect(),
        );
        let zz: Vec<usize> = (2..data.len()).collect();
        let mut total = 0.0;
        for i in 0..n {
            let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist(&all, i, j)).collect();
            d.sort_by(f64::total_cmp);
            let eps = d[k - 1];
            let count = |c: &[usize]| (0..n).filter(|&j| j != i && dist(c, i, j) < eps).count();
            total += digamma((count(&zz) + 1) as f64) - digamma((count(&xz) + 1) as f64) - digamma((count(&yz) + 1) as f64);
        }
        digamma(k as f64) + total / n as f64
    }

    #[test]
    fn matches_brute_force_search() {
        let (x, y) = bivariate(300, 0.5, 11);
        let z1 = normals(300, 12);
        let z2: Vec<f64> = x.iter().zip(&z1).map(|(a, b)| a + b).collect();
        for z in [vec![], vec![&z1[..]], vec![&z1[..], &z2[..]]] {
            for k in [1, 4] {
                let fast = kraskov_cmi(&x, &y, &z, k, 3).unwrap();
                let slow = brute_cmi(&x, &y, &z, k, 3);
                assert!((fast - slow).abs() < 1e-12, "dim {} k {k}: {fast} vs {slow}", z.len());
            }
        }
    }

    fn bivariate(n: usize, rho: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let a = normals(n, seed);
        let b = normals(n, seed + 7_777);
        let y = a.iter().zip(&b).map(|(a, b)| rho * a + (1.0 - rho * rho).sqrt() * b).collect();
        (a, y)
    }

    fn gaussian_mi(rho: f64) -> f64 {
        -0.5 * (1.0 - rho * rho).ln()
    }

    #[test]
    fn independent_normals_near_zero() {
        let x = normals(2000, 1);
        let y = normals(2000, 2);
        let z = normals(2000, 3);
        assert!(kraskov_cmi(&x, &y, &[], 4, 0).unwrap().abs() < 0.05);
        assert!(kraskov_cmi(&x, &y, &[&z], 4, 0).unwrap().abs() < 0.05);
    }

    #[test]
    fn gaussian_closed_form() {
        let (x, y) = bivariate(2000, 0.6, 11);
        let mi = kraskov_cmi(&x, &y, &[], 4, 0).unwrap();
        assert!((mi - gaussian_mi(0.6)).abs() < 0.05, "mi {mi}");
        assert!((gaussian_mi(0.6) - 0.2231).abs() < 1e-4);
    }

    #[test]
    fn conditional_gaussian_closed_form() {
        // x = z + e1, y = z + e2: I(x; y | z) = 0 while I(x; y) = -1/2 ln(1 - 1/4).
        let z = normals(1500, 21);
        let x: Vec<f64> = z.iter().zip(normals(1500, 22)).map(|(z, e)| z + e).collect();
        let y: Vec<f64> = z.iter().zip(normals(1500, 23)).map(|(z, e)| z + e).collect();
        assert!(kraskov_cmi(&x, &y, &[&z], 4, 0).unwrap().abs() < 0.05);
        let mi = kraskov_cmi(&x, &y, &[], 4, 0).unwrap();
        assert!((mi - gaussian_mi(0.5)).abs() < 0.05, "mi {mi}");
    }

    #[test]
    fn identical_series_far_above_shuffles() {
        let x = normals(500, 4);
        let observed = kraskov_cmi(&x, &x, &[], 4, 0).unwrap();
        let mut null: Vec<f64> = (0..100)
            .map(|s| {
                let mut idx: Vec<usize> = (0..500).collect();
                use rand::seq::SliceRandom;
                idx.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
                let sh: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
                kraskov_cmi(&x, &sh, &[], 4, 0).unwrap()
            })
            .collect();
        null.sort_by(f64::total_cmp);
        assert!(observed > null[94] + 1.0, "observed {observed} vs q95 {}", null[94]);
    }

    #[test]
    fn estimate_improves_with_sample_size() {
        let rho = 0.6;
        let truth = gaussian_mi(rho);
        let mean_err = |n: usize| {
            (0..6)
                .map(|s| (kraskov_cmi(&bivariate(n, rho, 100 + s).0, &bivariate(n, rho, 100 + s).1, &[], 4, 0).unwrap() - truth).abs())
                .sum::<f64>()
                / 6.0
        };
        let e500 = mean_err(500);
        let e2000 = mean_err(2000);
        assert!(e2000 <= e500 + 1e-3, "e500 {e500}, e2000 {e2000}");
        assert!(e2000 < 0.03);
    }

    #[test]
    fn k_bounds() {
        let x = normals(10, 1);
        assert!(kraskov_cmi(&x, &x, &[], 0, 0).is_err());
        assert!(kraskov_cmi(&x, &x, &[], 5, 0).is_err());
        assert!(kraskov_cmi(&x, &x[..9], &[], 2, 0).is_err());
    }

    #[test]
    fn ties_are_handled() {
        let x: Vec<f64> = (0..200).map(|i| (i % 5) as f64).collect();
        let y: Vec<f64> = (0..200).map(|i| (i % 3) as f64).collect();
        let v = kraskov_cmi(&x, &y, &[], 4, 1).unwrap();
        assert!(v.is_finite());
    }

    fn coupled_ar(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let ex = normals(n, seed);
        let ey = normals(n, seed + 1);
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        for t in 1..n {
            x[t] = 0.5 * x[t - 1] + ex[t];
            y[t] = 0.5 * y[t - 1] + 0.5 * x[t - 1] + ey[t];
        }
        (x, y)
    }

    #[test]
    fn white_noise_has_no_transfer() {
        let x = normals(2000, 5);
        let y = normals(2000, 6);
        assert!(transfer_entropy(&x, &y, 1, 4, 0).unwrap().abs() < 0.05);
    }

    #[test]
    fn transfer_entropy_direction() {
        let correct = (0..10)
            .filter(|&s| {
                let (x, y) = coupled_ar(1000, 40 + 2 * s);
                transfer_entropy(&x, &y, 1, 4, 0).unwrap() > transfer_entropy(&y, &x, 1, 4, 0).unwrap()
            })
            .count();
        assert!(correct >= 9, "{correct}/10");
    }

    #[test]
    fn shuffled_source_within_null() {
        let (x, y) = coupled_ar(600, 3);
        let (_, p) = transfer_entropy_significance(&x, &y, 1, 4, 50, 1).unwrap();
        assert!(p <= 0.05);
        let mut idx: Vec<usize> = (0..600).collect();
        use rand::seq::SliceRandom;
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
        let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let (_, p) = transfer_entropy_significance(&xs, &y, 1, 4, 50, 1).unwrap();
        assert!(p > 0.05, "p {p}");
    }

    #[test]
    fn transfer_entropy_preconditions() {
        let x = normals(6, 1);
        assert!(transfer_entropy(&x, &x, 0, 2, 0).is_err());
        assert!(matches!(transfer_entropy(&x, &x, 3, 3, 0), Err(Error::InsufficientData(_))));
    }
}
