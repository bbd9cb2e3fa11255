use super::check_lengths;
use crate::error::{Error, Result};

const MIN_SAMPLES: usize = 10;

/// Doubly-centred distance matrices of two scalar samples, kept so that the
/// statistic can be re-evaluated cheaply under permutations of the second.
pub struct DistanceCorrelation {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    denom: f64,
    dcov2: f64,
}

fn centred_distances(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = (xs[i] - xs[j]).abs();
        }
    }
    let row_means: Vec<f64> = (0..n)
        .map(|i| m[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64)
        .collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] += grand - row_means[i] - row_means[j];
        }
    }
    m
}

impl DistanceCorrelation {
    pub fn new(a: &[f64], b: &[f64]) -> Result<Self> {
        let n = a.len();
        check_lengths(n, [b.len()])?;
        if n < MIN_SAMPLES {
            return Err(Error::InvalidArgument(format!(
                "distance correlation needs at least {MIN_SAMPLES} samples, got {n}"
            )));
        }
        let a = centred_distances(a);
        let b = centred_distances(b);
        let n2 = (n * n) as f64;
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>() / n2;
        let (va, vb) = (dot(&a, &a), dot(&b, &b));
        if !(va > 1e-24) || !(vb > 1e-24) {
            return Err(Error::DegenerateInput("zero distance variance".into()));
        }
        let dcov2 = dot(&a, &b);
        Ok(Self {
            n,
            denom: (va * vb).sqrt(),
            dcov2,
            a,
            b,
        })
    }

    fn ratio(&self, dcov2: f64) -> f64 {
        (dcov2 / self.denom).max(0.0).sqrt().min(1.0)
    }

    pub fn statistic(&self) -> f64 {
        self.ratio(self.dcov2)
    }

    /// Statistic with the second sample reordered by `perm`.
    pub fn permuted_statistic(&self, perm: &[usize]) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            let pi = perm[i];
            let arow = &self.a[i * n..(i + 1) * n];
            let brow = &self.b[pi * n..(pi + 1) * n];
            // Symmetric: the diagonal once plus twice the upper triangle.
            acc += arow[i] * brow[pi];
            let mut upper = 0.0;
            for j in (i + 1)..n {
                upper += arow[j] * brow[perm[j]];
            }
            acc += 2.0 * upper;
        }
        self.ratio(acc / (n * n) as f64)
    }
}

/// Sample distance correlation in `[0, 1]`.
pub fn distance_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    DistanceCorrelation::new(a, b).map(|d| d.statistic())
}

#[cfg(test)]
mod tests {
    use super::super::permutation::permutation_p_value;
    use super::super::testutil::normals;
    use super::*;
    use proptest::prelude::*;

    /// Direct O(n^2) evaluation from the unsimplified definition of
    /// distance covariance (Székely's V-statistic form via a_ij b_ij sums).
    fn brute_dcor(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len();
        let nf = n as f64;
        let dist = |x: &[f64], i: usize, j: usize| (x[i] - x[j]).abs();
        let v = |x: &[f64], y: &[f64]| {
            let mut s1 = 0.0;
            let mut s2x = 0.0;
            let mut s2y = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s1 += dist(x, i, j) * dist(y, i, j);
                    s2x += dist(x, i, j);
                    s2y += dist(y, i, j);
                }
            }
            let mut s3 = 0.0;
            for i in 0..n {
                let rx: f64 = (0..n).map(|j| dist(x, i, j)).sum();
                let ry: f64 = (0..n).map(|j| dist(y, i, j)).sum();
                s3 += rx * ry;
            }
            s1 / (nf * nf) + (s2x / (nf * nf)) * (s2y / (nf * nf)) - 2.0 * s3 / (nf * nf * nf)
        };
        (v(a, b) / (v(a, a) * v(b, b)).sqrt()).sqrt()
    }

    #[test]
    fn matches_definition() {
        let a = normals(40, 1);
        let b: Vec<f64> = a.iter().zip(normals(40, 2)).map(|(x, e)| x * x + e).collect();
        let d = distance_correlation(&a, &b).unwrap();
        assert!((d - brute_dcor(&a, &b)).abs() < 1e-10);
    }

    #[test]
    fn self_dependence_is_one() {
        let a = normals(100, 3);
        assert!((distance_correlation(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_or_short_input_rejected() {
        let a = normals(20, 4);
        assert!(matches!(
            distance_correlation(&a, &[1.0; 20]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(distance_correlation(&a[..5], &a[..5]).is_err());
    }

    #[test]
    fn permuted_identity_equals_statistic() {
        let a = normals(50, 5);
        let b = normals(50, 6);
        let d = DistanceCorrelation::new(&a, &b).unwrap();
        let id: Vec<usize> = (0..50).collect();
        assert!((d.permuted_statistic(&id) - d.statistic()).abs() < 1e-12);
        let mut rev = id.clone();
        rev.reverse();
        let b_rev: Vec<f64> = rev.iter().map(|&i| b[i]).collect();
        let direct = distance_correlation(&a, &b_rev).unwrap();
        assert!((d.permuted_statistic(&rev) - direct).abs() < 1e-12);
    }

    fn exceeds_null(a: &[f64], b: &[f64], seed: u64) -> bool {
        let d = DistanceCorrelation::new(a, b).unwrap();
        permutation_p_value(d.statistic(), a.len(), 99, seed, |p| d.permuted_statistic(p)).unwrap() <= 0.05
    }

    #[test]
    fn independence_rarely_exceeds_permutation_null() {
        let trials = 20;
        let below = (0..trials)
            .filter(|&s| !exceeds_null(&normals(300, 100 + s), &normals(300, 200 + s), s))
            .count();
        assert!(below as f64 >= 0.9 * trials as f64, "{below}/{trials}");
    }

    #[test]
    fn detects_symmetric_quadratic() {
        let trials = 20;
        let hits = (0..trials)
            .filter(|&s| {
                let a = normals(300, 300 + s);
                let b: Vec<f64> = a.iter().map(|x| x * x).collect();
                exceeds_null(&a, &b, s)
            })
            .count();
        assert!(hits as f64 >= 0.95 * trials as f64, "{hits}/{trials}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn symmetric_and_affine_invariant(seed in 0u64..500, shift in -10.0..10.0f64, scale in 0.01..100.0f64) {
            let a = normals(30, seed);
            let b: Vec<f64> = normals(30, seed + 1).iter().zip(&a).map(|(e, x)| e + x.abs()).collect();
            let ab = distance_correlation(&a, &b).unwrap();
            let ba = distance_correlation(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            let a2: Vec<f64> = a.iter().map(|x| scale * x + shift).collect();
            prop_assert!((distance_correlation(&a2, &b).unwrap() - ab).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&ab));
        }
    }
}
