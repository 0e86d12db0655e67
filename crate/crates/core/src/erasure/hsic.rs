//! Biased HSIC with RBF kernels.
//!
//! `HSIC = tr(K H L H) / (n-1)^2`, where `H` centres the Gram matrices. The
//! full-batch form streams over rows so it never holds an `n x n` matrix:
//! `tr(KHLH) = sum(K∘L) - (2/n) sum_i (K1)_i (L1)_i + (1'K1)(1'L1) / n^2`.

use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rows used by the median heuristic.
pub const MEDIAN_SUBSAMPLE: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    Median,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HsicConfig {
    pub bandwidth_x: Bandwidth,
    pub bandwidth_s: Bandwidth,
    /// Rows per minibatch when HSIC is estimated inside an optimizer.
    pub minibatch: usize,
    pub seed: u64,
}

impl Default for HsicConfig {
    fn default() -> Self {
        HsicConfig {
            bandwidth_x: Bandwidth::Median,
            bandwidth_s: Bandwidth::Median,
            minibatch: 256,
            seed: 0,
        }
    }
}

impl HsicConfig {
    pub fn validate(&self) -> Result<()> {
        for b in [self.bandwidth_x, self.bandwidth_s] {
            if let Bandwidth::Fixed(v) = b {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("bandwidth must be > 0, got {v}")));
                }
            }
        }
        if self.minibatch < 4 {
            return Err(Error::Config(format!("minibatch must be >= 4, got {}", self.minibatch)));
        }
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn row_vecs(x: ArrayView2<f64>) -> Vec<Vec<f64>> {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Median pairwise Euclidean distance over at most [`MEDIAN_SUBSAMPLE`]
/// seeded-subsampled rows. Falls back to 1.0 when the median is zero.
pub fn median_bandwidth(x: ArrayView2<f64>, seed: u64) -> f64 {
    let n = x.nrows();
    let rows: Vec<Vec<f64>> = if n > MEDIAN_SUBSAMPLE {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, n, MEDIAN_SUBSAMPLE).into_vec();
        idx.sort_unstable();
        idx.iter().map(|&i| x.row(i).to_vec()).collect()
    } else {
        row_vecs(x)
    };
    let mut d: Vec<f64> = (0..rows.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let rows = &rows;
            (i + 1..rows.len()).map(move |j| sq_dist(&rows[i], &rows[j]).sqrt())
        })
        .collect();
    if d.is_empty() {
        return 1.0;
    }
    d.sort_unstable_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
    if med > 0.0 && med.is_finite() {
        med
    } else {
        1.0
    }
}

/// Resolves a bandwidth policy against data, warning on the zero-median fallback.
pub fn resolve_bandwidth(policy: Bandwidth, x: ArrayView2<f64>, seed: u64) -> f64 {
    match policy {
        Bandwidth::Fixed(v) => v,
        Bandwidth::Median => {
            let b = median_bandwidth(x, seed);
            if b == 1.0 && x.nrows() > 1 && x.rows().into_iter().all(|r| r == x.row(0)) {
                log::warn!("zero-variance input; median bandwidth falls back to 1.0");
            }
            b
        }
    }
}

/// RBF Gram matrix `exp(-|xi - xj|^2 / (2 sigma^2))`.
pub fn rbf_gram(x: ArrayView2<f64>, sigma: f64) -> Array2<f64> {
    let n = x.nrows();
    let rows = row_vecs(x);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let flat: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let rows = &rows;
            (0..n).map(move |j| (-sq_dist(&rows[i], &rows[j]) * inv).exp())
        })
        .collect();
    Array2::from_shape_vec((n, n), flat).expect("square gram")
}

/// `H L H` for a symmetric Gram matrix.
pub fn center_gram(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows() as f64;
    let row_mean: Vec<f64> = l.rows().into_iter().map(|r| r.sum() / n).collect();
    let total = row_mean.iter().sum::<f64>() / n;
    Array2::from_shape_fn(l.dim(), |(i, j)| l[[i, j]] - row_mean[i] - row_mean[j] + total)
}

/// Biased HSIC from precomputed Gram matrices; valid for any `n >= 2`.
pub fn hsic_gram(k: &Array2<f64>, l: &Array2<f64>) -> f64 {
    let n = k.nrows();
    let mut kl = 0.0;
    let mut cross = 0.0;
    let mut k_tot = 0.0;
    let mut l_tot = 0.0;
    for i in 0..n {
        let (kr, lr) = (k.row(i), l.row(i));
        let mut ks = 0.0;
        let mut ls = 0.0;
        for j in 0..n {
            kl += kr[j] * lr[j];
            ks += kr[j];
            ls += lr[j];
        }
        cross += ks * ls;
        k_tot += ks;
        l_tot += ls;
    }
    finish(n, kl, cross, k_tot, l_tot)
}

fn finish(n: usize, kl: f64, cross: f64, k_tot: f64, l_tot: f64) -> f64 {
    let nf = n as f64;
    let tr = kl - 2.0 / nf * cross + k_tot * l_tot / (nf * nf);
    tr / ((nf - 1.0) * (nf - 1.0))
}

fn check_inputs(x: ArrayView2<f64>, s: ArrayView2<f64>) -> Result<()> {
    if x.nrows() != s.nrows() {
        return Err(Error::Data(format!("hsic inputs have {} and {} rows", x.nrows(), s.nrows())));
    }
    if x.nrows() < 4 {
        return Err(Error::Data(format!("hsic needs n >= 4, got {}", x.nrows())));
    }
    if x.iter().chain(s.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("hsic input contains a non-finite entry".into()));
    }
    Ok(())
}

/// Full-batch biased HSIC with explicit bandwidths, streamed by row.
pub fn hsic_with(x: ArrayView2<f64>, s: ArrayView2<f64>, sigma_x: f64, sigma_s: f64) -> Result<f64> {
    check_inputs(x, s)?;
    let n = x.nrows();
    let xr = row_vecs(x);
    let sr = row_vecs(s);
    let (ix, is) = (1.0 / (2.0 * sigma_x * sigma_x), 1.0 / (2.0 * sigma_s * sigma_s));
    let per_row: Vec<[f64; 3]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = [0.0; 3];
            for j in 0..n {
                let k = (-sq_dist(&xr[i], &xr[j]) * ix).exp();
                let l = (-sq_dist(&sr[i], &sr[j]) * is).exp();
                acc[0] += k * l;
                acc[1] += k;
                acc[2] += l;
            }
            acc
        })
        .collect();
    let (mut kl, mut cross, mut kt, mut lt) = (0.0, 0.0, 0.0, 0.0);
    for [a, ks, ls] in per_row {
        kl += a;
        cross += ks * ls;
        kt += ks;
        lt += ls;
    }
    Ok(finish(n, kl, cross, kt, lt))
}

/// Full-batch biased HSIC with bandwidths from `config`.
pub fn hsic(x: ArrayView2<f64>, s: ArrayView2<f64>, config: &HsicConfig) -> Result<f64> {
    config.validate()?;
    check_inputs(x, s)?;
    let sx = resolve_bandwidth(config.bandwidth_x, x, config.seed);
    let ss = resolve_bandwidth(config.bandwidth_s, s, config.seed);
    hsic_with(x, s, sx, ss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationTest {
    pub statistic: f64,
    pub null: Vec<f64>,
    /// `(1 + #{null >= statistic}) / (1 + permutations)`.
    pub p_value: f64,
}

impl PermutationTest {
    /// Empirical `q`-quantile of the null (nearest rank).
    pub fn null_quantile(&self, q: f64) -> f64 {
        let mut v = self.null.clone();
        v.sort_unstable_by(f64::total_cmp);
        let idx = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
        v[idx]
    }
}

/// HSIC with a null distribution from permuting the rows of `s`.
pub fn permutation_test(
    x: ArrayView2<f64>,
    s: ArrayView2<f64>,
    config: &HsicConfig,
    permutations: usize,
) -> Result<PermutationTest> {
    use rand::seq::SliceRandom;
    config.validate()?;
    check_inputs(x, s)?;
    let sx = resolve_bandwidth(config.bandwidth_x, x, config.seed);
    let ss = resolve_bandwidth(config.bandwidth_s, s, config.seed);
    let k = center_gram(&rbf_gram(x, sx));
    let l = rbf_gram(s, ss);
    let n = k.nrows();
    let norm = ((n - 1) * (n - 1)) as f64;
    // With K centred, tr(K H L H) = sum(K∘L).
    let stat_for = |perm: &[usize]| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            let (kr, lr) = (k.row(i), l.row(perm[i]));
            for j in 0..n {
                acc += kr[j] * lr[perm[j]];
            }
        }
        acc / norm
    };
    let identity: Vec<usize> = (0..n).collect();
    let statistic = stat_for(&identity);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let perms: Vec<Vec<usize>> = (0..permutations)
        .map(|_| {
            let mut p = identity.clone();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let null: Vec<f64> = perms.par_iter().map(|p| stat_for(p)).collect();
    let exceed = null.iter().filter(|&&v| v >= statistic).count();
    Ok(PermutationTest {
        statistic,
        p_value: (1 + exceed) as f64 / (1 + permutations) as f64,
        null,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gauss(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))
    }

    #[test]
    fn two_point_closed_form() {
        for (a, b) in [(0.3, 0.7), (0.0, 1.0), (0.91, 0.05)] {
            let k = array![[1.0, a], [a, 1.0]];
            let l = array![[1.0, b], [b, 1.0]];
            assert!((hsic_gram(&k, &l) - (1.0 - a) * (1.0 - b)).abs() < 1e-12);
        }
    }

    #[test]
    fn streamed_matches_gram_form() {
        let x = gauss(40, 3, 1);
        let s = gauss(40, 2, 2);
        let via_gram = hsic_gram(&rbf_gram(x.view(), 1.3), &rbf_gram(s.view(), 0.8));
        let streamed = hsic_with(x.view(), s.view(), 1.3, 0.8).unwrap();
        assert!((via_gram - streamed).abs() < 1e-12);
    }

    #[test]
    fn symmetric_and_nonnegative() {
        let x = gauss(60, 3, 3);
        let s = gauss(60, 1, 4);
        let cfg = HsicConfig::default();
        let a = hsic(x.view(), s.view(), &cfg).unwrap();
        let b = hsic(s.view(), x.view(), &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a >= -1e-12);
    }

    #[test]
    fn median_examples() {
        let two = array![[0.0, 0.0], [3.0, 0.0]];
        assert_eq!(median_bandwidth(two.view(), 0), 3.0);
        let same = Array2::from_elem((5, 2), 4.0);
        assert_eq!(median_bandwidth(same.view(), 0), 1.0);
    }

    #[test]
    fn median_subsample_is_seeded() {
        let x = gauss(3000, 2, 5);
        assert_eq!(median_bandwidth(x.view(), 9), median_bandwidth(x.view(), 9));
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = gauss(3, 1, 0);
        assert!(hsic(x.view(), x.view(), &HsicConfig::default()).is_err());
        let mut y = gauss(10, 1, 0);
        y[[2, 0]] = f64::NAN;
        assert!(hsic(y.view(), y.view(), &HsicConfig::default()).is_err());
        let cfg = HsicConfig { bandwidth_x: Bandwidth::Fixed(0.0), ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn detects_identity_dependence() {
        let x = gauss(200, 1, 6);
        let t = permutation_test(x.view(), x.view(), &HsicConfig::default(), 100).unwrap();
        assert!(t.statistic > t.null_quantile(0.99));
    }

    #[test]
    fn permutation_statistic_matches_hsic() {
        let x = gauss(50, 2, 7);
        let s = gauss(50, 1, 8);
        let cfg = HsicConfig::default();
        let t = permutation_test(x.view(), s.view(), &cfg, 5).unwrap();
        assert!((t.statistic - hsic(x.view(), s.view(), &cfg).unwrap()).abs() < 1e-12);
    }
}
