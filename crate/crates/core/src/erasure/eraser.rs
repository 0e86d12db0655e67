//! Post-hoc linear eraser.
//!
//! Learns a `d x d` matrix `W` (starting at identity) minimising
//! `|ZW - Z|^2 / (n d) + lambda * HSIC(Z_b W, S_b)` over random minibatches
//! `b`. Bandwidths are fixed once from the original `Z` and `S`, so the
//! objective does not shift under the optimiser. Steps use Adam with a
//! step size that decays as `lr / (1 + decay * t)`.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::hsic::{center_gram, hsic_gram, rbf_gram, resolve_bandwidth, HsicConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EraserConfig {
    pub lambda: f64,
    pub steps: usize,
    pub learning_rate: f64,
    pub decay: f64,
    pub hsic: HsicConfig,
}

impl Default for EraserConfig {
    fn default() -> Self {
        EraserConfig {
            lambda: 100.0,
            steps: 300,
            learning_rate: 0.02,
            decay: 0.01,
            hsic: HsicConfig::default(),
        }
    }
}

impl EraserConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.decay >= 0.0) {
            return Err(Error::Config("learning_rate must be > 0 and decay >= 0".into()));
        }
        self.hsic.validate()
    }
}

/// Loss terms at one optimisation step, measured before the update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub fidelity: f64,
    pub hsic: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct EraserFit {
    pub w: Array2<f64>,
    pub erased: Array2<f64>,
    pub trace: Vec<TraceStep>,
    pub sigma_x: f64,
    pub sigma_s: f64,
}

/// Objective with its analytic gradient; also the target of the
/// finite-difference check.
pub struct EraserObjective<'a> {
    z: ArrayView2<'a, f64>,
    s: Array2<f64>,
    gram: Array2<f64>,
    pub lambda: f64,
    pub sigma_x: f64,
    pub sigma_s: f64,
}

/// Standardises each column; constant columns are only centred.
fn standardize(s: ArrayView2<f64>) -> Array2<f64> {
    let mut out = s.to_owned();
    for mut col in out.axis_iter_mut(Axis(1)) {
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
        col.mapv_inplace(|v| (v - mean) * scale);
    }
    out
}

impl<'a> EraserObjective<'a> {
    pub fn new(z: ArrayView2<'a, f64>, s: ArrayView2<f64>, lambda: f64, hsic: &HsicConfig) -> Result<Self> {
        if z.nrows() != s.nrows() {
            return Err(Error::Data(format!(
                "embeddings have {} rows, sensitive columns {}",
                z.nrows(),
                s.nrows()
            )));
        }
        if z.nrows() < 4 || s.ncols() == 0 {
            return Err(Error::Data("eraser needs n >= 4 and at least one sensitive column".into()));
        }
        if z.iter().chain(s.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("eraser input contains a non-finite entry".into()));
        }
        let s = standardize(s);
        let sigma_x = resolve_bandwidth(hsic.bandwidth_x, z, hsic.seed);
        let sigma_s = resolve_bandwidth(hsic.bandwidth_s, s.view(), hsic.seed);
        Ok(EraserObjective {
            gram: z.t().dot(&z),
            z,
            s,
            lambda,
            sigma_x,
            sigma_s,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.z.nrows()
    }

    /// `(fidelity, hsic, gradient)` at `w`, with HSIC on the rows in `batch`.
    pub fn eval(&self, w: &Array2<f64>, batch: &[usize]) -> (f64, f64, Array2<f64>) {
        let (n, d) = self.z.dim();
        let scale = (n * d) as f64;
        let mut dw = w.clone();
        for i in 0..d {
            dw[[i, i]] -= 1.0;
        }
        // |Z(W - I)|^2 = tr((W-I)' Z'Z (W-I)).
        let gd = self.gram.dot(&dw);
        let fidelity = (&dw * &gd).sum() / scale;
        let mut grad = gd * (2.0 / scale);
        if self.lambda == 0.0 {
            return (fidelity, 0.0, grad);
        }

        let zb = self.z.select(Axis(0), batch);
        let xb = zb.dot(w);
        let k = rbf_gram(xb.view(), self.sigma_x);
        let lc = center_gram(&rbf_gram(self.s.select(Axis(0), batch).view(), self.sigma_s));
        let hsic = hsic_gram(&k, &lc);
        let m = batch.len() as f64;
        // dHSIC/dx_i = -(2 / sigma^2) sum_j C_ij (x_i - x_j), C = K∘L̃ / (m-1)^2.
        let c = &k * &lc / ((m - 1.0) * (m - 1.0));
        let c_rows = c.sum_axis(Axis(1));
        let mut gx = c.dot(&xb);
        for (mut row, (&cs, x)) in gx.rows_mut().into_iter().zip(c_rows.iter().zip(xb.rows())) {
            row.zip_mut_with(&x, |g, &xv| *g = cs * xv - *g);
        }
        let coef = -2.0 / (self.sigma_x * self.sigma_x);
        grad.scaled_add(self.lambda * coef, &zb.t().dot(&gx));
        (fidelity, hsic, grad)
    }
}

/// Fits the eraser and returns `Z' = ZW`, `W` and the per-step trace.
/// Fails with [`Error::Diverged`] if the objective exceeds ten times its
/// initial value.
pub fn fit_eraser(z: ArrayView2<f64>, s: ArrayView2<f64>, config: &EraserConfig) -> Result<EraserFit> {
    config.validate()?;
    let obj = EraserObjective::new(z, s, config.lambda, &config.hsic)?;
    let n = obj.n_rows();
    let d = z.ncols();
    let m = config.hsic.minibatch.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.hsic.seed);
    let mut w = Array2::<f64>::eye(d);
    let mut m1 = Array2::<f64>::zeros((d, d));
    let mut m2 = Array2::<f64>::zeros((d, d));
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut trace = Vec::with_capacity(config.steps);
    let mut initial = None;
    for t in 0..config.steps {
        let mut batch = if m == n {
            (0..n).collect()
        } else {
            sample(&mut rng, n, m).into_vec()
        };
        batch.sort_unstable();
        let (fidelity, hsic, grad) = obj.eval(&w, &batch);
        let total = fidelity + config.lambda * hsic;
        trace.push(TraceStep { step: t, fidelity, hsic, total });
        let init = *initial.get_or_insert(total);
        if !total.is_finite() || (total > 10.0 * init && total > 1e-12) {
            return Err(Error::Diverged {
                step: t,
                loss: total,
                initial: init,
                trace,
            });
        }
        m1.zip_mut_with(&grad, |a, &g| *a = b1 * *a + (1.0 - b1) * g);
        m2.zip_mut_with(&grad, |a, &g| *a = b2 * *a + (1.0 - b2) * g * g);
        let lr = config.learning_rate / (1.0 + config.decay * t as f64);
        let c1 = 1.0 - b1.powi(t as i32 + 1);
        let c2 = 1.0 - b2.powi(t as i32 + 1);
        for ((wv, &a), &v) in w.iter_mut().zip(&m1).zip(&m2) {
            *wv -= lr * (a / c1) / ((v / c2).sqrt() + eps);
        }
    }
    Ok(EraserFit {
        erased: z.dot(&w),
        w,
        trace,
        sigma_x: obj.sigma_x,
        sigma_s: obj.sigma_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gauss(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z = gauss(16, 8, &mut rng);
            let s = gauss(16, 2, &mut rng);
            let obj = EraserObjective::new(z.view(), s.view(), 3.0, &HsicConfig::default()).unwrap();
            let w = Array2::<f64>::eye(8) + gauss(8, 8, &mut rng) * 0.1;
            let batch: Vec<usize> = (0..16).collect();
            let (_, _, g) = obj.eval(&w, &batch);
            let f = |w: &Array2<f64>| {
                let (a, b, _) = obj.eval(w, &batch);
                a + 3.0 * b
            };
            let h = 1e-5;
            let mut fd = Array2::<f64>::zeros((8, 8));
            for i in 0..8 {
                for j in 0..8 {
                    let mut wp = w.clone();
                    wp[[i, j]] += h;
                    let mut wm = w.clone();
                    wm[[i, j]] -= h;
                    fd[[i, j]] = (f(&wp) - f(&wm)) / (2.0 * h);
                }
            }
            let diff = (&g - &fd).mapv(|v| v * v).sum().sqrt();
            let norm = fd.mapv(|v| v * v).sum().sqrt();
            assert!(diff / norm <= 1e-4, "seed {seed}: rel err {}", diff / norm);
        }
    }

    #[test]
    fn zero_lambda_keeps_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = gauss(100, 4, &mut rng);
        let s = gauss(100, 1, &mut rng);
        let cfg = EraserConfig { lambda: 0.0, steps: 50, ..Default::default() };
        let fit = fit_eraser(z.view(), s.view(), &cfg).unwrap();
        let eye = Array2::<f64>::eye(4);
        assert!((&fit.w - &eye).iter().all(|v| v.abs() <= 1e-9));
        assert!((&fit.erased - &z).iter().all(|v| v.abs() <= 1e-9));
    }

    #[test]
    fn penalty_reduces_dependence() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut z = gauss(300, 4, &mut rng);
        let s = z.column(0).to_owned().insert_axis(Axis(1));
        z.column_mut(0).mapv_inplace(|v| v * 2.0);
        let cfg = EraserConfig { lambda: 50.0, steps: 200, ..Default::default() };
        let fit = fit_eraser(z.view(), s.view(), &cfg).unwrap();
        let first = fit.trace.first().unwrap().hsic;
        let last = fit.trace.last().unwrap().hsic;
        assert!(last < 0.5 * first, "{first} -> {last}");
        assert_eq!(fit.trace.len(), 200);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(EraserConfig { lambda: -1.0, ..Default::default() }.validate().is_err());
        assert!(EraserConfig { steps: 0, ..Default::default() }.validate().is_err());
    }
}
