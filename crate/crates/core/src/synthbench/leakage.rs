//! Planted-leakage embeddings for erasure checks.
//!
//! Independent latent groups are stacked with a few pure-noise coordinates
//! and rotated by a random orthogonal matrix, so each group occupies its own
//! oblique subspace of the embedding rather than a set of axes. Catalog
//! features are noisy readouts of their group's latents; the binary target
//! depends on the non-sensitive groups only.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingMatrix, Target, TargetKind};
use crate::fdsl::Category;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeakageConfig {
    pub n: usize,
    pub factors_per_group: usize,
    pub noise_dims: usize,
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for LeakageConfig {
    fn default() -> Self {
        LeakageConfig {
            n: 2000,
            factors_per_group: 2,
            noise_dims: 2,
            feature_noise: 0.1,
            seed: 0,
        }
    }
}

/// Groups, in latent order. The first one is the sensitive group.
pub const LEAKAGE_GROUPS: [Category; 3] = [Category::Categories, Category::Amount, Category::Time];

pub struct LeakageBench {
    pub embeddings: EmbeddingMatrix,
    /// `(name, group, column)` triples.
    pub catalog: Vec<(String, Category, Vec<f64>)>,
    pub target: Target,
    pub sensitive: Category,
}

impl LeakageBench {
    /// Catalog columns of one group.
    pub fn group_columns(&self, group: Category) -> Vec<Vec<f64>> {
        self.catalog
            .iter()
            .filter(|(_, g, _)| *g == group)
            .map(|(_, _, c)| c.clone())
            .collect()
    }
}

/// Random orthogonal matrix by Gram-Schmidt on a Gaussian matrix.
pub fn random_rotation(d: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut q = Array2::<f64>::zeros((d, d));
    let mut i = 0;
    while i < d {
        let mut v: Array1<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for j in 0..i {
            let qj = q.row(j);
            let dot = v.dot(&qj);
            v.scaled_add(-dot, &qj);
        }
        let norm = v.dot(&v).sqrt();
        if norm < 1e-8 {
            continue;
        }
        q.row_mut(i).assign(&(v / norm));
        i += 1;
    }
    q
}

pub fn planted_leakage(cfg: &LeakageConfig) -> Result<LeakageBench> {
    if cfg.n < 20 || cfg.factors_per_group == 0 || !(cfg.feature_noise >= 0.0) {
        return Err(Error::Config("leakage config needs n >= 20, factors_per_group >= 1, noise >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let f = cfg.factors_per_group;
    let n_latent = LEAKAGE_GROUPS.len() * f;
    let d = n_latent + cfg.noise_dims;
    let latent = Array2::from_shape_fn((cfg.n, d), |_| rng.sample::<f64, _>(StandardNormal));
    let q = random_rotation(d, &mut rng);
    let z = latent.dot(&q);

    let mut catalog = Vec::new();
    for (g, &group) in LEAKAGE_GROUPS.iter().enumerate() {
        for k in 0..f {
            let col = g * f + k;
            let values = (0..cfg.n)
                .map(|r| latent[[r, col]] + cfg.feature_noise * rng.sample::<f64, _>(StandardNormal))
                .collect();
            catalog.push((format!("{}_{k}", group.as_str().to_lowercase()), group, values));
        }
        // A nonlinear readout of the group's first latent.
        let first = g * f;
        let values = (0..cfg.n)
            .map(|r| latent[[r, first]].tanh() + cfg.feature_noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        catalog.push((format!("{}_tanh", group.as_str().to_lowercase()), group, values));
    }
    let y = (0..cfg.n)
        .map(|r| {
            let logit = 1.5 * latent[[r, f]] + 1.5 * latent[[r, 2 * f]];
            let p = 1.0 / (1.0 + (-logit).exp());
            if rng.gen::<f64>() < p {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(LeakageBench {
        embeddings: EmbeddingMatrix::new(z)?,
        catalog,
        target: Target::new(TargetKind::Binary, y)?,
        sensitive: LEAKAGE_GROUPS[0],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_rotation(6, &mut rng);
        let eye = q.dot(&q.t());
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((eye[[i, j]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_shapes() {
        let a = planted_leakage(&LeakageConfig::default()).unwrap();
        let b = planted_leakage(&LeakageConfig::default()).unwrap();
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.embeddings.dim(), 8);
        assert_eq!(a.catalog.len(), 9);
        assert_eq!(a.group_columns(Category::Categories).len(), 3);
    }
}
