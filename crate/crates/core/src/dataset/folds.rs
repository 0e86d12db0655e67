use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Target;
use crate::{Error, Result};

/// Assignment of every row to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
    pub stratified: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FoldPlan {
    pub fn n_rows(&self) -> usize {
        self.assignments.len()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n_rows())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }

    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n_rows())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    /// Hash of the assignments; equal fingerprints mean identical splits.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.k as u64).to_le_bytes());
        for &a in &self.assignments {
            h.update((a as u64).to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }

    /// Shuffled plan for `n` rows without labels.
    pub fn shuffled(n: usize, k: usize, seed: u64) -> Result<Self> {
        check(n, k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut assignments = vec![0; n];
        for (j, &row) in order.iter().enumerate() {
            assignments[row] = j % k;
        }
        Ok(FoldPlan {
            k,
            assignments,
            seed,
            stratified: false,
            warnings: Vec::new(),
        })
    }
}

fn check(n: usize, k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::Config(format!("fold count must be >= 2, got {k}")));
    }
    if n < 2 * k {
        return Err(Error::Data(format!("{n} rows is too few for {k} folds")));
    }
    Ok(())
}

/// Deterministic fold split; stratified for classification targets.
///
/// Stratification deals each class's shuffled rows round-robin, continuing the
/// rotation across classes, so every fold holds floor or ceil of its share of
/// each class. A class with fewer than `k` members falls back to a plain
/// shuffled split and records a warning.
pub fn split_folds(target: &Target, k: usize, seed: u64) -> Result<FoldPlan> {
    let n = target.values.len();
    check(n, k)?;
    if !target.kind.is_classification() {
        return FoldPlan::shuffled(n, k, seed);
    }
    let n_classes = target.n_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &v) in target.values.iter().enumerate() {
        by_class[v as usize].push(i);
    }
    if let Some((c, rows)) = by_class
        .iter()
        .enumerate()
        .find(|(_, rows)| !rows.is_empty() && rows.len() < k)
    {
        let msg = format!(
            "class {c} has {} members (< {k} folds); using an unstratified split",
            rows.len()
        );
        log::warn!("{msg}");
        let mut plan = FoldPlan::shuffled(n, k, seed)?;
        plan.warnings.push(msg);
        return Ok(plan);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0; n];
    let mut offset = 0;
    for rows in &mut by_class {
        rows.shuffle(&mut rng);
        for (j, &row) in rows.iter().enumerate() {
            assignments[row] = (offset + j) % k;
        }
        offset += rows.len();
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
        stratified: true,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TargetKind;
    use proptest::prelude::*;

    fn binary(values: Vec<f64>) -> Target {
        Target::new(TargetKind::Binary, values).unwrap()
    }

    #[test]
    fn exact_stratification() {
        let t = binary((0..100).map(|i| (i % 2) as f64).collect());
        let plan = split_folds(&t, 5, 7).unwrap();
        assert!(plan.stratified);
        for f in 0..5 {
            let rows = plan.test_rows(f);
            let pos = rows.iter().filter(|&&i| t.values[i] == 1.0).count();
            assert_eq!((rows.len() - pos, pos), (10, 10));
        }
    }

    #[test]
    fn same_seed_same_plan() {
        let t = binary((0..50).map(|i| (i % 3 == 0) as u8 as f64).collect());
        assert_eq!(split_folds(&t, 5, 3).unwrap(), split_folds(&t, 5, 3).unwrap());
        assert_ne!(
            split_folds(&t, 5, 3).unwrap().fingerprint(),
            split_folds(&t, 5, 4).unwrap().fingerprint()
        );
    }

    #[test]
    fn degenerate_class_falls_back() {
        let mut v = vec![0.0; 10];
        v[3] = 1.0;
        let plan = split_folds(&binary(v), 5, 1).unwrap();
        assert!(!plan.stratified);
        assert_eq!(plan.warnings.len(), 1);
    }

    #[test]
    fn too_few_rows() {
        assert!(FoldPlan::shuffled(9, 5, 0).is_err());
        assert!(FoldPlan::shuffled(10, 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn stratified_within_one(n in 20usize..200, k in 2usize..6, seed in any::<u64>(), p in 0.2f64..0.8) {
            let n = n.max(2 * k * 3);
            let vals: Vec<f64> = (0..n).map(|i| ((i as f64 * 0.618).fract() < p) as u8 as f64).collect();
            let t = binary(vals);
            let plan = split_folds(&t, k, seed).unwrap();
            prop_assume!(plan.stratified);
            for c in [0.0, 1.0] {
                let total = t.values.iter().filter(|&&v| v == c).count() as f64;
                for f in 0..k {
                    let rows = plan.test_rows(f);
                    prop_assert!(!rows.is_empty());
                    let cnt = rows.iter().filter(|&&i| t.values[i] == c).count() as f64;
                    prop_assert!((cnt - total / k as f64).abs() <= 1.0);
                }
            }
        }
    }
}
