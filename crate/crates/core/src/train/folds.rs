use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Patient-level partition into `K` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub folds: Vec<Vec<String>>,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|p| p == id))
    }

    /// Every patient outside fold `k`, in fold order.
    pub fn train_ids(&self, k: usize) -> Vec<String> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect()
    }
}

/// Seeded shuffle of the ids followed by round-robin dealing, so fold sizes
/// differ by at most one.
pub fn grouped_kfold_split(patient_ids: &[String], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if patient_ids.len() < k {
        return Err(Error::invalid(format!(
            "{} patients cannot fill {k} folds",
            patient_ids.len()
        )));
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = patient_ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(Error::invalid(format!("duplicate patient id {dup}")));
    }
    let mut order: Vec<&String> = patient_ids.iter().collect();
    order.shuffle(&mut rng::seeded(rng::mix(&[seed, 0xF01D])));
    let mut folds = alloc::vec![Vec::new(); k];
    for (i, id) in order.into_iter().enumerate() {
        folds[i % k].push(id.clone());
    }
    Ok(FoldAssignment { folds })
}
