use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CdfError, Result};

/// Row indices of a train/test partition, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits each label class separately so both parts keep the class ratio.
///
/// Each class contributes `round(train_fraction * class_size)` rows to the
/// training part.
pub fn stratified_split(labels: &[u8], train_fraction: f64, seed: u64) -> Result<LabeledSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CdfError::InvalidConfig(
            "train fraction must lie in (0, 1)".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes: Vec<u8> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        let cut = (train_fraction * members.len() as f64).round() as usize;
        train.extend_from_slice(&members[..cut]);
        test.extend_from_slice(&members[cut..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(CdfError::InsufficientData(
            "split leaves an empty part".into(),
        ));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(LabeledSplit { train, test })
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, m - 1);
            out.push(q);
        }
    }
    out
}

/// Fraction of rows whose mapped cluster label differs from the truth.
///
/// For 0/1 labels this equals the mean squared error of the mapped label.
pub fn mapped_error(assignments: &[usize], mapping: &[u8], labels: &[u8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let wrong = assignments
        .iter()
        .zip(labels)
        .filter(|(a, l)| mapping[**a] != **l)
        .count();
    wrong as f64 / labels.len() as f64
}

/// Cluster-to-label permutation with the lowest error, first found on ties.
pub fn best_mapping(
    assignments: &[usize],
    labels: &[u8],
    clusters: usize,
) -> Result<(Vec<u8>, f64)> {
    if assignments.len() != labels.len() {
        return Err(CdfError::ShapeMismatch {
            expected: labels.len(),
            found: assignments.len(),
        });
    }
    if clusters > 8 {
        return Err(CdfError::InvalidConfig(
            "label mapping search supports at most 8 clusters".into(),
        ));
    }
    if let Some(a) = assignments.iter().find(|a| **a >= clusters) {
        return Err(CdfError::InvalidData(format!(
            "assignment {a} out of range"
        )));
    }
    let mut best: Option<(Vec<u8>, f64)> = None;
    for perm in permutations(clusters) {
        let mapping: Vec<u8> = perm.iter().map(|&p| p as u8).collect();
        let err = mapped_error(assignments, &mapping, labels);
        if best.as_ref().is_none_or(|(_, e)| err < *e) {
            best = Some((mapping, err));
        }
    }
    Ok(best.expect("at least one permutation"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mse_train: f64,
    pub mse_test: f64,
    /// Label assigned to each cluster, fixed on the training part.
    pub mapping: Vec<u8>,
}

impl Evaluation {
    /// The cluster mapped to the drifted label, if any.
    pub fn anomaly_cluster(&self) -> Option<usize> {
        self.mapping.iter().position(|l| *l == 1)
    }
}

pub fn evaluate_assignments(
    train_assign: &[usize],
    train_labels: &[u8],
    test_assign: &[usize],
    test_labels: &[u8],
    clusters: usize,
) -> Result<Evaluation> {
    if test_assign.len() != test_labels.len() {
        return Err(CdfError::ShapeMismatch {
            expected: test_labels.len(),
            found: test_assign.len(),
        });
    }
    let (mapping, mse_train) = best_mapping(train_assign, train_labels, clusters)?;
    if let Some(a) = test_assign.iter().find(|a| **a >= clusters) {
        return Err(CdfError::InvalidData(format!(
            "assignment {a} out of range"
        )));
    }
    let mse_test = mapped_error(test_assign, &mapping, test_labels);
    Ok(Evaluation {
        mse_train,
        mse_test,
        mapping,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn split_is_stratified_and_disjoint() {
        let labels: Vec<u8> = (0..1000).map(|i| u8::from(i % 4 == 0)).collect();
        let s = stratified_split(&labels, 0.7, 3).unwrap();
        assert_eq!(s.train.len() + s.test.len(), 1000);
        let ones = s.train.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(ones, 175);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        assert_eq!(s, stratified_split(&labels, 0.7, 3).unwrap());
        assert_ne!(s, stratified_split(&labels, 0.7, 4).unwrap());
    }

    #[test]
    fn perfect_and_swapped_assignments() {
        let labels = [0, 0, 1, 1];
        let (m, e) = best_mapping(&[1, 1, 0, 0], &labels, 2).unwrap();
        assert_eq!((m, e), (vec![1, 0], 0.0));
        let ev = evaluate_assignments(&[0, 0, 1, 1], &labels, &[1, 0], &[1, 0], 2).unwrap();
        assert_eq!((ev.mse_train, ev.mse_test), (0.0, 0.0));
        assert_eq!(ev.anomaly_cluster(), Some(1));
    }

    #[test]
    fn mapping_is_fixed_on_train() {
        // Test labels would prefer the other mapping; it must not be chosen.
        let ev = evaluate_assignments(&[0, 1], &[0, 1], &[0, 1], &[1, 0], 2).unwrap();
        assert_eq!(ev.mse_test, 1.0);
    }

    #[test]
    fn random_labels_give_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let assign: Vec<usize> = (0..4000).map(|_| rng.random_range(0..2)).collect();
        let mut total = 0.0;
        for _ in 0..20 {
            let labels: Vec<u8> = (0..4000).map(|_| rng.random_range(0..2)).collect();
            total += evaluate_assignments(
                &assign[..2000],
                &labels[..2000],
                &assign[2000..],
                &labels[2000..],
                2,
            )
            .unwrap()
            .mse_test;
        }
        assert!((total / 20.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn three_cluster_permutations() {
        assert_eq!(permutations(3).len(), 6);
        let (m, e) = best_mapping(&[2, 0, 1], &[0, 1, 2], 3).unwrap();
        assert_eq!(m, vec![1, 2, 0]);
        assert_eq!(e, 0.0);
    }
}
