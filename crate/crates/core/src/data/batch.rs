use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{MiclError, Result};

use super::sample::Dataset;

/// Indices into a dataset that are trained on together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub labels: Vec<u8>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Distinct labels present, ascending.
    pub fn label_set(&self) -> Vec<u8> {
        let mut l = self.labels.clone();
        l.sort_unstable();
        l.dedup();
        l
    }
}

/// Each original together with its augmentations, in dataset order.
pub fn groups(dataset: &Dataset) -> Vec<Vec<usize>> {
    let mut by_source: HashMap<&str, usize> = HashMap::new();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        if s.source_id.is_none() {
            by_source.insert(s.id.as_str(), out.len());
            out.push(vec![i]);
        }
    }
    for (i, s) in dataset.samples.iter().enumerate() {
        if let Some(src) = &s.source_id {
            let g = by_source[src.as_str()];
            out[g].push(i);
        }
    }
    out
}

/// Shuffles original-plus-augmentation groups with `seed` and packs them
/// greedily into batches of at most `batch_size` samples. A group is never
/// split across batches.
pub fn build_batches(dataset: &Dataset, batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    if batch_size < 2 {
        return Err(MiclError::Config(format!("batch size {batch_size} must be at least 2")));
    }
    let mut groups = groups(dataset);
    if let Some(largest) = groups.iter().map(Vec::len).max() {
        if largest > batch_size {
            return Err(MiclError::Config(format!(
                "batch size {batch_size} is smaller than an original-plus-augmentation group of {largest}"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);

    let mut batches = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for g in groups {
        if current.len() + g.len() > batch_size {
            batches.push(std::mem::take(&mut current));
        }
        current.extend(g);
    }
    if !current.is_empty() {
        batches.push(current);
    }
    Ok(batches
        .into_iter()
        .map(|indices| Batch {
            labels: indices.iter().map(|&i| dataset.samples[i].label).collect(),
            indices,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::augment::{plan_augmentation, AugmentationPlan};
    use crate::data::synth::{generate_synthetic, SynthConfig};

    fn augmented(n: usize) -> Dataset {
        let ds = generate_synthetic(
            &SynthConfig {
                size: n,
                ..SynthConfig::default()
            },
            3,
        )
        .unwrap();
        plan_augmentation(&ds, &AugmentationPlan::default(), 3).unwrap().0
    }

    #[test]
    fn groups_share_a_batch() {
        let ds = augmented(20);
        let batches = build_batches(&ds, 16, 9).unwrap();
        let mut batch_of = vec![usize::MAX; ds.len()];
        for (b, batch) in batches.iter().enumerate() {
            for &i in &batch.indices {
                batch_of[i] = b;
            }
            assert!(batch.len() <= 16);
        }
        assert!(batch_of.iter().all(|&b| b != usize::MAX));
        for g in groups(&ds) {
            assert_eq!(g.len(), 3);
            assert!(g.iter().all(|&i| batch_of[i] == batch_of[g[0]]));
        }
    }

    #[test]
    fn seeded_order_is_reproducible() {
        let ds = augmented(20);
        assert_eq!(build_batches(&ds, 6, 1).unwrap(), build_batches(&ds, 6, 1).unwrap());
        assert_ne!(build_batches(&ds, 6, 1).unwrap(), build_batches(&ds, 6, 2).unwrap());
    }

    #[test]
    fn batch_smaller_than_group_is_rejected() {
        let ds = augmented(4);
        assert!(matches!(build_batches(&ds, 2, 0), Err(MiclError::Config(_))));
        assert!(build_batches(&ds, 1, 0).is_err());
    }
}
