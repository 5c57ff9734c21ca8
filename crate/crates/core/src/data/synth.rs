//! Synthetic sign-mismatch corpus.
//!
//! Every sample plants a text polarity (through sentiment words in the
//! caption) and an image polarity (through "object" patches pushed along a
//! shared prototype direction). OCR text, when present, carries sentiment
//! words of the image polarity. The label is 1 exactly when the two planted
//! signs differ.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{MiclError, Result};
use crate::tensor::Matrix;

use super::lexicon::{neutral_words, Lexicon};
use super::sample::{Dataset, Origin, PatchGrid, Planted, Sample, Split};
use super::vocab::HashingVocab;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub size: usize,
    pub vocab_size: usize,
    pub patch_count: usize,
    pub patch_dim: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub max_sentiment_words: usize,
    /// Probability that a sample carries OCR text.
    pub ocr_rate: f64,
    /// Length of the prototype offset on object patches.
    pub signal: f64,
    /// Per-feature standard deviation of patch noise.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            size: 1000,
            vocab_size: 1024,
            patch_count: 16,
            patch_dim: 16,
            min_words: 4,
            max_words: 8,
            max_sentiment_words: 2,
            ocr_rate: 0.5,
            signal: 1.0,
            noise: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(MiclError::Config(format!(
                "synthetic corpus size {} must be at least 2",
                self.size
            )));
        }
        if self.vocab_size < 4 {
            return Err(MiclError::Config(format!(
                "vocabulary size {} must be at least 4",
                self.vocab_size
            )));
        }
        if self.patch_count == 0 || self.patch_dim == 0 {
            return Err(MiclError::Config("patch count and dimension must be positive".into()));
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return Err(MiclError::Config("need 1 <= min_words <= max_words".into()));
        }
        if self.max_sentiment_words == 0 {
            return Err(MiclError::Config("max_sentiment_words must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.ocr_rate) || self.noise < 0.0 || self.signal < 0.0 {
            return Err(MiclError::Config("ocr_rate, noise or signal out of range".into()));
        }
        Ok(())
    }
}

/// Words the generator may use: lexicon pairs and neutral words whose
/// hashed ids do not collide with each other.
#[derive(Debug, Clone)]
pub struct SynthInventory {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
    pub neutral: Vec<String>,
}

impl SynthInventory {
    pub fn build(vocab: &HashingVocab, lexicon: &Lexicon) -> Result<Self> {
        let mut used = HashSet::new();
        let mut positive = Vec::new();
        let mut negative = Vec::new();
        for (pos, neg) in lexicon.pairs() {
            let (a, b) = (vocab.id(pos), vocab.id(neg));
            if a != b && !used.contains(&a) && !used.contains(&b) {
                used.insert(a);
                used.insert(b);
                positive.push(pos.clone());
                negative.push(neg.clone());
            }
        }
        if positive.is_empty() {
            return Err(MiclError::Config(format!(
                "no collision-free sentiment pair fits a vocabulary of {}",
                vocab.size()
            )));
        }
        let mut neutral = Vec::new();
        for w in neutral_words() {
            if used.insert(vocab.id(w)) {
                neutral.push(w.to_string());
            }
        }
        Ok(Self {
            positive,
            negative,
            neutral,
        })
    }

    fn sentiment(&self, sign: i8, rng: &mut ChaCha8Rng) -> String {
        let pool = if sign > 0 { &self.positive } else { &self.negative };
        pool[rng.random_range(0..pool.len())].clone()
    }

    fn filler(&self, sign: i8, rng: &mut ChaCha8Rng) -> String {
        if self.neutral.is_empty() {
            return self.sentiment(sign, rng);
        }
        self.neutral[rng.random_range(0..self.neutral.len())].clone()
    }

    /// `len` words with `n_sent` sentiment words of `sign` at random positions.
    fn sentence(&self, len: usize, n_sent: usize, sign: i8, rng: &mut ChaCha8Rng) -> Vec<String> {
        let mut positions: Vec<usize> = (0..len).collect();
        positions.shuffle(rng);
        let sentiment_at: HashSet<usize> = positions.into_iter().take(n_sent).collect();
        (0..len)
            .map(|i| {
                if sentiment_at.contains(&i) {
                    self.sentiment(sign, rng)
                } else {
                    self.filler(sign, rng)
                }
            })
            .collect()
    }
}

/// Unit prototype direction for object patches, fixed by `seed`.
pub fn prototype(patch_dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut u: Vec<f64> = (0..patch_dim).map(|_| normal.sample(&mut rng)).collect();
    let n = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    u.iter_mut().for_each(|v| *v /= n);
    u
}

/// Patches for one image of polarity `sign`: between a quarter and three
/// quarters of the patches (at least one) are object patches.
pub fn planted_patches(
    config: &SynthConfig,
    proto: &[f64],
    sign: i8,
    rng: &mut ChaCha8Rng,
) -> Matrix {
    let n = config.patch_count;
    let normal = Normal::new(0.0, config.noise.max(f64::MIN_POSITIVE)).expect("valid normal");
    let lo = (n / 4).max(1);
    let hi = ((3 * n) / 4).max(lo);
    let n_obj = rng.random_range(lo..=hi);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let objects: HashSet<usize> = order.into_iter().take(n_obj).collect();
    let mut m = Matrix::zeros(n, config.patch_dim);
    for r in 0..n {
        let offset = if objects.contains(&r) {
            f64::from(sign) * config.signal
        } else {
            0.0
        };
        for (c, v) in m.row_mut(r).iter_mut().enumerate() {
            let noise = if config.noise > 0.0 { normal.sample(rng) } else { 0.0 };
            *v = offset * proto[c] + noise;
        }
    }
    m
}

/// Deterministic synthetic corpus of `config.size` samples with labels
/// balanced to within one.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let vocab = HashingVocab::new(config.vocab_size)?;
    let lexicon = Lexicon::builtin();
    let inventory = SynthInventory::build(&vocab, &lexicon)?;
    let proto = prototype(config.patch_dim, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut labels: Vec<u8> = (0..config.size).map(|k| (k % 2) as u8).collect();
    labels.shuffle(&mut rng);

    let mut samples = Vec::with_capacity(config.size);
    for (k, &label) in labels.iter().enumerate() {
        let text_sign: i8 = if rng.random_bool(0.5) { 1 } else { -1 };
        let image_sign = if label == 1 { -text_sign } else { text_sign };
        let planted = Planted {
            text: text_sign,
            image: image_sign,
        };
        debug_assert_eq!(planted.label(), label);

        let len = rng.random_range(config.min_words..=config.max_words);
        let n_sent = rng.random_range(1..=config.max_sentiment_words.min(len));
        let text = inventory.sentence(len, n_sent, text_sign, &mut rng);

        let ocr = if rng.random_bool(config.ocr_rate) {
            let len = rng.random_range(2..=4);
            Some(inventory.sentence(len, 1, image_sign, &mut rng))
        } else {
            None
        };

        let patches = planted_patches(config, &proto, image_sign, &mut rng);
        samples.push(Sample {
            id: format!("syn{k:06}"),
            text,
            ocr,
            image: PatchGrid::new(patches)?,
            label,
            origin: Origin::Original,
            source_id: None,
            planted: Some(planted),
        });
    }
    Dataset::new(samples, Split::Train)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::lexicon::PolarityLexicon;

    fn small(size: usize) -> SynthConfig {
        SynthConfig {
            size,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn labels_follow_sign_mismatch_rule() {
        let ds = generate_synthetic(&small(200), 7).unwrap();
        let lex = Lexicon::builtin();
        for s in &ds.samples {
            let p = s.planted.unwrap();
            assert_eq!(s.label, p.label());
            for w in &s.text {
                if let Some(pol) = lex.polarity(w) {
                    assert_eq!(pol.signum() as i8, p.text, "{}", s.id);
                }
            }
        }
        let c = ds.label_counts();
        assert_eq!(c, [100, 100]);
    }

    #[test]
    fn planted_rule_examples() {
        let same = Planted { text: 1, image: 1 };
        let diff = Planted { text: 1, image: -1 };
        assert_eq!(same.label(), 0);
        assert_eq!(diff.label(), 1);
    }

    #[test]
    fn deterministic_for_seed() {
        let a = generate_synthetic(&small(100), 7).unwrap();
        let b = generate_synthetic(&small(100), 7).unwrap();
        let c = generate_synthetic(&small(100), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_degenerate_configs() {
        assert!(generate_synthetic(&small(1), 0).is_err());
        let tiny_vocab = SynthConfig {
            vocab_size: 3,
            ..small(10)
        };
        assert!(generate_synthetic(&tiny_vocab, 0).is_err());
        let min_vocab = SynthConfig {
            vocab_size: 4,
            ..small(10)
        };
        let ds = generate_synthetic(&min_vocab, 0).unwrap();
        assert_eq!(ds.label_counts(), [5, 5]);
    }

    #[test]
    fn default_inventory_is_collision_free_and_complete() {
        let vocab = HashingVocab::new(1024).unwrap();
        let inv = SynthInventory::build(&vocab, &Lexicon::builtin()).unwrap();
        let all: Vec<&String> = inv
            .positive
            .iter()
            .chain(&inv.negative)
            .chain(&inv.neutral)
            .collect();
        let ids: HashSet<u32> = all.iter().map(|w| vocab.id(w)).collect();
        assert_eq!(ids.len(), all.len());
        assert!(inv.positive.len() >= 12, "{}", inv.positive.len());
        assert!(inv.neutral.len() >= 48, "{}", inv.neutral.len());
    }
}
