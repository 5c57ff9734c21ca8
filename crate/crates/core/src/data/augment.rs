//! Text and image augmentation behind strategy traits, plus the planner
//! that assigns strategies to a training split at fixed ratios.
//!
//! The default [`SurrogateAugmenter`] is fully deterministic: sentiment
//! flips and paraphrases come from a lexicon and a synonym table, and the
//! generative image strategies are replaced by seeded transformations of the
//! patch grid.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{MiclError, Result};
use crate::tensor::Matrix;

use super::lexicon::{Lexicon, PolarityLexicon, SynonymTable};
use super::sample::{Dataset, Origin, PatchGrid, Planted, Sample, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextStrategy {
    Flip,
    Paraphrase,
}

impl TextStrategy {
    pub const ALL: [TextStrategy; 2] = [TextStrategy::Flip, TextStrategy::Paraphrase];

    pub fn origin(self) -> Origin {
        match self {
            TextStrategy::Flip => Origin::AugTextFlip,
            TextStrategy::Paraphrase => Origin::AugTextPara,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TextStrategy::Flip => "flip",
            TextStrategy::Paraphrase => "paraphrase",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageStrategy {
    Crop,
    Swap,
    Style,
    Regen,
}

impl ImageStrategy {
    pub const ALL: [ImageStrategy; 4] = [
        ImageStrategy::Crop,
        ImageStrategy::Swap,
        ImageStrategy::Style,
        ImageStrategy::Regen,
    ];

    pub fn origin(self) -> Origin {
        match self {
            ImageStrategy::Crop => Origin::AugImgCrop,
            ImageStrategy::Swap => Origin::AugImgSwap,
            ImageStrategy::Style => Origin::AugImgStyle,
            ImageStrategy::Regen => Origin::AugImgRegen,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ImageStrategy::Crop => "crop",
            ImageStrategy::Swap => "swap",
            ImageStrategy::Style => "style",
            ImageStrategy::Regen => "regen",
        }
    }
}

/// Produces a text-augmented copy of an original sample.
pub trait TextAugmenter {
    fn augment_text(
        &self,
        sample: &Sample,
        strategy: TextStrategy,
        rng: &mut ChaCha8Rng,
    ) -> Result<Sample>;
}

/// Produces an image-augmented copy of an original sample. `pool` holds
/// same-label donors for swapping.
pub trait ImageAugmenter {
    fn augment_image(
        &self,
        sample: &Sample,
        strategy: ImageStrategy,
        pool: &[&Sample],
        rng: &mut ChaCha8Rng,
    ) -> Result<Sample>;
}

fn not_augmentable(sample: &Sample, strategy: &str, reason: &str) -> MiclError {
    MiclError::NotAugmentable {
        id: sample.id.clone(),
        strategy: strategy.to_string(),
        reason: reason.to_string(),
    }
}

fn derived(sample: &Sample, origin: Origin, suffix: &str) -> Result<Sample> {
    if sample.origin.is_augmented() {
        return Err(not_augmentable(sample, suffix, "only original samples are augmented"));
    }
    let mut out = sample.clone();
    out.id = format!("{}~{suffix}", sample.id);
    out.origin = origin;
    out.source_id = Some(sample.id.clone());
    Ok(out)
}

/// Deterministic stand-in for the generative augmenters.
#[derive(Debug, Clone)]
pub struct SurrogateAugmenter {
    lexicon: Lexicon,
    synonyms: SynonymTable,
}

impl Default for SurrogateAugmenter {
    fn default() -> Self {
        let lexicon = Lexicon::builtin();
        let synonyms = SynonymTable::builtin(&lexicon);
        Self { lexicon, synonyms }
    }
}

impl SurrogateAugmenter {
    pub fn new(lexicon: Lexicon, synonyms: SynonymTable) -> Self {
        Self { lexicon, synonyms }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }
}

impl TextAugmenter for SurrogateAugmenter {
    fn augment_text(
        &self,
        sample: &Sample,
        strategy: TextStrategy,
        rng: &mut ChaCha8Rng,
    ) -> Result<Sample> {
        let mut out = derived(sample, strategy.origin(), strategy.as_str())?;
        match strategy {
            TextStrategy::Flip => {
                let mut flipped = 0;
                for w in &mut out.text {
                    if let Some(ant) = self.lexicon.antonym(w) {
                        *w = ant.to_string();
                        flipped += 1;
                    }
                }
                if flipped == 0 {
                    return Err(not_augmentable(sample, "flip", "no sentiment-bearing token"));
                }
                out.label = 1 - sample.label;
                out.planted = sample.planted.map(|p| Planted {
                    text: -p.text,
                    image: p.image,
                });
            }
            TextStrategy::Paraphrase => {
                let mut changed = false;
                let mut first_candidate = None;
                for (i, w) in out.text.iter_mut().enumerate() {
                    if let Some(syn) = self.synonyms.synonym(w) {
                        first_candidate.get_or_insert((i, syn.to_string()));
                        if rng.random_bool(0.5) {
                            *w = syn.to_string();
                            changed = true;
                        }
                    }
                }
                if !changed {
                    if let Some((i, syn)) = first_candidate {
                        out.text[i] = syn;
                    }
                }
            }
        }
        Ok(out)
    }
}

impl ImageAugmenter for SurrogateAugmenter {
    fn augment_image(
        &self,
        sample: &Sample,
        strategy: ImageStrategy,
        pool: &[&Sample],
        rng: &mut ChaCha8Rng,
    ) -> Result<Sample> {
        let mut out = derived(sample, strategy.origin(), strategy.as_str())?;
        let patches = sample.image.patches();
        out.image = match strategy {
            ImageStrategy::Crop => PatchGrid::new(crop_and_retile(&sample.image, rng))?,
            ImageStrategy::Swap => {
                if pool.is_empty() {
                    return Err(not_augmentable(sample, "swap", "empty same-label pool"));
                }
                let donor = pool[rng.random_range(0..pool.len())];
                if donor.label != sample.label {
                    return Err(not_augmentable(sample, "swap", "donor label differs"));
                }
                out.planted = match (sample.planted, donor.planted) {
                    (Some(p), Some(d)) => Some(Planted {
                        text: p.text,
                        image: d.image,
                    }),
                    _ => None,
                };
                donor.image.clone()
            }
            ImageStrategy::Style => {
                let mut m = patches.clone();
                for c in 0..m.cols() {
                    let gain = rng.random_range(0.8..1.2);
                    let shift = rng.random_range(-0.1..0.1);
                    for r in 0..m.rows() {
                        let v = m.get(r, c);
                        m.set(r, c, gain * v + shift);
                    }
                }
                PatchGrid::new(m)?
            }
            ImageStrategy::Regen => PatchGrid::new(regenerate(patches, rng))?,
        };
        Ok(out)
    }
}

/// Contiguous sub-grid of at least half the side length, resampled back to
/// the original layout by nearest neighbour.
fn crop_and_retile(grid: &PatchGrid, rng: &mut ChaCha8Rng) -> Matrix {
    let (h, w) = grid.layout();
    let ch = rng.random_range(h.div_ceil(2)..=h);
    let cw = rng.random_range(w.div_ceil(2)..=w);
    let top = rng.random_range(0..=h - ch);
    let left = rng.random_range(0..=w - cw);
    let src = grid.patches();
    let mut out = Matrix::zeros(h * w, grid.patch_dim());
    for r in 0..h {
        for c in 0..w {
            let sr = top + r * ch / h;
            let sc = left + c * cw / w;
            out.row_mut(r * w + c).copy_from_slice(src.row(sr * w + sc));
        }
    }
    out
}

/// Fresh patches around the grid's mean content: each patch is either a
/// background draw or twice the mean (so the expected mean is kept), plus
/// noise at the grid's per-feature spread.
fn regenerate(patches: &Matrix, rng: &mut ChaCha8Rng) -> Matrix {
    let mean = patches.mean_rows();
    let n = patches.rows() as f64;
    let spread: Vec<f64> = (0..patches.cols())
        .map(|c| {
            let mu = mean.get(0, c);
            let var = (0..patches.rows())
                .map(|r| (patches.get(r, c) - mu).powi(2))
                .sum::<f64>()
                / n;
            (0.5 * var.sqrt()).max(1e-6)
        })
        .collect();
    let mut out = Matrix::zeros(patches.rows(), patches.cols());
    for r in 0..patches.rows() {
        let gain = if rng.random_bool(0.5) { 2.0 } else { 0.0 };
        for (c, v) in out.row_mut(r).iter_mut().enumerate() {
            let noise = Normal::new(0.0, spread[c]).expect("positive spread");
            *v = gain * mean.get(0, c) + noise.sample(rng);
        }
    }
    out
}

/// Strategy ratios for one augmentation pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    /// flip : paraphrase
    pub text_ratio: [usize; 2],
    /// crop : swap : style : regen
    pub image_ratio: [usize; 4],
    pub text: bool,
    pub image: bool,
}

impl Default for AugmentationPlan {
    fn default() -> Self {
        Self {
            text_ratio: [1, 1],
            image_ratio: [3, 3, 2, 2],
            text: true,
            image: true,
        }
    }
}

/// Per-sample strategy replacement after a not-augmentable signal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fallback {
    pub sample_id: String,
    pub requested: String,
    pub used: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AugmentationSummary {
    pub originals: usize,
    /// Strategy counts as assigned by the plan.
    pub assigned: BTreeMap<String, usize>,
    /// Strategy counts actually produced, after fallbacks.
    pub produced: BTreeMap<String, usize>,
    pub fallbacks: Vec<Fallback>,
}

/// Sequence of `n` strategy indices realising `ratio` exactly over every
/// complete block of `sum(ratio)` entries. Full blocks are shuffled with
/// `rng`; the final partial block follows the fixed round-robin order.
pub fn assign_by_ratio(n: usize, ratio: &[usize], rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let block: usize = ratio.iter().sum();
    if block == 0 {
        return Err(MiclError::Config("augmentation ratio sums to zero".into()));
    }
    let canonical = round_robin(ratio);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n / block {
        let mut b = canonical.clone();
        shuffle(&mut b, rng);
        out.extend(b);
    }
    out.extend(canonical.iter().take(n % block));
    Ok(out)
}

fn round_robin(ratio: &[usize]) -> Vec<usize> {
    let mut left = ratio.to_vec();
    let mut out = Vec::new();
    while left.iter().any(|&l| l > 0) {
        for (i, l) in left.iter_mut().enumerate() {
            if *l > 0 {
                out.push(i);
                *l -= 1;
            }
        }
    }
    out
}

fn shuffle(v: &mut [usize], rng: &mut ChaCha8Rng) {
    use rand::seq::SliceRandom;
    v.shuffle(rng);
}

/// Seeded generator for the `index`-th sample of a pass.
pub fn sample_rng(seed: u64, index: usize, salt: u64) -> ChaCha8Rng {
    let mixed = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((index as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9))
        ^ salt;
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Same-label donors for `sample`. Donors sharing the planted image
/// polarity are preferred when polarities are known; the plain same-label
/// pool is used when no such donor exists.
fn swap_pool<'a>(sample: &Sample, originals: &[&'a Sample]) -> Vec<&'a Sample> {
    let same_label: Vec<&Sample> = originals
        .iter()
        .copied()
        .filter(|d| d.id != sample.id && d.label == sample.label)
        .collect();
    let same_polarity: Vec<&Sample> = same_label
        .iter()
        .copied()
        .filter(|d| match (d.planted, sample.planted) {
            (Some(a), Some(b)) => a.image == b.image,
            _ => true,
        })
        .collect();
    if same_polarity.is_empty() {
        same_label
    } else {
        same_polarity
    }
}

/// Gives every original one text and one image augmentation with the
/// default surrogate augmenter.
pub fn plan_augmentation(
    dataset: &Dataset,
    plan: &AugmentationPlan,
    seed: u64,
) -> Result<(Dataset, AugmentationSummary)> {
    let aug = SurrogateAugmenter::default();
    plan_augmentation_with(dataset, plan, seed, &aug, &aug)
}

pub fn plan_augmentation_with(
    dataset: &Dataset,
    plan: &AugmentationPlan,
    seed: u64,
    text_aug: &impl TextAugmenter,
    image_aug: &impl ImageAugmenter,
) -> Result<(Dataset, AugmentationSummary)> {
    if dataset.split != Split::Train {
        return Err(MiclError::Config(format!(
            "augmentation applies to the train split, not {}",
            dataset.split.as_str()
        )));
    }
    let mut originals: Vec<&Sample> = dataset.originals().collect();
    originals.sort_by(|a, b| a.id.cmp(&b.id));
    let n = originals.len();

    let mut summary = AugmentationSummary {
        originals: n,
        ..Default::default()
    };
    let mut assign_rng = ChaCha8Rng::seed_from_u64(seed);
    let text_assign = if plan.text {
        assign_by_ratio(n, &plan.text_ratio, &mut assign_rng)?
    } else {
        Vec::new()
    };
    let image_assign = if plan.image {
        assign_by_ratio(n, &plan.image_ratio, &mut assign_rng)?
    } else {
        Vec::new()
    };

    let mut augmented = Vec::new();
    for (i, &s) in originals.iter().enumerate() {
        if let Some(&t) = text_assign.get(i) {
            let strategy = TextStrategy::ALL[t];
            *summary.assigned.entry(strategy.as_str().into()).or_insert(0) += 1;
            let mut rng = sample_rng(seed, i, 0x7e57);
            let out = match text_aug.augment_text(s, strategy, &mut rng) {
                Err(MiclError::NotAugmentable { reason, .. }) if strategy == TextStrategy::Flip => {
                    summary.fallbacks.push(Fallback {
                        sample_id: s.id.clone(),
                        requested: strategy.as_str().into(),
                        used: TextStrategy::Paraphrase.as_str().into(),
                        reason,
                    });
                    text_aug.augment_text(s, TextStrategy::Paraphrase, &mut rng)?
                }
                other => other?,
            };
            *summary.produced.entry(origin_strategy(out.origin)).or_insert(0) += 1;
            augmented.push(out);
        }
        if let Some(&k) = image_assign.get(i) {
            let strategy = ImageStrategy::ALL[k];
            *summary.assigned.entry(strategy.as_str().into()).or_insert(0) += 1;
            let mut rng = sample_rng(seed, i, 0x1a6e);
            let pool = if strategy == ImageStrategy::Swap {
                swap_pool(s, &originals)
            } else {
                Vec::new()
            };
            let out = match image_aug.augment_image(s, strategy, &pool, &mut rng) {
                Err(MiclError::NotAugmentable { reason, .. }) if strategy == ImageStrategy::Swap => {
                    summary.fallbacks.push(Fallback {
                        sample_id: s.id.clone(),
                        requested: strategy.as_str().into(),
                        used: ImageStrategy::Crop.as_str().into(),
                        reason,
                    });
                    image_aug.augment_image(s, ImageStrategy::Crop, &[], &mut rng)?
                }
                other => other?,
            };
            *summary.produced.entry(origin_strategy(out.origin)).or_insert(0) += 1;
            augmented.push(out);
        }
    }

    let mut samples = dataset.samples.clone();
    samples.extend(augmented);
    Ok((Dataset::new(samples, Split::Train)?, summary))
}

fn origin_strategy(origin: Origin) -> String {
    match origin {
        Origin::AugTextFlip => "flip",
        Origin::AugTextPara => "paraphrase",
        Origin::AugImgCrop => "crop",
        Origin::AugImgSwap => "swap",
        Origin::AugImgStyle => "style",
        Origin::AugImgRegen => "regen",
        Origin::Original => "original",
    }
    .to_string()
}
