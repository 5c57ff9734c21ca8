//! Dataset ingestion, the synthetic corpus, augmentation and batching.

pub mod augment;
pub mod batch;
pub mod io;
pub mod lexicon;
pub mod sample;
pub mod synth;
pub mod vocab;

pub use augment::{
    plan_augmentation, plan_augmentation_with, AugmentationPlan, AugmentationSummary,
    ImageAugmenter, ImageStrategy, SurrogateAugmenter, TextAugmenter, TextStrategy,
};
pub use batch::{build_batches, Batch};
pub use io::{load_dataset, save_dataset, split_path};
pub use lexicon::{Lexicon, PolarityLexicon, SynonymTable};
pub use sample::{Dataset, Origin, PatchGrid, Planted, Sample, Split};
pub use synth::{generate_synthetic, SynthConfig};
pub use vocab::{tokenize, HashingVocab};
