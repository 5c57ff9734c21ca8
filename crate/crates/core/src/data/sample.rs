use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{MiclError, Result};
use crate::tensor::Matrix;

use super::vocab::HashingVocab;

/// How a sample came to exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Original,
    AugTextFlip,
    AugTextPara,
    AugImgCrop,
    AugImgSwap,
    AugImgStyle,
    AugImgRegen,
}

impl Origin {
    pub fn is_augmented(self) -> bool {
        self != Origin::Original
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Original => "original",
            Origin::AugTextFlip => "aug_text_flip",
            Origin::AugTextPara => "aug_text_para",
            Origin::AugImgCrop => "aug_img_crop",
            Origin::AugImgSwap => "aug_img_swap",
            Origin::AugImgStyle => "aug_img_style",
            Origin::AugImgRegen => "aug_img_regen",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = MiclError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(MiclError::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// Raw image patches: `n_V` rows of `p` features each.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    patches: Matrix,
}

impl PatchGrid {
    pub fn new(patches: Matrix) -> Result<Self> {
        if patches.rows() == 0 || patches.cols() == 0 {
            return Err(MiclError::Shape("a patch grid needs at least one patch".into()));
        }
        if !patches.is_finite() {
            return Err(MiclError::Numerical("patch grid has non-finite values".into()));
        }
        Ok(Self { patches })
    }

    pub fn patches(&self) -> &Matrix {
        &self.patches
    }

    pub fn patch_count(&self) -> usize {
        self.patches.rows()
    }

    pub fn patch_dim(&self) -> usize {
        self.patches.cols()
    }

    /// Grid layout used for cropping: square when `n_V` is a perfect
    /// square, otherwise a single row of patches.
    pub fn layout(&self) -> (usize, usize) {
        let n = self.patch_count();
        let side = (n as f64).sqrt().round() as usize;
        if side * side == n {
            (side, side)
        } else {
            (1, n)
        }
    }
}

/// Planted polarities of a synthetic sample (`+1` or `-1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Planted {
    pub text: i8,
    pub image: i8,
}

impl Planted {
    /// Sarcastic iff the two planted signs disagree.
    pub fn label(self) -> u8 {
        u8::from(self.text != self.image)
    }
}

/// One text/OCR/image/label record.
///
/// Text is kept as whitespace tokens; ids come from a [`HashingVocab`].
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub text: Vec<String>,
    pub ocr: Option<Vec<String>>,
    pub image: PatchGrid,
    pub label: u8,
    pub origin: Origin,
    pub source_id: Option<String>,
    pub planted: Option<Planted>,
}

impl Sample {
    pub fn validate(&self) -> Result<()> {
        let fail = |message: &str| {
            Err(MiclError::Schema {
                record: self.id.clone(),
                message: message.to_string(),
            })
        };
        if self.label > 1 {
            return fail(&format!("label {} is not 0 or 1", self.label));
        }
        if self.text.is_empty() {
            return fail("text is empty");
        }
        if self.origin.is_augmented() && self.source_id.is_none() {
            return fail("augmented sample without a source id");
        }
        if !self.image.patches().is_finite() {
            return fail("non-finite patch values");
        }
        Ok(())
    }

    pub fn text_tokens(&self, vocab: &HashingVocab) -> Vec<u32> {
        vocab.ids(&self.text)
    }

    pub fn ocr_tokens(&self, vocab: &HashingVocab) -> Option<Vec<u32>> {
        self.ocr.as_ref().map(|o| vocab.ids(o))
    }

    pub fn has_ocr(&self) -> bool {
        self.ocr.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub split: Split,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, split: Split) -> Result<Self> {
        let ds = Self { samples, split };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for s in &self.samples {
            s.validate()?;
            if !seen.insert(s.id.as_str()) {
                return Err(MiclError::Schema {
                    record: s.id.clone(),
                    message: format!("duplicate id in {} split", self.split.as_str()),
                });
            }
        }
        for s in &self.samples {
            if let Some(src) = &s.source_id {
                if !seen.contains(src.as_str()) {
                    return Err(MiclError::Schema {
                        record: s.id.clone(),
                        message: format!("source id {src} not present"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Per-label totals, indexed by label.
    pub fn label_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for s in &self.samples {
            counts[usize::from(s.label)] += 1;
        }
        counts
    }

    pub fn originals(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(|s| !s.origin.is_augmented())
    }

    pub fn count_by_origin(&self) -> BTreeMap<Origin, usize> {
        let mut out = BTreeMap::new();
        for s in &self.samples {
            *out.entry(s.origin).or_insert(0) += 1;
        }
        out
    }

    /// Splits into consecutive train/val/test parts by fraction.
    pub fn partition(self, train_frac: f64, val_frac: f64) -> Result<(Dataset, Dataset, Dataset)> {
        if !(0.0..=1.0).contains(&train_frac)
            || !(0.0..=1.0).contains(&val_frac)
            || train_frac + val_frac > 1.0
        {
            return Err(MiclError::Config(format!(
                "invalid partition fractions {train_frac}/{val_frac}"
            )));
        }
        let n = self.samples.len();
        let n_train = (n as f64 * train_frac).round() as usize;
        let n_val = ((n as f64 * val_frac).round() as usize).min(n - n_train);
        let mut rest = self.samples;
        let mut rest2 = rest.split_off(n_train);
        let test = rest2.split_off(n_val);
        Ok((
            Dataset::new(rest, Split::Train)?,
            Dataset::new(rest2, Split::Val)?,
            Dataset::new(test, Split::Test)?,
        ))
    }
}
