//! Small trainable text and image encoders.
//!
//! Both produce an `(L + 1) × d` representation whose row 0 is a learned
//! summary ([CLS]) state: token (or patch) embeddings plus learned positions
//! go through `depth` transformer blocks and then one extra self-attention
//! layer. Text and image encoders have separate parameters.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::error::{MiclError, Result};
use crate::nn::{Attention, FeedForward, Linear};
use crate::params::{BoundParams, ParamId, ParamStore};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub patch_dim: usize,
    pub dim: usize,
    pub depth: usize,
    /// Longest caption-plus-OCR token sequence accepted.
    pub max_tokens: usize,
    pub max_patches: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.patch_dim == 0 || self.dim == 0 {
            return Err(MiclError::Config("encoder sizes must be positive".into()));
        }
        if self.max_tokens == 0 || self.max_patches == 0 {
            return Err(MiclError::Config("encoder position tables must be non-empty".into()));
        }
        Ok(())
    }
}

/// An encoder output: `rows[0]` is the summary state, the rest are
/// per-token (or per-patch) states.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalRepresentation {
    pub rows: Matrix,
}

impl ModalRepresentation {
    pub fn summary(&self) -> &[f64] {
        self.rows.row(0)
    }

    /// Number of content rows `L`.
    pub fn content_len(&self) -> usize {
        self.rows.rows() - 1
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }
}

/// Encoder output on the tape.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// `(L + 1) × d` states, summary row first.
    pub rows: Var,
    /// Self-attention weights of every layer, in order.
    pub attention: Vec<Var>,
}

#[derive(Debug, Clone)]
struct Block {
    attn: Attention,
    ffn: FeedForward,
}

impl Block {
    fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            attn: Attention::new(store, &format!("{name}.attn"), dim, rng),
            ffn: FeedForward::new(store, &format!("{name}.ffn"), dim, 2 * dim, dim, rng),
        }
    }

    fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var, weights: &mut Vec<Var>) -> Var {
        let att = self.attn.self_attend(tape, p, x);
        weights.push(att.weights);
        let a = tape.layer_norm(att.output);
        let f = self.ffn.forward(tape, p, a);
        let sum = tape.add(a, f);
        tape.layer_norm(sum)
    }
}

/// Shared tail of both encoders: positions, blocks, closing self-attention.
#[derive(Debug, Clone)]
struct Trunk {
    cls: ParamId,
    positions: ParamId,
    blocks: Vec<Block>,
    post: Attention,
}

impl Trunk {
    fn new(
        store: &mut ParamStore,
        name: &str,
        max_len: usize,
        config: &EncoderConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let d = config.dim;
        let cls = store.add_uniform(format!("{name}.cls"), 1, d, d, rng);
        let positions = store.add_uniform(format!("{name}.positions"), max_len + 1, d, d, rng);
        let blocks = (0..config.depth)
            .map(|i| Block::new(store, &format!("{name}.block{i}"), d, rng))
            .collect();
        let post = Attention::new(store, &format!("{name}.self_att"), d, rng);
        Self {
            cls,
            positions,
            blocks,
            post,
        }
    }

    /// `content` is `L × d`; returns `(L + 1) × d`.
    fn forward(&self, tape: &mut Tape, p: &BoundParams, content: Var) -> Encoded {
        let len = tape.shape(content).0;
        let x = tape.concat_rows(&[p.var(self.cls), content]);
        let pos_ids: Vec<usize> = (0..=len).collect();
        let pos = tape.gather_rows(p.var(self.positions), &pos_ids);
        let mut x = tape.add(x, pos);
        let mut attention = Vec::with_capacity(self.blocks.len() + 1);
        for b in &self.blocks {
            x = b.forward(tape, p, x, &mut attention);
        }
        let post = self.post.self_attend(tape, p, x);
        attention.push(post.weights);
        Encoded {
            rows: post.output,
            attention,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TextEncoder {
    embeddings: ParamId,
    trunk: Trunk,
    vocab_size: usize,
    max_tokens: usize,
}

impl TextEncoder {
    pub fn new(store: &mut ParamStore, config: &EncoderConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = config.dim;
        Self {
            embeddings: store.add_uniform("text.embeddings", config.vocab_size, d, d, rng),
            trunk: Trunk::new(store, "text", config.max_tokens, config, rng),
            vocab_size: config.vocab_size,
            max_tokens: config.max_tokens,
        }
    }

    /// Encodes the caption followed by the OCR tokens (absent OCR is empty).
    pub fn encode(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        text_tokens: &[u32],
        ocr_tokens: Option<&[u32]>,
    ) -> Result<Encoded> {
        if text_tokens.is_empty() {
            return Err(MiclError::Shape("text must contain at least one token".into()));
        }
        let ids: Vec<usize> = text_tokens
            .iter()
            .chain(ocr_tokens.unwrap_or(&[]))
            .map(|&t| {
                if (t as usize) < self.vocab_size {
                    Ok(t as usize)
                } else {
                    Err(MiclError::TokenOutOfVocab {
                        id: t,
                        vocab: self.vocab_size,
                    })
                }
            })
            .collect::<Result<_>>()?;
        if ids.len() > self.max_tokens {
            return Err(MiclError::Shape(format!(
                "{} tokens exceed the encoder limit of {}",
                ids.len(),
                self.max_tokens
            )));
        }
        let content = tape.gather_rows(p.var(self.embeddings), &ids);
        Ok(self.trunk.forward(tape, p, content))
    }
}

#[derive(Debug, Clone)]
pub struct ImageEncoder {
    projection: Linear,
    trunk: Trunk,
    max_patches: usize,
}

impl ImageEncoder {
    pub fn new(store: &mut ParamStore, config: &EncoderConfig, rng: &mut ChaCha8Rng) -> Self {
        Self {
            projection: Linear::new(store, "image.patch_proj", config.patch_dim, config.dim, rng),
            trunk: Trunk::new(store, "image", config.max_patches, config, rng),
            max_patches: config.max_patches,
        }
    }

    pub fn patch_dim(&self) -> usize {
        self.projection.d_in
    }

    pub fn encode(&self, tape: &mut Tape, p: &BoundParams, patches: &Matrix) -> Result<Encoded> {
        if patches.rows() == 0 {
            return Err(MiclError::Shape("image needs at least one patch".into()));
        }
        if patches.cols() != self.projection.d_in {
            return Err(MiclError::Shape(format!(
                "patch width {} does not match encoder width {}",
                patches.cols(),
                self.projection.d_in
            )));
        }
        if patches.rows() > self.max_patches {
            return Err(MiclError::Shape(format!(
                "{} patches exceed the encoder limit of {}",
                patches.rows(),
                self.max_patches
            )));
        }
        let raw = tape.leaf(patches.clone());
        let content = self.projection.forward(tape, p, raw);
        Ok(self.trunk.forward(tape, p, content))
    }
}

/// Builds both encoders with their own parameters.
pub fn build_encoders(
    store: &mut ParamStore,
    config: &EncoderConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(TextEncoder, ImageEncoder)> {
    config.validate()?;
    let text = TextEncoder::new(store, config, rng);
    let image = ImageEncoder::new(store, config, rng);
    Ok((text, image))
}
