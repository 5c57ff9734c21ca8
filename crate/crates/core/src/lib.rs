//! Multi-view incongruity learning for multimodal sarcasm detection.
//!
//! The model encodes a caption (with optional OCR text) and an image patch
//! grid, derives three incongruity views (token-patch cross attention,
//! entity-object graph attention and lexicon sentiment), weighs the views by
//! evidential credibility, and trains with cross-entropy plus a
//! bidirectional supervised contrastive loss.

pub mod autograd;
pub mod checkpoint;
pub mod data;
pub mod encoders;
pub mod error;
pub mod fusion;
pub mod model;
pub mod nn;
pub mod objective;
pub mod params;
pub mod tensor;
pub mod training;
pub mod views;

pub use error::{MiclError, Result};
pub use tensor::Matrix;
