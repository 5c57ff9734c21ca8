//! The three incongruity views. Each produces a `1 × d` feature on the tape.

pub mod graph;
pub mod sentiment;
pub mod token_patch;

use serde::{Deserialize, Serialize};

pub use graph::{
    build_text_graph, build_visual_graph, EdgeProvider, EntityObjectOutput, EntityObjectView,
    GatLayer, GraphModality, SemanticGraph, WindowEdges, GAT_NEGATIVE_SLOPE,
};
pub use sentiment::{sentiment_polarity, SentimentSummary, SentimentView};
pub use token_patch::{TokenPatchOutput, TokenPatchView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewKind {
    TokenPatch,
    EntityObject,
    Sentiment,
}

impl ViewKind {
    pub const ALL: [ViewKind; 3] = [ViewKind::TokenPatch, ViewKind::EntityObject, ViewKind::Sentiment];

    pub fn as_str(self) -> &'static str {
        match self {
            ViewKind::TokenPatch => "token_patch",
            ViewKind::EntityObject => "entity_object",
            ViewKind::Sentiment => "sentiment",
        }
    }
}

/// A view's projected feature, detached from the tape.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewFeature {
    pub view: ViewKind,
    pub vector: Vec<f64>,
}
