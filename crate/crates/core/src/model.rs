//! The full network: encoders, three views, evidential fusion and the
//! classifier, plus the per-batch loss.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::data::{HashingVocab, Lexicon, Sample};
use crate::encoders::{build_encoders, EncoderConfig, ImageEncoder, TextEncoder};
use crate::error::{MiclError, Result};
use crate::fusion::{Classifier, EvidenceHead, FusionLayer};
use crate::objective::contrastive_loss;
use crate::params::{BoundParams, ParamStore};
use crate::tensor::Matrix;
use crate::views::{
    build_text_graph, build_visual_graph, sentiment_polarity, EdgeProvider, EntityObjectView,
    SemanticGraph, SentimentSummary, SentimentView, TokenPatchView, ViewKind, WindowEdges,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub patch_dim: usize,
    pub dim: usize,
    pub encoder_depth: usize,
    pub gat_depth: usize,
    pub max_tokens: usize,
    pub max_patches: usize,
    /// Cosine similarity above which two patch states are linked.
    pub edge_threshold: f64,
    /// Token distance linked by the default text-graph provider.
    pub edge_window: usize,
    /// When false every view enters fusion with weight 1.
    pub use_credibility: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 1024,
            patch_dim: 16,
            dim: 32,
            encoder_depth: 1,
            gat_depth: 2,
            max_tokens: 64,
            max_patches: 64,
            edge_threshold: 0.6,
            edge_window: 2,
            use_credibility: true,
        }
    }
}

impl ModelConfig {
    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            vocab_size: self.vocab_size,
            patch_dim: self.patch_dim,
            dim: self.dim,
            depth: self.encoder_depth,
            max_tokens: self.max_tokens,
            max_patches: self.max_patches,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder().validate()?;
        if !(self.edge_threshold > -1.0 && self.edge_threshold < 1.0) {
            return Err(MiclError::Config(format!(
                "edge threshold {} must lie in (-1, 1)",
                self.edge_threshold
            )));
        }
        Ok(())
    }
}

/// A sample reduced to what the network consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub token_ids: Vec<u32>,
    pub text_len: usize,
    pub text_sentiment: SentimentSummary,
    pub ocr_sentiment: Option<SentimentSummary>,
    pub patches: Matrix,
    pub label: u8,
}

/// Tape handles for one forward pass.
#[derive(Debug, Clone)]
pub struct SampleForward {
    pub h_t: Var,
    pub h_v: Var,
    /// `1 × d` summary rows.
    pub e_t: Var,
    pub e_v: Var,
    /// Projected view features in [`ViewKind::ALL`] order.
    pub views: [Var; 3],
    pub evidence: [Var; 3],
    pub credibility: [Var; 3],
    pub fused: Var,
    /// `1 × 1` probability of the sarcastic class.
    pub probability: Var,
    /// Every row-stochastic matrix produced on the way.
    pub attention: Vec<Var>,
    pub text_graph: SemanticGraph,
    pub visual_graph: SemanticGraph,
}

/// Scalar handles of one batch loss.
#[derive(Debug, Clone, Copy)]
pub struct BatchLoss {
    pub total: Var,
    pub ce: Var,
    /// Absent for batches of fewer than two samples.
    pub cl: Option<Var>,
}

#[derive(Clone)]
pub struct MiclModel {
    pub config: ModelConfig,
    pub text_encoder: TextEncoder,
    pub image_encoder: ImageEncoder,
    pub token_patch: TokenPatchView,
    pub entity_object: EntityObjectView,
    pub sentiment: SentimentView,
    pub heads: [EvidenceHead; 3],
    pub fusion: FusionLayer,
    pub classifier: Classifier,
    pub vocab: HashingVocab,
    pub lexicon: Lexicon,
    edges: Arc<dyn EdgeProvider + Send + Sync>,
}

impl fmt::Debug for MiclModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MiclModel").field("config", &self.config).finish_non_exhaustive()
    }
}

impl MiclModel {
    /// Builds the network and its freshly initialised parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<(Self, ParamStore)> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.dim;
        let (text_encoder, image_encoder) = build_encoders(&mut store, &config.encoder(), &mut rng)?;
        let token_patch = TokenPatchView::new(&mut store, d, &mut rng);
        let entity_object = EntityObjectView::new(&mut store, d, config.gat_depth, &mut rng);
        let sentiment = SentimentView::new(&mut store, d, &mut rng);
        let heads = ViewKind::ALL.map(|v| EvidenceHead::new(&mut store, v, d, &mut rng));
        let fusion = FusionLayer::new(&mut store, d, &mut rng);
        let classifier = Classifier::new(&mut store, d, &mut rng);
        let model = Self {
            vocab: HashingVocab::new(config.vocab_size)?,
            lexicon: Lexicon::builtin(),
            edges: Arc::new(WindowEdges {
                width: config.edge_window,
            }),
            config,
            text_encoder,
            image_encoder,
            token_patch,
            entity_object,
            sentiment,
            heads,
            fusion,
            classifier,
        };
        Ok((model, store))
    }

    pub fn with_lexicon(mut self, lexicon: Lexicon) -> Self {
        self.lexicon = lexicon;
        self
    }

    pub fn with_edge_provider(mut self, edges: Arc<dyn EdgeProvider + Send + Sync>) -> Self {
        self.edges = edges;
        self
    }

    pub fn prepare(&self, sample: &Sample) -> Result<PreparedSample> {
        let mut token_ids = sample.text_tokens(&self.vocab);
        let text_len = token_ids.len();
        if let Some(ocr) = sample.ocr_tokens(&self.vocab) {
            token_ids.extend(ocr);
        }
        if sample.image.patch_dim() != self.config.patch_dim {
            return Err(MiclError::Shape(format!(
                "sample {}: patch width {} does not match model width {}",
                sample.id,
                sample.image.patch_dim(),
                self.config.patch_dim
            )));
        }
        Ok(PreparedSample {
            token_ids,
            text_len,
            text_sentiment: sentiment_polarity(&sample.text, &self.lexicon),
            ocr_sentiment: sample.ocr.as_ref().map(|o| sentiment_polarity(o, &self.lexicon)),
            patches: sample.image.patches().clone(),
            label: sample.label,
        })
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, s: &PreparedSample) -> Result<SampleForward> {
        let (text, ocr) = s.token_ids.split_at(s.text_len);
        let ocr = (!ocr.is_empty()).then_some(ocr);
        let enc_t = self.text_encoder.encode(tape, p, text, ocr)?;
        let enc_v = self.image_encoder.encode(tape, p, &s.patches)?;
        let (h_t, h_v) = (enc_t.rows, enc_v.rows);
        let n_t = tape.shape(h_t).0 - 1;
        let n_v = tape.shape(h_v).0 - 1;
        let e_t = tape.row(h_t, 0);
        let e_v = tape.row(h_v, 0);
        let tokens = tape.slice_rows(h_t, 1, n_t);
        let patches = tape.slice_rows(h_v, 1, n_v);

        let tp = self.token_patch.forward(tape, p, h_t, h_v);

        let text_graph = build_text_graph(tape.value(tokens).clone(), &s.token_ids, self.edges.as_ref())?;
        let visual_graph = build_visual_graph(tape.value(patches).clone(), self.config.edge_threshold)?;
        let (eo, gat_weights) =
            self.entity_object
                .forward(tape, p, tokens, &text_graph, patches, &visual_graph);

        let f_s = self.sentiment.forward(tape, p, s.text_sentiment, s.ocr_sentiment, tokens);

        let views = [tp.feature, eo.feature, f_s];
        let mut evidence = [views[0]; 3];
        let mut credibility = [views[0]; 3];
        for (m, head) in self.heads.iter().enumerate() {
            let (e, c) = head.forward(tape, p, views[m]);
            evidence[m] = e;
            credibility[m] = c;
        }
        let weights_in = if self.config.use_credibility {
            credibility.to_vec()
        } else {
            vec![tape.leaf(Matrix::scalar(1.0)); 3]
        };
        let fusion = self.fusion.forward(tape, p, &views, &weights_in);
        let probability = self.classifier.forward(tape, p, fusion.fused);

        let mut attention = enc_t.attention;
        attention.extend(enc_v.attention);
        attention.extend(tp.weights);
        attention.extend(gat_weights);
        attention.push(eo.gates);
        attention.push(fusion.weights);
        Ok(SampleForward {
            h_t,
            h_v,
            e_t,
            e_v,
            views,
            evidence,
            credibility,
            fused: fusion.fused,
            probability,
            attention,
            text_graph,
            visual_graph,
        })
    }

    /// Mean cross-entropy plus `lambda` times the contrastive loss.
    pub fn batch_loss(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        samples: &[&PreparedSample],
        tau: f64,
        lambda: f64,
    ) -> Result<(BatchLoss, Vec<SampleForward>)> {
        if samples.is_empty() {
            return Err(MiclError::Shape("empty batch".into()));
        }
        let forwards = samples
            .iter()
            .map(|s| self.forward(tape, p, s))
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
        let targets: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
        let probs: Vec<Var> = forwards.iter().map(|f| f.probability).collect();
        let probs = tape.concat_rows(&probs);
        let ce = tape.bce(probs, &targets);
        let (total, cl) = if samples.len() >= 2 {
            let e_t: Vec<Var> = forwards.iter().map(|f| f.e_t).collect();
            let e_v: Vec<Var> = forwards.iter().map(|f| f.e_v).collect();
            let e_t = tape.concat_rows(&e_t);
            let e_v = tape.concat_rows(&e_v);
            let cl = contrastive_loss(tape, e_t, e_v, &labels, tau);
            let weighted = tape.scale(cl, lambda);
            (tape.add(ce, weighted), Some(cl))
        } else {
            (ce, None)
        };
        Ok((BatchLoss { total, ce, cl }, forwards))
    }

    /// Probability of the sarcastic class and the three view credibilities.
    pub fn infer(&self, store: &ParamStore, sample: &PreparedSample) -> Result<Inference> {
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let f = self.forward(&mut tape, &p, sample)?;
        let probability = tape.scalar_value(f.probability);
        if !probability.is_finite() {
            return Err(MiclError::Numerical("non-finite prediction".into()));
        }
        Ok(Inference {
            probability,
            credibility: f.credibility.map(|c| tape.scalar_value(c)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Inference {
    pub probability: f64,
    pub credibility: [f64; 3],
}
