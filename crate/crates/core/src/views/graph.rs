//! Entity-object view: semantic graphs over token and patch states, graph
//! attention, and a gated readout over the joint node set.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Unary, Var};
use crate::error::{MiclError, Result};
use crate::nn::Linear;
use crate::params::{BoundParams, ParamId, ParamStore};
use crate::tensor::{cosine, Matrix};

/// Negative slope of the leaky rectifier in attention scoring.
pub const GAT_NEGATIVE_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphModality {
    Text,
    Visual,
}

/// Undirected graph with self-loops. `adjacency` is row-major `N × N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGraph {
    pub node_features: Matrix,
    pub adjacency: Vec<bool>,
    pub modality: GraphModality,
    /// Nodes whose features had zero norm and were left with only a self-loop.
    pub degenerate: Vec<usize>,
}

impl SemanticGraph {
    fn with_self_loops(node_features: Matrix, modality: GraphModality) -> Self {
        let n = node_features.rows();
        let mut adjacency = vec![false; n * n];
        for i in 0..n {
            adjacency[i * n + i] = true;
        }
        Self {
            node_features,
            adjacency,
            modality,
            degenerate: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_features.rows()
    }

    pub fn connected(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.node_count() + j]
    }

    fn link(&mut self, i: usize, j: usize) {
        let n = self.node_count();
        self.adjacency[i * n + j] = true;
        self.adjacency[j * n + i] = true;
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.node_count();
        (0..n).all(|i| (0..n).all(|j| self.connected(i, j) == self.connected(j, i)))
    }

    pub fn has_self_loops(&self) -> bool {
        (0..self.node_count()).all(|i| self.connected(i, i))
    }

    pub fn edge_count(&self) -> usize {
        let n = self.node_count();
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| self.connected(i, j)).count()
    }
}

/// Supplies text-graph edges given the token ids of the node sequence.
pub trait EdgeProvider {
    fn edges(&self, token_ids: &[u32]) -> Vec<(usize, usize)>;
}

/// Links every pair of tokens at most `width` positions apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowEdges {
    pub width: usize,
}

impl Default for WindowEdges {
    fn default() -> Self {
        Self { width: 2 }
    }
}

impl EdgeProvider for WindowEdges {
    fn edges(&self, token_ids: &[u32]) -> Vec<(usize, usize)> {
        let n = token_ids.len();
        (0..n)
            .flat_map(|i| (i + 1..n.min(i + self.width + 1)).map(move |j| (i, j)))
            .collect()
    }
}

/// Builds the token graph: nodes are token states (`L × d`, summary row
/// excluded), edges come from `provider` and are symmetrized.
pub fn build_text_graph(
    token_states: Matrix,
    token_ids: &[u32],
    provider: &dyn EdgeProvider,
) -> Result<SemanticGraph> {
    let n = token_states.rows();
    if n == 0 {
        return Err(MiclError::Shape("text graph needs at least one token".into()));
    }
    if token_ids.len() != n {
        return Err(MiclError::Shape(format!(
            "{} token ids for {} token states",
            token_ids.len(),
            n
        )));
    }
    let mut graph = SemanticGraph::with_self_loops(token_states, GraphModality::Text);
    for (i, j) in provider.edges(token_ids) {
        if i >= n || j >= n {
            return Err(MiclError::EdgeOutOfRange(i, j, n));
        }
        graph.link(i, j);
    }
    Ok(graph)
}

/// Builds the region graph: `i ~ j` when the cosine similarity of their
/// states exceeds `threshold`. Zero-norm nodes keep only their self-loop and
/// are listed in `degenerate`.
pub fn build_visual_graph(patch_states: Matrix, threshold: f64) -> Result<SemanticGraph> {
    let n = patch_states.rows();
    if n == 0 {
        return Err(MiclError::Shape("visual graph needs at least one patch".into()));
    }
    if !(threshold > -1.0 && threshold < 1.0) {
        return Err(MiclError::Config(format!(
            "cosine threshold {threshold} must lie in (-1, 1)"
        )));
    }
    let mut graph = SemanticGraph::with_self_loops(patch_states, GraphModality::Visual);
    for i in 0..n {
        if cosine(graph.node_features.row(i), graph.node_features.row(i)).is_none() {
            graph.degenerate.push(i);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let f = &graph.node_features;
            if let Some(c) = cosine(f.row(i), f.row(j)) {
                if c > threshold {
                    graph.link(i, j);
                }
            }
        }
    }
    Ok(graph)
}

/// One graph attention layer: `W` (`d × d`) and scoring vector `u` (`2d`).
#[derive(Debug, Clone)]
pub struct GatLayer {
    pub w: ParamId,
    pub u: ParamId,
    pub dim: usize,
}

/// Result of one layer: updated nodes and neighbourhood weights `α`.
#[derive(Debug, Clone, Copy)]
pub struct GatOutput {
    pub nodes: Var,
    pub weights: Var,
}

impl GatLayer {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: store.add_uniform(format!("{name}.w"), dim, dim, dim, rng),
            u: store.add_uniform(format!("{name}.u"), 2 * dim, 1, dim, rng),
            dim,
        }
    }

    /// `α_ij = softmax_j∈N(i) LeakyReLU(u·[W g_i ‖ W g_j])`, `g_i' = Σ_j α_ij W g_j`.
    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, nodes: Var, graph: &SemanticGraph) -> GatOutput {
        let projected = tape.matmul(nodes, p.var(self.w));
        let u = p.var(self.u);
        let u_self = tape.slice_rows(u, 0, self.dim);
        let u_nbr = tape.slice_rows(u, self.dim, self.dim);
        let s_self = tape.matmul(projected, u_self);
        let s_nbr = tape.matmul(projected, u_nbr);
        let s_nbr = tape.transpose(s_nbr);
        let scores = tape.outer_add(s_self, s_nbr);
        let scores = tape.unary(scores, Unary::LeakyRelu(GAT_NEGATIVE_SLOPE));
        let weights = tape.masked_softmax_rows(scores, &graph.adjacency);
        let nodes = tape.matmul(weights, projected);
        GatOutput { nodes, weights }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EntityObjectOutput {
    /// Projected `1 × d` view feature.
    pub feature: Var,
    /// Gated mean before projection.
    pub pooled: Var,
    /// `1 × N` gate distribution over the joint node set.
    pub gates: Var,
}

/// Text and visual GAT stacks, the node gate and the output projection.
#[derive(Debug, Clone)]
pub struct EntityObjectView {
    pub text_layers: Vec<GatLayer>,
    pub visual_layers: Vec<GatLayer>,
    pub gate: Linear,
    pub projection: Linear,
}

impl EntityObjectView {
    pub fn new(store: &mut ParamStore, dim: usize, depth: usize, rng: &mut ChaCha8Rng) -> Self {
        let text_layers = (0..depth)
            .map(|l| GatLayer::new(store, &format!("entity.text_gat{l}"), dim, rng))
            .collect();
        let visual_layers = (0..depth)
            .map(|l| GatLayer::new(store, &format!("entity.visual_gat{l}"), dim, rng))
            .collect();
        Self {
            text_layers,
            visual_layers,
            gate: Linear::new(store, "entity.gate", dim, 1, rng),
            projection: Linear::new(store, "entity.proj", dim, dim, rng),
        }
    }

    /// Runs every layer of a stack; returns final nodes and each layer's weights.
    pub fn propagate(
        layers: &[GatLayer],
        tape: &mut Tape,
        p: &BoundParams,
        nodes: Var,
        graph: &SemanticGraph,
    ) -> (Var, Vec<Var>) {
        let mut x = nodes;
        let mut weights = Vec::with_capacity(layers.len());
        for layer in layers {
            let out = layer.forward(tape, p, x, graph);
            x = out.nodes;
            weights.push(out.weights);
        }
        (x, weights)
    }

    /// `text_nodes` and `visual_nodes` are the content rows of the two
    /// encoder outputs, matching the graphs' node counts.
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        text_nodes: Var,
        text_graph: &SemanticGraph,
        visual_nodes: Var,
        visual_graph: &SemanticGraph,
    ) -> (EntityObjectOutput, Vec<Var>) {
        let (gt, mut weights) = Self::propagate(&self.text_layers, tape, p, text_nodes, text_graph);
        let (gv, wv) = Self::propagate(&self.visual_layers, tape, p, visual_nodes, visual_graph);
        weights.extend(wv);
        let (pooled, gates) = self.readout(tape, p, &[gt, gv]);
        let feature = self.projection.forward(tape, p, pooled);
        (
            EntityObjectOutput {
                feature,
                pooled,
                gates,
            },
            weights,
        )
    }

    /// `(1/N) Σ_i softmax_i(g_i W_g + b_g) g_i` over the stacked node sets.
    pub fn readout(&self, tape: &mut Tape, p: &BoundParams, node_sets: &[Var]) -> (Var, Var) {
        let g = tape.concat_rows(node_sets);
        let n = tape.shape(g).0;
        let logits = self.gate.forward(tape, p, g);
        let logits = tape.transpose(logits);
        let gates = tape.softmax_rows(logits);
        let weighted = tape.matmul(gates, g);
        (tape.scale(weighted, 1.0 / n as f64), gates)
    }
}
