//! The encoder: an embedding table propagated through K stacked
//! dual-frequency layers. Each layer runs the low-pass filter (augmented
//! GCN propagation) over the positive subgraph and the high-pass filter
//! (normalized Laplacian) over the negative subgraph, then fuses the two
//! streams with an affine layer. Prediction is a logistic inner product.

use crate::error::{Error, Result};
use crate::graph::{Sign, SignedBipartiteGraph};
use crate::sparse::SparseSymMatrix;
use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Ablation lattice. `Basic` propagates positives only; `BasicLgf`
/// low-passes both subgraphs; `BasicDgf` runs the dual-frequency filter;
/// `Dfgnn` is `BasicDgf` trained with the signed-graph regularizer.
/// Serialized by display name ("Basic", "Basic+LGF", "Basic+DGF",
/// "DFGNN") so config files read naturally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Variant {
    Basic,
    BasicLgf,
    BasicDgf,
    Dfgnn,
}

impl TryFrom<String> for Variant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.to_string()
    }
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Basic,
        Variant::BasicLgf,
        Variant::BasicDgf,
        Variant::Dfgnn,
    ];

    /// Whether the encoder has a negative-feedback stream and fusion.
    pub fn has_negative_stream(self) -> bool {
        !matches!(self, Variant::Basic)
    }

    /// Whether training applies the signed-graph regularization weight.
    pub fn uses_sgr(self) -> bool {
        matches!(self, Variant::Dfgnn)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::Basic => "Basic",
            Variant::BasicLgf => "Basic+LGF",
            Variant::BasicDgf => "Basic+DGF",
            Variant::Dfgnn => "DFGNN",
        };
        write!(f, "{s}")
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "+").as_str() {
            "basic" => Ok(Variant::Basic),
            "basic+lgf" => Ok(Variant::BasicLgf),
            "basic+dgf" => Ok(Variant::BasicDgf),
            "dfgnn" => Ok(Variant::Dfgnn),
            _ => Err(Error::Config(format!(
                "unknown variant {s:?}; expected Basic, Basic+LGF, Basic+DGF, or DFGNN"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    fn apply_matrix(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::Identity => z.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub num_layers: usize,
    pub activation: Activation,
    pub variant: Variant,
    /// Reuse W_pos for the negative stream instead of a separate W_neg.
    pub share_filter_weights: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            num_layers: 2,
            activation: Activation::Relu,
            variant: Variant::Dfgnn,
            share_filter_weights: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(Error::Config("embed_dim must be >= 1".into()));
        }
        if self.num_layers == 0 {
            return Err(Error::Config("num_layers must be >= 1".into()));
        }
        Ok(())
    }

    /// Activation applied at the output of layer `l` (the fusion output
    /// for dual-stream variants, the filter output for Basic): hidden
    /// layers use the configured nonlinearity, the final layer is
    /// identity so logits stay signed.
    pub fn layer_activation(&self, l: usize) -> Activation {
        if l + 1 == self.num_layers {
            Activation::Identity
        } else {
            self.activation
        }
    }

    /// Activation inside the filter streams of layer `l`. Dual-stream
    /// variants keep the streams linear (one nonlinearity per layer, at
    /// the fusion; this also preserves the sign information coming out of
    /// the high-pass stream); for Basic the filter output is the layer
    /// output, so it carries the layer activation.
    pub fn filter_activation(&self, l: usize) -> Activation {
        if self.variant.has_negative_stream() {
            Activation::Identity
        } else {
            self.layer_activation(l)
        }
    }
}

/// Per-layer trainable parameters. The negative-stream and fusion blocks
/// exist only for variants with a negative stream.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w_pos: Array2<f64>,
    pub w_neg: Option<Array2<f64>>,
    pub w_fuse: Option<Array2<f64>>,
    pub b_fuse: Option<Array1<f64>>,
}

/// All trainable state: the embedding table H^0 plus per-layer filters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    pub num_users: usize,
    pub num_items: usize,
    pub embeddings: Array2<f64>,
    pub layers: Vec<LayerParams>,
}

impl Model {
    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn num_parameters(&self) -> usize {
        let mut count = self.embeddings.len();
        for layer in &self.layers {
            count += layer.w_pos.len();
            count += layer.w_neg.as_ref().map_or(0, Array2::len);
            count += layer.w_fuse.as_ref().map_or(0, Array2::len);
            count += layer.b_fuse.as_ref().map_or(0, Array1::len);
        }
        count
    }
}

/// Model initialization, deterministic under the config seed. Filter
/// weights are Xavier-uniform; embeddings draw from uniform(-a, a) with
/// a = sqrt(6 / (2 d)); fusion biases start at zero.
///
/// The fusion weights start at the identity projection of the positive
/// stream (an [I; 0] stack), so every dual-stream variant begins with the
/// exact behavior of the positive-only model and the negative stream is
/// grown by the optimizer where it pays off. Xavier-initialized fusion
/// traps the dual variants in markedly worse optima on planted instances.
pub fn init_model(cfg: &ModelConfig, num_users: usize, num_items: usize) -> Result<Model> {
    cfg.validate()?;
    let d = cfg.embed_dim;
    let n = num_users + num_items;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let embed_limit = (6.0 / (2.0 * d as f64)).sqrt();
    let embeddings = draw_uniform(&mut rng, (n, d), embed_limit);
    let filter_limit = (6.0 / (2.0 * d as f64)).sqrt();
    let mut layers = Vec::with_capacity(cfg.num_layers);
    for _ in 0..cfg.num_layers {
        let w_pos = draw_uniform(&mut rng, (d, d), filter_limit);
        let (w_neg, w_fuse, b_fuse) = if cfg.variant.has_negative_stream() {
            let w_neg = if cfg.share_filter_weights {
                None
            } else {
                Some(draw_uniform(&mut rng, (d, d), filter_limit))
            };
            let mut w_fuse = Array2::zeros((2 * d, d));
            for i in 0..d {
                w_fuse[[i, i]] = 1.0;
            }
            (w_neg, Some(w_fuse), Some(Array1::zeros(d)))
        } else {
            (None, None, None)
        };
        layers.push(LayerParams {
            w_pos,
            w_neg,
            w_fuse,
            b_fuse,
        });
    }
    Ok(Model {
        cfg: *cfg,
        num_users,
        num_items,
        embeddings,
        layers,
    })
}

fn draw_uniform(rng: &mut ChaCha8Rng, shape: (usize, usize), limit: f64) -> Array2<f64> {
    Array2::from_shape_fn(shape, |_| rng.random_range(-limit..limit))
}

/// Read-only view of one named parameter tensor.
#[derive(Debug, Clone, Copy)]
pub enum TensorView<'a> {
    Mat(&'a Array2<f64>),
    Vec(&'a Array1<f64>),
}

impl<'a> TensorView<'a> {
    pub fn dims(&self) -> Vec<usize> {
        match self {
            TensorView::Mat(m) => m.shape().to_vec(),
            TensorView::Vec(v) => vec![v.len()],
        }
    }

    pub fn as_slice(&self) -> &'a [f64] {
        match self {
            TensorView::Mat(m) => m.as_slice().expect("standard layout"),
            TensorView::Vec(v) => v.as_slice().expect("standard layout"),
        }
    }
}

/// Mutable view of one named parameter tensor.
#[derive(Debug)]
pub enum TensorViewMut<'a> {
    Mat(&'a mut Array2<f64>),
    Vec(&'a mut Array1<f64>),
}

impl<'a> TensorViewMut<'a> {
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        match self {
            TensorViewMut::Mat(m) => m.as_slice_mut().expect("standard layout"),
            TensorViewMut::Vec(v) => v.as_slice_mut().expect("standard layout"),
        }
    }
}

fn named_views<'a>(
    embeddings: &'a Array2<f64>,
    layers: &'a [LayerParams],
) -> Vec<(String, TensorView<'a>)> {
    let mut out: Vec<(String, TensorView<'a>)> = Vec::new();
    out.push(("embeddings".to_string(), TensorView::Mat(embeddings)));
    for (l, layer) in layers.iter().enumerate() {
        out.push((format!("layer{l}.w_pos"), TensorView::Mat(&layer.w_pos)));
        if let Some(w) = layer.w_neg.as_ref() {
            out.push((format!("layer{l}.w_neg"), TensorView::Mat(w)));
        }
        if let Some(w) = layer.w_fuse.as_ref() {
            out.push((format!("layer{l}.w_fuse"), TensorView::Mat(w)));
        }
        if let Some(b) = layer.b_fuse.as_ref() {
            out.push((format!("layer{l}.b_fuse"), TensorView::Vec(b)));
        }
    }
    out
}

fn named_views_mut<'a>(
    embeddings: &'a mut Array2<f64>,
    layers: &'a mut [LayerParams],
) -> Vec<(String, TensorViewMut<'a>)> {
    let mut out: Vec<(String, TensorViewMut<'a>)> = Vec::new();
    out.push(("embeddings".to_string(), TensorViewMut::Mat(embeddings)));
    for (l, layer) in layers.iter_mut().enumerate() {
        out.push((format!("layer{l}.w_pos"), TensorViewMut::Mat(&mut layer.w_pos)));
        if let Some(w) = layer.w_neg.as_mut() {
            out.push((format!("layer{l}.w_neg"), TensorViewMut::Mat(w)));
        }
        if let Some(w) = layer.w_fuse.as_mut() {
            out.push((format!("layer{l}.w_fuse"), TensorViewMut::Mat(w)));
        }
        if let Some(b) = layer.b_fuse.as_mut() {
            out.push((format!("layer{l}.b_fuse"), TensorViewMut::Vec(b)));
        }
    }
    out
}

/// Gradient set (also reused for optimizer moments) with the same shapes
/// as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embeddings: Array2<f64>,
    pub layers: Vec<LayerParams>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            embeddings: Array2::zeros(model.embeddings.dim()),
            layers: model
                .layers
                .iter()
                .map(|layer| LayerParams {
                    w_pos: Array2::zeros(layer.w_pos.dim()),
                    w_neg: layer.w_neg.as_ref().map(|w| Array2::zeros(w.dim())),
                    w_fuse: layer.w_fuse.as_ref().map(|w| Array2::zeros(w.dim())),
                    b_fuse: layer.b_fuse.as_ref().map(|b| Array1::zeros(b.len())),
                })
                .collect(),
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, TensorView<'_>)> {
        named_views(&self.embeddings, &self.layers)
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, TensorViewMut<'_>)> {
        named_views_mut(&mut self.embeddings, &mut self.layers)
    }

    /// self += c * other.
    pub fn scaled_add(&mut self, c: f64, other: &Gradients) {
        self.embeddings.scaled_add(c, &other.embeddings);
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            a.w_pos.scaled_add(c, &b.w_pos);
            if let (Some(x), Some(y)) = (a.w_neg.as_mut(), b.w_neg.as_ref()) {
                x.scaled_add(c, y);
            }
            if let (Some(x), Some(y)) = (a.w_fuse.as_mut(), b.w_fuse.as_ref()) {
                x.scaled_add(c, y);
            }
            if let (Some(x), Some(y)) = (a.b_fuse.as_mut(), b.b_fuse.as_ref()) {
                x.scaled_add(c, y);
            }
        }
    }
}

impl Model {
    /// Parameter tensors in a fixed, stable order.
    pub fn named_tensors(&self) -> Vec<(String, TensorView<'_>)> {
        named_views(&self.embeddings, &self.layers)
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, TensorViewMut<'_>)> {
        named_views_mut(&mut self.embeddings, &mut self.layers)
    }
}

/// The propagation operators of a signed graph, built once and reused
/// across layers and epochs.
#[derive(Debug, Clone)]
pub struct GraphOperators {
    /// Low-pass propagation over the positive subgraph.
    pub pos: SparseSymMatrix,
    /// Negative-subgraph operator: high-pass for the dual-frequency
    /// variants, low-pass for Basic+LGF, absent for Basic or when the
    /// graph has no negative edges (the encoder then zeroes that stream).
    pub neg: Option<SparseSymMatrix>,
}

impl GraphOperators {
    pub fn build(graph: &SignedBipartiteGraph, variant: Variant) -> Self {
        let pos = graph.sign_adjacency(Sign::Positive).augmented_propagation();
        let neg = if !variant.has_negative_stream() || graph.neg_edges().is_empty() {
            None
        } else {
            let a_neg = graph.sign_adjacency(Sign::Negative);
            Some(match variant {
                Variant::BasicLgf => a_neg.augmented_propagation(),
                _ => a_neg.high_pass_operator(),
            })
        };
        Self { pos, neg }
    }
}

/// One dual-frequency layer's intermediates, kept for exact gradients.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    /// P H (positive-stream propagation).
    pub m_pos: Array2<f64>,
    /// M_pos W_pos, pre-activation.
    pub z_pos: Array2<f64>,
    /// L H for the negative stream; `None` means that stream is zero.
    pub m_neg: Option<Array2<f64>>,
    pub z_neg: Option<Array2<f64>>,
    /// [act(z_pos) | act(z_neg)], input of the fusion layer.
    pub concat: Option<Array2<f64>>,
    /// Fusion pre-activation.
    pub z_fuse: Option<Array2<f64>>,
}

/// Everything the backward pass needs: the layer inputs H^0..H^K and the
/// per-layer intermediates.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub h: Vec<Array2<f64>>,
    pub layers: Vec<LayerTrace>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.h.last().expect("trace has at least H^0")
    }

    /// Guard against reusing a trace produced by a different model shape.
    pub fn check_matches(&self, model: &Model) -> Result<()> {
        let n = model.num_nodes();
        let d = model.cfg.embed_dim;
        if self.h.len() != model.cfg.num_layers + 1
            || self.layers.len() != model.cfg.num_layers
            || self.h[0].dim() != (n, d)
        {
            return Err(Error::DimensionMismatch(
                "stale forward trace: shape does not match model".into(),
            ));
        }
        Ok(())
    }
}

/// Low-pass filter layer: act(P H W).
pub fn lgf_layer(
    p: &SparseSymMatrix,
    h: ArrayView2<f64>,
    w: ArrayView2<f64>,
    act: Activation,
) -> Result<Array2<f64>> {
    if h.ncols() != w.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "lgf_layer: H is {:?} but W is {:?}",
            h.dim(),
            w.dim()
        )));
    }
    Ok(act.apply_matrix(&p.spmm(h)?.dot(&w)))
}

/// High-pass filter layer: act(L H W).
pub fn hgf_layer(
    l: &SparseSymMatrix,
    h: ArrayView2<f64>,
    w: ArrayView2<f64>,
    act: Activation,
) -> Result<Array2<f64>> {
    lgf_layer(l, h, w, act)
}

/// Fusion of the two filtered streams: act([H_pos | H_neg] W_f + b_f),
/// with the positive stream occupying the first `d` columns.
pub fn fuse(
    h_pos: ArrayView2<f64>,
    h_neg: ArrayView2<f64>,
    w_fuse: ArrayView2<f64>,
    b_fuse: ArrayView1<f64>,
    act: Activation,
) -> Result<Array2<f64>> {
    if h_pos.dim() != h_neg.dim() {
        return Err(Error::DimensionMismatch(format!(
            "fuse: stream shapes differ, {:?} vs {:?}",
            h_pos.dim(),
            h_neg.dim()
        )));
    }
    let cat = concatenate(Axis(1), &[h_pos, h_neg])
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    if cat.ncols() != w_fuse.nrows() || w_fuse.ncols() != b_fuse.len() {
        return Err(Error::DimensionMismatch(format!(
            "fuse: concat is {:?} but W_f is {:?}",
            cat.dim(),
            w_fuse.dim()
        )));
    }
    Ok(act.apply_matrix(&(cat.dot(&w_fuse) + b_fuse)))
}

/// Full encoder forward pass, retaining everything needed for exact
/// gradients. Hidden layers use the configured activation; the last layer
/// is identity.
pub fn forward(model: &Model, ops: &GraphOperators) -> Result<ForwardTrace> {
    let k = model.cfg.num_layers;
    let d = model.cfg.embed_dim;
    let n = model.num_nodes();
    if model.embeddings.dim() != (n, d) {
        return Err(Error::DimensionMismatch(format!(
            "embeddings are {:?}, expected ({n}, {d})",
            model.embeddings.dim()
        )));
    }
    let mut h = Vec::with_capacity(k + 1);
    let mut layer_traces = Vec::with_capacity(k);
    h.push(model.embeddings.clone());
    for l in 0..k {
        let act = model.cfg.layer_activation(l);
        let filter_act = model.cfg.filter_activation(l);
        let params = &model.layers[l];
        let input = &h[l];
        let m_pos = ops.pos.spmm(input.view())?;
        let z_pos = m_pos.dot(&params.w_pos);
        let h_pos = filter_act.apply_matrix(&z_pos);
        if model.cfg.variant.has_negative_stream() {
            let (m_neg, z_neg, h_neg) = match &ops.neg {
                Some(op) => {
                    let m = op.spmm(input.view())?;
                    let w_neg = params
                        .w_neg
                        .as_ref()
                        .unwrap_or(&params.w_pos);
                    let z = m.dot(w_neg);
                    let hn = filter_act.apply_matrix(&z);
                    (Some(m), Some(z), hn)
                }
                // no negative edges: that stream is identically zero
                None => (None, None, Array2::zeros((n, d))),
            };
            let concat = concatenate(Axis(1), &[h_pos.view(), h_neg.view()])
                .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
            let w_fuse = params
                .w_fuse
                .as_ref()
                .ok_or_else(|| Error::DimensionMismatch("missing fusion weights".into()))?;
            let b_fuse = params
                .b_fuse
                .as_ref()
                .ok_or_else(|| Error::DimensionMismatch("missing fusion bias".into()))?;
            let z_fuse = concat.dot(w_fuse) + b_fuse;
            h.push(act.apply_matrix(&z_fuse));
            layer_traces.push(LayerTrace {
                m_pos,
                z_pos,
                m_neg,
                z_neg,
                concat: Some(concat),
                z_fuse: Some(z_fuse),
            });
        } else {
            h.push(h_pos);
            layer_traces.push(LayerTrace {
                m_pos,
                z_pos,
                m_neg: None,
                z_neg: None,
                concat: None,
                z_fuse: None,
            });
        }
    }
    Ok(ForwardTrace {
        h,
        layers: layer_traces,
    })
}

/// Numerically stable logistic function; logits are clamped to +-700 so
/// extreme inner products saturate instead of underflowing to exactly 0.
pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-700.0, 700.0);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Interaction probability: sigmoid of the inner product of two node
/// representations.
pub fn predict(h_u: ArrayView1<f64>, h_v: ArrayView1<f64>) -> f64 {
    sigmoid(h_u.dot(&h_v))
}
