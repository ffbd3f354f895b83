//! The multi-modal network: visual extractors, text encoder, fused classifier.

mod checkpoint;
mod text;
mod visual;

#[cfg(test)]
mod tests;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use text::TextTrace;
pub use visual::VisualTrace;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{NodeId, Tape, Tensor};
use crate::raster::GrayRaster;
use crate::textvariants::VariantKind;
use crate::tokenizer::TokenSequence;
use crate::{Error, Result};

/// Which modalities feed the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    ImageOnly,
    TextOnly,
    MultiModal,
}

impl Modality {
    pub fn as_str(&self) -> &'static str {
        match self {
            Modality::ImageOnly => "image",
            Modality::TextOnly => "text",
            Modality::MultiModal => "multi",
        }
    }

    pub fn parse(s: &str) -> Result<Modality> {
        match s.to_ascii_lowercase().as_str() {
            "image" | "image-only" => Ok(Modality::ImageOnly),
            "text" | "text-only" => Ok(Modality::TextOnly),
            "multi" | "multi-modal" | "multimodal" => Ok(Modality::MultiModal),
            other => Err(Error::Config(format!("unknown modality '{other}'"))),
        }
    }

    pub fn uses_image(&self) -> bool {
        matches!(self, Modality::ImageOnly | Modality::MultiModal)
    }

    pub fn uses_text(&self) -> bool {
        matches!(self, Modality::TextOnly | Modality::MultiModal)
    }
}

/// The seven visual feature extractors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisualExtractorKind {
    #[serde(rename = "residual")]
    ResidualCnn,
    #[serde(rename = "plain")]
    PlainCnn,
    #[serde(rename = "branch")]
    BranchCnn,
    Style,
    Content,
    #[serde(rename = "stylecontent")]
    StyleContent,
    #[serde(rename = "imagestructure")]
    ImageStructure,
}

/// Channel width of the style tap (stage-2 conv of the plain trunk).
pub const STYLE_CHANNELS: usize = 32;
/// Output width of the content head's final fully connected layer.
pub const CONTENT_FEATURES: usize = 256;

impl VisualExtractorKind {
    pub const ALL: [VisualExtractorKind; 7] = [
        VisualExtractorKind::ResidualCnn,
        VisualExtractorKind::PlainCnn,
        VisualExtractorKind::BranchCnn,
        VisualExtractorKind::Style,
        VisualExtractorKind::Content,
        VisualExtractorKind::StyleContent,
        VisualExtractorKind::ImageStructure,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            VisualExtractorKind::ResidualCnn => "residual",
            VisualExtractorKind::PlainCnn => "plain",
            VisualExtractorKind::BranchCnn => "branch",
            VisualExtractorKind::Style => "style",
            VisualExtractorKind::Content => "content",
            VisualExtractorKind::StyleContent => "stylecontent",
            VisualExtractorKind::ImageStructure => "imagestructure",
        }
    }

    pub fn parse(s: &str) -> Result<VisualExtractorKind> {
        match s.to_ascii_lowercase().as_str() {
            "residual" => Ok(VisualExtractorKind::ResidualCnn),
            "plain" => Ok(VisualExtractorKind::PlainCnn),
            "branch" => Ok(VisualExtractorKind::BranchCnn),
            "style" => Ok(VisualExtractorKind::Style),
            "content" => Ok(VisualExtractorKind::Content),
            "stylecontent" | "style-content" => Ok(VisualExtractorKind::StyleContent),
            "imagestructure" | "image-structure" => Ok(VisualExtractorKind::ImageStructure),
            other => Err(Error::Config(format!("unknown visual extractor '{other}'"))),
        }
    }

    /// Fixed length of R_V for this extractor.
    pub fn feature_len(&self) -> usize {
        match self {
            VisualExtractorKind::ResidualCnn
            | VisualExtractorKind::PlainCnn
            | VisualExtractorKind::BranchCnn
            | VisualExtractorKind::ImageStructure => 64,
            VisualExtractorKind::Style => STYLE_CHANNELS * (STYLE_CHANNELS + 1) / 2,
            VisualExtractorKind::Content => CONTENT_FEATURES,
            VisualExtractorKind::StyleContent => {
                STYLE_CHANNELS * (STYLE_CHANNELS + 1) / 2 + CONTENT_FEATURES
            }
        }
    }

    /// Smallest input size the extractor's pooling structure supports.
    pub fn min_image_size(&self) -> usize {
        match self {
            VisualExtractorKind::PlainCnn => 16,
            VisualExtractorKind::Style => 2,
            VisualExtractorKind::ResidualCnn
            | VisualExtractorKind::BranchCnn
            | VisualExtractorKind::Content
            | VisualExtractorKind::StyleContent
            | VisualExtractorKind::ImageStructure => 4,
        }
    }

    pub fn needs_structure_map(&self) -> bool {
        matches!(self, VisualExtractorKind::ImageStructure)
    }
}

/// Transformer text-encoder configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextEncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    /// Fixed token-sequence length.
    pub n: usize,
    pub vocab_size: usize,
}

impl Default for TextEncoderConfig {
    fn default() -> Self {
        TextEncoderConfig { layers: 2, heads: 4, d_model: 64, n: 48, vocab_size: 1000 }
    }
}

/// Architecture of one experiment's network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub modality: Modality,
    pub visual: Option<VisualExtractorKind>,
    pub text: Option<TextEncoderConfig>,
    /// Square input size the image is resized to.
    pub image_size: usize,
    /// Text view the model consumes.
    pub variant: VariantKind,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self.modality {
            Modality::ImageOnly => {
                if self.visual.is_none() || self.text.is_some() {
                    return Err(Error::Config(
                        "image-only models need a visual extractor and no text encoder".into(),
                    ));
                }
            }
            Modality::TextOnly => {
                if self.visual.is_some() || self.text.is_none() {
                    return Err(Error::Config(
                        "text-only models need a text encoder and no visual extractor".into(),
                    ));
                }
            }
            Modality::MultiModal => {
                if self.visual.is_none() || self.text.is_none() {
                    return Err(Error::Config(
                        "multi-modal models need both a visual extractor and a text encoder"
                            .into(),
                    ));
                }
            }
        }
        if let Some(kind) = self.visual {
            let min = kind.min_image_size();
            if self.image_size < min {
                return Err(Error::Config(format!(
                    "{} needs image size >= {min}, got {}",
                    kind.as_str(),
                    self.image_size
                )));
            }
        }
        if let Some(t) = &self.text {
            if t.layers == 0 || t.heads == 0 || t.d_model == 0 {
                return Err(Error::Config("text encoder dimensions must be positive".into()));
            }
            if t.d_model % t.heads != 0 {
                return Err(Error::Config(format!(
                    "model width {} is not divisible by {} heads",
                    t.d_model, t.heads
                )));
            }
            if t.n < 3 {
                return Err(Error::Config(format!(
                    "sequence length {} cannot hold [CLS] and [SEP]",
                    t.n
                )));
            }
            if t.vocab_size <= 4 {
                return Err(Error::Config("vocabulary too small for a text encoder".into()));
            }
        }
        Ok(())
    }

    /// Width of R_I: the concatenated representation entering the classifier.
    pub fn fusion_width(&self) -> usize {
        let v = self.visual.map(|k| k.feature_len()).unwrap_or(0);
        let t = self.text.as_ref().map(|t| t.d_model).unwrap_or(0);
        match self.modality {
            Modality::ImageOnly => v,
            Modality::TextOnly => t,
            Modality::MultiModal => v + t,
        }
    }
}

// ── Parameters ──────────────────────────────────────────────────────────

/// Named parameter tensors in a stable (sorted) order.
#[derive(Debug, Clone, Default)]
pub struct Params {
    map: BTreeMap<String, Tensor>,
}

impl Params {
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.map.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.map
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter '{name}'")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.map
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("missing parameter '{name}'")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.map.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.map.values().map(|t| t.numel()).sum()
    }
}

/// Glorot-uniform initialization: ±√(6 / (fan_in + fan_out)).
fn glorot<R: Rng>(rng: &mut R, shape: Vec<usize>, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data = (0..numel).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * bound).collect();
    Tensor::new(shape, data).expect("static shapes")
}

struct ParamBuilder<'r, R: Rng> {
    params: Params,
    rng: &'r mut R,
}

impl<'r, R: Rng> ParamBuilder<'r, R> {
    fn conv(&mut self, name: &str, out_ch: usize, in_ch: usize, kh: usize, kw: usize) {
        let w = glorot(
            self.rng,
            vec![out_ch, in_ch, kh, kw],
            in_ch * kh * kw,
            out_ch * kh * kw,
        );
        self.params.insert(format!("{name}.w"), w);
        self.params.insert(format!("{name}.b"), Tensor::zeros(vec![out_ch]));
    }

    /// Linear layer applied as `x[·×in] · w[in×out]`.
    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) {
        let w = glorot(self.rng, vec![fan_in, fan_out], fan_in, fan_out);
        self.params.insert(format!("{name}.w"), w);
        self.params.insert(format!("{name}.b"), Tensor::zeros(vec![fan_out]));
    }

    /// Linear layer applied as `w[out×in] · v[in]`.
    fn linear_vec(&mut self, name: &str, fan_in: usize, fan_out: usize) {
        let w = glorot(self.rng, vec![fan_out, fan_in], fan_in, fan_out);
        self.params.insert(format!("{name}.w"), w);
        self.params.insert(format!("{name}.b"), Tensor::zeros(vec![fan_out]));
    }

    fn layer_norm(&mut self, name: &str, d: usize) {
        self.params.insert(format!("{name}.g"), Tensor::new(vec![d], vec![1.0; d]).unwrap());
        self.params.insert(format!("{name}.b"), Tensor::zeros(vec![d]));
    }

    fn embedding(&mut self, name: &str, rows: usize, d: usize) {
        let t = glorot(self.rng, vec![rows, d], d, d);
        self.params.insert(name.to_string(), t);
    }
}

// ── The model ───────────────────────────────────────────────────────────

/// One sample's model-ready inputs.
#[derive(Debug, Clone, Default)]
pub struct SampleInput {
    /// [3×S×S] image tensor.
    pub image: Option<Tensor>,
    /// [1×S×S] text-probability map; required by the image-structure extractor.
    pub structure_map: Option<Tensor>,
    pub tokens: Option<TokenSequence>,
}

/// Node ids of every parameter leafed onto a tape (one bind per batch).
pub struct BoundParams {
    nodes: BTreeMap<String, NodeId>,
}

impl BoundParams {
    pub fn node(&self, name: &str) -> Result<NodeId> {
        self.nodes
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("parameter '{name}' not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &NodeId)> {
        self.nodes.iter()
    }
}

/// Everything the callers need from one forward pass.
#[derive(Debug)]
pub struct ForwardTrace {
    /// Pre-softmax class scores, shape [2].
    pub logits: NodeId,
    /// softmax(logits); index 1 is the sponsored-class score.
    pub probs: NodeId,
    pub rv: Option<NodeId>,
    pub rt: Option<NodeId>,
    /// Designated conv activation map for Grad-CAM, with its shape.
    pub cam: Option<(NodeId, [usize; 3])>,
    /// Per-layer attention weights, each [heads×n×n].
    pub attention: Vec<Tensor>,
}

/// A model specification with its parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: Params,
}

impl Model {
    /// Fresh Glorot-initialized parameters, deterministic in `seed`.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Model> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = ParamBuilder { params: Params::default(), rng: &mut rng };
        if let Some(kind) = spec.visual {
            visual::init_params(&mut b, kind, spec.image_size);
        }
        if let Some(cfg) = &spec.text {
            text::init_params(&mut b, cfg);
        }
        b.linear_vec("clf", spec.fusion_width(), 2);
        Ok(Model { spec, params: b.params })
    }

    /// Leaf every parameter onto the tape; call once per tape.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let mut nodes = BTreeMap::new();
        for (name, tensor) in self.params.iter() {
            nodes.insert(name.clone(), tape.leaf(tensor));
        }
        BoundParams { nodes }
    }

    /// Forward one sample on an already-bound tape.
    pub fn forward_on<R: Rng>(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        input: &SampleInput,
        training: bool,
        dropout: f64,
        rng: &mut R,
    ) -> Result<ForwardTrace> {
        let mut rv = None;
        let mut cam = None;
        let mut rt = None;
        let mut attention = Vec::new();

        if self.spec.modality.uses_image() {
            let kind = self.spec.visual.expect("validated spec");
            let trace = visual::visual_forward(tape, bound, kind, self.spec.image_size, input)?;
            rv = Some(trace.rv);
            cam = trace.cam;
        }
        if self.spec.modality.uses_text() {
            let cfg = self.spec.text.as_ref().expect("validated spec");
            let tokens = input
                .tokens
                .as_ref()
                .ok_or_else(|| Error::Input("sample lacks text for a text model".into()))?;
            let trace = text::text_forward(tape, bound, cfg, tokens, training, dropout, rng)?;
            rt = Some(trace.rt);
            attention = trace.attention;
        }

        let (logits, probs) = fuse_and_classify(tape, bound, &self.spec, rv, rt)?;
        Ok(ForwardTrace { logits, probs, rv, rt, cam, attention })
    }

    /// Convenience single-sample forward on a fresh tape.
    pub fn forward<R: Rng>(
        &self,
        tape: &mut Tape,
        input: &SampleInput,
        training: bool,
        dropout: f64,
        rng: &mut R,
    ) -> Result<ForwardTrace> {
        let bound = self.bind(tape);
        self.forward_on(tape, &bound, input, training, dropout, rng)
    }

    /// Sponsored-class probability of one sample, inference mode.
    pub fn score(&self, input: &SampleInput) -> Result<f64> {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = self.forward(&mut tape, input, false, 0.0, &mut rng)?;
        Ok(tape.data(trace.probs)[1])
    }

    /// Per-layer attention weights of the text encoder alone (inference).
    pub fn text_attention(&self, tokens: &TokenSequence) -> Result<Vec<Tensor>> {
        let cfg = self
            .spec
            .text
            .as_ref()
            .ok_or_else(|| Error::Explanation("this model has no text encoder".into()))?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = text::text_forward(&mut tape, &bound, cfg, tokens, false, 0.0, &mut rng)?;
        Ok(trace.attention)
    }
}

/// R_I = concatenation of the present representations; p = softmax(W_c·R_I + b_c).
pub fn fuse_and_classify(
    tape: &mut Tape,
    bound: &BoundParams,
    spec: &ModelSpec,
    rv: Option<NodeId>,
    rt: Option<NodeId>,
) -> Result<(NodeId, NodeId)> {
    let mut parts = Vec::new();
    if spec.modality.uses_image() {
        parts.push(rv.ok_or_else(|| Error::Input("visual representation missing".into()))?);
    }
    if spec.modality.uses_text() {
        parts.push(rt.ok_or_else(|| Error::Input("textual representation missing".into()))?);
    }
    let ri = if parts.len() == 1 { parts[0] } else { tape.concat_vec(&parts)? };

    let w = bound.node("clf.w")?;
    let b = bound.node("clf.b")?;
    let width = tape.shape(ri)[0];
    if tape.shape(w) != [2, width] {
        return Err(Error::Config(format!(
            "classifier expects width {}, representation has {width}",
            tape.shape(w)[1]
        )));
    }
    let wx = tape.matvec(w, ri)?;
    let logits = tape.add(wx, b)?;
    let probs = tape.softmax(logits);
    Ok((logits, probs))
}

/// Cross-entropy −log p[label] of an already-normalized distribution.
/// Training uses the logits-based tape op instead.
pub fn cross_entropy(p: &[f64], label: usize) -> f64 {
    -p[label].ln()
}

// ── Text probability map ────────────────────────────────────────────────

/// Pixel-level text-likelihood map provider.
pub trait TextMapProvider {
    fn text_probability_map(&self, image: &GrayRaster) -> Result<GrayRaster>;
}

/// Deterministic default: horizontal-gradient magnitude box-filtered over
/// 9×9 windows, clamped to [0, 1].
pub struct HorizontalEdgeProvider;

impl TextMapProvider for HorizontalEdgeProvider {
    fn text_probability_map(&self, image: &GrayRaster) -> Result<GrayRaster> {
        Ok(default_text_probability_map(image))
    }
}

pub fn default_text_probability_map(image: &GrayRaster) -> GrayRaster {
    let (w, h) = (image.width(), image.height());
    let mut grad = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let left = image.get(r, c.saturating_sub(1));
            let right = image.get(r, (c + 1).min(w - 1));
            grad[r * w + c] = (right - left).abs();
        }
    }
    let mut out = vec![0.0; w * h];
    let radius = 4isize;
    for r in 0..h as isize {
        for c in 0..w as isize {
            let mut total = 0.0;
            let mut n = 0usize;
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    let (y, x) = (r + dy, c + dx);
                    if y >= 0 && y < h as isize && x >= 0 && x < w as isize {
                        total += grad[y as usize * w + x as usize];
                        n += 1;
                    }
                }
            }
            out[(r * w as isize + c) as usize] = (total / n as f64).clamp(0.0, 1.0);
        }
    }
    GrayRaster::new(w, h, out).expect("same dimensions as input")
}

/// Build the [1×S×S] structure-map tensor for an image tensor, checking the
/// provider contract (same shape, values in [0, 1]).
pub fn structure_map_tensor(image: &Tensor, provider: &dyn TextMapProvider) -> Result<Tensor> {
    let shape = image.shape().to_vec();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(Error::Shape(format!("expected [3×S×S] image, got {shape:?}")));
    }
    let (h, w) = (shape[1], shape[2]);
    let hw = h * w;
    let gray: Vec<f64> = (0..hw)
        .map(|i| (image.data()[i] + image.data()[hw + i] + image.data()[2 * hw + i]) / 3.0)
        .collect();
    let raster = GrayRaster::new(w, h, gray)?;
    let map = provider.text_probability_map(&raster)?;
    if map.width() != w || map.height() != h {
        return Err(Error::Config(format!(
            "text-map provider changed the raster size: {w}×{h} -> {}×{}",
            map.width(),
            map.height()
        )));
    }
    if map.pixels().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Config("text-map provider produced values outside [0, 1]".into()));
    }
    Tensor::new(vec![1, h, w], map.pixels().to_vec())
}
