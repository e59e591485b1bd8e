//! Position-free Transformer encoder with reconstruction and downstream heads.
//!
//! ROI rows are the attention tokens. There is no positional signal of any
//! kind, so the encoder is permutation-equivariant: permuting the input rows
//! permutes the per-ROI outputs identically. Each block is post-norm
//! (residual add, then layer norm), attention followed by a feed-forward of
//! hidden width `d_model`. After the final block a `d_model`-unit projection
//! with its own residual+norm produces the attention map, and a linear head
//! maps it to the `d_embed`-dimensional per-ROI embedding.
//!
//! Parameter count is a closed form of the config. With `I = n_heads *
//! floor(d_model / n_heads)`, `d = d_model`, `e = d_embed`, `r =
//! d_recon_hidden`:
//!
//! ```text
//! count = n_blocks * (4*d*I + 3*I + 2*d^2 + 7*d)   // blocks
//!       + d^2 + 3*d                                // projection head
//!       + d*e + e                                  // embedding head
//!       + e*r + r + r*d + d                        // reconstruction MLP
//! ```
//!
//! For the default (3 blocks, 8 heads, d_model 100, d_embed 8,
//! d_recon_hidden 100) this is 200,272 parameters.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, NodeId};
use crate::nn::layout::{ParamBinding, ParamLayout, SegmentKind};

/// Hyper-shape of the encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    pub n_blocks: usize,
    pub n_heads: usize,
    /// Token width; equals the feature count F of the maps being encoded.
    pub d_model: usize,
    pub d_embed: usize,
    pub d_recon_hidden: usize,
    /// Always false: the encoder carries no positional signal.
    pub use_position_encoding: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            n_blocks: 3,
            n_heads: 8,
            d_model: 100,
            d_embed: 8,
            d_recon_hidden: 100,
            use_position_encoding: false,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_blocks < 1
            || self.n_heads < 1
            || self.d_model < 1
            || self.d_embed < 1
            || self.d_recon_hidden < 1
        {
            return Err(Error::InvalidConfig("all dimensions must be >= 1".into()));
        }
        if self.n_heads > self.d_model {
            return Err(Error::InvalidConfig(format!(
                "n_heads ({}) must not exceed d_model ({})",
                self.n_heads, self.d_model
            )));
        }
        if self.use_position_encoding {
            return Err(Error::InvalidConfig(
                "position encoding is not supported by this encoder".into(),
            ));
        }
        Ok(())
    }

    /// Per-head width `floor(d_model / n_heads)`.
    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Total attention width `n_heads * d_head`.
    pub fn d_attn(&self) -> usize {
        self.n_heads * self.d_head()
    }

    /// Layout of the pretraining parameters (blocks, projection, embedding
    /// and reconstruction heads).
    pub fn encoder_layout(&self) -> ParamLayout {
        let mut l = ParamLayout::default();
        self.push_core_segments(&mut l);
        let (d, e, r) = (self.d_model, self.d_embed, self.d_recon_hidden);
        l.push("recon_w1", e, r, SegmentKind::Weight { fan_in: e });
        l.push("recon_b1", 1, r, SegmentKind::Bias);
        l.push("recon_w2", r, d, SegmentKind::Weight { fan_in: r });
        l.push("recon_b2", 1, d, SegmentKind::Bias);
        l
    }

    /// Layout of a fine-tuning model: the shared encoder core plus a fresh
    /// downstream head (the pretext reconstruction head is discarded).
    pub fn model_layout(&self, task: Task) -> ParamLayout {
        let mut l = ParamLayout::default();
        self.push_core_segments(&mut l);
        let (e, r) = (self.d_embed, self.d_recon_hidden);
        let out = match task {
            Task::Classification => 2,
            Task::Regression => 1,
        };
        l.push("head_w1", e, r, SegmentKind::Weight { fan_in: e });
        l.push("head_b1", 1, r, SegmentKind::Bias);
        l.push("head_w2", r, out, SegmentKind::Weight { fan_in: r });
        l.push("head_b2", 1, out, SegmentKind::Bias);
        l
    }

    fn push_core_segments(&self, l: &mut ParamLayout) {
        let d = self.d_model;
        let inner = self.d_attn();
        for b in 0..self.n_blocks {
            for proj in ["wq", "wk", "wv"] {
                l.push(
                    format!("blk{b}_{proj}"),
                    d,
                    inner,
                    SegmentKind::Weight { fan_in: d },
                );
                l.push(format!("blk{b}_{}", proj.replace('w', "b")), 1, inner, SegmentKind::Bias);
            }
            l.push(format!("blk{b}_wo"), inner, d, SegmentKind::Weight { fan_in: inner });
            l.push(format!("blk{b}_bo"), 1, d, SegmentKind::Bias);
            l.push(format!("blk{b}_ln1_g"), 1, d, SegmentKind::LnGain);
            l.push(format!("blk{b}_ln1_b"), 1, d, SegmentKind::LnBias);
            l.push(format!("blk{b}_ffn_w1"), d, d, SegmentKind::Weight { fan_in: d });
            l.push(format!("blk{b}_ffn_b1"), 1, d, SegmentKind::Bias);
            l.push(format!("blk{b}_ffn_w2"), d, d, SegmentKind::Weight { fan_in: d });
            l.push(format!("blk{b}_ffn_b2"), 1, d, SegmentKind::Bias);
            l.push(format!("blk{b}_ln2_g"), 1, d, SegmentKind::LnGain);
            l.push(format!("blk{b}_ln2_b"), 1, d, SegmentKind::LnBias);
        }
        l.push("proj_w", d, d, SegmentKind::Weight { fan_in: d });
        l.push("proj_b", 1, d, SegmentKind::Bias);
        l.push("proj_ln_g", 1, d, SegmentKind::LnGain);
        l.push("proj_ln_b", 1, d, SegmentKind::LnBias);
        l.push("embed_w", d, self.d_embed, SegmentKind::Weight { fan_in: d });
        l.push("embed_b", 1, self.d_embed, SegmentKind::Bias);
    }
}

/// Downstream task for fine-tuning heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Classification,
    Regression,
}

impl Task {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(Task::Classification),
            "regression" => Ok(Task::Regression),
            other => Err(Error::InvalidArgument(format!("unknown task {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::Classification => "classification",
            Task::Regression => "regression",
        }
    }
}

/// Encoder parameters with their config.
#[derive(Debug, Clone)]
pub struct EncoderState {
    pub config: EncoderConfig,
    pub params: Vec<f64>,
}

/// Encoder core plus a downstream head for one task.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub config: EncoderConfig,
    pub task: Task,
    pub params: Vec<f64>,
}

/// Per-ROI embedding of one (masked) feature map.
#[derive(Debug, Clone)]
pub struct ViewEmbedding {
    /// N_roi x d_embed.
    pub per_roi: Array2<f64>,
    /// Unit-norm flattening of `per_roi`, length N_roi * d_embed.
    pub flat_normalized: Vec<f64>,
}

/// Initialize encoder parameters; deterministic under a seeded rng.
pub fn init_encoder<R: Rng>(config: &EncoderConfig, rng: &mut R) -> Result<EncoderState> {
    config.validate()?;
    let params = config.encoder_layout().init_params(rng);
    Ok(EncoderState {
        config: config.clone(),
        params,
    })
}

/// Intermediate node handles of one encoder forward pass.
pub struct EncoderNodes {
    /// Post-projection attention map, N x d_model.
    pub attention_map: NodeId,
    /// N x d_embed embedding.
    pub per_roi: NodeId,
    /// 1 x (N * d_embed) unit-norm flattened embedding.
    pub flat: NodeId,
}

fn check_finite(g: &Graph, id: NodeId, layer: &str) -> Result<()> {
    if g.value(id).iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteActivation {
            layer: layer.to_string(),
        })
    }
}

/// Build the encoder forward graph on top of an input node.
pub fn build_encoder_graph(
    g: &mut Graph,
    binding: &ParamBinding,
    cfg: &EncoderConfig,
    x: NodeId,
) -> Result<EncoderNodes> {
    if g.value(x).ncols() != cfg.d_model {
        return Err(Error::InvalidArgument(format!(
            "input has {} columns, encoder expects d_model {}",
            g.value(x).ncols(),
            cfg.d_model
        )));
    }
    let dh = cfg.d_head();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut h = x;
    for b in 0..cfg.n_blocks {
        let q = {
            let m = g.matmul(h, binding.node(&format!("blk{b}_wq")));
            g.add_row(m, binding.node(&format!("blk{b}_bq")))
        };
        let k = {
            let m = g.matmul(h, binding.node(&format!("blk{b}_wk")));
            g.add_row(m, binding.node(&format!("blk{b}_bk")))
        };
        let v = {
            let m = g.matmul(h, binding.node(&format!("blk{b}_wv")));
            g.add_row(m, binding.node(&format!("blk{b}_bv")))
        };
        let mut heads = Vec::with_capacity(cfg.n_heads);
        for head in 0..cfg.n_heads {
            let qh = g.slice_cols(q, head * dh, dh);
            let kh = g.slice_cols(k, head * dh, dh);
            let vh = g.slice_cols(v, head * dh, dh);
            let kt = g.transpose(kh);
            let scores = g.matmul(qh, kt);
            let scaled = g.scale(scores, scale);
            let attn = g.softmax_rows(scaled);
            heads.push(g.matmul(attn, vh));
        }
        let concat = g.concat_cols(&heads);
        let proj = g.matmul(concat, binding.node(&format!("blk{b}_wo")));
        let attn_out = g.add_row(proj, binding.node(&format!("blk{b}_bo")));
        let res1 = g.add(h, attn_out);
        h = g.layer_norm_rows(
            res1,
            binding.node(&format!("blk{b}_ln1_g")),
            binding.node(&format!("blk{b}_ln1_b")),
        );
        check_finite(g, h, &format!("block {b} attention"))?;
        let ff1 = {
            let m = g.matmul(h, binding.node(&format!("blk{b}_ffn_w1")));
            let m = g.add_row(m, binding.node(&format!("blk{b}_ffn_b1")));
            g.relu(m)
        };
        let ff2 = {
            let m = g.matmul(ff1, binding.node(&format!("blk{b}_ffn_w2")));
            g.add_row(m, binding.node(&format!("blk{b}_ffn_b2")))
        };
        let res2 = g.add(h, ff2);
        h = g.layer_norm_rows(
            res2,
            binding.node(&format!("blk{b}_ln2_g")),
            binding.node(&format!("blk{b}_ln2_b")),
        );
        check_finite(g, h, &format!("block {b} feed-forward"))?;
    }
    // projection head with residual norm connection
    let proj = {
        let m = g.matmul(h, binding.node("proj_w"));
        let m = g.add_row(m, binding.node("proj_b"));
        g.relu(m)
    };
    let res = g.add(h, proj);
    let attention_map = g.layer_norm_rows(res, binding.node("proj_ln_g"), binding.node("proj_ln_b"));
    check_finite(g, attention_map, "projection head")?;
    let per_roi = {
        let m = g.matmul(attention_map, binding.node("embed_w"));
        g.add_row(m, binding.node("embed_b"))
    };
    check_finite(g, per_roi, "embedding head")?;
    let flat = g.l2_normalize_flat(per_roi)?;
    Ok(EncoderNodes {
        attention_map,
        per_roi,
        flat,
    })
}

/// Build the reconstruction MLP graph over a per-ROI embedding node.
pub fn build_recon_graph(g: &mut Graph, binding: &ParamBinding, per_roi: NodeId) -> NodeId {
    let h = {
        let m = g.matmul(per_roi, binding.node("recon_w1"));
        let m = g.add_row(m, binding.node("recon_b1"));
        g.relu(m)
    };
    let m = g.matmul(h, binding.node("recon_w2"));
    g.add_row(m, binding.node("recon_b2"))
}

/// Build the downstream head graph: mean-pool over ROI rows, one hidden
/// layer, then task output (2 logits or 1 scalar).
pub fn build_downstream_graph(g: &mut Graph, binding: &ParamBinding, per_roi: NodeId) -> NodeId {
    let pooled = g.mean_rows(per_roi);
    let h = {
        let m = g.matmul(pooled, binding.node("head_w1"));
        let m = g.add_row(m, binding.node("head_b1"));
        g.relu(m)
    };
    let m = g.matmul(h, binding.node("head_w2"));
    g.add_row(m, binding.node("head_b2"))
}

/// Encode a (masked) feature map into per-ROI embeddings.
pub fn encode(state: &EncoderState, values: &Array2<f64>) -> Result<ViewEmbedding> {
    let layout = state.config.encoder_layout();
    let mut g = Graph::new();
    let binding = ParamBinding::bind(&mut g, &layout, &state.params);
    let x = g.leaf(values.clone());
    let nodes = build_encoder_graph(&mut g, &binding, &state.config, x)?;
    Ok(ViewEmbedding {
        per_roi: g.value(nodes.per_roi).clone(),
        flat_normalized: g.value(nodes.flat).iter().cloned().collect(),
    })
}

/// Reconstruct a feature map from an embedding via the pretext MLP head.
pub fn reconstruct(state: &EncoderState, emb: &ViewEmbedding) -> Result<Array2<f64>> {
    if emb.per_roi.ncols() != state.config.d_embed {
        return Err(Error::InvalidArgument(format!(
            "embedding width {} does not match d_embed {}",
            emb.per_roi.ncols(),
            state.config.d_embed
        )));
    }
    let layout = state.config.encoder_layout();
    let mut g = Graph::new();
    let binding = ParamBinding::bind(&mut g, &layout, &state.params);
    let per_roi = g.leaf(emb.per_roi.clone());
    let out = build_recon_graph(&mut g, &binding, per_roi);
    Ok(g.value(out).clone())
}

/// Attach a fresh downstream head to a pretrained encoder. The encoder core
/// is copied (shared and fine-tunable); the reconstruction head is dropped.
pub fn attach_downstream_head<R: Rng>(
    state: &EncoderState,
    task: Task,
    rng: &mut R,
) -> ModelState {
    let enc_layout = state.config.encoder_layout();
    let model_layout = state.config.model_layout(task);
    let mut params = model_layout.init_params(rng);
    for seg in model_layout.segments() {
        if enc_layout.segment(&seg.name).is_some() {
            let value = enc_layout.extract(&state.params, &seg.name);
            model_layout.write(&mut params, &seg.name, &value);
        }
    }
    ModelState {
        config: state.config.clone(),
        task,
        params,
    }
}

/// Run a fine-tuned model on one unmasked map. Classification returns
/// P(class 1); regression returns the predicted scalar.
pub fn predict(model: &ModelState, values: &Array2<f64>) -> Result<f64> {
    let layout = model.config.model_layout(model.task);
    let mut g = Graph::new();
    let binding = ParamBinding::bind(&mut g, &layout, &model.params);
    let x = g.leaf(values.clone());
    let nodes = build_encoder_graph(&mut g, &binding, &model.config, x)?;
    let out = build_downstream_graph(&mut g, &binding, nodes.per_roi);
    match model.task {
        Task::Classification => {
            let probs = g.softmax_rows(out);
            Ok(g.value(probs)[(0, 1)])
        }
        Task::Regression => Ok(g.value(out)[(0, 0)]),
    }
}

/// Class probabilities for one map (classification models only).
pub fn predict_proba(model: &ModelState, values: &Array2<f64>) -> Result<(f64, f64)> {
    let layout = model.config.model_layout(model.task);
    let mut g = Graph::new();
    let binding = ParamBinding::bind(&mut g, &layout, &model.params);
    let x = g.leaf(values.clone());
    let nodes = build_encoder_graph(&mut g, &binding, &model.config, x)?;
    let out = build_downstream_graph(&mut g, &binding, nodes.per_roi);
    let probs = g.softmax_rows(out);
    Ok((g.value(probs)[(0, 0)], g.value(probs)[(0, 1)]))
}

fn config_lines(cfg: &EncoderConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n_blocks={}", cfg.n_blocks);
    let _ = writeln!(s, "n_heads={}", cfg.n_heads);
    let _ = writeln!(s, "d_model={}", cfg.d_model);
    let _ = writeln!(s, "d_embed={}", cfg.d_embed);
    let _ = writeln!(s, "d_recon_hidden={}", cfg.d_recon_hidden);
    let _ = writeln!(s, "use_position_encoding={}", cfg.use_position_encoding);
    s
}

fn write_params(s: &mut String, params: &[f64]) {
    let _ = writeln!(s, "params={}", params.len());
    for p in params {
        let _ = writeln!(s, "{}", crate::data::format_f64(*p));
    }
}

/// Save an encoder checkpoint (versioned text header + decimal parameters,
/// lossless at 64-bit precision).
pub fn save_encoder(path: impl AsRef<Path>, state: &EncoderState) -> Result<()> {
    let mut s = String::from("radiomic-ssl-checkpoint v1\nkind=encoder\n");
    s.push_str(&config_lines(&state.config));
    write_params(&mut s, &state.params);
    std::fs::write(path.as_ref(), s).map_err(|source| Error::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

/// Save a fine-tuned model checkpoint.
pub fn save_model(path: impl AsRef<Path>, state: &ModelState) -> Result<()> {
    let mut s = String::from("radiomic-ssl-checkpoint v1\nkind=model\n");
    let _ = writeln!(s, "task={}", state.task.name());
    s.push_str(&config_lines(&state.config));
    write_params(&mut s, &state.params);
    std::fs::write(path.as_ref(), s).map_err(|source| Error::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

struct CheckpointText {
    kind: String,
    task: Option<Task>,
    config: EncoderConfig,
    params: Vec<f64>,
}

fn parse_checkpoint(path: &Path) -> Result<CheckpointText> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "radiomic-ssl-checkpoint v1" {
        return Err(Error::Checkpoint(format!(
            "unrecognized header {header:?} in {}",
            path.display()
        )));
    }
    let mut kind = String::new();
    let mut task = None;
    let mut cfg = EncoderConfig::default();
    let mut count = None;
    let mut params = Vec::new();
    for line in lines {
        if let Some((key, value)) = line.split_once('=') {
            match key {
                "kind" => kind = value.to_string(),
                "task" => task = Some(Task::parse(value)?),
                "n_blocks" => cfg.n_blocks = parse_usize(value, path)?,
                "n_heads" => cfg.n_heads = parse_usize(value, path)?,
                "d_model" => cfg.d_model = parse_usize(value, path)?,
                "d_embed" => cfg.d_embed = parse_usize(value, path)?,
                "d_recon_hidden" => cfg.d_recon_hidden = parse_usize(value, path)?,
                "use_position_encoding" => cfg.use_position_encoding = value == "true",
                "params" => count = Some(parse_usize(value, path)?),
                other => {
                    return Err(Error::Checkpoint(format!("unknown key {other:?}")));
                }
            }
        } else if !line.trim().is_empty() {
            let v: f64 = line.trim().parse().map_err(|_| {
                Error::Checkpoint(format!("bad parameter value {line:?}"))
            })?;
            params.push(v);
        }
    }
    let expected = count.ok_or_else(|| Error::Checkpoint("missing params count".into()))?;
    if params.len() != expected {
        return Err(Error::Checkpoint(format!(
            "expected {expected} parameters, found {}",
            params.len()
        )));
    }
    Ok(CheckpointText {
        kind,
        task,
        config: cfg,
        params,
    })
}

fn parse_usize(value: &str, path: &Path) -> Result<usize> {
    value.parse().map_err(|_| {
        Error::Checkpoint(format!("bad integer {value:?} in {}", path.display()))
    })
}

pub fn load_encoder(path: impl AsRef<Path>) -> Result<EncoderState> {
    let ck = parse_checkpoint(path.as_ref())?;
    if ck.kind != "encoder" {
        return Err(Error::Checkpoint(format!(
            "expected encoder checkpoint, found kind {:?}",
            ck.kind
        )));
    }
    let expected = ck.config.encoder_layout().param_count();
    if ck.params.len() != expected {
        return Err(Error::Checkpoint(format!(
            "config implies {expected} parameters, checkpoint has {}",
            ck.params.len()
        )));
    }
    Ok(EncoderState {
        config: ck.config,
        params: ck.params,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelState> {
    let ck = parse_checkpoint(path.as_ref())?;
    if ck.kind != "model" {
        return Err(Error::Checkpoint(format!(
            "expected model checkpoint, found kind {:?}",
            ck.kind
        )));
    }
    let task = ck
        .task
        .ok_or_else(|| Error::Checkpoint("model checkpoint missing task".into()))?;
    let expected = ck.config.model_layout(task).param_count();
    if ck.params.len() != expected {
        return Err(Error::Checkpoint(format!(
            "config implies {expected} parameters, checkpoint has {}",
            ck.params.len()
        )));
    }
    Ok(ModelState {
        config: ck.config,
        task,
        params: ck.params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_config() -> EncoderConfig {
        EncoderConfig {
            n_blocks: 1,
            n_heads: 2,
            d_model: 10,
            d_embed: 4,
            d_recon_hidden: 10,
            use_position_encoding: false,
        }
    }

    #[test]
    fn parameter_count_matches_independent_hand_tally() {
        // independent tally for the default (3 blocks, 8 heads, d_model 100,
        // d_embed 8, d_recon_hidden 100); head width floor(100/8) = 12
        let d = 100usize;
        let inner = 8 * (d / 8); // 96
        let per_block = 3 * (d * inner + inner)  // q, k, v projections + biases
            + inner * d + d                      // output projection + bias
            + 2 * d                              // first add&norm
            + d * d + d + d * d + d              // feed-forward
            + 2 * d;                             // second add&norm
        let projection = d * d + d + 2 * d;
        let embedding = d * 8 + 8;
        let recon = 8 * 100 + 100 + 100 * d + d;
        let expected = 3 * per_block + projection + embedding + recon;
        assert_eq!(expected, 200_272);
        let cfg = EncoderConfig::default();
        assert_eq!(cfg.encoder_layout().param_count(), expected);
    }

    #[test]
    fn init_is_deterministic_under_seed() {
        let cfg = toy_config();
        let a = init_encoder(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = init_encoder(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a.params, b.params);
        let c = init_encoder(&cfg, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = toy_config();
        cfg.d_embed = 0;
        assert!(init_encoder(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        let mut cfg = toy_config();
        cfg.n_heads = 11; // more heads than d_model columns
        assert!(init_encoder(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        let mut cfg = toy_config();
        cfg.use_position_encoding = true;
        assert!(init_encoder(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn default_config_encodes_full_size_maps() {
        let cfg = EncoderConfig::default();
        let state = init_encoder(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let x = Array2::from_shape_fn((87, 100), |(r, c)| ((r * 100 + c) as f64).sin());
        let emb = encode(&state, &x).unwrap();
        assert_eq!(emb.per_roi.dim(), (87, 8));
        assert_eq!(emb.flat_normalized.len(), 696);
        let norm: f64 = emb.flat_normalized.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn non_finite_activations_name_the_layer() {
        let cfg = toy_config();
        let mut state = init_encoder(&cfg, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        state.params[0] = f64::NAN;
        let x = Array2::from_elem((4, 10), 0.5);
        match encode(&state, &x) {
            Err(Error::NonFiniteActivation { layer }) => {
                assert!(layer.contains("block 0"), "unexpected layer {layer}");
            }
            other => panic!("expected a non-finite activation error, got {other:?}"),
        }
    }

    #[test]
    fn encode_rejects_column_mismatch() {
        let cfg = toy_config();
        let state = init_encoder(&cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let x = Array2::zeros((4, 7));
        assert!(encode(&state, &x).is_err());
    }

    // -- straight-line oracle for a 2-token forward pass -------------------

    fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (n, k, m) = (a.len(), b.len(), b[0].len());
        let mut out = vec![vec![0.0; m]; n];
        for i in 0..n {
            for j in 0..m {
                for l in 0..k {
                    out[i][j] += a[i][l] * b[l][j];
                }
            }
        }
        out
    }

    fn layer_norm_row(row: &mut [f64]) {
        let d = row.len() as f64;
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let inv = 1.0 / (var + 1e-5).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * inv;
        }
    }

    #[test]
    fn two_token_forward_matches_straight_line_oracle() {
        // 1 block, 1 head, d_model 2: every intermediate is evaluated by an
        // independent straight-line pass over plain nested vectors
        let cfg = EncoderConfig {
            n_blocks: 1,
            n_heads: 1,
            d_model: 2,
            d_embed: 1,
            d_recon_hidden: 2,
            use_position_encoding: false,
        };
        let layout = cfg.encoder_layout();
        let mut params = vec![0.0; layout.param_count()];
        let wq = array![[0.10, 0.00], [0.00, 0.10]];
        let wk = array![[0.20, 0.00], [0.00, 0.20]];
        let wv = array![[0.30, 0.10], [0.00, 0.20]];
        let bv = array![[0.05, -0.05]];
        let wo = array![[1.0, 0.0], [0.0, 1.0]];
        let ffn_w1 = array![[0.5, -0.2], [0.1, 0.4]];
        let ffn_b1 = array![[0.01, 0.02]];
        let ffn_w2 = array![[0.2, 0.0], [0.0, 0.2]];
        let proj_w = array![[0.1, 0.2], [0.3, -0.1]];
        let embed_w = array![[0.7], [-0.4]];
        let embed_b = array![[0.1]];
        layout.write(&mut params, "blk0_wq", &wq);
        layout.write(&mut params, "blk0_wk", &wk);
        layout.write(&mut params, "blk0_wv", &wv);
        layout.write(&mut params, "blk0_bv", &bv);
        layout.write(&mut params, "blk0_wo", &wo);
        layout.write(&mut params, "blk0_ln1_g", &array![[1.0, 1.0]]);
        layout.write(&mut params, "blk0_ln2_g", &array![[1.0, 1.0]]);
        layout.write(&mut params, "blk0_ffn_w1", &ffn_w1);
        layout.write(&mut params, "blk0_ffn_b1", &ffn_b1);
        layout.write(&mut params, "blk0_ffn_w2", &ffn_w2);
        layout.write(&mut params, "proj_w", &proj_w);
        layout.write(&mut params, "proj_ln_g", &array![[1.0, 1.0]]);
        layout.write(&mut params, "embed_w", &embed_w);
        layout.write(&mut params, "embed_b", &embed_b);
        let state = EncoderState {
            config: cfg.clone(),
            params,
        };

        let x = vec![vec![1.0, 2.0], vec![-1.0, 0.5]];

        // oracle: attention
        let to_vecs = |m: &Array2<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect()
        };
        let q = matmul(&x, &to_vecs(&wq));
        let k = matmul(&x, &to_vecs(&wk));
        let mut v = matmul(&x, &to_vecs(&wv));
        for row in &mut v {
            row[0] += 0.05;
            row[1] -= 0.05;
        }
        let scale = 1.0 / (2.0f64).sqrt();
        let mut attn_out = vec![vec![0.0; 2]; 2];
        for i in 0..2 {
            let s0 = (q[i][0] * k[0][0] + q[i][1] * k[0][1]) * scale;
            let s1 = (q[i][0] * k[1][0] + q[i][1] * k[1][1]) * scale;
            let m = s0.max(s1);
            let (e0, e1) = ((s0 - m).exp(), (s1 - m).exp());
            let z = e0 + e1;
            let (a0, a1) = (e0 / z, e1 / z);
            for c in 0..2 {
                attn_out[i][c] = a0 * v[0][c] + a1 * v[1][c];
            }
        }
        // wo is the identity, bo zero: attention output passes through
        let mut h = vec![vec![0.0; 2]; 2];
        for i in 0..2 {
            for c in 0..2 {
                h[i][c] = x[i][c] + attn_out[i][c];
            }
            layer_norm_row(&mut h[i]);
        }
        // feed-forward with relu, residual, norm
        let mut ff = matmul(&h, &to_vecs(&ffn_w1));
        for row in &mut ff {
            row[0] = (row[0] + 0.01).max(0.0);
            row[1] = (row[1] + 0.02).max(0.0);
        }
        let ff2 = matmul(&ff, &to_vecs(&ffn_w2));
        for i in 0..2 {
            for c in 0..2 {
                h[i][c] += ff2[i][c];
            }
            layer_norm_row(&mut h[i]);
        }
        // projection head: relu, residual, norm
        let proj = matmul(&h, &to_vecs(&proj_w));
        for i in 0..2 {
            for c in 0..2 {
                h[i][c] += proj[i][c].max(0.0);
            }
            layer_norm_row(&mut h[i]);
        }
        // embedding head
        let expected: Vec<f64> = (0..2)
            .map(|i| h[i][0] * 0.7 + h[i][1] * (-0.4) + 0.1)
            .collect();

        let input = array![[1.0, 2.0], [-1.0, 0.5]];
        let emb = encode(&state, &input).unwrap();
        #[allow(clippy::needless_range_loop)]
        for i in 0..2 {
            assert!(
                (emb.per_roi[(i, 0)] - expected[i]).abs() < 1e-12,
                "token {i}: {} vs {}",
                emb.per_roi[(i, 0)],
                expected[i]
            );
        }
    }

    #[test]
    fn permutation_equivariance_and_invariant_pooling() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for trial in 0..5 {
            let cfg = EncoderConfig {
                n_blocks: 1 + trial % 2,
                n_heads: 2,
                d_model: 8,
                d_embed: 3,
                d_recon_hidden: 6,
                use_position_encoding: false,
            };
            let state = init_encoder(&cfg, &mut rng).unwrap();
            let n = 6;
            let x = Array2::from_shape_fn((n, 8), |_| rng.random_range(-1.0..1.0));
            let mut perm: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            perm.shuffle(&mut rng);
            let permuted = Array2::from_shape_fn((n, 8), |(r, c)| x[(perm[r], c)]);
            let e1 = encode(&state, &x).unwrap();
            let e2 = encode(&state, &permuted).unwrap();
            let mut pooled1 = [0.0; 3];
            let mut pooled2 = [0.0; 3];
            #[allow(clippy::needless_range_loop)]
            for r in 0..n {
                for c in 0..3 {
                    assert!(
                        (e2.per_roi[(r, c)] - e1.per_roi[(perm[r], c)]).abs() <= 1e-5,
                        "row {r} col {c}"
                    );
                    pooled1[c] += e1.per_roi[(r, c)] / n as f64;
                    pooled2[c] += e2.per_roi[(r, c)] / n as f64;
                }
            }
            for c in 0..3 {
                assert!((pooled1[c] - pooled2[c]).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let cfg = toy_config();
        let state = init_encoder(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let x = Array2::from_shape_fn((5, 10), |(r, c)| (r as f64 - c as f64) * 0.1);
        let a = encode(&state, &x).unwrap();
        let b = encode(&state, &x).unwrap();
        assert_eq!(a.per_roi, b.per_roi);
    }

    #[test]
    fn reconstruct_shapes_and_zero_head() {
        let cfg = toy_config();
        let mut state = init_encoder(&cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let x = Array2::from_shape_fn((6, 10), |(r, c)| ((r + c) as f64).cos());
        let emb = encode(&state, &x).unwrap();
        let recon = reconstruct(&state, &emb).unwrap();
        assert_eq!(recon.dim(), (6, 10));
        // zero reconstruction head (linear layers, zero bias) -> all-zero output
        let layout = cfg.encoder_layout();
        for seg in ["recon_w1", "recon_b1", "recon_w2", "recon_b2"] {
            let s = layout.segment(seg).unwrap();
            let zeros = Array2::zeros((s.rows, s.cols));
            layout.write(&mut state.params, seg, &zeros);
        }
        let recon = reconstruct(&state, &emb).unwrap();
        assert!(recon.iter().all(|&v| v == 0.0));
        // embedding width mismatch is rejected
        let bad = ViewEmbedding {
            per_roi: Array2::zeros((6, 7)),
            flat_normalized: vec![0.0; 42],
        };
        assert!(reconstruct(&state, &bad).is_err());
    }

    #[test]
    fn reconstruct_gradient_matches_finite_differences() {
        let cfg = toy_config();
        let state = init_encoder(&cfg, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let x = Array2::from_shape_fn((4, 10), |(r, c)| ((r * 10 + c) as f64 * 0.37).sin());
        let layout = cfg.encoder_layout();

        let forward = |params: &[f64]| -> f64 {
            let mut g = Graph::new();
            let binding = ParamBinding::bind(&mut g, &layout, params);
            let input = g.leaf(x.clone());
            let nodes = build_encoder_graph(&mut g, &binding, &cfg, input).unwrap();
            let recon = build_recon_graph(&mut g, &binding, nodes.per_roi);
            let s = g.sum_all(recon);
            g.scalar(s)
        };

        let mut g = Graph::new();
        let binding = ParamBinding::bind(&mut g, &layout, &state.params);
        let input = g.leaf(x.clone());
        let nodes = build_encoder_graph(&mut g, &binding, &cfg, input).unwrap();
        let recon = build_recon_graph(&mut g, &binding, nodes.per_roi);
        let s = g.sum_all(recon);
        let grads = g.backward(s);
        let flat = binding.flat_grad(&layout, &grads);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut probe = state.params.clone();
        let h = 1e-5;
        for _ in 0..40 {
            let i = rng.random_range(0..probe.len());
            let orig = probe[i];
            probe[i] = orig + h;
            let up = forward(&probe);
            probe[i] = orig - h;
            let down = forward(&probe);
            probe[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let ad = flat[i];
            assert!(
                (ad - fd).abs() <= 1e-4 * ad.abs().max(fd.abs()) + 1e-8,
                "param {i}: ad {ad} vs fd {fd}"
            );
        }
    }

    #[test]
    fn downstream_head_probabilities_sum_to_one() {
        let cfg = toy_config();
        let state = init_encoder(&cfg, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = attach_downstream_head(&state, Task::Classification, &mut rng);
        for trial in 0..5 {
            let x = Array2::from_shape_fn((5, 10), |(r, c)| {
                ((r * 31 + c * 7 + trial) as f64 * 0.11).sin()
            });
            let (p0, p1) = predict_proba(&model, &x).unwrap();
            assert!((p0 + p1 - 1.0).abs() <= 1e-9);
        }
        let reg = attach_downstream_head(&state, Task::Regression, &mut rng);
        let x = Array2::from_shape_fn((5, 10), |(r, c)| (r as f64 - c as f64) * 0.2);
        let y = predict(&reg, &x).unwrap();
        assert!(y.is_finite());
    }

    #[test]
    fn downstream_head_copies_encoder_core() {
        let cfg = toy_config();
        let state = init_encoder(&cfg, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let model = attach_downstream_head(&state, Task::Classification, &mut rng);
        let enc_layout = cfg.encoder_layout();
        let model_layout = cfg.model_layout(Task::Classification);
        for seg in ["blk0_wq", "proj_w", "embed_w"] {
            assert_eq!(
                enc_layout.extract(&state.params, seg),
                model_layout.extract(&model.params, seg)
            );
        }
        // pretext reconstruction head is gone from the fine-tuning layout
        assert!(model_layout.segment("recon_w1").is_none());
        assert!(model_layout.segment("head_w1").is_some());
    }

    #[test]
    fn checkpoints_round_trip_losslessly() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = toy_config();
        let state = init_encoder(&cfg, &mut ChaCha8Rng::seed_from_u64(14)).unwrap();
        let path = dir.path().join("enc.ckpt");
        save_encoder(&path, &state).unwrap();
        let loaded = load_encoder(&path).unwrap();
        assert_eq!(loaded.config, state.config);
        assert_eq!(loaded.params.len(), state.params.len());
        for (a, b) in state.params.iter().zip(&loaded.params) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let model = attach_downstream_head(&state, Task::Regression, &mut rng);
        let mpath = dir.path().join("model.ckpt");
        save_model(&mpath, &model).unwrap();
        let mloaded = load_model(&mpath).unwrap();
        assert_eq!(mloaded.task, Task::Regression);
        for (a, b) in model.params.iter().zip(&mloaded.params) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // kind confusion is rejected
        assert!(load_model(&path).is_err());
        assert!(load_encoder(&mpath).is_err());
    }
}
