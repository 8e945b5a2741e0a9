//! The 16 fusion architectures: four fusion strategies crossed with four
//! base models, plus the shared classification head.
//!
//! Groups 1–2 route each numeric channel through its own Network A;
//! groups 3–4 concatenate the numeric channels up front (early fusion)
//! into a single Network A. Groups 1 and 3 fuse by concatenating pooled
//! feature vectors; groups 2 and 4 fuse the pre-pooling sequence outputs
//! through cross-attention and pool afterwards. Network B handles the
//! text channel. A flatten → dense → dropout → dense head produces the
//! class logits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Channel, Sample, PAD_ID};
use crate::layers::{
    AttentionHead, Conv1dLayer, CrossAttention, CrossAttentionForm, DenseLayer, GruLayer,
    LayerError, LstmLayer, TextEncoder,
};
use crate::tensor::{concat, embedding_lookup, Activation, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error("build error: {0}")]
    Build(String),
    #[error("channel {channel} expects width {expected}, got {got}")]
    ChannelWidth {
        channel: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("token sequence length {got} does not match the configured max_len {expected}")]
    TokenLength { expected: usize, got: usize },
    #[error("a model needs at least one input channel")]
    EmptyChannels,
}

/// Base model family, selecting the Network A/B stacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseModel {
    Cnn,
    Lstm,
    Gru,
    Att,
}

impl BaseModel {
    pub const ALL: [BaseModel; 4] = [BaseModel::Cnn, BaseModel::Lstm, BaseModel::Gru, BaseModel::Att];

    pub fn as_str(&self) -> &'static str {
        match self {
            BaseModel::Cnn => "cnn",
            BaseModel::Lstm => "lstm",
            BaseModel::Gru => "gru",
            BaseModel::Att => "att",
        }
    }
}

impl std::str::FromStr for BaseModel {
    type Err = String;

    fn from_str(s: &str) -> Result<BaseModel, String> {
        match s {
            "cnn" => Ok(BaseModel::Cnn),
            "lstm" => Ok(BaseModel::Lstm),
            "gru" => Ok(BaseModel::Gru),
            "att" | "attention" => Ok(BaseModel::Att),
            other => Err(format!("unknown base model {other:?}")),
        }
    }
}

/// Fusion strategy group.
///
/// 1: per-channel networks, concatenation. 2: per-channel networks,
/// cross-attention. 3: early numeric fusion, concatenation. 4: early
/// numeric fusion, cross-attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum FusionGroup {
    G1,
    G2,
    G3,
    G4,
}

impl FusionGroup {
    pub const ALL: [FusionGroup; 4] = [
        FusionGroup::G1,
        FusionGroup::G2,
        FusionGroup::G3,
        FusionGroup::G4,
    ];

    pub fn number(&self) -> u8 {
        *self as u8 + 1
    }

    /// Groups 3–4 concatenate the numeric channels before Network A.
    pub fn early_fusion(&self) -> bool {
        matches!(self, FusionGroup::G3 | FusionGroup::G4)
    }

    /// Groups 2 and 4 fuse modalities through cross-attention.
    pub fn cross_attention(&self) -> bool {
        matches!(self, FusionGroup::G2 | FusionGroup::G4)
    }
}

impl TryFrom<u8> for FusionGroup {
    type Error = String;

    fn try_from(v: u8) -> Result<FusionGroup, String> {
        match v {
            1 => Ok(FusionGroup::G1),
            2 => Ok(FusionGroup::G2),
            3 => Ok(FusionGroup::G3),
            4 => Ok(FusionGroup::G4),
            other => Err(format!("fusion group {other} outside 1..=4")),
        }
    }
}

impl From<FusionGroup> for u8 {
    fn from(g: FusionGroup) -> u8 {
        g.number()
    }
}

fn default_num_classes() -> usize {
    crate::data::NUM_CLASSES
}
fn default_filters() -> usize {
    64
}
fn default_kernel() -> usize {
    2
}
fn default_stride() -> usize {
    1
}
fn default_units() -> usize {
    64
}
fn default_pool() -> usize {
    2
}
fn default_stack_dropout() -> f64 {
    0.2
}
fn default_head_hidden() -> usize {
    64
}
fn default_head_dropout() -> f64 {
    0.3
}
fn default_embed_dim() -> usize {
    32
}
fn default_max_len() -> usize {
    512
}
fn default_attn_dim() -> usize {
    64
}
fn default_encoder_heads() -> usize {
    2
}
fn default_encoder_blocks() -> usize {
    2
}
fn default_encoder_ff() -> usize {
    64
}

/// Declarative description of one of the 16 architectures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FusionConfig {
    pub group: FusionGroup,
    pub base: BaseModel,
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    #[serde(default = "default_filters")]
    pub filters: usize,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_units")]
    pub units: usize,
    #[serde(default = "default_pool")]
    pub pool: usize,
    #[serde(default = "default_stack_dropout")]
    pub stack_dropout: f64,
    #[serde(default = "default_head_hidden")]
    pub head_hidden: usize,
    #[serde(default = "default_head_dropout")]
    pub head_dropout: f64,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_attn_dim")]
    pub attn_dim: usize,
    #[serde(default = "default_encoder_heads")]
    pub encoder_heads: usize,
    #[serde(default = "default_encoder_blocks")]
    pub encoder_blocks: usize,
    #[serde(default = "default_encoder_ff")]
    pub encoder_ff: usize,
    #[serde(default)]
    pub cross_attention_form: CrossAttentionForm,
}

impl FusionConfig {
    pub fn new(group: FusionGroup, base: BaseModel) -> FusionConfig {
        FusionConfig {
            group,
            base,
            num_classes: default_num_classes(),
            filters: default_filters(),
            kernel: default_kernel(),
            stride: default_stride(),
            units: default_units(),
            pool: default_pool(),
            stack_dropout: default_stack_dropout(),
            head_hidden: default_head_hidden(),
            head_dropout: default_head_dropout(),
            embed_dim: default_embed_dim(),
            max_len: default_max_len(),
            attn_dim: default_attn_dim(),
            encoder_heads: default_encoder_heads(),
            encoder_blocks: default_encoder_blocks(),
            encoder_ff: default_encoder_ff(),
            cross_attention_form: CrossAttentionForm::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Build(msg));
        if self.num_classes < 2 {
            return bad(format!("num_classes {} below 2", self.num_classes));
        }
        if self.kernel == 0 || self.stride == 0 || self.pool == 0 {
            return bad("kernel, stride and pool must be positive".to_string());
        }
        if self.filters == 0 || self.units == 0 || self.attn_dim == 0 || self.head_hidden == 0 {
            return bad("layer widths must be positive".to_string());
        }
        if !(0.0..1.0).contains(&self.stack_dropout) || !(0.0..1.0).contains(&self.head_dropout) {
            return bad("dropout rates must lie in [0, 1)".to_string());
        }
        if self.embed_dim % 2 != 0 {
            return bad(format!("embed_dim {} must be even", self.embed_dim));
        }
        if self.base == BaseModel::Att && self.embed_dim % self.encoder_heads != 0 {
            return bad(format!(
                "embed_dim {} not divisible by encoder_heads {}",
                self.embed_dim, self.encoder_heads
            ));
        }
        if self.max_len == 0 {
            return bad("max_len must be positive".to_string());
        }
        Ok(())
    }
}

// ── Network A ───────────────────────────────────────────────────────

enum NetworkABody {
    Conv { pool: usize, conv2: Conv1dLayer },
    Lstm { pool: usize, cell: LstmLayer },
    Gru { pool: usize, cell: GruLayer },
    Att { dropout: f64, head: AttentionHead },
}

/// Numeric-channel network per the per-base stack table:
/// CNN Conv→MaxP→Conv→GlobAve, LSTM/GRU Conv→MaxP→{LSTM|GRU}→GlobAve,
/// ATT Conv→Drop→ATT→GlobAve.
pub struct NetworkA {
    conv1: Conv1dLayer,
    body: NetworkABody,
    input_len: usize,
    out_width: usize,
}

/// Largest pool window ≤ `preferred` that leaves at least `needed`
/// timesteps; short inputs fall back to window 1 (no pooling).
fn fit_pool(len_in: usize, preferred: usize, needed: usize) -> Option<usize> {
    for window in (1..=preferred.min(len_in)).rev() {
        if len_in / window >= needed {
            return Some(window);
        }
    }
    None
}

/// Builds a Network A for a numeric channel treated as a
/// length-`input_len` single-feature sequence.
pub fn build_network_a(
    base: BaseModel,
    input_len: usize,
    cfg: &FusionConfig,
    rng: &mut ChaCha8Rng,
) -> Result<NetworkA, ModelError> {
    let relu = Some(Activation::Relu);
    let conv1 = Conv1dLayer::new(cfg.kernel, 1, cfg.filters, cfg.stride, relu, rng);
    let l1 = conv1.out_len(input_len).filter(|&l| l > 0).ok_or_else(|| {
        ModelError::Build(format!(
            "channel length {input_len} too short for kernel {}",
            cfg.kernel
        ))
    })?;
    let too_short = |stage: &str| {
        ModelError::Build(format!(
            "channel length {input_len} leaves no room for the {stage} stage"
        ))
    };
    let (body, out_width) = match base {
        BaseModel::Cnn => {
            let pool = fit_pool(l1, cfg.pool, cfg.kernel).ok_or_else(|| too_short("second conv"))?;
            let conv2 = Conv1dLayer::new(cfg.kernel, cfg.filters, cfg.filters, cfg.stride, relu, rng);
            (NetworkABody::Conv { pool, conv2 }, cfg.filters)
        }
        BaseModel::Lstm => {
            let pool = fit_pool(l1, cfg.pool, 1).ok_or_else(|| too_short("recurrent"))?;
            let cell = LstmLayer::new(cfg.filters, cfg.units, rng);
            (NetworkABody::Lstm { pool, cell }, cfg.units)
        }
        BaseModel::Gru => {
            let pool = fit_pool(l1, cfg.pool, 1).ok_or_else(|| too_short("recurrent"))?;
            let cell = GruLayer::new(cfg.filters, cfg.units, rng);
            (NetworkABody::Gru { pool, cell }, cfg.units)
        }
        BaseModel::Att => {
            let head = AttentionHead::new(cfg.filters, cfg.attn_dim, rng);
            (
                NetworkABody::Att {
                    dropout: cfg.stack_dropout,
                    head,
                },
                cfg.attn_dim,
            )
        }
    };
    Ok(NetworkA {
        conv1,
        body,
        input_len,
        out_width,
    })
}

impl NetworkA {
    pub fn out_width(&self) -> usize {
        self.out_width
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    /// Returns the pre-pooling sequence and the pooled feature vector.
    fn forward(
        &self,
        values: &[f64],
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, Tensor), ModelError> {
        let seq_in = Tensor::from_vec(values.to_vec(), &[values.len(), 1])?;
        let mut x = self.conv1.forward(&seq_in)?;
        x = match &self.body {
            NetworkABody::Conv { pool, conv2 } => conv2.forward(&x.max_pool1d(*pool)?)?,
            NetworkABody::Lstm { pool, cell } => cell.forward(&x.max_pool1d(*pool)?)?,
            NetworkABody::Gru { pool, cell } => cell.forward(&x.max_pool1d(*pool)?)?,
            NetworkABody::Att { dropout, head } => {
                head.self_attention(&x.dropout(*dropout, training, rng)?)?
            }
        };
        let pooled = x.global_avg_pool()?;
        Ok((x, pooled))
    }

    fn append_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        self.conv1.append_params(&format!("{prefix}.conv1"), out);
        match &self.body {
            NetworkABody::Conv { conv2, .. } => conv2.append_params(&format!("{prefix}.conv2"), out),
            NetworkABody::Lstm { cell, .. } => cell.append_params(&format!("{prefix}.lstm"), out),
            NetworkABody::Gru { cell, .. } => cell.append_params(&format!("{prefix}.gru"), out),
            NetworkABody::Att { head, .. } => head.append_params(&format!("{prefix}.att"), out),
        }
    }

    /// Stage names, for structural assertions.
    pub fn stages(&self) -> Vec<&'static str> {
        match &self.body {
            NetworkABody::Conv { .. } => vec!["conv", "maxpool", "conv", "globavg"],
            NetworkABody::Lstm { .. } => vec!["conv", "maxpool", "lstm", "globavg"],
            NetworkABody::Gru { .. } => vec!["conv", "maxpool", "gru", "globavg"],
            NetworkABody::Att { .. } => vec!["conv", "dropout", "attention", "globavg"],
        }
    }
}

// ── Network B ───────────────────────────────────────────────────────

enum StackTail {
    Conv(Conv1dLayer),
    Lstm(LstmLayer),
    Gru(GruLayer),
}

enum NetworkBKind {
    Stack {
        embedding: Tensor,
        conv1: Conv1dLayer,
        dropout: f64,
        conv2: Conv1dLayer,
        pool: usize,
        tail: StackTail,
    },
    Encoder(TextEncoder),
}

/// Text-channel network: embedding followed by the per-base stack
/// (CNN: Conv→Drop→Conv→MaxP→Conv→GlobAve; LSTM/GRU swap the last conv
/// for a recurrent layer; ATT uses the transformer encoder).
pub struct NetworkB {
    kind: NetworkBKind,
    out_width: usize,
    max_len: usize,
}

pub fn build_network_b(
    base: BaseModel,
    vocab_size: usize,
    cfg: &FusionConfig,
    rng: &mut ChaCha8Rng,
) -> Result<NetworkB, ModelError> {
    if vocab_size < crate::data::RESERVED_TOKENS.len() {
        return Err(ModelError::Build(format!(
            "vocab size {vocab_size} below the reserved token count"
        )));
    }
    let relu = Some(Activation::Relu);
    let kind = match base {
        BaseModel::Att => {
            let encoder = TextEncoder::new(
                vocab_size,
                cfg.embed_dim,
                cfg.encoder_heads,
                cfg.encoder_blocks,
                cfg.encoder_ff,
                PAD_ID,
                rng,
            )?;
            NetworkBKind::Encoder(encoder)
        }
        _ => {
            let embedding = Tensor::param(
                crate::layers::init::uniform(rng, -0.05, 0.05, vocab_size * cfg.embed_dim),
                &[vocab_size, cfg.embed_dim],
            )?;
            let conv1 = Conv1dLayer::new(cfg.kernel, cfg.embed_dim, cfg.filters, cfg.stride, relu, rng);
            let conv2 = Conv1dLayer::new(cfg.kernel, cfg.filters, cfg.filters, cfg.stride, relu, rng);
            let l1 = conv1.out_len(cfg.max_len).filter(|&l| l > 0);
            let l2 = l1.and_then(|l| conv2.out_len(l)).filter(|&l| l > 0);
            let needed = if base == BaseModel::Cnn { cfg.kernel } else { 1 };
            let pool = l2
                .and_then(|l| fit_pool(l, cfg.pool, needed))
                .ok_or_else(|| {
                    ModelError::Build(format!(
                        "max_len {} too short for the text stack",
                        cfg.max_len
                    ))
                })?;
            let tail = match base {
                BaseModel::Cnn => StackTail::Conv(Conv1dLayer::new(
                    cfg.kernel,
                    cfg.filters,
                    cfg.filters,
                    cfg.stride,
                    relu,
                    rng,
                )),
                BaseModel::Lstm => StackTail::Lstm(LstmLayer::new(cfg.filters, cfg.units, rng)),
                BaseModel::Gru => StackTail::Gru(GruLayer::new(cfg.filters, cfg.units, rng)),
                BaseModel::Att => unreachable!(),
            };
            NetworkBKind::Stack {
                embedding,
                conv1,
                dropout: cfg.stack_dropout,
                conv2,
                pool,
                tail,
            }
        }
    };
    let out_width = match (&kind, base) {
        (NetworkBKind::Encoder(_), _) => cfg.embed_dim,
        (NetworkBKind::Stack { tail: StackTail::Conv(_), .. }, _) => cfg.filters,
        (NetworkBKind::Stack { .. }, _) => cfg.units,
    };
    Ok(NetworkB {
        kind,
        out_width,
        max_len: cfg.max_len,
    })
}

impl NetworkB {
    pub fn out_width(&self) -> usize {
        self.out_width
    }

    fn forward(
        &self,
        tokens: &[u32],
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, Tensor), ModelError> {
        if tokens.len() != self.max_len {
            return Err(ModelError::TokenLength {
                expected: self.max_len,
                got: tokens.len(),
            });
        }
        match &self.kind {
            NetworkBKind::Encoder(encoder) => Ok(encoder.forward(tokens)?),
            NetworkBKind::Stack {
                embedding,
                conv1,
                dropout,
                conv2,
                pool,
                tail,
            } => {
                let mut x = embedding_lookup(embedding, tokens)?;
                x = conv1.forward(&x)?;
                x = x.dropout(*dropout, training, rng)?;
                x = conv2.forward(&x)?;
                x = x.max_pool1d(*pool)?;
                x = match tail {
                    StackTail::Conv(conv3) => conv3.forward(&x)?,
                    StackTail::Lstm(cell) => cell.forward(&x)?,
                    StackTail::Gru(cell) => cell.forward(&x)?,
                };
                let pooled = x.global_avg_pool()?;
                Ok((x, pooled))
            }
        }
    }

    fn append_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        match &self.kind {
            NetworkBKind::Encoder(encoder) => {
                encoder.append_params(&format!("{prefix}.encoder"), out)
            }
            NetworkBKind::Stack {
                embedding,
                conv1,
                conv2,
                tail,
                ..
            } => {
                out.push((format!("{prefix}.embedding"), embedding.clone()));
                conv1.append_params(&format!("{prefix}.conv1"), out);
                conv2.append_params(&format!("{prefix}.conv2"), out);
                match tail {
                    StackTail::Conv(c) => c.append_params(&format!("{prefix}.conv3"), out),
                    StackTail::Lstm(c) => c.append_params(&format!("{prefix}.lstm"), out),
                    StackTail::Gru(c) => c.append_params(&format!("{prefix}.gru"), out),
                }
            }
        }
    }

    pub fn stages(&self) -> Vec<&'static str> {
        match &self.kind {
            NetworkBKind::Encoder(_) => vec!["embedding", "encoder", "pool"],
            NetworkBKind::Stack { tail, .. } => {
                let last = match tail {
                    StackTail::Conv(_) => "conv",
                    StackTail::Lstm(_) => "lstm",
                    StackTail::Gru(_) => "gru",
                };
                vec!["embedding", "conv", "dropout", "conv", "maxpool", last, "globavg"]
            }
        }
    }
}

// ── the multimodal model ────────────────────────────────────────────

enum NumericStream {
    /// Groups 1–2: one Network A per numeric channel.
    PerChannel(Vec<(Channel, NetworkA)>),
    /// Groups 3–4: numeric channels feature-concatenated into one row.
    EarlyFused { channels: Vec<Channel>, net: NetworkA },
    /// Text-only ablation.
    None,
}

enum Fusion {
    Concat,
    Cross(CrossAttention),
}

pub struct MultimodalModel {
    pub cfg: FusionConfig,
    numeric: NumericStream,
    text: Option<NetworkB>,
    fusion: Fusion,
    head1: DenseLayer,
    head_dropout: f64,
    head2: DenseLayer,
    feature_width: usize,
}

/// Builds the architecture for `cfg` over all five channels.
pub fn build_model(
    cfg: &FusionConfig,
    vocab_size: usize,
    seed: u64,
) -> Result<MultimodalModel, ModelError> {
    build_model_subset(cfg, vocab_size, &Channel::ALL, seed)
}

/// Builds the architecture restricted to a channel subset (ablation);
/// excluded streams are absent from the graph entirely. When only one
/// modality side remains, cross-attention groups degrade to concatenation
/// of whatever pooled outputs exist.
pub fn build_model_subset(
    cfg: &FusionConfig,
    vocab_size: usize,
    channels: &[Channel],
    seed: u64,
) -> Result<MultimodalModel, ModelError> {
    cfg.validate()?;
    let mut selected: Vec<Channel> = Vec::new();
    for c in Channel::ALL {
        if channels.contains(&c) && !selected.contains(&c) {
            selected.push(c);
        }
    }
    if selected.is_empty() {
        return Err(ModelError::EmptyChannels);
    }
    let numeric_channels: Vec<Channel> = selected
        .iter()
        .copied()
        .filter(|c| *c != Channel::Text)
        .collect();
    let with_text = selected.contains(&Channel::Text);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let numeric = if numeric_channels.is_empty() {
        NumericStream::None
    } else if cfg.group.early_fusion() {
        let total: usize = numeric_channels.iter().map(|c| c.width().unwrap()).sum();
        NumericStream::EarlyFused {
            channels: numeric_channels.clone(),
            net: build_network_a(cfg.base, total, cfg, &mut rng)?,
        }
    } else {
        let mut nets = Vec::new();
        for &c in &numeric_channels {
            nets.push((c, build_network_a(cfg.base, c.width().unwrap(), cfg, &mut rng)?));
        }
        NumericStream::PerChannel(nets)
    };

    let text = if with_text {
        Some(build_network_b(cfg.base, vocab_size, cfg, &mut rng)?)
    } else {
        None
    };

    let numeric_seq_width = match &numeric {
        NumericStream::PerChannel(nets) => {
            let w = nets[0].1.out_width();
            if cfg.group.cross_attention() && nets.iter().any(|(_, n)| n.out_width() != w) {
                return Err(ModelError::Build(
                    "cross-attention fusion needs equal Network A output widths".to_string(),
                ));
            }
            Some(w)
        }
        NumericStream::EarlyFused { net, .. } => Some(net.out_width()),
        NumericStream::None => None,
    };

    // Cross-attention applies only when both modality sides are present.
    let (fusion, feature_width) = match (cfg.group.cross_attention(), numeric_seq_width, &text) {
        (true, Some(num_w), Some(t)) => {
            // Queries from the text sequence, keys/values from the fused
            // numeric sequence: the value pathway carries the numeric
            // features directly, which trains far better than routing them
            // through attention scores alone.
            let cross = CrossAttention::new(
                t.out_width(),
                num_w,
                cfg.attn_dim,
                cfg.cross_attention_form,
                &mut rng,
            );
            (Fusion::Cross(cross), cfg.attn_dim)
        }
        _ => {
            let mut width = 0;
            match &numeric {
                NumericStream::PerChannel(nets) => {
                    width += nets.iter().map(|(_, n)| n.out_width()).sum::<usize>()
                }
                NumericStream::EarlyFused { net, .. } => width += net.out_width(),
                NumericStream::None => {}
            }
            if let Some(t) = &text {
                width += t.out_width();
            }
            (Fusion::Concat, width)
        }
    };

    let head1 = DenseLayer::new(feature_width, cfg.head_hidden, Some(Activation::Relu), &mut rng);
    let head2 = DenseLayer::new(cfg.head_hidden, cfg.num_classes, None, &mut rng);
    Ok(MultimodalModel {
        cfg: cfg.clone(),
        numeric,
        text,
        fusion,
        head1,
        head_dropout: cfg.head_dropout,
        head2,
        feature_width,
    })
}

fn check_width(channel: Channel, values: &[f64]) -> Result<(), ModelError> {
    let expected = channel.width().unwrap();
    if values.len() != expected {
        return Err(ModelError::ChannelWidth {
            channel: channel.as_str(),
            expected,
            got: values.len(),
        });
    }
    Ok(())
}

impl MultimodalModel {
    /// Per-sample feature extraction up to the fusion point.
    fn sample_features(
        &self,
        sample: &Sample,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor, ModelError> {
        let mut numeric_seqs: Vec<Tensor> = Vec::new();
        let mut numeric_pooled: Vec<Tensor> = Vec::new();
        match &self.numeric {
            NumericStream::PerChannel(nets) => {
                for (channel, net) in nets {
                    let values = sample.numeric_channel(*channel);
                    check_width(*channel, values)?;
                    let (seq, pooled) = net.forward(values, training, rng)?;
                    numeric_seqs.push(seq);
                    numeric_pooled.push(pooled);
                }
            }
            NumericStream::EarlyFused { channels, net } => {
                let mut fused = Vec::with_capacity(net.input_len());
                for &channel in channels {
                    let values = sample.numeric_channel(channel);
                    check_width(channel, values)?;
                    fused.extend_from_slice(values);
                }
                let (seq, pooled) = net.forward(&fused, training, rng)?;
                numeric_seqs.push(seq);
                numeric_pooled.push(pooled);
            }
            NumericStream::None => {}
        }

        let text_out = match &self.text {
            Some(net) => Some(net.forward(&sample.tokens, training, rng)?),
            None => None,
        };

        let features = match (&self.fusion, text_out) {
            (Fusion::Cross(cross), Some((text_seq, _))) => {
                let num_seq = if numeric_seqs.len() == 1 {
                    numeric_seqs.pop().unwrap()
                } else {
                    concat(&numeric_seqs, 0)?
                };
                let (attended, _weights) = cross.forward(&text_seq, &num_seq)?;
                attended.global_avg_pool()?
            }
            (_, text_out) => {
                let mut pooled = numeric_pooled;
                if let Some((_, text_pooled)) = text_out {
                    pooled.push(text_pooled);
                }
                if pooled.len() == 1 {
                    pooled.pop().unwrap()
                } else {
                    concat(&pooled, 0)?
                }
            }
        };
        Ok(features)
    }

    /// Batch forward to logits `[batch × num_classes]`. Deterministic when
    /// `training` is false.
    pub fn forward(
        &self,
        batch: &[&Sample],
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::Build("empty batch".to_string()));
        }
        let mut rows = Vec::with_capacity(batch.len());
        for sample in batch {
            let features = self.sample_features(sample, training, rng)?;
            rows.push(features.reshape(&[1, self.feature_width])?);
        }
        let stacked = if rows.len() == 1 {
            rows.pop().unwrap()
        } else {
            concat(&rows, 0)?
        };
        let hidden = self
            .head1
            .forward(&stacked)?
            .dropout(self.head_dropout, training, rng)?;
        Ok(self.head2.forward(&hidden)?)
    }

    /// Class probabilities at inference (softmax over logits).
    pub fn predict_proba(&self, batch: &[&Sample]) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let logits = self.forward(batch, false, &mut rng)?;
        let probs = logits.softmax_lastdim()?;
        let flat = probs.value();
        Ok(flat
            .chunks_exact(self.cfg.num_classes)
            .map(|row| row.to_vec())
            .collect())
    }

    /// Trainable parameters keyed by layer path, in a stable order.
    pub fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        match &self.numeric {
            NumericStream::PerChannel(nets) => {
                for (channel, net) in nets {
                    net.append_params(&format!("numeric.{}", channel.as_str()), &mut out);
                }
            }
            NumericStream::EarlyFused { net, .. } => {
                net.append_params("numeric.fused", &mut out);
            }
            NumericStream::None => {}
        }
        if let Some(t) = &self.text {
            t.append_params("text", &mut out);
        }
        if let Fusion::Cross(cross) = &self.fusion {
            cross.append_params("fusion.cross", &mut out);
        }
        self.head1.append_params("head.dense1", &mut out);
        self.head2.append_params("head.dense2", &mut out);
        out
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        self.named_parameters().into_iter().map(|(_, t)| t).collect()
    }

    /// Exact count of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(Tensor::numel).sum()
    }

    pub fn zero_grad(&self) {
        for p in self.parameters() {
            p.zero_grad();
        }
    }

    /// Number of Network A instances (4 for groups 1–2, 1 for 3–4).
    pub fn network_a_count(&self) -> usize {
        match &self.numeric {
            NumericStream::PerChannel(nets) => nets.len(),
            NumericStream::EarlyFused { .. } => 1,
            NumericStream::None => 0,
        }
    }

    /// Number of cross-attention modules (1 for groups 2 and 4).
    pub fn cross_attention_count(&self) -> usize {
        match &self.fusion {
            Fusion::Cross(_) => 1,
            Fusion::Concat => 0,
        }
    }

    pub fn network_a_stages(&self) -> Vec<Vec<&'static str>> {
        match &self.numeric {
            NumericStream::PerChannel(nets) => nets.iter().map(|(_, n)| n.stages()).collect(),
            NumericStream::EarlyFused { net, .. } => vec![net.stages()],
            NumericStream::None => vec![],
        }
    }

    pub fn network_b_stages(&self) -> Option<Vec<&'static str>> {
        self.text.as_ref().map(|t| t.stages())
    }

    /// Width of the fused feature vector entering the head.
    pub fn feature_width(&self) -> usize {
        self.feature_width
    }

    /// Column range of the text features inside the concatenated fusion
    /// vector (groups 1 and 3 only).
    pub fn text_feature_slice(&self) -> Option<std::ops::Range<usize>> {
        match (&self.fusion, &self.text) {
            (Fusion::Concat, Some(t)) => {
                Some(self.feature_width - t.out_width()..self.feature_width)
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests;
