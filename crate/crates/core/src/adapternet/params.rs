//! Model configuration, tensor layout, initialization and checkpoints.

use std::io::{Read, Write};

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AdapterKind {
    #[default]
    Cross,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub text_vocab: usize,
    pub mol_vocab: usize,
    pub d_text: usize,
    pub d_mol: usize,
    pub text_layers: usize,
    pub mol_layers: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub max_text_len: usize,
    pub max_mol_len: usize,
    pub adapter: AdapterKind,
    /// LayerNorm + GELU feed-forward sublayer after the adapter attention.
    pub adapter_ffn: bool,
    pub mlp_hidden: usize,
    /// Drop the 1/sqrt(d_head) factor in the adapter attention logits.
    pub unscaled_attention: bool,
    pub finetune_text: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            text_vocab: 64,
            mol_vocab: 32,
            d_text: 64,
            d_mol: 64,
            text_layers: 2,
            mol_layers: 2,
            heads: 4,
            ffn_mult: 4,
            max_text_len: 64,
            max_mol_len: 96,
            adapter: AdapterKind::Cross,
            adapter_ffn: true,
            mlp_hidden: 128,
            unscaled_attention: false,
            finetune_text: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("text_vocab", self.text_vocab),
            ("mol_vocab", self.mol_vocab),
            ("d_text", self.d_text),
            ("d_mol", self.d_mol),
            ("heads", self.heads),
            ("ffn_mult", self.ffn_mult),
            ("max_text_len", self.max_text_len),
            ("max_mol_len", self.max_mol_len),
            ("mlp_hidden", self.mlp_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::Shape(format!("{name} must be positive")));
            }
        }
        for (name, d) in [("d_text", self.d_text), ("d_mol", self.d_mol)] {
            if d % self.heads != 0 {
                return Err(ModelError::Shape(format!("heads {} does not divide {name} {d}", self.heads)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Text,
    Decoder,
    Projection,
    Adapter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    /// Sinusoidal table of amplitude `POS_AMPLITUDE`, shape max_len×d.
    Sinusoid(usize),
    /// U(-a, a) with a = 1/sqrt(fan_in).
    FanIn(usize),
    Embedding,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LinIds {
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LnIds {
    pub g: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AttnIds {
    pub q: LinIds,
    pub k: LinIds,
    pub v: LinIds,
    pub o: LinIds,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct FfnIds {
    pub up: LinIds,
    pub down: LinIds,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BlockIds {
    pub ln1: LnIds,
    pub attn: AttnIds,
    pub ln2: LnIds,
    pub ffn: FfnIds,
}

#[derive(Debug, Clone)]
pub(crate) struct StackIds {
    pub tok: usize,
    pub pos: usize,
    pub blocks: Vec<BlockIds>,
    pub ln_f: LnIds,
}

#[derive(Debug, Clone)]
pub(crate) enum AdapterIds {
    Cross { proj: LinIds, attn: AttnIds, ffn: Option<(LnIds, FfnIds)> },
    Mlp { up: LinIds, down: LinIds },
}

#[derive(Debug, Clone)]
pub(crate) struct Ids {
    pub text: StackIds,
    pub mol: StackIds,
    pub lm: LinIds,
    pub adapter: AdapterIds,
}

struct Spec {
    name: String,
    shape: Vec<usize>,
    group: Group,
    init: Init,
}

#[derive(Default)]
struct Builder {
    specs: Vec<Spec>,
}

impl Builder {
    fn push(&mut self, name: String, shape: Vec<usize>, group: Group, init: Init) -> usize {
        self.specs.push(Spec { name, shape, group, init });
        self.specs.len() - 1
    }

    fn lin(&mut self, name: &str, d_in: usize, d_out: usize, group: Group) -> LinIds {
        let w = self.push(format!("{name}.w"), vec![d_in, d_out], group, Init::FanIn(d_in));
        let b = self.push(format!("{name}.b"), vec![d_out], group, Init::Zeros);
        LinIds { w, b }
    }

    fn ln(&mut self, name: &str, d: usize, group: Group) -> LnIds {
        let g = self.push(format!("{name}.g"), vec![d], group, Init::Ones);
        let b = self.push(format!("{name}.b"), vec![d], group, Init::Zeros);
        LnIds { g, b }
    }

    fn attn(&mut self, name: &str, d: usize, group: Group) -> AttnIds {
        AttnIds {
            q: self.lin(&format!("{name}.q"), d, d, group),
            k: self.lin(&format!("{name}.k"), d, d, group),
            v: self.lin(&format!("{name}.v"), d, d, group),
            o: self.lin(&format!("{name}.o"), d, d, group),
        }
    }

    fn ffn(&mut self, name: &str, d: usize, hidden: usize, group: Group) -> FfnIds {
        FfnIds {
            up: self.lin(&format!("{name}.up"), d, hidden, group),
            down: self.lin(&format!("{name}.down"), hidden, d, group),
        }
    }

    fn stack(&mut self, prefix: &str, vocab: usize, max_len: usize, d: usize, layers: usize, mult: usize, group: Group) -> StackIds {
        let tok = self.push(format!("{prefix}.tok_emb"), vec![vocab, d], group, Init::Embedding);
        let pos = self.push(format!("{prefix}.pos_emb"), vec![max_len, d], group, Init::Sinusoid(d));
        let blocks = (0..layers)
            .map(|i| {
                let p = format!("{prefix}.block{i}");
                BlockIds {
                    ln1: self.ln(&format!("{p}.ln1"), d, group),
                    attn: self.attn(&format!("{p}.attn"), d, group),
                    ln2: self.ln(&format!("{p}.ln2"), d, group),
                    ffn: self.ffn(&format!("{p}.ffn"), d, d * mult, group),
                }
            })
            .collect();
        let ln_f = self.ln(&format!("{prefix}.ln_f"), d, group);
        StackIds { tok, pos, blocks, ln_f }
    }
}

fn build(cfg: &ModelConfig) -> (Vec<Spec>, Ids) {
    let mut b = Builder::default();
    let text = b.stack("text", cfg.text_vocab, cfg.max_text_len, cfg.d_text, cfg.text_layers, cfg.ffn_mult, Group::Text);
    let mol = b.stack("mol", cfg.mol_vocab, cfg.max_mol_len, cfg.d_mol, cfg.mol_layers, cfg.ffn_mult, Group::Decoder);
    let lm = b.lin("lm_head", cfg.d_mol, cfg.mol_vocab, Group::Decoder);
    let adapter = match cfg.adapter {
        AdapterKind::Cross => AdapterIds::Cross {
            proj: b.lin("proj", cfg.d_text, cfg.d_mol, Group::Projection),
            attn: b.attn("adapter.attn", cfg.d_mol, Group::Adapter),
            ffn: cfg.adapter_ffn.then(|| {
                (b.ln("adapter.ln", cfg.d_mol, Group::Adapter), b.ffn("adapter.ffn", cfg.d_mol, cfg.d_mol * cfg.ffn_mult, Group::Adapter))
            }),
        },
        AdapterKind::Mlp => AdapterIds::Mlp {
            up: b.lin("adapter.mlp.up", cfg.d_text + cfg.d_mol, cfg.mlp_hidden, Group::Adapter),
            down: b.lin("adapter.mlp.down", cfg.mlp_hidden, cfg.d_mol, Group::Adapter),
        },
    };
    (b.specs, Ids { text, mol, lm, adapter })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub group: Group,
    pub frozen: bool,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Named f32 tensors in a fixed layout order, plus the config that defines it.
#[derive(Debug, Clone)]
pub struct ModelParams {
    config: ModelConfig,
    tensors: Vec<Tensor>,
    pub(crate) ids: Ids,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.tensors == other.tensors
    }
}

fn frozen_for(group: Group, cfg: &ModelConfig) -> bool {
    match group {
        Group::Decoder => true,
        Group::Text => !cfg.finetune_text,
        Group::Projection | Group::Adapter => false,
    }
}

/// Deterministic initialization: fan-in scaled uniform weights, zero biases,
/// unit LayerNorm gains, token embeddings U(-0.1, 0.1), sinusoidal position
/// tables.
pub fn init_model(cfg: &ModelConfig, seed: u64) -> Result<ModelParams, ModelError> {
    cfg.validate()?;
    let (specs, ids) = build(cfg);
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut uniform = |a: f64| ((rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64) * 2.0 - 1.0) * a;
    let tensors = specs
        .into_iter()
        .map(|s| {
            let n: usize = s.shape.iter().product();
            let data = match s.init {
                Init::FanIn(f) => (0..n).map(|_| uniform(1.0 / (f as f64).sqrt()) as f32).collect(),
                Init::Embedding => (0..n).map(|_| uniform(0.1) as f32).collect(),
                Init::Sinusoid(d) => (0..n).map(|k| sinusoid(k / d, k % d, d) as f32).collect(),
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
            };
            Tensor { frozen: frozen_for(s.group, cfg), name: s.name, shape: s.shape, group: s.group, data }
        })
        .collect();
    Ok(ModelParams { config: cfg.clone(), tensors, ids })
}

const POS_AMPLITUDE: f64 = std::f64::consts::FRAC_1_SQRT_2 * 0.1;

fn sinusoid(pos: usize, j: usize, d: usize) -> f64 {
    let angle = pos as f64 / 10000f64.powf((j - j % 2) as f64 / d as f64);
    POS_AMPLITUDE * if j % 2 == 0 { angle.sin() } else { angle.cos() }
}

impl ModelParams {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Replaces a tensor's values; the length must match.
    pub fn set(&mut self, name: &str, data: &[f32]) -> Result<(), ModelError> {
        let t = self
            .tensors
            .iter_mut()
            .find(|t| t.name == name)
            .ok_or_else(|| ModelError::Shape(format!("no tensor {name}")))?;
        if t.data.len() != data.len() {
            return Err(ModelError::Shape(format!("{name}: {} values, expected {}", data.len(), t.data.len())));
        }
        t.data.copy_from_slice(data);
        Ok(())
    }

    pub fn set_group_frozen(&mut self, group: Group, frozen: bool) {
        for t in self.tensors.iter_mut().filter(|t| t.group == group) {
            t.frozen = frozen;
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn num_trainable(&self) -> usize {
        self.tensors.iter().filter(|t| !t.frozen).map(Tensor::numel).sum()
    }

    pub fn count_group(&self, group: Group) -> usize {
        self.tensors.iter().filter(|t| t.group == group).map(Tensor::numel).sum()
    }

    pub(crate) fn to_f64(&self) -> Vec<Vec<f64>> {
        self.tensors.iter().map(|t| t.data.iter().map(|&v| v as f64).collect()).collect()
    }

    /// Writes values back, skipping frozen tensors.
    pub(crate) fn store_trainable(&mut self, w: &[Vec<f64>]) {
        for (t, src) in self.tensors.iter_mut().zip(w) {
            if !t.frozen {
                for (d, &s) in t.data.iter_mut().zip(src) {
                    *d = s as f32;
                }
            }
        }
    }

    pub(crate) fn store_group(&mut self, group: Group, w: &[Vec<f64>]) {
        for (t, src) in self.tensors.iter_mut().zip(w) {
            if t.group == group {
                for (d, &s) in t.data.iter_mut().zip(src) {
                    *d = s as f32;
                }
            }
        }
    }
}

const MAGIC: &[u8; 5] = b"CLMK1";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
    frozen: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    extra: serde_json::Value,
}

/// `CLMK1`, u64 little-endian header length, JSON header, then every tensor
/// as little-endian f32 at its recorded byte offset into the payload.
pub fn write_checkpoint(w: &mut impl Write, params: &ModelParams, extra: &serde_json::Value) -> Result<(), ModelError> {
    let mut offset = 0u64;
    let tensors = params
        .tensors
        .iter()
        .map(|t| {
            let e = TensorEntry { name: t.name.clone(), shape: t.shape.clone(), dtype: "f32".into(), offset, frozen: t.frozen };
            offset += 4 * t.numel() as u64;
            e
        })
        .collect();
    let header = Header { config: params.config.clone(), tensors, extra: extra.clone() };
    let json = serde_json::to_vec(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let io = |e: std::io::Error| ModelError::Checkpoint(e.to_string());
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for t in &params.tensors {
        let mut buf = Vec::with_capacity(4 * t.numel());
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io)?;
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<(ModelParams, serde_json::Value), ModelError> {
    let bad = |m: String| ModelError::Checkpoint(m);
    let io = |e: std::io::Error| ModelError::Checkpoint(e.to_string());
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(io)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut json).map_err(io)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| bad(e.to_string()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(io)?;

    let mut params = init_model(&header.config, 0)?;
    if params.tensors.len() != header.tensors.len() {
        return Err(bad("tensor count does not match config".into()));
    }
    for (t, e) in params.tensors.iter_mut().zip(&header.tensors) {
        if t.name != e.name || t.shape != e.shape || e.dtype != "f32" {
            return Err(bad(format!("tensor {} does not match layout", e.name)));
        }
        let start = e.offset as usize;
        let bytes = payload.get(start..start + 4 * t.numel()).ok_or_else(|| bad(format!("{} truncated", e.name)))?;
        for (d, c) in t.data.iter_mut().zip(bytes.chunks_exact(4)) {
            *d = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
        t.frozen = e.frozen;
    }
    Ok((params, header.extra))
}
