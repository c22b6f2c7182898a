//! Text encoder, frozen causal molecule decoder, cross-attention adapter
//! (or MLP ablation) and LM head, with manual backpropagation.
//!
//! Parameters are stored as f32; all arithmetic runs in f64.

mod model;
mod ops;
mod params;
mod tokenizer;
mod toy;
mod train;

use thiserror::Error;

pub use ops::Mat;
pub use params::{init_model, read_checkpoint, write_checkpoint, AdapterKind, Group, ModelConfig, ModelParams, Tensor};
pub use tokenizer::{smiles_tokens, text_words, MolSyntax, MolTokenizer, TextTokenizer, Vocab, BOS, EOS, PAD, SPECIALS, UNK};
pub use toy::{toy_pairs, ToyPair, ToyTask, SCAFFOLDS, SUBSTITUENTS};
pub use train::{
    batch_gradients, grad_check, mean_loss, pretrain_decoder, train_adapter, Example, GradCheckReport, TrainConfig,
    REL_ERROR_FLOOR,
};

use model::{cross_entropy, mlp_input, Net};
use params::AdapterIds;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("vocabulary error: {0}")]
    Vocab(String),
    #[error("{logits} logit rows but {targets} targets")]
    LengthMismatch { logits: usize, targets: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub(crate) fn check_tokens(tokens: &[u32], vocab: usize, max_len: usize, what: &str) -> Result<(), ModelError> {
    if tokens.is_empty() {
        return Err(ModelError::Vocab(format!("empty {what} sequence")));
    }
    if tokens.len() > max_len {
        return Err(ModelError::Vocab(format!("{what} sequence of {} tokens exceeds {max_len}", tokens.len())));
    }
    if let Some(&t) = tokens.iter().find(|&&t| t as usize >= vocab) {
        return Err(ModelError::Vocab(format!("{what} token {t} outside vocabulary of {vocab}")));
    }
    Ok(())
}

/// d^-0.5 · min(step^-0.5, step · warmup^-1.5).
pub fn noam_lr(step: u64, warmup: u64, d_model: usize) -> f64 {
    let s = step.max(1) as f64;
    let w = warmup.max(1) as f64;
    (d_model as f64).powf(-0.5) * s.powf(-0.5).min(s * w.powf(-1.5))
}

/// Output of the adapter's attention sublayer.
#[derive(Debug, Clone)]
pub struct Attended {
    /// S + W_O · Attn(S W_Q, T' W_K, T' W_V), n×d_mol.
    pub output: Mat,
    /// Per-head attention weights, n×m, rows summing to one.
    pub attention: Vec<Mat>,
}

/// Cross-attention of molecule states (queries) over projected text states
/// (keys and values), with residual. Needs a cross adapter.
pub fn adapter_attend(t: &Mat, s: &Mat, params: &ModelParams) -> Result<Attended, ModelError> {
    let cfg = params.config();
    if !matches!(params.ids.adapter, AdapterIds::Cross { .. }) {
        return Err(ModelError::Shape("model has no cross-attention adapter".into()));
    }
    if t.cols != cfg.d_text || s.cols != cfg.d_mol || t.rows == 0 || s.rows == 0 {
        return Err(ModelError::DimensionMismatch(format!(
            "T is {}×{}, S is {}×{}; expected m×{} and n×{}",
            t.rows, t.cols, s.rows, s.cols, cfg.d_text, cfg.d_mol
        )));
    }
    let w = params.to_f64();
    let net = Net { cfg, ids: &params.ids, w: &w };
    let (output, cache) = net.cross_attend(t, s);
    Ok(Attended { output, attention: cache.p })
}

/// The two-layer MLP ablation: rows [t̄ ; s_i] → GELU hidden → d_mol.
pub fn mlp_adapter(t_pooled: &[f64], s: &Mat, params: &ModelParams) -> Result<Mat, ModelError> {
    let cfg = params.config();
    let AdapterIds::Mlp { up, down } = &params.ids.adapter else {
        return Err(ModelError::Shape("model has no MLP adapter".into()));
    };
    if t_pooled.len() != cfg.d_text || s.cols != cfg.d_mol {
        return Err(ModelError::DimensionMismatch(format!(
            "pooled text has {} values, S is {}×{}",
            t_pooled.len(),
            s.rows,
            s.cols
        )));
    }
    let w = params.to_f64();
    let t = Mat::from_vec(1, t_pooled.len(), t_pooled.to_vec());
    let x = mlp_input(&t, s);
    Ok(ops::ffn(&x, &w[up.w], &w[up.b], &w[down.w], &w[down.b]).0)
}

/// Reusable f64 view of a parameter set for repeated inference.
pub struct Inference<'a> {
    params: &'a ModelParams,
    w: Vec<Vec<f64>>,
}

impl<'a> Inference<'a> {
    pub fn new(params: &'a ModelParams) -> Self {
        Inference { params, w: params.to_f64() }
    }

    fn net(&self) -> Net<'_> {
        Net { cfg: self.params.config(), ids: &self.params.ids, w: &self.w }
    }

    pub fn config(&self) -> &ModelConfig {
        self.params.config()
    }

    /// Encoder output T for a prompt.
    pub fn text_states(&self, text: &[u32]) -> Result<Mat, ModelError> {
        let cfg = self.config();
        check_tokens(text, cfg.text_vocab, cfg.max_text_len, "text")?;
        Ok(self.net().encode_text(text).0)
    }

    /// Decoder output S before the adapter.
    pub fn mol_states(&self, mol: &[u32]) -> Result<Mat, ModelError> {
        let cfg = self.config();
        check_tokens(mol, cfg.mol_vocab, cfg.max_mol_len, "molecule")?;
        Ok(self.net().decode(mol).0)
    }

    /// Logits for every position of `mol` given precomputed text states.
    pub fn logits_with(&self, t: &Mat, mol: &[u32]) -> Result<Mat, ModelError> {
        let s = self.mol_states(mol)?;
        let net = self.net();
        Ok(net.head(&net.adapt(t, &s).0))
    }

    /// Per-head adapter attention weights for a (text, molecule) pair.
    pub fn adapter_attention(&self, text: &[u32], mol: &[u32]) -> Result<Option<Vec<Mat>>, ModelError> {
        let t = self.text_states(text)?;
        let s = self.mol_states(mol)?;
        let (_, cache) = self.net().adapt(&t, &s);
        Ok(cache.attention().map(<[Mat]>::to_vec))
    }
}

/// Text encoder → T; causal decoder over `mol` → S; adapter; LM head.
/// Row t depends on mol[..=t] and on every text token.
pub fn forward_logits(params: &ModelParams, text: &[u32], mol: &[u32]) -> Result<Mat, ModelError> {
    let inf = Inference::new(params);
    let t = inf.text_states(text)?;
    inf.logits_with(&t, mol)
}

/// Mean cross-entropy over targets that are not PAD; 0 when all are PAD.
pub fn teacher_forced_loss(logits: &Mat, targets: &[u32]) -> Result<f64, ModelError> {
    if logits.rows != targets.len() {
        return Err(ModelError::LengthMismatch { logits: logits.rows, targets: targets.len() });
    }
    if let Some(&t) = targets.iter().find(|&&t| t as usize >= logits.cols) {
        return Err(ModelError::Vocab(format!("target {t} outside {} logits", logits.cols)));
    }
    let (sum, count, _) = cross_entropy(logits, targets, PAD, 0.0);
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noam_values() {
        assert!((noam_lr(4000, 4000, 256) - 9.882e-4).abs() < 1e-6);
        assert!((noam_lr(1, 4000, 256) - 2.47e-7).abs() < 1e-9);
        assert!(noam_lr(100, 400, 64) < noam_lr(200, 400, 64));
        assert!(noam_lr(800, 400, 64) < noam_lr(500, 400, 64));
    }

    #[test]
    fn uniform_and_saturated_loss() {
        let logits = Mat::zeros(3, 32);
        assert!((teacher_forced_loss(&logits, &[4, 5, 6]).unwrap() - 32f64.ln()).abs() < 1e-12);
        let mut sharp = Mat::zeros(2, 8);
        sharp.data[5] = 100.0;
        sharp.data[8 + 6] = 100.0;
        assert!(teacher_forced_loss(&sharp, &[5, 6]).unwrap() < 1e-40);
        assert!(matches!(teacher_forced_loss(&sharp, &[5]), Err(ModelError::LengthMismatch { .. })));
    }

    #[test]
    fn pad_targets_are_skipped() {
        let mut l = Mat::zeros(2, 4);
        l.data[4 + 1] = 5.0;
        let a = teacher_forced_loss(&l, &[PAD, 1]).unwrap();
        let b = teacher_forced_loss(&Mat::from_vec(1, 4, l.row(1).to_vec()), &[1]).unwrap();
        assert_eq!(a, b);
    }
}
