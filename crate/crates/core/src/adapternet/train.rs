//! Teacher-forced training, decoder pretraining, evaluation and gradient checks.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use super::model::{cross_entropy, Grads, Net};
use super::ops::Mat;
use super::params::{Group, ModelConfig, ModelParams};
use super::tokenizer::{BOS, EOS, PAD};
use super::{check_tokens, noam_lr, ModelError};
use crate::par::{self, Exec};

/// One (text, molecule) pair; `mol` holds body tokens without BOS/EOS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub text: Vec<u32>,
    pub mol: Vec<u32>,
}

impl Example {
    /// Decoder input `[BOS, mol..]` and targets `[mol.., EOS]`.
    pub fn teacher_forcing(&self) -> (Vec<u32>, Vec<u32>) {
        let mut input = vec![BOS];
        input.extend(&self.mol);
        let mut target = self.mol.clone();
        target.push(EOS);
        (input, target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub model: ModelConfig,
    pub warmup_steps: u64,
    /// Multiplier on the Noam rate.
    pub lr_factor: f64,
    pub seed: u64,
    pub batch_size: usize,
    pub max_steps: usize,
    /// Unconditional decoder steps before adapter training; 0 skips the stage.
    pub pretrain_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            warmup_steps: 400,
            lr_factor: 1.0,
            seed: 42,
            batch_size: 16,
            max_steps: 1000,
            pretrain_steps: 0,
        }
    }
}

/// Adam with β = (0.9, 0.98), ε = 1e-9 and bias correction.
struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.98;
    const EPS: f64 = 1e-9;

    fn new(w: &[Vec<f64>]) -> Self {
        Adam { m: w.iter().map(|t| vec![0.0; t.len()]).collect(), v: w.iter().map(|t| vec![0.0; t.len()]).collect(), t: 0 }
    }

    fn step(&mut self, w: &mut [Vec<f64>], grads: &Grads, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (i, g) in grads.g.iter().enumerate() {
            let Some(g) = g else { continue };
            for (k, &gk) in g.iter().enumerate() {
                let m = &mut self.m[i][k];
                let v = &mut self.v[i][k];
                *m = Self::B1 * *m + (1.0 - Self::B1) * gk;
                *v = Self::B2 * *v + (1.0 - Self::B2) * gk * gk;
                w[i][k] -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Precomputed outputs of frozen stacks for one example.
#[derive(Default)]
struct Frozen {
    t: Option<Mat>,
    s: Option<Mat>,
}

/// Loss terms of one example; gradients accumulate into `g` scaled by `scale`.
fn example_grad(net: &Net, ex: &Example, frozen: &Frozen, scale: f64, g: &mut Grads, need_text: bool, need_dec: bool) -> (f64, usize) {
    let (input, target) = ex.teacher_forcing();
    let (t, tc) = match &frozen.t {
        Some(t) if !need_text => (t.clone(), None),
        _ => {
            let (t, c) = net.encode_text(&ex.text);
            (t, Some(c))
        }
    };
    let (s, sc) = match &frozen.s {
        Some(s) if !need_dec => (s.clone(), None),
        _ => {
            let (s, c) = net.decode(&input);
            (s, Some(c))
        }
    };
    let (s2, ac) = net.adapt(&t, &s);
    let logits = net.head(&s2);
    let (loss, count, dlogits) = cross_entropy(&logits, &target, PAD, scale);
    let ds2 = net.head_bwd(&s2, &dlogits, g);
    let (dt, ds) = net.adapt_bwd(&ds2, &ac, g);
    if need_text {
        net.encode_text_bwd(&dt, tc.as_ref().unwrap(), g);
    }
    if need_dec {
        net.decode_bwd(&ds, sc.as_ref().unwrap(), g);
    }
    (loss, count)
}

fn target_count(batch: &[Example]) -> usize {
    batch.iter().map(|e| e.mol.len() + 1).sum()
}

fn check_batch(cfg: &ModelConfig, batch: &[Example]) -> Result<(), ModelError> {
    for ex in batch {
        check_tokens(&ex.text, cfg.text_vocab, cfg.max_text_len, "text")?;
        check_tokens(&ex.mol, cfg.mol_vocab, cfg.max_mol_len - 1, "molecule")?;
    }
    Ok(())
}

fn group_live(params: &ModelParams, group: Group) -> bool {
    params.tensors().iter().any(|t| t.group == group && !t.frozen)
}

/// Mean token loss of a batch and gradients of every trainable tensor;
/// frozen tensors get `None`.
pub fn batch_gradients(params: &ModelParams, batch: &[Example]) -> Result<(f64, Vec<Option<Vec<f64>>>), ModelError> {
    check_batch(params.config(), batch)?;
    let w = params.to_f64();
    let net = Net { cfg: params.config(), ids: &params.ids, w: &w };
    let mut g = Grads::new(&w, |i| !params.tensors()[i].frozen);
    let scale = 1.0 / target_count(batch).max(1) as f64;
    let (need_text, need_dec) = (group_live(params, Group::Text), group_live(params, Group::Decoder));
    let mut total = 0.0;
    for ex in batch {
        total += example_grad(&net, ex, &Frozen::default(), scale, &mut g, need_text, need_dec).0;
    }
    Ok((total * scale, g.g))
}

fn example_loss(net: &Net, ex: &Example) -> (f64, usize) {
    let (input, target) = ex.teacher_forcing();
    let (t, _) = net.encode_text(&ex.text);
    let (s, _) = net.decode(&input);
    let (s2, _) = net.adapt(&t, &s);
    let (loss, count, _) = cross_entropy(&net.head(&s2), &target, PAD, 0.0);
    (loss, count)
}

fn weighted_loss(params: &ModelParams, w: &[Vec<f64>], data: &[Example], exec: Exec) -> f64 {
    let net = Net { cfg: params.config(), ids: &params.ids, w };
    let parts = par::map(exec, data, |ex| example_loss(&net, ex));
    let count: usize = parts.iter().map(|p| p.1).sum();
    let sum = par::pairwise_sum(&parts.iter().map(|p| p.0).collect::<Vec<_>>());
    sum / count.max(1) as f64
}

/// Teacher-forced cross-entropy per target token over a dataset.
pub fn mean_loss(params: &ModelParams, data: &[Example], exec: Exec) -> Result<f64, ModelError> {
    check_batch(params.config(), data)?;
    Ok(weighted_loss(params, &params.to_f64(), data, exec))
}

/// Cycles through shuffled epochs.
struct Batches {
    rng: Xoshiro256StarStar,
    order: Vec<usize>,
    at: usize,
}

impl Batches {
    fn new(n: usize, seed: u64) -> Self {
        Batches { rng: Xoshiro256StarStar::seed_from_u64(seed), order: (0..n).collect(), at: n }
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.at == self.order.len() {
                for i in (1..self.order.len()).rev() {
                    let j = (self.rng.next_u64() % (i as u64 + 1)) as usize;
                    self.order.swap(i, j);
                }
                self.at = 0;
            }
            out.push(self.order[self.at]);
            self.at += 1;
        }
        out
    }
}

/// Trains every non-frozen tensor on teacher-forced cross-entropy under the
/// Noam schedule. Frozen stacks are run once per example and cached.
/// Returns the updated parameters and the per-step batch loss.
pub fn train_adapter(params: &ModelParams, data: &[Example], cfg: &TrainConfig) -> Result<(ModelParams, Vec<f64>), ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    check_batch(params.config(), data)?;
    let mcfg = params.config();
    let mut w = params.to_f64();
    let (need_text, need_dec) = (group_live(params, Group::Text), group_live(params, Group::Decoder));
    let frozen: Vec<Frozen> = {
        let net = Net { cfg: mcfg, ids: &params.ids, w: &w };
        par::map(Exec::default(), data, |ex| Frozen {
            t: (!need_text).then(|| net.encode_text(&ex.text).0),
            s: (!need_dec).then(|| net.decode(&ex.teacher_forcing().0).0),
        })
    };
    let mut adam = Adam::new(&w);
    let mut batches = Batches::new(data.len(), cfg.seed);
    let mut history = Vec::with_capacity(cfg.max_steps);
    for step in 1..=cfg.max_steps {
        let idx = batches.next(cfg.batch_size.max(1));
        let batch: Vec<&Example> = idx.iter().map(|&i| &data[i]).collect();
        let scale = 1.0 / batch.iter().map(|e| e.mol.len() + 1).sum::<usize>() as f64;
        let mut g = Grads::new(&w, |i| !params.tensors()[i].frozen);
        let net = Net { cfg: mcfg, ids: &params.ids, w: &w };
        let mut total = 0.0;
        for (&i, ex) in idx.iter().zip(&batch) {
            total += example_grad(&net, ex, &frozen[i], scale, &mut g, need_text, need_dec).0;
        }
        history.push(total * scale);
        let lr = cfg.lr_factor * noam_lr(step as u64, cfg.warmup_steps, mcfg.d_mol);
        adam.step(&mut w, &g, lr);
    }
    let mut out = params.clone();
    out.store_trainable(&w);
    Ok((out, history))
}

/// Unconditional next-token training of the decoder stack and LM head, run
/// before the decoder is frozen. The adapter is bypassed. Frozen flags are
/// left unchanged.
pub fn pretrain_decoder(params: &ModelParams, mols: &[Vec<u32>], cfg: &TrainConfig, steps: usize) -> Result<(ModelParams, Vec<f64>), ModelError> {
    if mols.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mcfg = params.config();
    for m in mols {
        check_tokens(m, mcfg.mol_vocab, mcfg.max_mol_len - 1, "molecule")?;
    }
    let mut w = params.to_f64();
    let live = |i: usize| params.tensors()[i].group == Group::Decoder;
    let mut adam = Adam::new(&w);
    let mut batches = Batches::new(mols.len(), cfg.seed ^ 0x5eed);
    let mut history = Vec::with_capacity(steps);
    for step in 1..=steps {
        let idx = batches.next(cfg.batch_size.max(1));
        let scale = 1.0 / idx.iter().map(|&i| mols[i].len() + 1).sum::<usize>() as f64;
        let mut g = Grads::new(&w, live);
        let net = Net { cfg: mcfg, ids: &params.ids, w: &w };
        let mut total = 0.0;
        for &i in &idx {
            let (input, target) = Example { text: Vec::new(), mol: mols[i].clone() }.teacher_forcing();
            let (s, sc) = net.decode(&input);
            let (loss, _, dlogits) = cross_entropy(&net.head(&s), &target, PAD, scale);
            let ds = net.head_bwd(&s, &dlogits, &mut g);
            net.decode_bwd(&ds, &sc, &mut g);
            total += loss;
        }
        history.push(total * scale);
        let lr = cfg.lr_factor * noam_lr(step as u64, cfg.warmup_steps, mcfg.d_mol);
        adam.step(&mut w, &g, lr);
    }
    let mut out = params.clone();
    out.store_group(Group::Decoder, &w);
    Ok((out, history))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// Worst relative error per checked tensor.
    pub per_tensor: Vec<(String, f64)>,
}

/// Floor on the relative-error denominator so coordinates with vanishing
/// gradient compare absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Central finite differences against analytic gradients on at least 50
/// coordinates, with at least two per trainable tensor.
pub fn grad_check(params: &ModelParams, batch: &[Example], eps: f64, seed: u64) -> Result<GradCheckReport, ModelError> {
    let (_, analytic) = batch_gradients(params, batch)?;
    let live: Vec<usize> = (0..analytic.len()).filter(|&i| analytic[i].is_some()).collect();
    if live.is_empty() {
        return Ok(GradCheckReport { max_rel_error: 0.0, coords_checked: 0, per_tensor: Vec::new() });
    }
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut coords: Vec<(usize, usize)> = Vec::new();
    for &t in &live {
        let n = params.tensors()[t].numel() as u64;
        for _ in 0..2 {
            coords.push((t, (rng.next_u64() % n) as usize));
        }
    }
    let total: u64 = live.iter().map(|&t| params.tensors()[t].numel() as u64).sum();
    while coords.len() < 50 {
        let mut k = rng.next_u64() % total;
        for &t in &live {
            let n = params.tensors()[t].numel() as u64;
            if k < n {
                coords.push((t, k as usize));
                break;
            }
            k -= n;
        }
    }

    let mut w = params.to_f64();
    let loss_at = |w: &[Vec<f64>]| weighted_loss(params, w, batch, Exec::Sequential);
    let mut per_tensor: Vec<(String, f64)> = Vec::new();
    let mut max_rel: f64 = 0.0;
    for &(t, i) in &coords {
        let orig = w[t][i];
        w[t][i] = orig + eps;
        let lp = loss_at(&w);
        w[t][i] = orig - eps;
        let lm = loss_at(&w);
        w[t][i] = orig;
        let numeric = (lp - lm) / (2.0 * eps);
        let a = analytic[t].as_ref().unwrap()[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        let rel = if rel.is_nan() { f64::INFINITY } else { rel };
        max_rel = max_rel.max(rel);
        let name = &params.tensors()[t].name;
        match per_tensor.iter_mut().find(|(n, _)| n == name) {
            Some(e) => e.1 = e.1.max(rel),
            None => per_tensor.push((name.clone(), rel)),
        }
    }
    Ok(GradCheckReport { max_rel_error: max_rel, coords_checked: coords.len(), per_tensor })
}
