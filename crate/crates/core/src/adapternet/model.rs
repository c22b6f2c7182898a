//! Forward and backward passes of the encoder, decoder, adapter and LM head.

use super::ops::*;
use super::params::{AdapterIds, AttnIds, BlockIds, FfnIds, Ids, LinIds, LnIds, ModelConfig, StackIds};

/// Gradient accumulators; `None` entries are not tracked.
pub(crate) struct Grads {
    pub g: Vec<Option<Vec<f64>>>,
}

impl Grads {
    pub fn new(w: &[Vec<f64>], live: impl Fn(usize) -> bool) -> Self {
        Grads { g: w.iter().enumerate().map(|(i, t)| live(i).then(|| vec![0.0; t.len()])).collect() }
    }

    fn add(&mut self, id: usize, d: &[f64]) {
        if let Some(g) = &mut self.g[id] {
            for (a, b) in g.iter_mut().zip(d) {
                *a += b;
            }
        }
    }

    fn add_lin(&mut self, ids: LinIds, dw: &[f64], db: &[f64]) {
        self.add(ids.w, dw);
        self.add(ids.b, db);
    }

    fn add_attn(&mut self, ids: &AttnIds, dw: &[Vec<f64>; 8]) {
        self.add_lin(ids.q, &dw[0], &dw[1]);
        self.add_lin(ids.k, &dw[2], &dw[3]);
        self.add_lin(ids.v, &dw[4], &dw[5]);
        self.add_lin(ids.o, &dw[6], &dw[7]);
    }

    fn add_ffn(&mut self, ids: &FfnIds, dw: &[Vec<f64>; 4]) {
        self.add_lin(ids.up, &dw[0], &dw[1]);
        self.add_lin(ids.down, &dw[2], &dw[3]);
    }

    fn add_ln(&mut self, ids: LnIds, g: &LnGrad) {
        self.add(ids.g, &g.dg);
        self.add(ids.b, &g.db);
    }
}

struct BlockCache {
    ln1: LnCache,
    attn: AttnCache,
    ln2: LnCache,
    ffn: FfnCache,
}

pub(crate) struct StackCache {
    tokens: Vec<u32>,
    blocks: Vec<BlockCache>,
    ln_f: LnCache,
}

pub(crate) enum AdaptCache {
    Cross { t: Mat, attn: AttnCache, ffn: Option<(LnCache, FfnCache)> },
    Mlp { m: usize, x: Mat, up: FfnCache },
}

impl AdaptCache {
    /// Per-head attention probabilities of the cross adapter.
    pub fn attention(&self) -> Option<&[Mat]> {
        match self {
            AdaptCache::Cross { attn, .. } => Some(&attn.p),
            AdaptCache::Mlp { .. } => None,
        }
    }
}

pub(crate) struct Net<'a> {
    pub cfg: &'a ModelConfig,
    pub ids: &'a Ids,
    pub w: &'a [Vec<f64>],
}

impl<'a> Net<'a> {
    fn attn_w(&self, a: &AttnIds) -> AttnWeights<'a> {
        let w = self.w;
        AttnWeights {
            wq: &w[a.q.w],
            bq: &w[a.q.b],
            wk: &w[a.k.w],
            bk: &w[a.k.b],
            wv: &w[a.v.w],
            bv: &w[a.v.b],
            wo: &w[a.o.w],
            bo: &w[a.o.b],
        }
    }

    fn ln(&self, ids: LnIds, x: &Mat) -> (Mat, LnCache) {
        layer_norm(x, &self.w[ids.g], &self.w[ids.b])
    }

    fn ffn(&self, f: &FfnIds, x: &Mat) -> (Mat, FfnCache) {
        ffn(x, &self.w[f.up.w], &self.w[f.up.b], &self.w[f.down.w], &self.w[f.down.b])
    }

    fn ffn_bwd(&self, f: &FfnIds, dy: &Mat, c: &FfnCache, g: &mut Grads) -> Mat {
        let fg = ffn_backward(dy, &self.w[f.up.w], &self.w[f.down.w], c);
        g.add_ffn(f, &fg.dw);
        fg.dx
    }

    fn ln_bwd(&self, ids: LnIds, dy: &Mat, c: &LnCache, g: &mut Grads) -> Mat {
        let lg = layer_norm_backward(dy, &self.w[ids.g], c);
        g.add_ln(ids, &lg);
        lg.dx
    }

    fn block(&self, b: &BlockIds, x: Mat, causal: bool) -> (Mat, BlockCache) {
        let (h1, ln1) = self.ln(b.ln1, &x);
        let (a, attn) = attention(&h1, &h1, &self.attn_w(&b.attn), self.cfg.heads, causal, true);
        let x1 = x.plus(&a);
        let (h2, ln2) = self.ln(b.ln2, &x1);
        let (f, ffn) = self.ffn(&b.ffn, &h2);
        (x1.plus(&f), BlockCache { ln1, attn, ln2, ffn })
    }

    fn block_bwd(&self, b: &BlockIds, dy: Mat, c: &BlockCache, g: &mut Grads) -> Mat {
        let dh2 = self.ffn_bwd(&b.ffn, &dy, &c.ffn, g);
        let dx1 = dy.plus(&self.ln_bwd(b.ln2, &dh2, &c.ln2, g));
        let ag = attention_backward(&dx1, &self.attn_w(&b.attn), &c.attn);
        g.add_attn(&b.attn, &ag.dw);
        let dh1 = ag.dxq.plus(&ag.dxkv);
        dx1.plus(&self.ln_bwd(b.ln1, &dh1, &c.ln1, g))
    }

    fn stack(&self, s: &StackIds, tokens: &[u32], d: usize, causal: bool) -> (Mat, StackCache) {
        let mut x = Mat::zeros(tokens.len(), d);
        for (p, &t) in tokens.iter().enumerate() {
            let tok = &self.w[s.tok][t as usize * d..(t as usize + 1) * d];
            let pos = &self.w[s.pos][p * d..(p + 1) * d];
            for (j, v) in x.row_mut(p).iter_mut().enumerate() {
                *v = tok[j] + pos[j];
            }
        }
        let mut blocks = Vec::with_capacity(s.blocks.len());
        for b in &s.blocks {
            let (y, c) = self.block(b, x, causal);
            blocks.push(c);
            x = y;
        }
        let (out, ln_f) = self.ln(s.ln_f, &x);
        (out, StackCache { tokens: tokens.to_vec(), blocks, ln_f })
    }

    fn stack_bwd(&self, s: &StackIds, dy: &Mat, c: &StackCache, g: &mut Grads) {
        let d = dy.cols;
        let mut dx = self.ln_bwd(s.ln_f, dy, &c.ln_f, g);
        for (b, bc) in s.blocks.iter().zip(&c.blocks).rev() {
            dx = self.block_bwd(b, dx, bc, g);
        }
        let mut dtok = vec![0.0; self.w[s.tok].len()];
        let mut dpos = vec![0.0; self.w[s.pos].len()];
        for (p, &t) in c.tokens.iter().enumerate() {
            for (j, &v) in dx.row(p).iter().enumerate() {
                dtok[t as usize * d + j] += v;
                dpos[p * d + j] += v;
            }
        }
        g.add(s.tok, &dtok);
        g.add(s.pos, &dpos);
    }

    /// Bidirectional text encoder output T (m×d_text).
    pub fn encode_text(&self, tokens: &[u32]) -> (Mat, StackCache) {
        self.stack(&self.ids.text, tokens, self.cfg.d_text, false)
    }

    pub fn encode_text_bwd(&self, dt: &Mat, c: &StackCache, g: &mut Grads) {
        self.stack_bwd(&self.ids.text, dt, c, g)
    }

    /// Causal decoder output S (n×d_mol), before the adapter.
    pub fn decode(&self, tokens: &[u32]) -> (Mat, StackCache) {
        self.stack(&self.ids.mol, tokens, self.cfg.d_mol, true)
    }

    pub fn decode_bwd(&self, ds: &Mat, c: &StackCache, g: &mut Grads) {
        self.stack_bwd(&self.ids.mol, ds, c, g)
    }

    /// Cross-attention sublayer with residual: S + Attn(S, T W_T).
    pub fn cross_attend(&self, t: &Mat, s: &Mat) -> (Mat, AttnCache) {
        let AdapterIds::Cross { proj, attn, .. } = &self.ids.adapter else {
            panic!("cross_attend on an MLP adapter");
        };
        let tp = linear(t, &self.w[proj.w], &self.w[proj.b]);
        let (a, cache) = attention(s, &tp, &self.attn_w(attn), self.cfg.heads, false, !self.cfg.unscaled_attention);
        (s.clone().plus(&a), cache)
    }

    pub fn adapt(&self, t: &Mat, s: &Mat) -> (Mat, AdaptCache) {
        match &self.ids.adapter {
            AdapterIds::Cross { ffn, .. } => {
                let (s1, attn) = self.cross_attend(t, s);
                match ffn {
                    Some((ln, f)) => {
                        let (h, lc) = self.ln(*ln, &s1);
                        let (y, fc) = self.ffn(f, &h);
                        (s1.plus(&y), AdaptCache::Cross { t: t.clone(), attn, ffn: Some((lc, fc)) })
                    }
                    None => (s1, AdaptCache::Cross { t: t.clone(), attn, ffn: None }),
                }
            }
            AdapterIds::Mlp { up, down } => {
                let x = mlp_input(t, s);
                let (y, c) = ffn(&x, &self.w[up.w], &self.w[up.b], &self.w[down.w], &self.w[down.b]);
                (y, AdaptCache::Mlp { m: t.rows, x, up: c })
            }
        }
    }

    /// Returns (dT, dS).
    pub fn adapt_bwd(&self, dy: &Mat, c: &AdaptCache, g: &mut Grads) -> (Mat, Mat) {
        match (&self.ids.adapter, c) {
            (AdapterIds::Cross { proj, attn, ffn }, AdaptCache::Cross { t, attn: ac, ffn: fc }) => {
                let ds1 = match (ffn, fc) {
                    (Some((ln, f)), Some((lc, fcache))) => {
                        let dh = self.ffn_bwd(f, dy, fcache, g);
                        dy.clone().plus(&self.ln_bwd(*ln, &dh, lc, g))
                    }
                    _ => dy.clone(),
                };
                let ag = attention_backward(&ds1, &self.attn_w(attn), ac);
                g.add_attn(attn, &ag.dw);
                let ds = ds1.plus(&ag.dxq);
                let pg = linear_backward(t, &self.w[proj.w], &ag.dxkv, true);
                g.add_lin(*proj, &pg.dw, &pg.db);
                (pg.dx.unwrap(), ds)
            }
            (AdapterIds::Mlp { up, down }, AdaptCache::Mlp { m, x, up: uc }) => {
                let fg = ffn_backward(dy, &self.w[up.w], &self.w[down.w], uc);
                g.add_lin(*up, &fg.dw[0], &fg.dw[1]);
                g.add_lin(*down, &fg.dw[2], &fg.dw[3]);
                let dt_cols = x.cols - dy.cols;
                let mut dtbar = vec![0.0; dt_cols];
                let mut ds = Mat::zeros(dy.rows, dy.cols);
                for i in 0..dy.rows {
                    let r = fg.dx.row(i);
                    for (a, &b) in dtbar.iter_mut().zip(&r[..dt_cols]) {
                        *a += b;
                    }
                    ds.row_mut(i).copy_from_slice(&r[dt_cols..]);
                }
                let mut dt = Mat::zeros(*m, dt_cols);
                for i in 0..*m {
                    for (a, &b) in dt.row_mut(i).iter_mut().zip(&dtbar) {
                        *a = b / *m as f64;
                    }
                }
                (dt, ds)
            }
            _ => unreachable!("adapter cache does not match layout"),
        }
    }

    pub fn head(&self, s: &Mat) -> Mat {
        linear(s, &self.w[self.ids.lm.w], &self.w[self.ids.lm.b])
    }

    pub fn head_bwd(&self, s: &Mat, dlogits: &Mat, g: &mut Grads) -> Mat {
        let lg = linear_backward(s, &self.w[self.ids.lm.w], dlogits, true);
        g.add_lin(self.ids.lm, &lg.dw, &lg.db);
        lg.dx.unwrap()
    }
}

/// Rows of [mean(T) ; s_i].
pub(crate) fn mlp_input(t: &Mat, s: &Mat) -> Mat {
    let dt = t.cols;
    let mut tbar = vec![0.0; dt];
    for i in 0..t.rows {
        for (a, &b) in tbar.iter_mut().zip(t.row(i)) {
            *a += b;
        }
    }
    for v in &mut tbar {
        *v /= t.rows as f64;
    }
    let mut x = Mat::zeros(s.rows, dt + s.cols);
    for i in 0..s.rows {
        let r = x.row_mut(i);
        r[..dt].copy_from_slice(&tbar);
        r[dt..].copy_from_slice(s.row(i));
    }
    x
}

/// Summed cross-entropy over non-pad targets and its gradient, each row
/// scaled by `scale`.
pub(crate) fn cross_entropy(logits: &Mat, targets: &[u32], pad: u32, scale: f64) -> (f64, usize, Mat) {
    let mut d = Mat::zeros(logits.rows, logits.cols);
    let mut total = 0.0;
    let mut count = 0;
    for (i, &t) in targets.iter().enumerate() {
        if t == pad {
            continue;
        }
        let row = logits.row(i);
        total += log_sum_exp(row) - row[t as usize];
        count += 1;
        let dr = d.row_mut(i);
        dr.copy_from_slice(row);
        softmax_in_place(dr);
        dr[t as usize] -= 1.0;
        for v in dr.iter_mut() {
            *v *= scale;
        }
    }
    (total, count, d)
}
