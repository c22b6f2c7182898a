//! Row-major f64 kernels with hand-written backward passes.

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Mat { rows, cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub(crate) fn add(&mut self, other: &Mat) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub(crate) fn plus(mut self, other: &Mat) -> Mat {
        self.add(other);
        self
    }
}

/// x (n×k) · w (k×p).
pub(crate) fn matmul(x: &Mat, w: &[f64], p: usize) -> Mat {
    let k = x.cols;
    assert_eq!(w.len(), k * p, "weight shape");
    let mut out = Mat::zeros(x.rows, p);
    for i in 0..x.rows {
        let orow = &mut out.data[i * p..(i + 1) * p];
        for (t, &xv) in x.row(i).iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (o, &wv) in orow.iter_mut().zip(&w[t * p..(t + 1) * p]) {
                *o += xv * wv;
            }
        }
    }
    out
}

/// dy (n×p) · wᵀ where w is k×p.
pub(crate) fn matmul_wt(dy: &Mat, w: &[f64], k: usize) -> Mat {
    let p = dy.cols;
    let mut out = Mat::zeros(dy.rows, k);
    for i in 0..dy.rows {
        let dr = dy.row(i);
        for t in 0..k {
            out.data[i * k + t] = dot(dr, &w[t * p..(t + 1) * p]);
        }
    }
    out
}

/// dw (k×p) += xᵀ · dy.
pub(crate) fn acc_xt_dy(x: &Mat, dy: &Mat, dw: &mut [f64]) {
    let p = dy.cols;
    for i in 0..x.rows {
        let dr = dy.row(i);
        for (t, &xv) in x.row(i).iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (g, &d) in dw[t * p..(t + 1) * p].iter_mut().zip(dr) {
                *g += xv * d;
            }
        }
    }
}

pub(crate) fn acc_rows(dy: &Mat, db: &mut [f64]) {
    for i in 0..dy.rows {
        for (g, &d) in db.iter_mut().zip(dy.row(i)) {
            *g += d;
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn linear(x: &Mat, w: &[f64], b: &[f64]) -> Mat {
    let mut y = matmul(x, w, b.len());
    for i in 0..y.rows {
        for (v, &bv) in y.row_mut(i).iter_mut().zip(b) {
            *v += bv;
        }
    }
    y
}

/// Gradients of a linear map; `dx` only when requested.
pub(crate) struct LinearGrad {
    pub dx: Option<Mat>,
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

pub(crate) fn linear_backward(x: &Mat, w: &[f64], dy: &Mat, need_dx: bool) -> LinearGrad {
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; dy.cols];
    acc_xt_dy(x, dy, &mut dw);
    acc_rows(dy, &mut db);
    LinearGrad { dx: need_dx.then(|| matmul_wt(dy, w, x.cols)), dw, db }
}

pub(crate) const LN_EPS: f64 = 1e-5;

pub(crate) struct LnCache {
    xhat: Mat,
    rstd: Vec<f64>,
}

pub(crate) fn layer_norm(x: &Mat, g: &[f64], b: &[f64]) -> (Mat, LnCache) {
    let d = x.cols as f64;
    let mut xhat = Mat::zeros(x.rows, x.cols);
    let mut y = Mat::zeros(x.rows, x.cols);
    let mut rstd = Vec::with_capacity(x.rows);
    for i in 0..x.rows {
        let r = x.row(i);
        let mean = r.iter().sum::<f64>() / d;
        let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let s = 1.0 / (var + LN_EPS).sqrt();
        rstd.push(s);
        for j in 0..x.cols {
            let h = (r[j] - mean) * s;
            xhat.data[i * x.cols + j] = h;
            y.data[i * x.cols + j] = h * g[j] + b[j];
        }
    }
    (y, LnCache { xhat, rstd })
}

pub(crate) struct LnGrad {
    pub dx: Mat,
    pub dg: Vec<f64>,
    pub db: Vec<f64>,
}

pub(crate) fn layer_norm_backward(dy: &Mat, g: &[f64], c: &LnCache) -> LnGrad {
    let n = dy.cols;
    let mut dx = Mat::zeros(dy.rows, n);
    let mut dg = vec![0.0; n];
    let mut db = vec![0.0; n];
    for i in 0..dy.rows {
        let dr = dy.row(i);
        let xh = c.xhat.row(i);
        let mut mean_dh = 0.0;
        let mut mean_dh_xh = 0.0;
        for j in 0..n {
            dg[j] += dr[j] * xh[j];
            db[j] += dr[j];
            let dh = dr[j] * g[j];
            mean_dh += dh;
            mean_dh_xh += dh * xh[j];
        }
        mean_dh /= n as f64;
        mean_dh_xh /= n as f64;
        let out = dx.row_mut(i);
        for j in 0..n {
            out[j] = c.rstd[i] * (dr[j] * g[j] - mean_dh - xh[j] * mean_dh_xh);
        }
    }
    LnGrad { dx, dg, db }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh approximation of GELU.
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Numerically stable softmax in place over `xs`.
pub(crate) fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Weights of one multi-head attention layer; every matrix is d_in×d.
pub(crate) struct AttnWeights<'a> {
    pub wq: &'a [f64],
    pub bq: &'a [f64],
    pub wk: &'a [f64],
    pub bk: &'a [f64],
    pub wv: &'a [f64],
    pub bv: &'a [f64],
    pub wo: &'a [f64],
    pub bo: &'a [f64],
}

pub(crate) struct AttnCache {
    xq: Mat,
    xkv: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    /// Attention probabilities per head, n×m.
    pub p: Vec<Mat>,
    o: Mat,
    scale: f64,
    heads: usize,
}

pub(crate) struct AttnGrad {
    pub dxq: Mat,
    pub dxkv: Mat,
    /// Gradients in the order wq, bq, wk, bk, wv, bv, wo, bo.
    pub dw: [Vec<f64>; 8],
}

/// Queries from `xq` (n rows), keys and values from `xkv` (m rows).
/// With `causal`, query i only sees keys j ≤ i.
pub(crate) fn attention(
    xq: &Mat,
    xkv: &Mat,
    w: &AttnWeights,
    heads: usize,
    causal: bool,
    scaled: bool,
) -> (Mat, AttnCache) {
    let d = w.bq.len();
    let dh = d / heads;
    let scale = if scaled { 1.0 / (dh as f64).sqrt() } else { 1.0 };
    let q = linear(xq, w.wq, w.bq);
    let k = linear(xkv, w.wk, w.bk);
    let v = linear(xkv, w.wv, w.bv);
    let (n, m) = (xq.rows, xkv.rows);
    let mut o = Mat::zeros(n, d);
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        let mut p = Mat::zeros(n, m);
        for i in 0..n {
            let visible = if causal { (i + 1).min(m) } else { m };
            let row = &mut p.data[i * m..i * m + visible];
            for (j, s) in row.iter_mut().enumerate() {
                *s = dot(&q.row(i)[cols.clone()], &k.row(j)[cols.clone()]) * scale;
            }
            softmax_in_place(row);
            for j in 0..visible {
                let pij = p.data[i * m + j];
                for c in cols.clone() {
                    o.data[i * d + c] += pij * v.data[j * d + c];
                }
            }
        }
        probs.push(p);
    }
    let out = linear(&o, w.wo, w.bo);
    let cache = AttnCache { xq: xq.clone(), xkv: xkv.clone(), q, k, v, p: probs, o, scale, heads };
    (out, cache)
}

pub(crate) fn attention_backward(dout: &Mat, w: &AttnWeights, c: &AttnCache) -> AttnGrad {
    let d = w.bq.len();
    let dh = d / c.heads;
    let (n, m) = (c.q.rows, c.k.rows);
    let out_g = linear_backward(&c.o, w.wo, dout, true);
    let d_o = out_g.dx.unwrap();
    let mut dq = Mat::zeros(n, d);
    let mut dk = Mat::zeros(m, d);
    let mut dv = Mat::zeros(m, d);
    let mut dp = vec![0.0; m];
    for h in 0..c.heads {
        let cols = h * dh..(h + 1) * dh;
        let p = &c.p[h];
        for i in 0..n {
            let doi = &d_o.row(i)[cols.clone()];
            for j in 0..m {
                dp[j] = dot(doi, &c.v.row(j)[cols.clone()]);
                let pij = p.at(i, j);
                if pij != 0.0 {
                    for (t, col) in cols.clone().enumerate() {
                        dv.data[j * d + col] += pij * doi[t];
                    }
                }
            }
            let inner: f64 = (0..m).map(|j| p.at(i, j) * dp[j]).sum();
            for j in 0..m {
                let ds = p.at(i, j) * (dp[j] - inner) * c.scale;
                if ds == 0.0 {
                    continue;
                }
                for col in cols.clone() {
                    dq.data[i * d + col] += ds * c.k.data[j * d + col];
                    dk.data[j * d + col] += ds * c.q.data[i * d + col];
                }
            }
        }
    }
    let gq = linear_backward(&c.xq, w.wq, &dq, true);
    let gk = linear_backward(&c.xkv, w.wk, &dk, true);
    let gv = linear_backward(&c.xkv, w.wv, &dv, true);
    AttnGrad {
        dxq: gq.dx.unwrap(),
        dxkv: gk.dx.unwrap().plus(&gv.dx.unwrap()),
        dw: [gq.dw, gq.db, gk.dw, gk.db, gv.dw, gv.db, out_g.dw, out_g.db],
    }
}

pub(crate) struct FfnCache {
    x: Mat,
    u: Mat,
    a: Mat,
}

pub(crate) fn ffn(x: &Mat, w1: &[f64], b1: &[f64], w2: &[f64], b2: &[f64]) -> (Mat, FfnCache) {
    let u = linear(x, w1, b1);
    let a = Mat { rows: u.rows, cols: u.cols, data: u.data.iter().map(|&v| gelu(v)).collect() };
    let y = linear(&a, w2, b2);
    (y, FfnCache { x: x.clone(), u, a })
}

pub(crate) struct FfnGrad {
    pub dx: Mat,
    /// w1, b1, w2, b2.
    pub dw: [Vec<f64>; 4],
}

pub(crate) fn ffn_backward(dy: &Mat, w1: &[f64], w2: &[f64], c: &FfnCache) -> FfnGrad {
    let g2 = linear_backward(&c.a, w2, dy, true);
    let mut du = g2.dx.unwrap();
    for (d, &u) in du.data.iter_mut().zip(&c.u.data) {
        *d *= gelu_grad(u);
    }
    let g1 = linear_backward(&c.x, w1, &du, true);
    FfnGrad { dx: g1.dx.unwrap(), dw: [g1.dw, g1.db, g2.dw, g2.db] }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
        let e = 1e-6;
        (f(x + e) - f(x - e)) / (2.0 * e)
    }

    #[test]
    fn gelu_derivative() {
        for x in [-3.0, -0.7, 0.0, 0.4, 2.5] {
            assert!((gelu_grad(x) - numeric(gelu, x)).abs() < 1e-8);
        }
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut v = vec![1.0, 2.0, -1.0, 1000.0];
        softmax_in_place(&mut v);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn matmul_small() {
        let x = Mat::from_vec(1, 2, vec![1.0, 2.0]);
        let y = matmul(&x, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3);
        assert_eq!(y.data, vec![9.0, 12.0, 15.0]);
        let back = matmul_wt(&y, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2);
        assert_eq!(back.data, vec![9.0 + 24.0 + 45.0, 36.0 + 60.0 + 90.0]);
    }
}
