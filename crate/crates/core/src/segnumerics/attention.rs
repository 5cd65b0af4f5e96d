//! Sequence-reduction self-attention.
//!
//! Keys and values are computed from a shortened sequence: `γ` consecutive
//! tokens are concatenated (row-major) into one `γC`-wide row and mapped back
//! to `C` channels by a linear layer, shrinking `N × C` to `N/γ × C`.

use super::{Matrix, Result, SegError, TokenMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub d_head: usize,
    /// Reduction ratio; must divide the token count.
    pub gamma: usize,
    /// `γC × C`.
    pub w_reduce: Matrix,
    /// `C`.
    pub b_reduce: Vec<f64>,
    /// `C × d_head` each.
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    /// `d_head` each.
    pub b_q: Vec<f64>,
    pub b_k: Vec<f64>,
    pub b_v: Vec<f64>,
}

impl AttentionParams {
    /// Parameters with zero biases.
    pub fn new(gamma: usize, w_reduce: Matrix, b_reduce: Vec<f64>, w_q: Matrix, w_k: Matrix, w_v: Matrix) -> Self {
        let d_head = w_q.cols();
        Self {
            d_head,
            gamma,
            w_reduce,
            b_reduce,
            w_q,
            w_k,
            w_v,
            b_q: vec![0.0; d_head],
            b_k: vec![0.0; d_head],
            b_v: vec![0.0; d_head],
        }
    }

    fn check(&self, channels: usize) -> Result<()> {
        let want = |name: &str, m: &Matrix, shape: (usize, usize)| {
            if m.shape() != shape {
                Err(SegError::ShapeMismatch(format!("{name} is {:?}, expected {shape:?}", m.shape())))
            } else {
                Ok(())
            }
        };
        if self.d_head == 0 || self.gamma == 0 {
            return Err(SegError::InvalidArgument("d_head and gamma must be positive".into()));
        }
        want("w_reduce", &self.w_reduce, (self.gamma * channels, channels))?;
        want("w_q", &self.w_q, (channels, self.d_head))?;
        want("w_k", &self.w_k, (channels, self.d_head))?;
        want("w_v", &self.w_v, (channels, self.d_head))?;
        for (name, b, n) in [
            ("b_reduce", &self.b_reduce, channels),
            ("b_q", &self.b_q, self.d_head),
            ("b_k", &self.b_k, self.d_head),
            ("b_v", &self.b_v, self.d_head),
        ] {
            if b.len() != n {
                return Err(SegError::ShapeMismatch(format!("{name} has {} entries, expected {n}", b.len())));
            }
        }
        Ok(())
    }
}

/// `Linear(γC, C) · K.reshape(N/γ, γC)`.
pub fn reduce_tokens(k: &TokenMatrix, gamma: usize, w_reduce: &Matrix, b_reduce: &[f64]) -> Result<TokenMatrix> {
    let (n, c) = k.shape();
    if gamma == 0 || n % gamma != 0 {
        return Err(SegError::IndivisibleSequence { n, gamma });
    }
    if w_reduce.shape() != (gamma * c, c) {
        return Err(SegError::ShapeMismatch(format!(
            "reduction weight is {:?}, expected {:?}",
            w_reduce.shape(),
            (gamma * c, c)
        )));
    }
    k.reshaped(n / gamma, gamma * c).matmul(w_reduce)?.add_row_bias(b_reduce)
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let cols = m.cols();
    let mut data = Vec::with_capacity(m.data().len());
    for r in 0..m.rows() {
        let row = m.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = data.len();
        data.extend(row.iter().map(|v| (v - max).exp()));
        let sum: f64 = data[start..].iter().sum();
        for v in &mut data[start..] {
            *v /= sum;
        }
    }
    Matrix::from_fn(m.rows(), cols, |r, c| data[r * cols + c])
}

/// `softmax(Q Kᵀ / √d_head) V` with `K`, `V` projected from the reduced
/// sequence. Output is `N × d_head`.
pub fn sr_attention(x: &TokenMatrix, p: &AttentionParams) -> Result<TokenMatrix> {
    p.check(x.cols())?;
    let q = x.matmul(&p.w_q)?.add_row_bias(&p.b_q)?;
    let reduced = reduce_tokens(x, p.gamma, &p.w_reduce, &p.b_reduce)?;
    let k = reduced.matmul(&p.w_k)?.add_row_bias(&p.b_k)?;
    let v = reduced.matmul(&p.w_v)?.add_row_bias(&p.b_v)?;
    let scale = 1.0 / (p.d_head as f64).sqrt();
    let scores = q.matmul(&k.transpose())?.map(|s| s * scale);
    softmax_rows(&scores).matmul(&v)
}
