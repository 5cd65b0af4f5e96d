//! Mix-FFN: `y = W2 · GELU(DWConv3x3(W1 · x + b1)) + b2 + x`.

use super::{Matrix, Result, SegError, TokenMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct FfnParams {
    /// `C × H`.
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// One 3×3 kernel per hidden channel, row-major taps.
    pub dw_kernel: Vec<[f64; 9]>,
    pub dw_bias: Vec<f64>,
    /// `H × C`.
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl FfnParams {
    /// All-zero parameters for `C` channels and `H` hidden units.
    pub fn zeros(channels: usize, hidden: usize) -> Self {
        Self {
            w1: Matrix::zeros(channels, hidden),
            b1: vec![0.0; hidden],
            dw_kernel: vec![[0.0; 9]; hidden],
            dw_bias: vec![0.0; hidden],
            w2: Matrix::zeros(hidden, channels),
            b2: vec![0.0; channels],
        }
    }

    pub fn hidden(&self) -> usize {
        self.w1.cols()
    }
}

/// Exact (erf-based) GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Per-channel 3×3 cross-correlation over an `h × w` token grid (tokens in
/// row-major spatial order), zero-padded at the borders.
pub fn depthwise_conv3x3(x: &TokenMatrix, (h, w): (usize, usize), kernel: &[[f64; 9]], bias: &[f64]) -> Result<TokenMatrix> {
    let (n, ch) = x.shape();
    if h * w != n {
        return Err(SegError::ShapeMismatch(format!("grid {h}x{w} does not hold {n} tokens")));
    }
    if kernel.len() != ch || bias.len() != ch {
        return Err(SegError::ShapeMismatch(format!(
            "{} kernels / {} biases for {ch} channels",
            kernel.len(),
            bias.len()
        )));
    }
    Ok(Matrix::from_fn(n, ch, |token, k| {
        let (r, c) = ((token / w) as isize, (token % w) as isize);
        let mut acc = bias[k];
        for dr in -1..=1isize {
            for dc in -1..=1isize {
                let (rr, cc) = (r + dr, c + dc);
                if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                    continue;
                }
                let tap = kernel[k][((dr + 1) * 3 + (dc + 1)) as usize];
                acc += tap * x.get(rr as usize * w + cc as usize, k);
            }
        }
        acc
    }))
}

pub fn mix_ffn(x: &TokenMatrix, shape: (usize, usize), p: &FfnParams) -> Result<TokenMatrix> {
    let c = x.cols();
    if p.w1.rows() != c || p.w2.cols() != c || p.w2.rows() != p.hidden() {
        return Err(SegError::ShapeMismatch(format!(
            "w1 {:?} / w2 {:?} incompatible with {c} channels",
            p.w1.shape(),
            p.w2.shape()
        )));
    }
    let hidden = x.matmul(&p.w1)?.add_row_bias(&p.b1)?;
    let mixed = depthwise_conv3x3(&hidden, shape, &p.dw_kernel, &p.dw_bias)?.map(gelu);
    let out = mixed.matmul(&p.w2)?.add_row_bias(&p.b2)?;
    out.add(x)
}
