//! Scalar reference implementations used as oracles.
//!
//! Nothing here shares code with the optimized kernels: the convolution is a
//! plain seven-deep loop nest and the GEMM computes each output cell as an
//! independent dot product.

use crate::tensor::{Matrix, Tensor3};

/// Direct cross-correlation with zero padding; weights are `n x c x k x k`.
/// Each output accumulates channel by channel, then row by row, then column
/// by column, starting from zero.
pub fn direct_conv(
    input: &Tensor3,
    weights: &[f32],
    filters: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Tensor3 {
    let (c, h, w) = (input.channels(), input.height(), input.width());
    assert_eq!(weights.len(), filters * c * k * k, "weight length");
    let out_h = (h + 2 * pad - k) / stride + 1;
    let out_w = (w + 2 * pad - k) / stride + 1;
    let mut out = Tensor3::zeros(filters, out_h, out_w);
    for f in 0..filters {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut acc = 0.0f32;
                for ch in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let y = (oy * stride + ky) as isize - pad as isize;
                            let x = (ox * stride + kx) as isize - pad as isize;
                            let wv = weights[((f * c + ch) * k + ky) * k + kx];
                            acc += wv * input.get_padded(ch, y, x);
                        }
                    }
                }
                out.set(f, oy, ox, acc);
            }
        }
    }
    out
}

/// `c0 + sum_k (alpha * a[i][k]) * b[k][j]` per cell, ascending `k`.
pub fn gemm_dot(a: &Matrix, b: &Matrix, c0: &Matrix, alpha: f32) -> Matrix {
    assert_eq!(a.cols(), b.rows());
    Matrix::from_fn(a.rows(), b.cols(), |i, j| {
        (0..a.cols()).fold(c0.get(i, j), |acc, k| {
            let av = if alpha == 1.0 {
                a.get(i, k)
            } else {
                alpha * a.get(i, k)
            };
            acc + av * b.get(k, j)
        })
    })
}

/// Largest elementwise `|x - y| / (|y| + eps)`.
pub fn max_relative_error(actual: &[f32], expected: &[f32], eps: f32) -> f32 {
    assert_eq!(actual.len(), expected.len());
    actual
        .iter()
        .zip(expected)
        .map(|(&x, &y)| (x - y).abs() / (y.abs() + eps))
        .fold(0.0, f32::max)
}
