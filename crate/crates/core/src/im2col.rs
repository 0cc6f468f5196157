//! Lowering of a convolution input to the `K x N` matrix consumed by GEMM.
//!
//! Row `(ch * k + ky) * k + kx` of the lowered matrix holds input channel
//! `ch` sampled at kernel tap `(ky, kx)`; column `oy * out_w + ox` is output
//! position `(oy, ox)`. Weights laid out filter-major then channel-major
//! (`n x c x k x k`) are therefore directly the `M x K` GEMM operand.
//! Taps that fall in the padding read as zero.

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor3};

/// Output spatial size of a `k x k` window at stride `s` over a `p`-padded
/// `h x w` input.
pub fn conv_output_dims(
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    p: usize,
) -> Result<(usize, usize)> {
    if k == 0 || s == 0 {
        return Err(Error::InvalidSpec(format!(
            "kernel size and stride must be positive (k={k}, s={s})"
        )));
    }
    if h + 2 * p < k || w + 2 * p < k {
        return Err(Error::InvalidSpec(format!(
            "{k}x{k} kernel does not fit a {h}x{w} input with padding {p}"
        )));
    }
    Ok(((h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1))
}

pub fn im2col(input: &Tensor3, k: usize, s: usize, p: usize) -> Result<Matrix> {
    let (out_h, out_w) = conv_output_dims(input.height(), input.width(), k, s, p)?;
    let rows = input.channels() * k * k;
    let cols = out_h * out_w;
    let mut m = Matrix::zeros(rows, cols);
    let data = m.as_mut_slice();
    for ch in 0..input.channels() {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut data[row * cols..(row + 1) * cols];
                for oy in 0..out_h {
                    let y = (oy * s + ky) as isize - p as isize;
                    for ox in 0..out_w {
                        let x = (ox * s + kx) as isize - p as isize;
                        dst[oy * out_w + ox] = input.get_padded(ch, y, x);
                    }
                }
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn output_dims_examples() {
        assert_eq!(conv_output_dims(608, 608, 3, 1, 1).unwrap(), (608, 608));
        assert_eq!(608 * 608, 369_664);
        assert_eq!(conv_output_dims(4, 4, 4, 1, 0).unwrap(), (1, 1));
        assert_eq!(conv_output_dims(5, 5, 3, 2, 1).unwrap(), (3, 3));
    }

    #[test]
    fn output_dims_match_window_enumeration() {
        // count window origins that fit inside the padded image
        for h in 1..12 {
            for k in 1..5 {
                for s in 1..4 {
                    for p in 0..3 {
                        let padded = h + 2 * p;
                        let expected = (0..padded).step_by(s).filter(|&o| o + k <= padded).count();
                        match conv_output_dims(h, h, k, s, p) {
                            Ok((oh, ow)) => {
                                assert_eq!(oh, expected);
                                assert_eq!(ow, expected);
                            }
                            Err(_) => assert_eq!(expected, 0),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        assert!(matches!(
            conv_output_dims(2, 2, 5, 1, 1),
            Err(Error::InvalidSpec(_))
        ));
        assert!(conv_output_dims(4, 4, 3, 0, 0).is_err());
    }

    #[test]
    fn single_window_is_flattened_input() {
        let input = Tensor3::from_fn(1, 3, 3, |_, y, x| (y * 3 + x) as f32 + 1.0);
        let m = im2col(&input, 3, 1, 0).unwrap();
        assert_eq!((m.rows(), m.cols()), (9, 1));
        assert_eq!(m.as_slice(), input.as_slice());
    }

    #[test]
    fn zero_input_lowers_to_zero() {
        let m = im2col(&Tensor3::zeros(3, 7, 5), 3, 2, 1).unwrap();
        assert!(m.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn padded_two_channel_case_matches_index_oracle() {
        let input = Tensor3::from_fn(2, 4, 4, |c, y, x| (100 * c + 10 * y + x) as f32 + 1.0);
        let m = im2col(&input, 3, 1, 1).unwrap();
        assert_eq!((m.rows(), m.cols()), (18, 16));
        for row in 0..18 {
            let (c, tap) = (row / 9, row % 9);
            let (ky, kx) = (tap / 3, tap % 3);
            for col in 0..16 {
                let (oy, ox) = (col / 4, col % 4);
                let (y, x) = (oy as i64 + ky as i64 - 1, ox as i64 + kx as i64 - 1);
                let expect = if (0..4).contains(&y) && (0..4).contains(&x) {
                    (100 * c as i64 + 10 * y + x) as f32 + 1.0
                } else {
                    0.0
                };
                assert_eq!(m.get(row, col), expect, "row {row} col {col}");
            }
        }
    }

    proptest! {
        #[test]
        fn unpadded_columns_are_drawn_from_input(
            c in 1usize..3, h in 3usize..8, w in 3usize..8, k in 1usize..4, s in 1usize..3,
        ) {
            let input = Tensor3::from_fn(c, h, w, |ch, y, x| (1 + ch * 97 + y * 13 + x) as f32);
            let m = im2col(&input, k, s, 0).unwrap();
            let mut pool: Vec<i64> = input.as_slice().iter().map(|&v| v as i64).collect();
            pool.sort_unstable();
            for col in 0..m.cols() {
                let mut column: Vec<i64> = (0..m.rows()).map(|r| m.get(r, col) as i64).collect();
                column.sort_unstable();
                // sub-multiset check by merge walk
                let mut it = pool.iter();
                for v in column {
                    prop_assert!(it.any(|&p| p == v));
                }
            }
        }
    }
}
