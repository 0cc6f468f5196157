//! Vector-length-agnostic convolution kernels on an emulated vector unit.
//!
//! The kernels (naive, 3-loop and 6-loop GEMM, im2col, Winograd F(6x6,3x3))
//! are written against [`vla::Vpu`], which grants vector lengths the way
//! `vsetvl` does and records every memory access it performs. Those traces
//! feed [`costsim`], a two-level LRU cache model with a simple cycle
//! estimate, to study how vector length, L2 size and lane count interact.
//!
//! ```
//! use vlaconv::gemm::{gemm_3loop, gemm_naive, GemmDims};
//! use vlaconv::tensor::Matrix;
//! use vlaconv::vla::{MachineConfig, NullSink, Vpu};
//!
//! let dims = GemmDims::new(3, 5, 4);
//! let a = Matrix::from_fn(3, 4, |i, k| (i + k) as f32);
//! let b = Matrix::from_fn(4, 5, |k, j| (k * j) as f32 - 2.0);
//! let mut expect = Matrix::zeros(3, 5);
//! gemm_naive(&a, &b, &mut expect, &dims).unwrap();
//!
//! let mut vpu = Vpu::new(MachineConfig::new(512, 8).unwrap(), NullSink);
//! let mut c = Matrix::zeros(3, 5);
//! gemm_3loop(&a, &b, &mut c, &dims, &mut vpu, 16).unwrap();
//! assert_eq!(c, expect);
//! ```

pub mod convlayer;
pub mod costsim;
pub mod error;
pub mod gemm;
pub mod im2col;
pub mod model;
pub mod reference;
pub mod tensor;
pub mod vla;
pub mod winograd;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/vector-length.md")]
    mod vector_length {}
    #[doc = include_str!("../../../book/src/gemm.md")]
    mod gemm {}
    #[doc = include_str!("../../../book/src/convolution.md")]
    mod convolution {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/cost-model.md")]
    mod cost_model {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
