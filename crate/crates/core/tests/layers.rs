use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vlaconv::convlayer::{
    forward, post_ops, select_algorithm, Activation, Algorithm, BatchNormParams, ConvContext,
    ConvLayerSpec, GemmKernel,
};
use vlaconv::model::{gemm_dims_for_layer, parse_model_spec};
use vlaconv::reference::{direct_conv, max_relative_error};
use vlaconv::tensor::Tensor3;
use vlaconv::vla::{MachineConfig, NullSink, Vpu};

fn vpu(bits: u32) -> Vpu<NullSink> {
    Vpu::new(MachineConfig::new(bits, 8).unwrap(), NullSink)
}

fn random_input(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor3 {
    Tensor3::from_fn(c, h, w, |_, _, _| rng.gen_range(-1.0f32..1.0))
}

fn spec(
    c: usize,
    h: usize,
    w: usize,
    n: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> ConvLayerSpec {
    ConvLayerSpec {
        in_c: c,
        in_h: h,
        in_w: w,
        filters: n,
        k,
        stride,
        pad,
        batchnorm: false,
        activation: Activation::Linear,
    }
}

fn reference(
    spec: &ConvLayerSpec,
    input: &Tensor3,
    w: &[f32],
    bn: Option<&BatchNormParams>,
    bias: &[f32],
) -> Tensor3 {
    let mut out = direct_conv(input, w, spec.filters, spec.k, spec.stride, spec.pad);
    post_ops(&mut out, bn, bias, spec.activation);
    out
}

fn scaled_error(got: &Tensor3, want: &Tensor3) -> f32 {
    let scale = want.as_slice().iter().fold(0.0f32, |m, v| m.max(v.abs()));
    max_relative_error(
        got.as_slice(),
        want.as_slice(),
        1e-2 * scale + f32::MIN_POSITIVE,
    )
}

#[test]
fn every_gemm_kernel_matches_direct_convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let kernels = [
        GemmKernel::Naive,
        GemmKernel::ThreeLoop { unroll: 16 },
        GemmKernel::SixLoop { blocks: None },
    ];
    for (k, stride, pad) in [(1, 1, 0), (3, 1, 1), (3, 2, 1), (1, 2, 0)] {
        let s = spec(5, 13, 11, 7, k, stride, pad);
        let input = random_input(&mut rng, 5, 13, 11);
        let w: Vec<f32> = (0..s.weight_len())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let want = reference(&s, &input, &w, None, &[0.0; 7]);
        for gemm in kernels {
            let ctx = ConvContext {
                gemm,
                algorithm: Some(Algorithm::Im2colGemm),
            };
            let got = forward(&s, &input, &w, None, &[0.0; 7], &ctx, &mut vpu(512)).unwrap();
            assert!(
                scaled_error(&got, &want) < 1e-5,
                "{gemm:?} k={k} s={stride}"
            );
        }
    }
}

#[test]
fn winograd_and_gemm_paths_agree_with_batchnorm_and_leaky() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut s = spec(6, 20, 17, 9, 3, 1, 1);
    s.batchnorm = true;
    s.activation = Activation::Leaky;
    let input = random_input(&mut rng, 6, 20, 17);
    let w: Vec<f32> = (0..s.weight_len())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let bn = BatchNormParams {
        mean: (0..9).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        variance: (0..9).map(|_| rng.gen_range(0.5..2.0)).collect(),
        scale: (0..9).map(|_| rng.gen_range(0.5..1.5)).collect(),
        epsilon: 1e-6,
    };
    let bias: Vec<f32> = (0..9).map(|_| rng.gen_range(-0.1..0.1)).collect();
    let want = reference(&s, &input, &w, Some(&bn), &bias);

    assert_eq!(select_algorithm(&s), Algorithm::Winograd);
    let wino = forward(
        &s,
        &input,
        &w,
        Some(&bn),
        &bias,
        &ConvContext::default(),
        &mut vpu(1024),
    )
    .unwrap();
    assert!(scaled_error(&wino, &want) < 1e-3);

    let ctx = ConvContext {
        algorithm: Some(Algorithm::Im2colGemm),
        ..ConvContext::default()
    };
    let gemm = forward(&s, &input, &w, Some(&bn), &bias, &ctx, &mut vpu(1024)).unwrap();
    assert!(scaled_error(&gemm, &want) < 1e-5);
}

#[test]
fn forcing_winograd_on_unsupported_layers_fails() {
    let s = spec(2, 9, 9, 2, 3, 2, 1);
    let input = Tensor3::zeros(2, 9, 9);
    let w = vec![0.0; s.weight_len()];
    let ctx = ConvContext {
        algorithm: Some(Algorithm::Winograd),
        ..ConvContext::default()
    };
    assert!(forward(&s, &input, &w, None, &[0.0; 2], &ctx, &mut vpu(512)).is_err());
}

#[test]
fn model_chain_runs_end_to_end() {
    let model = parse_model_spec(
        "name small\ninput 24 24 3\nconv 8 3 1 1 leaky bn\nconv 16 3 2 1 leaky bn\nconv 8 1 1 0 leaky bn\nconv 4 3 1 1 linear\n",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (h, w, c) = model.input;
    let mut x = random_input(&mut rng, c, h, w);
    let mut expect = x.clone();
    for layer in &model.layers {
        let weights: Vec<f32> = (0..layer.weight_len())
            .map(|_| rng.gen_range(-0.3..0.3))
            .collect();
        let bn = layer
            .batchnorm
            .then(|| BatchNormParams::identity(layer.filters));
        let bias = vec![0.0; layer.filters];
        x = forward(
            layer,
            &x,
            &weights,
            bn.as_ref(),
            &bias,
            &ConvContext::default(),
            &mut vpu(512),
        )
        .unwrap();
        expect = reference(layer, &expect, &weights, bn.as_ref(), &bias);
        let d = gemm_dims_for_layer(layer).unwrap();
        assert_eq!(x.as_slice().len(), d.m * d.n);
    }
    assert_eq!((x.channels(), x.height(), x.width()), (4, 12, 12));
    assert!(scaled_error(&x, &expect) < 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn algorithm_choice_does_not_change_results(
        c in 1usize..6, n in 1usize..6, h in 3usize..16, w in 3usize..16, seed in any::<u64>(),
    ) {
        let s = spec(c, h, w, n, 3, 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = random_input(&mut rng, c, h, w);
        let weights: Vec<f32> = (0..s.weight_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bias = vec![0.0; n];
        let a = forward(&s, &input, &weights, None, &bias, &ConvContext::default(), &mut vpu(512)).unwrap();
        let ctx = ConvContext { algorithm: Some(Algorithm::Im2colGemm), ..ConvContext::default() };
        let b = forward(&s, &input, &weights, None, &bias, &ctx, &mut vpu(512)).unwrap();
        prop_assert!(scaled_error(&a, &b) < 1e-3);
    }
}
