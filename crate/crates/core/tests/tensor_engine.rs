mod common;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxadapt::nn::batchnorm::BatchNorm;
use voxadapt::nn::conv::{conv2d_depthwise, conv2d_pointwise, conv2d_standard, Padding};
use voxadapt::nn::dense::fully_connected;
use voxadapt::nn::grl::GradientReversal;
use voxadapt::nn::optim::{adam_step, AdamConfig, Param};
use voxadapt::nn::Mode;
use voxadapt::Tensor;

fn at(t: &Tensor, n: usize, y: usize, x: usize, c: usize) -> f64 {
    let s = t.shape();
    t.data()[((n * s[1] + y) * s[2] + x) * s[3] + c]
}

/// Direct nested-loop cross-correlation with zero padding.
fn correlate_oracle(input: &Tensor, kernel: &Tensor, pad: usize) -> Tensor {
    let (n, h, w, ci) = input.as_batched().unwrap();
    let ks = kernel.shape();
    let (hk, wk, co) = (ks[0], ks[1], ks[3]);
    let ho = h + 2 * pad - hk + 1;
    let wo = w + 2 * pad - wk + 1;
    let mut out = Tensor::zeros(&[n, ho, wo, co]);
    for b in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                for o in 0..co {
                    let mut acc = 0.0;
                    for ky in 0..hk {
                        for kx in 0..wk {
                            let iy = oy as isize + ky as isize - pad as isize;
                            let ix = ox as isize + kx as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            for c in 0..ci {
                                let kv = kernel.data()[((ky * wk + kx) * ci + c) * co + o];
                                acc += kv * at(input, b, iy as usize, ix as usize, c);
                            }
                        }
                    }
                    out.data_mut()[((b * ho + oy) * wo + ox) * co + o] = acc;
                }
            }
        }
    }
    out
}

fn max_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn standard_conv_matches_direct_correlation() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::uniform(&[1, 5, 5, 2], -1.0, 1.0, &mut rng);
        let k = Tensor::uniform(&[3, 3, 2, 4], -1.0, 1.0, &mut rng);
        let same = conv2d_standard(&x, &k, Padding::Same).unwrap();
        assert!(max_diff(&same, &correlate_oracle(&x, &k, 1)) < 1e-12);
        let valid = conv2d_standard(&x, &k, Padding::Valid).unwrap();
        assert!(max_diff(&valid, &correlate_oracle(&x, &k, 0)) < 1e-12);
    }
}

#[test]
fn depthwise_conv_matches_per_channel_correlation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = Tensor::uniform(&[2, 6, 6, 3], -1.0, 1.0, &mut rng);
    let k = Tensor::uniform(&[3, 3, 3], -1.0, 1.0, &mut rng);
    let got = conv2d_depthwise(&x, &k, Padding::Same).unwrap();
    for c in 0..3 {
        let xc = Tensor::from_fn(&[2, 6, 6, 1], |i| x.data()[i * 3 + c]);
        let kc = Tensor::from_fn(&[3, 3, 1, 1], |i| k.data()[i * 3 + c]);
        let want = correlate_oracle(&xc, &kc, 1);
        let gc = Tensor::from_fn(&[2, 6, 6, 1], |i| got.data()[i * 3 + c]);
        assert!(max_diff(&gc, &want) < 1e-12);
    }
}

#[test]
fn pointwise_conv_matches_matrix_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Tensor::uniform(&[2, 4, 5, 6], -1.0, 1.0, &mut rng);
    let k = Tensor::uniform(&[1, 1, 6, 7], -1.0, 1.0, &mut rng);
    let got = conv2d_pointwise(&x, &k).unwrap();
    let xm = DMatrix::from_row_slice(40, 6, x.data());
    let km = DMatrix::from_row_slice(6, 7, k.data());
    let want = xm * km;
    for r in 0..40 {
        for c in 0..7 {
            assert!((got.data()[r * 7 + c] - want[(r, c)]).abs() < 1e-12);
        }
    }
}

#[test]
fn fully_connected_matches_matrix_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = Tensor::uniform(&[5, 9], -1.0, 1.0, &mut rng);
    let w = Tensor::uniform(&[9, 3], -1.0, 1.0, &mut rng);
    let b = Tensor::uniform(&[3], -1.0, 1.0, &mut rng);
    let got = fully_connected(&x, &w, &b).unwrap();
    let want = DMatrix::from_row_slice(5, 9, x.data()) * DMatrix::from_row_slice(9, 3, w.data());
    for r in 0..5 {
        for c in 0..3 {
            assert!((got.data()[r * 3 + c] - want[(r, c)] - b.data()[c]).abs() < 1e-12);
        }
    }
}

#[test]
fn batch_norm_eval_mode_closed_form() {
    let mut bn = BatchNorm::new(1);
    bn.running_mean = Some(vec![0.5]);
    bn.running_var = Some(vec![4.0]);
    bn.gamma.value = Tensor::new(vec![1], vec![2.0]).unwrap();
    bn.beta.value = Tensor::new(vec![1], vec![-1.0]).unwrap();
    let x = Tensor::new(vec![3, 1, 1, 1], vec![-1.0, 0.5, 3.0]).unwrap();
    let (y, _) = bn.forward(&x, Mode::Eval).unwrap();
    for (xi, yi) in x.data().iter().zip(y.data()) {
        let want = (xi - 0.5) / (4.0f64 + 1e-5).sqrt() * 2.0 - 1.0;
        assert!((yi - want).abs() < 1e-12);
    }
}

#[test]
fn gradient_reversal_semantics() {
    let grl = GradientReversal::new(0.37).unwrap();
    let x = Tensor::new(vec![3], vec![1.0, -2.0, 3.0]).unwrap();
    assert_eq!(grl.forward(&x), x);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = Tensor::uniform(&[10], -5.0, 5.0, &mut rng);
    let back = grl.backward(&g);
    for (b, gi) in back.data().iter().zip(g.data()) {
        assert_eq!(*b, -0.37 * gi);
    }
}

#[test]
fn adam_matches_hand_recurrence_for_random_gradients() {
    let cfg = AdamConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut p = Param::new(Tensor::new(vec![1], vec![0.3]).unwrap());
    let (mut m, mut v, mut theta) = (0.0, 0.0, 0.3);
    for t in 1..=5u64 {
        let g: f64 = rng.gen_range(-1.0..1.0);
        adam_step(&mut p, &Tensor::new(vec![1], vec![g]).unwrap(), &cfg, t);
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        let mh = m / (1.0 - 0.9f64.powi(t as i32));
        let vh = v / (1.0 - 0.999f64.powi(t as i32));
        theta -= 0.001 * mh / (vh.sqrt() + 1e-8);
        assert!((p.value.data()[0] - theta).abs() < 1e-12);
    }
}

#[test]
fn full_adversarial_graph_passes_finite_differences() {
    for seed in 0..10 {
        let e = common::dat_graph_error(seed);
        assert!(e < 1e-4, "seed {seed}: max relative error {e}");
    }
}
