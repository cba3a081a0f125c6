use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voxadapt::arch::{
    argmax, build_sepconv, build_stdconv, count_macs, count_params, Network, Scope,
};
use voxadapt::Tensor;

const INPUT: (usize, usize) = (127, 251);

#[test]
fn inference_parameter_totals_match_layer_sums() {
    let sep = count_params(&build_sepconv(), Scope::Inference).unwrap();
    let std = count_params(&build_stdconv(), Scope::Inference).unwrap();
    let sep_oracle = (9 + 16) + 4 * (9 * 16 + 16 * 16) + 2 * (1 + 16 + 4 * 32) + (256 * 3 + 3);
    let std_oracle = 9 * 16 + 4 * (9 * 16 * 16) + 2 * (5 * 16) + (256 * 3 + 3);
    assert_eq!(sep.total_params(), sep_oracle as u64);
    assert_eq!(std.total_params(), std_oracle as u64);
    assert_eq!((sep.total_params(), std.total_params()), (2686, 10291));
    let reduction = 1.0 - sep.total_params() as f64 / std.total_params() as f64;
    assert!((100.0 * reduction - 73.9).abs() < 0.05);
}

#[test]
fn every_layer_mac_count_follows_kernel_times_output_area() {
    for spec in [build_sepconv(), build_stdconv()] {
        let macs = count_macs(&spec, INPUT).unwrap();
        for l in &macs.layers {
            let want = match l.kind.as_str() {
                "conv" | "depthwise" | "pointwise" => l.params * (l.output[0] * l.output[1]) as u64,
                "fc" => l.params - l.output[0] as u64,
                _ => 0,
            };
            assert_eq!(l.macs, want, "{}", l.name);
        }
    }
    let std = count_macs(&build_stdconv(), INPUT).unwrap();
    assert_eq!(std.layer("block1.conv").unwrap().macs, 9 * 127 * 126 * 16);
    let sep = count_macs(&build_sepconv(), INPUT).unwrap();
    assert_eq!(sep.layer("block2.pw").unwrap().macs, 16 * 64 * 63 * 16);
}

#[test]
fn separable_to_standard_ratio_per_block() {
    let sep = count_macs(&build_sepconv(), INPUT).unwrap();
    let std = count_macs(&build_stdconv(), INPUT).unwrap();
    let want = 1.0 / 16.0 + 1.0 / 9.0;
    for b in 2..=5 {
        let s = |n: &str| sep.layer(&format!("block{b}.{n}")).unwrap().clone();
        let conv = std.layer(&format!("block{b}.conv")).unwrap();
        let p_ratio = (s("dw").params + s("pw").params) as f64 / conv.params as f64;
        let m_ratio = (s("dw").macs + s("pw").macs) as f64 / conv.macs as f64;
        assert!((p_ratio - want).abs() < 1e-12, "block{b}");
        assert!((m_ratio - want).abs() < 1e-12, "block{b}");
    }
    let conv_only = |r: &voxadapt::arch::ResourceReport| {
        r.layers
            .iter()
            .filter(|l| l.kind != "fc")
            .map(|l| l.macs)
            .sum::<u64>() as f64
    };
    assert!(1.0 - conv_only(&sep) / conv_only(&std) >= 0.75);
}

#[test]
fn both_models_end_in_256_features() {
    for spec in [build_sepconv(), build_stdconv()] {
        assert_eq!(spec.feature_dim().unwrap(), 256);
    }
}

#[test]
fn prediction_is_a_distribution_and_skips_the_domain_head() {
    let mut net = Network::new(&build_sepconv(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Tensor::uniform(&[4, 127, 251], -1.0, 1.0, &mut rng);
    net.extract(&x, voxadapt::nn::Mode::Train).unwrap();
    let seg = Tensor::uniform(&[127, 251], -1.0, 1.0, &mut rng);
    let p = net.predict(&seg).unwrap();
    assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(p.feature.len(), 256);
    assert_eq!(p.class, argmax(&p.probs));
    assert_eq!(net.domain_head_calls(), 0);
    assert!(net.predict(&Tensor::zeros(&[126, 251])).is_err());
}

#[test]
fn positive_affine_rescaling_of_the_classifier_keeps_predictions() {
    let mut net = Network::new(&build_sepconv(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::uniform(&[6, 127, 251], -1.0, 1.0, &mut rng);
    net.extract(&x, voxadapt::nn::Mode::Train).unwrap();
    let before: Vec<usize> = net
        .predict_batch(&x)
        .unwrap()
        .iter()
        .map(|p| p.class)
        .collect();
    net.predictor.weight.value = net.predictor.weight.value.scale(3.5);
    net.predictor.bias.value = net.predictor.bias.value.map(|b| 3.5 * b + 0.25);
    let after: Vec<usize> = net
        .predict_batch(&x)
        .unwrap()
        .iter()
        .map(|p| p.class)
        .collect();
    assert_eq!(before, after);
}

proptest! {
    #[test]
    fn argmax_ignores_positive_affine_maps(
        logits in prop::collection::vec(-10.0f64..10.0, 3),
        a in 0.01f64..100.0,
        b in -50.0f64..50.0,
    ) {
        let mapped: Vec<f64> = logits.iter().map(|v| a * v + b).collect();
        let distinct = logits.iter().all(|x| logits.iter().filter(|y| (*y - x).abs() < 1e-9).count() == 1);
        prop_assume!(distinct);
        prop_assert_eq!(argmax(&logits), argmax(&mapped));
    }
}
