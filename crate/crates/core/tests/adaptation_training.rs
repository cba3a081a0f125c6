mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxadapt::arch::{build_sepconv, build_stdconv};
use voxadapt::data::TargetSet;
use voxadapt::eval::{ExperimentConfig, Workbench};
use voxadapt::nn::gradcheck::Differentiable;
use voxadapt::nn::Mode;
use voxadapt::train::{
    dat_gradients, domain_loss, load_checkpoint, mmd_loss, read_checkpoint, save_checkpoint, train,
    write_checkpoint, GradientPaths, Strategy, TrainData,
};
use voxadapt::{Error, Tensor};

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        epochs: 2,
        repeats: 1,
        seed: 17,
        ..ExperimentConfig::default()
    };
    cfg.synth.per_class = 10;
    cfg.synth.target_per_class = 2;
    cfg
}

#[test]
fn mmd_matches_mean_then_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let (ns, nt, d) = (
            rng.gen_range(1..8),
            rng.gen_range(1..8),
            rng.gen_range(1..20),
        );
        let s = Tensor::uniform(&[ns, d], -2.0, 2.0, &mut rng);
        let t = Tensor::uniform(&[nt, d], -2.0, 2.0, &mut rng);
        let mut want = 0.0;
        for k in 0..d {
            let ms: f64 = (0..ns).map(|r| s.row(r)[k]).sum::<f64>() / ns as f64;
            let mt: f64 = (0..nt).map(|r| t.row(r)[k]).sum::<f64>() / nt as f64;
            want += (ms - mt) * (ms - mt);
        }
        assert!((mmd_loss(&s, &t).unwrap().value - want).abs() < 1e-12);
    }
    let s = Tensor::uniform(&[4, 6], -1.0, 1.0, &mut rng);
    assert_eq!(mmd_loss(&s, &s).unwrap().value, 0.0);
}

#[test]
fn extractor_gradient_is_label_term_minus_lambda_domain_term() {
    let mut g = common::DatGraph::new(21, 0.4);
    let (src, tgt) = (g.source.clone(), g.target.clone());
    let collect = |g: &common::DatGraph| -> Vec<f64> {
        g.net
            .all_params()
            .iter()
            .flat_map(|p| p.grad.data().to_vec())
            .collect()
    };
    dat_gradients(&mut g.net, &src, &tgt, GradientPaths::Both).unwrap();
    let both = collect(&g);
    dat_gradients(&mut g.net, &src, &tgt, GradientPaths::LabelOnly).unwrap();
    let label = collect(&g);
    dat_gradients(&mut g.net, &src, &tgt, GradientPaths::DomainOnly).unwrap();
    let domain = collect(&g);
    let n_extractor: usize = g
        .net
        .extractor_params_mut()
        .iter()
        .map(|p| p.value.len())
        .sum();
    for i in 0..n_extractor {
        assert!((both[i] - label[i] - domain[i]).abs() < 1e-10);
    }

    // The reversed domain path equals -lambda times the domain loss's own
    // derivative, measured by central differences.
    let domain_loss_of = |g: &mut common::DatGraph| -> f64 {
        let (fs, _) = g.net.extract(&g.source.x, Mode::Train).unwrap();
        let ds = g.net.domain_logits(&fs).unwrap();
        let (ft, _) = g.net.extract(&g.target.x, Mode::Shared).unwrap();
        let dt = g.net.domain_logits(&ft).unwrap();
        let dom: Vec<usize> = g
            .source
            .domains
            .iter()
            .chain(&g.target.domains)
            .copied()
            .collect();
        domain_loss(&Tensor::concat_rows(&ds, &dt).unwrap(), &dom)
            .unwrap()
            .0
    };
    let mut checked = 0;
    for i in (0..n_extractor).step_by(97) {
        let o = g.coord(i);
        let h = 1e-6;
        g.set_coord(i, o + h);
        let up = domain_loss_of(&mut g);
        g.set_coord(i, o - h);
        let down = domain_loss_of(&mut g);
        g.set_coord(i, o);
        let numeric = (up - down) / (2.0 * h);
        if numeric.abs() > 1e-4 {
            assert!(domain[i] * numeric < 0.0, "coordinate {i} not reversed");
            assert!((domain[i] + 0.4 * numeric).abs() < 1e-4 * numeric.abs().max(1.0));
            checked += 1;
        }
    }
    assert!(checked > 5);
}

#[test]
fn unsupervised_strategies_never_read_target_labels() {
    let cfg = small_config();
    let bench = Workbench::new(&cfg).unwrap();
    let locked = bench.adaptation.locked();
    assert!(matches!(locked.disease(0), Err(Error::LabelAccess(_))));
    assert_eq!(locked.denied_reads(), 1);
    for s in [Strategy::Dat, Strategy::Mmd] {
        let target = TargetSet::new(bench.adaptation.labeled().unwrap());
        let tc = cfg.train_config(s, 3);
        train(
            &tc,
            TrainData {
                source: &bench.clean,
                target: &target,
            },
            None,
            None,
        )
        .unwrap();
        assert_eq!(target.denied_reads(), 0, "{s}");
    }
}

#[test]
fn training_is_bitwise_reproducible_and_checkpoints_round_trip() {
    let cfg = small_config();
    let bench = Workbench::new(&cfg).unwrap();
    let tc = cfg.train_config(Strategy::Dat, 8);
    let data = TrainData {
        source: &bench.clean,
        target: &bench.adaptation,
    };
    let a = train(&tc, data, None, None).unwrap();
    let b = train(&tc, data, None, None).unwrap();
    assert_eq!(a.network, b.network);
    assert_eq!(a.log, b.log);

    let mut bytes_a = Vec::new();
    let mut bytes_b = Vec::new();
    write_checkpoint(&mut bytes_a, &a.network, Some(&a.optimizer)).unwrap();
    write_checkpoint(&mut bytes_b, &b.network, Some(&b.optimizer)).unwrap();
    assert_eq!(bytes_a, bytes_b);

    let spec = Strategy::Dat.model_spec(cfg.lambda).unwrap();
    let back = read_checkpoint(bytes_a.as_slice(), &spec).unwrap();
    assert_eq!(back.adam_step, Some(a.optimizer.t));
    let mut again = Vec::new();
    write_checkpoint(&mut again, &back.network, Some(&a.optimizer)).unwrap();
    assert_eq!(again, bytes_a);
    for (p, q) in back.network.all_params().iter().zip(a.network.all_params()) {
        assert_eq!(p.value, q.value);
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &a.network, None).unwrap();
    let mut loaded = load_checkpoint(&path, &spec).unwrap().network;
    let x = Tensor::uniform(&[2, 127, 251], -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(0));
    let mut original = a.network.clone();
    assert_eq!(
        loaded.predict_batch(&x).unwrap(),
        original.predict_batch(&x).unwrap()
    );
    assert!(load_checkpoint(&path, &build_stdconv()).is_err());
    assert!(load_checkpoint(&path, &build_sepconv().without_domain_head()).is_err());
}

#[test]
fn different_seeds_give_different_models() {
    let cfg = small_config();
    let bench = Workbench::new(&cfg).unwrap();
    let data = TrainData {
        source: &bench.clean,
        target: &bench.adaptation,
    };
    let a = train(&cfg.train_config(Strategy::Sepconv, 1), data, None, None).unwrap();
    let b = train(&cfg.train_config(Strategy::Sepconv, 2), data, None, None).unwrap();
    assert_ne!(a.network, b.network);
}
