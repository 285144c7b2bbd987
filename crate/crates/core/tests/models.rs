mod common;

use std::collections::BTreeMap;

use acdistill::data::{synth_gaussians, MeansLayout};
use acdistill::diffcore::{LrSchedule, OptimizerKind, Tensor};
use acdistill::models::{
    train_classifier, ClassifierArch, ClassifierModel, LossSelector, Origin, Stack, TrainConfig, TrainItem,
    TrainingSet,
};
use acdistill::rng;

fn items(ds: &acdistill::data::LabeledDataset) -> TrainingSet {
    TrainingSet {
        items: ds
            .iter()
            .map(|(x, y)| TrainItem {
                input: x.clone(),
                hard: Some(y),
                soft: None,
                origin: Origin::Real { increment: 1 },
            })
            .collect(),
    }
}

fn accuracy(model: &ClassifierModel, ds: &acdistill::data::LabeledDataset) -> f64 {
    let p = model.predict(ds.inputs()).unwrap();
    p.iter().zip(ds.labels()).filter(|(a, b)| a == b).count() as f64 / ds.len() as f64
}

#[test]
fn outputs_do_not_depend_on_batch_companions() {
    let arch = ClassifierArch::small_cnn(vec![1, 8, 8]);
    let model = ClassifierModel::new(arch, &[0, 1, 2], &mut rng::rng(4)).unwrap();
    let mut r = rng::rng(5);
    let xs: Vec<Tensor> = (0..7)
        .map(|_| {
            use rand::Rng;
            Tensor::new(vec![1, 8, 8], (0..64).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
        })
        .collect();
    let together = model.logits(&xs).unwrap();
    for (i, x) in xs.iter().enumerate() {
        let alone = model.logits(std::slice::from_ref(x)).unwrap();
        assert_eq!(alone[0], together[i], "sample {i}");
        let reordered = model.logits(&[xs[(i + 3) % 7].clone(), x.clone()]).unwrap();
        assert_eq!(reordered[1], together[i]);
    }
}

#[test]
fn two_layer_relu_net_matches_direct_evaluation() {
    let arch = ClassifierArch::mlp(vec![3], &[5]);
    let model = ClassifierModel::new(arch.clone(), &[0, 1], &mut rng::rng(9)).unwrap();
    let stack = Stack::new("body", arch.input_shape.clone(), arch.body.clone());
    let mut params: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for p in [stack.weight_path(0), stack.bias_path(0), "head.weight".into(), "head.bias".into()] {
        let v = model.params().value(&p).unwrap().data().iter().map(|&x| f64::from(x)).collect();
        params.insert(p, v);
    }
    let x = [0.3f32, -1.2, 0.8];
    let hidden = common::forward64(&stack, &params, &x.map(f64::from));
    let (w, b) = (&params["head.weight"], &params["head.bias"]);
    let expected: Vec<f64> = (0..2).map(|j| b[j] + (0..5).map(|i| hidden[i] * w[i * 2 + j]).sum::<f64>()).collect();
    let got = model.logits(&[Tensor::vector(x.to_vec()).unwrap()]).unwrap();
    for j in 0..2 {
        assert!((f64::from(got[0][j]) - expected[j]).abs() < 1e-5, "{got:?} vs {expected:?}");
    }
}

/// Mistake-driven perceptron, used only to confirm linear separability.
fn perceptron_accuracy(ds: &acdistill::data::LabeledDataset) -> f64 {
    let mut w = [0.0f64; 3];
    for _ in 0..100 {
        for (x, y) in ds.iter() {
            let s = if y == 1 { 1.0 } else { -1.0 };
            let v = [f64::from(x.data()[0]), f64::from(x.data()[1]), 1.0];
            if s * (w[0] * v[0] + w[1] * v[1] + w[2]) <= 0.0 {
                for i in 0..3 {
                    w[i] += s * v[i];
                }
            }
        }
    }
    let hits = ds
        .iter()
        .filter(|(x, y)| {
            let z = w[0] * f64::from(x.data()[0]) + w[1] * f64::from(x.data()[1]) + w[2];
            (z > 0.0) == (*y == 1)
        })
        .count();
    hits as f64 / ds.len() as f64
}

#[test]
fn separable_gaussians_are_learned_in_fifteen_epochs() {
    let layout = MeansLayout::Explicit {
        means: vec![[-2.0, -2.0], [2.0, 2.0]],
    };
    let train = synth_gaussians(2, 200, &layout, 0.5, 1).unwrap();
    let test = synth_gaussians(2, 200, &layout, 0.5, 2).unwrap();
    assert!(perceptron_accuracy(&train) >= 0.99);
    let mut model = ClassifierModel::new(ClassifierArch::mlp(vec![2], &[16]), &[0, 1], &mut rng::rng(0)).unwrap();
    let cfg = TrainConfig {
        epochs: 15,
        batch_size: 20,
        schedule: LrSchedule::new(0.1, 0.2, vec![8, 12]).unwrap(),
        optimizer: OptimizerKind::Sgd { momentum: 0.0 },
    };
    train_classifier(&mut model, &items(&train), &LossSelector::Plain, &cfg, 3).unwrap();
    let acc = accuracy(&model, &test);
    assert!(acc >= 0.99, "accuracy {acc}");
}

#[test]
fn full_batch_logistic_regression_loss_never_increases() {
    let layout = MeansLayout::Circle { radius: 1.0 };
    let train = synth_gaussians(3, 40, &layout, 0.6, 4).unwrap();
    let mut model = ClassifierModel::new(ClassifierArch::mlp(vec![2], &[]), &[0, 1, 2], &mut rng::rng(1)).unwrap();
    let cfg = TrainConfig {
        epochs: 40,
        batch_size: train.len(),
        schedule: LrSchedule::constant(0.05),
        optimizer: OptimizerKind::Sgd { momentum: 0.0 },
    };
    let s = train_classifier(&mut model, &items(&train), &LossSelector::Plain, &cfg, 0).unwrap();
    for w in s.epoch_losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{:?}", s.epoch_losses);
    }
    assert!(s.epoch_losses.last() < s.epoch_losses.first());
}

#[test]
fn same_seed_gives_bit_identical_parameters() {
    let train = synth_gaussians(3, 30, &MeansLayout::Circle { radius: 2.0 }, 0.5, 8).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 7,
        schedule: LrSchedule::constant(0.1),
        optimizer: OptimizerKind::Sgd { momentum: 0.9 },
    };
    let run = || {
        let mut m = ClassifierModel::new(ClassifierArch::mlp(vec![2], &[8]), &[0, 1, 2], &mut rng::rng(2)).unwrap();
        train_classifier(&mut m, &items(&train), &LossSelector::Plain, &cfg, 5).unwrap();
        m
    };
    assert_eq!(run(), run());
}
