use parfnet::data::{generate_synthetic, AugmentConfig, SyntheticSpec};
use parfnet::model::{build_model, parse_variant, ModelConfig};
use parfnet::training::{
    fit, load_checkpoint, make_batch, save_checkpoint, train_step, AdamState, Checkpoint, TrainConfig,
};
use parfnet::Tensor;

fn small_config() -> ModelConfig {
    ModelConfig {
        base_width: 8,
        input_size: 32,
        ..ModelConfig::desk()
    }
}

fn small_data(count: usize) -> Vec<parfnet::data::Sample> {
    let spec = SyntheticSpec {
        count,
        size: 32,
        ..SyntheticSpec::default()
    };
    generate_synthetic(&spec, 0).unwrap()
}

#[test]
fn repeated_batch_loss_drops_within_ten_steps() {
    let data = generate_synthetic(&SyntheticSpec::default(), 0).unwrap();
    let (images, targets) = make_batch::<f32>(&data[..4]).unwrap();
    let mut passed = 0;
    for seed in 0..3 {
        let mut model = build_model::<f32>(&ModelConfig::desk(), seed).unwrap();
        let mut adam = AdamState::new(&model.params, 1e-4);
        let mut losses = Vec::new();
        for _ in 0..10 {
            losses.push(train_step(&mut model, &mut adam, &images, &targets, None).unwrap().total);
        }
        if losses[9] < losses[0] {
            passed += 1;
        }
    }
    assert!(passed >= 2, "loss fell on only {passed} of 3 seeds");
}

#[test]
fn fit_is_deterministic_for_a_seed() {
    let data = small_data(6);
    let config = TrainConfig {
        max_epochs: 2,
        batch_size: 3,
        seed: 4,
        ..TrainConfig::default()
    };
    let run = || {
        let mut model = build_model::<f32>(&small_config(), 1).unwrap();
        let mut adam = AdamState::new(&model.params, config.lr);
        let mut log = Vec::new();
        fit(&mut model, &mut adam, &data, &config, |s| log.push(s.loss.total.to_bits()), |_, _| Ok(())).unwrap();
        (log, model.params)
    };
    let (a, pa) = run();
    let (b, pb) = run();
    assert_eq!(a.len(), 4);
    assert_eq!(a, b);
    assert_eq!(pa, pb);
}

#[test]
fn max_steps_stops_mid_epoch() {
    let data = small_data(8);
    let config = TrainConfig {
        max_steps: Some(3),
        batch_size: 2,
        augment: AugmentConfig::disabled(),
        ..TrainConfig::default()
    };
    let mut model = build_model::<f32>(&small_config(), 0).unwrap();
    let mut adam = AdamState::new(&model.params, config.lr);
    fit(&mut model, &mut adam, &data, &config, |_| {}, |_, _| Ok(())).unwrap();
    assert_eq!(adam.step, 3);
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let data = small_data(2);
    let mut model = build_model::<f32>(&small_config(), 2).unwrap();
    let mut adam = AdamState::new(&model.params, 1e-3);
    let (images, targets) = make_batch::<f32>(&data).unwrap();
    train_step(&mut model, &mut adam, &images, &targets, None).unwrap();
    train_step(&mut model, &mut adam, &images, &targets, None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let (first, second) = (dir.path().join("a.parf"), dir.path().join("b.parf"));
    save_checkpoint(&model, &adam, &first).unwrap();
    let mut other = build_model::<f32>(&small_config(), 99).unwrap();
    let mut other_adam = AdamState::new(&other.params, 1e-3);
    load_checkpoint(&mut other, &mut other_adam, &first).unwrap();
    save_checkpoint(&other, &other_adam, &second).unwrap();
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
    for ((_, a), (_, b)) in other.params.iter().zip(model.params.iter()) {
        assert_eq!(a, b);
    }
    assert_eq!(other_adam.step, 2);
}

#[test]
fn desk_checkpoint_size_follows_layout_arithmetic() {
    let model = build_model::<f32>(&ModelConfig::desk(), 0).unwrap();
    let adam = AdamState::new(&model.params, 1e-4);
    let header: usize = model
        .params
        .iter()
        .map(|(_, p)| {
            let entry = |name_len: usize| 4 + name_len + 1 + 1 + 4 * p.value.rank();
            entry(p.name.len()) + entry(p.name.len() + 7) * 2
        })
        .sum();
    let expected = 5 + 4 + header + 3 * 4 * model.param_count() + 8;
    let bytes = Checkpoint::capture(&model.params, &adam).unwrap().encode();
    assert_eq!(bytes.len(), expected);
    assert_eq!(&bytes[..5], b"PARF1");
}

#[test]
fn loading_into_another_variant_lists_names() {
    let model = build_model::<f32>(&small_config(), 0).unwrap();
    let adam = AdamState::new(&model.params, 1e-4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.parf");
    save_checkpoint(&model, &adam, &path).unwrap();

    let cfg = ModelConfig {
        variant: parse_variant("E(1,3)+D(0,3)").unwrap(),
        ..small_config()
    };
    let mut other = build_model::<f32>(&cfg, 0).unwrap();
    let mut other_adam = AdamState::new(&other.params, 1e-4);
    let err = load_checkpoint(&mut other, &mut other_adam, &path).unwrap_err().to_string();
    assert!(err.contains("missing") && err.contains("enc2.hybrid"), "{err}");
    assert!(err.contains("enc2.parf.branch0.weight"), "{err}");
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let model = build_model::<f32>(&small_config(), 0).unwrap();
    let adam = AdamState::new(&model.params, 1e-4);
    let bytes = Checkpoint::capture(&model.params, &adam).unwrap().encode();
    assert!(Checkpoint::decode(&bytes[..bytes.len() - 3]).is_err());
    let mut bumped = bytes.clone();
    bumped[4] = b'2';
    assert!(Checkpoint::decode(&bumped).unwrap_err().to_string().contains("version"));
    let mut trailing = bytes;
    trailing.push(0);
    assert!(Checkpoint::decode(&trailing).is_err());
}

#[test]
fn non_finite_gradient_is_a_numerical_error() {
    let mut model = build_model::<f32>(&small_config(), 0).unwrap();
    let mut adam = AdamState::new(&model.params, 1e-4);
    let grads: Vec<Option<Tensor<f32>>> = model
        .params
        .iter()
        .map(|(_, p)| Some(Tensor::full(p.value.shape(), f32::NAN)))
        .collect();
    let before = model.params.clone();
    let err = adam.step(&mut model.params, &grads).unwrap_err();
    assert!(matches!(err, parfnet::Error::Numerical { .. }));
    assert_eq!(model.params, before);
}
