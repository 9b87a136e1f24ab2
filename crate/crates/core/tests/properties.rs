use parfnet::data::{Mask, Sample, Transform};
use parfnet::metrics::{confusion, hausdorff, ClassCounts};
use parfnet::training::{combined_loss, AdamState};
use parfnet::{Init, ParamStore, Tensor};
use proptest::prelude::*;

fn sample_from(h: usize, w: usize, pixels: &[f32], labels: &[u8]) -> Sample {
    let image = Tensor::from_vec(&[1, 1, h, w], pixels.to_vec()).unwrap();
    Sample::new("p", image, Mask::new(h, w, labels.to_vec()).unwrap()).unwrap()
}

fn grid() -> impl Strategy<Value = (usize, usize, Vec<bool>, Vec<bool>)> {
    (2usize..9, 2usize..9).prop_flat_map(|(h, w)| {
        (
            Just(h),
            Just(w),
            proptest::collection::vec(any::<bool>(), h * w),
            proptest::collection::vec(any::<bool>(), h * w),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dice_follows_from_iou(tp in 0u64..500, fp in 0u64..500, fn_ in 0u64..500, tn in 0u64..500) {
        let r = ClassCounts { tp, fp, fn_, tn }.rates();
        prop_assert!((r.dice - 2.0 * r.iou / (1.0 + r.iou)).abs() <= 1e-12);
        for v in [r.iou, r.dice, r.acc, r.recall, r.precision] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn confusion_counts_partition_pixels(
        labels in proptest::collection::vec((0usize..3, 0usize..3), 1..80),
    ) {
        let (pred, gt): (Vec<_>, Vec<_>) = labels.into_iter().unzip();
        let counts = confusion(&pred, &gt, 3).unwrap();
        for c in &counts.classes {
            prop_assert_eq!(c.total(), pred.len() as u64);
        }
        let tp: u64 = counts.classes.iter().map(|c| c.tp).sum();
        prop_assert_eq!(tp, pred.iter().zip(&gt).filter(|(p, g)| p == g).count() as u64);
    }

    #[test]
    fn hausdorff_is_symmetric_and_zero_on_self((h, w, a, b) in grid()) {
        let ab = hausdorff(&a, &b, h, w, 95.0).unwrap();
        let ba = hausdorff(&b, &a, h, w, 95.0).unwrap();
        prop_assert_eq!(ab, ba);
        if a.iter().any(|&v| v) {
            prop_assert_eq!(hausdorff(&a, &a, h, w, 100.0).unwrap(), Some(0.0));
        }
        if let (Some(p50), Some(p95), Some(p100)) = (
            hausdorff(&a, &b, h, w, 50.0).unwrap(),
            ab,
            hausdorff(&a, &b, h, w, 100.0).unwrap(),
        ) {
            prop_assert!(p50 <= p95 && p95 <= p100);
        }
    }

    #[test]
    fn flips_and_quarter_turns_invert(
        (h, w, pixels, labels) in (1usize..7, 1usize..7).prop_flat_map(|(h, w)| (
            Just(h),
            Just(w),
            proptest::collection::vec(-1.0f32..1.0, h * w),
            proptest::collection::vec(0u8..3, h * w),
        )),
    ) {
        let s = sample_from(h, w, &pixels, &labels);
        for t in [Transform::FlipHorizontal, Transform::FlipVertical, Transform::Rot90(2)] {
            let twice = t.apply(&t.apply(&s).unwrap()).unwrap();
            prop_assert_eq!(&twice.image, &s.image);
            prop_assert_eq!(&twice.mask, &s.mask);
        }
        let turned = Transform::Rot90(3).apply(&Transform::Rot90(1).apply(&s).unwrap()).unwrap();
        prop_assert_eq!(&turned.image, &s.image);
        prop_assert_eq!(&turned.mask, &s.mask);
        let mut full = s.clone();
        for _ in 0..4 {
            full = Transform::Rot90(1).apply(&full).unwrap();
        }
        prop_assert_eq!(&full.mask, &s.mask);
    }

    #[test]
    fn combined_loss_is_finite_with_bounded_dice(
        (logits, targets) in (1usize..3, 2usize..4, 1usize..5).prop_flat_map(|(n, c, side)| (
            proptest::collection::vec(-60.0f64..60.0, n * c * side * side)
                .prop_map(move |v| Tensor::from_vec(&[n, c, side, side], v).unwrap()),
            proptest::collection::vec(0usize..c, n * side * side),
        )),
    ) {
        let loss = combined_loss(&logits, &targets).unwrap();
        prop_assert!(loss.total.is_finite());
        prop_assert!((0.0..=1.0).contains(&loss.dice));
    }

    #[test]
    fn adam_ignores_zero_gradients(values in proptest::collection::vec(-2.0f64..2.0, 1..20)) {
        let mut store = ParamStore::<f64>::new(0);
        let id = store.register("w", &[values.len()], Init::Zeros).unwrap();
        *store.value_mut(id) = Tensor::from_vec(&[values.len()], values.clone()).unwrap();
        let before = store.clone();
        let mut adam = AdamState::new(&store, 1e-2);
        for _ in 0..3 {
            adam.step(&mut store, &[Some(Tensor::zeros(&[values.len()]))]).unwrap();
        }
        prop_assert_eq!(store, before);
    }
}

#[test]
fn adam_state_is_keyed_by_name_not_order() {
    let build = |names: [&str; 2]| {
        let mut s = ParamStore::<f64>::new(5);
        for n in names {
            s.register(n, &[3], Init::FanIn(3)).unwrap();
        }
        s
    };
    let mut a = build(["a", "b"]);
    let mut b = build(["b", "a"]);
    let grad = |s: &ParamStore<f64>| -> Vec<Option<Tensor<f64>>> {
        s.iter()
            .map(|(_, p)| {
                let g = if p.name == "a" { [0.3, -0.1, 0.2] } else { [-0.5, 0.4, 0.0] };
                Some(Tensor::from_vec(&[3], g.to_vec()).unwrap())
            })
            .collect()
    };
    let (mut adam_a, mut adam_b) = (AdamState::new(&a, 1e-2), AdamState::new(&b, 1e-2));
    for _ in 0..4 {
        let (ga, gb) = (grad(&a), grad(&b));
        adam_a.step(&mut a, &ga).unwrap();
        adam_b.step(&mut b, &gb).unwrap();
    }
    for name in ["a", "b"] {
        assert_eq!(a.value(a.id(name).unwrap()), b.value(b.id(name).unwrap()));
    }
}
