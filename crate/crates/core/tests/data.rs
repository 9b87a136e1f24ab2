use parfnet::data::{
    generate_synthetic, load_dataset, nearest_index, resize_image, resize_mask, save_dataset, Mask, PnmImage, Sample,
    SyntheticSpec, Transform,
};
use parfnet::Tensor;

fn write_pair(root: &std::path::Path, id: &str, labels: Vec<u8>) {
    std::fs::create_dir_all(root.join("images")).unwrap();
    std::fs::create_dir_all(root.join("masks")).unwrap();
    PnmImage::gray(2, 2, vec![0, 64, 128, 255]).unwrap().write(&root.join(format!("images/{id}.pgm"))).unwrap();
    PnmImage::gray(2, 2, labels).unwrap().write(&root.join(format!("masks/{id}.pgm"))).unwrap();
}

#[test]
fn pairs_load_in_id_order() {
    let dir = tempfile::tempdir().unwrap();
    for id in ["c", "a", "b"] {
        write_pair(dir.path(), id, vec![0, 1, 1, 0]);
    }
    let samples = load_dataset(dir.path(), 2, 1).unwrap();
    let ids: Vec<_> = samples.iter().map(|s| s.id.as_str()).collect();
    assert_eq!(ids, ["a", "b", "c"]);
    assert_eq!(samples[0].image.data()[1], 64.0 / 255.0);
}

#[test]
fn empty_directory_is_an_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_dataset(dir.path(), 2, 3).unwrap().is_empty());
}

#[test]
fn out_of_range_label_names_the_mask() {
    let dir = tempfile::tempdir().unwrap();
    write_pair(dir.path(), "bad", vec![0, 5, 0, 0]);
    let err = load_dataset(dir.path(), 2, 1).unwrap_err().to_string();
    assert!(err.contains("bad.pgm"), "{err}");
}

#[test]
fn missing_mask_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_pair(dir.path(), "a", vec![0; 4]);
    std::fs::remove_file(dir.path().join("masks/a.pgm")).unwrap();
    assert!(load_dataset(dir.path(), 2, 1).is_err());
}

#[test]
fn save_then_load_is_lossless() {
    let spec = SyntheticSpec {
        count: 4,
        ..SyntheticSpec::default()
    };
    let samples = generate_synthetic(&spec, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&samples, dir.path()).unwrap();
    let back = load_dataset(dir.path(), 2, 3).unwrap();
    assert_eq!(back, samples);
}

#[test]
fn synthetic_generation_is_a_function_of_seed() {
    let spec = SyntheticSpec::default();
    assert_eq!(generate_synthetic(&spec, 9).unwrap(), generate_synthetic(&spec, 9).unwrap());
    assert_ne!(generate_synthetic(&spec, 9).unwrap(), generate_synthetic(&spec, 10).unwrap());
}

#[test]
fn noiseless_single_object_has_two_intensities() {
    let spec = SyntheticSpec {
        count: 3,
        min_objects: 1,
        max_objects: 1,
        noise: 0.0,
        channels: 1,
        ..SyntheticSpec::default()
    };
    for s in generate_synthetic(&spec, 1).unwrap() {
        let mut values: Vec<u32> = s.image.data().iter().map(|v| (v * 255.0).round() as u32).collect();
        values.sort_unstable();
        values.dedup();
        assert_eq!(values.len(), 2, "{}", s.id);
    }
}

#[test]
fn foreground_fraction_is_moderate() {
    let spec = SyntheticSpec {
        count: 100,
        ..SyntheticSpec::default()
    };
    let samples = generate_synthetic(&spec, 0).unwrap();
    let fg: usize = samples.iter().map(|s| s.mask.labels.iter().filter(|&&l| l > 0).count()).sum();
    let total: usize = samples.iter().map(|s| s.mask.labels.len()).sum();
    let fraction = fg as f64 / total as f64;
    assert!(fraction > 0.05 && fraction < 0.6, "{fraction}");
}

#[test]
fn four_to_two_resize_matches_index_and_block_oracles() {
    let labels: Vec<u8> = (0..16).collect();
    let mask = Mask::new(4, 4, labels).unwrap();
    let small = resize_mask(&mask, 2, 2);
    // output d samples source floor((d + 0.5) · 2)
    assert_eq!(small.labels, vec![5, 7, 13, 15]);
    assert_eq!((0..2).map(|d| nearest_index(d, 4, 2)).collect::<Vec<_>>(), [1, 3]);

    let image = Tensor::from_vec(&[1, 1, 4, 4], (0..16).map(|v| v as f32).collect()).unwrap();
    let half = resize_image(&image, 2, 2).unwrap();
    // half-pixel centres fall between source pixels: 2×2 block means
    assert_eq!(half.data(), [2.5, 4.5, 10.5, 12.5]);
}

#[test]
fn delta_image_follows_coordinate_map() {
    let (h, w) = (3, 5);
    let (y, x) = (0, 3);
    let mut pixels = vec![0f32; h * w];
    pixels[y * w + x] = 1.0;
    let mut labels = vec![0u8; h * w];
    labels[y * w + x] = 1;
    let sample = Sample::new(
        "delta",
        Tensor::from_vec(&[1, 1, h, w], pixels).unwrap(),
        Mask::new(h, w, labels).unwrap(),
    )
    .unwrap();
    let cases = [
        (Transform::FlipHorizontal, (h, w), (y, w - 1 - x)),
        (Transform::FlipVertical, (h, w), (h - 1 - y, x)),
        // counter-clockwise: the right edge becomes the top edge
        (Transform::Rot90(1), (w, h), (w - 1 - x, y)),
        (Transform::Rot90(2), (h, w), (h - 1 - y, w - 1 - x)),
        (Transform::Rot90(3), (w, h), (x, h - 1 - y)),
    ];
    for (t, (oh, ow), (ty, tx)) in cases {
        let out = t.apply(&sample).unwrap();
        assert_eq!((out.height(), out.width()), (oh, ow), "{t:?}");
        let hot: Vec<usize> = (0..oh * ow).filter(|&i| out.image.data()[i] == 1.0).collect();
        assert_eq!(hot, [ty * ow + tx], "{t:?}");
        assert_eq!(out.mask.at(ty, tx), 1, "{t:?}");
        assert_eq!(out.mask.labels.iter().filter(|&&l| l == 1).count(), 1);
    }
    let composed = Transform::Rot90(1).apply(&Transform::FlipHorizontal.apply(&sample).unwrap()).unwrap();
    let (fy, fx) = (y, w - 1 - x);
    assert_eq!(composed.mask.at(w - 1 - fx, fy), 1);
}

#[test]
fn netpbm_round_trips_both_kinds() {
    let gray = PnmImage::gray(3, 2, vec![0, 1, 2, 253, 254, 255]).unwrap();
    assert_eq!(PnmImage::decode(&gray.encode()).unwrap(), gray);
    let color = PnmImage::new(2, 1, 3, vec![1, 2, 3, 4, 5, 6]).unwrap();
    assert_eq!(PnmImage::decode(&color.encode()).unwrap(), color);
    assert!(PnmImage::decode(b"P5\n2 2\n255\n\x00").is_err());
}
