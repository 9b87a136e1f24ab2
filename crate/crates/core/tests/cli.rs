use std::fs;
use std::path::Path;

use parfnet::cli::{run_args, RunConfig, EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE};
use parfnet::data::PnmImage;
use parfnet::model::build_model;
use parfnet::training::{save_checkpoint, AdamState};

/// Small, fast overrides shared by the tests.
const SMALL: [&str; 4] = [
    "model.base_width=8",
    "data.size=32",
    "data.source.synthetic.count=4",
    "train.batch_size=2",
];

fn args(cmd: &str, out: &Path, extra: &[&str]) -> Vec<String> {
    let mut v = vec![cmd.to_string(), "--out".into(), out.display().to_string()];
    for s in SMALL.iter().chain(extra) {
        v.push("--set".into());
        v.push(s.to_string());
    }
    v
}

fn small_config() -> RunConfig {
    RunConfig::desk().with_overrides(&SMALL).unwrap()
}

#[test]
fn train_writes_logs_checkpoint_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(run_args(args("train", &out, &["train.max_epochs=1"])), EXIT_OK);
    for file in ["checkpoint.parf", "config.json", "train_log.jsonl", "eval.jsonl"] {
        assert!(out.join(file).exists(), "{file}");
    }
    let log = fs::read_to_string(out.join("train_log.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["steps"], 2);
    assert_eq!(lines[1]["final"], true);

    // the snapshot alone reproduces the run
    let snapshot = out.join("config.json");
    let again = dir.path().join("again");
    let replay = [
        "train",
        "--config",
        snapshot.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ];
    assert_eq!(run_args(replay), EXIT_OK);
    assert_eq!(log, fs::read_to_string(again.join("train_log.jsonl")).unwrap());
    assert_eq!(
        fs::read(out.join("checkpoint.parf")).unwrap(),
        fs::read(again.join("checkpoint.parf")).unwrap()
    );

    // eval of the checkpoint reproduces the train-time metrics
    let eval_out = dir.path().join("eval");
    let ckpt = out.join("checkpoint.parf");
    let mut eval = args("eval", &eval_out, &[]);
    eval.extend(["--checkpoint".into(), ckpt.display().to_string()]);
    assert_eq!(run_args(eval), EXIT_OK);
    assert_eq!(
        fs::read_to_string(out.join("eval.jsonl")).unwrap(),
        fs::read_to_string(eval_out.join("eval.jsonl")).unwrap()
    );
}

#[test]
fn seed_flag_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut first = args("train", &a, &["train.max_steps=1"]);
    first.extend(["--seed".into(), "3".into()]);
    let mut second = args("train", &b, &["train.max_steps=1"]);
    second.extend(["--seed".into(), "4".into()]);
    assert_eq!(run_args(first), EXIT_OK);
    assert_eq!(run_args(second), EXIT_OK);
    let cfg: RunConfig = serde_json::from_str(&fs::read_to_string(a.join("config.json")).unwrap()).unwrap();
    assert_eq!((cfg.seed, cfg.train.seed), (3, 3));
    assert_ne!(
        fs::read(a.join("checkpoint.parf")).unwrap(),
        fs::read(b.join("checkpoint.parf")).unwrap()
    );
}

#[test]
fn eval_rejects_a_checkpoint_of_another_variant() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(run_args(args("train", &out, &["train.max_steps=1"])), EXIT_OK);
    let mut eval = args("eval", &out, &["model.variant=E(1,3)+D(0,3)"]);
    eval.extend(["--checkpoint".into(), out.join("checkpoint.parf").display().to_string()]);
    assert_eq!(run_args(eval), EXIT_USAGE);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(run_args(args("train", &out, &["train.epochs=3"])), EXIT_USAGE);
    assert_eq!(run_args(["train", "--precision", "f16"]), EXIT_USAGE);
    assert_eq!(run_args(args("inspect", &out, &["model.variant=E(0,4)+D(0,4)"])), EXIT_USAGE);
    assert_eq!(run_args(args("synth", &out, &["data.source={\"directory\":{\"root\":\"nowhere\"}}"])), EXIT_USAGE);
}

#[test]
fn inspect_dumps_quantised_gates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("maps");
    assert_eq!(run_args(args("inspect", &out, &[])), EXIT_OK);

    let cfg = small_config();
    let model = build_model::<f32>(&cfg.model, cfg.seed).unwrap();
    let sample = cfg.data.materialize(cfg.seed).unwrap().remove(0);
    let (_, capture) = model.predict_with_capture(&sample.image).unwrap();
    let mut names = Vec::new();
    for layer in &capture.activation_maps {
        for (k, (map, kernel)) in layer.maps.iter().zip(&layer.kernel_sizes).enumerate() {
            let name = format!("{}_k{}_{}.pgm", layer.layer, k + 1, kernel);
            let img = PnmImage::read(&out.join(&name)).unwrap();
            let [_, _, h, w] = map.dims4().unwrap();
            assert_eq!((img.height, img.width), (h, w));
            let want: Vec<u8> = map.data().iter().map(|&a| (255.0 * f64::from(a)).round() as u8).collect();
            assert_eq!(img.pixels, want, "{name}");
            names.push(name);
        }
    }
    assert_eq!(names.len(), 6);
    let mut files: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    names.push("predicted_mask.pgm".into());
    names.sort();
    assert_eq!(files, names);
}

#[test]
fn zero_attention_conv_dumps_mid_grey() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let mut model = build_model::<f32>(&cfg.model, cfg.seed).unwrap();
    let ids: Vec<_> = model
        .params
        .iter()
        .filter(|(_, p)| p.name.contains(".parf.attention."))
        .map(|(id, _)| id)
        .collect();
    for id in ids {
        let t = model.params.value_mut(id);
        *t = parfnet::Tensor::zeros(t.shape());
    }
    let adam = AdamState::new(&model.params, cfg.train.lr);
    let ckpt = dir.path().join("zero.parf");
    save_checkpoint(&model, &adam, &ckpt).unwrap();

    let out = dir.path().join("maps");
    let mut cmd = args("inspect", &out, &[]);
    cmd.extend(["--checkpoint".into(), ckpt.display().to_string()]);
    assert_eq!(run_args(cmd), EXIT_OK);
    for entry in fs::read_dir(&out).unwrap() {
        let path = entry.unwrap().path();
        if path.file_name().unwrap() == "predicted_mask.pgm" {
            continue;
        }
        assert!(PnmImage::read(&path).unwrap().pixels.iter().all(|&p| p == 128), "{}", path.display());
    }
}

#[test]
fn inspect_accepts_an_image_file() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("in.pgm");
    PnmImage::gray(20, 20, (0..400).map(|i| (i % 251) as u8).collect()).unwrap().write(&image).unwrap();
    let out = dir.path().join("maps");
    let mut cmd = args("inspect", &out, &[]);
    cmd.extend(["--image".into(), image.display().to_string()]);
    assert_eq!(run_args(cmd), EXIT_OK);
    let mask = PnmImage::read(&out.join("predicted_mask.pgm")).unwrap();
    assert_eq!((mask.width, mask.height), (32, 32));
}

#[test]
fn synth_is_byte_identical_and_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run_args(args("synth", &a, &[])), EXIT_OK);
    assert_eq!(run_args(args("synth", &b, &[])), EXIT_OK);
    for sub in ["images", "masks"] {
        let mut names: Vec<_> = fs::read_dir(a.join(sub)).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert_eq!(names.len(), 4);
        for n in names {
            assert_eq!(fs::read(a.join(sub).join(&n)).unwrap(), fs::read(b.join(sub).join(&n)).unwrap());
        }
    }
    assert_eq!(parfnet::data::load_dataset(&a, 2, 3).unwrap().len(), 4);
}

#[test]
fn gradcheck_scope_and_negative_control() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let scoped = ["gradcheck", "--scope", "enc1.parf", "--max-elements", "2", "--out", out.to_str().unwrap()];
    assert_eq!(run_args(scoped), EXIT_OK);
    let faulty = [
        "gradcheck",
        "--scope",
        "enc1.parf",
        "--max-elements",
        "2",
        "--inject-fault",
        "--out",
        out.to_str().unwrap(),
    ];
    assert_eq!(run_args(faulty), EXIT_CHECK_FAILED);
    assert_eq!(run_args(["gradcheck", "--scope", "nosuch.layer"]), EXIT_USAGE);
}
