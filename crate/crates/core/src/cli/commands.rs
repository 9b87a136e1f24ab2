use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use super::{CommonArgs, Precision, RunConfig};
use crate::data::{save_dataset, DataSource, PnmImage, Sample};
use crate::error::{Error, Result};
use crate::gradcheck::{run_suite, GradCheckOptions};
use crate::metrics::{evaluate_dataset, MetricReport};
use crate::model::{argmax_classes, build_model, ParfNet};
use crate::scalar::Scalar;
use crate::training::{fit, load_checkpoint, save_checkpoint, AdamState};

pub const CHECKPOINT_FILE: &str = "checkpoint.parf";
pub const CONFIG_FILE: &str = "config.json";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const EVAL_FILE: &str = "eval.jsonl";
pub const MASK_FILE: &str = "predicted_mask.pgm";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    CheckFailed,
}

fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::config(format!("cannot create {}: {e}", dir.display())))
}

fn eval_set(cfg: &RunConfig, train: &[Sample]) -> Result<Vec<Sample>> {
    match &cfg.eval_data {
        Some(spec) => spec.materialize(cfg.seed),
        None => Ok(train.to_vec()),
    }
}

fn metrics_json(report: &MetricReport) -> serde_json::Value {
    json!({
        "iou": report.mean.rates.iou,
        "dice": report.mean.rates.dice,
        "acc": report.mean.rates.acc,
        "recall": report.mean.rates.recall,
        "precision": report.mean.rates.precision,
        "hd": report.mean.hd,
        "hd_percentile": report.hd_percentile,
    })
}

fn print_table(report: &MetricReport) {
    let m = &report.mean;
    let hd = m.hd.map_or("n/a".to_string(), |v| format!("{v:.3}"));
    println!("images  iou     dice    acc     recall  precision  hd{:<4}", report.hd_percentile);
    println!(
        "{:<7} {:.4}  {:.4}  {:.4}  {:.4}  {:.4}     {hd}",
        report.images.len(),
        m.rates.iou,
        m.rates.dice,
        m.rates.acc,
        m.rates.recall,
        m.rates.precision
    );
    if report.hd_excluded > 0 {
        println!("({} image(s) without a defined Hausdorff distance)", report.hd_excluded);
    }
}

fn checkpoint_path(args: &CommonArgs, cfg: &RunConfig) -> PathBuf {
    args.checkpoint.clone().unwrap_or_else(|| cfg.out_dir.join(CHECKPOINT_FILE))
}

fn restore<T: Scalar>(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<(ParfNet<T>, AdamState<T>)> {
    let mut model = build_model::<T>(&cfg.model, cfg.seed)?;
    let mut adam = AdamState::new(&model.params, cfg.train.lr);
    if let Some(path) = checkpoint {
        load_checkpoint(&mut model, &mut adam, path)?;
    }
    Ok((model, adam))
}

pub fn cmd_train(args: &CommonArgs) -> Result<Outcome> {
    let cfg = args.resolve()?;
    match args.precision {
        Precision::F32 => train_run::<f32>(&cfg, args.checkpoint.as_deref()),
        Precision::F64 => train_run::<f64>(&cfg, args.checkpoint.as_deref()),
    }
}

fn train_run<T: Scalar>(cfg: &RunConfig, resume: Option<&Path>) -> Result<Outcome> {
    create_out_dir(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join(CONFIG_FILE), cfg.to_json())?;
    let data = cfg.data.materialize(cfg.seed)?;
    let eval_data = eval_set(cfg, &data)?;
    let (mut model, mut adam) = restore::<T>(cfg, resume)?;

    let mut log = BufWriter::new(File::create(cfg.out_dir.join(TRAIN_LOG_FILE))?);
    let interval = cfg.train.eval_interval;
    let mut io_error = None;
    let result = fit(
        &mut model,
        &mut adam,
        &data,
        &cfg.train,
        |_| {},
        |model, stats| {
            let mut line = json!({
                "epoch": stats.epoch,
                "steps": stats.steps,
                "ce": stats.loss.ce,
                "dice": stats.loss.dice,
                "total": stats.loss.total,
            });
            if interval > 0 && (stats.epoch + 1) % interval == 0 {
                let report = evaluate_dataset(model, &eval_data, &cfg.metrics)?;
                line["eval"] = metrics_json(&report);
            }
            if let Err(e) = writeln!(log, "{line}") {
                io_error.get_or_insert(e);
            }
            Ok(())
        },
    );
    if let Err(err) = result {
        return Err(match err {
            Error::Numerical { name, message } => Error::Numerical {
                name,
                message: format!("at step {}: {message}", adam.step + 1),
            },
            other => other,
        });
    }
    if let Some(e) = io_error {
        return Err(e.into());
    }

    let report = evaluate_dataset(&model, &eval_data, &cfg.metrics)?;
    writeln!(log, "{}", json!({"final": true, "step": adam.step, "eval": metrics_json(&report)}))?;
    log.flush()?;
    fs::write(cfg.out_dir.join(EVAL_FILE), report.to_json_lines())?;
    save_checkpoint(&model, &adam, &cfg.out_dir.join(CHECKPOINT_FILE))?;
    println!("trained {} steps; outputs in {}", adam.step, cfg.out_dir.display());
    print_table(&report);
    Ok(Outcome::Success)
}

pub fn cmd_eval(args: &CommonArgs) -> Result<Outcome> {
    let cfg = args.resolve()?;
    let path = checkpoint_path(args, &cfg);
    match args.precision {
        Precision::F32 => eval_run::<f32>(&cfg, &path),
        Precision::F64 => eval_run::<f64>(&cfg, &path),
    }
}

fn eval_run<T: Scalar>(cfg: &RunConfig, checkpoint: &Path) -> Result<Outcome> {
    let (model, _) = restore::<T>(cfg, Some(checkpoint))?;
    let data = match &cfg.eval_data {
        Some(spec) => spec.materialize(cfg.seed)?,
        None => cfg.data.materialize(cfg.seed)?,
    };
    let report = evaluate_dataset(&model, &data, &cfg.metrics)?;
    create_out_dir(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join(EVAL_FILE), report.to_json_lines())?;
    print_table(&report);
    Ok(Outcome::Success)
}

pub fn cmd_gradcheck(args: &CommonArgs, scope: &str, max_elements: usize, inject_fault: bool) -> Result<Outcome> {
    let cfg = args.resolve()?;
    if args.precision == Precision::F32 && args.precision != Precision::default() {
        eprintln!("note: gradient checks always run in double precision");
    }
    let opts = GradCheckOptions {
        max_elements: Some(max_elements.max(1)),
        seed: cfg.seed,
        ..Default::default()
    };
    let results = run_suite(&cfg.model, Some(scope), &opts, inject_fault)?;
    let mut failing = Vec::new();
    for r in &results {
        println!(
            "{:<26} max rel error {:.3e}  {}",
            r.block.name(),
            r.report.max_rel_error(),
            if r.report.pass { "ok" } else { "FAIL" }
        );
        for (group, err) in r.report.by_group(2) {
            println!("    {group:<40} {err:.3e}");
        }
        failing.extend(r.report.failing().map(|p| format!("{}:{}", r.block.name(), p.name)));
    }
    if failing.is_empty() {
        Ok(Outcome::Success)
    } else {
        eprintln!("gradient check failed for: {}", failing.join(", "));
        Ok(Outcome::CheckFailed)
    }
}

pub fn cmd_inspect(args: &CommonArgs, image: Option<&Path>) -> Result<Outcome> {
    let cfg = args.resolve()?;
    match args.precision {
        Precision::F32 => inspect_run::<f32>(&cfg, args.checkpoint.as_deref(), image),
        Precision::F64 => inspect_run::<f64>(&cfg, args.checkpoint.as_deref(), image),
    }
}

/// Quantises a map in `[0, 1]` to 8 bits as `round(255·a)`.
pub fn to_gray(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.map(|v| (255.0 * v).round().clamp(0.0, 255.0) as u8).collect()
}

fn inspect_run<T: Scalar>(cfg: &RunConfig, checkpoint: Option<&Path>, image: Option<&Path>) -> Result<Outcome> {
    let v = cfg.model.variant;
    if v.encoder_parf + v.decoder_parf == 0 {
        return Err(Error::config(format!("nothing to inspect: variant {v} has no Conv-PARF layers")));
    }
    let sample = match image {
        Some(path) => {
            let img = PnmImage::read(path)?;
            let tensor = crate::data::pnm_to_tensor(&img, cfg.model.input_channels)?;
            let mask = crate::data::Mask::filled(img.height, img.width, 0);
            crate::data::resize(&Sample::new("input", tensor, mask)?, cfg.data.size)?
        }
        None => cfg
            .data
            .materialize(cfg.seed)?
            .into_iter()
            .next()
            .ok_or_else(|| Error::config("dataset is empty; pass --image"))?,
    };
    let (model, _) = restore::<T>(cfg, checkpoint)?;
    let (logits, capture) = model.predict_with_capture(&sample.image.cast())?;
    create_out_dir(&cfg.out_dir)?;
    let (h, w) = (sample.height(), sample.width());
    let mut written = 0;
    for layer in &capture.activation_maps {
        for (k, (map, kernel)) in layer.maps.iter().zip(&layer.kernel_sizes).enumerate() {
            let [_, _, mh, mw] = map.dims4()?;
            let pixels = to_gray(map.data().iter().map(|a| a.as_f64()));
            let name = format!("{}_k{}_{}.pgm", layer.layer, k + 1, kernel);
            PnmImage::gray(mw, mh, pixels)?.write(&cfg.out_dir.join(name))?;
            written += 1;
        }
    }
    let labels: Vec<u8> = argmax_classes(&logits)?.into_iter().map(|c| c as u8).collect();
    PnmImage::gray(w, h, labels)?.write(&cfg.out_dir.join(MASK_FILE))?;
    println!("wrote {written} activation maps and {MASK_FILE} to {}", cfg.out_dir.display());
    Ok(Outcome::Success)
}

pub fn cmd_synth(args: &CommonArgs) -> Result<Outcome> {
    let cfg = args.resolve()?;
    if !matches!(cfg.data.source, DataSource::Synthetic(_)) {
        return Err(Error::config("synth needs a synthetic data source"));
    }
    let samples = cfg.data.materialize(cfg.seed)?;
    create_out_dir(&cfg.out_dir)?;
    save_dataset(&samples, &cfg.out_dir)?;
    println!("wrote {} samples to {}", samples.len(), cfg.out_dir.display());
    Ok(Outcome::Success)
}
