//! Trains the default desk model on a small synthetic set and reports the
//! training-set metrics. Pass a step count to change the run length.
//!
//!     cargo run --release --example train_synthetic -- 60

use parfnet::data::{generate_synthetic, AugmentConfig, SyntheticSpec};
use parfnet::metrics::{evaluate_dataset, MetricOptions};
use parfnet::model::{build_model, ModelConfig};
use parfnet::training::{fit, AdamState, TrainConfig};

fn main() -> parfnet::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let data = generate_synthetic(&SyntheticSpec::default(), 0)?;
    let mut model = build_model::<f32>(&ModelConfig::desk(), 0)?;
    let config = TrainConfig {
        max_steps: Some(steps),
        augment: AugmentConfig::disabled(),
        ..TrainConfig::default()
    };
    let mut adam = AdamState::new(&model.params, config.lr);
    println!("{} parameters, {} images, {steps} steps", model.param_count(), data.len());
    fit(&mut model, &mut adam, &data, &config, |_| {}, |_, stats| {
        println!(
            "epoch {:>3}  ce {:.4}  dice loss {:.4}  total {:.4}",
            stats.epoch, stats.loss.ce, stats.loss.dice, stats.loss.total
        );
        Ok(())
    })?;
    let report = evaluate_dataset(&model, &data, &MetricOptions::default())?;
    let m = report.mean.rates;
    println!("train dice {:.4}  iou {:.4}  acc {:.4}", m.dice, m.iou, m.acc);
    Ok(())
}
