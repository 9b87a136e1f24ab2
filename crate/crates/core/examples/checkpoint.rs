//! Takes two optimizer steps, writes a checkpoint, restores it into a freshly
//! initialised model and checks that both predict the same logits.
//!
//!     cargo run --release --example checkpoint

use parfnet::data::{generate_synthetic, SyntheticSpec};
use parfnet::model::{build_model, ModelConfig};
use parfnet::training::{load_checkpoint, make_batch, save_checkpoint, train_step, AdamState};

fn main() -> parfnet::Result<()> {
    let config = ModelConfig {
        base_width: 8,
        ..ModelConfig::desk()
    };
    let spec = SyntheticSpec {
        count: 2,
        ..SyntheticSpec::default()
    };
    let (images, targets) = make_batch::<f32>(&generate_synthetic(&spec, 0)?)?;
    let mut model = build_model::<f32>(&config, 0)?;
    let mut adam = AdamState::new(&model.params, 1e-3);
    for _ in 0..2 {
        let loss = train_step(&mut model, &mut adam, &images, &targets, None)?;
        println!("step {} loss {:.4}", adam.step, loss.total);
    }

    let path = std::env::temp_dir().join("parfnet_example.parf");
    save_checkpoint(&model, &adam, &path)?;
    println!("wrote {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());

    let mut restored = build_model::<f32>(&config, 123)?;
    let mut restored_adam = AdamState::new(&restored.params, 1e-3);
    load_checkpoint(&mut restored, &mut restored_adam, &path)?;
    let diff = model.predict(&images)?.max_abs_diff(&restored.predict(&images)?);
    println!("restored step {}, max logit difference {diff}", restored_adam.step);
    std::fs::remove_file(&path)?;
    Ok(())
}
