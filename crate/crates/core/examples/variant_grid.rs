//! Builds every architecture variant of the ablation grid at desk scale and
//! prints its size and per-stage layout.
//!
//!     cargo run --example variant_grid

use parfnet::model::{build_model, parse_variant, ModelConfig, TABLE_VARIANTS};

fn main() -> parfnet::Result<()> {
    println!("{:<16} {:>10}  encoder / decoder slots", "variant", "params");
    for text in TABLE_VARIANTS {
        let config = ModelConfig {
            variant: parse_variant(text)?,
            ..ModelConfig::desk()
        };
        let net = build_model::<f32>(&config, 0)?;
        let enc: Vec<_> = net.encoders.iter().map(|l| l.kind().as_str()).collect();
        let dec: Vec<_> = net.decoders.iter().map(|l| l.kind().as_str()).collect();
        println!("{text:<16} {:>10}  {} / {}", net.param_count(), enc.join(","), dec.join(","));
    }
    Ok(())
}
