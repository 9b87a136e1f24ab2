//! Traces the two branches of a hybrid Transformer-CNN layer and shows that
//! zeroing the exit projections turns the layer into an identity.
//!
//!     cargo run --example hybrid_module

use parfnet::nn::{AttentionConfig, HybridLayer};
use parfnet::{ParamStore, Tape, Tensor};
use rand::SeedableRng;

fn main() -> parfnet::Result<()> {
    let config = AttentionConfig {
        window: 4,
        heads: 2,
        ..AttentionConfig::default()
    };
    let mut store = ParamStore::<f64>::new(7);
    let layer = HybridLayer::new(&mut store, "hybrid", 16, config)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::randn(&[1, 16, 8, 8], 1.0, &mut rng);

    let mut traces = Vec::new();
    let mut tape = Tape::new(&store);
    let input = tape.constant(x.clone());
    let y = layer.forward(&mut tape, input, Some(&mut traces))?;
    for (i, t) in traces.iter().enumerate() {
        println!(
            "module {i}: conv branch {:?}, attention branch {:?}, output {:?}",
            t.conv_branch_out.shape(),
            t.attention_branch_out.shape(),
            t.output.shape()
        );
    }
    println!("max |y - x| with trained exits: {:.4}", tape.value(y).max_abs_diff(&x));

    for conv in [&layer.first.exit, &layer.second.exit] {
        for id in conv.param_ids() {
            let t = store.value_mut(id);
            *t = Tensor::zeros(t.shape());
        }
    }
    let mut tape = Tape::new(&store);
    let input = tape.constant(x.clone());
    let y = layer.forward(&mut tape, input, None)?;
    println!("max |y - x| with zero exits:    {:.4}", tape.value(y).max_abs_diff(&x));
    Ok(())
}
