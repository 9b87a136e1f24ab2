//! Runs one Conv-PARF layer on a synthetic image and reports how strongly each
//! kernel size is selected per pixel, inside and outside the objects.
//!
//!     cargo run --example conv_parf_maps

use parfnet::data::{generate_synthetic, SyntheticSpec};
use parfnet::nn::{Conv2d, ConvParfLayer, ParfCapture};
use parfnet::{ParamStore, Tape};

fn main() -> parfnet::Result<()> {
    let sample = generate_synthetic(&SyntheticSpec::default(), 3)?.remove(0);
    let mut store = ParamStore::<f32>::new(0);
    let stem = Conv2d::same(&mut store, "stem", 3, 8, 3)?;
    let layer = ConvParfLayer::new(&mut store, "parf", 8, &[3, 7, 11])?;

    let mut tape = Tape::new(&store);
    let x = tape.constant(sample.image.clone());
    let features = stem.forward(&mut tape, x)?;
    let mut capture = ParfCapture::default();
    let y = layer.forward(&mut tape, features, Some(&mut capture))?;
    println!("input {:?} -> output {:?}", sample.image.shape(), tape.shape(y));

    let inside: Vec<bool> = sample.mask.labels.iter().map(|&l| l > 0).collect();
    println!("kernel  mean gate (object)  mean gate (background)");
    for (map, k) in capture.maps.iter().zip(&layer.kernel_sizes) {
        let (mut fg, mut bg, mut n_fg) = (0.0, 0.0, 0usize);
        for (&a, &is_fg) in map.data().iter().zip(&inside) {
            if is_fg {
                fg += a;
                n_fg += 1;
            } else {
                bg += a;
            }
        }
        let n_bg = inside.len() - n_fg;
        println!("{k:>6}  {:>19.4}  {:>22.4}", fg / n_fg.max(1) as f32, bg / n_bg.max(1) as f32);
    }
    Ok(())
}
