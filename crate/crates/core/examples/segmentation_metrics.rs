//! Scores a hand-made prediction against a reference mask.
//!
//!     cargo run --example segmentation_metrics

use parfnet::metrics::{confusion, hausdorff, image_metrics, MetricOptions};

fn main() -> parfnet::Result<()> {
    let (h, w) = (6, 8);
    let square = |y0: usize, x0: usize, side: usize| -> Vec<usize> {
        (0..h * w)
            .map(|i| usize::from((y0..y0 + side).contains(&(i / w)) && (x0..x0 + side).contains(&(i % w))))
            .collect()
    };
    let gt = square(1, 1, 4);
    let pred = square(1, 2, 4);

    let counts = confusion(&pred, &gt, 2)?;
    let fg = counts.class(1);
    println!("foreground tp {} fp {} fn {} tn {}", fg.tp, fg.fp, fg.fn_, fg.tn);
    let r = fg.rates();
    println!(
        "iou {:.3} dice {:.3} acc {:.3} recall {:.3} precision {:.3}",
        r.iou, r.dice, r.acc, r.recall, r.precision
    );

    let as_bool = |m: &[usize]| m.iter().map(|&v| v == 1).collect::<Vec<_>>();
    for pct in [95.0, 100.0] {
        let d = hausdorff(&as_bool(&pred), &as_bool(&gt), h, w, pct)?;
        println!("hausdorff p{pct}: {d:?}");
    }
    let report = image_metrics("example", &pred, &gt, h, w, 2, &MetricOptions::default())?;
    println!("{}", serde_json::to_string_pretty(&report).expect("metrics serialise"));
    Ok(())
}
