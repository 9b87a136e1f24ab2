//! Finite-difference checks of every building block in double precision.
//! Add `--full` to include the assembled network (a few seconds more).
//!
//!     cargo run --release --example gradient_check -- --full

use parfnet::gradcheck::{check_block, BlockKind, GradCheckOptions};
use parfnet::model::ModelConfig;

fn main() -> parfnet::Result<()> {
    let full = std::env::args().any(|a| a == "--full");
    let opts = GradCheckOptions {
        max_elements: Some(8),
        ..GradCheckOptions::default()
    };
    for kind in BlockKind::ALL {
        if kind == BlockKind::FullModel && !full {
            continue;
        }
        let report = check_block(kind, &ModelConfig::desk(), &opts, false)?;
        let checked: usize = report.params.iter().map(|p| p.checked).sum();
        println!(
            "{:<26} {:>4} elements  max rel error {:.2e}  {}",
            kind.name(),
            checked,
            report.max_rel_error(),
            if report.pass { "ok" } else { "FAIL" }
        );
    }
    Ok(())
}
