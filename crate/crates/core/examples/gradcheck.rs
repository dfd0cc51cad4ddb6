//! Finite-difference checks of every layer kind and of the three step
//! objectives in double precision.

use voice2face::trainer::step_gradient_suite;
use voice2face_tensor::suite::{layer_suite, SUITE_STEP, SUITE_TOLERANCE};

fn main() -> voice2face::Result<()> {
    let mut ok = true;
    for entry in layer_suite(7)? {
        ok &= entry.passes();
        println!("{:<24} {:.3e}", entry.name, entry.report.max_relative_error);
    }
    for r in step_gradient_suite(7, SUITE_STEP)? {
        ok &= r.passes(SUITE_TOLERANCE);
        println!(
            "step {:<18} {:.3e} ({} coordinates, {} kink crossings)",
            r.kind.name(),
            r.max_relative_error,
            r.checked,
            r.kink_crossings
        );
    }
    println!("all checks pass: {ok}");
    Ok(())
}
