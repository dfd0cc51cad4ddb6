//! Layer-by-layer output shapes of the four networks, full width and
//! narrowed, for a few input lengths.

use voice2face::models::{shape_report, Architecture, ModelBundle};

fn main() -> voice2face::Result<()> {
    let full = Architecture::full(924);
    for frames in [100, 151, 300, 800] {
        println!("== input frames {frames} ==");
        print!("{}", shape_report(&full, frames)?);
    }
    let desk = Architecture::full(24).narrowed(8);
    println!("== narrowed by 8, 300 frames ==");
    print!("{}", shape_report(&desk, 300)?);
    let bundle = ModelBundle::<f32>::new(desk, 7)?;
    print!("{}", bundle.parameter_counts().report());
    Ok(())
}
