//! Generates a few procedural samples of each style and writes them in the
//! on-disk dataset layout.
//!
//! ```text
//! cargo run --release -p hairsketch --example synth_dataset -- out/synth 6 256
//! ```

use hairsketch::data::{generate_dataset, load_sample, HairStyle};

fn main() -> hairsketch::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let root = args
        .first()
        .map(String::as_str)
        .unwrap_or("target/examples/synth");
    let count = args.get(1).and_then(|v| v.parse().ok()).unwrap_or(6);
    let canvas = args.get(2).and_then(|v| v.parse().ok()).unwrap_or(256);

    let dirs = generate_dataset(root, count, canvas, 7, &HairStyle::ALL)?;
    for dir in &dirs {
        let pair = load_sample(dir)?;
        println!(
            "{}  style={:?}  strokes={}  matte mass={:.0}",
            dir.display(),
            pair.meta.style,
            pair.sketch.strokes.len(),
            pair.matte.mass()
        );
    }
    Ok(())
}
