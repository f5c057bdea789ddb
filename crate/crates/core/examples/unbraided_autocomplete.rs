//! Fills the uncovered parts of a hair matte with medial-axis strokes.
//!
//! `cargo run --release --example unbraided_autocomplete -- [out_dir]`

use hairsketch::diffusion::{autocomplete_unbraided, build_subtracted_map, ColorPolicy};
use hairsketch::matte::{matte_to_mask, Matte};
use hairsketch::raster::{save_gray_png, save_rgb_png, Grid};
use hairsketch::sketch::{rasterize_color, Sketch, Stroke};

fn main() -> hairsketch::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "out/unbraided".into());
    std::fs::create_dir_all(&out)?;
    // A wide hair region with a single stroke down its middle.
    let matte = Matte::from_mask(&Grid::from_fn(256, 256, |y, x| {
        let dx = (x as f64 - 128.0) / 90.0;
        let dy = (y as f64 - 128.0) / 110.0;
        dx * dx + dy * dy < 1.0
    }));
    let mut sketch = Sketch::new(256, 256);
    sketch.strokes.push(Stroke::hair(
        0,
        vec![[128.0, 30.0], [120.0, 128.0], [128.0, 226.0]],
        3.0,
        [0.6, 0.42, 0.25],
    ));
    let map = build_subtracted_map(&sketch, &matte_to_mask(&matte, 0.5))?;
    save_gray_png(
        &map.map(|&v| if v { 1.0 } else { 0.0 }),
        format!("{out}/subtracted.png"),
    )?;
    let done = autocomplete_unbraided(&sketch, &matte, ColorPolicy::NearestUserStroke)?;
    let generated = done.strokes.iter().filter(|s| s.generated).count();
    println!(
        "added {generated} strokes to {} user strokes",
        sketch.strokes.len()
    );
    save_rgb_png(&rasterize_color(&done), format!("{out}/completed.png"))?;
    done.save(format!("{out}/completed.json"))?;
    Ok(())
}
