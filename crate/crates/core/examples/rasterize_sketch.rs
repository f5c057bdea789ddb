//! Builds a small sketch by hand, saves it as JSON and rasterizes both
//! network input maps to PNG.
//!
//! `cargo run --example rasterize_sketch -- [out_dir]`

use hairsketch::raster::{save_gray_png, save_rgb_png};
use hairsketch::sketch::{rasterize_color, rasterize_mono, Sketch, Stroke};

fn main() -> hairsketch::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "out/rasterize".into());
    std::fs::create_dir_all(&out)?;
    let mut sketch = Sketch::new(256, 256);
    let brown = [0.45, 0.3, 0.18];
    for (i, dx) in [-30.0f32, 0.0, 30.0].iter().enumerate() {
        let pts = (0..12)
            .map(|k| {
                let t = k as f32 / 11.0;
                [128.0 + dx + 12.0 * (t * 6.0).sin(), 40.0 + 180.0 * t]
            })
            .collect();
        sketch.strokes.push(Stroke::hair(i as u64, pts, 3.0, brown));
    }
    sketch.strokes.push(Stroke::non_hair(
        3,
        vec![[40.0, 230.0], [216.0, 230.0]],
        4.0,
    ));
    sketch.validate()?;
    sketch.save(format!("{out}/sketch.json"))?;
    save_gray_png(&rasterize_mono(&sketch), format!("{out}/sketch_mono.png"))?;
    save_rgb_png(&rasterize_color(&sketch), format!("{out}/sketch_color.png"))?;
    println!("wrote {out}/sketch.json, sketch_mono.png, sketch_color.png");
    Ok(())
}
