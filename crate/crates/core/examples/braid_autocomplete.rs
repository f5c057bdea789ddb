//! Completes a braid between two drawn boundaries for every braid kind and
//! saves the stroke rasters.
//!
//! `cargo run --release --example braid_autocomplete -- [out_dir] [w]`

use hairsketch::braid::{autocomplete_braid, BraidKind, BraidRequest};
use hairsketch::raster::save_rgb_png;
use hairsketch::sketch::rasterize_color;

fn main() -> hairsketch::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "out/braid".into());
    let w: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1.5);
    std::fs::create_dir_all(&out)?;
    let left: Vec<[f32; 2]> = (0..=20).map(|i| [180.0, 60.0 + 20.0 * i as f32]).collect();
    let right: Vec<[f32; 2]> = left.iter().map(|p| [300.0, p[1]]).collect();
    let shades = [
        [0.35, 0.22, 0.12],
        [0.55, 0.38, 0.2],
        [0.75, 0.6, 0.35],
        [0.45, 0.3, 0.15],
        [0.65, 0.5, 0.3],
    ];
    for kind in BraidKind::ALL {
        let req = BraidRequest {
            kind,
            w,
            // One color per strand.
            palette: shades[..kind.n_strands()].to_vec(),
            boundary0: left.clone(),
            boundary1: right.clone(),
            canvas: Some([512, 512]),
        };
        let sketch = autocomplete_braid(&req)?;
        let name = format!("{kind:?}").to_lowercase();
        save_rgb_png(&rasterize_color(&sketch), format!("{out}/{name}.png"))?;
        sketch.save(format!("{out}/{name}.json"))?;
        println!("{kind:?}: {} strokes", sketch.strokes.len());
    }
    Ok(())
}
