//! Matte evaluation: SAD and IoU on analytic fixtures, plus the non-hair
//! strokes drawn around a synthetic matte.
//!
//! `cargo run --example matte_metrics`

use hairsketch::matte::{evaluate_pairs, generate_nonhair_strokes, iou, sad, Matte};
use hairsketch::raster::Grid;

fn main() -> hairsketch::Result<()> {
    let zeros = Matte::zeros(512, 512);
    let ones = Matte::from_mask(&Grid::new(512, 512, true));
    println!("sad(a, a)          = {}", sad(&ones, &ones)?);
    println!("sad(zeros, ones)   = {}", sad(&zeros, &ones)?);
    let left = Matte::from_mask(&Grid::from_fn(512, 512, |_, x| x < 256));
    let middle = Matte::from_mask(&Grid::from_fn(512, 512, |_, x| (128..384).contains(&x)));
    println!("iou(left, middle)  = {}", iou(&left, &middle, 0.5)?);

    let report = evaluate_pairs(&[(left.clone(), left), (middle, ones)], 0.5, false)?;
    println!("report: {}", serde_json::to_string_pretty(&report)?);

    let disc = Matte::from_mask(&Grid::from_fn(256, 256, |y, x| {
        (y as f64 - 128.0).powi(2) + (x as f64 - 128.0).powi(2) < 70.0f64.powi(2)
    }));
    let strokes = generate_nonhair_strokes(&disc, 7);
    println!("{} non-hair strokes around a disc matte:", strokes.len());
    for s in &strokes {
        println!("  width {:.1}, {} points", s.width, s.points.len());
    }
    Ok(())
}
