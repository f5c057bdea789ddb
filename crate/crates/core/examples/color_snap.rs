//! Builds a color database from synthetic samples and snaps a picked color
//! to one of its nearest Lab neighbours.
//!
//! `cargo run --release --example color_snap -- [RRGGBB]`

use hairsketch::color::{build_database, nearest_indices, parse_hex_rgb, snap_color, to_hex_rgb};
use hairsketch::data::{synth_sample, HairStyle};

fn main() -> hairsketch::Result<()> {
    let query = parse_hex_rgb(&std::env::args().nth(1).unwrap_or_else(|| "8a5a2b".into()))?;
    let samples = (0..6)
        .map(|i| synth_sample(HairStyle::ALL[i % 3], 128, i as u64))
        .collect::<hairsketch::Result<Vec<_>>>()?;
    let db = build_database(samples.iter().map(|s| (&s.sketch, &s.image)))?;
    println!("database: {} colors", db.len());
    for (idx, dist) in nearest_indices(&db, query, 5)? {
        println!("  {}  ΔE {:.2}", to_hex_rgb(db.entries[idx].rgb), dist);
    }
    for seed in 0..3 {
        println!(
            "snap #{seed}: {}",
            to_hex_rgb(snap_color(&db, query, seed)?)
        );
    }
    Ok(())
}
