//! Runs both generators on a synthetic sample: sketch to matte, then sketch,
//! matte and background to image. Weights come from checkpoints when given,
//! otherwise from a fresh (untrained) initialization.
//!
//! `cargo run --release --example generate_images -- [out_dir] [s2m.safetensors s2i.safetensors]`

use candle_core::DType;
use hairsketch::data::{seeded_background, synth_sample, HairStyle};
use hairsketch::nn::{NetConfig, S2INet, S2MNet};
use hairsketch::raster::save_rgb_png;
use hairsketch::sketch::{rasterize_color, rasterize_mono};

fn main() -> hairsketch::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args
        .first()
        .cloned()
        .unwrap_or_else(|| "out/generate".into());
    std::fs::create_dir_all(&out)?;
    let (s2m, s2i) = if args.len() >= 3 {
        (S2MNet::load(&args[1])?, S2INet::load(&args[2])?.0)
    } else {
        let cfg = NetConfig::small(128, 8);
        (
            S2MNet::new(cfg.clone(), 0, DType::F32)?,
            S2INet::new(cfg, 1, DType::F32)?,
        )
    };
    let size = s2m.config.image_size;
    let sample = synth_sample(HairStyle::Wavy, size, 3)?;
    let start = std::time::Instant::now();
    let matte = s2m.s2m_forward(&rasterize_mono(&sample.sketch))?;
    let background = seeded_background(&sample.image, &matte, 0);
    let image = s2i.s2i_forward(
        &rasterize_color(&sample.sketch.hair_only()),
        &matte,
        &background,
    )?;
    println!("inference at {size}×{size} took {:.1?}", start.elapsed());
    matte.save_png(format!("{out}/matte.png"))?;
    save_rgb_png(&image, format!("{out}/image.png"))?;
    println!("wrote {out}/matte.png and {out}/image.png");
    Ok(())
}
