//! Overfits both generators on four synthetic 64×64 samples and prints the
//! loss trajectory.
//!
//! `cargo run --release --example train_overfit -- [iterations]`

use hairsketch::data::{synth_sample, HairStyle, SamplePair};
use hairsketch::nn::NetConfig;
use hairsketch::trainer::{Stage, TrainConfig, Trainer};

fn run(
    stage: Stage,
    pairs: &[SamplePair],
    batch: usize,
    iterations: u64,
) -> hairsketch::Result<()> {
    let mut trainer = Trainer::new(TrainConfig {
        stage,
        net: NetConfig::small(64, 8),
        batch_size: batch,
        iterations,
        seed: 11,
        augment: false,
        ..TrainConfig::default()
    })?;
    let start = std::time::Instant::now();
    let mut first = None;
    let mut last = None;
    for _ in 0..iterations {
        let l = trainer.advance(pairs)?;
        first.get_or_insert(l);
        last = Some(l);
        if trainer.step() % 25 == 0 {
            println!(
                "{stage:?} step {:4}  l1 {:.4}  total {:.3}",
                trainer.step(),
                l.l1,
                l.total
            );
        }
    }
    let (a, b) = (first.unwrap(), last.unwrap());
    println!(
        "{stage:?}: l1 {:.4} -> {:.4} ({:.0}%), total {:.3} -> {:.3} ({:.0}%) in {:.1?}",
        a.l1,
        b.l1,
        100.0 * b.l1 / a.l1,
        a.total,
        b.total,
        100.0 * b.total / a.total,
        start.elapsed()
    );
    Ok(())
}

fn main() -> hairsketch::Result<()> {
    let iterations = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(200);
    let mixed: Vec<SamplePair> = [
        HairStyle::Straight,
        HairStyle::Braided,
        HairStyle::Wavy,
        HairStyle::Braided,
    ]
    .iter()
    .enumerate()
    .map(|(i, &s)| synth_sample(s, 64, 40 + i as u64))
    .collect::<Result<_, _>>()?;
    run(Stage::S2m, &mixed, 2, iterations)?;
    let unbraided: Vec<SamplePair> = (0..4)
        .map(|i| synth_sample(HairStyle::ALL[i % 2], 64, 60 + i as u64))
        .collect::<Result<_, _>>()?;
    run(Stage::S2iUnbraided, &unbraided, 4, iterations)?;
    Ok(())
}
