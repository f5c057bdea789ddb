//! `hairsketch` command-line entry point.
//!
//! Every subcommand prints a JSON report on stdout. Failures print a single
//! JSON line `{"error": code, "message": ...}` on stderr and exit with 1, or
//! with 2 for malformed arguments.

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use hairsketch::braid::{autocomplete_braid, BraidRequest};
use hairsketch::color::{build_database, parse_hex_rgb};
use hairsketch::data::{
    list_samples, load_dataset, load_sample, sample_dir, save_sample, seeded_background, style_for,
    synth_sample, HairStyle,
};
use hairsketch::diffusion::{autocomplete_unbraided, ColorPolicy};
use hairsketch::losses::{GanMode, LossWeights};
use hairsketch::matte::{evaluate_pairs, Matte};
use hairsketch::nn::{NetConfig, S2INet, S2MNet};
use hairsketch::raster::{load_rgb_png, save_rgb_png, Grid};
use hairsketch::sketch::{rasterize_color, rasterize_mono, Sketch};
use hairsketch::trainer::{read_log, run_loop, Stage, TrainConfig, Trainer, TRAIN_LOG};
use hairsketch::{Error, Result};
use hairsketch_server::{AppState, SessionConfig};

#[derive(Parser)]
#[command(
    name = "hairsketch",
    version,
    about = "Sketch-based hair image synthesis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset of (sketch, matte, image) samples.
    GenData(GenData),
    /// Train one stage: s2m, s2i-unbraided or s2i-braided-finetune.
    Train(Train),
    /// Predict mattes (and images) for a sketch file or a dataset directory.
    Infer(Infer),
    /// SAD / IoU report over predicted and ground-truth mattes.
    Eval(Eval),
    /// Build the hair color database from a dataset.
    BuildColordb(BuildColordb),
    /// Run the HTTP service.
    Serve(Serve),
    /// Run braid or unbraided auto-completion on files.
    #[command(subcommand)]
    Autocomplete(Autocomplete),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 512)]
    canvas: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated subset of straight, wavy, braided.
    #[arg(long, default_value = "straight,wavy,braided")]
    styles: String,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    stage: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    iterations: u64,
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to the dataset's canvas size.
    #[arg(long)]
    image_size: Option<usize>,
    #[arg(long, default_value_t = 16)]
    base_channels: usize,
    #[arg(long, default_value_t = 2e-4)]
    lr_g: f64,
    #[arg(long, default_value_t = 2e-4)]
    lr_d: f64,
    #[arg(long, default_value_t = 0)]
    checkpoint_every: u64,
    /// Unbraided image checkpoint for the braided fine-tune.
    #[arg(long)]
    init_checkpoint: Option<PathBuf>,
    /// Continue a run from one of its checkpoints.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    no_augment: bool,
    #[arg(long)]
    least_squares: bool,
}

#[derive(Args)]
struct Infer {
    #[arg(long)]
    s2m: Option<PathBuf>,
    #[arg(long)]
    s2i: Option<PathBuf>,
    /// Single sketch JSON file.
    #[arg(long, conflicts_with = "data")]
    sketch: Option<PathBuf>,
    /// Dataset root; every sample's sketch is processed.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Use this matte instead of predicting one.
    #[arg(long)]
    matte: Option<PathBuf>,
    #[arg(long)]
    background: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Seed of the background noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Eval {
    /// Directory of predicted `<name>.png` mattes.
    #[arg(long)]
    pred: PathBuf,
    /// `<name>.png` files or `<name>/matte.png` sample directories.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f32,
    /// Report unscaled SAD sums instead of thousands.
    #[arg(long)]
    raw_sad: bool,
    /// Also write the report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BuildColordb {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Serve {
    #[arg(long, env = "HAIRSKETCH_PORT", default_value_t = hairsketch_server::DEFAULT_PORT)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, env = "HAIRSKETCH_S2M")]
    s2m: Option<PathBuf>,
    #[arg(long, env = "HAIRSKETCH_S2I_UNBRAIDED")]
    s2i_unbraided: Option<PathBuf>,
    #[arg(long, env = "HAIRSKETCH_S2I_BRAIDED")]
    s2i_braided: Option<PathBuf>,
    #[arg(long, env = "HAIRSKETCH_COLOR_DB")]
    color_db: Option<PathBuf>,
    #[arg(long, env = "HAIRSKETCH_CANVAS", default_value_t = 512)]
    canvas: usize,
    /// Default background-noise seed.
    #[arg(long, env = "HAIRSKETCH_NOISE_SEED", default_value_t = hairsketch_server::DEFAULT_NOISE_SEED)]
    seed: u64,
    #[arg(long, default_value_t = hairsketch_server::DEFAULT_MAX_INFLIGHT)]
    max_inflight: usize,
}

#[derive(Subcommand)]
enum Autocomplete {
    /// Braid between two boundaries from a JSON request file.
    Braid {
        #[arg(long)]
        request: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill a matte's uncovered region with medial strokes.
    Unbraided {
        #[arg(long)]
        sketch: PathBuf,
        #[arg(long)]
        matte: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Color all new strokes with this RRGGBB value.
        #[arg(long)]
        color: Option<String>,
    },
}

fn parse_styles(text: &str) -> Result<Vec<HairStyle>> {
    text.split(',')
        .map(|s| {
            serde_json::from_value(Value::String(s.trim().to_lowercase()))
                .map_err(|_| Error::InvalidInput(format!("unknown style {s}")))
        })
        .collect()
}

fn gen_data(a: GenData) -> Result<Value> {
    let styles = parse_styles(&a.styles)?;
    std::fs::create_dir_all(&a.out)?;
    let workers = a.workers.clamp(1, a.n.max(1));
    let results: Vec<Result<()>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|k| {
                let (styles, out) = (&styles, &a.out);
                scope.spawn(move || -> Result<()> {
                    for i in (k..a.n).step_by(workers) {
                        let pair = synth_sample(style_for(styles, i), a.canvas, a.seed + i as u64)?;
                        save_sample(sample_dir(out, i), &pair)?;
                    }
                    Ok(())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    results.into_iter().collect::<Result<()>>()?;
    Ok(json!({ "out": a.out, "samples": a.n, "canvas": a.canvas, "seed": a.seed }))
}

fn train(a: Train) -> Result<Value> {
    let stage = Stage::parse(&a.stage)?;
    let pairs = load_dataset(&a.data)?;
    let first = pairs
        .first()
        .ok_or_else(|| Error::InvalidInput(format!("no samples in {}", a.data.display())))?;
    let config = TrainConfig {
        stage,
        net: NetConfig::small(a.image_size.unwrap_or(first.dims().0), a.base_channels),
        weights: LossWeights::default(),
        gan_mode: if a.least_squares {
            GanMode::LeastSquares
        } else {
            GanMode::CrossEntropy
        },
        lr_g: a.lr_g,
        lr_d: a.lr_d,
        batch_size: a.batch_size,
        iterations: a.iterations,
        seed: a.seed,
        checkpoint_every: a.checkpoint_every,
        augment: !a.no_augment,
        init_checkpoint: a.init_checkpoint,
    };
    if stage == Stage::S2iBraidedFinetune {
        match &config.init_checkpoint {
            Some(p) if !p.exists() => return Err(Error::MissingCheckpoint(p.clone())),
            None => return Err(Error::MissingCheckpoint("<--init-checkpoint>".into())),
            _ => {}
        }
    }
    let mut trainer = match &a.resume {
        Some(p) => Trainer::resume(config, &hairsketch::nn::Checkpoint::load(p)?)?,
        None => {
            // A fresh run starts a fresh log.
            let log = a.out.join(TRAIN_LOG);
            if log.exists() {
                std::fs::remove_file(log)?;
            }
            Trainer::new(config)?
        }
    };
    let checkpoint = run_loop(&mut trainer, &pairs, &a.out)?;
    let log = read_log(&a.out.join(TRAIN_LOG))?;
    Ok(json!({
        "stage": stage,
        "checkpoint": checkpoint,
        "steps": trainer.step(),
        "first": log.first(),
        "last": log.last(),
    }))
}

fn load_matte_arg(path: &Option<PathBuf>) -> Result<Option<Matte>> {
    path.as_ref().map(Matte::load_png).transpose()
}

fn infer_one(
    sketch: &Sketch,
    s2m: Option<&S2MNet>,
    s2i: Option<&S2INet>,
    given_matte: Option<&Matte>,
    background: Option<&hairsketch::sketch::HairImage>,
    seed: u64,
) -> Result<(Matte, Option<hairsketch::sketch::HairImage>)> {
    let matte = match (given_matte, s2m) {
        (Some(m), _) => m.clone(),
        (None, Some(net)) => net.s2m_forward(&rasterize_mono(sketch))?,
        (None, None) => return Err(Error::InvalidInput("need --s2m or --matte".into())),
    };
    let image = match s2i {
        Some(net) => {
            let (h, w) = sketch.dims();
            let white = Grid::new(h, w, [1.0; 3]);
            let bg = seeded_background(background.unwrap_or(&white), &matte, seed);
            Some(net.s2i_forward(&rasterize_color(&sketch.hair_only()), &matte, &bg)?)
        }
        None => None,
    };
    Ok((matte, image))
}

fn infer(a: Infer) -> Result<Value> {
    let s2m = a.s2m.as_ref().map(S2MNet::load).transpose()?;
    let s2i = a
        .s2i
        .as_ref()
        .map(|p| S2INet::load(p).map(|(n, _)| n))
        .transpose()?;
    let matte = load_matte_arg(&a.matte)?;
    let background = a.background.as_ref().map(load_rgb_png).transpose()?;
    std::fs::create_dir_all(&a.out)?;
    let inputs: Vec<(String, Sketch)> = match (&a.sketch, &a.data) {
        (Some(p), None) => vec![("output".into(), Sketch::load(p)?)],
        (None, Some(root)) => list_samples(root)?
            .iter()
            .map(|d| {
                let name = d
                    .file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned();
                Ok((name, load_sample(d)?.sketch))
            })
            .collect::<Result<_>>()?,
        _ => {
            return Err(Error::InvalidInput(
                "pass exactly one of --sketch or --data".into(),
            ))
        }
    };
    let mut written = Vec::new();
    for (name, sketch) in &inputs {
        let (m, image) = infer_one(
            sketch,
            s2m.as_ref(),
            s2i.as_ref(),
            matte.as_ref(),
            background.as_ref(),
            a.seed,
        )?;
        let matte_path = a.out.join(format!("{name}.png"));
        m.save_png(&matte_path)?;
        let image_path = match image {
            Some(img) => {
                let p = a.out.join(format!("{name}_image.png"));
                save_rgb_png(&img, &p)?;
                Some(p)
            }
            None => None,
        };
        written.push(json!({ "name": name, "matte": matte_path, "image": image_path }));
    }
    Ok(json!({ "outputs": written }))
}

fn truth_path(root: &Path, stem: &str) -> PathBuf {
    let nested = root.join(stem).join("matte.png");
    if nested.exists() {
        nested
    } else {
        root.join(format!("{stem}.png"))
    }
}

fn eval(a: Eval) -> Result<Value> {
    let mut preds: Vec<PathBuf> = std::fs::read_dir(&a.pred)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "png")
                && !p
                    .file_stem()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .ends_with("_image")
        })
        .collect();
    preds.sort();
    let pairs = preds
        .iter()
        .map(|p| {
            let stem = p.file_stem().unwrap_or_default().to_string_lossy();
            Ok((
                Matte::load_png(p)?,
                Matte::load_png(truth_path(&a.truth, &stem))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = serde_json::to_value(evaluate_pairs(&pairs, a.threshold, a.raw_sad)?)?;
    if let Some(path) = &a.report {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report)
}

fn build_colordb(a: BuildColordb) -> Result<Value> {
    let pairs = load_dataset(&a.data)?;
    let db = build_database(pairs.iter().map(|p| (&p.sketch, &p.image)))?;
    db.save(&a.out)?;
    Ok(json!({ "out": a.out, "entries": db.len() }))
}

fn serve(a: Serve) -> Result<Value> {
    let config = SessionConfig {
        s2m: a.s2m,
        s2i_unbraided: a.s2i_unbraided,
        s2i_braided: a.s2i_braided,
        color_db: a.color_db,
        canvas: a.canvas,
        noise_seed: a.seed,
        max_inflight: a.max_inflight,
    };
    let state = AppState::load(config)?;
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| Error::InvalidInput(format!("bad address: {e}")))?;
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .init();
    tokio::runtime::Runtime::new()?.block_on(hairsketch_server::serve(state, addr))?;
    Ok(json!({ "stopped": true }))
}

fn autocomplete(a: Autocomplete) -> Result<Value> {
    match a {
        Autocomplete::Braid { request, out } => {
            let req: BraidRequest = serde_json::from_str(&std::fs::read_to_string(request)?)?;
            let sketch = autocomplete_braid(&req)?;
            sketch.save(&out)?;
            Ok(json!({ "out": out, "strokes": sketch.strokes.len() }))
        }
        Autocomplete::Unbraided {
            sketch,
            matte,
            out,
            color,
        } => {
            let policy = match color {
                Some(c) => ColorPolicy::Fixed(parse_hex_rgb(&c)?),
                None => ColorPolicy::NearestUserStroke,
            };
            let input = Sketch::load(sketch)?;
            let done = autocomplete_unbraided(&input, &Matte::load_png(matte)?, policy)?;
            done.save(&out)?;
            let added = done.strokes.len() - input.strokes.len();
            Ok(json!({ "out": out, "strokes": done.strokes.len(), "generated": added }))
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or_default();
            eprintln!(
                "{}",
                json!({ "error": "usage", "message": first.trim_start_matches("error: ") })
            );
            std::process::exit(2);
        }
    };
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Infer(a) => infer(a),
        Command::Eval(a) => eval(a),
        Command::BuildColordb(a) => build_colordb(a),
        Command::Serve(a) => serve(a),
        Command::Autocomplete(a) => autocomplete(a),
    };
    match result {
        Ok(report) => println!("{report}"),
        Err(e) => {
            eprintln!("{}", json!({ "error": e.code(), "message": e.to_string() }));
            std::process::exit(1);
        }
    }
}
