//! Synthetic training data: procedural hair samples, augmentation, on-disk
//! layout and per-iteration training batches.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use crate::braid::{self, BoundaryPair, BraidKind};
use crate::error::{Error, Result};
use crate::matte::{generate_nonhair_strokes, matte_to_mask, Matte};
use crate::raster::{
    dilate_square, distance_transform, load_rgb_png, save_rgb_png, Grid, Mask, Plane, Rgb,
};
use crate::sketch::{
    footprint_mean, rasterize_color, rasterize_mono, recolor_strokes_from_image, HairImage,
    RecolorMode, Sketch, SketchMapColor, SketchMapMono, Stroke,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HairStyle {
    Straight,
    Wavy,
    Braided,
}

impl HairStyle {
    pub const ALL: [HairStyle; 3] = [HairStyle::Straight, HairStyle::Wavy, HairStyle::Braided];

    pub fn is_braided(self) -> bool {
        self == HairStyle::Braided
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub style: HairStyle,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    pub sketch: Sketch,
    pub matte: Matte,
    pub image: HairImage,
    pub background: HairImage,
    pub meta: SampleMeta,
}

impl SamplePair {
    pub fn dims(&self) -> (usize, usize) {
        self.matte.dims()
    }
}

/// Realistic base hair colors the per-lock colors are jittered around.
const HAIR_BASES: [Rgb; 8] = [
    [0.09, 0.07, 0.06],
    [0.23, 0.15, 0.10],
    [0.42, 0.27, 0.16],
    [0.63, 0.47, 0.30],
    [0.85, 0.72, 0.48],
    [0.55, 0.20, 0.10],
    [0.75, 0.75, 0.74],
    [0.35, 0.30, 0.28],
];

/// A hair lock: a center-line polyline plus its base color.
struct Lock {
    line: Vec<[f64; 2]>,
    color: Rgb,
}

fn style_code(style: HairStyle) -> u64 {
    match style {
        HairStyle::Straight => 0x5354,
        HairStyle::Wavy => 0x5741,
        HairStyle::Braided => 0x4252,
    }
}

fn in_canvas(p: [f64; 2], size: usize, margin: f64) -> bool {
    let hi = size as f64 - 1.0 - margin;
    (margin..=hi).contains(&p[0]) && (margin..=hi).contains(&p[1])
}

/// Longest run of consecutive in-canvas points.
fn clip_polyline(points: &[[f64; 2]], size: usize, margin: f64) -> Vec<[f64; 2]> {
    let mut best: &[[f64; 2]] = &[];
    let mut start = 0;
    for i in 0..=points.len() {
        if i == points.len() || !in_canvas(points[i], size, margin) {
            if i - start > best.len() {
                best = &points[start..i];
            }
            start = i + 1;
        }
    }
    best.to_vec()
}

fn to_f32(line: &[[f64; 2]]) -> Vec<[f32; 2]> {
    line.iter().map(|p| [p[0] as f32, p[1] as f32]).collect()
}

fn jitter_color(rng: &mut ChaCha8Rng, base: Rgb, amount: f32) -> Rgb {
    base.map(|c| (c + rng.gen_range(-amount..=amount)).clamp(0.0, 1.0))
}

/// Distance from every pixel to a lock's center-line.
fn lock_distance(line: &[[f64; 2]], size: usize) -> Grid<f64> {
    let mut seeds = Grid::new(size, size, false);
    Stroke::hair(0, to_f32(line), 1.0, [0.0; 3]).paint(&mut seeds);
    distance_transform(&seeds)
}

/// `1` up to `inner`, `0` beyond `inner + feather`, smoothstep between.
fn feathered(d: f64, inner: f64, feather: f64) -> f64 {
    let t = ((d - inner) / feather).clamp(0.0, 1.0);
    1.0 - t * t * (3.0 - 2.0 * t)
}

fn box_blur3(plane: &Plane) -> Plane {
    let (h, w) = plane.dims();
    Grid::from_fn(h, w, |y, x| {
        let mut acc = 0.0;
        let mut n = 0.0;
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(v) = plane.at(y as isize + dy, x as isize + dx) {
                    acc += v;
                    n += 1.0;
                }
            }
        }
        acc / n
    })
}

/// Strand-like guide curves for the straight and wavy styles.
fn flow_locks(rng: &mut ChaCha8Rng, style: HairStyle, size: usize, base: Rgb) -> Vec<Lock> {
    let c = size as f64;
    let n = rng.gen_range(5..=20usize);
    let cx = rng.gen_range(0.4..0.6) * c;
    let y0 = rng.gen_range(0.08..0.2) * c;
    let length = rng.gen_range(0.5..0.75) * c;
    let band = rng.gen_range(0.25..0.45) * c;
    let tilt: f64 = rng.gen_range(-0.3..0.3);
    let along = [tilt.sin(), tilt.cos()];
    let across = [tilt.cos(), -tilt.sin()];
    let amplitude = rng.gen_range(0.02..0.05) * c;
    let wavelength = rng.gen_range(0.2..0.4) * c;
    let wave_phase = rng.gen_range(0.0..2.0 * PI);
    let spacing = band / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let u0 = (i as f64 / (n - 1) as f64 - 0.5) * band + rng.gen_range(-0.2..0.2) * spacing;
            let v0 = rng.gen_range(0.0..0.1) * length;
            let li = length * rng.gen_range(0.7..1.0);
            let bend = rng.gen_range(-0.1..0.1);
            let line: Vec<[f64; 2]> = (0..24)
                .map(|j| {
                    let s = j as f64 / 23.0;
                    let v = v0 + s * li;
                    let u = u0
                        + match style {
                            HairStyle::Wavy => {
                                amplitude * (2.0 * PI * v / wavelength + wave_phase).sin()
                            }
                            _ => bend * (s - 0.5) * (s - 0.5) * li,
                        };
                    [
                        cx + v * along[0] + u * across[0],
                        y0 + v * along[1] + u * across[1],
                    ]
                })
                .collect();
            Lock {
                line: clip_polyline(&line, size, 2.0),
                color: jitter_color(rng, base, 0.06),
            }
        })
        .filter(|l| l.line.len() >= 2)
        .collect()
}

/// Generates one procedural sample; bit-identical for a fixed seed.
pub fn synth_sample(style: HairStyle, canvas: usize, seed: u64) -> Result<SamplePair> {
    if canvas < 32 {
        return Err(Error::InvalidInput(format!("canvas {canvas} below 32 px")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (style_code(style) << 40));
    let scale = canvas as f64 / 512.0;
    let size = canvas;
    let base = *HAIR_BASES.choose(&mut rng).unwrap();
    let feather = (rng.gen_range(4.0..=10.0) * scale).max(1.0);
    let stroke_width = (3.0 * scale).max(1.0) as f32;

    let mut locks: Vec<Lock>;
    let mut strokes: Vec<Stroke>;
    let inner: f64;
    let mut visible: Option<Grid<i32>> = None;
    match style {
        HairStyle::Straight | HairStyle::Wavy => {
            locks = flow_locks(&mut rng, style, size, base);
            // The flow band is sampled with at least 5 locks, so spacing is bounded.
            let spread = locks
                .windows(2)
                .map(|w| {
                    let (a, b) = (w[0].line[0], w[1].line[0]);
                    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
                })
                .fold(0.0f64, f64::max);
            inner = (0.6 * spread).max(stroke_width as f64 + 2.0 * scale);
            strokes = locks
                .iter()
                .enumerate()
                .map(|(i, l)| Stroke::hair(i as u64, to_f32(&l.line), stroke_width, l.color))
                .collect();
        }
        HairStyle::Braided => {
            let c = size as f64;
            let half = rng.gen_range(0.08..0.14) * c;
            let cx = rng.gen_range(0.4..0.6) * c;
            let top = rng.gen_range(0.06..0.15) * c;
            let bottom = top + rng.gen_range(0.65..0.8) * c;
            let slant = rng.gen_range(-0.05..0.05) * c;
            let boundaries = BoundaryPair {
                b0: vec![
                    [(cx - half) as f32, top as f32],
                    [(cx - half + slant) as f32, bottom as f32],
                ],
                b1: vec![
                    [(cx + half) as f32, top as f32],
                    [(cx + half + slant) as f32, bottom as f32],
                ],
            };
            let kind = *BraidKind::ALL.choose(&mut rng).unwrap();
            let w = rng.gen_range(0.8..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let spec = braid::fit_braid_params(&boundaries, kind, w)?;
            let geom = braid::expand_tubes(&braid::eval_centerlines(&spec, 256)?)?;
            locks = geom
                .centerlines
                .iter()
                .map(|l| Lock {
                    line: clip_polyline(
                        &l.iter().map(|p| [p[0], p[1]]).collect::<Vec<_>>(),
                        size,
                        0.0,
                    ),
                    color: jitter_color(&mut rng, base, 0.08),
                })
                .collect();
            let palette: Vec<Rgb> = locks.iter().map(|l| l.color).collect();
            let render = braid::render_braid_sketch(&geom, &palette, (size, size))?;
            strokes = braid::braid_edges_to_strokes(&render);
            for s in &mut strokes {
                s.width = stroke_width;
            }
            // Edges sit on the tube silhouettes; the opaque core reaches past them.
            inner = geom.tube_radius + 2.0 * scale.max(0.5);
            visible = Some(render.strand_id);
            locks.retain(|l| l.line.len() >= 2);
        }
    }
    if locks.is_empty() {
        return Err(Error::InvalidInput(
            "sample has no hair inside the canvas".into(),
        ));
    }

    let distances: Vec<Grid<f64>> = locks.iter().map(|l| lock_distance(&l.line, size)).collect();
    let mut nearest = Grid::new(size, size, (f64::INFINITY, 0usize));
    for (k, d) in distances.iter().enumerate() {
        for (n, &v) in nearest.data_mut().iter_mut().zip(d.data()) {
            if v < n.0 {
                *n = (v, k);
            }
        }
    }
    let alpha = nearest.map(|&(d, _)| feathered(d, inner, feather) as f32);

    let background_color: Rgb = [
        rng.gen_range(0.3..0.95),
        rng.gen_range(0.3..0.95),
        rng.gen_range(0.3..0.95),
    ];
    let background = Grid::new(size, size, background_color);
    let noise = box_blur3(&Grid::from_fn(size, size, |_, _| {
        rng.gen_range(-0.05f32..0.05)
    }));
    let band_period = (7.0 * scale).max(2.0);
    let image = Grid::from_fn(size, size, |y, x| {
        let a = *alpha.get(y, x);
        if a == 0.0 {
            return background_color;
        }
        let owner = match &visible {
            Some(ids) if *ids.get(y, x) >= 0 => *ids.get(y, x) as usize,
            _ => nearest.get(y, x).1,
        };
        let d = *distances[owner].get(y, x);
        let shade = 0.9 + 0.12 * (2.0 * PI * d / band_period).cos() as f32;
        let n = *noise.get(y, x);
        let hair = locks[owner].color.map(|c| (c * shade + n).clamp(0.0, 1.0));
        crate::raster::lerp_rgb(background_color, hair, a)
    });

    let mut sketch = Sketch::new(size, size);
    for (i, mut s) in strokes.into_iter().enumerate() {
        s.id = i as u64;
        if let Some(c) = footprint_mean(&s, &image) {
            s.color = c;
        }
        sketch.strokes.push(s);
    }
    Ok(SamplePair {
        sketch,
        matte: Matte::from_plane_clamped(alpha),
        image,
        background,
        meta: SampleMeta { style, seed },
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub translate: (f64, f64),
    pub rotate_deg: f64,
    pub hflip: bool,
}

impl AugmentParams {
    pub fn is_identity(&self) -> bool {
        *self == Self::default()
    }

    /// Random parameters: rotation in ±15°, translation in ±32 px at 512 px
    /// (scaled with the canvas), and a fair coin for the flip.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, canvas: usize) -> Self {
        let t = 32.0 * canvas as f64 / 512.0;
        Self {
            translate: (rng.gen_range(-t..=t), rng.gen_range(-t..=t)),
            rotate_deg: rng.gen_range(-15.0..=15.0),
            hflip: rng.gen_bool(0.5),
        }
    }
}

/// Forward map of an augmentation: flip across the canvas, then rotate about
/// `center`, then translate.
#[derive(Clone, Copy, Debug)]
struct Affine {
    width: f64,
    hflip: bool,
    center: [f64; 2],
    cos: f64,
    sin: f64,
    t: (f64, f64),
}

impl Affine {
    fn flip(&self, p: [f64; 2]) -> [f64; 2] {
        if self.hflip {
            [self.width - 1.0 - p[0], p[1]]
        } else {
            p
        }
    }

    fn forward(&self, p: [f64; 2]) -> [f64; 2] {
        let [x, y] = self.flip(p);
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        [
            self.center[0] + self.cos * dx - self.sin * dy + self.t.0,
            self.center[1] + self.sin * dx + self.cos * dy + self.t.1,
        ]
    }

    fn inverse(&self, q: [f64; 2]) -> [f64; 2] {
        let (dx, dy) = (
            q[0] - self.t.0 - self.center[0],
            q[1] - self.t.1 - self.center[1],
        );
        self.flip([
            self.center[0] + self.cos * dx + self.sin * dy,
            self.center[1] - self.sin * dx + self.cos * dy,
        ])
    }
}

/// Bilinear sample treating everything off the grid as `zero`.
fn sample_zero<T: Copy>(grid: &Grid<T>, p: [f64; 2], zero: T, lerp: impl Fn(T, T, f32) -> T) -> T {
    let (x0, y0) = (p[0].floor(), p[1].floor());
    let (fx, fy) = ((p[0] - x0) as f32, (p[1] - y0) as f32);
    let at = |y: f64, x: f64| *grid.at(y as isize, x as isize).unwrap_or(&zero);
    let top = lerp(at(y0, x0), at(y0, x0 + 1.0), fx);
    let bottom = lerp(at(y0 + 1.0, x0), at(y0 + 1.0, x0 + 1.0), fx);
    lerp(top, bottom, fy)
}

fn matte_center(matte: &Matte) -> [f64; 2] {
    let mut acc = [0.0f64; 3];
    for (y, x, &v) in matte.plane().indexed() {
        acc[0] += v as f64 * x as f64;
        acc[1] += v as f64 * y as f64;
        acc[2] += v as f64;
    }
    let (h, w) = matte.dims();
    if acc[2] == 0.0 {
        [(w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0]
    } else {
        [acc[0] / acc[2], acc[1] / acc[2]]
    }
}

/// Applies one affine transform to the matte, the hair foreground and the
/// sketch. The transformed foreground is composited over the untransformed
/// background.
pub fn augment(pair: &SamplePair, params: &AugmentParams) -> Result<SamplePair> {
    if !(-15.0..=15.0).contains(&params.rotate_deg) {
        return Err(Error::InvalidInput(format!(
            "rotation {}° outside ±15°",
            params.rotate_deg
        )));
    }
    if params.is_identity() {
        return Ok(pair.clone());
    }
    let (h, w) = pair.dims();
    let flip_only = Affine {
        width: w as f64,
        hflip: params.hflip,
        center: [0.0; 2],
        cos: 1.0,
        sin: 0.0,
        t: (0.0, 0.0),
    };
    let c = matte_center(&pair.matte);
    let theta = params.rotate_deg.to_radians();
    let map = Affine {
        center: flip_only.forward(c),
        cos: theta.cos(),
        sin: theta.sin(),
        t: params.translate,
        ..flip_only
    };

    let alpha = pair.matte.plane();
    // Premultiplied foreground: image minus the background share.
    let fg = Grid::from_fn(h, w, |y, x| {
        let a = *alpha.get(y, x);
        let (i, b) = (pair.image.get(y, x), pair.background.get(y, x));
        [0, 1, 2].map(|k| i[k] - (1.0 - a) * b[k])
    });
    let mut new_alpha = Grid::new(h, w, 0.0f32);
    let mut image = Grid::new(h, w, [0.0f32; 3]);
    for y in 0..h {
        for x in 0..w {
            let src = map.inverse([x as f64, y as f64]);
            let a = sample_zero(alpha, src, 0.0, crate::raster::lerp_f32).clamp(0.0, 1.0);
            let f = sample_zero(&fg, src, [0.0; 3], crate::raster::lerp_rgb);
            let b = pair.background.get(y, x);
            new_alpha.set(y, x, a);
            image.set(
                y,
                x,
                [0, 1, 2].map(|k| (f[k] + (1.0 - a) * b[k]).clamp(0.0, 1.0)),
            );
        }
    }
    let before = pair.matte.mass();
    let after: f64 = new_alpha.data().iter().map(|&v| v as f64).sum();
    if before > 0.0 && after < 0.5 * before {
        return Err(Error::MatteOffCanvas(1.0 - after / before));
    }

    let mut sketch = pair.sketch.clone();
    sketch.strokes.retain_mut(|s| {
        for p in &mut s.points {
            let q = map.forward([p[0] as f64, p[1] as f64]);
            *p = [q[0] as f32, q[1] as f32];
        }
        s.points
            .iter()
            .any(|p| in_canvas([p[0] as f64, p[1] as f64], w.min(h), 0.0))
    });
    sketch.validate()?;
    Ok(SamplePair {
        sketch,
        matte: Matte::from_plane_clamped(new_alpha),
        image,
        background: pair.background.clone(),
        meta: pair.meta,
    })
}

/// Per-sample network inputs and targets for one training iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingBatch {
    pub sketch_mono: Vec<SketchMapMono>,
    pub sketch_color: Vec<SketchMapColor>,
    pub matte: Vec<Plane>,
    pub image: Vec<HairImage>,
    /// Background input: the image with the dilated hair region filled by noise.
    pub background: Vec<HairImage>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.matte.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matte.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchOptions {
    pub augment: bool,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self { augment: true }
    }
}

/// Pixels masked out of the background input around the hair.
pub const BACKGROUND_HOLE_DILATION: usize = 3;

/// Image with the hair region replaced by unit Gaussian noise.
///
/// Noise values are unbounded, so the result is a network input rather than a
/// displayable image.
pub fn noisy_background<R: Rng + ?Sized>(
    image: &HairImage,
    matte: &Matte,
    rng: &mut R,
) -> HairImage {
    let hole: Mask = dilate_square(&matte_to_mask(matte, 0.5), BACKGROUND_HOLE_DILATION);
    let (h, w) = image.dims();
    Grid::from_fn(h, w, |y, x| {
        if *hole.get(y, x) {
            [0; 3].map(|_| StandardNormal.sample(rng))
        } else {
            *image.get(y, x)
        }
    })
}

/// Builds one batch: optional augmentation, fresh non-hair strokes and
/// per-stroke colors re-sampled from the image.
/// [`noisy_background`] with noise drawn from a dedicated seed, as used at inference.
pub fn seeded_background(image: &HairImage, matte: &Matte, noise_seed: u64) -> HairImage {
    noisy_background(image, matte, &mut ChaCha8Rng::seed_from_u64(noise_seed))
}

pub fn make_training_batch(
    pairs: &[SamplePair],
    rng_seed: u64,
    opts: BatchOptions,
) -> Result<TrainingBatch> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput(
            "training batch needs at least one pair".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut batch = TrainingBatch {
        sketch_mono: Vec::new(),
        sketch_color: Vec::new(),
        matte: Vec::new(),
        image: Vec::new(),
        background: Vec::new(),
    };
    for pair in pairs {
        let mut sample = None;
        if opts.augment {
            for _ in 0..4 {
                let params = AugmentParams::sample(&mut rng, pair.dims().1);
                if let Ok(p) = augment(pair, &params) {
                    sample = Some(p);
                    break;
                }
            }
        }
        let sample = sample.unwrap_or_else(|| pair.clone());
        let hair = recolor_strokes_from_image(
            &sample.sketch.hair_only(),
            &sample.image,
            RecolorMode::RandomPixel,
            &mut rng,
        )?;
        let mut mono = hair.clone();
        let first = mono.next_id();
        for (i, mut s) in generate_nonhair_strokes(&sample.matte, rng.gen())
            .into_iter()
            .enumerate()
        {
            s.id = first + i as u64;
            mono.strokes.push(s);
        }
        batch.sketch_mono.push(rasterize_mono(&mono));
        batch.sketch_color.push(rasterize_color(&hair));
        batch
            .background
            .push(noisy_background(&sample.image, &sample.matte, &mut rng));
        batch.matte.push(sample.matte.into_plane());
        batch.image.push(sample.image);
    }
    Ok(batch)
}

pub fn sample_dir(root: impl AsRef<Path>, index: usize) -> PathBuf {
    root.as_ref().join(format!("sample_{index:06}"))
}

/// Writes `sketch.json`, `matte.png`, `image.png`, `background.png` and `meta.json`.
pub fn save_sample(dir: impl AsRef<Path>, pair: &SamplePair) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    pair.sketch.save(dir.join("sketch.json"))?;
    pair.matte.save_png(dir.join("matte.png"))?;
    save_rgb_png(&pair.image, dir.join("image.png"))?;
    save_rgb_png(&pair.background, dir.join("background.png"))?;
    std::fs::write(
        dir.join("meta.json"),
        serde_json::to_string_pretty(&pair.meta)?,
    )?;
    Ok(())
}

pub fn load_sample(dir: impl AsRef<Path>) -> Result<SamplePair> {
    let dir = dir.as_ref();
    let sketch = Sketch::load(dir.join("sketch.json"))?;
    let matte = Matte::load_png(dir.join("matte.png"))?;
    let image = load_rgb_png(dir.join("image.png"))?;
    let background = load_rgb_png(dir.join("background.png"))?;
    let meta = serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)?;
    for dims in [image.dims(), background.dims(), sketch.dims()] {
        if dims != matte.dims() {
            return Err(Error::DimensionMismatch {
                expected: matte.dims(),
                actual: dims,
            });
        }
    }
    Ok(SamplePair {
        sketch,
        matte,
        image,
        background,
        meta,
    })
}

/// Sample directories under `root`, sorted by name.
pub fn list_samples(root: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("sample_"))
        })
        .collect();
    dirs.sort();
    Ok(dirs)
}

pub fn load_dataset(root: impl AsRef<Path>) -> Result<Vec<SamplePair>> {
    list_samples(root)?.iter().map(load_sample).collect()
}

/// Style of the `index`-th generated sample when cycling through `styles`.
pub fn style_for(styles: &[HairStyle], index: usize) -> HairStyle {
    styles[index % styles.len()]
}

/// Generates `count` samples into `root`; sample `i` uses seed `seed + i`.
/// Returns the sample directories.
pub fn generate_dataset(
    root: impl AsRef<Path>,
    count: usize,
    canvas: usize,
    seed: u64,
    styles: &[HairStyle],
) -> Result<Vec<PathBuf>> {
    if styles.is_empty() {
        return Err(Error::InvalidInput("at least one style is required".into()));
    }
    let root = root.as_ref();
    std::fs::create_dir_all(root)?;
    let mut dirs = Vec::with_capacity(count);
    for i in 0..count {
        let pair = synth_sample(style_for(styles, i), canvas, seed.wrapping_add(i as u64))?;
        let dir = sample_dir(root, i);
        save_sample(&dir, &pair)?;
        dirs.push(dir);
    }
    Ok(dirs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_deterministic() {
        for style in HairStyle::ALL {
            let a = synth_sample(style, 128, 11).unwrap();
            let b = synth_sample(style, 128, 11).unwrap();
            assert_eq!(a, b);
            assert!(a.sketch.has_hair(), "{style:?}");
            assert_ne!(a, synth_sample(style, 128, 12).unwrap());
        }
    }

    #[test]
    fn zero_matte_shows_the_background() {
        for style in HairStyle::ALL {
            let p = synth_sample(style, 128, 3).unwrap();
            for (y, x, &a) in p.matte.plane().indexed() {
                if a == 0.0 {
                    assert_eq!(p.image.get(y, x), p.background.get(y, x));
                }
            }
        }
    }

    #[test]
    fn identity_augmentation_is_a_no_op() {
        let p = synth_sample(HairStyle::Wavy, 96, 5).unwrap();
        assert_eq!(augment(&p, &AugmentParams::default()).unwrap(), p);
    }

    #[test]
    fn rotation_beyond_range_is_rejected() {
        let p = synth_sample(HairStyle::Straight, 64, 5).unwrap();
        let params = AugmentParams {
            rotate_deg: 20.0,
            ..Default::default()
        };
        assert!(augment(&p, &params).is_err());
    }

    #[test]
    fn large_translation_is_rejected() {
        let p = synth_sample(HairStyle::Straight, 64, 5).unwrap();
        let params = AugmentParams {
            translate: (60.0, 0.0),
            ..Default::default()
        };
        assert!(matches!(
            augment(&p, &params),
            Err(Error::MatteOffCanvas(_))
        ));
    }

    #[test]
    fn affine_inverse_round_trips() {
        let map = Affine {
            width: 100.0,
            hflip: true,
            center: [40.0, 55.0],
            cos: 0.3f64.cos(),
            sin: 0.3f64.sin(),
            t: (3.0, -7.0),
        };
        let p = [12.5, 80.25];
        let q = map.inverse(map.forward(p));
        assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
    }

    #[test]
    fn batch_has_matching_shapes() {
        let pairs = vec![
            synth_sample(HairStyle::Straight, 64, 1).unwrap(),
            synth_sample(HairStyle::Braided, 64, 2).unwrap(),
        ];
        let batch = make_training_batch(&pairs, 9, BatchOptions::default()).unwrap();
        assert_eq!(batch.len(), 2);
        for i in 0..2 {
            assert_eq!(batch.sketch_mono[i].dims(), (64, 64));
            assert_eq!(batch.sketch_color[i].dims(), (64, 64));
            assert_eq!(batch.background[i].dims(), (64, 64));
            assert!(batch.sketch_mono[i]
                .data()
                .iter()
                .all(|v| [-1.0, 0.0, 1.0].contains(v)));
        }
        assert!(make_training_batch(&[], 0, BatchOptions::default()).is_err());
    }
}
