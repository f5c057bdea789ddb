//! Vector strokes, their JSON wire format, and rasterization into the two
//! conditioning maps consumed by the networks.
//!
//! A stroke is rendered as the union of discs of diameter `width` centered on
//! every point of its polyline, i.e. a chain of capsules. This is the
//! continuous limit of stamping discs at densified samples, so the footprint
//! has no sampling gaps and is exactly reproducible.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Grid, Mask, Plane, Rgb, RgbImage};

pub const SKETCH_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_CANVAS: usize = 512;

/// Value of background pixels in the color-coded sketch map.
pub const COLOR_BACKGROUND: Rgb = [0.0, 0.0, 0.0];

/// Single-channel sketch map: 0 background, +1 hair, −1 non-hair.
pub type SketchMapMono = Plane;
/// Color-coded sketch map holding hair strokes only.
pub type SketchMapColor = RgbImage;
pub type HairImage = RgbImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrokeKind {
    Hair,
    NonHair,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub id: u64,
    pub kind: StrokeKind,
    pub width: f32,
    pub color: Rgb,
    /// `[x, y]` pixel coordinates.
    pub points: Vec<[f32; 2]>,
    /// Set on strokes proposed by auto-completion until the user accepts them.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub generated: bool,
}

impl Stroke {
    pub fn hair(id: u64, points: Vec<[f32; 2]>, width: f32, color: Rgb) -> Self {
        Self {
            id,
            kind: StrokeKind::Hair,
            width,
            color,
            points,
            generated: false,
        }
    }

    pub fn non_hair(id: u64, points: Vec<[f32; 2]>, width: f32) -> Self {
        Self {
            id,
            kind: StrokeKind::NonHair,
            width,
            color: [0.0; 3],
            points,
            generated: false,
        }
    }

    pub fn is_hair(&self) -> bool {
        self.kind == StrokeKind::Hair
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "stroke {} has {} points, at least 2 required",
                self.id,
                self.points.len()
            )));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "stroke {} has non-positive width {}",
                self.id, self.width
            )));
        }
        if self
            .points
            .iter()
            .flatten()
            .chain(self.color.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(format!(
                "stroke {} has non-finite values",
                self.id
            )));
        }
        Ok(())
    }

    /// Polyline length in pixels.
    pub fn length(&self) -> f32 {
        self.points
            .windows(2)
            .map(|p| ((p[1][0] - p[0][0]).powi(2) + (p[1][1] - p[0][1]).powi(2)).sqrt())
            .sum()
    }

    /// Pixels covered by the stroke on a `height × width` canvas, in raster order.
    pub fn footprint(&self, height: usize, width: usize) -> Vec<(usize, usize)> {
        let mut mask = Grid::new(height, width, false);
        self.paint(&mut mask);
        mask.indexed()
            .filter(|(_, _, v)| **v)
            .map(|(y, x, _)| (y, x))
            .collect()
    }

    /// Marks covered pixels in `mask`.
    pub fn paint(&self, mask: &mut Mask) {
        let (h, w) = mask.dims();
        if h == 0 || w == 0 {
            return;
        }
        let r = self.width as f64 / 2.0;
        let r2 = r * r + 1e-9;
        let clamp = |p: [f32; 2]| -> (f64, f64) {
            (
                (p[0] as f64).clamp(0.0, (w - 1) as f64),
                (p[1] as f64).clamp(0.0, (h - 1) as f64),
            )
        };
        let single = [self.points.first().copied().unwrap_or_default(); 2];
        let segments: Vec<&[[f32; 2]]> = if self.points.len() == 1 {
            vec![&single[..]]
        } else {
            self.points.windows(2).collect()
        };
        for seg in segments {
            let a = clamp(seg[0]);
            let b = clamp(seg[1]);
            let x0 = (a.0.min(b.0) - r).floor().max(0.0) as usize;
            let x1 = ((a.0.max(b.0) + r).ceil() as usize).min(w - 1);
            let y0 = (a.1.min(b.1) - r).floor().max(0.0) as usize;
            let y1 = ((a.1.max(b.1) + r).ceil() as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    if point_segment_dist2((x as f64, y as f64), a, b) <= r2 {
                        mask.set(y, x, true);
                    }
                }
            }
        }
    }
}

/// Squared distance from `p` to segment `ab`.
pub fn point_segment_dist2(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    (p.0 - cx).powi(2) + (p.1 - cy).powi(2)
}

/// An ordered set of strokes on a fixed canvas. Later strokes draw on top.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sketch {
    pub version: u32,
    /// `[height, width]`.
    pub canvas: [usize; 2],
    pub strokes: Vec<Stroke>,
}

impl Default for Sketch {
    fn default() -> Self {
        Self::new(DEFAULT_CANVAS, DEFAULT_CANVAS)
    }
}

impl Sketch {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            version: SKETCH_FORMAT_VERSION,
            canvas: [height, width],
            strokes: Vec::new(),
        }
    }

    pub fn height(&self) -> usize {
        self.canvas[0]
    }

    pub fn width(&self) -> usize {
        self.canvas[1]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.canvas[0], self.canvas[1])
    }

    pub fn next_id(&self) -> u64 {
        self.strokes.iter().map(|s| s.id + 1).max().unwrap_or(0)
    }

    pub fn hair_strokes(&self) -> impl Iterator<Item = &Stroke> {
        self.strokes.iter().filter(|s| s.is_hair())
    }

    pub fn has_hair(&self) -> bool {
        self.strokes.iter().any(Stroke::is_hair)
    }

    /// Copy with non-hair strokes removed.
    pub fn hair_only(&self) -> Sketch {
        Sketch {
            strokes: self.hair_strokes().cloned().collect(),
            ..self.clone()
        }
    }

    /// Checks the stroke invariants and clamps every point into the canvas.
    pub fn validate(&mut self) -> Result<()> {
        if self.version != SKETCH_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported sketch version {}",
                self.version
            )));
        }
        let (h, w) = self.dims();
        if h == 0 || w == 0 {
            return Err(Error::InvalidInput("empty canvas".into()));
        }
        let mut ids = HashSet::new();
        for s in &mut self.strokes {
            s.validate()?;
            if !ids.insert(s.id) {
                return Err(Error::InvalidInput(format!("duplicate stroke id {}", s.id)));
            }
            for p in &mut s.points {
                p[0] = p[0].clamp(0.0, (w - 1) as f32);
                p[1] = p[1].clamp(0.0, (h - 1) as f32);
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut sketch: Sketch = serde_json::from_str(text)?;
        sketch.validate()?;
        Ok(sketch)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Single-channel map with hair strokes at +1 and non-hair strokes at −1.
/// Non-hair wins wherever the two overlap.
pub fn rasterize_mono(sketch: &Sketch) -> SketchMapMono {
    let (h, w) = sketch.dims();
    let mut hair = Grid::new(h, w, false);
    let mut non_hair = Grid::new(h, w, false);
    for s in &sketch.strokes {
        match s.kind {
            StrokeKind::Hair => s.paint(&mut hair),
            StrokeKind::NonHair => s.paint(&mut non_hair),
        }
    }
    Grid::from_fn(h, w, |y, x| {
        if *non_hair.get(y, x) {
            -1.0
        } else if *hair.get(y, x) {
            1.0
        } else {
            0.0
        }
    })
}

/// Color-coded map of hair strokes only; uncovered pixels are [`COLOR_BACKGROUND`].
pub fn rasterize_color(sketch: &Sketch) -> SketchMapColor {
    let (h, w) = sketch.dims();
    let mut out = Grid::new(h, w, COLOR_BACKGROUND);
    let mut mask = Grid::new(h, w, false);
    for s in sketch.hair_strokes() {
        mask.data_mut().iter_mut().for_each(|v| *v = false);
        s.paint(&mut mask);
        for (o, &m) in out.data_mut().iter_mut().zip(mask.data()) {
            if m {
                *o = s.color;
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecolorMode {
    /// Color of one uniformly chosen footprint pixel.
    RandomPixel,
    /// Mean color over the footprint.
    Mean,
}

/// Mean image color over a stroke's footprint; `None` when the footprint is empty.
pub fn footprint_mean(stroke: &Stroke, image: &HairImage) -> Option<Rgb> {
    let (h, w) = image.dims();
    let fp = stroke.footprint(h, w);
    if fp.is_empty() {
        return None;
    }
    let mut acc = [0.0f64; 3];
    for &(y, x) in &fp {
        let p = image.get(y, x);
        for c in 0..3 {
            acc[c] += p[c] as f64;
        }
    }
    Some(acc.map(|v| (v / fp.len() as f64) as f32))
}

/// Replaces each hair stroke's color with a color sampled from `image`.
pub fn recolor_strokes_from_image<R: Rng + ?Sized>(
    sketch: &Sketch,
    image: &HairImage,
    mode: RecolorMode,
    rng: &mut R,
) -> Result<Sketch> {
    image.ensure_dims(sketch.dims())?;
    let (h, w) = sketch.dims();
    let mut out = sketch.clone();
    for s in out.strokes.iter_mut().filter(|s| s.is_hair()) {
        match mode {
            RecolorMode::Mean => {
                if let Some(c) = footprint_mean(s, image) {
                    s.color = c;
                }
            }
            RecolorMode::RandomPixel => {
                let fp = s.footprint(h, w);
                if !fp.is_empty() {
                    let (y, x) = fp[rng.gen_range(0..fp.len())];
                    s.color = *image.get(y, x);
                }
            }
        }
    }
    Ok(out)
}
