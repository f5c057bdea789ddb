//! Hair color database with nearest-neighbor lookup in CIELab.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::Rgb;
use crate::sketch::{footprint_mean, HairImage, Sketch};

pub type Lab = [f64; 3];

/// Neighbors considered by [`snap_color`].
pub const SNAP_CANDIDATES: usize = 20;

// D65 reference white, 2° observer.
const WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];
const EPSILON: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.0031308 {
        c * 12.92
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

pub fn rgb_to_lab(rgb: Rgb) -> Lab {
    let [r, g, b] = rgb.map(|c| srgb_to_linear(c as f64));
    let xyz = [
        0.4124564 * r + 0.3575761 * g + 0.1804375 * b,
        0.2126729 * r + 0.7151522 * g + 0.0721750 * b,
        0.0193339 * r + 0.1191920 * g + 0.9503041 * b,
    ];
    let f = |t: f64| {
        if t > EPSILON {
            t.cbrt()
        } else {
            (KAPPA * t + 16.0) / 116.0
        }
    };
    let [fx, fy, fz] = [
        f(xyz[0] / WHITE[0]),
        f(xyz[1] / WHITE[1]),
        f(xyz[2] / WHITE[2]),
    ];
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Inverse of [`rgb_to_lab`]; out-of-gamut results are not clamped.
pub fn lab_to_rgb(lab: Lab) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let finv = |f: f64| {
        let t = f * f * f;
        if t > EPSILON {
            t
        } else {
            (116.0 * f - 16.0) / KAPPA
        }
    };
    let (x, y, z) = (
        finv(fx) * WHITE[0],
        finv(fy) * WHITE[1],
        finv(fz) * WHITE[2],
    );
    [
        3.2404542 * x - 1.5371385 * y - 0.4985314 * z,
        -0.9692660 * x + 1.8760108 * y + 0.0415560 * z,
        0.0556434 * x - 0.2040259 * y + 1.0572252 * z,
    ]
    .map(linear_to_srgb)
}

pub fn lab_distance(a: Lab, b: Lab) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorEntry {
    pub rgb: Rgb,
    pub lab: Lab,
}

impl ColorEntry {
    pub fn new(rgb: Rgb) -> Self {
        Self {
            rgb,
            lab: rgb_to_lab(rgb),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ColorDatabase {
    pub entries: Vec<ColorEntry>,
}

impl ColorDatabase {
    pub fn from_colors(colors: impl IntoIterator<Item = Rgb>) -> Self {
        Self {
            entries: colors.into_iter().map(ColorEntry::new).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes one `{rgb, lab}` JSON object per line.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self> {
        let mut entries = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line)?);
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// One entry per hair stroke: the mean image color over its footprint.
pub fn build_database<'a>(
    pairs: impl IntoIterator<Item = (&'a Sketch, &'a HairImage)>,
) -> Result<ColorDatabase> {
    let mut db = ColorDatabase::default();
    for (sketch, image) in pairs {
        image.ensure_dims(sketch.dims())?;
        for stroke in sketch.hair_strokes() {
            if let Some(c) = footprint_mean(stroke, image) {
                db.entries.push(ColorEntry::new(c));
            }
        }
    }
    Ok(db)
}

/// Indices and distances of the `min(k, |db|)` nearest entries, ascending,
/// ties broken by entry index.
pub fn nearest_indices(db: &ColorDatabase, query: Rgb, k: usize) -> Result<Vec<(usize, f64)>> {
    if db.is_empty() {
        return Err(Error::InvalidInput("color database is empty".into()));
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let q = rgb_to_lab(query);
    let mut scored: Vec<(usize, f64)> = db
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (i, lab_distance(q, e.lab)))
        .collect();
    let k = k.min(scored.len());
    let cmp = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    Ok(scored)
}

pub fn nearest_colors(db: &ColorDatabase, query: Rgb, k: usize) -> Result<Vec<Rgb>> {
    Ok(nearest_indices(db, query, k)?
        .into_iter()
        .map(|(i, _)| db.entries[i].rgb)
        .collect())
}

/// Uniform pick among the 20 nearest colors, deterministic per seed.
pub fn snap_color(db: &ColorDatabase, query: Rgb, rng_seed: u64) -> Result<Rgb> {
    let candidates = nearest_colors(db, query, SNAP_CANDIDATES)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(*candidates.choose(&mut rng).expect("non-empty"))
}

/// Parses `RRGGBB` (optionally `#`-prefixed) into `[0,1]` channels.
pub fn parse_hex_rgb(text: &str) -> Result<Rgb> {
    let hex = text.trim_start_matches('#');
    if hex.len() != 6 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(Error::InvalidInput(format!(
            "expected RRGGBB, got {text:?}"
        )));
    }
    let channel = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).unwrap() as f32 / 255.0;
    Ok([channel(0), channel(2), channel(4)])
}

pub fn to_hex_rgb(rgb: Rgb) -> String {
    let c = rgb.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8);
    format!("{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Grid;
    use crate::sketch::{recolor_strokes_from_image, RecolorMode, Stroke};
    use proptest::prelude::*;
    use rand::Rng;

    fn close(a: Lab, b: Lab, tol: f64) -> bool {
        (0..3).all(|i| (a[i] - b[i]).abs() <= tol)
    }

    #[test]
    fn lab_reference_points() {
        assert!(close(rgb_to_lab([1.0; 3]), [100.0, 0.0, 0.0], 0.01));
        assert!(close(rgb_to_lab([0.0; 3]), [0.0, 0.0, 0.0], 0.01));
        assert!(close(
            rgb_to_lab([1.0, 0.0, 0.0]),
            [53.24, 80.09, 67.20],
            0.1
        ));
    }

    #[test]
    fn lab_round_trip_on_a_grid() {
        for i in 0..10 {
            for j in 0..10 {
                for k in 0..10 {
                    let rgb = [i as f32 / 9.0, j as f32 / 9.0, k as f32 / 9.0];
                    let lab = rgb_to_lab(rgb);
                    let back = lab_to_rgb(lab).map(|v| v as f32);
                    assert!(lab_distance(lab, rgb_to_lab(back)) <= 0.05);
                }
            }
        }
    }

    fn oracle(db: &ColorDatabase, q: Rgb, k: usize) -> Vec<usize> {
        let ql = rgb_to_lab(q);
        let mut all: Vec<(f64, usize)> = db
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (lab_distance(ql, e.lab), i))
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    proptest! {
        #[test]
        fn knn_matches_exhaustive_sort(
            colors in prop::collection::vec(prop::array::uniform3(0u8..8), 1..60),
            q in prop::array::uniform3(0u8..8),
            k in 1usize..70,
        ) {
            // Coarse quantization forces many exact ties.
            let db = ColorDatabase::from_colors(colors.iter().map(|c| c.map(|v| v as f32 / 7.0)));
            let query = q.map(|v| v as f32 / 7.0);
            let got: Vec<usize> = nearest_indices(&db, query, k).unwrap().into_iter().map(|(i, _)| i).collect();
            prop_assert_eq!(got, oracle(&db, query, k));
        }
    }

    #[test]
    fn exact_match_comes_first_and_k_saturates() {
        let db = ColorDatabase::from_colors([[0.1, 0.2, 0.3], [0.5, 0.4, 0.3], [0.9, 0.9, 0.1]]);
        let r = nearest_indices(&db, [0.5, 0.4, 0.3], 10).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r[0], (1, 0.0));
        assert!(nearest_indices(&ColorDatabase::default(), [0.0; 3], 1).is_err());
        assert!(nearest_indices(&db, [0.0; 3], 0).is_err());
    }

    #[test]
    fn snap_picks_from_the_top_twenty() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let db = ColorDatabase::from_colors((0..1000).map(|_| [rng.gen(), rng.gen(), rng.gen()]));
        let q = [0.4, 0.3, 0.2];
        let top = nearest_colors(&db, q, 20).unwrap();
        let mut picks = Vec::new();
        for seed in 0..20 {
            let c = snap_color(&db, q, seed).unwrap();
            assert!(top.contains(&c));
            assert_eq!(c, snap_color(&db, q, seed).unwrap());
            if !picks.contains(&c) {
                picks.push(c);
            }
        }
        assert!(picks.len() >= 2);
        let single = ColorDatabase::from_colors([[0.2, 0.2, 0.2]]);
        assert_eq!(snap_color(&single, q, 9).unwrap(), [0.2, 0.2, 0.2]);
    }

    #[test]
    fn database_matches_mean_recoloring() {
        let image = Grid::from_fn(32, 32, |y, x| [x as f32 / 31.0, y as f32 / 31.0, 0.5]);
        let mut sketch = Sketch::new(32, 32);
        sketch.strokes.push(Stroke::hair(
            0,
            vec![[3.0, 3.0], [20.0, 9.0]],
            3.0,
            [0.0; 3],
        ));
        sketch.strokes.push(Stroke::hair(
            1,
            vec![[10.0, 28.0], [28.0, 20.0]],
            2.0,
            [0.0; 3],
        ));
        sketch
            .strokes
            .push(Stroke::non_hair(2, vec![[0.0, 0.0], [5.0, 5.0]], 2.0));
        let db = build_database([(&sketch, &image), (&sketch, &image)]).unwrap();
        assert_eq!(db.len(), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let recolored =
            recolor_strokes_from_image(&sketch, &image, RecolorMode::Mean, &mut rng).unwrap();
        let expected: Vec<Rgb> = recolored.hair_strokes().map(|s| s.color).collect();
        assert_eq!(db.entries[0].rgb, expected[0]);
        assert_eq!(db.entries[1].rgb, expected[1]);
    }

    #[test]
    fn jsonl_round_trip_and_hex() {
        let db = ColorDatabase::from_colors([[0.25, 0.5, 0.75], [1.0, 0.0, 0.0]]);
        let mut buf = Vec::new();
        db.write_jsonl(&mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 2);
        assert_eq!(ColorDatabase::read_jsonl(&buf[..]).unwrap(), db);
        assert_eq!(parse_hex_rgb("#ff8000").unwrap(), [1.0, 128.0 / 255.0, 0.0]);
        assert_eq!(to_hex_rgb([1.0, 128.0 / 255.0, 0.0]), "ff8000");
        assert!(parse_hex_rgb("12345").is_err());
    }
}
