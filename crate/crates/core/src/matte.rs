//! Soft hair mattes: thresholding, offset contours, synthetic non-hair
//! strokes for training, and the SAD / IoU matte metrics.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{self, distance_transform, Grid, Mask, Plane, NEIGHBORS_4};
use crate::sketch::Stroke;
use crate::trace;

pub type BinaryMask = Mask;

/// Single-channel alpha map with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matte(Plane);

impl Matte {
    pub fn new(plane: Plane) -> Result<Self> {
        if let Some(v) = plane.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!(
                "matte value {v} outside [0, 1]"
            )));
        }
        Ok(Self(plane))
    }

    /// Clamps into `[0, 1]`; NaN becomes 0.
    pub fn from_plane_clamped(plane: Plane) -> Self {
        Self(plane.map(|&v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }))
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self(Grid::new(height, width, 0.0))
    }

    pub fn from_mask(mask: &Mask) -> Self {
        Self(mask.map(|&v| if v { 1.0 } else { 0.0 }))
    }

    pub fn plane(&self) -> &Plane {
        &self.0
    }

    pub fn into_plane(self) -> Plane {
        self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        *self.0.get(y, x)
    }

    pub fn mass(&self) -> f64 {
        self.0.data().iter().map(|&v| v as f64).sum()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        raster::save_gray_png(&self.0, path)
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self(raster::load_gray_png(path)?))
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        raster::encode_gray_png(&self.0)
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        Ok(Self(raster::decode_gray_png(bytes)?))
    }
}

/// `1` wherever the matte is at least `threshold`.
pub fn matte_to_mask(matte: &Matte, threshold: f32) -> BinaryMask {
    matte.plane().map(|&v| v >= threshold)
}

/// One-pixel-wide band outside the 0.5-mask at Euclidean distance
/// `offset_px` (within half a pixel).
pub fn extract_offset_contour(matte: &Matte, offset_px: u32) -> Result<BinaryMask> {
    if !(3..=8).contains(&offset_px) {
        return Err(Error::InvalidInput(format!(
            "contour offset {offset_px} outside [3, 8]"
        )));
    }
    let mask = matte_to_mask(matte, 0.5);
    let dist = distance_transform(&mask);
    Ok(offset_band(&mask, &dist, offset_px as f64))
}

fn offset_band(mask: &Mask, dist: &Grid<f64>, offset: f64) -> Mask {
    let (h, w) = mask.dims();
    let level = offset - 0.5;
    Grid::from_fn(h, w, |y, x| {
        if *mask.get(y, x) || *dist.get(y, x) < level || !dist.get(y, x).is_finite() {
            return false;
        }
        NEIGHBORS_4.iter().any(|(dy, dx)| {
            dist.at(y as isize + dy, x as isize + dx)
                .is_some_and(|&d| d < level)
        })
    })
}

/// Minimum clearance kept between a non-hair stroke footprint and the hair mask.
pub const NON_HAIR_CLEARANCE: f64 = 2.0;

/// Randomly erased offset contour, as non-hair strokes around the hair region.
///
/// Offset is drawn from {3..8} px and stroke width from {3..15} px. The
/// rendered width of each stroke is capped so that its footprint keeps at
/// least [`NON_HAIR_CLEARANCE`] pixels away from the 0.5-mask.
pub fn generate_nonhair_strokes(matte: &Matte, rng_seed: u64) -> Vec<Stroke> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mask = matte_to_mask(matte, 0.5);
    if mask.is_empty_mask() {
        return Vec::new();
    }
    let (h, w) = mask.dims();
    let offset: u32 = rng.gen_range(3..=8);
    let dist = distance_transform(&mask);
    let contour = offset_band(&mask, &dist, offset as f64);

    let scale = (h.max(w) as f64 / 512.0).max(0.125);
    let min_arc = (20.0 * scale).max(8.0) as usize;
    let max_arc = (60.0 * scale).max(16.0) as usize;

    let mut arcs: Vec<Vec<(usize, usize)>> = Vec::new();
    for chain in trace::trace_chains(&contour) {
        let mut rest = &chain[..];
        while rest.len() >= 2 {
            let len = rng.gen_range(min_arc..=max_arc).min(rest.len());
            let (arc, tail) = rest.split_at(len);
            if arc.len() >= 3 {
                arcs.push(arc.to_vec());
            }
            rest = tail;
        }
    }
    if arcs.is_empty() {
        return Vec::new();
    }
    let retain: f64 = rng.gen_range(0.1..=0.3);
    let keep = ((retain * arcs.len() as f64).round() as usize).clamp(1, arcs.len());
    let mut order: Vec<usize> = (0..arcs.len()).collect();
    order.shuffle(&mut rng);
    let mut chosen = order[..keep].to_vec();
    chosen.sort_unstable();

    let mut strokes = Vec::new();
    for idx in chosen {
        let arc = &arcs[idx];
        let sampled_width = rng.gen_range(3..=15) as f64;
        let nearest = arc
            .iter()
            .map(|&(y, x)| *dist.get(y, x))
            .fold(f64::INFINITY, f64::min);
        let mut width = sampled_width
            .min(2.0 * (nearest - NON_HAIR_CLEARANCE - 0.25))
            .max(1.0);
        let mut stroke =
            Stroke::non_hair(strokes.len() as u64, trace::chain_points(arc), width as f32);
        // Guard the clearance on the rasterized footprint itself.
        while stroke
            .footprint(h, w)
            .iter()
            .any(|&(y, x)| *dist.get(y, x) < NON_HAIR_CLEARANCE)
        {
            width -= 0.5;
            if width < 0.5 {
                break;
            }
            stroke.width = width as f32;
        }
        if width >= 0.5 {
            strokes.push(stroke);
        }
    }
    strokes
}

/// Sum of absolute differences without scaling.
pub fn sad_raw(a: &Matte, b: &Matte) -> Result<f64> {
    a.plane().ensure_dims(b.dims())?;
    Ok(a.plane()
        .data()
        .iter()
        .zip(b.plane().data())
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .sum())
}

/// Sum of absolute differences divided by 1000, as customary in matting work.
pub fn sad(a: &Matte, b: &Matte) -> Result<f64> {
    Ok(sad_raw(a, b)? / 1000.0)
}

/// Intersection over union of the thresholded mattes; 1.0 if both are empty.
pub fn iou(a: &Matte, b: &Matte, threshold: f32) -> Result<f64> {
    a.plane().ensure_dims(b.dims())?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.plane().data().iter().zip(b.plane().data()) {
        let (ma, mb) = (x >= threshold, y >= threshold);
        inter += (ma && mb) as usize;
        union += (ma || mb) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Aggregate matte-accuracy report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatteReport {
    pub count: usize,
    pub sad_mean: f64,
    pub sad_sd: f64,
    pub iou_mean: f64,
    pub threshold: f32,
    /// Whether SAD values are unscaled sums.
    pub raw_sad: bool,
}

/// SAD mean / population SD and mean IoU over `(prediction, ground truth)` pairs.
pub fn evaluate_pairs(
    pairs: &[(Matte, Matte)],
    threshold: f32,
    raw_sad: bool,
) -> Result<MatteReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no matte pairs to evaluate".into()));
    }
    let mut sads = Vec::with_capacity(pairs.len());
    let mut ious = Vec::with_capacity(pairs.len());
    for (pred, gt) in pairs {
        let s = if raw_sad {
            sad_raw(pred, gt)?
        } else {
            sad(pred, gt)?
        };
        sads.push(s);
        ious.push(iou(pred, gt, threshold)?);
    }
    let n = pairs.len() as f64;
    let mean = sads.iter().sum::<f64>() / n;
    let var = sads.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok(MatteReport {
        count: pairs.len(),
        sad_mean: mean,
        sad_sd: var.sqrt(),
        iou_mean: ious.iter().sum::<f64>() / n,
        threshold,
        raw_sad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn disc(size: usize, radius: f64) -> Matte {
        let c = (size as f64 - 1.0) / 2.0;
        Matte::from_mask(&Grid::from_fn(size, size, |y, x| {
            ((y as f64 - c).powi(2) + (x as f64 - c).powi(2)).sqrt() <= radius
        }))
    }

    fn rect(size: usize, y0: usize, y1: usize, x0: usize, x1: usize) -> Matte {
        Matte::from_mask(&Grid::from_fn(size, size, |y, x| {
            (y0..y1).contains(&y) && (x0..x1).contains(&x)
        }))
    }

    #[test]
    fn threshold_convention() {
        let m = Matte::new(Grid::from_vec(1, 3, vec![0.0, 0.5, 0.49]).unwrap()).unwrap();
        let mask = matte_to_mask(&m, 0.5);
        assert_eq!(mask.data(), &[false, true, false]);
        assert!(matte_to_mask(&Matte::zeros(8, 8), 0.5).is_empty_mask());
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(Matte::new(Grid::new(2, 2, 1.5)).is_err());
    }

    #[test]
    fn contour_of_a_disc_sits_at_the_offset() {
        let m = disc(160, 50.0);
        let contour = extract_offset_contour(&m, 5).unwrap();
        assert!(contour.count() > 300);
        // Brute-force distance to the nearest hair pixel.
        let mask = matte_to_mask(&m, 0.5);
        let hair: Vec<(f64, f64)> = mask
            .indexed()
            .filter(|(_, _, v)| **v)
            .map(|(y, x, _)| (y as f64, x as f64))
            .collect();
        for (y, x, v) in contour.indexed() {
            if *v {
                let d = hair
                    .iter()
                    .map(|&(hy, hx)| ((hy - y as f64).powi(2) + (hx - x as f64).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min);
                assert!((d - 5.0).abs() <= 0.8, "distance {d}");
            }
        }
    }

    #[test]
    fn contour_degenerate_cases() {
        let full = Matte::new(Grid::new(32, 32, 1.0)).unwrap();
        assert!(extract_offset_contour(&full, 4).unwrap().is_empty_mask());
        assert!(extract_offset_contour(&Matte::zeros(32, 32), 4)
            .unwrap()
            .is_empty_mask());
        assert!(extract_offset_contour(&full, 2).is_err());
        assert!(extract_offset_contour(&full, 9).is_err());
    }

    #[test]
    fn nonhair_strokes_empty_matte() {
        assert!(generate_nonhair_strokes(&Matte::zeros(64, 64), 3).is_empty());
    }

    #[test]
    fn nonhair_strokes_depend_on_seed() {
        let m = disc(256, 80.0);
        let a = generate_nonhair_strokes(&m, 1);
        let b = generate_nonhair_strokes(&m, 2);
        assert!(!a.is_empty());
        assert_ne!(a, b);
        assert_eq!(a, generate_nonhair_strokes(&m, 1));
    }

    #[test]
    fn nonhair_strokes_stay_in_the_band() {
        let m = disc(200, 60.0);
        let mask = matte_to_mask(&m, 0.5);
        let dist = distance_transform(&mask);
        for seed in 0..5 {
            for s in generate_nonhair_strokes(&m, seed) {
                assert!(!s.is_hair());
                for (y, x) in s.footprint(200, 200) {
                    let d = *dist.get(y, x);
                    assert!(!*mask.get(y, x));
                    assert!(d >= 2.0 && d <= 9.0 + s.width as f64 / 2.0, "d={d}");
                }
            }
        }
    }

    #[test]
    fn sad_fixtures() {
        let zeros = Matte::zeros(512, 512);
        let ones = Matte::new(Grid::new(512, 512, 1.0)).unwrap();
        assert_eq!(sad(&zeros, &zeros).unwrap(), 0.0);
        assert!((sad(&zeros, &ones).unwrap() - 262.144).abs() < 1e-9);
        assert_eq!(sad_raw(&zeros, &ones).unwrap(), 262144.0);
        assert!(sad(&zeros, &Matte::zeros(4, 4)).is_err());
    }

    #[test]
    fn iou_fixtures() {
        let a = rect(64, 10, 30, 10, 30);
        assert_eq!(iou(&a, &a, 0.5).unwrap(), 1.0);
        let b = rect(64, 40, 60, 40, 60);
        assert_eq!(iou(&a, &b, 0.5).unwrap(), 0.0);
        let c = rect(64, 10, 30, 20, 40);
        assert_eq!(iou(&a, &c, 0.5).unwrap(), 1.0 / 3.0);
        let z = Matte::zeros(64, 64);
        assert_eq!(iou(&z, &z, 0.5).unwrap(), 1.0);
        assert!(iou(&a, &Matte::zeros(8, 8), 0.5).is_err());
    }

    #[test]
    fn evaluation_report_on_identical_pairs() {
        let a = disc(64, 20.0);
        let r = evaluate_pairs(&[(a.clone(), a.clone()), (a.clone(), a)], 0.5, false).unwrap();
        assert_eq!(r.sad_mean, 0.0);
        assert_eq!(r.iou_mean, 1.0);
        assert_eq!(r.count, 2);
    }

    fn arb_matte() -> impl Strategy<Value = Matte> {
        proptest::collection::vec(0.0f32..=1.0, 12 * 12)
            .prop_map(|v| Matte::new(Grid::from_vec(12, 12, v).unwrap()).unwrap())
    }

    proptest! {
        #[test]
        fn sad_symmetric_and_zero_iff_equal(a in arb_matte(), b in arb_matte()) {
            let ab = sad(&a, &b).unwrap();
            prop_assert_eq!(ab, sad(&b, &a).unwrap());
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab == 0.0, a == b);
            // Per-pixel accumulation oracle.
            let mut acc = 0.0f64;
            for y in 0..12 {
                for x in 0..12 {
                    acc += (a.get(y, x) as f64 - b.get(y, x) as f64).abs();
                }
            }
            prop_assert!((ab - acc / 1000.0).abs() < 1e-12);
        }

        #[test]
        fn iou_in_unit_interval(a in arb_matte(), b in arb_matte()) {
            let v = iou(&a, &b, 0.5).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            if !matte_to_mask(&a, 0.5).is_empty_mask() {
                prop_assert_eq!(iou(&a, &a, 0.5).unwrap(), 1.0);
            }
        }

        #[test]
        fn mask_matches_per_pixel_scan(a in arb_matte(), t in 0.01f32..0.99) {
            let m = matte_to_mask(&a, t);
            for y in 0..12 {
                for x in 0..12 {
                    prop_assert_eq!(*m.get(y, x), a.get(y, x) >= t);
                }
            }
        }
    }
}
