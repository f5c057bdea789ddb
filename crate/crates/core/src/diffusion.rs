//! Unbraided sketch auto-completion.
//!
//! Hair strokes are dilated with a 15×15 square, the dilation is subtracted
//! from the hair mask, and the medial axis of what remains becomes new strokes.
//! The process repeats until nothing new is found, so a completed sketch is
//! a fixed point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matte::{matte_to_mask, BinaryMask, Matte};
use crate::raster::{dilate_square, erode_square, Grid, Mask, Rgb};
use crate::sketch::{point_segment_dist2, Sketch, Stroke};
use crate::trace;

pub const DILATION_KERNEL: usize = 15;
pub const SPUR_MIN_PX: usize = 5;
pub const MIN_STROKE_LENGTH_PX: f64 = 20.0;
pub const GENERATED_WIDTH: f32 = 2.0;
pub const MASK_THRESHOLD: f32 = 0.5;
const MAX_ROUNDS: usize = 16;

/// Candidate fill region: mask pixels away from every dilated hair stroke.
pub type SubtractedMap = Mask;

/// How generated strokes are colored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorPolicy {
    #[default]
    NearestUserStroke,
    Fixed(Rgb),
}

pub fn hair_footprint(sketch: &Sketch) -> Mask {
    let (h, w) = sketch.dims();
    let mut mask = Grid::new(h, w, false);
    for s in sketch.hair_strokes() {
        s.paint(&mut mask);
    }
    mask
}

pub fn build_subtracted_map(sketch: &Sketch, mask: &BinaryMask) -> Result<SubtractedMap> {
    mask.ensure_dims(sketch.dims())?;
    let dilated = dilate_square(&hair_footprint(sketch), DILATION_KERNEL / 2);
    Ok(Grid::from_fn(mask.height(), mask.width(), |y, x| {
        *mask.get(y, x) && !*dilated.get(y, x)
    }))
}

/// Medial-axis strokes of the subtracted map.
///
/// The map is first eroded by one pixel so that width-2 strokes drawn along
/// the skeleton stay inside it. Thinning, spur pruning and tracing follow;
/// polylines shorter than `min_length_px` are dropped. Strokes come back as
/// hair strokes of width 2 with a placeholder color.
pub fn extract_medial_strokes(map: &SubtractedMap, min_length_px: f64) -> Vec<Stroke> {
    let core = erode_square(map, 1);
    if core.is_empty_mask() {
        return Vec::new();
    }
    let mut skel = trace::zhang_suen(&core);
    trace::prune_spurs(&mut skel, SPUR_MIN_PX);
    trace::trace_chains(&skel)
        .into_iter()
        .filter(|c| trace::chain_length(c) >= min_length_px)
        .enumerate()
        .map(|(i, c)| Stroke::hair(i as u64, trace::chain_points(&c), GENERATED_WIDTH, [1.0; 3]))
        .collect()
}

fn polyline_dist2(p: [f32; 2], stroke: &Stroke) -> f64 {
    let pt = |q: [f32; 2]| (q[0] as f64, q[1] as f64);
    if stroke.points.len() == 1 {
        let (x, y) = pt(stroke.points[0]);
        return (p[0] as f64 - x).powi(2) + (p[1] as f64 - y).powi(2);
    }
    stroke
        .points
        .windows(2)
        .map(|s| point_segment_dist2(pt(p), pt(s[0]), pt(s[1])))
        .fold(f64::INFINITY, f64::min)
}

/// Color of the hair stroke nearest to either endpoint of `stroke`.
fn nearest_color(stroke: &Stroke, users: &[&Stroke]) -> Rgb {
    let ends = [stroke.points[0], *stroke.points.last().unwrap()];
    let mut best = (f64::INFINITY, users[0].color);
    for u in users {
        let d = ends
            .iter()
            .map(|&e| polyline_dist2(e, u))
            .fold(f64::INFINITY, f64::min);
        if d < best.0 {
            best = (d, u.color);
        }
    }
    best.1
}

/// Adds medial strokes to the uncovered parts of the matte's hair region.
pub fn autocomplete_unbraided(
    sketch: &Sketch,
    matte: &Matte,
    policy: ColorPolicy,
) -> Result<Sketch> {
    if !sketch.has_hair() {
        return Err(Error::NoHairStrokes);
    }
    let mask = matte_to_mask(matte, MASK_THRESHOLD);
    mask.ensure_dims(sketch.dims())?;
    let users: Vec<&Stroke> = sketch.hair_strokes().collect();
    let mut out = sketch.clone();
    for _ in 0..MAX_ROUNDS {
        let map = build_subtracted_map(&out, &mask)?;
        let found = extract_medial_strokes(&map, MIN_STROKE_LENGTH_PX);
        if found.is_empty() {
            break;
        }
        for mut s in found {
            s.id = out.next_id();
            s.generated = true;
            s.color = match policy {
                ColorPolicy::Fixed(c) => c,
                ColorPolicy::NearestUserStroke => nearest_color(&s, &users),
            };
            out.strokes.push(s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc_mask(h: usize, w: usize, cy: f64, cx: f64, r: f64) -> Mask {
        Grid::from_fn(h, w, |y, x| {
            (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2) <= r * r
        })
    }

    fn chebyshev_to(p: (usize, usize), set: &Mask) -> usize {
        set.indexed()
            .filter(|(_, _, v)| **v)
            .map(|(y, x, _)| y.abs_diff(p.0).max(x.abs_diff(p.1)))
            .min()
            .unwrap_or(usize::MAX)
    }

    #[test]
    fn full_coverage_gives_empty_map() {
        let mut sketch = Sketch::new(40, 40);
        sketch.strokes.push(Stroke::hair(
            0,
            vec![[20.0, 10.0], [20.0, 30.0]],
            2.0,
            [1.0, 0.0, 0.0],
        ));
        let mask = disc_mask(40, 40, 20.0, 20.0, 6.0);
        assert!(build_subtracted_map(&sketch, &mask)
            .unwrap()
            .is_empty_mask());
    }

    #[test]
    fn map_keeps_chebyshev_distance_seven() {
        let mut sketch = Sketch::new(100, 100);
        sketch.strokes.push(Stroke::hair(
            0,
            vec![[40.0, 50.0], [60.0, 50.0]],
            2.0,
            [1.0, 0.0, 0.0],
        ));
        let mask = disc_mask(100, 100, 50.0, 50.0, 45.0);
        let map = build_subtracted_map(&sketch, &mask).unwrap();
        let foot = hair_footprint(&sketch);
        assert!(!map.is_empty_mask());
        for (y, x, v) in map.indexed() {
            if *v {
                assert!(chebyshev_to((y, x), &foot) > 7);
            }
        }
    }

    #[test]
    fn dot_stroke_area_matches_pixel_count() {
        let mut sketch = Sketch::new(64, 64);
        sketch.strokes.push(Stroke::hair(
            0,
            vec![[30.0, 30.0], [30.0, 30.0]],
            1.0,
            [1.0; 3],
        ));
        let mask = disc_mask(64, 64, 32.0, 32.0, 25.0);
        let map = build_subtracted_map(&sketch, &mask).unwrap();
        let mut removed = 0;
        for y in 23..=37 {
            for x in 23..=37 {
                if *mask.get(y, x) {
                    removed += 1;
                }
            }
        }
        assert_eq!(map.count(), mask.count() - removed);
    }

    #[test]
    fn rectangle_skeleton_is_its_center_line() {
        let map = Grid::from_fn(40, 240, |y, x| {
            (15..25).contains(&y) && (20..220).contains(&x)
        });
        let strokes = extract_medial_strokes(&map, MIN_STROKE_LENGTH_PX);
        assert_eq!(strokes.len(), 1);
        for p in &strokes[0].points {
            assert!((p[1] - 19.5).abs() <= 1.0, "{p:?}");
            assert!((20.0..220.0).contains(&p[0]));
        }
        assert!(strokes[0].length() > 150.0);
    }

    #[test]
    fn small_disc_and_empty_map_give_nothing() {
        assert!(extract_medial_strokes(&Grid::new(30, 30, false), 20.0).is_empty());
        let disc = disc_mask(64, 64, 32.0, 32.0, 12.0);
        assert!(extract_medial_strokes(&disc, 20.0).is_empty());
    }

    #[test]
    fn requires_a_hair_stroke() {
        let sketch = Sketch::new(32, 32);
        let matte = Matte::zeros(32, 32);
        assert!(matches!(
            autocomplete_unbraided(&sketch, &matte, ColorPolicy::default()),
            Err(Error::NoHairStrokes)
        ));
    }

    #[test]
    fn generated_strokes_inherit_the_single_color() {
        let pink = [1.0, 0.4, 0.7];
        let mut sketch = Sketch::new(128, 128);
        sketch.strokes.push(Stroke::hair(
            0,
            vec![[64.0, 20.0], [64.0, 108.0]],
            3.0,
            pink,
        ));
        let matte = Matte::from_mask(&disc_mask(128, 128, 64.0, 64.0, 55.0));
        let out = autocomplete_unbraided(&sketch, &matte, ColorPolicy::NearestUserStroke).unwrap();
        let generated: Vec<_> = out.strokes.iter().filter(|s| s.generated).collect();
        assert!(!generated.is_empty());
        assert!(generated.iter().all(|s| s.color == pink && s.width == 2.0));
        let again = autocomplete_unbraided(&out, &matte, ColorPolicy::NearestUserStroke).unwrap();
        assert_eq!(again.strokes.len(), out.strokes.len());
    }

    #[test]
    fn nearest_color_picks_the_closer_stroke() {
        let a = Stroke::hair(0, vec![[0.0, 0.0], [0.0, 100.0]], 2.0, [1.0, 0.0, 0.0]);
        let b = Stroke::hair(1, vec![[50.0, 0.0], [50.0, 100.0]], 2.0, [0.0, 0.0, 1.0]);
        let s = Stroke::hair(2, vec![[40.0, 10.0], [45.0, 90.0]], 2.0, [1.0; 3]);
        assert_eq!(nearest_color(&s, &[&a, &b]), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn dense_sketch_is_unchanged() {
        let mut sketch = Sketch::new(40, 40);
        sketch.strokes.push(Stroke::hair(
            0,
            vec![[20.0, 5.0], [20.0, 35.0]],
            4.0,
            [0.5; 3],
        ));
        let matte = Matte::from_mask(&disc_mask(40, 40, 20.0, 20.0, 8.0));
        let out =
            autocomplete_unbraided(&sketch, &matte, ColorPolicy::Fixed([0.0, 1.0, 0.0])).unwrap();
        assert_eq!(out, sketch);
    }
}
