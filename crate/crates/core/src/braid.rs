//! Procedural braid auto-completion.
//!
//! Two user-drawn boundary strokes fix the half-width `a(t)` and the center
//! offsets `Δx(t)`, `Δy(t)` of a parametric braid. Strand `k` follows
//!
//! ```text
//! x = a(t)·sin(θ(t) + φk) + Δx(t),   y = Δy(t),   z = b·sin(2(θ(t) + φk))
//! ```
//!
//! with `θ(t) = w·κ·t`. The center-lines are grown into tubes until they
//! touch, splatted into a z-buffer, and the silhouette and strand-occlusion
//! edges are colored from a per-strand palette.
//!
//! Boundaries need not be vertical: they are expressed in a rotated frame
//! whose `y` axis runs from the start to the end of the braid.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::raster::{components, Grid, Mask, Rgb, RgbImage, NEIGHBORS_4};
use crate::sketch::{Sketch, Stroke, COLOR_BACKGROUND};
use crate::trace;

/// Number of arc-length samples taken along each boundary.
pub const BOUNDARY_SAMPLES: usize = 256;
/// Narrowest admissible braid half-width, in pixels.
pub const MIN_HALF_WIDTH: f64 = 2.0;
/// Center-line samples used by [`autocomplete_braid`].
pub const DEFAULT_STRAND_SAMPLES: usize = 512;
pub const EDGE_STROKE_WIDTH: f32 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BraidKind {
    Fishtail,
    Rope,
    ThreeStrand,
    FourStrand,
    FiveStrand,
}

impl BraidKind {
    pub const ALL: [BraidKind; 5] = [
        BraidKind::Fishtail,
        BraidKind::Rope,
        BraidKind::ThreeStrand,
        BraidKind::FourStrand,
        BraidKind::FiveStrand,
    ];

    pub fn n_strands(self) -> usize {
        match self {
            BraidKind::Fishtail | BraidKind::Rope => 2,
            BraidKind::ThreeStrand => 3,
            BraidKind::FourStrand => 4,
            BraidKind::FiveStrand => 5,
        }
    }

    /// Equally spaced phase offsets.
    ///
    /// Odd counts spread over the full turn (`2π/n`). For even counts a full
    /// turn would pair strands at opposite phases, which coincide in 3D
    /// because `sin(2ψ)` has period π; they are spread over a half turn instead.
    pub fn phases(self) -> Vec<f64> {
        let n = self.n_strands();
        let step = if n % 2 == 1 {
            2.0 * PI / n as f64
        } else {
            PI / n as f64
        };
        (0..n).map(|k| k as f64 * step).collect()
    }

    /// Smallest phase shift that maps the strand set onto itself.
    fn symmetry_period(self) -> f64 {
        let n = self.n_strands();
        if n % 2 == 1 {
            2.0 * PI / n as f64
        } else {
            2.0 * PI
        }
    }
}

/// The two user-drawn boundary polylines, as `[x, y]` points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPair {
    pub b0: Vec<[f32; 2]>,
    pub b1: Vec<[f32; 2]>,
}

/// Orthonormal frame with `axis` along the braid and `across` perpendicular.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BraidFrame {
    pub axis: [f64; 2],
    pub across: [f64; 2],
}

impl BraidFrame {
    fn from_axis(axis: [f64; 2]) -> Self {
        Self {
            axis,
            across: [axis[1], -axis[0]],
        }
    }

    /// Global `(x, y)` to local `(X, Y)`.
    pub fn to_local(&self, p: [f64; 2]) -> [f64; 2] {
        [
            p[0] * self.across[0] + p[1] * self.across[1],
            p[0] * self.axis[0] + p[1] * self.axis[1],
        ]
    }

    pub fn to_global(&self, q: [f64; 2]) -> [f64; 2] {
        [
            q[0] * self.across[0] + q[1] * self.axis[0],
            q[0] * self.across[1] + q[1] * self.axis[1],
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BraidSpec {
    pub kind: BraidKind,
    /// Knot frequency; the sign picks the knot direction.
    pub w: f64,
    /// Depth amplitude.
    pub b: f64,
    pub a_of_t: Vec<f64>,
    pub dx_of_t: Vec<f64>,
    pub dy_of_t: Vec<f64>,
    pub t_range: [f64; 2],
    pub n_strands: usize,
    pub phases: Vec<f64>,
    /// Radians of `θ` per unit of `w·t`. Chosen so the braid spans a whole
    /// number of knot periods, roughly one radian per mean half-width of
    /// braid length at `|w| = 1`.
    pub phase_scale: f64,
    pub frame: BraidFrame,
}

/// Resamples a polyline to `n` points equally spaced by arc length.
pub fn resample_polyline(points: &[[f32; 2]], n: usize) -> Vec<[f64; 2]> {
    let pts: Vec<[f64; 2]> = points.iter().map(|p| [p[0] as f64, p[1] as f64]).collect();
    let mut cum = vec![0.0];
    for w in pts.windows(2) {
        let d = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
        cum.push(cum.last().unwrap() + d);
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for i in 0..n {
        let target = if n == 1 {
            0.0
        } else {
            total * i as f64 / (n - 1) as f64
        };
        while seg + 2 < cum.len() && cum[seg + 1] < target {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let f = if span > 0.0 {
            ((target - cum[seg]) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push([
            pts[seg][0] + f * (pts[seg + 1][0] - pts[seg][0]),
            pts[seg][1] + f * (pts[seg + 1][1] - pts[seg][1]),
        ]);
    }
    out
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Derives the braid parameters from two boundary strokes.
pub fn fit_braid_params(boundaries: &BoundaryPair, kind: BraidKind, w: f64) -> Result<BraidSpec> {
    if boundaries.b0.len() < 2 || boundaries.b1.len() < 2 {
        return Err(Error::InvalidInput(
            "each braid boundary needs at least 2 points".into(),
        ));
    }
    if w == 0.0 || !w.is_finite() {
        return Err(Error::InvalidInput(format!(
            "knot frequency w={w} must be nonzero"
        )));
    }
    let n = BOUNDARY_SAMPLES;
    let p0 = resample_polyline(&boundaries.b0, n);
    let mut p1 = resample_polyline(&boundaries.b1, n);
    // Boundaries drawn in opposite directions are paired end to end.
    if dist(p0[0], p1[0]) + dist(p0[n - 1], p1[n - 1])
        > dist(p0[0], p1[n - 1]) + dist(p0[n - 1], p1[0])
    {
        p1.reverse();
    }
    let start = [(p0[0][0] + p1[0][0]) / 2.0, (p0[0][1] + p1[0][1]) / 2.0];
    let end = [
        (p0[n - 1][0] + p1[n - 1][0]) / 2.0,
        (p0[n - 1][1] + p1[n - 1][1]) / 2.0,
    ];
    let axis_len = dist(start, end);
    if axis_len < 1.0 {
        return Err(Error::DegenerateBraid(
            "boundaries have no extent along the braid".into(),
        ));
    }
    let frame = BraidFrame::from_axis([
        (end[0] - start[0]) / axis_len,
        (end[1] - start[1]) / axis_len,
    ]);

    let mut a = Vec::with_capacity(n);
    let mut dx = Vec::with_capacity(n);
    let mut dy = Vec::with_capacity(n);
    let mut side = 0.0f64;
    for i in 0..n {
        let [x0, y0] = frame.to_local(p0[i]);
        let [x1, y1] = frame.to_local(p1[i]);
        let diff = x0 - x1;
        if side == 0.0 {
            side = diff.signum();
        } else if diff.signum() != side && diff != 0.0 {
            return Err(Error::DegenerateBraid("boundaries intersect".into()));
        }
        a.push(diff.abs() / 2.0);
        dx.push((x0 + x1) / 2.0);
        dy.push((y0 + y1) / 2.0);
    }
    if let Some(min) = a.iter().cloned().reduce(f64::min) {
        if min < MIN_HALF_WIDTH {
            return Err(Error::DegenerateBraid(format!(
                "half-width {min:.2} px below {MIN_HALF_WIDTH} px"
            )));
        }
    }
    let delta_y = dy.iter().sum::<f64>() / n as f64;
    let t_len = delta_y.abs().max(1.0);

    let mean_a = a.iter().sum::<f64>() / n as f64;
    let axis_arc: f64 = (1..n)
        .map(|i| ((dx[i] - dx[i - 1]).powi(2) + (dy[i] - dy[i - 1]).powi(2)).sqrt())
        .sum();
    let period = kind.symmetry_period();
    let raw_span = w.abs() * axis_arc / mean_a;
    let periods = (raw_span / period).round().max(1.0);
    let phase_scale = periods * period / (w.abs() * t_len);

    Ok(BraidSpec {
        kind,
        w,
        b: 0.6 * mean_a,
        a_of_t: a,
        dx_of_t: dx,
        dy_of_t: dy,
        t_range: [0.0, t_len],
        n_strands: kind.n_strands(),
        phases: kind.phases(),
        phase_scale,
        frame,
    })
}

fn interp(values: &[f64], s: f64) -> f64 {
    let pos = s.clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let i = (pos.floor() as usize).min(values.len() - 2);
    let f = pos - i as f64;
    values[i] + f * (values[i + 1] - values[i])
}

impl BraidSpec {
    /// `θ(t)` before the strand phase is added.
    pub fn theta(&self, t: f64) -> f64 {
        self.w * self.phase_scale * t
    }

    /// Local `(X, Y, z)` of a strand point at parameter `t` and total phase `psi`.
    pub fn local_point_at_phase(&self, t: f64, psi: f64) -> [f64; 3] {
        let s = (t - self.t_range[0]) / (self.t_range[1] - self.t_range[0]);
        let mut a = interp(&self.a_of_t, s);
        if self.kind == BraidKind::Fishtail {
            a *= 0.5 + 0.5 * self.theta(t).cos().abs();
        }
        [
            a * psi.sin() + interp(&self.dx_of_t, s),
            interp(&self.dy_of_t, s),
            self.b * (2.0 * psi).sin(),
        ]
    }

    /// Local `(X, Y, z)` of strand `k` at parameter `t`.
    pub fn local_strand_point(&self, k: usize, t: f64) -> [f64; 3] {
        self.local_point_at_phase(t, self.theta(t) + self.phases[k])
    }

    /// Canvas `(x, y, z)` of strand `k` at parameter `t`.
    pub fn strand_point(&self, k: usize, t: f64) -> [f64; 3] {
        let [lx, ly, z] = self.local_strand_point(k, t);
        let [x, y] = self.frame.to_global([lx, ly]);
        [x, y, z]
    }

    pub fn sample_t(&self, j: usize, samples: usize) -> f64 {
        self.t_range[0] + (self.t_range[1] - self.t_range[0]) * j as f64 / (samples - 1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BraidGeometry {
    /// One polyline of `(x, y, z)` samples per strand; the outer index is the strand id.
    pub centerlines: Vec<Vec<[f64; 3]>>,
    pub tube_radius: f64,
    pub frame: BraidFrame,
}

/// Samples every strand's center-line.
pub fn eval_centerlines(spec: &BraidSpec, samples_per_strand: usize) -> Result<BraidGeometry> {
    if samples_per_strand < 64 {
        return Err(Error::InvalidInput(format!(
            "{samples_per_strand} samples per strand, at least 64 required"
        )));
    }
    let centerlines = (0..spec.n_strands)
        .map(|k| {
            (0..samples_per_strand)
                .map(|j| spec.strand_point(k, spec.sample_t(j, samples_per_strand)))
                .collect()
        })
        .collect();
    Ok(BraidGeometry {
        centerlines,
        tube_radius: 0.0,
        frame: spec.frame,
    })
}

/// Smallest 3D distance between samples of different strands, with the
/// strand pair that attains it.
pub fn min_interstrand_distance(geom: &BraidGeometry) -> Option<(f64, usize, usize)> {
    let mut pts: Vec<([f64; 3], usize)> = geom
        .centerlines
        .iter()
        .enumerate()
        .flat_map(|(k, line)| line.iter().map(move |&p| (p, k)))
        .collect();
    pts.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]));
    let mut best: Option<(f64, usize, usize)> = None;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let dx = pts[j].0[0] - pts[i].0[0];
            if best.is_some_and(|(d, _, _)| dx > d) {
                break;
            }
            if pts[i].1 == pts[j].1 {
                continue;
            }
            let d = ((pts[j].0[0] - pts[i].0[0]).powi(2)
                + (pts[j].0[1] - pts[i].0[1]).powi(2)
                + (pts[j].0[2] - pts[i].0[2]).powi(2))
            .sqrt();
            if best.is_none_or(|(b, _, _)| d < b) {
                best = Some((d, pts[i].1.min(pts[j].1), pts[i].1.max(pts[j].1)));
            }
        }
    }
    best
}

/// Grows the center-lines into tubes of the largest radius that keeps
/// distinct strands from penetrating each other.
pub fn expand_tubes(geom: &BraidGeometry) -> Result<BraidGeometry> {
    let Some((d, i, j)) = min_interstrand_distance(geom) else {
        return Err(Error::InvalidInput(
            "tube expansion needs at least two strands".into(),
        ));
    };
    if d < 1e-9 {
        return Err(Error::CoincidentStrands(i, j));
    }
    Ok(BraidGeometry {
        tube_radius: d / 2.0,
        ..geom.clone()
    })
}

/// Number of strand-over-strand crossings in the projected image, counted
/// as sign changes of the across-axis separation of every strand pair.
pub fn count_crossings(geom: &BraidGeometry) -> usize {
    let across: Vec<Vec<f64>> = geom
        .centerlines
        .iter()
        .map(|l| {
            l.iter()
                .map(|p| geom.frame.to_local([p[0], p[1]])[0])
                .collect()
        })
        .collect();
    let mut count = 0;
    for i in 0..across.len() {
        for j in i + 1..across.len() {
            let mut prev = 0.0f64;
            for (a, b) in across[i].iter().zip(&across[j]) {
                let s = (a - b).signum();
                if (a - b).abs() > 1e-6 {
                    if prev != 0.0 && s != prev {
                        count += 1;
                    }
                    prev = s;
                }
            }
        }
    }
    count
}

/// Rasterized braid: colored edges plus the z-buffer it was extracted from.
#[derive(Clone, Debug, PartialEq)]
pub struct BraidRender {
    /// Edge colors; [`COLOR_BACKGROUND`] off the edges.
    pub edges: RgbImage,
    pub edge_mask: Mask,
    /// Center-line depth of the visible strand; `-inf` where uncovered.
    pub depth: Grid<f32>,
    /// Visible strand per pixel; `-1` where uncovered.
    pub strand_id: Grid<i32>,
}

/// Densified `(x, y, z)` samples at most half a pixel apart in projection.
pub fn densify(line: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for seg in line.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let steps = ((len / 0.5).ceil() as usize).max(1);
        for s in 0..steps {
            let f = s as f64 / steps as f64;
            out.push([
                a[0] + f * (b[0] - a[0]),
                a[1] + f * (b[1] - a[1]),
                a[2] + f * (b[2] - a[2]),
            ]);
        }
    }
    if let Some(&last) = line.last() {
        out.push(last);
    }
    out
}

/// Orthographic z-buffer of disc splats: each pixel takes the strand with
/// the largest center-line depth among the discs covering it, ties going to
/// the nearer disc center.
pub fn splat_strands(geom: &BraidGeometry, height: usize, width: usize) -> (Grid<i32>, Grid<f32>) {
    let r = geom.tube_radius;
    let r2 = r * r;
    let mut ids = Grid::new(height, width, -1i32);
    let mut depth = Grid::new(height, width, f64::NEG_INFINITY);
    let mut best_d2 = Grid::new(height, width, f64::INFINITY);
    for (k, line) in geom.centerlines.iter().enumerate() {
        for c in densify(line) {
            let y0 = (c[1] - r).ceil().max(0.0);
            let y1 = (c[1] + r).floor().min(height as f64 - 1.0);
            let x0 = (c[0] - r).ceil().max(0.0);
            let x1 = (c[0] + r).floor().min(width as f64 - 1.0);
            if y0 > y1 || x0 > x1 {
                continue;
            }
            for y in y0 as usize..=y1 as usize {
                for x in x0 as usize..=x1 as usize {
                    let d2 = (x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2);
                    if d2 > r2 {
                        continue;
                    }
                    let z = *depth.get(y, x);
                    if c[2] > z || (c[2] == z && d2 < *best_d2.get(y, x)) {
                        depth.set(y, x, c[2]);
                        best_d2.set(y, x, d2);
                        ids.set(y, x, k as i32);
                    }
                }
            }
        }
    }
    (ids, depth.map(|&v| v as f32))
}

/// Whether pixel `(x, y)` lies beyond either end of a strand's projected
/// center-line (the rounded tube caps).
fn beyond_ends(line: &[[f64; 3]], x: f64, y: f64) -> bool {
    let n = line.len();
    if n < 2 {
        return false;
    }
    let outward = |end: [f64; 3], prev: [f64; 3]| {
        let t = [end[0] - prev[0], end[1] - prev[1]];
        (x - end[0]) * t[0] + (y - end[1]) * t[1] > 0.0
    };
    outward(line[0], line[1]) || outward(line[n - 1], line[n - 2])
}

/// Renders strand silhouettes and occlusion boundaries as palette-colored edges.
///
/// An edge pixel is a covered pixel that either borders the background along
/// the tube sides or borders a strand lying above it. Edges are therefore one
/// pixel wide and sit on the occluded side. Each edge takes the palette color
/// of the topmost strand among the pixel and its 4-neighbors.
pub fn render_braid_sketch(
    geom: &BraidGeometry,
    palette: &[Rgb],
    canvas: (usize, usize),
) -> Result<BraidRender> {
    if palette.len() != geom.centerlines.len() {
        return Err(Error::InvalidInput(format!(
            "palette has {} colors for {} strands",
            palette.len(),
            geom.centerlines.len()
        )));
    }
    let (h, w) = canvas;
    let (ids, depth) = splat_strands(geom, h, w);
    let mut edges = Grid::new(h, w, COLOR_BACKGROUND);
    let mut edge_mask = Grid::new(h, w, false);
    for y in 0..h {
        for x in 0..w {
            let id = *ids.get(y, x);
            if id < 0 {
                continue;
            }
            let z = *depth.get(y, x);
            let mut is_edge = false;
            let mut top = (z, id);
            for (dy, dx) in NEIGHBORS_4 {
                let (ny, nx) = (y as isize + dy, x as isize + dx);
                match ids.at(ny, nx) {
                    Some(&nid) if nid >= 0 => {
                        let nz = *depth.get(ny as usize, nx as usize);
                        if nid != id && nz > z {
                            is_edge = true;
                        }
                        if nz > top.0 {
                            top = (nz, nid);
                        }
                    }
                    _ => {
                        if !beyond_ends(&geom.centerlines[id as usize], x as f64, y as f64) {
                            is_edge = true;
                        }
                    }
                }
            }
            if is_edge {
                edge_mask.set(y, x, true);
                edges.set(y, x, palette[top.1 as usize]);
            }
        }
    }
    Ok(BraidRender {
        edges,
        edge_mask,
        depth,
        strand_id: ids,
    })
}

/// Traces same-colored connected edge pixels into hair strokes of width 2.
pub fn braid_edges_to_strokes(render: &BraidRender) -> Vec<Stroke> {
    let mut strokes = Vec::new();
    for comp in components(&render.edge_mask) {
        // Split the component by color.
        let mut colors: Vec<Rgb> = Vec::new();
        for &(y, x) in &comp {
            let c = *render.edges.get(y, x);
            if !colors.contains(&c) {
                colors.push(c);
            }
        }
        for color in colors {
            let (h, w) = render.edge_mask.dims();
            let mut sub = Grid::new(h, w, false);
            for &(y, x) in &comp {
                if *render.edges.get(y, x) == color {
                    sub.set(y, x, true);
                }
            }
            for part in components(&sub) {
                let mut part_mask = Grid::new(h, w, false);
                for &(y, x) in &part {
                    part_mask.set(y, x, true);
                }
                for chain in trace::trace_chains(&part_mask) {
                    if chain.len() < 3 {
                        continue;
                    }
                    strokes.push(Stroke::hair(
                        strokes.len() as u64,
                        trace::chain_points(&chain),
                        EDGE_STROKE_WIDTH,
                        color,
                    ));
                }
            }
        }
    }
    strokes
}

/// Service-level braid request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BraidRequest {
    pub kind: BraidKind,
    pub w: f64,
    pub palette: Vec<Rgb>,
    pub boundary0: Vec<[f32; 2]>,
    pub boundary1: Vec<[f32; 2]>,
    /// `[height, width]`; defaults to 512×512.
    #[serde(default)]
    pub canvas: Option<[usize; 2]>,
}

/// Full braid pipeline; every returned stroke is flagged as generated.
pub fn autocomplete_braid(req: &BraidRequest) -> Result<Sketch> {
    let [h, w] = req.canvas.unwrap_or([512, 512]);
    let spec = fit_braid_params(
        &BoundaryPair {
            b0: req.boundary0.clone(),
            b1: req.boundary1.clone(),
        },
        req.kind,
        req.w,
    )?;
    let geom = expand_tubes(&eval_centerlines(&spec, DEFAULT_STRAND_SAMPLES)?)?;
    let render = render_braid_sketch(&geom, &req.palette, (h, w))?;
    let mut sketch = Sketch::new(h, w);
    for mut s in braid_edges_to_strokes(&render) {
        s.generated = true;
        sketch.strokes.push(s);
    }
    Ok(sketch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vertical_pair() -> BoundaryPair {
        BoundaryPair {
            b0: vec![[100.0, 0.0], [100.0, 400.0]],
            b1: vec![[200.0, 0.0], [200.0, 400.0]],
        }
    }

    #[test]
    fn vertical_boundaries_give_constant_width() {
        let spec = fit_braid_params(&vertical_pair(), BraidKind::ThreeStrand, 1.0).unwrap();
        assert!(spec.a_of_t.iter().all(|&a| (a - 50.0).abs() < 1e-9));
        assert!(spec.dx_of_t.iter().all(|&x| (x - 150.0).abs() < 1e-9));
        assert!((spec.t_range[1] - 200.0).abs() < 1e-9);
        assert_eq!(spec.frame.axis, [0.0, 1.0]);
        assert_eq!(spec.phases.len(), 3);
        assert!((spec.b - 30.0).abs() < 1e-9);
    }

    #[test]
    fn swapped_boundaries_give_the_same_spec() {
        let p = vertical_pair();
        let swapped = BoundaryPair {
            b0: p.b1.clone(),
            b1: p.b0.clone(),
        };
        let a = fit_braid_params(&p, BraidKind::ThreeStrand, 1.5).unwrap();
        let b = fit_braid_params(&swapped, BraidKind::ThreeStrand, 1.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reversed_boundary_is_paired_end_to_end() {
        let p = vertical_pair();
        let rev = BoundaryPair {
            b0: p.b0.clone(),
            b1: p.b1.iter().rev().cloned().collect(),
        };
        let a = fit_braid_params(&p, BraidKind::Rope, 1.0).unwrap();
        let b = fit_braid_params(&rev, BraidKind::Rope, 1.0).unwrap();
        for (x, y) in a
            .a_of_t
            .iter()
            .zip(&b.a_of_t)
            .chain(a.dx_of_t.iter().zip(&b.dx_of_t))
        {
            assert!((x - y).abs() < 1e-9);
        }
        assert!((a.phase_scale - b.phase_scale).abs() < 1e-9);
    }

    #[test]
    fn degenerate_boundaries_are_rejected() {
        let narrow = BoundaryPair {
            b0: vec![[100.0, 0.0], [100.0, 400.0]],
            b1: vec![[103.0, 0.0], [103.0, 400.0]],
        };
        assert!(matches!(
            fit_braid_params(&narrow, BraidKind::ThreeStrand, 1.0),
            Err(Error::DegenerateBraid(_))
        ));
        let crossing = BoundaryPair {
            b0: vec![[100.0, 0.0], [200.0, 400.0]],
            b1: vec![[200.0, 0.0], [100.0, 400.0]],
        };
        assert!(fit_braid_params(&crossing, BraidKind::ThreeStrand, 1.0).is_err());
        assert!(fit_braid_params(&vertical_pair(), BraidKind::ThreeStrand, 0.0).is_err());
    }

    #[test]
    fn strand_start_and_phase_shift() {
        let spec = fit_braid_params(&vertical_pair(), BraidKind::ThreeStrand, -1.0).unwrap();
        let p = spec.local_strand_point(0, 0.0);
        assert!((p[0] - 150.0).abs() < 1e-12);
        assert_eq!(p[2], 0.0);
        for j in 0..50 {
            let t = spec.sample_t(j, 50);
            let l1 = spec.local_strand_point(1, t);
            let shifted = spec.local_point_at_phase(t, spec.theta(t) + 2.0 * PI / 3.0);
            assert_eq!(l1, shifted);
        }
    }

    #[test]
    fn parallel_lines_have_half_gap_radius() {
        let geom = BraidGeometry {
            centerlines: vec![
                (0..100).map(|i| [10.0, i as f64, 0.0]).collect(),
                (0..100).map(|i| [20.0, i as f64, 0.0]).collect(),
            ],
            tube_radius: 0.0,
            frame: BraidFrame::from_axis([0.0, 1.0]),
        };
        let r = expand_tubes(&geom).unwrap().tube_radius;
        assert!((r - 5.0).abs() <= 0.25);

        let same = BraidGeometry {
            centerlines: vec![geom.centerlines[0].clone(), geom.centerlines[0].clone()],
            ..geom
        };
        assert!(matches!(
            expand_tubes(&same),
            Err(Error::CoincidentStrands(0, 1))
        ));
    }

    #[test]
    fn every_kind_expands_without_collisions() {
        for kind in BraidKind::ALL {
            for w in [-2.0, 0.5, 1.0, 3.0] {
                let spec = fit_braid_params(&vertical_pair(), kind, w).unwrap();
                let geom = expand_tubes(&eval_centerlines(&spec, 256).unwrap()).unwrap();
                assert!(
                    geom.tube_radius > 1.0,
                    "{kind:?} w={w} r={}",
                    geom.tube_radius
                );
            }
        }
    }

    #[test]
    fn straight_tube_has_two_silhouettes() {
        let geom = BraidGeometry {
            centerlines: vec![(0..=80)
                .map(|i| [32.0, 10.0 + i as f64 * 0.5, 0.0])
                .collect()],
            tube_radius: 6.0,
            frame: BraidFrame::from_axis([0.0, 1.0]),
        };
        let render = render_braid_sketch(&geom, &[[0.9, 0.5, 0.2]], (64, 64)).unwrap();
        assert_eq!(components(&render.edge_mask).len(), 2);
        let strokes = braid_edges_to_strokes(&render);
        assert_eq!(strokes.len(), 2);
        for s in &strokes {
            assert_eq!(s.color, [0.9, 0.5, 0.2]);
        }
    }

    #[test]
    fn palette_length_is_checked() {
        let spec = fit_braid_params(&vertical_pair(), BraidKind::ThreeStrand, 1.0).unwrap();
        let geom = expand_tubes(&eval_centerlines(&spec, 128).unwrap()).unwrap();
        assert!(render_braid_sketch(&geom, &[[1.0; 3]], (512, 512)).is_err());
    }

    #[test]
    fn off_canvas_geometry_renders_empty() {
        let geom = BraidGeometry {
            centerlines: vec![(0..100).map(|i| [-500.0, i as f64, 0.0]).collect()],
            tube_radius: 4.0,
            frame: BraidFrame::from_axis([0.0, 1.0]),
        };
        let render = render_braid_sketch(&geom, &[[1.0; 3]], (64, 64)).unwrap();
        assert!(render.edge_mask.is_empty_mask());
        assert!(braid_edges_to_strokes(&render).is_empty());
    }

    #[test]
    fn empty_edges_give_no_strokes() {
        let render = BraidRender {
            edges: Grid::new(8, 8, COLOR_BACKGROUND),
            edge_mask: Grid::new(8, 8, false),
            depth: Grid::new(8, 8, f32::NEG_INFINITY),
            strand_id: Grid::new(8, 8, -1),
        };
        assert!(braid_edges_to_strokes(&render).is_empty());
    }
}
