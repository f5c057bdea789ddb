//! Dense raster grids and the pixel-level machinery shared by the other
//! modules: morphology, connected components, the exact Euclidean distance
//! transform, resampling and PNG IO.
//!
//! Pixel `(x, y)` has its center at the continuous coordinate `(x, y)`.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, Luma, Rgb as ImgRgb, RgbImage as ImgRgbImage};

use crate::error::{Error, Result};

pub type Rgb = [f32; 3];

/// Row-major `height × width` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

pub type Plane = Grid<f32>;
pub type RgbImage = Grid<Rgb>;
pub type Mask = Grid<bool>;

impl<T: Clone> Grid<T> {
    pub fn new(height: usize, width: usize, fill: T) -> Self {
        Self {
            height,
            width,
            data: vec![fill; height * width],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::InvalidInput(format!(
                "grid data has {} entries, expected {height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`.
    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, y: usize, x: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    /// Signed lookup; `None` outside the grid.
    #[inline]
    pub fn at(&self, y: isize, x: isize) -> Option<&T> {
        if y < 0 || x < 0 || y as usize >= self.height || x as usize >= self.width {
            None
        } else {
            Some(self.get(y as usize, x as usize))
        }
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Iterates `(y, x, value)` in raster order.
    pub fn indexed(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| (i / w, i % w, v))
    }

    pub fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: self.dims(),
            });
        }
        Ok(())
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty_mask(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }
}

pub const NEIGHBORS_4: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
pub const NEIGHBORS_8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Dilation with a `(2r+1)×(2r+1)` square structuring element.
pub fn dilate_square(mask: &Mask, radius: usize) -> Mask {
    let (h, w) = mask.dims();
    // Separable running max: rows, then columns.
    let rows = Grid::from_fn(h, w, |y, x| {
        let lo = x.saturating_sub(radius);
        let hi = (x + radius).min(w - 1);
        (lo..=hi).any(|xx| *mask.get(y, xx))
    });
    Grid::from_fn(h, w, |y, x| {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(h - 1);
        (lo..=hi).any(|yy| *rows.get(yy, x))
    })
}

/// Erosion with a `(2r+1)×(2r+1)` square element; pixels outside the grid
/// count as background.
pub fn erode_square(mask: &Mask, radius: usize) -> Mask {
    let (h, w) = mask.dims();
    let r = radius as isize;
    let inverted = mask.map(|v| !v);
    let grown = dilate_square(&inverted, radius);
    Grid::from_fn(h, w, |y, x| {
        let (yi, xi) = (y as isize, x as isize);
        let inside = yi - r >= 0 && xi - r >= 0 && yi + r < h as isize && xi + r < w as isize;
        inside && !*grown.get(y, x)
    })
}

/// 8-connected components of `mask`, each listed in raster order.
/// Components are ordered by their first pixel in raster order.
pub fn components(mask: &Mask) -> Vec<Vec<(usize, usize)>> {
    let (h, w) = mask.dims();
    let mut seen = Grid::new(h, w, false);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !*mask.get(y, x) || *seen.get(y, x) {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![(y, x)];
            seen.set(y, x, true);
            while let Some((cy, cx)) = stack.pop() {
                comp.push((cy, cx));
                for (dy, dx) in NEIGHBORS_8 {
                    let (ny, nx) = (cy as isize + dy, cx as isize + dx);
                    if mask.at(ny, nx) == Some(&true) && !*seen.get(ny as usize, nx as usize) {
                        seen.set(ny as usize, nx as usize, true);
                        stack.push((ny as usize, nx as usize));
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
    }
    out
}

/// Exact Euclidean distance from every pixel to the nearest `true` pixel of
/// `features`. Returns `f64::INFINITY` everywhere when there are none.
#[allow(clippy::needless_range_loop)]
pub fn distance_transform(features: &Mask) -> Grid<f64> {
    let (h, w) = features.dims();
    let inf = f64::INFINITY;
    let mut sq = features.map(|&v| if v { 0.0 } else { inf });
    let mut f = vec![0.0; h.max(w)];
    let mut d = vec![0.0; h.max(w)];
    for x in 0..w {
        for y in 0..h {
            f[y] = *sq.get(y, x);
        }
        edt_1d(&f[..h], &mut d[..h]);
        for y in 0..h {
            sq.set(y, x, d[y]);
        }
    }
    for y in 0..h {
        for x in 0..w {
            f[x] = *sq.get(y, x);
        }
        edt_1d(&f[..w], &mut d[..w]);
        for x in 0..w {
            sq.set(y, x, d[x]);
        }
    }
    sq.map(|v| v.sqrt())
}

/// Lower envelope of parabolas (squared distances along one axis).
fn edt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let finite: Vec<usize> = (0..n).filter(|&i| f[i].is_finite()).collect();
    if finite.is_empty() {
        d.iter_mut().for_each(|v| *v = f64::INFINITY);
        return;
    }
    let mut v = Vec::with_capacity(finite.len());
    let mut z: Vec<f64> = Vec::with_capacity(finite.len() + 1);
    for &q in &finite {
        let qf = q as f64;
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let pf = p as f64;
                    let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf));
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    z.push(f64::INFINITY);
    let mut k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k];
        let diff = qf - p as f64;
        *out = diff * diff + f[p];
    }
}

/// Bilinear sample with edge clamping.
pub fn sample_bilinear<T: Copy>(
    grid: &Grid<T>,
    y: f64,
    x: f64,
    lerp: impl Fn(T, T, f32) -> T,
) -> T {
    let (h, w) = grid.dims();
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = (y - y0 as f64) as f32;
    let fx = (x - x0 as f64) as f32;
    let top = lerp(*grid.get(y0, x0), *grid.get(y0, x1), fx);
    let bottom = lerp(*grid.get(y1, x0), *grid.get(y1, x1), fx);
    lerp(top, bottom, fy)
}

pub fn lerp_f32(a: f32, b: f32, t: f32) -> f32 {
    a + (b - a) * t
}

pub fn lerp_rgb(a: Rgb, b: Rgb, t: f32) -> Rgb {
    [
        lerp_f32(a[0], b[0], t),
        lerp_f32(a[1], b[1], t),
        lerp_f32(a[2], b[2], t),
    ]
}

/// Resamples with pixel-center alignment. Downsampling by an integer factor
/// averages the covered block; everything else is bilinear.
pub fn resize<T: Copy>(
    grid: &Grid<T>,
    height: usize,
    width: usize,
    lerp: impl Fn(T, T, f32) -> T + Copy,
    mean: impl Fn(&[T]) -> T,
) -> Grid<T> {
    let (h, w) = grid.dims();
    if (h, w) == (height, width) {
        return grid.clone();
    }
    if h % height == 0 && w % width == 0 && h / height == w / width {
        let f = h / height;
        let mut block = Vec::with_capacity(f * f);
        return Grid::from_fn(height, width, |y, x| {
            block.clear();
            for yy in y * f..(y + 1) * f {
                for xx in x * f..(x + 1) * f {
                    block.push(*grid.get(yy, xx));
                }
            }
            mean(&block)
        });
    }
    let sy = h as f64 / height as f64;
    let sx = w as f64 / width as f64;
    Grid::from_fn(height, width, |y, x| {
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        let src_x = (x as f64 + 0.5) * sx - 0.5;
        sample_bilinear(grid, src_y, src_x, lerp)
    })
}

pub fn resize_plane(plane: &Plane, height: usize, width: usize) -> Plane {
    resize(plane, height, width, lerp_f32, |b| {
        b.iter().sum::<f32>() / b.len() as f32
    })
}

pub fn resize_rgb(img: &RgbImage, height: usize, width: usize) -> RgbImage {
    resize(img, height, width, lerp_rgb, |b| {
        let mut acc = [0.0f32; 3];
        for p in b {
            for c in 0..3 {
                acc[c] += p[c];
            }
        }
        acc.map(|v| v / b.len() as f32)
    })
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn gray_image(plane: &Plane) -> GrayImage {
    let (h, w) = plane.dims();
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([quantize(*plane.get(y as usize, x as usize))])
    })
}

fn rgb_image(img: &RgbImage) -> ImgRgbImage {
    let (h, w) = img.dims();
    ImgRgbImage::from_fn(w as u32, h as u32, |x, y| {
        ImgRgb(img.get(y as usize, x as usize).map(quantize))
    })
}

fn plane_from_dynamic(img: image::DynamicImage) -> Plane {
    let g = img.into_luma8();
    let (w, h) = g.dimensions();
    Grid::from_fn(h as usize, w as usize, |y, x| {
        g.get_pixel(x as u32, y as u32)[0] as f32 / 255.0
    })
}

fn rgb_from_dynamic(img: image::DynamicImage) -> RgbImage {
    let c = img.into_rgb8();
    let (w, h) = c.dimensions();
    Grid::from_fn(h as usize, w as usize, |y, x| {
        c.get_pixel(x as u32, y as u32).0.map(|v| v as f32 / 255.0)
    })
}

/// 8-bit single-channel PNG, `value / 255`.
pub fn encode_gray_png(plane: &Plane) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    gray_image(plane).write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn decode_gray_png(bytes: &[u8]) -> Result<Plane> {
    Ok(plane_from_dynamic(image::load_from_memory_with_format(
        bytes,
        ImageFormat::Png,
    )?))
}

pub fn encode_rgb_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    rgb_image(img).write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn decode_rgb_png(bytes: &[u8]) -> Result<RgbImage> {
    Ok(rgb_from_dynamic(image::load_from_memory_with_format(
        bytes,
        ImageFormat::Png,
    )?))
}

pub fn save_gray_png(plane: &Plane, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_gray_png(plane)?)?;
    Ok(())
}

pub fn load_gray_png(path: impl AsRef<Path>) -> Result<Plane> {
    decode_gray_png(&std::fs::read(path)?)
}

pub fn save_rgb_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_rgb_png(img)?)?;
    Ok(())
}

pub fn load_rgb_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    decode_rgb_png(&std::fs::read(path)?)
}
