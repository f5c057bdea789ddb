//! U-shaped encoder-decoder generators.
//!
//! The encoder halves the resolution at every level with 4×4 stride-2
//! convolutions; the decoder mirrors it with transposed convolutions and skip
//! connections. Dual attention follows the configured inner decoder levels.
//! The image generator ends in full-resolution features and a 3×3 output
//! head, so that every blended level is a feature map.

use candle_core::{DType, Device, Tensor};
use std::collections::BTreeMap;

use super::attention::DualAttention;
use super::checkpoint::{Checkpoint, CheckpointKind};
use super::layers::{leaky_relu, Conv2d, ConvTranspose2d, ParamStore};
use super::{
    check_input, images_to_tensor, planes_to_tensor, tensor_to_image, tensor_to_plane, NetConfig,
};
use crate::error::{Error, Result};
use crate::matte::Matte;
use crate::sketch::{HairImage, SketchMapColor, SketchMapMono};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputActivation {
    /// Logistic map to `[0, 1]`.
    Sigmoid,
    /// `(tanh + 1) / 2`.
    ScaledTanh,
}

#[derive(Debug)]
pub struct UNet {
    levels: usize,
    encoder: Vec<Conv2d>,
    decoder: Vec<ConvTranspose2d>,
    attention: BTreeMap<usize, DualAttention>,
    head: Option<Conv2d>,
    activation: OutputActivation,
}

impl UNet {
    pub fn new(
        store: &mut ParamStore,
        cfg: &NetConfig,
        in_ch: usize,
        out_ch: usize,
        activation: OutputActivation,
        head: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        let levels = cfg.effective_levels();
        let mut encoder = Vec::with_capacity(levels);
        let mut prev = in_ch;
        for i in 0..levels {
            encoder.push(Conv2d::new(
                store,
                &format!("enc{i}"),
                prev,
                cfg.channels(i),
                4,
                2,
                1,
            )?);
            prev = cfg.channels(i);
        }
        let mut decoder = Vec::with_capacity(levels);
        let mut attention = BTreeMap::new();
        for j in 0..levels {
            let input = if j == 0 {
                cfg.channels(levels - 1)
            } else {
                2 * cfg.channels(levels - 1 - j)
            };
            let output = if j + 1 == levels {
                if head {
                    cfg.channels(0)
                } else {
                    out_ch
                }
            } else {
                cfg.channels(levels - 2 - j)
            };
            decoder.push(ConvTranspose2d::new(
                store,
                &format!("dec{j}"),
                input,
                output,
                4,
                2,
                1,
            )?);
            if cfg.attention_decoder_levels.contains(&j) {
                attention.insert(
                    j,
                    DualAttention::new(store, &format!("attn{j}"), output, cfg.attention_cap)?,
                );
            }
        }
        let head = if head {
            Some(Conv2d::new(
                store,
                "head",
                cfg.channels(0),
                out_ch,
                3,
                1,
                1,
            )?)
        } else {
            None
        };
        Ok(Self {
            levels,
            encoder,
            decoder,
            attention,
            head,
            activation,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Runs the network; `hook(j, f)` may replace decoder level `j`'s output
    /// before it feeds the next level or the output head.
    pub fn forward_with(
        &self,
        x: &Tensor,
        mut hook: impl FnMut(usize, Tensor) -> Result<Tensor>,
    ) -> Result<Tensor> {
        let mut skips = Vec::with_capacity(self.levels);
        let mut h = x.clone();
        for conv in &self.encoder {
            h = leaky_relu(&conv.forward(&h)?)?;
            skips.push(h.clone());
        }
        skips.pop();
        for (j, deconv) in self.decoder.iter().enumerate() {
            if j > 0 {
                let skip = skips.pop().expect("one skip per inner level");
                h = Tensor::cat(&[&h, &skip], 1)?;
            }
            h = deconv.forward(&h)?;
            let output = j + 1 == self.levels && self.head.is_none();
            h = if output {
                self.activate(&h)?
            } else {
                h.relu()?
            };
            if let Some(attn) = self.attention.get(&j) {
                h = attn.forward(&h)?;
            }
            h = hook(j, h)?;
        }
        match &self.head {
            Some(conv) => self.activate(&conv.forward(&h)?),
            None => Ok(h),
        }
    }

    fn activate(&self, h: &Tensor) -> Result<Tensor> {
        Ok(match self.activation {
            OutputActivation::Sigmoid => candle_nn::ops::sigmoid(h)?,
            OutputActivation::ScaledTanh => ((h.tanh()? + 1.0)? * 0.5)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_with(x, |_, f| Ok(f))
    }

    pub fn attention_blocks(&self) -> impl Iterator<Item = (&usize, &DualAttention)> {
        self.attention.iter()
    }
}

/// Nearest-neighbor resampling of a `B×1×H×W` matte to `h×w`, picking source
/// index `⌊i·H/h⌋` along each axis.
pub fn downsample_nearest(matte: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let (_, _, mh, mw) = matte.dims4()?;
    if (mh, mw) == (h, w) {
        return Ok(matte.clone());
    }
    if h > mh || w > mw {
        return Err(Error::InvalidInput(format!(
            "cannot downsample {mh}×{mw} matte to {h}×{w}"
        )));
    }
    let dev = matte.device();
    let rows: Vec<u32> = (0..h).map(|i| (i * mh / h) as u32).collect();
    let cols: Vec<u32> = (0..w).map(|i| (i * mw / w) as u32).collect();
    let rows = Tensor::from_vec(rows, h, dev)?;
    let cols = Tensor::from_vec(cols, w, dev)?;
    Ok(matte.index_select(&rows, 2)?.index_select(&cols, 3)?)
}

/// Matte-guided convex combination `F = Fʰ·M + Fᴮᴳ·(1−M)` with the matte
/// nearest-downsampled to the feature resolution.
pub fn blend_features(f_hair: &Tensor, f_bg: &Tensor, matte: &Tensor) -> Result<Tensor> {
    if f_hair.dims() != f_bg.dims() {
        return Err(Error::InvalidInput(format!(
            "blend of mismatched features {:?} and {:?}",
            f_hair.dims(),
            f_bg.dims()
        )));
    }
    let (b, _, h, w) = f_hair.dims4()?;
    if matte.dim(0)? != b || matte.dim(1)? != 1 {
        return Err(Error::InvalidInput(format!(
            "matte of shape {:?} does not fit a batch of {b}",
            matte.dims()
        )));
    }
    let m = downsample_nearest(matte, h, w)?.to_dtype(f_hair.dtype())?;
    let inv = m.affine(-1.0, 1.0)?;
    Ok((f_hair.broadcast_mul(&m)? + f_bg.broadcast_mul(&inv)?)?)
}

/// Sketch-to-matte generator.
#[derive(Debug)]
pub struct S2MNet {
    pub config: NetConfig,
    pub params: ParamStore,
    unet: UNet,
}

impl S2MNet {
    pub fn new(config: NetConfig, seed: u64, dtype: DType) -> Result<Self> {
        let mut params = ParamStore::new(seed, dtype);
        let unet = UNet::new(&mut params, &config, 1, 1, OutputActivation::Sigmoid, false)?;
        Ok(Self {
            config,
            params,
            unet,
        })
    }

    pub fn unet(&self) -> &UNet {
        &self.unet
    }

    /// `B×1×H×W` sketch map to `B×1×H×W` matte.
    pub fn forward(&self, sketch_mono: &Tensor) -> Result<Tensor> {
        self.unet.forward(sketch_mono)
    }

    pub fn to_checkpoint(&self, step: u64) -> Checkpoint {
        let mut ck = Checkpoint::new(CheckpointKind::S2m, self.config.clone(), step);
        ck.insert_all("gen", self.params.tensors());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != CheckpointKind::S2m {
            return Err(Error::Checkpoint(format!(
                "expected an s2m checkpoint, got {}",
                ck.kind.as_str()
            )));
        }
        let dtype = ck
            .tensors
            .values()
            .next()
            .map(|t| t.dtype())
            .unwrap_or(DType::F32);
        let net = Self::new(ck.config.clone(), 0, dtype)?;
        net.params.load(&ck.section("gen"))?;
        Ok(net)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    pub fn s2m_forward(&self, sketch_mono: &SketchMapMono) -> Result<Matte> {
        check_input(sketch_mono.dims(), &self.config)?;
        let x = planes_to_tensor(&[sketch_mono], self.params.dtype(), &Device::Cpu)?;
        let y = self.forward(&x)?;
        Ok(Matte::from_plane_clamped(tensor_to_plane(&y, 0)?))
    }
}

/// Sketch-to-image generator with a background branch.
#[derive(Debug)]
pub struct S2INet {
    pub config: NetConfig,
    pub params: ParamStore,
    unet: UNet,
    background: Vec<Conv2d>,
}

impl S2INet {
    pub fn new(config: NetConfig, seed: u64, dtype: DType) -> Result<Self> {
        let mut params = ParamStore::new(seed, dtype);
        let unet = UNet::new(
            &mut params,
            &config,
            4,
            3,
            OutputActivation::ScaledTanh,
            true,
        )?;
        let mut background = vec![Conv2d::new(
            &mut params,
            "bg0",
            3,
            config.channels(0),
            3,
            1,
            1,
        )?];
        let mut prev = config.channels(0);
        for i in 1..config.blend_levels {
            let out = config.channels(i - 1);
            background.push(Conv2d::new(
                &mut params,
                &format!("bg{i}"),
                prev,
                out,
                4,
                2,
                1,
            )?);
            prev = out;
        }
        Ok(Self {
            config,
            params,
            unet,
            background,
        })
    }

    pub fn unet(&self) -> &UNet {
        &self.unet
    }

    /// Background features, finest first, at resolutions `H, H/2, H/4, …`.
    pub fn background_features(&self, background: &Tensor) -> Result<Vec<Tensor>> {
        let mut feats = Vec::with_capacity(self.background.len());
        let mut h = background.clone();
        for conv in &self.background {
            h = leaky_relu(&conv.forward(&h)?)?;
            feats.push(h.clone());
        }
        Ok(feats)
    }

    /// Runs the generator, reporting every blended level's inputs and output
    /// as `(level, hair, background, blended)` to `observe`.
    pub fn forward_observed(
        &self,
        sketch_color: &Tensor,
        matte: &Tensor,
        background: &Tensor,
        mut observe: impl FnMut(usize, &Tensor, &Tensor, &Tensor),
    ) -> Result<Tensor> {
        let levels = self.unet.levels();
        let first_blend = levels - self.config.blend_levels;
        let bg_feats = self.background_features(background)?;
        let x = Tensor::cat(&[sketch_color, &matte.to_dtype(sketch_color.dtype())?], 1)?;
        self.unet.forward_with(&x, |j, f| {
            if j < first_blend {
                return Ok(f);
            }
            let bg = &bg_feats[levels - 1 - j];
            let out = blend_features(&f, bg, matte)?;
            observe(j, &f, bg, &out);
            Ok(out)
        })
    }

    /// `B×3` color sketch, `B×1` matte and `B×3` noise-filled background to a `B×3` image.
    pub fn forward(
        &self,
        sketch_color: &Tensor,
        matte: &Tensor,
        background: &Tensor,
    ) -> Result<Tensor> {
        self.forward_observed(sketch_color, matte, background, |_, _, _, _| {})
    }

    pub fn to_checkpoint(&self, kind: CheckpointKind, step: u64) -> Result<Checkpoint> {
        if !kind.is_s2i() {
            return Err(Error::Checkpoint(
                "image generator needs an s2i kind".into(),
            ));
        }
        let mut ck = Checkpoint::new(kind, self.config.clone(), step);
        ck.insert_all("gen", self.params.tensors());
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if !ck.kind.is_s2i() {
            return Err(Error::Checkpoint(format!(
                "expected an s2i checkpoint, got {}",
                ck.kind.as_str()
            )));
        }
        let dtype = ck
            .tensors
            .values()
            .next()
            .map(|t| t.dtype())
            .unwrap_or(DType::F32);
        let net = Self::new(ck.config.clone(), 0, dtype)?;
        net.params.load(&ck.section("gen"))?;
        Ok(net)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<(Self, CheckpointKind)> {
        let ck = Checkpoint::load(path)?;
        Ok((Self::from_checkpoint(&ck)?, ck.kind))
    }

    /// `background` must already carry noise in the hair region, see
    /// [`crate::data::noisy_background`].
    pub fn s2i_forward(
        &self,
        sketch_color: &SketchMapColor,
        matte: &Matte,
        background: &HairImage,
    ) -> Result<HairImage> {
        check_input(sketch_color.dims(), &self.config)?;
        check_input(matte.dims(), &self.config)?;
        check_input(background.dims(), &self.config)?;
        let dtype = self.params.dtype();
        let dev = Device::Cpu;
        let s = images_to_tensor(&[sketch_color], dtype, &dev)?;
        let m = planes_to_tensor(&[matte.plane()], dtype, &dev)?;
        let bg = images_to_tensor(&[background], dtype, &dev)?;
        let y = self.forward(&s, &m, &bg)?;
        Ok(tensor_to_image(&y, 0)?.map(|p| p.map(|v| v.clamp(0.0, 1.0))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Grid;

    fn values(t: &Tensor) -> Vec<f32> {
        t.flatten_all().unwrap().to_vec1::<f32>().unwrap()
    }

    #[test]
    fn s2m_output_shape_and_range() {
        let net = S2MNet::new(NetConfig::small(64, 4), 0, DType::F32).unwrap();
        let matte = net.s2m_forward(&Grid::new(64, 64, 0.0)).unwrap();
        assert_eq!(matte.dims(), (64, 64));
        assert!(matte
            .plane()
            .data()
            .iter()
            .all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
        assert!(net.s2m_forward(&Grid::new(32, 32, 0.0)).is_err());
    }

    #[test]
    fn s2i_output_shape_and_range() {
        let net = S2INet::new(NetConfig::small(64, 4), 0, DType::F32).unwrap();
        let img = Grid::new(64, 64, [0.2f32, 0.4, 0.6]);
        let out = net.s2i_forward(&img, &Matte::zeros(64, 64), &img).unwrap();
        assert_eq!(out.dims(), (64, 64));
        assert!(out.data().iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn zero_matte_returns_background_features_at_every_blend_level() {
        let net = S2INet::new(NetConfig::small(64, 4), 1, DType::F32).unwrap();
        let dev = Device::Cpu;
        let s = Tensor::rand(0f32, 1.0, (1, 3, 64, 64), &dev).unwrap();
        let bg = Tensor::rand(0f32, 1.0, (1, 3, 64, 64), &dev).unwrap();
        let m = Tensor::zeros((1, 1, 64, 64), DType::F32, &dev).unwrap();
        let mut seen = Vec::new();
        let out = net
            .forward_observed(&s, &m, &bg, |j, _, f_bg, blended| {
                assert_eq!(values(f_bg), values(blended));
                seen.push(j);
            })
            .unwrap();
        assert_eq!(seen, vec![2, 3, 4, 5]);
        assert_eq!(out.dims(), &[1, 3, 64, 64]);
    }

    #[test]
    fn nearest_downsampling_keeps_matte_values() {
        let dev = Device::Cpu;
        let m = Tensor::rand(0f32, 1.0, (1, 1, 16, 16), &dev).unwrap();
        let d = downsample_nearest(&m, 4, 4).unwrap();
        let src = values(&m);
        let got = values(&d);
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(got[y * 4 + x], src[(y * 4) * 16 + x * 4]);
            }
        }
    }

    #[test]
    fn blend_is_exact_and_linear_in_the_matte() {
        let dev = Device::Cpu;
        let fh = Tensor::randn(0f32, 1.0, (2, 5, 8, 8), &dev).unwrap();
        let fb = Tensor::randn(0f32, 1.0, (2, 5, 8, 8), &dev).unwrap();
        let ones = Tensor::ones((2, 1, 32, 32), DType::F32, &dev).unwrap();
        assert_eq!(
            values(&blend_features(&fh, &fb, &ones).unwrap()),
            values(&fh)
        );
        let zeros = ones.zeros_like().unwrap();
        assert_eq!(
            values(&blend_features(&fh, &fb, &zeros).unwrap()),
            values(&fb)
        );
        let two = (fh.ones_like().unwrap() * 2.0).unwrap();
        let four = (fh.ones_like().unwrap() * 4.0).unwrap();
        let half = (ones * 0.5).unwrap();
        assert!(values(&blend_features(&two, &four, &half).unwrap())
            .iter()
            .all(|v| *v == 3.0));
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s2m.safetensors");
        let net = S2MNet::new(NetConfig::small(64, 4), 9, DType::F32).unwrap();
        net.to_checkpoint(3).save(&path).unwrap();
        let back = S2MNet::load(&path).unwrap();
        let x = Tensor::rand(0f32, 1.0, (1, 1, 64, 64), &Device::Cpu).unwrap();
        let a = values(&net.forward(&x).unwrap());
        let b = values(&back.forward(&x).unwrap());
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        assert!(S2INet::load(&path).is_err());
    }

    /// Moves the parameters away from the near-zero initialization so that
    /// activations are O(1) and the attention branches are active.
    fn excite(params: &ParamStore) {
        for (name, var) in params.iter() {
            let t = if name.ends_with("gamma") || name.ends_with("beta") {
                (var.as_tensor().ones_like().unwrap() * 0.3).unwrap()
            } else {
                (var.as_tensor() * 10.0).unwrap()
            };
            var.set(&t).unwrap();
        }
    }

    fn scalar(t: &Tensor) -> f64 {
        t.to_scalar::<f64>().unwrap()
    }

    fn relative_ok(fd: f64, an: f64) -> bool {
        (fd - an).abs() <= 1e-3 * fd.abs().max(an.abs()).max(1e-9)
    }

    #[test]
    fn s2m_input_gradient_matches_finite_differences() {
        let net = S2MNet::new(NetConfig::small(64, 4), 4, DType::F64).unwrap();
        excite(&net.params);
        let dev = Device::Cpu;
        let x0 = Tensor::rand(0f64, 1.0, (1, 1, 64, 64), &dev).unwrap();
        let var = candle_core::Var::from_tensor(&x0).unwrap();
        let f = |x: &Tensor| net.forward(x).unwrap().mean_all().unwrap();
        let grads = f(var.as_tensor()).backward().unwrap();
        let g = grads
            .get(var.as_tensor())
            .unwrap()
            .flatten_all()
            .unwrap()
            .to_vec1::<f64>()
            .unwrap();
        let base = x0.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let eps = 1e-6;
        for idx in [64 * 20 + 17, 64 * 33 + 40, 64 * 50 + 5] {
            let bump = |delta: f64| {
                let mut v = base.clone();
                v[idx] += delta;
                scalar(&f(&Tensor::from_vec(v, (1, 1, 64, 64), &dev).unwrap()))
            };
            let fd = (bump(eps) - bump(-eps)) / (2.0 * eps);
            assert!(relative_ok(fd, g[idx]), "{fd} vs {}", g[idx]);
        }
    }

    #[test]
    fn s2i_parameter_gradient_matches_finite_differences() {
        let net = S2INet::new(NetConfig::small(64, 4), 5, DType::F64).unwrap();
        excite(&net.params);
        let dev = Device::Cpu;
        let s = Tensor::rand(0f64, 1.0, (1, 3, 64, 64), &dev).unwrap();
        let m = Tensor::rand(0f64, 1.0, (1, 1, 64, 64), &dev).unwrap();
        let bg = Tensor::rand(0f64, 1.0, (1, 3, 64, 64), &dev).unwrap();
        let target = Tensor::rand(0f64, 1.0, (1, 3, 64, 64), &dev).unwrap();
        let loss = || {
            let y = net.forward(&s, &m, &bg).unwrap();
            (y - &target).unwrap().sqr().unwrap().mean_all().unwrap()
        };
        let grads = loss().backward().unwrap();
        let names: Vec<String> = net.params.iter().map(|(k, _)| k.clone()).collect();
        let mut checked = 0;
        for name in &names {
            let var = net.params.get(name).unwrap().clone();
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            let g = g.flatten_all().unwrap().to_vec1::<f64>().unwrap();
            let base = var
                .as_tensor()
                .flatten_all()
                .unwrap()
                .to_vec1::<f64>()
                .unwrap();
            let idx = (0..g.len())
                .max_by(|&a, &b| g[a].abs().total_cmp(&g[b].abs()))
                .unwrap();
            if g[idx].abs() < 1e-6 {
                continue;
            }
            let eps = 1e-6;
            let eval = |delta: f64| {
                let mut v = base.clone();
                v[idx] += delta;
                var.set(&Tensor::from_vec(v, var.shape(), &dev).unwrap())
                    .unwrap();
                scalar(&loss())
            };
            let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
            var.set(&Tensor::from_vec(base, var.shape(), &dev).unwrap())
                .unwrap();
            assert!(relative_ok(fd, g[idx]), "{name}[{idx}]: {fd} vs {}", g[idx]);
            checked += 1;
            if checked == 10 {
                break;
            }
        }
        assert_eq!(checked, 10);
    }

    #[test]
    fn blend_rejects_mismatched_shapes() {
        let dev = Device::Cpu;
        let a = Tensor::zeros((1, 2, 4, 4), DType::F32, &dev).unwrap();
        let b = Tensor::zeros((1, 3, 4, 4), DType::F32, &dev).unwrap();
        let m = Tensor::zeros((1, 1, 8, 8), DType::F32, &dev).unwrap();
        assert!(blend_features(&a, &b, &m).is_err());
    }
}
