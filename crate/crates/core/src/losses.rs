//! Training objectives for both generators.

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BLUR_KERNEL_SIZE: usize = 10;
pub const BLUR_SIGMA: f64 = 10.0;

/// λ1 (L1), λ2 (adversarial), λ3 (perceptual), λ4 (shape).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub l1: f64,
    pub adv: f64,
    pub per: f64,
    pub shape: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            l1: 100.0,
            adv: 1.0,
            per: 100.0,
            shape: 100.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanMode {
    /// Non-saturating binary cross-entropy on logits.
    #[default]
    CrossEntropy,
    LeastSquares,
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::InvalidInput(format!(
            "loss operands differ in shape: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// Mean absolute difference; the gradient at zero difference is zero.
pub fn l1_loss(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b)?;
    let d = (a - b)?;
    let sign = d.sign()?.detach();
    Ok((d * sign)?.mean_all()?)
}

/// `log(1 + eˣ)`, split into one-sided pieces so the value is stable for
/// large `|x|` and the gradient at 0 is exactly 1/2.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    let neg = x.minimum(0.0)?;
    let pos = x.maximum(0.0)?;
    let a = (neg.exp()? + 1.0)?.log()?;
    let b = (pos.neg()?.exp()? + 1.0)?.log()?;
    Ok((((a + pos)? + b)? - std::f64::consts::LN_2)?)
}

fn mean_softplus(x: &Tensor) -> Result<Tensor> {
    Ok(softplus(x)?.mean_all()?)
}

/// `(generator, discriminator)` losses from patch logits.
pub fn adversarial_losses(real: &Tensor, fake: &Tensor, mode: GanMode) -> Result<(Tensor, Tensor)> {
    match mode {
        GanMode::CrossEntropy => {
            let gen = mean_softplus(&fake.neg()?)?;
            let disc = (mean_softplus(&real.neg()?)? + mean_softplus(fake)?)?;
            Ok((gen, disc))
        }
        GanMode::LeastSquares => {
            let gen = (fake - 1.0)?.sqr()?.mean_all()?;
            let disc = ((real - 1.0)?.sqr()?.mean_all()? + fake.sqr()?.mean_all()?)?;
            Ok((gen, disc))
        }
    }
}

/// Generator term only.
pub fn generator_adversarial(fake: &Tensor, mode: GanMode) -> Result<Tensor> {
    match mode {
        GanMode::CrossEntropy => mean_softplus(&fake.neg()?),
        GanMode::LeastSquares => Ok((fake - 1.0)?.sqr()?.mean_all()?),
    }
}

/// Normalized 1D Gaussian taps centred between the middle taps for even sizes.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// `n×n` matrix of a replicate-padded 1D convolution; output `i` reads
/// inputs `i − size/2 ..= i + (size − 1)/2` (the heavier pad comes first).
pub fn blur_matrix(n: usize, size: usize, sigma: f64) -> Vec<f64> {
    let taps = gaussian_kernel(size, sigma);
    let before = size / 2;
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for (k, t) in taps.iter().enumerate() {
            let j = (i + k).saturating_sub(before).min(n - 1);
            m[i * n + j] += t;
        }
    }
    m
}

/// Separable Gaussian blur of a `B×C×H×W` tensor with replicate borders.
pub fn gaussian_blur(x: &Tensor, size: usize, sigma: f64) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    let dev = x.device();
    let rows = Tensor::from_vec(blur_matrix(h, size, sigma), (h, h), dev)?.to_dtype(x.dtype())?;
    let cols = Tensor::from_vec(blur_matrix(w, size, sigma), (w, w), dev)?.to_dtype(x.dtype())?;
    let horiz = x.broadcast_matmul(&cols.t()?)?;
    Ok(rows.broadcast_matmul(&horiz)?)
}

/// L1 between matte-masked blurred prediction and target.
pub fn shape_loss(pred: &Tensor, truth: &Tensor, matte: &Tensor) -> Result<Tensor> {
    same_shape(pred, truth)?;
    let m = matte.to_dtype(pred.dtype())?;
    let gp = gaussian_blur(pred, BLUR_KERNEL_SIZE, BLUR_SIGMA)?.broadcast_mul(&m)?;
    let gt = gaussian_blur(truth, BLUR_KERNEL_SIZE, BLUR_SIGMA)?.broadcast_mul(&m)?;
    l1_loss(&gp, &gt)
}

/// Multi-layer image features for the perceptual loss.
pub trait FeatureExtractor: Send + Sync {
    fn features(&self, x: &Tensor) -> Result<Vec<Tensor>>;
}

/// Fixed random strided convolution stack.
#[derive(Clone, Debug)]
pub struct RandomConvExtractor {
    layers: Vec<(Tensor, Tensor)>,
}

impl RandomConvExtractor {
    pub const CHANNELS: [usize; 5] = [8, 16, 32, 32, 32];

    pub fn new(seed: u64, dtype: DType) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prev = 3;
        let mut layers = Vec::new();
        for &out in &Self::CHANNELS {
            let std = (2.0 / (9 * prev) as f64).sqrt();
            let dist = Normal::new(0.0, std).expect("finite std");
            let n = out * prev * 9;
            let w: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..out).map(|_| dist.sample(&mut rng) * 0.1).collect();
            layers.push((
                Tensor::from_vec(w, (out, prev, 3, 3), &Device::Cpu)?.to_dtype(dtype)?,
                Tensor::from_vec(b, (1, out, 1, 1), &Device::Cpu)?.to_dtype(dtype)?,
            ));
            prev = out;
        }
        Ok(Self { layers })
    }
}

impl FeatureExtractor for RandomConvExtractor {
    fn features(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut h = x.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for (w, b) in &self.layers {
            h = h
                .conv2d(&w.to_dtype(h.dtype())?, 1, 2, 1, 1)?
                .broadcast_add(&b.to_dtype(h.dtype())?)?
                .relu()?;
            out.push(h.clone());
        }
        Ok(out)
    }
}

/// Sum over layers of the mean absolute feature difference.
pub fn perceptual_loss(
    pred: &Tensor,
    truth: &Tensor,
    extractor: &dyn FeatureExtractor,
) -> Result<Tensor> {
    same_shape(pred, truth)?;
    let fp = extractor.features(pred)?;
    let ft = extractor.features(truth)?;
    let mut total = Tensor::zeros((), pred.dtype(), pred.device())?;
    for (a, b) in fp.iter().zip(&ft) {
        total = (total + l1_loss(a, &b.detach())?)?;
    }
    Ok(total)
}

/// One training log record.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l1: f64,
    pub adv_g: f64,
    pub adv_d: f64,
    pub per: f64,
    pub shape: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Names the first non-finite term.
    pub fn check_finite(&self) -> Result<()> {
        let terms = [
            ("l1", self.l1),
            ("adv_g", self.adv_g),
            ("adv_d", self.adv_d),
            ("per", self.per),
            ("shape", self.shape),
            ("total", self.total),
        ];
        match terms.iter().find(|(_, v)| !v.is_finite()) {
            Some((name, _)) => Err(Error::NonFiniteLoss(name)),
            None => Ok(()),
        }
    }
}

/// Generator loss components before weighting.
#[derive(Clone, Debug)]
pub struct GeneratorTerms {
    pub l1: Tensor,
    pub adv_g: Tensor,
    pub per: Option<Tensor>,
    pub shape: Option<Tensor>,
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

impl GeneratorTerms {
    pub fn total(&self, w: &LossWeights) -> Result<Tensor> {
        let mut t = ((&self.l1 * w.l1)? + (&self.adv_g * w.adv)?)?;
        if let Some(p) = &self.per {
            t = (t + (p * w.per)?)?;
        }
        if let Some(s) = &self.shape {
            t = (t + (s * w.shape)?)?;
        }
        Ok(t)
    }

    pub fn breakdown(&self, w: &LossWeights, adv_d: f64) -> Result<LossBreakdown> {
        let opt = |t: &Option<Tensor>| t.as_ref().map(scalar).transpose().map(|v| v.unwrap_or(0.0));
        Ok(LossBreakdown {
            l1: scalar(&self.l1)?,
            adv_g: scalar(&self.adv_g)?,
            adv_d,
            per: opt(&self.per)?,
            shape: opt(&self.shape)?,
            total: scalar(&self.total(w)?)?,
        })
    }
}

/// λ1·L1 + λ2·adv for the matte generator.
pub fn total_s2m_loss(
    fake: &Tensor,
    truth: &Tensor,
    disc_fake: &Tensor,
    weights: &LossWeights,
    mode: GanMode,
) -> Result<(Tensor, GeneratorTerms)> {
    let terms = GeneratorTerms {
        l1: l1_loss(fake, truth)?,
        adv_g: generator_adversarial(disc_fake, mode)?,
        per: None,
        shape: None,
    };
    Ok((terms.total(weights)?, terms))
}

/// λ1·L1 + λ2·adv + λ3·perceptual + λ4·shape for the image generator.
#[allow(clippy::too_many_arguments)]
pub fn total_s2i_loss(
    fake: &Tensor,
    truth: &Tensor,
    matte: &Tensor,
    disc_fake: &Tensor,
    extractor: &dyn FeatureExtractor,
    weights: &LossWeights,
    mode: GanMode,
) -> Result<(Tensor, GeneratorTerms)> {
    let terms = GeneratorTerms {
        l1: l1_loss(fake, truth)?,
        adv_g: generator_adversarial(disc_fake, mode)?,
        per: Some(perceptual_loss(fake, truth, extractor)?),
        shape: Some(shape_loss(fake, truth, matte)?),
    };
    Ok((terms.total(weights)?, terms))
}
