//! Generators, discriminator and their building blocks.

pub mod adam;
pub mod attention;
pub mod checkpoint;
pub mod discriminator;
pub mod generator;
pub mod layers;

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Grid, Plane, RgbImage};

pub use adam::{Adam, AdamConfig};
pub use attention::DualAttention;
pub use candle_core::DType;
pub use checkpoint::{Checkpoint, CheckpointKind};
pub use discriminator::PatchDiscriminator;
pub use generator::{blend_features, downsample_nearest, OutputActivation, S2INet, S2MNet, UNet};
pub use layers::ParamStore;

/// Architecture hyper-parameters shared by all networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub image_size: usize,
    pub base_channels: usize,
    /// Requested encoder depth; capped at `log2(image_size)`.
    pub levels: usize,
    pub attention_decoder_levels: Vec<usize>,
    /// Number of final decoder levels blended with background features.
    pub blend_levels: usize,
    pub patch_disc_layers: usize,
    /// Largest `h·w` an attention block accepts.
    pub attention_cap: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            image_size: 512,
            base_channels: 16,
            levels: 7,
            attention_decoder_levels: vec![0, 1, 2],
            blend_levels: 4,
            patch_disc_layers: 3,
            attention_cap: 64 * 64,
        }
    }
}

impl NetConfig {
    /// Small configuration for tests and smoke training.
    pub fn small(image_size: usize, base_channels: usize) -> Self {
        Self {
            image_size,
            base_channels,
            ..Self::default()
        }
    }

    pub fn effective_levels(&self) -> usize {
        let log2 = self.image_size.max(1).trailing_zeros() as usize;
        self.levels.min(log2)
    }

    /// Encoder channel width at level `i`.
    pub fn channels(&self, i: usize) -> usize {
        self.base_channels * (1usize << i.min(3))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.image_size.is_power_of_two() || self.image_size < 64 {
            return Err(Error::InvalidInput(format!(
                "image size {} must be a power of two ≥ 64",
                self.image_size
            )));
        }
        if self.base_channels == 0 {
            return Err(Error::InvalidInput("base_channels must be positive".into()));
        }
        let levels = self.effective_levels();
        if levels < self.blend_levels || self.blend_levels < 1 {
            return Err(Error::InvalidInput(format!(
                "{} blend levels need at least as many decoder levels, got {levels}",
                self.blend_levels
            )));
        }
        if let Some(&l) = self
            .attention_decoder_levels
            .iter()
            .find(|&&l| l + 1 >= levels)
        {
            return Err(Error::InvalidInput(format!(
                "attention level {l} is not an inner decoder level"
            )));
        }
        Ok(())
    }
}

/// Checks that a map is square with the configured size.
pub(crate) fn check_input(dims: (usize, usize), cfg: &NetConfig) -> Result<()> {
    let (h, w) = dims;
    if h != w || !h.is_power_of_two() {
        return Err(Error::InvalidInput(format!(
            "network input {h}×{w} must be square with a power-of-two side"
        )));
    }
    if h != cfg.image_size {
        return Err(Error::DimensionMismatch {
            expected: (cfg.image_size, cfg.image_size),
            actual: dims,
        });
    }
    Ok(())
}

/// Stacks planes into a `B×1×H×W` tensor.
pub fn planes_to_tensor(planes: &[&Plane], dtype: DType, dev: &Device) -> Result<Tensor> {
    let (h, w) = planes[0].dims();
    let mut data = Vec::with_capacity(planes.len() * h * w);
    for p in planes {
        p.ensure_dims((h, w))?;
        data.extend_from_slice(p.data());
    }
    Ok(Tensor::from_vec(data, (planes.len(), 1, h, w), dev)?.to_dtype(dtype)?)
}

/// Stacks RGB images into a `B×3×H×W` tensor.
pub fn images_to_tensor(images: &[&RgbImage], dtype: DType, dev: &Device) -> Result<Tensor> {
    let (h, w) = images[0].dims();
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        img.ensure_dims((h, w))?;
        for c in 0..3 {
            data.extend(img.data().iter().map(|p| p[c]));
        }
    }
    Ok(Tensor::from_vec(data, (images.len(), 3, h, w), dev)?.to_dtype(dtype)?)
}

/// Sample `b` of a `B×1×H×W` tensor.
pub fn tensor_to_plane(t: &Tensor, b: usize) -> Result<Plane> {
    let (_, c, h, w) = t.dims4()?;
    if c != 1 {
        return Err(Error::InvalidInput(format!("expected 1 channel, got {c}")));
    }
    let data = t
        .get(b)?
        .to_dtype(DType::F32)?
        .flatten_all()?
        .to_vec1::<f32>()?;
    Grid::from_vec(h, w, data)
}

/// Sample `b` of a `B×3×H×W` tensor.
pub fn tensor_to_image(t: &Tensor, b: usize) -> Result<RgbImage> {
    let (_, c, h, w) = t.dims4()?;
    if c != 3 {
        return Err(Error::InvalidInput(format!("expected 3 channels, got {c}")));
    }
    let data = t
        .get(b)?
        .to_dtype(DType::F32)?
        .flatten_all()?
        .to_vec1::<f32>()?;
    let n = h * w;
    Grid::from_vec(
        h,
        w,
        (0..n)
            .map(|i| [data[i], data[n + i], data[2 * n + i]])
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_are_capped_by_resolution() {
        assert_eq!(NetConfig::default().effective_levels(), 7);
        assert_eq!(NetConfig::small(64, 8).effective_levels(), 6);
        assert_eq!(NetConfig::default().channels(0), 16);
        assert_eq!(NetConfig::default().channels(6), 128);
    }

    #[test]
    fn config_validation() {
        assert!(NetConfig::default().validate().is_ok());
        assert!(NetConfig::small(96, 8).validate().is_err());
        assert!(NetConfig::small(32, 8).validate().is_err());
        let mut cfg = NetConfig::small(64, 4);
        cfg.attention_decoder_levels = vec![5];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn tensor_round_trip() {
        let dev = Device::Cpu;
        let img = Grid::from_fn(4, 4, |y, x| [y as f32, x as f32, 0.5]);
        let t = images_to_tensor(&[&img, &img], DType::F32, &dev).unwrap();
        assert_eq!(t.dims(), &[2, 3, 4, 4]);
        assert_eq!(tensor_to_image(&t, 1).unwrap(), img);
        let p = Grid::from_fn(4, 4, |y, x| (y * 4 + x) as f32);
        let t = planes_to_tensor(&[&p], DType::F64, &dev).unwrap();
        assert_eq!(tensor_to_plane(&t, 0).unwrap(), p);
    }
}
