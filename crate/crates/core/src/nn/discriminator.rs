//! Fully convolutional patch discriminator.

use candle_core::{DType, Tensor};

use super::layers::{leaky_relu, Conv2d, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug)]
pub struct PatchDiscriminator {
    pub params: ParamStore,
    layers: Vec<Conv2d>,
    in_channels: usize,
}

impl PatchDiscriminator {
    /// `n_layers` stride-2 stages followed by two stride-1 stages.
    pub fn new(
        in_channels: usize,
        base: usize,
        n_layers: usize,
        seed: u64,
        dtype: DType,
    ) -> Result<Self> {
        if n_layers == 0 || base == 0 {
            return Err(Error::InvalidInput(
                "discriminator needs layers and channels".into(),
            ));
        }
        let mut params = ParamStore::new(seed, dtype);
        let width = |i: usize| base * (1usize << i.min(3));
        let mut layers = Vec::with_capacity(n_layers + 2);
        let mut prev = in_channels;
        for i in 0..n_layers {
            layers.push(Conv2d::new(
                &mut params,
                &format!("conv{i}"),
                prev,
                width(i),
                4,
                2,
                1,
            )?);
            prev = width(i);
        }
        layers.push(Conv2d::new(
            &mut params,
            &format!("conv{n_layers}"),
            prev,
            width(n_layers),
            4,
            1,
            1,
        )?);
        layers.push(Conv2d::new(
            &mut params,
            "logits",
            width(n_layers),
            1,
            4,
            1,
            1,
        )?);
        Ok(Self {
            params,
            layers,
            in_channels,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    /// Side of the logit grid for a square input of side `size`.
    pub fn grid_size(&self, size: usize) -> usize {
        let strided = self.layers.len() - 2;
        let mut s = size;
        for _ in 0..strided {
            s /= 2;
        }
        s.saturating_sub(2)
    }

    /// `B×C×H×W` input to `B×1×h′×w′` patch logits.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.dim(1)? != self.in_channels {
            return Err(Error::InvalidInput(format!(
                "discriminator expects {} channels, got {}",
                self.in_channels,
                x.dim(1)?
            )));
        }
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, conv) in self.layers.iter().enumerate() {
            h = conv.forward(&h)?;
            if i < last {
                h = leaky_relu(&h)?;
            }
        }
        Ok(h)
    }
}
