//! Dual self-attention: position and channel affinities added residually.

use candle_core::{Tensor, D};

use super::layers::{Conv2d, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct DualAttention {
    query: Conv2d,
    key: Conv2d,
    value: Conv2d,
    /// Position-branch scale, zero at initialization.
    pub gamma: candle_core::Var,
    /// Channel-branch scale, zero at initialization.
    pub beta: candle_core::Var,
    cap: usize,
}

impl DualAttention {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, cap: usize) -> Result<Self> {
        let reduced = (channels / 8).max(1);
        Ok(Self {
            query: Conv2d::new(store, &format!("{name}.query"), channels, reduced, 1, 1, 0)?,
            key: Conv2d::new(store, &format!("{name}.key"), channels, reduced, 1, 1, 0)?,
            value: Conv2d::new(store, &format!("{name}.value"), channels, channels, 1, 1, 0)?,
            gamma: store.constant(format!("{name}.gamma"), &[1], 0.0)?,
            beta: store.constant(format!("{name}.beta"), &[1], 0.0)?,
            cap,
        })
    }

    /// Position branch output (before scaling).
    pub fn position(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = x.dims4()?;
        let n = h * w;
        let q = self.query.forward(x)?;
        let cq = q.dim(1)?;
        let q = q.reshape((b, cq, n))?.transpose(1, 2)?.contiguous()?;
        let k = self.key.forward(x)?.reshape((b, cq, n))?;
        let attn = candle_nn::ops::softmax(&q.matmul(&k)?, D::Minus1)?;
        let v = self.value.forward(x)?.reshape((b, c, n))?;
        Ok(v.matmul(&attn.transpose(1, 2)?.contiguous()?)?
            .reshape((b, c, h, w))?)
    }

    /// Channel branch output (before scaling).
    pub fn channel(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = x.dims4()?;
        let xf = x.reshape((b, c, h * w))?;
        let energy = xf.matmul(&xf.transpose(1, 2)?.contiguous()?)?;
        let shifted = energy.max_keepdim(D::Minus1)?.broadcast_sub(&energy)?;
        let attn = candle_nn::ops::softmax(&shifted, D::Minus1)?;
        Ok(attn.matmul(&xf)?.reshape((b, c, h, w))?)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, _, h, w) = x.dims4()?;
        if h * w > self.cap {
            return Err(Error::AttentionTooLarge {
                positions: h * w,
                cap: self.cap,
            });
        }
        let pos = self.position(x)?.broadcast_mul(self.gamma.as_tensor())?;
        let chan = self.channel(x)?.broadcast_mul(self.beta.as_tensor())?;
        Ok((x + (pos + chan)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    #[allow(clippy::too_many_arguments)]
    fn dense_oracle(
        x: &[f64],
        c: usize,
        n: usize,
        wq: &[f64],
        wk: &[f64],
        wv: &[f64],
        cq: usize,
        gamma: f64,
        beta: f64,
    ) -> Vec<f64> {
        let at = |ch: usize, p: usize| x[ch * n + p];
        let proj = |w: &[f64], out: usize| -> Vec<f64> {
            let mut r = vec![0.0; out * n];
            for o in 0..out {
                for p in 0..n {
                    r[o * n + p] = (0..c).map(|i| w[o * c + i] * at(i, p)).sum();
                }
            }
            r
        };
        let (q, k, v) = (proj(wq, cq), proj(wk, cq), proj(wv, c));
        let softmax = |row: &mut [f64]| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().map(|e| (e - m).exp()).sum();
            row.iter_mut().for_each(|e| *e = (*e - m).exp() / s);
        };
        let mut pos = vec![0.0; c * n];
        for i in 0..n {
            let mut row: Vec<f64> = (0..n)
                .map(|j| (0..cq).map(|a| q[a * n + i] * k[a * n + j]).sum())
                .collect();
            softmax(&mut row);
            for ch in 0..c {
                pos[ch * n + i] = (0..n).map(|j| v[ch * n + j] * row[j]).sum();
            }
        }
        let mut chan = vec![0.0; c * n];
        for i in 0..c {
            let energy: Vec<f64> = (0..c)
                .map(|j| (0..n).map(|p| at(i, p) * at(j, p)).sum())
                .collect();
            let m = energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut row: Vec<f64> = energy.iter().map(|e| m - e).collect();
            softmax(&mut row);
            for p in 0..n {
                chan[i * n + p] = (0..c).map(|j| row[j] * at(j, p)).sum();
            }
        }
        (0..c * n)
            .map(|i| x[i] + gamma * pos[i] + beta * chan[i])
            .collect()
    }

    fn flat(t: &Tensor) -> Vec<f64> {
        t.flatten_all().unwrap().to_vec1::<f64>().unwrap()
    }

    #[test]
    fn matches_dense_matrix_oracle() {
        let mut store = ParamStore::new(3, DType::F64);
        let attn = DualAttention::new(&mut store, "a", 4, 4096).unwrap();
        attn.gamma
            .set(&Tensor::new(&[0.7f64], &Device::Cpu).unwrap())
            .unwrap();
        attn.beta
            .set(&Tensor::new(&[-0.4f64], &Device::Cpu).unwrap())
            .unwrap();
        // Larger projections make the softmax rows non-trivial.
        for conv in [&attn.query, &attn.key, &attn.value] {
            let w = (conv.weight.as_tensor() * 40.0).unwrap();
            conv.weight.set(&w).unwrap();
        }
        let x = Tensor::randn(0f64, 1.0, (1, 4, 8, 8), &Device::Cpu).unwrap();
        let got = flat(&attn.forward(&x).unwrap());
        let want = dense_oracle(
            &flat(&x),
            4,
            64,
            &flat(attn.query.weight.as_tensor()),
            &flat(attn.key.weight.as_tensor()),
            &flat(attn.value.weight.as_tensor()),
            1,
            0.7,
            -0.4,
        );
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-10, "{g} vs {w}");
        }
    }

    #[test]
    fn identity_at_initialization() {
        let mut store = ParamStore::new(0, DType::F32);
        let attn = DualAttention::new(&mut store, "a", 16, 4096).unwrap();
        let x = Tensor::randn(0f32, 1.0, (2, 16, 8, 8), &Device::Cpu).unwrap();
        let y = attn.forward(&x).unwrap();
        let (a, b) = (
            x.flatten_all().unwrap().to_vec1::<f32>().unwrap(),
            y.flatten_all().unwrap().to_vec1::<f32>().unwrap(),
        );
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn constant_input_gives_uniform_position_affinity() {
        let mut store = ParamStore::new(1, DType::F64);
        let attn = DualAttention::new(&mut store, "a", 8, 4096).unwrap();
        let x = (Tensor::ones((1, 8, 4, 4), DType::F64, &Device::Cpu).unwrap() * 0.3).unwrap();
        let pos = flat(&attn.position(&x).unwrap());
        for ch in 0..8 {
            let plane = &pos[ch * 16..(ch + 1) * 16];
            assert!(plane.iter().all(|v| (v - plane[0]).abs() < 1e-12));
        }
    }

    #[test]
    fn rejects_large_maps() {
        let mut store = ParamStore::new(0, DType::F32);
        let attn = DualAttention::new(&mut store, "a", 4, 64).unwrap();
        let x = Tensor::zeros((1, 4, 16, 16), DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(
            attn.forward(&x),
            Err(Error::AttentionTooLarge {
                positions: 256,
                cap: 64
            })
        ));
    }
}
