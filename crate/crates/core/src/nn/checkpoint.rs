//! Single-file checkpoints: named tensors plus a JSON header.
//!
//! Tensors are stored in safetensors format; the header metadata carries the
//! format version, the network kind, the architecture config, the training
//! step and any extra string fields.

use candle_core::safetensors::Load;
use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::NetConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    S2m,
    S2iUnbraided,
    S2iBraided,
}

impl CheckpointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckpointKind::S2m => "s2m",
            CheckpointKind::S2iUnbraided => "s2i_unbraided",
            CheckpointKind::S2iBraided => "s2i_braided",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "s2m" => Ok(Self::S2m),
            "s2i_unbraided" => Ok(Self::S2iUnbraided),
            "s2i_braided" => Ok(Self::S2iBraided),
            other => Err(Error::Checkpoint(format!("unknown kind {other}"))),
        }
    }

    pub fn is_s2i(self) -> bool {
        self != Self::S2m
    }
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub config: NetConfig,
    pub step: u64,
    pub tensors: BTreeMap<String, Tensor>,
    pub extra: BTreeMap<String, String>,
}

const RESERVED: [&str; 4] = ["version", "kind", "config", "step"];

impl Checkpoint {
    pub fn new(kind: CheckpointKind, config: NetConfig, step: u64) -> Self {
        Self {
            kind,
            config,
            step,
            tensors: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }

    /// Adds every tensor of `tensors` under `prefix.`.
    pub fn insert_all(&mut self, prefix: &str, tensors: BTreeMap<String, Tensor>) {
        for (k, t) in tensors {
            self.tensors.insert(format!("{prefix}.{k}"), t);
        }
    }

    /// Tensors under `prefix.` with the prefix removed.
    pub fn section(&self, prefix: &str) -> BTreeMap<String, Tensor> {
        let p = format!("{prefix}.");
        self.tensors
            .iter()
            .filter_map(|(k, t)| k.strip_prefix(&p).map(|n| (n.to_string(), t.clone())))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut meta: HashMap<String, String> = self
            .extra
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        meta.insert("version".into(), CHECKPOINT_VERSION.to_string());
        meta.insert("kind".into(), self.kind.as_str().into());
        meta.insert("config".into(), serde_json::to_string(&self.config)?);
        meta.insert("step".into(), self.step.to_string());
        let tensors: Vec<(String, Tensor)> = self
            .tensors
            .iter()
            .map(|(k, t)| Ok((k.clone(), t.contiguous()?)))
            .collect::<Result<_>>()?;
        let bytes = safetensors::serialize(tensors, Some(meta))
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, canonical_header(&bytes)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingCheckpoint(path.to_path_buf()));
        }
        let bytes = std::fs::read(path)?;
        let bad = |e: safetensors::SafeTensorError| Error::Checkpoint(e.to_string());
        let (_, header) = safetensors::SafeTensors::read_metadata(&bytes).map_err(bad)?;
        let meta = header
            .metadata()
            .clone()
            .ok_or_else(|| Error::Checkpoint("missing header metadata".into()))?;
        let field = |k: &str| {
            meta.get(k)
                .ok_or_else(|| Error::Checkpoint(format!("missing header field {k}")))
        };
        let version: u32 = field("version")?
            .parse()
            .map_err(|_| Error::Checkpoint("bad version".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let kind = CheckpointKind::parse(field("kind")?)?;
        let config: NetConfig = serde_json::from_str(field("config")?)?;
        let step = field("step")?
            .parse()
            .map_err(|_| Error::Checkpoint("bad step".into()))?;
        let st = safetensors::SafeTensors::deserialize(&bytes).map_err(bad)?;
        let mut tensors = BTreeMap::new();
        for (name, view) in st.tensors() {
            tensors.insert(name, view.load(&Device::Cpu)?);
        }
        let extra = meta
            .iter()
            .filter(|(k, _)| !RESERVED.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Ok(Self {
            kind,
            config,
            step,
            tensors,
            extra,
        })
    }
}

/// Re-emits the JSON header with sorted keys so equal checkpoints are
/// byte-identical; tensor offsets are relative to the data section.
fn canonical_header(bytes: &[u8]) -> Result<Vec<u8>> {
    let bad = || Error::Checkpoint("malformed safetensors header".into());
    let n =
        u64::from_le_bytes(bytes.get(..8).ok_or_else(bad)?.try_into().expect("8 bytes")) as usize;
    let header = bytes.get(8..8 + n).ok_or_else(bad)?;
    let value: serde_json::Value = serde_json::from_slice(header)?;
    let mut text = serde_json::to_vec(&value)?;
    while text.len() % 8 != 0 {
        text.push(b' ');
    }
    let mut out = Vec::with_capacity(bytes.len());
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(&text);
    out.extend_from_slice(&bytes[8 + n..]);
    Ok(out)
}
