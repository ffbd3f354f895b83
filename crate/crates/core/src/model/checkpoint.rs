//! Versioned binary checkpoints.
//!
//! Layout: magic, version, a key-value text block describing the
//! architecture and vocabulary reference, then named parameter blobs
//! (name, shape, little-endian f64 data) in sorted-name order.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use super::{Modality, Model, ModelSpec, Params, TextEncoderConfig, VisualExtractorKind};
use crate::numerics::Tensor;
use crate::textvariants::VariantKind;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"PDETCKPT";
const VERSION: u32 = 1;

/// Non-parameter payload of a checkpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointMeta {
    /// File name of the vocabulary this model was trained with, if any.
    pub vocab_ref: Option<String>,
}

fn meta_block(spec: &ModelSpec, meta: &CheckpointMeta) -> String {
    let mut lines = Vec::new();
    lines.push(format!("modality = {}", spec.modality.as_str()));
    if let Some(v) = spec.visual {
        lines.push(format!("visual = {}", v.as_str()));
    }
    lines.push(format!("variant = {}", spec.variant.as_str()));
    lines.push(format!("image_size = {}", spec.image_size));
    if let Some(t) = &spec.text {
        lines.push(format!("text_layers = {}", t.layers));
        lines.push(format!("text_heads = {}", t.heads));
        lines.push(format!("text_d_model = {}", t.d_model));
        lines.push(format!("text_n = {}", t.n));
        lines.push(format!("vocab_size = {}", t.vocab_size));
    }
    if let Some(v) = &meta.vocab_ref {
        lines.push(format!("vocab = {v}"));
    }
    lines.join("\n") + "\n"
}

fn parse_meta(block: &str) -> Result<(ModelSpec, CheckpointMeta)> {
    let mut kv = BTreeMap::new();
    for line in block.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("checkpoint meta line '{line}'")))?;
        kv.insert(key.trim().to_string(), value.trim().to_string());
    }
    let want = |key: &str| -> Result<&String> {
        kv.get(key).ok_or_else(|| Error::Parse(format!("checkpoint meta lacks '{key}'")))
    };
    let parse_usize = |key: &str| -> Result<usize> {
        want(key)?
            .parse()
            .map_err(|e| Error::Parse(format!("checkpoint meta '{key}': {e}")))
    };

    let modality = Modality::parse(want("modality")?)?;
    let visual = match kv.get("visual") {
        Some(v) => Some(VisualExtractorKind::parse(v)?),
        None => None,
    };
    let text = if modality.uses_text() {
        Some(TextEncoderConfig {
            layers: parse_usize("text_layers")?,
            heads: parse_usize("text_heads")?,
            d_model: parse_usize("text_d_model")?,
            n: parse_usize("text_n")?,
            vocab_size: parse_usize("vocab_size")?,
        })
    } else {
        None
    };
    let spec = ModelSpec {
        modality,
        visual,
        text,
        image_size: parse_usize("image_size")?,
        variant: VariantKind::parse(want("variant")?)?,
    };
    let meta = CheckpointMeta { vocab_ref: kv.get("vocab").cloned() };
    Ok((spec, meta))
}

pub fn save_checkpoint(path: &Path, model: &Model, meta: &CheckpointMeta) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());

    let block = meta_block(&model.spec, meta);
    out.extend_from_slice(&(block.len() as u32).to_le_bytes());
    out.extend_from_slice(block.as_bytes());

    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for (name, tensor) in model.params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
        for &dim in tensor.shape() {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for &v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Parse("checkpoint truncated".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Input(format!("cannot open checkpoint {}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    let mut r = Reader { buf: &bytes };

    if r.take(8)? != MAGIC {
        return Err(Error::Parse(format!("{} is not a checkpoint", path.display())));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported checkpoint version {version}")));
    }

    let block_len = r.u32()? as usize;
    let block = std::str::from_utf8(r.take(block_len)?)
        .map_err(|_| Error::Parse("checkpoint meta is not UTF-8".into()))?;
    let (spec, meta) = parse_meta(block)?;

    let count = r.u32()? as usize;
    let mut params = Params::default();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Parse("parameter name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = r.take(numel * 8)?;
        let data: Vec<f64> =
            raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        params.insert(name, Tensor::new(shape, data)?);
    }
    let model = Model { spec, params };
    model.spec.validate()?;
    Ok((model, meta))
}
