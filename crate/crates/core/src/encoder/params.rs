use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{read_f64_le, write_f64_le, KeyValues};
use crate::error::{Error, Result};

/// Layer widths of the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    pub frame_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub proj_dim: usize,
    pub dual_hidden_dim: usize,
    pub segments: usize,
    /// Output classes of the order-prediction head; 0 disables the head.
    pub order_classes: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            frame_dim: 32,
            hidden_dim: 64,
            embed_dim: 32,
            proj_dim: 16,
            dual_hidden_dim: 32,
            segments: 2,
            order_classes: 0,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("frame_dim", self.frame_dim),
            ("hidden_dim", self.hidden_dim),
            ("embed_dim", self.embed_dim),
            ("proj_dim", self.proj_dim),
            ("dual_hidden_dim", self.dual_hidden_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::config(format!("encoder.{name} must be positive")));
            }
        }
        if self.segments < 1 {
            return Err(Error::config("encoder segments must be positive"));
        }
        Ok(())
    }
}

/// Named parameter tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    FrameW,
    FrameB,
    TemporalW,
    TemporalB,
    ClipW,
    ClipB,
    DualHiddenW,
    DualHiddenB,
    DualOutW,
    DualOutB,
    OrderW,
    OrderB,
}

impl Block {
    pub const ALL: [Block; 12] = [
        Block::FrameW,
        Block::FrameB,
        Block::TemporalW,
        Block::TemporalB,
        Block::ClipW,
        Block::ClipB,
        Block::DualHiddenW,
        Block::DualHiddenB,
        Block::DualOutW,
        Block::DualOutB,
        Block::OrderW,
        Block::OrderB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::FrameW => "backbone.frame.weight",
            Block::FrameB => "backbone.frame.bias",
            Block::TemporalW => "backbone.temporal.weight",
            Block::TemporalB => "backbone.temporal.bias",
            Block::ClipW => "clip_head.weight",
            Block::ClipB => "clip_head.bias",
            Block::DualHiddenW => "dual_head.hidden.weight",
            Block::DualHiddenB => "dual_head.hidden.bias",
            Block::DualOutW => "dual_head.out.weight",
            Block::DualOutB => "dual_head.out.bias",
            Block::OrderW => "order_head.weight",
            Block::OrderB => "order_head.bias",
        }
    }

    pub fn is_backbone(self) -> bool {
        matches!(self, Block::FrameW | Block::FrameB | Block::TemporalW | Block::TemporalB)
    }

    /// `(shape, fan_in)`; `None` when the block is absent from the architecture.
    fn shape(self, a: &Architecture) -> Option<(Vec<usize>, usize)> {
        let cat = a.segments * a.proj_dim;
        Some(match self {
            Block::FrameW => (vec![a.hidden_dim, a.frame_dim], a.frame_dim),
            Block::FrameB => (vec![a.hidden_dim], a.frame_dim),
            Block::TemporalW => (vec![a.embed_dim, a.hidden_dim], a.hidden_dim),
            Block::TemporalB => (vec![a.embed_dim], a.hidden_dim),
            Block::ClipW => (vec![a.proj_dim, a.embed_dim], a.embed_dim),
            Block::ClipB => (vec![a.proj_dim], a.embed_dim),
            Block::DualHiddenW => (vec![a.dual_hidden_dim, a.embed_dim], a.embed_dim),
            Block::DualHiddenB => (vec![a.dual_hidden_dim], a.embed_dim),
            Block::DualOutW => (vec![a.proj_dim, a.dual_hidden_dim], a.dual_hidden_dim),
            Block::DualOutB => (vec![a.proj_dim], a.dual_hidden_dim),
            Block::OrderW if a.order_classes > 0 => (vec![a.order_classes, cat], cat),
            Block::OrderB if a.order_classes > 0 => (vec![a.order_classes], cat),
            Block::OrderW | Block::OrderB => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutEntry {
    pub block: Block,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
    fan_in: usize,
}

/// Name -> shape -> offset manifest of the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub entries: Vec<LayoutEntry>,
    pub total: usize,
}

impl Layout {
    pub fn new(arch: &Architecture) -> Self {
        let mut entries = Vec::new();
        let mut offset = 0;
        for block in Block::ALL {
            if let Some((shape, fan_in)) = block.shape(arch) {
                let len = shape.iter().product();
                entries.push(LayoutEntry { block, shape, offset, len, fan_in });
                offset += len;
            }
        }
        Self { entries, total: offset }
    }

    pub fn entry(&self, block: Block) -> &LayoutEntry {
        self.entries
            .iter()
            .find(|e| e.block == block)
            .unwrap_or_else(|| panic!("block {} not present in this architecture", block.name()))
    }

    pub fn range(&self, block: Block) -> std::ops::Range<usize> {
        let e = self.entry(block);
        e.offset..e.offset + e.len
    }
}

/// Flat parameter vector plus its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub arch: Architecture,
    pub layout: Layout,
    pub values: Vec<f64>,
}

/// Gradient buffer laid out exactly like [`EncoderParams::values`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
    layout: Layout,
}

impl Gradients {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        Self { values: vec![0.0; params.values.len()], layout: params.layout.clone() }
    }

    pub fn block(&self, block: Block) -> &[f64] {
        &self.values[self.layout.range(block)]
    }

    pub fn block_mut(&mut self, block: Block) -> &mut [f64] {
        let r = self.layout.range(block);
        &mut self.values[r]
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl EncoderParams {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        Ok(Self { arch, values: vec![0.0; layout.total], layout })
    }

    /// Uniform `(-a, a)` with `a = 1 / sqrt(fan_in)` for every tensor.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for e in &p.layout.entries {
            let a = 1.0 / (e.fan_in as f64).sqrt();
            for v in &mut p.values[e.offset..e.offset + e.len] {
                *v = rng.random_range(-a..a);
            }
        }
        Ok(p)
    }

    pub fn block(&self, block: Block) -> &[f64] {
        &self.values[self.layout.range(block)]
    }

    pub fn block_mut(&mut self, block: Block) -> &mut [f64] {
        let r = self.layout.range(block);
        &mut self.values[r]
    }

    pub fn has_block(&self, block: Block) -> bool {
        self.layout.entries.iter().any(|e| e.block == block)
    }

    /// `key <- m * key + (1 - m) * query`, elementwise.
    pub fn momentum_update(&mut self, query: &EncoderParams, m: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&m) {
            return Err(Error::config(format!("momentum must be in [0,1], got {m}")));
        }
        if self.layout != query.layout {
            return Err(Error::shape("key and query parameter manifests differ"));
        }
        for (k, q) in self.values.iter_mut().zip(&query.values) {
            *k = m * *k + (1.0 - m) * q;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn manifest(&self) -> KeyValues {
        let a = &self.arch;
        let mut kv = KeyValues::default();
        kv.push("frame_dim", a.frame_dim);
        kv.push("hidden_dim", a.hidden_dim);
        kv.push("embed_dim", a.embed_dim);
        kv.push("proj_dim", a.proj_dim);
        kv.push("dual_hidden_dim", a.dual_hidden_dim);
        kv.push("segments", a.segments);
        kv.push("order_classes", a.order_classes);
        for e in &self.layout.entries {
            let shape: Vec<String> = e.shape.iter().map(usize::to_string).collect();
            kv.push("tensor", format!("{} {} {}", e.block.name(), shape.join("x"), e.offset));
        }
        kv
    }

    /// Writes `<stem>.manifest` (name, shape, offset per tensor) and
    /// `<stem>.bin` (flat f64 little-endian values).
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("{stem}.manifest"));
        fs::write(&path, self.manifest().render("encoder parameters")).map_err(|e| Error::io(&path, e))?;
        write_f64_le(&dir.join(format!("{stem}.bin")), &self.values)
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let path = dir.join(format!("{stem}.manifest"));
        let kv = KeyValues::read(&path)?;
        let arch = Architecture {
            frame_dim: kv.get(&path, "frame_dim")?,
            hidden_dim: kv.get(&path, "hidden_dim")?,
            embed_dim: kv.get(&path, "embed_dim")?,
            proj_dim: kv.get(&path, "proj_dim")?,
            dual_hidden_dim: kv.get(&path, "dual_hidden_dim")?,
            segments: kv.get(&path, "segments")?,
            order_classes: kv.get(&path, "order_classes")?,
        };
        let mut params = Self::zeros(arch)?;
        // The stored tensor table must match the layout implied by the architecture.
        let stored: Vec<&str> = kv.entries.iter().filter(|(k, _)| k == "tensor").map(|(_, v)| v.as_str()).collect();
        let expected = params.manifest();
        let expected: Vec<&str> =
            expected.entries.iter().filter(|(k, _)| k == "tensor").map(|(_, v)| v.as_str()).collect();
        if stored != expected {
            return Err(Error::format(&path, "tensor table does not match the architecture"));
        }
        let values = read_f64_le(&dir.join(format!("{stem}.bin")))?;
        if values.len() != params.values.len() {
            return Err(Error::format(
                dir.join(format!("{stem}.bin")),
                format!("expected {} values, found {}", params.values.len(), values.len()),
            ));
        }
        params.values = values;
        Ok(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_contiguous() {
        let l = Layout::new(&Architecture::default());
        let mut off = 0;
        for e in &l.entries {
            assert_eq!(e.offset, off);
            off += e.len;
        }
        assert_eq!(off, l.total);
        assert!(!l.entries.iter().any(|e| e.block == Block::OrderW));
        let with_order = Layout::new(&Architecture { order_classes: 2, ..Architecture::default() });
        assert_eq!(with_order.entry(Block::OrderW).shape, vec![2, 32]);
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let p = EncoderParams::init(Architecture::default(), 1).unwrap();
        let bound = 1.0 / 32f64.sqrt();
        assert!(p.block(Block::FrameW).iter().all(|v| v.abs() < bound));
        assert_eq!(p, EncoderParams::init(Architecture::default(), 1).unwrap());
    }

    #[test]
    fn momentum_update_edges() {
        let arch = Architecture {
            frame_dim: 2,
            hidden_dim: 2,
            embed_dim: 2,
            proj_dim: 2,
            dual_hidden_dim: 2,
            ..Architecture::default()
        };
        let mut key = EncoderParams::zeros(arch).unwrap();
        key.values.iter_mut().for_each(|v| *v = 1.0);
        let query = EncoderParams::zeros(arch).unwrap();

        let mut k1 = key.clone();
        k1.momentum_update(&query, 1.0).unwrap();
        assert_eq!(k1, key);

        let mut k0 = key.clone();
        k0.momentum_update(&query, 0.0).unwrap();
        assert_eq!(k0, query);

        let mut k = key.clone();
        k.momentum_update(&query, 0.999).unwrap();
        assert!(k.values.iter().all(|&v| (v - 0.999).abs() < 1e-15));

        assert!(k.momentum_update(&query, 1.5).is_err());
        let other = EncoderParams::zeros(Architecture { hidden_dim: 3, ..arch }).unwrap();
        assert!(matches!(k.momentum_update(&other, 0.5), Err(Error::Shape(_))));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = EncoderParams::init(Architecture::default(), 7).unwrap();
        p.save(dir.path(), "enc").unwrap();
        assert_eq!(EncoderParams::load(dir.path(), "enc").unwrap(), p);
    }
}
