//! Binary checkpoint format (little-endian):
//!
//! ```text
//! "CONE"  u32 version
//! u32 dim  u32 subspace_dim  f64 k  f64 angle_weight  f64 adv_temperature  u32 negatives
//! u32 n_entities   { u32 len, utf-8 bytes } × n_entities
//! u32 n_base_rels  { u32 len, utf-8 bytes, u8 kind } × n_base_rels
//! masks: 2·n_base_rels × dim bytes (0/1), reciprocals after base relations
//! params: f64 × (planes, biases, raw scales, raw angles)
//! u64 CRC-64/XZ of every preceding byte
//! ```
//!
//! Reciprocal relation names and kinds are derived from the base entries.

use std::fs;
use std::path::Path;

use crc::{Crc, CRC_64_XZ};

use crate::cone_model::{ConeModel, ModelConfig};
use crate::data::{RelationInfo, RelationKind, Vocab};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CONE";
pub const FORMAT_VERSION: u32 = 1;

const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) -> Result<()> {
        self.u32(s.len())?;
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("unexpected end of data at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.usize()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Checkpoint(format!("invalid UTF-8: {e}")))
    }
}

pub fn checkpoint_bytes(model: &ConeModel) -> Result<Vec<u8>> {
    let mut w = Writer(Vec::with_capacity(64 + model.params().len() * 8));
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let c = &model.config;
    w.u32(c.dim)?;
    w.u32(c.subspace_dim)?;
    w.f64(c.k);
    w.f64(c.angle_weight);
    w.f64(c.adv_temperature);
    w.u32(c.negatives)?;
    let vocab = &model.vocab;
    w.u32(vocab.num_entities())?;
    for name in vocab.entity_names() {
        w.str(name)?;
    }
    w.u32(vocab.num_base_relations())?;
    for r in 0..vocab.num_base_relations() {
        let info = vocab.relation(r);
        w.str(&info.name)?;
        w.u8(info.kind.code());
    }
    for m in model.masks() {
        for &b in m {
            w.u8(b as u8);
        }
    }
    for &p in model.params() {
        w.f64(p);
    }
    let crc = CRC64.checksum(&w.0);
    w.0.extend_from_slice(&crc.to_le_bytes());
    Ok(w.0)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<ConeModel> {
    if bytes.len() < 16 {
        return Err(Error::ChecksumMismatch { stored: 0, computed: CRC64.checksum(bytes) });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    let computed = CRC64.checksum(body);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("missing CONE magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch { expected: FORMAT_VERSION, found: version });
    }
    let config = ModelConfig {
        dim: r.usize()?,
        subspace_dim: r.usize()?,
        k: r.f64()?,
        angle_weight: r.f64()?,
        adv_temperature: r.f64()?,
        negatives: r.usize()?,
    };
    let n_e = r.usize()?;
    let entities = (0..n_e).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let n_r = r.usize()?;
    let mut base = Vec::with_capacity(n_r);
    for _ in 0..n_r {
        let name = r.str()?;
        let code = r.u8()?;
        let kind =
            RelationKind::from_code(code).ok_or_else(|| Error::Checkpoint(format!("bad relation kind {code}")))?;
        base.push(RelationInfo { name, kind });
    }
    let vocab = Vocab::new(entities, base)?;
    let d = config.dim;
    let mut masks = Vec::with_capacity(2 * n_r);
    for _ in 0..2 * n_r {
        masks.push(r.take(d)?.iter().map(|&b| b != 0).collect());
    }
    let n_params = n_e * (2 * d + 1) + 2 * (2 * n_r) * d;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        params.push(r.f64()?);
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", body.len() - r.pos)));
    }
    ConeModel::from_parts(config, vocab, params, masks)
}

pub fn save_checkpoint(model: &ConeModel, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_bytes(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ConeModel> {
    model_from_bytes(&fs::read(path)?)
}

/// Rejects a checkpoint whose plane count differs from an explicitly
/// requested one.
pub fn ensure_dim(model: &ConeModel, requested: Option<usize>) -> Result<()> {
    match requested {
        Some(d) if d != model.config.dim => Err(Error::DimensionMismatch { expected: d, found: model.config.dim }),
        _ => Ok(()),
    }
}
