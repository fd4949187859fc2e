use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"S2SMCKv1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: TrainConfig,
    pub epoch: usize,
    pub valid_loss: Option<f64>,
}

fn put_u32<W: Write>(w: &mut W, x: usize) -> Result<()> {
    let x = u32::try_from(x).map_err(|_| Error::Format(format!("{x} does not fit in 32 bits")))?;
    w.write_all(&x.to_le_bytes())?;
    Ok(())
}

fn put_u64<W: Write>(w: &mut W, x: usize) -> Result<()> {
    w.write_all(&(x as u64).to_le_bytes())?;
    Ok(())
}

/// Magic, JSON metadata, a manifest of `(name, shape, offset)` and then every
/// parameter value as little-endian `f64`, in manifest order.
pub fn write_checkpoint<W: Write>(
    mut w: W,
    meta: &CheckpointMeta,
    params: &ParamStore,
) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    let json = serde_json::to_vec(meta)?;
    put_u32(&mut w, json.len())?;
    w.write_all(&json)?;
    put_u32(&mut w, params.len())?;
    let mut offset = 0;
    for (_, name, t) in params.iter() {
        put_u32(&mut w, name.len())?;
        w.write_all(name.as_bytes())?;
        put_u32(&mut w, t.shape().len())?;
        for d in t.shape() {
            put_u64(&mut w, *d)?;
        }
        put_u64(&mut w, offset)?;
        offset += t.len();
    }
    put_u64(&mut w, offset)?;
    for (_, _, t) in params.iter() {
        for x in t.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut b = vec![0; n];
        self.0
            .read_exact(&mut b)
            .map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<usize> {
        let b = self.bytes(8)?;
        usize::try_from(u64::from_le_bytes(b.try_into().unwrap()))
            .map_err(|_| Error::Format("size overflows this platform".into()))
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<(CheckpointMeta, ParamStore)> {
    let mut r = Reader(r);
    if r.bytes(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let n = r.u32()?;
    let meta: CheckpointMeta = serde_json::from_slice(&r.bytes(n)?)?;
    let count = r.u32()?;
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()?;
        let name = String::from_utf8(r.bytes(len)?).map_err(|e| Error::Format(e.to_string()))?;
        let ndim = r.u32()?;
        let shape = (0..ndim).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let offset = r.u64()?;
        manifest.push((name, shape, offset));
    }
    let total = r.u64()?;
    let raw = r.bytes(total * 8)?;
    let values: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut store = ParamStore::new();
    for (name, shape, offset) in manifest {
        let len: usize = shape.iter().product();
        let data = values
            .get(offset..offset + len)
            .ok_or_else(|| Error::Format(format!("parameter {name} lies outside the value blob")))?
            .to_vec();
        store.insert(&name, Tensor::new(shape, data)?)?;
    }
    Ok((meta, store))
}

pub fn save_checkpoint(path: &Path, meta: &CheckpointMeta, model: &Model) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), meta, &model.params)
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointMeta, Model)> {
    let (meta, params) = read_checkpoint(BufReader::new(File::open(path)?))?;
    let model = Model::from_params(meta.config.model.clone(), params)?;
    Ok((meta, model))
}
