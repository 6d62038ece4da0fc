//! `MANN` model container.
//!
//! Layout (little-endian): magic `MANN`, format version `u16`, manifest
//! length `u32` followed by a JSON layer manifest, parameter count `u32`,
//! then per parameter: name length `u32`, UTF-8 name, rank `u32`, `rank`
//! dims as `u32`, and the `f32` values.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::{Layer, ModelGraph};
use super::layer::{Dims, LayerSpec};
use super::tensor::Tensor;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MANN";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    name: String,
    input: Dims,
    frozen: bool,
    layers: Vec<LayerSpec>,
}

pub fn to_bytes(model: &ModelGraph) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let manifest = serde_json::to_vec(&Manifest {
        name: model.name().to_string(),
        input: model.input_dims(),
        frozen: model.is_frozen(),
        layers: model.specs(),
    })?;
    out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    out.extend_from_slice(&manifest);
    let params = model.parameters();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in t.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or_else(|| Error::CorruptContainer(format!("truncated while reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<ModelGraph> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::CorruptContainer("bad magic bytes".into()));
    }
    let version = u16::from_le_bytes(c.take(2, "version")?.try_into().expect("2 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let mlen = c.u32("manifest length")? as usize;
    let manifest: Manifest = serde_json::from_slice(c.take(mlen, "manifest")?)
        .map_err(|e| Error::CorruptContainer(format!("manifest: {e}")))?;
    let template = ModelGraph::new(manifest.name.clone(), manifest.input, manifest.layers, 0)
        .map_err(|e| Error::CorruptContainer(format!("manifest describes an invalid graph: {e}")))?;
    let expected = template.parameters();
    let count = c.u32("parameter count")? as usize;
    if count != expected.len() {
        return Err(Error::CorruptContainer(format!(
            "{count} parameter records, manifest needs {}",
            expected.len()
        )));
    }
    let mut loaded = Vec::with_capacity(count);
    for (want_name, want) in &expected {
        let nlen = c.u32("name length")? as usize;
        let name = std::str::from_utf8(c.take(nlen, "name")?)
            .map_err(|_| Error::CorruptContainer("parameter name is not UTF-8".into()))?;
        if name != want_name {
            return Err(Error::CorruptContainer(format!("expected parameter {want_name}, found {name}")));
        }
        let rank = c.u32("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(c.u32("dims")? as usize);
        }
        if dims != want.shape() {
            return Err(Error::CorruptContainer(format!("{name}: shape {dims:?}, manifest needs {:?}", want.shape())));
        }
        let n: usize = dims.iter().product();
        let raw = c.take(n * 4, "values")?;
        let values = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        loaded.push(Tensor::new(dims, values)?);
    }
    if c.pos != buf.len() {
        return Err(Error::CorruptContainer(format!("{} trailing bytes", buf.len() - c.pos)));
    }
    let mut it = loaded.into_iter();
    let layers: Vec<Layer> = template
        .layers()
        .iter()
        .map(|l| {
            let mut l = l.clone();
            if l.weight.is_some() {
                l.weight = it.next();
                l.bias = it.next();
            }
            l
        })
        .collect();
    Ok(ModelGraph::from_layers(
        manifest.name,
        manifest.input,
        layers,
        manifest.frozen,
    ))
}

pub fn write_model(model: &ModelGraph, mut writer: impl Write) -> Result<()> {
    writer.write_all(&to_bytes(model)?)?;
    Ok(())
}

pub fn read_model(mut reader: impl Read) -> Result<ModelGraph> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    from_bytes(&buf)
}

pub fn save_graph(model: &ModelGraph, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model)?)?;
    Ok(())
}

pub fn load_graph(path: &Path) -> Result<ModelGraph> {
    from_bytes(&std::fs::read(path)?)
}
