//! `DKW1` weights file.
//!
//! ```text
//! 0   magic "DKW1"
//! 4   u16 version
//! 6   u64 body length
//! 14  u64 bitwise complement of the body length
//! 22  u64 FNV-1a checksum over bytes 6..22 followed by the body
//! 30  body:
//!       u32 metadata length, metadata (UTF-8 JSON)
//!       u32 layer count
//!       per layer: u16 name length, name, u16 tensor count,
//!                  per tensor: 4 x u32 dims, u64 element offset
//!       u64 element count
//!       f64 elements
//! ```
//! All integers and elements are little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::train::model::{ToyNet, ToyNetConfig};

pub const WEIGHTS_MAGIC: [u8; 4] = *b"DKW1";
pub const WEIGHTS_VERSION: u16 = 1;
const HEADER_LEN: usize = 30;

/// FNV-1a, 64-bit.
pub fn fnv1a64(chunks: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for chunk in chunks {
        for &b in *chunk {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights {
    pub name: String,
    pub tensors: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightsFile {
    pub metadata: String,
    pub layers: Vec<LayerWeights>,
}

impl WeightsFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut body = Vec::new();
        put_len32(&mut body, self.metadata.len(), "metadata")?;
        body.extend_from_slice(self.metadata.as_bytes());
        put_len32(&mut body, self.layers.len(), "layer count")?;
        let mut offset: u64 = 0;
        for layer in &self.layers {
            let name = layer.name.as_bytes();
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::Invalid(format!("layer name {:?} too long", layer.name)))?;
            body.extend_from_slice(&name_len.to_le_bytes());
            body.extend_from_slice(name);
            let count = u16::try_from(layer.tensors.len())
                .map_err(|_| Error::Invalid(format!("too many tensors in layer {:?}", layer.name)))?;
            body.extend_from_slice(&count.to_le_bytes());
            for t in &layer.tensors {
                for d in t.shape() {
                    put_len32(&mut body, d, "tensor dimension")?;
                }
                body.extend_from_slice(&offset.to_le_bytes());
                offset += t.len() as u64;
            }
        }
        body.extend_from_slice(&offset.to_le_bytes());
        for t in self.layers.iter().flat_map(|l| &l.tensors) {
            for v in t.data() {
                body.extend_from_slice(&v.to_le_bytes());
            }
        }

        let len = body.len() as u64;
        let mut lens = [0u8; 16];
        lens[..8].copy_from_slice(&len.to_le_bytes());
        lens[8..].copy_from_slice(&(!len).to_le_bytes());
        let checksum = fnv1a64(&[&lens, &body]);
        let mut out = Vec::with_capacity(HEADER_LEN + body.len());
        out.extend_from_slice(&WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&lens);
        out.extend_from_slice(&checksum.to_le_bytes());
        out.extend_from_slice(&body);
        Ok(out)
    }

    /// Check order: magic, version, truncation, checksum, then structure.
    pub fn from_bytes(bytes: &[u8]) -> Result<WeightsFile> {
        if bytes.len() < 4 {
            return Err(Error::Truncated(format!("weights file is {} bytes", bytes.len())));
        }
        if bytes[..4] != WEIGHTS_MAGIC {
            return Err(Error::BadMagic {
                expected: WEIGHTS_MAGIC,
                found: bytes[..4].try_into().unwrap(),
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated(format!(
                "weights header needs {HEADER_LEN} bytes, file has {}",
                bytes.len()
            )));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != WEIGHTS_VERSION {
            return Err(Error::Version {
                found: version,
                expected: WEIGHTS_VERSION,
            });
        }
        let len = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
        let len_check = u64::from_le_bytes(bytes[14..22].try_into().unwrap());
        let stored = u64::from_le_bytes(bytes[22..30].try_into().unwrap());
        let body = &bytes[HEADER_LEN..];
        if len == !len_check && (body.len() as u64) < len {
            return Err(Error::Truncated(format!(
                "weights body is {} bytes, header declares {len}",
                body.len()
            )));
        }
        let computed = fnv1a64(&[&bytes[6..22], body]);
        if computed != stored || len != !len_check || body.len() as u64 != len {
            return Err(Error::Checksum { stored, computed });
        }
        parse_body(body)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<WeightsFile> {
        WeightsFile::from_bytes(&fs::read(path)?)
    }
}

fn put_len32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Invalid(format!("{what} {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Invalid(format!("weights body ends early at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Invalid("non UTF-8 string in weights".into()))
    }
}

fn parse_body(body: &[u8]) -> Result<WeightsFile> {
    let mut cur = Cursor { bytes: body, pos: 0 };
    let meta_len = cur.u32()? as usize;
    let metadata = cur.string(meta_len)?;
    let layer_count = cur.u32()? as usize;
    let mut manifest = Vec::new();
    let mut expected_offset = 0u64;
    for _ in 0..layer_count {
        let name_len = cur.u16()? as usize;
        let name = cur.string(name_len)?;
        let count = cur.u16()? as usize;
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let mut shape = [0usize; 4];
            for d in &mut shape {
                *d = cur.u32()? as usize;
            }
            let offset = cur.u64()?;
            if offset != expected_offset {
                return Err(Error::Invalid(format!(
                    "layer {name:?}: tensor offset {offset}, expected {expected_offset}"
                )));
            }
            expected_offset += shape.iter().product::<usize>() as u64;
            shapes.push(shape);
        }
        manifest.push((name, shapes));
    }
    let total = cur.u64()?;
    if total != expected_offset || (body.len() - cur.pos) as u64 != total * 8 {
        return Err(Error::Invalid(format!(
            "weights declare {total} elements, manifest {expected_offset}, data holds {}",
            (body.len() - cur.pos) / 8
        )));
    }
    let mut layers = Vec::with_capacity(manifest.len());
    for (name, shapes) in manifest {
        let mut tensors = Vec::with_capacity(shapes.len());
        for shape in shapes {
            let n: usize = shape.iter().product();
            let data = cur
                .take(n * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(Tensor::from_vec(shape, data)?);
        }
        layers.push(LayerWeights { name, tensors });
    }
    Ok(WeightsFile { metadata, layers })
}

impl ToyNet {
    pub fn to_weights(&self) -> Result<WeightsFile> {
        Ok(WeightsFile {
            metadata: serde_json::to_string(&self.config)?,
            layers: self
                .layer_tensors()
                .into_iter()
                .map(|(name, tensors)| LayerWeights { name, tensors })
                .collect(),
        })
    }

    /// Rebuilds the net from the configuration stored in the file.
    pub fn from_weights(file: &WeightsFile) -> Result<ToyNet> {
        let config: ToyNetConfig = serde_json::from_str(&file.metadata)?;
        let layers: Vec<(String, Vec<Tensor>)> =
            file.layers.iter().map(|l| (l.name.clone(), l.tensors.clone())).collect();
        ToyNet::from_layer_tensors(&config, &layers)
    }
}

pub fn save_weights(net: &ToyNet, path: &Path) -> Result<()> {
    net.to_weights()?.save(path)
}

pub fn load_weights(path: &Path) -> Result<ToyNet> {
    ToyNet::from_weights(&WeightsFile::load(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WeightsFile {
        WeightsFile {
            metadata: "{}".into(),
            layers: vec![
                LayerWeights {
                    name: "a".into(),
                    tensors: vec![Tensor::from_fn([1, 2, 1, 3], |[_, c, _, w]| c as f64 - w as f64 * 0.1)],
                },
                LayerWeights {
                    name: "empty".into(),
                    tensors: vec![],
                },
            ],
        }
    }

    #[test]
    fn round_trip() {
        let f = sample();
        assert_eq!(WeightsFile::from_bytes(&f.to_bytes().unwrap()).unwrap(), f);
    }

    #[test]
    fn distinct_error_kinds() {
        let bytes = sample().to_bytes().unwrap();
        let mut v = bytes.clone();
        v[4] = 9;
        assert!(matches!(WeightsFile::from_bytes(&v), Err(Error::Version { found: 9, .. })));
        assert!(matches!(
            WeightsFile::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated(_))
        ));
        let mut v = bytes.clone();
        *v.last_mut().unwrap() ^= 1;
        assert!(matches!(WeightsFile::from_bytes(&v), Err(Error::Checksum { .. })));
        let mut v = bytes;
        v[0] = b'X';
        assert!(matches!(WeightsFile::from_bytes(&v), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn every_body_byte_is_covered() {
        let bytes = sample().to_bytes().unwrap();
        for i in 6..bytes.len() {
            let mut v = bytes.clone();
            v[i] ^= 0x5a;
            assert!(
                matches!(WeightsFile::from_bytes(&v), Err(Error::Checksum { .. })),
                "byte {i}"
            );
        }
    }
}
