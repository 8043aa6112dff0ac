//! Dense rank-4 tensor in `(n, c, h, w)` layout.
//!
//! Elements are `f64`. The binary file format is
//!
//! ```text
//! "DKT1" | u8 dtype | u32 n | u32 c | u32 h | u32 w | elements (little endian)
//! ```
//!
//! with dtype `1` = f32 and `2` = f64.

use std::cell::Cell;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{config, Error, Result};

pub const TENSOR_MAGIC: [u8; 4] = *b"DKT1";

static CHECKED: AtomicBool = AtomicBool::new(true);

thread_local! {
    static MACS: Cell<u64> = const { Cell::new(0) };
}

/// Checked mode validates finiteness on construction and after every operator,
/// and enables MAC instrumentation. On by default.
pub fn checked() -> bool {
    CHECKED.load(Ordering::Relaxed)
}

pub fn set_checked(on: bool) {
    CHECKED.store(on, Ordering::Relaxed);
}

/// Multiply-accumulates executed by convolution loops on this thread since the
/// last reset. Only counted in checked mode.
pub fn mac_count() -> u64 {
    MACS.with(|m| m.get())
}

pub fn reset_mac_count() {
    MACS.with(|m| m.set(0));
}

pub(crate) fn count_macs(n: u64) {
    if checked() {
        MACS.with(|m| m.set(m.get() + n));
    }
}

/// On-disk element type.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32 = 1,
    F64 = 2,
}

impl DType {
    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(DType::F32),
            2 => Ok(DType::F64),
            other => Err(Error::Invalid(format!("unknown dtype tag {other}"))),
        }
    }

    fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: [usize; 4], value: f64) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return config(format!(
                "tensor data length {} does not match shape {:?} ({len})",
                data.len(),
                shape
            ));
        }
        let t = Tensor { shape, data };
        if checked() {
            t.ensure_finite("tensor construction")?;
        }
        Ok(t)
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.iter().product());
        for n in 0..shape[0] {
            for c in 0..shape[1] {
                for h in 0..shape[2] {
                    for w in 0..shape[3] {
                        data.push(f([n, c, h, w]));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    /// Internal constructor for operator outputs; length is trusted.
    pub(crate) fn raw(shape: [usize; 4], data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        Tensor { shape, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn n(&self) -> usize {
        self.shape[0]
    }

    pub fn c(&self) -> usize {
        self.shape[1]
    }

    pub fn h(&self) -> usize {
        self.shape[2]
    }

    pub fn w(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, [n, c, h, w]: [usize; 4]) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + h) * self.shape[3] + w
    }

    #[inline]
    pub fn at(&self, idx: [usize; 4]) -> f64 {
        self.data[self.index(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: [usize; 4], v: f64) {
        let i = self.index(idx);
        self.data[i] = v;
    }

    /// Contiguous `h*w` plane for one (batch, channel).
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let hw = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let hw = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * hw;
        &mut self.data[start..start + hw]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::raw(self.shape, self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.expect_shape(other.shape, "zip_map")?;
        Ok(Tensor::raw(
            self.shape,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|x| x * s)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.expect_shape(other.shape, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.expect_shape(other.shape, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Channels `[start, end)` as a new tensor.
    pub fn narrow_channels(&self, start: usize, end: usize) -> Result<Tensor> {
        let [n, c, h, w] = self.shape;
        if start > end || end > c {
            return config(format!("channel range {start}..{end} out of 0..{c}"));
        }
        let hw = h * w;
        let mut data = Vec::with_capacity(n * (end - start) * hw);
        for b in 0..n {
            let base = b * c * hw;
            data.extend_from_slice(&self.data[base + start * hw..base + end * hw]);
        }
        Ok(Tensor::raw([n, end - start, h, w], data))
    }

    /// Channel-wise concatenation.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
        let first = match parts.first() {
            Some(t) => t,
            None => return config("concat of zero tensors"),
        };
        let [n, _, h, w] = first.shape;
        for p in parts {
            if p.n() != n || p.h() != h || p.w() != w {
                return config(format!(
                    "concat shape mismatch: {:?} vs {:?}",
                    first.shape, p.shape
                ));
            }
        }
        let c_total: usize = parts.iter().map(|p| p.c()).sum();
        let hw = h * w;
        let mut data = Vec::with_capacity(n * c_total * hw);
        for b in 0..n {
            for p in parts {
                let chunk = p.c() * hw;
                data.extend_from_slice(&p.data[b * chunk..(b + 1) * chunk]);
            }
        }
        Ok(Tensor::raw([n, c_total, h, w], data))
    }

    pub fn expect_shape(&self, shape: [usize; 4], what: &str) -> Result<()> {
        if self.shape != shape {
            return config(format!(
                "{what}: expected shape {:?}, got {:?}",
                shape, self.shape
            ));
        }
        Ok(())
    }

    pub fn ensure_finite(&self, what: &'static str) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }

    /// Finiteness check applied to operator outputs in checked mode.
    pub(crate) fn checked_output(self, what: &'static str) -> Result<Tensor> {
        if checked() {
            self.ensure_finite(what)?;
        }
        Ok(self)
    }

    pub fn write_to<W: Write>(&self, mut out: W, dtype: DType) -> Result<()> {
        out.write_all(&TENSOR_MAGIC)?;
        out.write_all(&[dtype as u8])?;
        for d in self.shape {
            let d = u32::try_from(d)
                .map_err(|_| Error::Invalid(format!("dimension {d} exceeds u32")))?;
            out.write_all(&d.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * dtype.size());
        match dtype {
            DType::F32 => self
                .data
                .iter()
                .for_each(|&x| buf.extend_from_slice(&(x as f32).to_le_bytes())),
            DType::F64 => self
                .data
                .iter()
                .for_each(|&x| buf.extend_from_slice(&x.to_le_bytes())),
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<(Tensor, DType)> {
        let mut magic = [0u8; 4];
        read_exact(&mut input, &mut magic, "magic")?;
        if magic != TENSOR_MAGIC {
            return Err(Error::BadMagic {
                expected: TENSOR_MAGIC,
                found: magic,
            });
        }
        let mut tag = [0u8; 1];
        read_exact(&mut input, &mut tag, "dtype")?;
        let dtype = DType::from_tag(tag[0])?;
        let mut shape = [0usize; 4];
        for d in shape.iter_mut() {
            let mut b = [0u8; 4];
            read_exact(&mut input, &mut b, "shape")?;
            *d = u32::from_le_bytes(b) as usize;
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Invalid("tensor shape overflows".into()))?;
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() != len * dtype.size() {
            return Err(Error::Truncated(format!(
                "expected {} element bytes, found {}",
                len * dtype.size(),
                bytes.len()
            )));
        }
        let data = match dtype {
            DType::F32 => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            DType::F64 => bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        };
        Ok((Tensor { shape, data }, dtype))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated(format!("eof while reading {what}")),
        _ => Error::Io(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(matches!(
            Tensor::from_vec([1, 1, 2, 2], vec![0.0; 3]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn from_vec_rejects_nan_in_checked_mode() {
        assert!(matches!(
            Tensor::from_vec([1, 1, 1, 2], vec![0.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn narrow_and_concat_are_inverse() {
        let t = Tensor::from_fn([2, 5, 3, 2], |[n, c, h, w]| (n * 1000 + c * 100 + h * 10 + w) as f64);
        let a = t.narrow_channels(0, 2).unwrap();
        let b = t.narrow_channels(2, 5).unwrap();
        assert_eq!(Tensor::concat_channels(&[&a, &b]).unwrap(), t);
        assert_eq!(a.at([1, 1, 2, 1]), t.at([1, 1, 2, 1]));
    }

    #[test]
    fn f64_file_round_trip_is_bit_exact() {
        let t = Tensor::from_fn([1, 2, 3, 4], |[_, c, h, w]| (c as f64 + 0.1) * (h as f64 - 1.7) / (w as f64 + 3.0));
        let mut buf = Vec::new();
        t.write_to(&mut buf, DType::F64).unwrap();
        assert_eq!(&buf[..4], b"DKT1");
        assert_eq!(buf[4], 2);
        assert_eq!(buf.len(), 4 + 1 + 16 + 24 * 8);
        let (back, dtype) = Tensor::read_from(&buf[..]).unwrap();
        assert_eq!(dtype, DType::F64);
        assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncated_file_is_reported() {
        let t = Tensor::zeros([1, 1, 2, 2]);
        let mut buf = Vec::new();
        t.write_to(&mut buf, DType::F32).unwrap();
        buf.pop();
        assert!(matches!(Tensor::read_from(&buf[..]), Err(Error::Truncated(_))));
    }
}
