//! Netpbm images (PGM/PPM, plain and raw) and box overlays.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::postprocess::Detection;
use crate::tensor::Tensor;

/// Reads P2/P3/P5/P6 into a `(1, c, h, w)` tensor with values in `[0, 1]`,
/// `c` = 1 for graymaps and 3 for pixmaps.
pub fn decode_pnm(bytes: &[u8]) -> Result<Tensor> {
    let mut pos = 0;
    let magic = token(bytes, &mut pos)?;
    let (channels, raw) = match magic.as_str() {
        "P2" => (1, false),
        "P3" => (3, false),
        "P5" => (1, true),
        "P6" => (3, true),
        _ => return Err(Error::Invalid(format!("unsupported image magic {magic:?}"))),
    };
    let w = number(bytes, &mut pos, "width")?;
    let h = number(bytes, &mut pos, "height")?;
    let maxval = number(bytes, &mut pos, "maxval")?;
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::Invalid(format!("bad image header {w}x{h} maxval {maxval}")));
    }
    let count = w * h * channels;
    let mut samples = Vec::with_capacity(count);
    if raw {
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let width = if maxval < 256 { 1 } else { 2 };
        let body = bytes.get(pos..pos + count * width).ok_or_else(|| {
            Error::Truncated(format!("image raster needs {} bytes", count * width))
        })?;
        if width == 1 {
            samples.extend(body.iter().map(|&b| b as usize));
        } else {
            samples.extend(body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as usize));
        }
    } else {
        for _ in 0..count {
            samples.push(number(bytes, &mut pos, "sample")?);
        }
    }
    if let Some(bad) = samples.iter().find(|&&s| s > maxval) {
        return Err(Error::Invalid(format!("sample {bad} exceeds maxval {maxval}")));
    }
    let m = maxval as f64;
    Ok(Tensor::from_fn([1, channels, h, w], |[_, c, y, x]| {
        samples[(y * w + x) * channels + c] as f64 / m
    }))
}

fn skip_space(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        match bytes[*pos] {
            b'#' => {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            b if b.is_ascii_whitespace() => *pos += 1,
            _ => break,
        }
    }
}

fn token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    skip_space(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Truncated("image header ends early".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let t = token(bytes, pos)?;
    t.parse()
        .map_err(|_| Error::Invalid(format!("image {what} {t:?} is not a number")))
}

/// Writes a raw 8-bit P5 (one channel) or P6 (three channels).
pub fn encode_pnm(image: &Tensor) -> Result<Vec<u8>> {
    let [n, c, h, w] = image.shape();
    if n != 1 || !(c == 1 || c == 3) {
        return Err(Error::Config(format!(
            "image tensor must be (1, 1|3, h, w), got {:?}",
            image.shape()
        )));
    }
    let mut out = format!("{}\n{w} {h}\n255\n", if c == 1 { "P5" } else { "P6" }).into_bytes();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out.push((image.at([0, ch, y, x]).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    Ok(out)
}

pub fn read_image(path: &Path) -> Result<Tensor> {
    decode_pnm(&fs::read(path)?)
}

pub fn write_image(path: &Path, image: &Tensor) -> Result<()> {
    fs::write(path, encode_pnm(image)?)?;
    Ok(())
}

/// Replicates a graymap to three channels; pixmaps pass through.
pub fn to_rgb(image: &Tensor) -> Result<Tensor> {
    match image.c() {
        3 => Ok(image.clone()),
        1 => Tensor::concat_channels(&[image, image, image]),
        c => Err(Error::Config(format!("cannot convert {c}-channel image to RGB"))),
    }
}

const PALETTE: [[f64; 3]; 6] = [
    [1.0, 0.2, 0.2],
    [0.2, 1.0, 0.2],
    [0.3, 0.5, 1.0],
    [1.0, 1.0, 0.2],
    [1.0, 0.2, 1.0],
    [0.2, 1.0, 1.0],
];

/// Draws one-pixel box outlines, colored by class, onto an RGB image.
pub fn draw_boxes(image: &Tensor, dets: &[Detection]) -> Result<Tensor> {
    let mut out = to_rgb(image)?;
    let (h, w) = (out.h() as i64, out.w() as i64);
    for d in dets {
        let color = PALETTE[d.class_id % PALETTE.len()];
        let x1 = (d.bbox.x1.floor() as i64).clamp(0, w - 1);
        let y1 = (d.bbox.y1.floor() as i64).clamp(0, h - 1);
        let x2 = ((d.bbox.x2.ceil() as i64) - 1).clamp(0, w - 1);
        let y2 = ((d.bbox.y2.ceil() as i64) - 1).clamp(0, h - 1);
        let mut paint = |x: i64, y: i64| {
            for (ch, &v) in color.iter().enumerate() {
                out.set([0, ch, y as usize, x as usize], v);
            }
        };
        for x in x1..=x2 {
            paint(x, y1);
            paint(x, y2);
        }
        for y in y1..=y2 {
            paint(x1, y);
            paint(x2, y);
        }
    }
    Ok(out)
}
