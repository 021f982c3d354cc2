use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Image2D, IntensitySpace};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PBI1";

/// Which collection an image file belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImageDomain {
    A,
    B,
    #[serde(rename = "mask")]
    Mask,
}

/// JSON header of a `.pbi` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PbiHeader {
    pub shape: [usize; 2],
    pub dtype: String,
    pub space: IntensitySpace,
    pub domain: ImageDomain,
}

/// Serializes `img` into the `.pbi` byte layout.
pub fn encode_pbi(img: &Image2D, domain: ImageDomain) -> Vec<u8> {
    let header = PbiHeader {
        shape: [img.height(), img.width()],
        dtype: "f32".into(),
        space: img.space(),
        domain,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + json.len() + 4 * img.data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in img.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses `.pbi` bytes; `path` only labels errors.
pub fn decode_pbi(bytes: &[u8], path: &Path) -> Result<(Image2D, PbiHeader)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let truncated = |expected: usize| Error::TruncatedPayload {
        path: path.to_path_buf(),
        expected,
        actual: bytes.len(),
    };
    if bytes.len() < 8 {
        return Err(truncated(8));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let payload_start = 8 + header_len;
    if bytes.len() < payload_start {
        return Err(truncated(payload_start));
    }
    let mismatch = |reason: String| Error::HeaderMismatch {
        path: path.to_path_buf(),
        reason,
    };
    let header: PbiHeader = serde_json::from_slice(&bytes[8..payload_start])
        .map_err(|e| mismatch(format!("unreadable header: {e}")))?;
    if header.dtype != "f32" {
        return Err(mismatch(format!("unsupported dtype `{}`", header.dtype)));
    }
    let [h, w] = header.shape;
    let payload = &bytes[payload_start..];
    let expected = h * w * 4;
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected,
            actual: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(mismatch(format!(
            "payload has {} bytes, header shape {h}x{w} needs {expected}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let img = Image2D::new(h, w, data, header.space)?;
    Ok((img, header))
}

pub fn save_image(img: &Image2D, domain: ImageDomain, path: &Path) -> Result<()> {
    fs::write(path, encode_pbi(img, domain)).map_err(Error::io(path))
}

pub fn load_image(path: &Path) -> Result<Image2D> {
    load_image_with_header(path).map(|(img, _)| img)
}

pub fn load_image_with_header(path: &Path) -> Result<(Image2D, PbiHeader)> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    decode_pbi(&bytes, path)
}

/// 8-bit level of a unit-space value: `floor(255·u + 0.5)`.
pub fn quantize(unit: f32) -> u8 {
    (unit.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// 8-bit grayscale pixels of `img` after mapping to unit space.
pub fn to_gray8(img: &Image2D) -> Vec<u8> {
    img.to_unit().data().iter().map(|&v| quantize(v)).collect()
}

pub fn export_png(img: &Image2D, path: &Path) -> Result<()> {
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, to_gray8(img))
        .expect("buffer matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Png {
            path: path.to_path_buf(),
            source,
        })
}

/// Side-by-side concatenation of equally tall images, in the space of the first.
pub fn hconcat(images: &[Image2D]) -> Result<Image2D> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidConfig("no panels to concatenate".into()))?;
    let h = first.height();
    let total_w: usize = images.iter().map(Image2D::width).sum();
    let mut data = Vec::with_capacity(h * total_w);
    let converted: Vec<Image2D> = images
        .iter()
        .map(|img| {
            if img.height() != h {
                return Err(Error::ShapeMismatch {
                    expected: vec![h, img.width()],
                    actual: vec![img.height(), img.width()],
                });
            }
            Ok(match first.space() {
                IntensitySpace::Normalized => img.to_normalized(),
                IntensitySpace::Unit => img.to_unit(),
            })
        })
        .collect::<Result<_>>()?;
    for r in 0..h {
        for img in &converted {
            data.extend_from_slice(&img.data()[r * img.width()..(r + 1) * img.width()]);
        }
    }
    Image2D::new(h, total_w, data, first.space())
}
