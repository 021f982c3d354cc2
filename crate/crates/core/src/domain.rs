//! Image and latent value types shared across the pipeline.

use pathbone_tape::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Intensity convention of an [`Image2D`].
///
/// Networks consume and produce `Normalized` images; metrics work in `Unit`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensitySpace {
    /// Values in `[-1, 1]`.
    Normalized,
    /// Values in `[0, 1]`.
    Unit,
}

impl IntensitySpace {
    pub fn bounds(self) -> (f32, f32) {
        match self {
            IntensitySpace::Normalized => (-1.0, 1.0),
            IntensitySpace::Unit => (0.0, 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IntensitySpace::Normalized => "normalized",
            IntensitySpace::Unit => "unit",
        }
    }
}

/// Single-channel row-major image whose values respect its intensity space.
#[derive(Clone, Debug, PartialEq)]
pub struct Image2D {
    height: usize,
    width: usize,
    data: Vec<f32>,
    space: IntensitySpace,
}

impl Image2D {
    /// Validates shape, finiteness and the bounds of `space`.
    pub fn new(height: usize, width: usize, data: Vec<f32>, space: IntensitySpace) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch {
                expected: vec![height, width],
                actual: vec![data.len()],
            });
        }
        let (lo, hi) = space.bounds();
        for (index, &value) in data.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("image pixel {index}"),
                });
            }
            if value < lo || value > hi {
                return Err(Error::OutOfRange {
                    value,
                    space: space.name(),
                    index,
                });
            }
        }
        Ok(Self {
            height,
            width,
            data,
            space,
        })
    }

    /// Clamps into the bounds of `space`; rejects non-finite values.
    pub fn clamped(
        height: usize,
        width: usize,
        mut data: Vec<f32>,
        space: IntensitySpace,
    ) -> Result<Self> {
        let (lo, hi) = space.bounds();
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("image pixel {index}"),
            });
        }
        data.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        Self::new(height, width, data, space)
    }

    pub fn filled(height: usize, width: usize, value: f32, space: IntensitySpace) -> Result<Self> {
        Self::new(height, width, vec![value; height * width], space)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        space: IntensitySpace,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(height, width, data, space)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn space(&self) -> IntensitySpace {
        self.space
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    /// Copy mapped into unit space (`(v + 1) / 2` for normalized input).
    pub fn to_unit(&self) -> Image2D {
        match self.space {
            IntensitySpace::Unit => self.clone(),
            IntensitySpace::Normalized => Image2D {
                height: self.height,
                width: self.width,
                data: self
                    .data
                    .iter()
                    .map(|&v| ((v + 1.0) * 0.5).clamp(0.0, 1.0))
                    .collect(),
                space: IntensitySpace::Unit,
            },
        }
    }

    /// Copy mapped into normalized space (`2v − 1` for unit input).
    pub fn to_normalized(&self) -> Image2D {
        match self.space {
            IntensitySpace::Normalized => self.clone(),
            IntensitySpace::Unit => Image2D {
                height: self.height,
                width: self.width,
                data: self
                    .data
                    .iter()
                    .map(|&v| (v * 2.0 - 1.0).clamp(-1.0, 1.0))
                    .collect(),
                space: IntensitySpace::Normalized,
            },
        }
    }

    pub fn require_space(&self, expected: IntensitySpace) -> Result<()> {
        if self.space == expected {
            Ok(())
        } else {
            Err(Error::WrongSpace {
                expected: expected.name(),
                actual: self.space.name(),
            })
        }
    }

    pub fn require_same_shape(&self, other: &Image2D) -> Result<()> {
        if self.shape() == other.shape() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: vec![self.height, self.width],
                actual: vec![other.height, other.width],
            })
        }
    }

    /// FNV-1a over the little-endian pixel bytes; used to count distinct images.
    pub fn checksum(&self) -> u64 {
        let mut hash = 0xcbf2_9ce4_8422_2325u64;
        for v in &self.data {
            for b in v.to_le_bytes() {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        hash
    }
}

/// Binary image, e.g. a bone segmentation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch {
                expected: vec![height, width],
                actual: vec![data.len()],
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// 0/1 rendering in unit space.
    pub fn to_image(&self) -> Image2D {
        Image2D {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
            space: IntensitySpace::Unit,
        }
    }

    /// Pixels `>= 0.5` of a unit-space image.
    pub fn from_image(image: &Image2D) -> Result<Self> {
        image.require_space(IntensitySpace::Unit)?;
        Ok(Self {
            height: image.height,
            width: image.width,
            data: image.data.iter().map(|&v| v >= 0.5).collect(),
        })
    }
}

/// Batched latent Gaussian parameters and the code actually decoded.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode<T> {
    pub mean: Tensor<T>,
    pub log_variance: Tensor<T>,
    pub sample: Tensor<T>,
}

impl<T: Scalar> LatentCode<T> {
    pub fn new(mean: Tensor<T>, log_variance: Tensor<T>, sample: Tensor<T>) -> Result<Self> {
        if mean.shape() != log_variance.shape() || mean.shape() != sample.shape() {
            return Err(Error::ShapeMismatch {
                expected: mean.shape().to_vec(),
                actual: sample.shape().to_vec(),
            });
        }
        Ok(Self {
            mean,
            log_variance,
            sample,
        })
    }
}

/// Stacks same-shaped images into an `(N, 1, H, W)` tensor.
pub fn images_to_tensor<T: Scalar>(images: &[Image2D]) -> Result<Tensor<T>> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidConfig("empty image batch".into()))?;
    let (h, w) = first.shape();
    let mut data = Vec::with_capacity(images.len() * h * w);
    for img in images {
        first.require_same_shape(img)?;
        data.extend(img.data().iter().map(|&v| T::from_f64_lossy(v as f64)));
    }
    Ok(Tensor::new([images.len(), 1, h, w], data))
}

/// Splits an `(N, 1, H, W)` tensor into images, clamping into `space`.
pub fn tensor_to_images<T: Scalar>(
    tensor: &Tensor<T>,
    space: IntensitySpace,
) -> Result<Vec<Image2D>> {
    let (n, c, h, w) = tensor.dims4();
    if c != 1 {
        return Err(Error::ShapeMismatch {
            expected: vec![n, 1, h, w],
            actual: tensor.shape().to_vec(),
        });
    }
    tensor
        .data()
        .chunks(h * w)
        .map(|plane| {
            Image2D::clamped(
                h,
                w,
                plane.iter().map(|v| v.to_f64_lossy() as f32).collect(),
                space,
            )
        })
        .collect()
}

/// CT intensity window and bone threshold, in Hounsfield units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HuCalibration {
    pub hu_min: f64,
    pub hu_max: f64,
    pub bone_threshold_hu: f64,
}

impl Default for HuCalibration {
    fn default() -> Self {
        Self {
            hu_min: -1000.0,
            hu_max: 2000.0,
            bone_threshold_hu: 300.0,
        }
    }
}

impl HuCalibration {
    pub fn new(hu_min: f64, hu_max: f64, bone_threshold_hu: f64) -> Result<Self> {
        let cal = Self {
            hu_min,
            hu_max,
            bone_threshold_hu,
        };
        cal.validate()?;
        Ok(cal)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.hu_min, self.hu_max, self.bone_threshold_hu]
            .iter()
            .all(|v| v.is_finite())
            && self.hu_min <= self.bone_threshold_hu
            && self.bone_threshold_hu <= self.hu_max
            && self.hu_min < self.hu_max;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "HU calibration needs hu_min <= bone_threshold <= hu_max with hu_min < hu_max, got {self:?}"
            )))
        }
    }

    /// Maps one HU value into `[-1, 1]`.
    pub fn normalize(&self, hu: f64) -> f64 {
        ((hu - self.hu_min) / (self.hu_max - self.hu_min)).clamp(0.0, 1.0) * 2.0 - 1.0
    }

    /// Inverse of [`normalize`](Self::normalize) on the clamped window.
    pub fn denormalize(&self, v: f64) -> f64 {
        (v + 1.0) * 0.5 * (self.hu_max - self.hu_min) + self.hu_min
    }

    /// The bone threshold expressed in normalized intensity.
    pub fn normalized_bone_threshold(&self) -> f64 {
        self.normalize(self.bone_threshold_hu)
    }
}

/// Windows a raw HU slice into a normalized image.
pub fn normalize_hu(
    height: usize,
    width: usize,
    raw: &[f32],
    cal: &HuCalibration,
) -> Result<Image2D> {
    cal.validate()?;
    if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("raw HU value at index {i}"),
        });
    }
    let data = raw
        .iter()
        .map(|&v| cal.normalize(v as f64) as f32)
        .collect();
    Image2D::clamped(height, width, data, IntensitySpace::Normalized)
}

/// Threshold for bone masks on normalized CT.
pub fn normalized_bone_threshold(cal: &HuCalibration) -> f64 {
    cal.normalized_bone_threshold()
}
