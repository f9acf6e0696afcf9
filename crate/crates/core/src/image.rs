//! Image tensors and PNG I/O.
//!
//! Samples are stored row-major by `(row, column, channel)` with a nominal
//! range of `[0, 1]`. Values produced inside the network may leave that range;
//! they are clamped only when encoding.

use std::io::Cursor;

use crate::error::{Error, Result};
use crate::real::Real;

/// H×W×C array of intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

/// Single-precision image, the type used at every I/O boundary.
pub type ImageTensor = Tensor<f32>;

fn check_dims(height: usize, width: usize, channels: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidDimension(format!("{height}x{width} image has no pixels")));
    }
    if channels != 1 && channels != 3 {
        return Err(Error::InvalidChannel { expected: 3, actual: channels });
    }
    Ok(())
}

impl<T: Real> Tensor<T> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        check_dims(height, width, channels)?;
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::InvalidDimension(format!(
                "data length {} does not match {height}x{width}x{channels} = {expected}",
                data.len()
            )));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::filled(height, width, channels, T::zero())
    }

    /// Builds a tensor from `f(row, col, channel)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        check_dims(height, width, channels)?;
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> T {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: T) {
        self.data[(row * self.width + col) * self.channels + channel] = value;
    }

    pub fn same_dims<U>(&self, other: &Tensor<U>) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub(crate) fn ensure_same_dims<U>(&self, other: &Tensor<U>, what: &str) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "{what}: dimension mismatch {}x{}x{} vs {}x{}x{}",
                self.height, self.width, self.channels, other.height, other.width, other.channels
            )))
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { data: self.data.iter().map(|&v| f(v)).collect(), ..*self }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| U::from_f64_lossy(v.as_f64())).collect(),
        }
    }

    pub fn clamped(&self) -> Self {
        self.map(|v| v.max(T::zero()).min(T::one()))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum::<f64>() / self.data.len() as f64
    }

    pub fn min_max(&self) -> (T, T) {
        self.data
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Splits an RGB tensor into three single-channel planes.
pub fn split_channels<T: Real>(img: &Tensor<T>) -> Result<[Tensor<T>; 3]> {
    if img.channels != 3 {
        return Err(Error::InvalidChannel { expected: 3, actual: img.channels });
    }
    let plane = |c: usize| Tensor {
        height: img.height,
        width: img.width,
        channels: 1,
        data: img.data.iter().skip(c).step_by(3).copied().collect(),
    };
    Ok([plane(0), plane(1), plane(2)])
}

/// Interleaves three single-channel planes back into an RGB tensor.
pub fn merge_channels<T: Real>(planes: &[Tensor<T>; 3]) -> Result<Tensor<T>> {
    for p in planes {
        if p.channels != 1 {
            return Err(Error::InvalidChannel { expected: 1, actual: p.channels });
        }
        planes[0].ensure_same_dims(p, "merge_channels")?;
    }
    let n = planes[0].data.len();
    let mut data = Vec::with_capacity(n * 3);
    for i in 0..n {
        data.push(planes[0].data[i]);
        data.push(planes[1].data[i]);
        data.push(planes[2].data[i]);
    }
    Ok(Tensor { height: planes[0].height, width: planes[0].width, channels: 3, data })
}

/// Decodes an 8- or 16-bit grayscale or truecolor PNG, dropping any alpha.
pub fn decode_png(bytes: &[u8]) -> Result<ImageTensor> {
    use png::{BitDepth, ColorType};

    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| Error::Decode(e.to_string()))?;
    let (color, depth) = reader.output_color_type();
    let (stride, keep) = match color {
        ColorType::Grayscale => (1, 1),
        ColorType::GrayscaleAlpha => (2, 1),
        ColorType::Rgb => (3, 3),
        ColorType::Rgba => (4, 3),
        ColorType::Indexed => {
            return Err(Error::UnsupportedFormat("palette PNGs are not supported".into()));
        }
    };
    let bytes_per_sample = match depth {
        BitDepth::Eight => 1,
        BitDepth::Sixteen => 2,
        other => {
            return Err(Error::UnsupportedFormat(format!("{other:?} bit depth")));
        }
    };

    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Decode("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Decode(e.to_string()))?;
    let (width, height) = (info.width as usize, info.height as usize);
    let buf = &buf[..info.buffer_size()];

    let mut data = Vec::with_capacity(width * height * keep);
    for row in buf.chunks_exact(info.line_size) {
        for px in row[..width * stride * bytes_per_sample].chunks_exact(stride * bytes_per_sample) {
            for s in 0..keep {
                let v = if bytes_per_sample == 1 {
                    px[s] as f32 / 255.0
                } else {
                    u16::from_be_bytes([px[2 * s], px[2 * s + 1]]) as f32 / 65535.0
                };
                data.push(v);
            }
        }
    }
    Tensor::new(height, width, keep, data)
}

/// Encodes as 8-bit PNG after clamping every sample to `[0, 1]`.
pub fn encode_png<T: Real>(img: &Tensor<T>) -> Result<Vec<u8>> {
    check_dims(img.height, img.width, img.channels)?;
    let color = if img.channels == 3 { png::ColorType::Rgb } else { png::ColorType::Grayscale };
    let samples: Vec<u8> = img
        .data
        .iter()
        .map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();

    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        encoder.set_color(color);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(|e| Error::Encode(e.to_string()))?;
        writer.write_image_data(&samples).map_err(|e| Error::Encode(e.to_string()))?;
    }
    Ok(out)
}
