//! Binary PPM (P6) images and their tensor form.
//!
//! Tensors are `1 × 3 × H × W` with values in `[−1, 1]`; a byte `v` maps to
//! `v / 127.5 − 1` and back via `round((v + 1) · 127.5)`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// 8-bit RGB raster, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height * 3 {
            return Err(Error::Format(format!(
                "{width}×{height} image needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
    comments: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) -> Result<()> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    self.comments += 1;
                    if self.comments > 1 {
                        return Err(Error::Format("more than one header comment line".into()));
                    }
                    while let Some(&b) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space()?;
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format(format!("expected {what} in header")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("{what} out of range")))
    }
}

/// Parses a P6 file with maxval 255.
pub fn parse_ppm(bytes: &[u8]) -> Result<RgbImage> {
    if !bytes.starts_with(b"P6") {
        return Err(Error::Format("missing P6 magic".into()));
    }
    let mut h = Header {
        bytes,
        pos: 2,
        comments: 0,
    };
    if !h.bytes.get(h.pos).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(Error::Format("missing whitespace after magic".into()));
    }
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("empty image {width}×{height}")));
    }
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported maxval {maxval} (only 255)")));
    }
    match bytes.get(h.pos) {
        Some(b) if b.is_ascii_whitespace() => h.pos += 1,
        _ => return Err(Error::Format("missing whitespace before payload".into())),
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| Error::Format(format!("{width}×{height} is too large")))?;
    let payload = &bytes[h.pos..];
    if payload.len() < need {
        return Err(Error::Format(format!(
            "truncated payload: {} of {need} bytes",
            payload.len()
        )));
    }
    RgbImage::new(width, height, payload[..need].to_vec())
}

/// Serializes as P6 with an optional single comment line.
pub fn encode_ppm(image: &RgbImage, comment: Option<&str>) -> Vec<u8> {
    let mut out = b"P6\n".to_vec();
    if let Some(c) = comment {
        let line: String = c.chars().map(|ch| if ch == '\n' || ch == '\r' { ' ' } else { ch }).collect();
        out.extend_from_slice(format!("# {line}\n").as_bytes());
    }
    out.extend_from_slice(format!("{} {}\n255\n", image.width, image.height).as_bytes());
    out.extend_from_slice(&image.pixels);
    out
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ppm(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_ppm(image: &RgbImage, path: &Path, comment: Option<&str>) -> Result<()> {
    fs::write(path, encode_ppm(image, comment)).map_err(|e| Error::io(path, e))
}

/// Planar `3 × H × W` floats in byte units from interleaved pixels.
fn planar(image: &RgbImage) -> Vec<f64> {
    let n = image.width * image.height;
    let mut out = vec![0.0; 3 * n];
    for (p, rgb) in image.pixels.chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * n + p] = f64::from(rgb[c]);
        }
    }
    out
}

/// Bilinear resampling of planar channels with half-pixel centers.
pub fn resize_bilinear(src: &[f64], channels: usize, h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let taps = |out: usize, input: usize| -> Vec<(usize, usize, f64)> {
        let scale = input as f64 / out as f64;
        (0..out)
            .map(|o| {
                let pos = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(input - 1);
                (lo, hi, pos - lo as f64)
            })
            .collect()
    };
    let ys = taps(out_h, h);
    let xs = taps(out_w, w);
    let mut out = Vec::with_capacity(channels * out_h * out_w);
    for c in 0..channels {
        let plane = &src[c * h * w..(c + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    out
}

/// `1 × 3 × size × size` tensor in `[−1, 1]`, resampled when the image is another size.
pub fn image_to_tensor<T: Element>(image: &RgbImage, size: usize) -> Result<Tensor<T>> {
    if size == 0 {
        return Err(Error::invalid("image_to_tensor", "target size must be positive"));
    }
    let mut values = planar(image);
    if image.width != size || image.height != size {
        values = resize_bilinear(&values, 3, image.height, image.width, size, size);
    }
    Tensor::new([1, 3, size, size], values.into_iter().map(|v| T::of(v / 127.5 - 1.0)).collect())
}

/// `1 × 3 × H × W` tensor in `[−1, 1]` at the image's own size.
pub fn image_to_tensor_native<T: Element>(image: &RgbImage) -> Result<Tensor<T>> {
    let values = planar(image);
    Tensor::new(
        [1, 3, image.height, image.width],
        values.into_iter().map(|v| T::of(v / 127.5 - 1.0)).collect(),
    )
}

/// A smooth landscape (sky, sun, ground) for demos and tests.
///
/// `warm` selects a sunset palette; otherwise the palette is a cool midday one.
pub fn synthetic_scene(size: usize, warm: bool) -> RgbImage {
    let mut pixels = Vec::with_capacity(3 * size * size);
    for y in 0..size {
        for x in 0..size {
            let (fy, fx) = (y as f64 / size as f64, x as f64 / size as f64);
            let sun = ((fx - 0.7).powi(2) + (fy - 0.25).powi(2)).sqrt() < 0.12;
            let ripple = (fx * 6.0).sin() * 0.05;
            let rgb = match (sun, fy < 0.55, warm) {
                (true, _, true) => [1.0, 0.6, 0.2],
                (true, _, false) => [1.0, 1.0, 0.8],
                (false, true, true) => [0.9 - 0.4 * fy, 0.4 + 0.2 * fy, 0.3],
                (false, true, false) => [0.3 + 0.3 * fy, 0.5 + 0.3 * fy, 0.95],
                (false, false, true) => [0.4 + ripple, 0.25, 0.15],
                (false, false, false) => [0.15, 0.5 + ripple, 0.2],
            };
            pixels.extend(rgb.iter().map(|v: &f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        }
    }
    RgbImage {
        width: size,
        height: size,
        pixels,
    }
}

/// Quantizes a `1 × 3 × H × W` (or `3 × H × W`) tensor after clamping to `[−1, 1]`.
pub fn tensor_to_image<T: Element>(t: &Tensor<T>) -> Result<RgbImage> {
    let (h, w) = match *t.shape() {
        [1, 3, h, w] | [3, h, w] => (h, w),
        ref s => return Err(Error::shape("tensor_to_image", format!("expected 1×3×H×W, got {s:?}"))),
    };
    let n = h * w;
    let data = t.data();
    let mut pixels = vec![0u8; 3 * n];
    for c in 0..3 {
        for p in 0..n {
            let v = data[c * n + p].to_f64().unwrap_or(f64::NAN);
            if v.is_nan() {
                return Err(Error::NonFinite("image pixel".into()));
            }
            pixels[p * 3 + c] = ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8;
        }
    }
    RgbImage::new(w, h, pixels)
}

pub fn load_image<T: Element>(path: &Path, target_size: usize) -> Result<Tensor<T>> {
    image_to_tensor(&read_ppm(path)?, target_size)
}

pub fn save_image<T: Element>(t: &Tensor<T>, path: &Path, comment: Option<&str>) -> Result<()> {
    write_ppm(&tensor_to_image(t)?, path, comment)
}

/// `(x + 1) / 2` as a `3 × H × W` tensor in `[0, 1]`, the layout the Laplacian builder expects.
pub fn unit_range<T: Element>(t: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, c, h, w) = t.dims4("unit_range")?;
    let half = T::of(0.5);
    let data = t.data().iter().map(|&v| ((v + T::one()) * half).max(T::zero()).min(T::one())).collect();
    Tensor::new([c, h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(w: usize, h: usize) -> RgbImage {
        let pixels = (0..w * h * 3).map(|i| (i * 37 % 256) as u8).collect();
        RgbImage::new(w, h, pixels).unwrap()
    }

    #[test]
    fn endpoints_map_to_unit_interval() {
        let img = RgbImage::new(1, 1, vec![0, 255, 0]).unwrap();
        let t = image_to_tensor::<f64>(&img, 1).unwrap();
        assert_eq!(t.data(), &[-1.0, 1.0, -1.0]);
    }

    #[test]
    fn encode_parse_round_trip_with_comment() {
        let img = sample(5, 3);
        let bytes = encode_ppm(&img, Some("hello"));
        assert!(bytes.starts_with(b"P6\n# hello\n5 3\n255\n"));
        assert_eq!(parse_ppm(&bytes).unwrap(), img);
    }

    #[test]
    fn same_size_load_is_exact() {
        let img = sample(4, 4);
        let t = image_to_tensor::<f64>(&img, 4).unwrap();
        assert_eq!(tensor_to_image(&t).unwrap(), img);
    }

    #[test]
    fn extreme_tensors_quantize_to_extreme_bytes() {
        let lo = tensor_to_image(&Tensor::<f32>::full([1, 3, 2, 2], -1.0)).unwrap();
        assert!(lo.pixels.iter().all(|&b| b == 0));
        let hi = tensor_to_image(&Tensor::<f32>::full([1, 3, 2, 2], 1.0)).unwrap();
        assert!(hi.pixels.iter().all(|&b| b == 255));
        let over = tensor_to_image(&Tensor::<f32>::full([1, 3, 1, 1], 4.0)).unwrap();
        assert!(over.pixels.iter().all(|&b| b == 255));
    }

    #[test]
    fn header_errors() {
        for bad in [
            &b"P5\n1 1\n255\n\0\0\0"[..],
            b"P6\n1 1\n65535\n\0\0\0",
            b"P6\n2 2\n255\n\0\0\0",
            b"P6\n1\n",
            b"P6 # a\n# b\n1 1 255\n\0\0\0",
            b"P61 1 255\n\0\0\0",
            b"P6\n0 4\n255\n",
        ] {
            assert!(matches!(parse_ppm(bad), Err(Error::Format(_))), "{:?}", String::from_utf8_lossy(bad));
        }
        assert!(parse_ppm(b"P6 1  1\t255 \x01\x02\x03").is_ok());
    }

    #[test]
    fn bilinear_preserves_constants_and_halves_by_averaging() {
        let src = vec![2.0; 3 * 6 * 4];
        assert!(resize_bilinear(&src, 3, 6, 4, 5, 7).iter().all(|&v| (v - 2.0).abs() < 1e-12));
        // 4 → 2 with half-pixel centers samples at 0.5 and 2.5
        let row = vec![0.0, 10.0, 20.0, 30.0];
        assert_eq!(resize_bilinear(&row, 1, 1, 4, 1, 2), vec![5.0, 25.0]);
    }
}
