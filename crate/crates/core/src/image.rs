//! RGB frames and binary Netpbm I/O (P6 frames, P5 edge maps and masks).

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::Field2D;

/// 8-bit RGB frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: vec![[0; 3]; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, data: Vec<[u8; 3]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (data.len(), 1),
            });
        }
        Ok(RgbImage {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        RgbImage {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, px: [u8; 3]) {
        self.data[y * self.width + x] = px;
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.data
    }

    /// One channel as a `[0, 1]` field.
    pub fn channel(&self, c: usize) -> Field2D {
        Field2D::from_vec(
            self.width,
            self.height,
            self.data.iter().map(|p| p[c] as f32 / 255.0).collect(),
        )
        .expect("dimensions are consistent")
    }

    /// Rec. 601 luma in `[0, 1]`.
    pub fn luma(&self) -> Field2D {
        Field2D::from_vec(
            self.width,
            self.height,
            self.data
                .iter()
                .map(|p| (0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32) / 255.0)
                .collect(),
        )
        .expect("dimensions are consistent")
    }

    /// Nearest-neighbour resize.
    pub fn resize_nearest(&self, width: usize, height: usize) -> RgbImage {
        if (width, height) == self.dims() {
            return self.clone();
        }
        RgbImage::from_fn(width, height, |x, y| {
            let sx = ((x as f64 + 0.5) * self.width as f64 / width as f64) as usize;
            let sy = ((y as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            self.get(sx.min(self.width - 1), sy.min(self.height - 1))
        })
    }
}

struct Header {
    width: usize,
    height: usize,
    maxval: usize,
    offset: usize,
}

fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::MalformedImage(format!(
            "expected magic {}",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while let Some(&c) = bytes.get(pos) {
                        pos += 1;
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::MalformedImage("header ended early".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|c| c.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::MalformedImage("expected a number in header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedImage("header number out of range".into()))?;
    }
    // exactly one whitespace byte before the raster
    if !bytes.get(pos).is_some_and(|c| c.is_ascii_whitespace()) {
        return Err(Error::MalformedImage("missing raster separator".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::MalformedImage("zero-sized image".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::MalformedImage(format!(
            "unsupported maxval {maxval}"
        )));
    }
    Ok(Header {
        width,
        height,
        maxval,
        offset: pos,
    })
}

fn scale_sample(v: u8, maxval: usize) -> u8 {
    if maxval == 255 {
        v
    } else {
        ((v as usize * 255 + maxval / 2) / maxval).min(255) as u8
    }
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let h = parse_header(bytes, b"P6")?;
    let need = h.width * h.height * 3;
    let raster = &bytes[h.offset..];
    if raster.len() < need {
        return Err(Error::Truncated {
            expected: need,
            found: raster.len(),
        });
    }
    let data = raster[..need]
        .chunks_exact(3)
        .map(|c| {
            [
                scale_sample(c[0], h.maxval),
                scale_sample(c[1], h.maxval),
                scale_sample(c[2], h.maxval),
            ]
        })
        .collect();
    RgbImage::from_pixels(h.width, h.height, data)
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.reserve(img.data.len() * 3);
    for p in &img.data {
        out.extend_from_slice(p);
    }
    out
}

/// Decodes a P5 file into a `[0, 1]` field (samples divided by 255).
pub fn decode_pgm(bytes: &[u8]) -> Result<Field2D> {
    let h = parse_header(bytes, b"P5")?;
    let need = h.width * h.height;
    let raster = &bytes[h.offset..];
    if raster.len() < need {
        return Err(Error::Truncated {
            expected: need,
            found: raster.len(),
        });
    }
    Field2D::from_vec(
        h.width,
        h.height,
        raster[..need]
            .iter()
            .map(|&v| scale_sample(v, h.maxval) as f32 / 255.0)
            .collect(),
    )
}

/// Encodes a `[0, 1]` field as P5, clamping and rounding to 8 bits.
pub fn encode_pgm(field: &Field2D) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", field.width(), field.height()).into_bytes();
    out.extend(
        field
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes)
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    write_bytes(path, &encode_ppm(img))
}

pub fn read_pgm(path: &Path) -> Result<Field2D> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn write_pgm(path: &Path, field: &Field2D) -> Result<()> {
    write_bytes(path, &encode_pgm(field))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}
