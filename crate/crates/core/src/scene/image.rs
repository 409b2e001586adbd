use std::io::{self, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn filled(height: usize, width: usize, color: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for _ in 0..height * width {
            data.extend_from_slice(&color);
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn from_data(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::shape(
                format!("{height}x{width}x3 values"),
                data.len(),
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> [f32; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, c: [f32; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&c);
    }

    pub fn count_color(&self, c: [f32; 3]) -> usize {
        self.data.chunks_exact(3).filter(|p| p == &c).count()
    }

    /// Average-pool by an integer factor.
    pub fn downsample(&self, factor: usize) -> Result<Image> {
        if factor == 0 || !self.height.is_multiple_of(factor) || !self.width.is_multiple_of(factor)
        {
            return Err(Error::shape(
                format!("dimensions divisible by {factor}"),
                format!("{}x{}", self.height, self.width),
            ));
        }
        let (h, w) = (self.height / factor, self.width / factor);
        let mut out = Image::filled(h, w, [0.0; 3]);
        let norm = 1.0 / (factor * factor) as f32;
        for r in 0..h {
            for c in 0..w {
                let mut acc = [0.0f32; 3];
                for dr in 0..factor {
                    for dc in 0..factor {
                        let p = self.get(r * factor + dr, c * factor + dc);
                        for k in 0..3 {
                            acc[k] += p[k];
                        }
                    }
                }
                out.set(r, c, acc.map(|v| v * norm));
            }
        }
        Ok(out)
    }

    /// Bilinear sample at continuous pixel coordinates `(u, v)`; pixel centers
    /// sit at half-integers and lookups outside clamp to the border.
    pub fn bilinear(&self, u: f64, v: f64) -> [f32; 3] {
        let x = (u - 0.5).clamp(0.0, (self.width - 1) as f64);
        let y = (v - 0.5).clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = ((x - x0 as f64) as f32, (y - y0 as f64) as f32);
        let (a, b, c, d) = (
            self.get(y0, x0),
            self.get(y0, x1),
            self.get(y1, x0),
            self.get(y1, x1),
        );
        let mut out = [0.0; 3];
        for k in 0..3 {
            let top = a[k] * (1.0 - fx) + b[k] * fx;
            let bot = c[k] * (1.0 - fx) + d[k] * fx;
            out[k] = top * (1.0 - fy) + bot * fy;
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Image) -> f32 {
        assert_eq!((self.height, self.width), (other.height, other.width));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    /// Additive Gaussian pixel noise, clamped to `[0, 1]`.
    pub fn with_noise(&self, sigma: f64, seed: u64) -> Image {
        if sigma <= 0.0 {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        let data = self
            .data
            .iter()
            .map(|&v| (v as f64 + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32)
            .collect();
        Image { data, ..*self }
    }

    pub fn write_ppm<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        out.write_all(&bytes)
    }

    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_ppm(io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    /// Parse a binary PPM (P6, maxval 255).
    pub fn read_ppm<R: Read>(mut input: R) -> Result<Image> {
        let mut buf = Vec::new();
        input
            .read_to_end(&mut buf)
            .map_err(|e| Error::io("<ppm>", e))?;
        let mut pos = 0;
        let mut fields = Vec::new();
        while fields.len() < 4 {
            while pos < buf.len() && buf[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Format {
                    offset: pos,
                    reason: "truncated PPM header".into(),
                });
            }
            fields.push(String::from_utf8_lossy(&buf[start..pos]).into_owned());
        }
        pos += 1;
        let bad = |reason: &str| Error::Format {
            offset: 0,
            reason: reason.to_string(),
        };
        if fields[0] != "P6" || fields[3] != "255" {
            return Err(bad("expected P6 with maxval 255"));
        }
        let width: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
        let height: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
        let body = buf
            .get(pos..pos + width * height * 3)
            .ok_or(Error::Format {
                offset: buf.len(),
                reason: "truncated PPM body".into(),
            })?;
        let data = body.iter().map(|&b| b as f32 / 255.0).collect();
        Image::from_data(height, width, data)
    }
}
