use std::io::Write;

use crate::error::{Error, Result};

pub const WHITE: [u8; 3] = [255, 255, 255];
pub const BLACK: [u8; 3] = [0, 0, 0];

/// 8-bit RGB raster, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for RgbImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RgbImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl RgbImage {
    pub fn filled(width: u32, height: u32, color: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            data.extend_from_slice(&color);
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn put(&mut self, x: u32, y: u32, color: [u8; 3]) {
        let o = self.offset(x, y);
        self.data[o..o + 3].copy_from_slice(&color);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// Fills every pixel whose center lies within `radius` of the segment
    /// `a` to `b` (pixel coordinates, pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`).
    pub fn stroke_segment(&mut self, a: (f64, f64), b: (f64, f64), radius: f64, color: [u8; 3]) {
        let (w, h) = (self.width as f64, self.height as f64);
        let x_lo = (a.0.min(b.0) - radius - 0.5).floor().max(0.0);
        let x_hi = (a.0.max(b.0) + radius - 0.5).ceil().min(w - 1.0);
        let y_lo = (a.1.min(b.1) - radius - 0.5).floor().max(0.0);
        let y_hi = (a.1.max(b.1) + radius - 0.5).ceil().min(h - 1.0);
        if x_lo > x_hi || y_lo > y_hi {
            return;
        }
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        let r2 = radius * radius;
        for py in y_lo as u32..=y_hi as u32 {
            let cy = py as f64 + 0.5;
            for px in x_lo as u32..=x_hi as u32 {
                let cx = px as f64 + 0.5;
                let t = if len2 > 0.0 {
                    (((cx - a.0) * dx + (cy - a.1) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (ex, ey) = (a.0 + t * dx - cx, a.1 + t * dy - cy);
                if ex * ex + ey * ey <= r2 {
                    self.put(px, py, color);
                }
            }
        }
    }

    /// Luma conversion (ITU-R 601 weights, integer arithmetic). Leaves
    /// already-gray pixels unchanged.
    pub fn to_grayscale(&self) -> Self {
        let mut out = self.clone();
        for px in out.data.chunks_exact_mut(3) {
            let y = (299 * px[0] as u32 + 587 * px[1] as u32 + 114 * px[2] as u32 + 500) / 1000;
            px.fill(y as u8);
        }
        out
    }

    /// Rotates by `angle_deg` about the image center, nearest-neighbour
    /// sampling, uncovered pixels filled with `fill`. Positive angles turn
    /// the +x axis towards +y (clockwise on screen).
    pub fn rotated(&self, angle_deg: f64, fill: [u8; 3]) -> Self {
        if angle_deg == 0.0 {
            return self.clone();
        }
        let (sin, cos) = angle_deg.to_radians().sin_cos();
        let (cx, cy) = (self.width as f64 / 2.0, self.height as f64 / 2.0);
        let mut out = Self::filled(self.width, self.height, fill);
        for y in 0..self.height {
            for x in 0..self.width {
                let (qx, qy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                // inverse rotation maps output back to source
                let sx = cx + cos * qx + sin * qy;
                let sy = cy - sin * qx + cos * qy;
                if sx >= 0.0 && sy >= 0.0 && sx < self.width as f64 && sy < self.height as f64 {
                    out.put(x, y, self.get(sx as u32, sy as u32));
                }
            }
        }
        out
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_png(&mut buf)?;
        Ok(buf)
    }

    pub fn write_png<W: Write>(&self, writer: W) -> Result<()> {
        let to_err = |e: png::EncodingError| Error::io("<png>", std::io::Error::other(e.to_string()));
        let mut encoder = png::Encoder::new(writer, self.width, self.height);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_compression(png::Compression::Balanced);
        let mut w = encoder.write_header().map_err(to_err)?;
        w.write_image_data(&self.data).map_err(to_err)?;
        w.finish().map_err(to_err)
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let to_err = |e: png::DecodingError| Error::io("<png>", std::io::Error::other(e.to_string()));
        let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        let mut reader = decoder.read_info().map_err(to_err)?;
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader.next_frame(&mut buf).map_err(to_err)?;
        buf.truncate(info.buffer_size());
        let data = match info.color_type {
            png::ColorType::Rgb => buf,
            png::ColorType::Grayscale => buf.iter().flat_map(|&v| [v, v, v]).collect(),
            png::ColorType::Rgba => buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            other => {
                return Err(Error::io(
                    "<png>",
                    std::io::Error::other(format!("unsupported PNG color type {other:?}")),
                ))
            }
        };
        Ok(Self {
            width: info.width,
            height: info.height,
            data,
        })
    }
}
