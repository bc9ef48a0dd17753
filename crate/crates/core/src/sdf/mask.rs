//! Binary occupancy rasters and their image formats.

use std::io::Cursor;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    Unsupported(String),
    #[error("malformed image: {0}")]
    Malformed(String),
    #[error("image has zero size")]
    ZeroSize,
    #[error("bitmap has {got} entries, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("world extent must be finite and positive, got {0:?}")]
    Extent([f64; 2]),
}

/// Obstacle raster with `true` marking obstacle pixels.
///
/// Pixel `(i, j)` is column `i` from the left and row `j` from the bottom, so the
/// world frame has its origin at the bottom-left corner with `y` up.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMask {
    width: usize,
    height: usize,
    cells: Vec<bool>,
    extent: [f64; 2],
}

impl OccupancyMask {
    /// `cells` is row-major with row 0 at the bottom.
    pub fn new(
        width: usize,
        height: usize,
        cells: Vec<bool>,
        extent: [f64; 2],
    ) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::ZeroSize);
        }
        if cells.len() != width * height {
            return Err(MaskError::SizeMismatch {
                expected: width * height,
                got: cells.len(),
            });
        }
        if !extent.iter().all(|e| e.is_finite() && *e > 0.0) {
            return Err(MaskError::Extent(extent));
        }
        Ok(Self {
            width,
            height,
            cells,
            extent,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        extent: [f64; 2],
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self, MaskError> {
        let mut cells = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                cells.push(f(i, j));
            }
        }
        Self::new(width, height, cells, extent)
    }

    pub fn empty(width: usize, height: usize, extent: [f64; 2]) -> Result<Self, MaskError> {
        Self::new(width, height, vec![false; width * height], extent)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// World size `[m, n]` in meters.
    pub fn extent(&self) -> [f64; 2] {
        self.extent
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[j * self.width + i]
    }

    pub fn set(&mut self, i: usize, j: usize, obstacle: bool) {
        self.cells[j * self.width + i] = obstacle;
    }

    /// Obstacle lookup that treats everything outside the image as obstacle.
    pub fn is_obstacle(&self, i: i64, j: i64) -> bool {
        if i < 0 || j < 0 || i >= self.width as i64 || j >= self.height as i64 {
            return true;
        }
        self.get(i as usize, j as usize)
    }

    pub fn obstacle_count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn obstacle_fraction(&self) -> f64 {
        self.obstacle_count() as f64 / self.cells.len() as f64
    }

    /// Obstacle pixel on the image border or with a free 4-neighbour.
    pub fn is_outline(&self, i: usize, j: usize) -> bool {
        if !self.get(i, j) {
            return false;
        }
        if i == 0 || j == 0 || i + 1 == self.width || j + 1 == self.height {
            return true;
        }
        !self.get(i - 1, j) || !self.get(i + 1, j) || !self.get(i, j - 1) || !self.get(i, j + 1)
    }

    /// All outline pixels in row-major order.
    pub fn outline(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..self.height {
            for i in 0..self.width {
                if self.is_outline(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Occupancy fractions on a `g × g` grid, row-major from the bottom row.
    pub fn downsample(&self, g: usize) -> Vec<f64> {
        let mut sums = vec![0.0; g * g];
        let mut counts = vec![0.0; g * g];
        for j in 0..self.height {
            let gj = j * g / self.height;
            for i in 0..self.width {
                let gi = i * g / self.width;
                counts[gj * g + gi] += 1.0;
                if self.get(i, j) {
                    sums[gj * g + gi] += 1.0;
                }
            }
        }
        sums.iter()
            .zip(&counts)
            .map(|(s, c)| if *c > 0.0 { s / c } else { 0.0 })
            .collect()
    }

    /// Reads a binary PGM (`P5`) or 8-bit grayscale PNG; values below 128 are obstacles.
    pub fn load(path: impl AsRef<Path>, extent: [f64; 2]) -> Result<Self, MaskError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| MaskError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::decode(&bytes, extent)
    }

    pub fn decode(bytes: &[u8], extent: [f64; 2]) -> Result<Self, MaskError> {
        let (width, height, gray) = if bytes.starts_with(b"P5") {
            decode_pgm(bytes)?
        } else if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
            decode_png(bytes)?
        } else {
            return Err(MaskError::Unsupported(
                "expected a binary PGM (P5) or PNG file".into(),
            ));
        };
        if width == 0 || height == 0 {
            return Err(MaskError::ZeroSize);
        }
        // Image rows run top to bottom; mask rows run bottom to top.
        Self::from_fn(width, height, extent, |i, j| {
            gray[(height - 1 - j) * width + i] < 128
        })
    }

    /// Image rows top to bottom; obstacles black, free space white.
    fn gray_rows(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.width * self.height);
        for j in (0..self.height).rev() {
            for i in 0..self.width {
                out.push(if self.get(i, j) { 0 } else { 255 });
            }
        }
        out
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.gray_rows());
        out
    }

    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().expect("in-memory PNG header");
            writer
                .write_image_data(&self.gray_rows())
                .expect("in-memory PNG data");
        }
        out
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), MaskError> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(MaskError::Malformed("PGM header is truncated".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| MaskError::Malformed("PGM header field out of range".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(MaskError::Unsupported(format!("PGM maxval {maxval}")));
    }
    if !bytes.get(pos).is_some_and(|c| c.is_ascii_whitespace()) {
        return Err(MaskError::Malformed(
            "missing whitespace after PGM header".into(),
        ));
    }
    pos += 1;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| MaskError::Malformed("PGM dimensions overflow".into()))?;
    let data = bytes
        .get(pos..pos + n)
        .ok_or_else(|| MaskError::Malformed(format!("PGM pixel data shorter than {n} bytes")))?;
    let gray = data
        .iter()
        .map(|&v| ((v as usize * 255) / maxval) as u8)
        .collect();
    Ok((width, height, gray))
}

fn decode_png(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), MaskError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| MaskError::Malformed(e.to_string()))?;
    let (color, depth) = reader.output_color_type();
    if color != png::ColorType::Grayscale || depth != png::BitDepth::Eight {
        return Err(MaskError::Unsupported(format!(
            "PNG must be 8-bit grayscale, got {color:?} {depth:?}"
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| MaskError::Malformed("PNG too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| MaskError::Malformed(e.to_string()))?;
    let (width, height) = (info.width as usize, info.height as usize);
    let stride = info.line_size;
    let mut gray = Vec::with_capacity(width * height);
    for row in 0..height {
        gray.extend_from_slice(&buf[row * stride..row * stride + width]);
    }
    Ok((width, height, gray))
}
