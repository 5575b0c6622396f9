//! PNM image ingestion/emission and label-map dumps.
//!
//! Supported: PGM (`P2` plain, `P5` raw) and PPM (`P3` plain, `P6` raw) with
//! maxval up to 65535. Raw samples wider than 8 bits are big-endian. Label
//! maps are written either as 16-bit raw PGM or as CSV (one lattice row per
//! line, LF line endings).

use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};
use crate::geometry::{Lattice, Pixel};

/// Multi-band raster. Samples are stored pixel-major in raster order:
/// the value of band `k` at linear index `i` sits at `i * bands + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    lattice: Lattice,
    bands: usize,
    max_value: u32,
    samples: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(lattice: Lattice, bands: usize, max_value: u32, samples: Vec<f64>) -> Result<Self> {
        if bands == 0 {
            return domain("image must have at least one band");
        }
        if max_value == 0 {
            return domain("max_value must be positive");
        }
        if samples.len() != lattice.len() * bands {
            return domain(format!(
                "expected {} samples for {}x{}x{}, got {}",
                lattice.len() * bands,
                lattice.width(),
                lattice.height(),
                bands,
                samples.len()
            ));
        }
        if let Some(bad) = samples.iter().position(|s| !s.is_finite()) {
            return domain(format!("sample {bad} is not finite"));
        }
        Ok(ImageBuffer { lattice, bands, max_value, samples })
    }

    /// Single-band image from a closure over 1-based pixels.
    pub fn from_fn(lattice: Lattice, max_value: u32, f: impl FnMut(Pixel) -> f64) -> Result<Self> {
        let samples = lattice.pixels().map(f).collect();
        Self::new(lattice, 1, max_value, samples)
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn max_value(&self) -> u32 {
        self.max_value
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// All bands of the pixel at linear index `i`.
    #[inline]
    pub fn pixel_at(&self, i: usize) -> &[f64] {
        &self.samples[i * self.bands..(i + 1) * self.bands]
    }

    pub fn get(&self, p: Pixel, band: usize) -> f64 {
        self.samples[self.lattice.index(p) * self.bands + band]
    }
}

/// Per-pixel label map.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelImage {
    lattice: Lattice,
    labels: Vec<u32>,
}

impl LabelImage {
    pub fn new(lattice: Lattice, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != lattice.len() {
            return domain(format!("expected {} labels, got {}", lattice.len(), labels.len()));
        }
        Ok(LabelImage { lattice, labels })
    }

    pub fn filled(lattice: Lattice, label: u32) -> Self {
        LabelImage { lattice, labels: vec![label; lattice.len()] }
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub(crate) fn labels_mut(&mut self) -> &mut [u32] {
        &mut self.labels
    }

    pub fn into_labels(self) -> Vec<u32> {
        self.labels
    }

    pub fn get(&self, p: Pixel) -> u32 {
        self.labels[self.lattice.index(p)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PnmFormat {
    /// Plain greymap.
    P2,
    /// Plain pixmap.
    P3,
    /// Raw greymap.
    P5,
    /// Raw pixmap.
    P6,
}

impl PnmFormat {
    fn magic(self) -> &'static str {
        match self {
            PnmFormat::P2 => "P2",
            PnmFormat::P3 => "P3",
            PnmFormat::P5 => "P5",
            PnmFormat::P6 => "P6",
        }
    }

    fn bands(self) -> usize {
        match self {
            PnmFormat::P2 | PnmFormat::P5 => 1,
            PnmFormat::P3 | PnmFormat::P6 => 3,
        }
    }

    fn is_plain(self) -> bool {
        matches!(self, PnmFormat::P2 | PnmFormat::P3)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelFormat {
    /// Raw PGM, maxval 65535.
    Pgm16,
    Csv,
}

fn parse_err<T>(offset: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Parse { offset, message: message.into() })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                _ => break,
            }
        }
    }

    fn uint(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        let mut value: u64 = 0;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            value = value * 10 + u64::from(self.bytes[self.pos] - b'0');
            if value > u64::from(u32::MAX) {
                return parse_err(start, format!("{what} does not fit in 32 bits"));
            }
            self.pos += 1;
        }
        if self.pos == start {
            if self.pos >= self.bytes.len() {
                return parse_err(self.pos, format!("unexpected end of data, expected {what}"));
            }
            return parse_err(self.pos, format!("expected {what}"));
        }
        if self.pos < self.bytes.len() && !is_separator(self.bytes[self.pos]) {
            return parse_err(self.pos, format!("invalid character after {what}"));
        }
        Ok(value as u32)
    }
}

fn is_separator(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c | b'#')
}

struct Header {
    format: PnmFormat,
    lattice: Lattice,
    max_value: u32,
}

fn read_header(cur: &mut Cursor<'_>) -> Result<Header> {
    if cur.bytes.len() < 2 || cur.bytes[0] != b'P' {
        return parse_err(0, "missing PNM magic number");
    }
    let format = match cur.bytes[1] {
        b'2' => PnmFormat::P2,
        b'3' => PnmFormat::P3,
        b'5' => PnmFormat::P5,
        b'6' => PnmFormat::P6,
        _ => return parse_err(1, "unsupported PNM variant (expected P2, P3, P5 or P6)"),
    };
    cur.pos = 2;
    if cur.pos < cur.bytes.len() && !is_separator(cur.bytes[cur.pos]) {
        return parse_err(cur.pos, "expected whitespace after magic number");
    }
    cur.skip_space_and_comments();
    let width_at = cur.pos;
    let width = cur.uint("width")?;
    let height = cur.uint("height")?;
    let lattice = Lattice::new(width, height)
        .or_else(|_| parse_err(width_at, format!("invalid dimensions {width}x{height}")))?;
    cur.skip_space_and_comments();
    let maxval_at = cur.pos;
    let max_value = cur.uint("maxval")?;
    if !(1..=65535).contains(&max_value) {
        return parse_err(maxval_at, format!("maxval {max_value} outside [1, 65535]"));
    }
    Ok(Header { format, lattice, max_value })
}

/// Decodes a PGM or PPM file.
pub fn load_pnm(bytes: &[u8]) -> Result<ImageBuffer> {
    let mut cur = Cursor { bytes, pos: 0 };
    let h = read_header(&mut cur)?;
    let bands = h.format.bands();
    let count = h.lattice.len() * bands;
    let mut samples = Vec::with_capacity(count);

    if h.format.is_plain() {
        for _ in 0..count {
            let at = {
                cur.skip_space_and_comments();
                cur.pos
            };
            let v = cur.uint("sample")?;
            if v > h.max_value {
                return parse_err(at, format!("sample {v} exceeds maxval {}", h.max_value));
            }
            samples.push(f64::from(v));
        }
    } else {
        // Exactly one whitespace byte separates maxval from the raster.
        if cur.pos >= bytes.len() {
            return parse_err(cur.pos, "unexpected end of data before raster");
        }
        cur.pos += 1;
        let width = if h.max_value < 256 { 1 } else { 2 };
        let need = count * width;
        if bytes.len() - cur.pos < need {
            return parse_err(
                bytes.len(),
                format!("raster truncated: need {need} bytes, have {}", bytes.len() - cur.pos),
            );
        }
        for (k, chunk) in bytes[cur.pos..cur.pos + need].chunks_exact(width).enumerate() {
            let v = if width == 1 {
                u32::from(chunk[0])
            } else {
                u32::from(u16::from_be_bytes([chunk[0], chunk[1]]))
            };
            if v > h.max_value {
                return parse_err(
                    cur.pos + k * width,
                    format!("sample {v} exceeds maxval {}", h.max_value),
                );
            }
            samples.push(f64::from(v));
        }
    }
    ImageBuffer::new(h.lattice, bands, h.max_value, samples)
}

/// Encodes an image. Samples must be integers in `[0, max_value]` and the
/// band count must match the format.
pub fn save_pnm(img: &ImageBuffer, format: PnmFormat) -> Result<Vec<u8>> {
    if img.bands != format.bands() {
        return domain(format!(
            "{} needs {} band(s), image has {}",
            format.magic(),
            format.bands(),
            img.bands
        ));
    }
    if img.max_value > 65535 {
        return domain(format!("max_value {} exceeds 65535", img.max_value));
    }
    let mut ints = Vec::with_capacity(img.samples.len());
    for (k, &s) in img.samples.iter().enumerate() {
        if s.fract() != 0.0 || s < 0.0 || s > f64::from(img.max_value) {
            return domain(format!("sample {k} = {s} is not an integer in [0, {}]", img.max_value));
        }
        ints.push(s as u32);
    }
    let lat = img.lattice;
    let mut out = format!("{}\n{} {}\n{}\n", format.magic(), lat.width(), lat.height(), img.max_value)
        .into_bytes();
    if format.is_plain() {
        let per_row = lat.width() as usize * img.bands;
        let mut text = String::new();
        for row in ints.chunks(per_row) {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    text.push(' ');
                }
                let _ = write!(text, "{v}");
            }
            text.push('\n');
        }
        out.extend_from_slice(text.as_bytes());
    } else if img.max_value < 256 {
        out.extend(ints.iter().map(|&v| v as u8));
    } else {
        for v in ints {
            out.extend_from_slice(&(v as u16).to_be_bytes());
        }
    }
    Ok(out)
}

/// Serializes a label map.
pub fn save_labels(lm: &LabelImage, format: LabelFormat) -> Result<Vec<u8>> {
    match format {
        LabelFormat::Pgm16 => {
            if let Some(&label) = lm.labels.iter().find(|&&l| l > 65535) {
                return Err(Error::LabelOverflow { label, limit: 65535 });
            }
            let lat = lm.lattice;
            let mut out = format!("P5\n{} {}\n65535\n", lat.width(), lat.height()).into_bytes();
            out.reserve(lm.labels.len() * 2);
            for &l in &lm.labels {
                out.extend_from_slice(&(l as u16).to_be_bytes());
            }
            Ok(out)
        }
        LabelFormat::Csv => {
            let mut text = String::new();
            for row in lm.labels.chunks(lm.lattice.width() as usize) {
                for (k, l) in row.iter().enumerate() {
                    if k > 0 {
                        text.push(',');
                    }
                    let _ = write!(text, "{l}");
                }
                text.push('\n');
            }
            Ok(text.into_bytes())
        }
    }
}

/// Reads a label map written by [`save_labels`], or any single-band PGM.
/// Input starting with `P` is parsed as PNM, anything else as CSV.
pub fn load_labels(bytes: &[u8]) -> Result<LabelImage> {
    if bytes.first() == Some(&b'P') {
        let img = load_pnm(bytes)?;
        if img.bands != 1 {
            return parse_err(0, "label maps must be single-band (PGM)");
        }
        let labels = img.samples.iter().map(|&s| s as u32).collect();
        return LabelImage::new(img.lattice, labels);
    }
    load_csv_labels(bytes)
}

fn load_csv_labels(bytes: &[u8]) -> Result<LabelImage> {
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut height = 0usize;
    let mut line_start = 0usize;
    for line in bytes.split(|&b| b == b'\n') {
        let this_start = line_start;
        line_start += line.len() + 1;
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let mut n = 0usize;
        let mut field_start = this_start;
        for field in line.split(|&b| b == b',') {
            let text = std::str::from_utf8(field)
                .ok()
                .map(str::trim)
                .filter(|t| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit()));
            let value = text.and_then(|t| t.parse::<u32>().ok());
            match value {
                Some(v) => labels.push(v),
                None => return parse_err(field_start, "expected an unsigned integer label"),
            }
            field_start += field.len() + 1;
            n += 1;
        }
        match width {
            None => width = Some(n),
            Some(w) if w != n => {
                return parse_err(this_start, format!("row has {n} labels, expected {w}"))
            }
            _ => {}
        }
        height += 1;
    }
    let Some(width) = width else {
        return parse_err(0, "empty label file");
    };
    let lattice = Lattice::new(width as u32, height as u32)
        .or_else(|_| parse_err(0, "invalid label dimensions"))?;
    LabelImage::new(lattice, labels)
}

/// Pseudo-colour rendering of a label map as an 8-bit RGB image.
///
/// Distinct labels are ranked in ascending order and rank `k` maps to the
/// 24-bit colour `(k * a + b) mod 2^24`, with `a` odd and `b` drawn from a
/// ChaCha8 stream seeded by `seed`. Since `a` is odd the map is a bijection,
/// so up to 2^24 labels receive pairwise distinct colours.
pub fn colorize(lm: &LabelImage, seed: u64) -> ImageBuffer {
    const MASK: u64 = (1 << 24) - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = (u64::from(rng.next_u32()) | 1) & MASK;
    let b = u64::from(rng.next_u32()) & MASK;

    let mut distinct: Vec<u32> = lm.labels.clone();
    distinct.sort_unstable();
    distinct.dedup();

    let mut samples = Vec::with_capacity(lm.labels.len() * 3);
    for l in &lm.labels {
        let rank = distinct.binary_search(l).expect("label present") as u64;
        let c = (rank.wrapping_mul(a).wrapping_add(b)) & MASK;
        samples.push(((c >> 16) & 0xff) as f64);
        samples.push(((c >> 8) & 0xff) as f64);
        samples.push((c & 0xff) as f64);
    }
    ImageBuffer::new(lm.lattice, 3, 255, samples).expect("consistent dimensions")
}
