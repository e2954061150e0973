//! 8-bit RGB images with binary PPM (P6) input/output and 16-bit PGM (P5)
//! output. Netpbm keeps all artifacts dependency-free and bit-exact.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

pub type ImgResult<T> = Result<T, ImgError>;

#[derive(Debug)]
pub enum ImgError {
    Io(std::io::Error),
    BadMagic(String),
    BadHeader(String),
    Truncated,
    BadDims { w: usize, h: usize },
}

impl fmt::Display for ImgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io(e) => write!(f, "image io: {e}"),
            Self::BadMagic(m) => write!(f, "unsupported netpbm magic {m:?}"),
            Self::BadHeader(m) => write!(f, "malformed netpbm header: {m}"),
            Self::Truncated => write!(f, "pixel data shorter than header promises"),
            Self::BadDims { w, h } => write!(f, "image dims {w}x{h} must be positive"),
        }
    }
}

impl std::error::Error for ImgError {}

impl From<std::io::Error> for ImgError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

/// h x w x 3 image, channel values 0..=255, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub w: usize,
    pub h: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(w: usize, h: usize) -> ImgResult<Self> {
        if w == 0 || h == 0 {
            return Err(ImgError::BadDims { w, h });
        }
        Ok(Self {
            w,
            h,
            data: vec![0; w * h * 3],
        })
    }

    pub fn filled(w: usize, h: usize, rgb: [u8; 3]) -> ImgResult<Self> {
        let mut img = Self::new(w, h)?;
        for p in img.data.chunks_exact_mut(3) {
            p.copy_from_slice(&rgb);
        }
        Ok(img)
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.w + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.w + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn mean_color(&self) -> [u8; 3] {
        let n = (self.w * self.h) as f64;
        let mut acc = [0.0f64; 3];
        for p in self.data.chunks_exact(3) {
            for c in 0..3 {
                acc[c] += p[c] as f64;
            }
        }
        [
            (acc[0] / n).round() as u8,
            (acc[1] / n).round() as u8,
            (acc[2] / n).round() as u8,
        ]
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = Self::new(self.w, self.h).unwrap();
        for y in 0..self.h {
            for x in 0..self.w {
                out.set(self.w - 1 - x, y, self.get(x, y));
            }
        }
        out
    }

    pub fn write_ppm(&self, path: &Path, comment: Option<&str>) -> ImgResult<()> {
        let mut buf = Vec::with_capacity(self.data.len() + 64);
        buf.extend_from_slice(b"P6\n");
        if let Some(c) = comment {
            for line in c.lines() {
                writeln!(buf, "# {line}")?;
            }
        }
        writeln!(buf, "{} {}\n255", self.w, self.h)?;
        buf.extend_from_slice(&self.data);
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn read_ppm(path: &Path) -> ImgResult<Self> {
        let bytes = fs::read(path)?;
        let mut pos = 0usize;
        let magic = read_token(&bytes, &mut pos).ok_or(ImgError::Truncated)?;
        if magic != b"P6" {
            return Err(ImgError::BadMagic(String::from_utf8_lossy(magic).into()));
        }
        let w = read_usize(&bytes, &mut pos)?;
        let h = read_usize(&bytes, &mut pos)?;
        let maxval = read_usize(&bytes, &mut pos)?;
        if maxval != 255 {
            return Err(ImgError::BadHeader(format!("maxval {maxval}, expected 255")));
        }
        // Single whitespace byte after maxval, then raw samples.
        pos += 1;
        let need = w * h * 3;
        if bytes.len() < pos + need {
            return Err(ImgError::Truncated);
        }
        let mut img = Self::new(w, h)?;
        img.data.copy_from_slice(&bytes[pos..pos + need]);
        Ok(img)
    }
}

/// Writes an h x w scalar field as 16-bit big-endian PGM (P5), scaled so the
/// field maximum maps to 65535. An all-zero field writes all zeros.
pub fn write_pgm16(
    path: &Path,
    w: usize,
    h: usize,
    data: &[f64],
    comment: Option<&str>,
) -> ImgResult<()> {
    assert_eq!(data.len(), w * h);
    let mx = data.iter().cloned().fold(0.0f64, f64::max);
    let mut buf = Vec::with_capacity(w * h * 2 + 64);
    buf.extend_from_slice(b"P5\n");
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(buf, "# {line}")?;
        }
    }
    writeln!(buf, "{w} {h}\n65535")?;
    for &v in data {
        let s = if mx > 0.0 {
            ((v / mx).clamp(0.0, 1.0) * 65535.0).round() as u16
        } else {
            0
        };
        buf.extend_from_slice(&s.to_be_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

fn skip_ws_and_comments(bytes: &[u8], pos: &mut usize) {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            return;
        }
    }
}

fn read_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    skip_ws_and_comments(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if *pos > start {
        Some(&bytes[start..*pos])
    } else {
        None
    }
}

fn read_usize(bytes: &[u8], pos: &mut usize) -> ImgResult<usize> {
    let tok = read_token(bytes, pos).ok_or(ImgError::Truncated)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ImgError::BadHeader(format!("bad integer {:?}", String::from_utf8_lossy(tok))))
}
