//! Grayscale images, binary masks and their 8-bit PGM (P5) encoding.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(format!(
                "image data has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Image { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Image {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        encode_pgm(self.width, self.height, &self.data)
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let (width, height, data) = decode_pgm(bytes)?;
        Image::new(width, height, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_pgm())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Image::from_pgm(&bytes).map_err(|e| with_path(e, path))
    }
}

/// Binary foreground/background mask, row-major. `true` is foreground (solidified).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(format!(
                "mask data has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Mask { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Mask { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// True when both foreground and background pixels are present.
    pub fn has_both_classes(&self) -> bool {
        let fg = self.foreground_count();
        fg > 0 && fg < self.data.len()
    }

    pub fn complement(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| !v).collect(),
        }
    }

    pub fn same_shape(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Foreground = 255, background = 0.
    pub fn to_pgm(&self) -> Vec<u8> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| if v { 255 } else { 0 }).collect();
        encode_pgm(self.width, self.height, &bytes)
    }

    /// Any nonzero sample decodes as foreground.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let (width, height, data) = decode_pgm(bytes)?;
        Mask::new(width, height, data.into_iter().map(|v| v != 0).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_pgm())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Mask::from_pgm(&bytes).map_err(|e| with_path(e, path))
    }
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Format { message, .. } => Error::Format {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

fn encode_pgm(width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", width, height).into_bytes();
    out.extend_from_slice(data);
    out
}

fn format_err(message: impl Into<String>) -> Error {
    Error::Format {
        path: Default::default(),
        message: message.into(),
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        // skip whitespace and comments
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err("truncated PGM header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| format_err("non-ASCII PGM header"))?);
    }
    if tokens[0] != "P5" {
        return Err(format_err(format!("expected P5 magic, found {:?}", tokens[0])));
    }
    let parse = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| format_err(format!("invalid PGM {what}: {s:?}")))
    };
    let width = parse(tokens[1], "width")?;
    let height = parse(tokens[2], "height")?;
    let maxval = parse(tokens[3], "maxval")?;
    if maxval != 255 {
        return Err(format_err(format!("only 8-bit PGM supported, maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width * height;
    if bytes.len() < pos + n {
        return Err(format_err(format!(
            "raster truncated: {} bytes, expected {}",
            bytes.len().saturating_sub(pos),
            n
        )));
    }
    Ok((width, height, bytes[pos..pos + n].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_with_comment() {
        let img = Image::from_fn(5, 3, |x, y| (x * 40 + y) as u8);
        let mut bytes = img.to_pgm();
        assert!(bytes.starts_with(b"P5\n5 3\n255\n"));
        assert_eq!(Image::from_pgm(&bytes).unwrap(), img);

        bytes.splice(3..3, b"# comment\n".iter().copied());
        assert_eq!(Image::from_pgm(&bytes).unwrap(), img);
    }

    #[test]
    fn mask_pgm_is_binary() {
        let m = Mask::from_fn(4, 4, |x, y| (x + y) % 2 == 0);
        let bytes = m.to_pgm();
        assert!(bytes[11..].iter().all(|&b| b == 0 || b == 255));
        assert_eq!(Mask::from_pgm(&bytes).unwrap(), m);
    }

    #[test]
    fn truncated_raster_rejected() {
        let mut bytes = Image::filled(4, 4, 7).to_pgm();
        bytes.truncate(bytes.len() - 1);
        assert!(matches!(Image::from_pgm(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn wrong_length_is_shape_error() {
        assert!(matches!(Image::new(2, 2, vec![0; 3]), Err(Error::Shape(_))));
    }
}
