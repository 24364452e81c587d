//! Binary PGM (P5) rasters: 16-bit likelihood planes and 8-bit label images.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::CameraError;

/// Reserved label for pixels that belong to no class.
pub const VOID_LABEL: u8 = 255;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub data: Vec<u16>,
}

/// Per-pixel class indices, [`VOID_LABEL`] for background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl LabelImage {
    pub fn filled(width: usize, height: usize, label: u8) -> Self {
        LabelImage {
            width,
            height,
            data: vec![label; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn valid_pixels(&self) -> usize {
        self.data.iter().filter(|&&l| l != VOID_LABEL).count()
    }
}

impl TryFrom<GrayImage> for LabelImage {
    type Error = String;

    fn try_from(img: GrayImage) -> Result<Self, String> {
        if img.maxval > 255 {
            return Err(format!(
                "label image must be 8-bit, maxval is {}",
                img.maxval
            ));
        }
        Ok(LabelImage {
            width: img.width,
            height: img.height,
            data: img.data.into_iter().map(|v| v as u8).collect(),
        })
    }
}

fn header_value(bytes: &[u8], pos: &mut usize) -> Option<usize> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos]).ok()?.parse().ok()
}

/// Decodes a binary PGM held in memory.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, String> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err("not a binary PGM (missing P5 magic)".into());
    }
    let mut pos = 2;
    let width = header_value(bytes, &mut pos).ok_or("bad width")?;
    let height = header_value(bytes, &mut pos).ok_or("bad height")?;
    let maxval = header_value(bytes, &mut pos).ok_or("bad maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} out of range"));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err("missing whitespace after header".into());
    }
    pos += 1;
    let n = width * height;
    let body = &bytes[pos..];
    let data: Vec<u16> = if maxval < 256 {
        if body.len() < n {
            return Err(format!(
                "expected {n} bytes of pixel data, got {}",
                body.len()
            ));
        }
        body[..n].iter().map(|&b| b as u16).collect()
    } else {
        if body.len() < 2 * n {
            return Err(format!(
                "expected {} bytes of pixel data, got {}",
                2 * n,
                body.len()
            ));
        }
        body[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    if let Some(v) = data.iter().find(|&&v| v as usize > maxval) {
        return Err(format!("pixel value {v} exceeds maxval {maxval}"));
    }
    Ok(GrayImage {
        width,
        height,
        maxval: maxval as u16,
        data,
    })
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage, CameraError> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CameraError::io(path, e))?;
    decode_pgm(&bytes).map_err(|msg| CameraError::Image {
        path: path.to_path_buf(),
        msg,
    })
}

fn write_with(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<std::fs::File>) -> std::io::Result<()>,
) -> Result<(), CameraError> {
    let file = std::fs::File::create(path).map_err(|e| CameraError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CameraError::io(path, e))
}

/// 16-bit big-endian PGM.
pub fn write_pgm16(path: impl AsRef<Path>, img: &GrayImage) -> Result<(), CameraError> {
    write_with(path.as_ref(), |w| {
        write!(w, "P5\n{} {}\n65535\n", img.width, img.height)?;
        for &v in &img.data {
            w.write_all(&v.to_be_bytes())?;
        }
        Ok(())
    })
}

pub fn write_pgm8(path: impl AsRef<Path>, img: &LabelImage) -> Result<(), CameraError> {
    write_with(path.as_ref(), |w| {
        write!(w, "P5\n{} {}\n255\n", img.width, img.height)?;
        w.write_all(&img.data)
    })
}
