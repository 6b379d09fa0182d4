//! 8-bit binary PGM (`P5`) and PPM (`P6`) images.

use std::fs;
use std::path::Path;

use latdiff_core::Image;

use crate::error::FormatError;

pub fn encode(image: &Image) -> Vec<u8> {
    let magic = if image.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.quantized());
    out
}

/// Parses a binary PGM/PPM with maxval 255. Comments (`#` to end of line)
/// are allowed between header fields.
pub fn decode(bytes: &[u8]) -> Result<Image, FormatError> {
    let bad = |m: &str| FormatError::Pnm(m.to_string());
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("missing raster separator"));
    }
    pos += 1;
    let channels = match fields[0] {
        "P5" => 1,
        "P6" => 3,
        other => return Err(FormatError::Pnm(format!("unsupported magic {other:?}; expected P5 or P6"))),
    };
    let num = |s: &str, what: &str| s.parse::<usize>().map_err(|_| FormatError::Pnm(format!("bad {what} {s:?}")));
    let (w, h, maxval) = (num(fields[1], "width")?, num(fields[2], "height")?, num(fields[3], "maxval")?);
    if maxval != 255 {
        return Err(FormatError::Pnm(format!("maxval must be 255, got {maxval}")));
    }
    let raster = &bytes[pos..];
    let expected = w * h * channels;
    if raster.len() != expected {
        return Err(FormatError::Pnm(format!("raster has {} bytes, expected {expected}", raster.len())));
    }
    Ok(Image::from_quantized(w, h, channels, raster)?)
}

pub fn write(image: &Image, path: &Path) -> Result<(), FormatError> {
    fs::write(path, encode(image)).map_err(|e| FormatError::io(path, e))
}

pub fn read(path: &Path) -> Result<Image, FormatError> {
    let bytes = fs::read(path).map_err(|e| FormatError::io(path, e))?;
    decode(&bytes).map_err(|e| FormatError::Pnm(format!("{}: {e}", path.display())))
}

/// Every `.pgm`/`.ppm` file directly inside `dir`, in file-name order.
pub fn read_dir(dir: &Path) -> Result<Vec<Image>, FormatError> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| FormatError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("pgm" | "ppm")))
        .collect();
    paths.sort();
    paths.iter().map(|p| read(p)).collect()
}
