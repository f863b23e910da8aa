//! Portable float map (PFM) reader/writer.
//!
//! Layout, fixed bit-exactly:
//! - header line 1: `PF` (3-channel) or `Pf` (1-channel), then `\n`
//! - header line 2: `{width} {height}`, then `\n`
//! - header line 3: scale factor; this writer always emits `-1.0` (negative
//!   marks little-endian data, magnitude 1 means unscaled), then `\n`
//! - payload: `height` scanlines stored bottom row first, each scanline left
//!   to right, channels interleaved, each sample one IEEE-754 f32 in
//!   little-endian byte order.
//!
//! Writing rejects non-finite samples; a stack written and read back is
//! bitwise identical.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::raster::Image;

use super::IoError;

fn read_header_line(
    reader: &mut impl Read,
    path: &Path,
    offset: &mut u64,
) -> Result<String, IoError> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = reader.read(&mut byte).map_err(IoError::Io)?;
        if n == 0 {
            return Err(IoError::CorruptImage {
                path: path.to_path_buf(),
                offset: *offset,
                reason: "unexpected end of file in header".into(),
            });
        }
        *offset += 1;
        if byte[0] == b'\n' {
            break;
        }
        line.push(byte[0]);
        if line.len() > 128 {
            return Err(IoError::CorruptImage {
                path: path.to_path_buf(),
                offset: *offset,
                reason: "header line too long".into(),
            });
        }
    }
    String::from_utf8(line).map_err(|_| IoError::CorruptImage {
        path: path.to_path_buf(),
        offset: *offset,
        reason: "header is not UTF-8".into(),
    })
}

pub fn read_pfm(path: &Path) -> Result<Image, IoError> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => IoError::MissingFile { path: path.to_path_buf(), index: None },
        _ => IoError::Io(e),
    })?;
    let mut reader = BufReader::new(file);
    let mut offset: u64 = 0;

    let magic = read_header_line(&mut reader, path, &mut offset)?;
    let channels = match magic.trim() {
        "PF" => 3,
        "Pf" => 1,
        other => {
            return Err(IoError::CorruptImage {
                path: path.to_path_buf(),
                offset,
                reason: format!("bad magic {other:?}"),
            })
        }
    };

    let dims = read_header_line(&mut reader, path, &mut offset)?;
    let mut parts = dims.split_whitespace();
    let parse_dim = |v: Option<&str>| -> Result<usize, IoError> {
        v.and_then(|s| s.parse().ok()).ok_or_else(|| IoError::CorruptImage {
            path: path.to_path_buf(),
            offset,
            reason: format!("bad dimensions line {dims:?}"),
        })
    };
    let width = parse_dim(parts.next())?;
    let height = parse_dim(parts.next())?;
    if width == 0 || height == 0 || width.saturating_mul(height) > 1 << 28 {
        return Err(IoError::CorruptImage {
            path: path.to_path_buf(),
            offset,
            reason: format!("unreasonable dimensions {width}x{height}"),
        });
    }

    let scale_line = read_header_line(&mut reader, path, &mut offset)?;
    let scale: f64 = scale_line.trim().parse().map_err(|_| IoError::CorruptImage {
        path: path.to_path_buf(),
        offset,
        reason: format!("bad scale line {scale_line:?}"),
    })?;
    let little_endian = scale < 0.0;

    let count = width * height * channels;
    let mut payload = vec![0u8; count * 4];
    let mut filled = 0usize;
    while filled < payload.len() {
        let n = reader.read(&mut payload[filled..]).map_err(IoError::Io)?;
        if n == 0 {
            return Err(IoError::CorruptImage {
                path: path.to_path_buf(),
                offset: offset + filled as u64,
                reason: format!(
                    "truncated payload: expected {} bytes, got {}",
                    payload.len(),
                    filled
                ),
            });
        }
        filled += n;
    }

    // bottom row first on disk
    let mut data = vec![0f32; count];
    let row_len = width * channels;
    for disk_row in 0..height {
        let mem_row = height - 1 - disk_row;
        for i in 0..row_len {
            let src = (disk_row * row_len + i) * 4;
            let bytes = [payload[src], payload[src + 1], payload[src + 2], payload[src + 3]];
            let v = if little_endian {
                f32::from_le_bytes(bytes)
            } else {
                f32::from_be_bytes(bytes)
            };
            data[mem_row * row_len + i] = v;
        }
    }
    Image::from_data(width, height, channels, data).map_err(|e| IoError::CorruptImage {
        path: path.to_path_buf(),
        offset,
        reason: e.to_string(),
    })
}

pub fn write_pfm(path: &Path, image: &Image) -> Result<(), IoError> {
    for (i, v) in image.data().iter().enumerate() {
        if !v.is_finite() {
            return Err(IoError::CorruptImage {
                path: path.to_path_buf(),
                offset: i as u64,
                reason: format!("non-finite sample {v} at flat index {i}"),
            });
        }
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(IoError::Io)?;
    }
    let file = File::create(path).map_err(IoError::Io)?;
    let mut writer = BufWriter::new(file);
    let magic = if image.channels() == 3 { "PF" } else { "Pf" };
    write!(writer, "{magic}\n{} {}\n-1.0\n", image.width(), image.height())
        .map_err(IoError::Io)?;
    let row_len = image.width() * image.channels();
    for disk_row in 0..image.height() {
        let mem_row = image.height() - 1 - disk_row;
        let row = &image.data()[mem_row * row_len..(mem_row + 1) * row_len];
        for v in row {
            writer.write_all(&v.to_le_bytes()).map_err(IoError::Io)?;
        }
    }
    writer.flush().map_err(IoError::Io)
}

/// Reads only the header and returns (width, height, channels); used to
/// validate capture files against the manifest without loading payloads.
pub fn read_pfm_dimensions(path: &Path) -> Result<(usize, usize, usize), IoError> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => IoError::MissingFile { path: path.to_path_buf(), index: None },
        _ => IoError::Io(e),
    })?;
    let mut reader = BufReader::new(file);
    let mut offset = 0u64;
    let magic = read_header_line(&mut reader, path, &mut offset)?;
    let channels = match magic.trim() {
        "PF" => 3,
        "Pf" => 1,
        other => {
            return Err(IoError::CorruptImage {
                path: path.to_path_buf(),
                offset,
                reason: format!("bad magic {other:?}"),
            })
        }
    };
    let dims = read_header_line(&mut reader, path, &mut offset)?;
    let mut parts = dims.split_whitespace();
    let mut parse = || -> Result<usize, IoError> {
        parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| IoError::CorruptImage {
            path: path.to_path_buf(),
            offset,
            reason: format!("bad dimensions line {dims:?}"),
        })
    };
    let w = parse()?;
    let h = parse()?;
    Ok((w, h, channels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tmpdir();
        let mut img = Image::zeros(5, 4, 3);
        let mut state = 7u64;
        for v in img.data_mut() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = f32::from_bits(((state >> 41) as u32) | 0x3f00_0000); // finite floats
        }
        let path = dir.path().join("x.pfm");
        write_pfm(&path, &img).unwrap();
        let back = read_pfm(&path).unwrap();
        assert_eq!(img.data(), back.data());
        assert_eq!(back.channels(), 3);
    }

    #[test]
    fn grayscale_round_trip() {
        let dir = tmpdir();
        let mut img = Image::zeros(3, 2, 1);
        img.set_gray(2, 1, 0.75);
        let path = dir.path().join("g.pfm");
        write_pfm(&path, &img).unwrap();
        let back = read_pfm(&path).unwrap();
        assert_eq!(back.channels(), 1);
        assert_eq!(img.data(), back.data());
    }

    #[test]
    fn nan_rejected_at_write() {
        let dir = tmpdir();
        let mut img = Image::zeros(2, 2, 3);
        img.data_mut()[5] = f32::NAN;
        let err = write_pfm(&dir.path().join("bad.pfm"), &img).unwrap_err();
        assert!(matches!(err, IoError::CorruptImage { offset: 5, .. }), "{err:?}");
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let dir = tmpdir();
        let mut img = Image::zeros(4, 4, 3);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = i as f32;
        }
        let path = dir.path().join("t.pfm");
        write_pfm(&path, &img).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 10]).unwrap();
        let err = read_pfm(&path).unwrap_err();
        match err {
            IoError::CorruptImage { offset, reason, .. } => {
                assert!(reason.contains("truncated"), "{reason}");
                assert!(offset > 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_file_is_distinguished() {
        let dir = tmpdir();
        let err = read_pfm(&dir.path().join("nope.pfm")).unwrap_err();
        assert!(matches!(err, IoError::MissingFile { .. }));
    }

    #[test]
    fn header_dimensions_only() {
        let dir = tmpdir();
        let img = Image::zeros(7, 3, 1);
        let path = dir.path().join("d.pfm");
        write_pfm(&path, &img).unwrap();
        assert_eq!(read_pfm_dimensions(&path).unwrap(), (7, 3, 1));
    }
}
