//! IDX file parsing and writing (big-endian, u8 payloads).
//!
//! Magic `0x0000_0803` marks a 3-D image file (count, rows, cols) and
//! `0x0000_0801` a 1-D label file. Anything else is rejected by name.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC_IMAGES: u32 = 0x0000_0803;
pub const MAGIC_LABELS: u32 = 0x0000_0801;

/// A parsed 3-D IDX image file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major pixel data, `count * rows * cols` bytes.
    pub data: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, idx: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.data[idx * n..(idx + 1) * n]
    }
}

/// Either payload kind of an IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdxFile {
    Images(IdxImages),
    Labels(Vec<u8>),
}

fn read_u32_be(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Data(format!("truncated IDX file while reading {what}")));
    }
    Ok(u32::from_be_bytes([bytes[offset], bytes[offset + 1], bytes[offset + 2], bytes[offset + 3]]))
}

/// Parse an IDX byte buffer, dispatching on the magic number.
pub fn parse_idx_bytes(bytes: &[u8]) -> Result<IdxFile> {
    let magic = read_u32_be(bytes, 0, "magic number")?;
    match magic {
        MAGIC_IMAGES => {
            let count = read_u32_be(bytes, 4, "image count")? as usize;
            let rows = read_u32_be(bytes, 8, "row count")? as usize;
            let cols = read_u32_be(bytes, 12, "column count")? as usize;
            let expected = count * rows * cols;
            let payload = &bytes[16..];
            if payload.len() != expected {
                return Err(Error::Data(format!(
                    "IDX image payload is {} bytes, header promises {count}x{rows}x{cols} = {expected}",
                    payload.len()
                )));
            }
            Ok(IdxFile::Images(IdxImages { count, rows, cols, data: payload.to_vec() }))
        }
        MAGIC_LABELS => {
            let count = read_u32_be(bytes, 4, "label count")? as usize;
            let payload = &bytes[8..];
            if payload.len() != count {
                return Err(Error::Data(format!(
                    "IDX label payload is {} bytes, header promises {count}",
                    payload.len()
                )));
            }
            Ok(IdxFile::Labels(payload.to_vec()))
        }
        other => Err(Error::Data(format!("bad IDX magic number {other:#010x}"))),
    }
}

/// Load and parse an IDX file from disk.
pub fn load_idx(path: &Path) -> Result<IdxFile> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    parse_idx_bytes(&bytes)
}

/// Load an IDX file and require image content.
pub fn load_idx_images(path: &Path) -> Result<IdxImages> {
    match load_idx(path)? {
        IdxFile::Images(imgs) => Ok(imgs),
        IdxFile::Labels(_) => {
            Err(Error::Data(format!("{} is a label file, expected images", path.display())))
        }
    }
}

/// Load an IDX file and require label content.
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    match load_idx(path)? {
        IdxFile::Labels(l) => Ok(l),
        IdxFile::Images(_) => {
            Err(Error::Data(format!("{} is an image file, expected labels", path.display())))
        }
    }
}

/// Serialize images into IDX bytes.
pub fn write_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.data.len());
    out.extend_from_slice(&MAGIC_IMAGES.to_be_bytes());
    out.extend_from_slice(&(images.count as u32).to_be_bytes());
    out.extend_from_slice(&(images.rows as u32).to_be_bytes());
    out.extend_from_slice(&(images.cols as u32).to_be_bytes());
    out.extend_from_slice(&images.data);
    out
}

/// Serialize labels into IDX bytes.
pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&MAGIC_LABELS.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_images() {
        let imgs = IdxImages { count: 2, rows: 3, cols: 2, data: (0..12).collect() };
        let bytes = write_idx_images(&imgs);
        assert_eq!(&bytes[0..4], &[0x00, 0x00, 0x08, 0x03]);
        match parse_idx_bytes(&bytes).unwrap() {
            IdxFile::Images(parsed) => assert_eq!(parsed, imgs),
            _ => panic!("expected images"),
        }
    }

    #[test]
    fn roundtrip_labels() {
        let labels = vec![0u8, 3, 9, 1];
        let bytes = write_idx_labels(&labels);
        assert_eq!(&bytes[0..4], &[0x00, 0x00, 0x08, 0x01]);
        match parse_idx_bytes(&bytes).unwrap() {
            IdxFile::Labels(parsed) => assert_eq!(parsed, labels),
            _ => panic!("expected labels"),
        }
    }

    #[test]
    fn bad_magic_names_the_magic() {
        let bytes = [0u8; 20];
        let err = parse_idx_bytes(&bytes).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("0x00000000"), "{msg}");
    }

    #[test]
    fn truncated_header_is_error() {
        let err = parse_idx_bytes(&[0x00, 0x00, 0x08]).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn payload_size_mismatch_is_error() {
        let mut bytes = write_idx_images(&IdxImages {
            count: 1,
            rows: 2,
            cols: 2,
            data: vec![1, 2, 3, 4],
        });
        bytes.pop();
        let err = parse_idx_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("payload"));
        // Trailing garbage is a mismatch too.
        let mut bytes = write_idx_labels(&[1, 2, 3]);
        bytes.push(7);
        assert!(parse_idx_bytes(&bytes).is_err());
    }
}
