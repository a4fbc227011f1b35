//! Middlebury-compatible `.flo` files.
//!
//! Layout: ASCII `PIEH`, width and height as little-endian `i32`, then
//! row-major interleaved `(u, v)` little-endian `f32` pairs.

use std::fs;
use std::io;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use thiserror::Error;

use super::FlowField;

pub const MAGIC: &[u8; 4] = b"PIEH";
const HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum FloError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic tag {0:?}, expected \"PIEH\"")]
    BadMagic([u8; 4]),
    #[error("invalid dimensions {0}x{1}")]
    Dimensions(i32, i32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("non-finite flow value at pixel {0}")]
    NonFinite(usize),
}

pub fn encode(field: &FlowField) -> Vec<u8> {
    let mut out = vec![0u8; HEADER_LEN + field.as_slice().len() * 8];
    out[..4].copy_from_slice(MAGIC);
    LittleEndian::write_i32(&mut out[4..8], field.width() as i32);
    LittleEndian::write_i32(&mut out[8..12], field.height() as i32);
    for (chunk, [u, v]) in out[HEADER_LEN..].chunks_exact_mut(8).zip(field.as_slice()) {
        LittleEndian::write_f32(&mut chunk[..4], *u);
        LittleEndian::write_f32(&mut chunk[4..], *v);
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<FlowField, FloError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(FloError::BadMagic(bytes[..4].try_into().unwrap()));
        }
        return Err(FloError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(FloError::BadMagic(magic));
    }
    let w = LittleEndian::read_i32(&bytes[4..8]);
    let h = LittleEndian::read_i32(&bytes[8..12]);
    if w <= 0 || h <= 0 {
        return Err(FloError::Dimensions(w, h));
    }
    let n = w as usize * h as usize;
    let expected = HEADER_LEN + n * 8;
    if bytes.len() < expected {
        return Err(FloError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FloError::TrailingBytes(bytes.len() - expected));
    }
    let mut uv = Vec::with_capacity(n);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(8).enumerate() {
        let u = LittleEndian::read_f32(&chunk[..4]);
        let v = LittleEndian::read_f32(&chunk[4..]);
        if !(u.is_finite() && v.is_finite()) {
            return Err(FloError::NonFinite(i));
        }
        uv.push([u, v]);
    }
    Ok(FlowField::from_vec(w as usize, h as usize, uv).expect("validated above"))
}

pub fn write_flow(path: impl AsRef<Path>, field: &FlowField) -> Result<(), FloError> {
    fs::write(path, encode(field))?;
    Ok(())
}

/// Reads an externally computed flow field.
pub fn import_flow(path: impl AsRef<Path>) -> Result<FlowField, FloError> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_field_roundtrip() {
        let f = FlowField::zeros(4, 4);
        let bytes = encode(&f);
        assert_eq!(&bytes[..4], b"PIEH");
        assert_eq!(bytes.len(), 12 + 16 * 8);
        assert_eq!(decode(&bytes).unwrap(), f);
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = encode(&FlowField::zeros(4, 4));
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(FloError::BadMagic(_))));
    }

    #[test]
    fn truncated_payload() {
        let bytes = encode(&FlowField::zeros(3, 2));
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(FloError::Truncated { .. })));
        assert!(matches!(decode(&bytes[..6]), Err(FloError::Truncated { .. })));
    }

    #[test]
    fn non_finite_values() {
        let mut bytes = encode(&FlowField::zeros(2, 2));
        LittleEndian::write_f32(&mut bytes[12 + 8 + 4..12 + 16], f32::INFINITY);
        assert!(matches!(decode(&bytes), Err(FloError::NonFinite(1))));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.flo");
        let f = FlowField::from_vec(2, 1, vec![[1.5, -2.0], [0.25, 8.0]]).unwrap();
        write_flow(&path, &f).unwrap();
        assert_eq!(import_flow(&path).unwrap(), f);
    }

    proptest! {
        #[test]
        fn random_fields_roundtrip_bit_exact(
            w in 1usize..12,
            h in 1usize..12,
            seed in proptest::collection::vec(-1e6f32..1e6, 288),
        ) {
            let uv: Vec<[f32; 2]> = (0..w * h).map(|i| [seed[(2 * i) % 288], seed[(2 * i + 1) % 288]]).collect();
            let f = FlowField::from_vec(w, h, uv).unwrap();
            let back = decode(&encode(&f)).unwrap();
            prop_assert_eq!(back.width(), w);
            for (a, b) in f.as_slice().iter().zip(back.as_slice()) {
                prop_assert_eq!(a[0].to_bits(), b[0].to_bits());
                prop_assert_eq!(a[1].to_bits(), b[1].to_bits());
            }
        }
    }
}
