//! Binary flow-matrix files.
//!
//! ```text
//! offset size
//! 0      4    magic "EPOF"
//! 4      2    format version, u16 LE
//! 6      4    n_windows, u32 LE
//! 10     4    n_frames, u32 LE
//! 14     4    fps, f32 LE
//! 18     8    grid hash
//! 26     4    CRC-32 of the payload, u32 LE
//! 30     ...  n_windows * n_frames f32 LE, windows-major
//! ```

use std::fs;
use std::io;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use thiserror::Error;

use crate::grid::GridHash;
use crate::matrix::{FlowMatrix, MatrixError};

pub const MAGIC: &[u8; 4] = b"EPOF";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 30;

#[derive(Debug, Error)]
pub enum MatrixFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a flow matrix file (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported matrix format version {found} (expected {VERSION})")]
    Version { found: u16 },
    #[error("truncated matrix file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after matrix payload")]
    TrailingBytes(usize),
    #[error("payload checksum mismatch: header {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error(transparent)]
    Invalid(#[from] MatrixError),
}

pub fn encode(m: &FlowMatrix) -> Vec<u8> {
    let mut out = vec![0u8; HEADER_LEN + m.values().len() * 4];
    LittleEndian::write_f32_into(m.values(), &mut out[HEADER_LEN..]);
    let crc = crc32fast::hash(&out[HEADER_LEN..]);
    out[..4].copy_from_slice(MAGIC);
    LittleEndian::write_u16(&mut out[4..6], VERSION);
    LittleEndian::write_u32(&mut out[6..10], m.n_windows() as u32);
    LittleEndian::write_u32(&mut out[10..14], m.n_frames() as u32);
    LittleEndian::write_f32(&mut out[14..18], m.fps());
    out[18..26].copy_from_slice(&m.grid_hash().0);
    LittleEndian::write_u32(&mut out[26..30], crc);
    out
}

pub fn decode(bytes: &[u8]) -> Result<FlowMatrix, MatrixFileError> {
    if bytes.len() >= 4 && &bytes[..4] != MAGIC {
        return Err(MatrixFileError::BadMagic(bytes[..4].try_into().unwrap()));
    }
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 6 {
            check_version(LittleEndian::read_u16(&bytes[4..6]))?;
        }
        return Err(MatrixFileError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    check_version(LittleEndian::read_u16(&bytes[4..6]))?;
    let n_windows = LittleEndian::read_u32(&bytes[6..10]) as usize;
    let n_frames = LittleEndian::read_u32(&bytes[10..14]) as usize;
    let fps = LittleEndian::read_f32(&bytes[14..18]);
    let hash = GridHash(bytes[18..26].try_into().unwrap());
    let stored = LittleEndian::read_u32(&bytes[26..30]);

    let expected = HEADER_LEN + n_windows * n_frames * 4;
    if bytes.len() < expected {
        return Err(MatrixFileError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(MatrixFileError::TrailingBytes(bytes.len() - expected));
    }
    let payload = &bytes[HEADER_LEN..];
    let computed = crc32fast::hash(payload);
    if computed != stored {
        return Err(MatrixFileError::Checksum { stored, computed });
    }
    let mut values = vec![0f32; n_windows * n_frames];
    LittleEndian::read_f32_into(payload, &mut values);
    Ok(FlowMatrix::new(n_windows, n_frames, fps, hash, values)?)
}

fn check_version(found: u16) -> Result<(), MatrixFileError> {
    if found != VERSION {
        return Err(MatrixFileError::Version { found });
    }
    Ok(())
}

pub fn save_matrix(path: impl AsRef<Path>, m: &FlowMatrix) -> Result<(), MatrixFileError> {
    super::write_atomic(path.as_ref(), &encode(m))?;
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<FlowMatrix, MatrixFileError> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> FlowMatrix {
        FlowMatrix::new(3, 4, 59.94, GridHash([1, 2, 3, 4, 5, 6, 7, 8]), (0..12).map(|v| v as f32 * 0.5).collect()).unwrap()
    }

    #[test]
    fn header_layout() {
        let b = encode(&sample());
        assert_eq!(&b[..4], b"EPOF");
        assert_eq!(LittleEndian::read_u16(&b[4..6]), 1);
        assert_eq!(LittleEndian::read_u32(&b[6..10]), 3);
        assert_eq!(LittleEndian::read_u32(&b[10..14]), 4);
        assert_eq!(&b[18..26], &[1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(b.len(), 30 + 48);
        // windows-major: entry [1][0] sits after the four frames of window 0
        assert_eq!(LittleEndian::read_f32(&b[30 + 16..30 + 20]), 2.0);
    }

    #[test]
    fn truncation_detected() {
        let b = encode(&sample());
        assert!(matches!(decode(&b[..b.len() - 1]), Err(MatrixFileError::Truncated { .. })));
        assert!(matches!(decode(&b[..10]), Err(MatrixFileError::Truncated { .. })));
    }

    #[test]
    fn version_bump_detected() {
        let mut b = encode(&sample());
        LittleEndian::write_u16(&mut b[4..6], 2);
        assert!(matches!(decode(&b), Err(MatrixFileError::Version { found: 2 })));
    }

    #[test]
    fn corruption_detected() {
        let mut b = encode(&sample());
        b[40] ^= 0x10;
        assert!(matches!(decode(&b), Err(MatrixFileError::Checksum { .. })));
        let mut b = encode(&sample());
        b[0] = b'X';
        assert!(matches!(decode(&b), Err(MatrixFileError::BadMagic(_))));
        let mut b = encode(&sample());
        b.push(0);
        assert!(matches!(decode(&b), Err(MatrixFileError::TrailingBytes(1))));
    }

    proptest! {
        #[test]
        fn roundtrip_bit_identical(
            nw in 0usize..8,
            nf in 0usize..8,
            fps in 1f32..240.0,
            hash in any::<[u8; 8]>(),
            pool in proptest::collection::vec(0f32..1e4, 64),
        ) {
            let values: Vec<f32> = (0..nw * nf).map(|i| pool[i % 64]).collect();
            let m = FlowMatrix::new(nw, nf, fps, GridHash(hash), values).unwrap();
            let back = decode(&encode(&m)).unwrap();
            prop_assert_eq!(back.fps().to_bits(), m.fps().to_bits());
            prop_assert_eq!(&back, &m);
            let bits: Vec<u32> = back.values().iter().map(|v| v.to_bits()).collect();
            let orig: Vec<u32> = m.values().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits, orig);
        }
    }
}
