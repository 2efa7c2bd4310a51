//! Binary tensor files.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `MERA`                  |
//! | 4      | 1    | version (1)                   |
//! | 5      | 4    | rows (u32)                    |
//! | 9      | 4    | cols (u32)                    |
//! | 13     | 8    | FNV-1a 64 checksum of payload |
//! | 21     | 4·rows·cols | row-major f32 payload  |

use std::io::{Read, Write};

use ndarray::Array2;

use super::EmbedError;

pub const MAGIC: &[u8; 4] = b"MERA";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 21;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |hash, b| {
        (hash ^ u64::from(*b)).wrapping_mul(FNV_PRIME)
    })
}

fn payload_bytes(values: &Array2<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    // iter() walks in logical (row-major) order regardless of memory layout
    for v in values.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Serializes a tensor and returns the payload checksum.
pub fn encode_tensor(values: &Array2<f32>) -> Result<(Vec<u8>, u64), EmbedError> {
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(EmbedError::NonFinite(format!("value {bad}")));
    }
    let (rows, cols) = values.dim();
    let rows = u32::try_from(rows).map_err(|_| EmbedError::Format("too many rows".into()))?;
    let cols = u32::try_from(cols).map_err(|_| EmbedError::Format("too many columns".into()))?;
    let payload = payload_bytes(values);
    let checksum = fnv1a64(&payload);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    out.extend_from_slice(&checksum.to_le_bytes());
    out.extend_from_slice(&payload);
    Ok((out, checksum))
}

pub fn write_tensor<W: Write>(mut w: W, values: &Array2<f32>) -> Result<u64, EmbedError> {
    let (bytes, checksum) = encode_tensor(values)?;
    w.write_all(&bytes)?;
    Ok(checksum)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorHeader {
    pub rows: usize,
    pub cols: usize,
    pub checksum: u64,
}

/// Reads one tensor, verifying magic, version, length and checksum.
pub fn read_tensor<R: Read>(mut r: R) -> Result<(Array2<f32>, TensorHeader), EmbedError> {
    let mut head = [0u8; HEADER_LEN];
    r.read_exact(&mut head)
        .map_err(|_| EmbedError::Format("truncated header".into()))?;
    if &head[0..4] != MAGIC {
        return Err(EmbedError::Format("bad magic".into()));
    }
    if head[4] != VERSION {
        return Err(EmbedError::Format(format!("unsupported version {}", head[4])));
    }
    let rows = u32::from_le_bytes(head[5..9].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(head[9..13].try_into().expect("4 bytes")) as usize;
    let checksum = u64::from_le_bytes(head[13..21].try_into().expect("8 bytes"));

    let mut payload = vec![0u8; rows * cols * 4];
    r.read_exact(&mut payload)
        .map_err(|_| EmbedError::Format("truncated payload".into()))?;
    let found = fnv1a64(&payload);
    if found != checksum {
        return Err(EmbedError::ChecksumMismatch {
            expected: checksum,
            found,
        });
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(EmbedError::NonFinite("stored tensor".into()));
    }
    let values = Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| EmbedError::Format(e.to_string()))?;
    Ok((values, TensorHeader { rows, cols, checksum }))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn header_layout_is_fixed() {
        let t = Array2::from_shape_vec((2, 3), vec![1.0, 2.0, 3.0, 4.0, 5.0, -0.5]).unwrap();
        let (bytes, checksum) = encode_tensor(&t).unwrap();
        assert_eq!(&bytes[..4], b"MERA");
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..9], &2u32.to_le_bytes());
        assert_eq!(&bytes[9..13], &3u32.to_le_bytes());
        assert_eq!(&bytes[13..21], &checksum.to_le_bytes());
        assert_eq!(bytes.len(), HEADER_LEN + 24);
        assert_eq!(&bytes[21..25], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[41..45], &(-0.5f32).to_le_bytes());
    }

    #[test]
    fn transposed_views_are_written_row_major() {
        let t = Array2::from_shape_vec((2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (a, _) = encode_tensor(&t.t().to_owned()).unwrap();
        let (back, _) = read_tensor(&a[..]).unwrap();
        assert_eq!(back, t.t());
    }

    #[test]
    fn flipped_payload_byte_is_detected() {
        let t = Array2::from_elem((4, 4), 0.25f32);
        let (mut bytes, _) = encode_tensor(&t).unwrap();
        bytes[HEADER_LEN + 7] ^= 0x01;
        assert!(matches!(
            read_tensor(&bytes[..]),
            Err(EmbedError::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn rejects_bad_magic_version_and_truncation() {
        let t = Array2::from_elem((1, 2), 1.0f32);
        let (bytes, _) = encode_tensor(&t).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_tensor(&bad[..]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(read_tensor(&bad[..]).is_err());
        assert!(read_tensor(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn non_finite_values_are_refused() {
        let t = Array2::from_elem((1, 1), f32::NAN);
        assert!(matches!(encode_tensor(&t), Err(EmbedError::NonFinite(_))));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(rows in 0usize..6, cols in 0usize..6, seed in any::<u64>()) {
            let mut s = seed;
            let values = Array2::from_shape_fn((rows, cols), |_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                f32::from_bits((s >> 33) as u32 & 0x7f7f_ffff) * if s & 1 == 0 { 1.0 } else { -1.0 }
            });
            let (bytes, _) = encode_tensor(&values).unwrap();
            let (back, header) = read_tensor(&bytes[..]).unwrap();
            prop_assert_eq!((header.rows, header.cols), (rows, cols));
            for (a, b) in values.iter().zip(back.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
