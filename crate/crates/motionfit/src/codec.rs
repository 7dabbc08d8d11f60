//! Binary tensor file codecs.
//!
//! All formats share the same skeleton: a 4-byte ASCII magic, little-endian
//! u32 dims, then a row-major payload. Decoders validate the header against
//! the actual byte length before allocating anything, so arbitrary input is
//! safe to feed them (see `fuzz/`).
//!
//! * `MFT1` — video tensor, dims T,H,W,C, u8 payload.
//! * `MFF1` — flow stack, dims T-1,H,W,2, f32 LE payload.
//! * `MFX1` — feature matrix, dims N,d, f32 LE payload.
//!
//! The checkpoint format `MFC1` lives in [`crate::net::checkpoint`]; it reuses
//! the helpers here.

use crate::corpus::VideoTensor;
use crate::error::{Error, Result};
use crate::flow::FlowStack;
use std::path::Path;

pub const MAGIC_VIDEO: &[u8; 4] = b"MFT1";
pub const MAGIC_FLOW: &[u8; 4] = b"MFF1";
pub const MAGIC_FEATURES: &[u8; 4] = b"MFX1";
pub const MAGIC_CHECKPOINT: &[u8; 4] = b"MFC1";

/// Feature matrix read back from an `MFX1` file: `n` rows of dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n: usize,
    pub d: usize,
    pub data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Cursor over a byte slice with checked little-endian reads.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Reader { bytes, pos: 0, path }
    }

    fn err(&self, reason: impl Into<String>) -> Error {
        Error::format(self.path, reason)
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| self.err(format!("truncated {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn magic(&mut self, expect: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != expect {
            return Err(self.err(format!(
                "bad magic: expected {:?}, got {:?}",
                String::from_utf8_lossy(expect),
                String::from_utf8_lossy(got)
            )));
        }
        Ok(())
    }

    fn u32_le(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    /// Validates that exactly `count * elem_size` bytes remain.
    fn expect_payload(&self, count: u64, elem_size: u64, what: &str) -> Result<usize> {
        let need = count
            .checked_mul(elem_size)
            .ok_or_else(|| self.err(format!("{what} size overflows")))?;
        if need != self.remaining() as u64 {
            return Err(self.err(format!(
                "{what} payload length mismatch: header declares {need} bytes, file has {}",
                self.remaining()
            )));
        }
        Ok(need as usize)
    }
}

fn dims_product(dims: &[u32]) -> Option<u64> {
    dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
}

// ---- MFT1 video tensors ----------------------------------------------------

pub fn encode_video_tensor(v: &VideoTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + v.data.len());
    out.extend_from_slice(MAGIC_VIDEO);
    for d in [v.t, v.h, v.w, v.c] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&v.data);
    out
}

pub fn decode_video_tensor_named(bytes: &[u8], path: &Path) -> Result<VideoTensor> {
    let mut r = Reader::new(bytes, path);
    r.magic(MAGIC_VIDEO)?;
    let t = r.u32_le("dim T")?;
    let h = r.u32_le("dim H")?;
    let w = r.u32_le("dim W")?;
    let c = r.u32_le("dim C")?;
    if c != 3 {
        return Err(r.err(format!("dim C must be 3, got {c}")));
    }
    let count = dims_product(&[t, h, w, c]).ok_or_else(|| r.err("dims overflow"))?;
    let n = r.expect_payload(count, 1, "u8")?;
    let data = r.take(n, "payload")?.to_vec();
    Ok(VideoTensor {
        t: t as usize,
        h: h as usize,
        w: w as usize,
        c: c as usize,
        data,
    })
}

pub fn decode_video_tensor(bytes: &[u8]) -> Result<VideoTensor> {
    decode_video_tensor_named(bytes, Path::new("<memory>"))
}

pub fn write_video_tensor(path: &Path, v: &VideoTensor) -> Result<()> {
    write_file(path, &encode_video_tensor(v))
}

pub fn read_video_tensor(path: &Path) -> Result<VideoTensor> {
    decode_video_tensor_named(&read_file(path)?, path)
}

// ---- MFF1 flow stacks --------------------------------------------------------

pub fn encode_flow_stack(f: &FlowStack) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + f.data.len() * 4);
    out.extend_from_slice(MAGIC_FLOW);
    for d in [f.frames, f.h, f.w, 2] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in &f.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_flow_stack_named(bytes: &[u8], path: &Path) -> Result<FlowStack> {
    let mut r = Reader::new(bytes, path);
    r.magic(MAGIC_FLOW)?;
    let t = r.u32_le("dim T-1")?;
    let h = r.u32_le("dim H")?;
    let w = r.u32_le("dim W")?;
    let c = r.u32_le("dim 2")?;
    if c != 2 {
        return Err(r.err(format!("last dim must be 2, got {c}")));
    }
    let count = dims_product(&[t, h, w, c]).ok_or_else(|| r.err("dims overflow"))?;
    r.expect_payload(count, 4, "f32")?;
    let raw = r.take(count as usize * 4, "payload")?;
    let data = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(FlowStack {
        frames: t as usize,
        h: h as usize,
        w: w as usize,
        data,
    })
}

pub fn decode_flow_stack(bytes: &[u8]) -> Result<FlowStack> {
    decode_flow_stack_named(bytes, Path::new("<memory>"))
}

pub fn write_flow_stack(path: &Path, f: &FlowStack) -> Result<()> {
    write_file(path, &encode_flow_stack(f))
}

pub fn read_flow_stack(path: &Path) -> Result<FlowStack> {
    decode_flow_stack_named(&read_file(path)?, path)
}

// ---- MFX1 feature matrices ---------------------------------------------------

pub fn encode_feature_matrix(m: &FeatureMatrix) -> Vec<u8> {
    assert_eq!(m.data.len(), m.n * m.d, "feature matrix shape mismatch");
    let mut out = Vec::with_capacity(12 + m.data.len() * 4);
    out.extend_from_slice(MAGIC_FEATURES);
    out.extend_from_slice(&(m.n as u32).to_le_bytes());
    out.extend_from_slice(&(m.d as u32).to_le_bytes());
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_feature_matrix_named(bytes: &[u8], path: &Path) -> Result<FeatureMatrix> {
    let mut r = Reader::new(bytes, path);
    r.magic(MAGIC_FEATURES)?;
    let n = r.u32_le("dim N")?;
    let d = r.u32_le("dim d")?;
    let count = dims_product(&[n, d]).ok_or_else(|| r.err("dims overflow"))?;
    r.expect_payload(count, 4, "f32")?;
    let raw = r.take(count as usize * 4, "payload")?;
    let data = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(FeatureMatrix {
        n: n as usize,
        d: d as usize,
        data,
    })
}

pub fn decode_feature_matrix(bytes: &[u8]) -> Result<FeatureMatrix> {
    decode_feature_matrix_named(bytes, Path::new("<memory>"))
}

pub fn write_feature_matrix(path: &Path, m: &FeatureMatrix) -> Result<()> {
    write_file(path, &encode_feature_matrix(m))
}

pub fn read_feature_matrix(path: &Path) -> Result<FeatureMatrix> {
    decode_feature_matrix_named(&read_file(path)?, path)
}

// ---- MFC1 framing (header + blob) ---------------------------------------------

/// Encodes the checkpoint container: magic, u32 header length, JSON header
/// bytes, then the raw blob.
pub fn encode_checkpoint_container(header_json: &[u8], blob: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + header_json.len() + blob.len());
    out.extend_from_slice(MAGIC_CHECKPOINT);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(header_json);
    out.extend_from_slice(blob);
    out
}

/// Splits a checkpoint container into (header JSON bytes, blob bytes).
pub fn decode_checkpoint_container_named<'a>(
    bytes: &'a [u8],
    path: &'a Path,
) -> Result<(&'a [u8], &'a [u8])> {
    let mut r = Reader::new(bytes, path);
    r.magic(MAGIC_CHECKPOINT)?;
    let len = r.u32_le("header length")? as usize;
    if len > r.remaining() {
        return Err(r.err(format!(
            "header length {len} exceeds remaining {} bytes",
            r.remaining()
        )));
    }
    let header = r.take(len, "header")?;
    let blob = &bytes[r.pos..];
    Ok((header, blob))
}

pub fn decode_checkpoint_container(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    decode_checkpoint_container_named(bytes, Path::new("<memory>"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn f32_one_serializes_as_ieee754_le() {
        let f = FlowStack {
            frames: 1,
            h: 1,
            w: 1,
            data: vec![1.0, 0.0],
        };
        let bytes = encode_flow_stack(&f);
        // payload starts after magic + 4 dims
        assert_eq!(&bytes[20..24], &[0x00, 0x00, 0x80, 0x3F]);
    }

    #[test]
    fn video_round_trip_bitwise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let v = VideoTensor {
            t: 3,
            h: 4,
            w: 5,
            c: 3,
            data: (0..3 * 4 * 5 * 3).map(|_| rng.random()).collect(),
        };
        let bytes = encode_video_tensor(&v);
        let back = decode_video_tensor(&bytes).unwrap();
        assert_eq!(v.data, back.data);
        assert_eq!(encode_video_tensor(&back), bytes);
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let v = VideoTensor {
            t: 2,
            h: 2,
            w: 2,
            c: 3,
            data: vec![0; 24],
        };
        let mut bytes = encode_video_tensor(&v);
        bytes.pop();
        assert!(decode_video_tensor(&bytes).is_err());
    }

    #[test]
    fn bad_magic_is_an_error() {
        let m = FeatureMatrix {
            n: 1,
            d: 1,
            data: vec![0.5],
        };
        let mut bytes = encode_feature_matrix(&m);
        bytes[0] = b'X';
        let err = decode_feature_matrix(&bytes).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn oversized_dims_do_not_allocate() {
        // header declares u32::MAX^3 elements; must fail the length check,
        // not attempt the allocation
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC_VIDEO);
        for _ in 0..3 {
            bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        bytes.extend_from_slice(&3u32.to_le_bytes());
        assert!(decode_video_tensor(&bytes).is_err());
    }

    #[test]
    fn checkpoint_container_round_trip() {
        let header = br#"{"k":1}"#;
        let blob = [1u8, 2, 3, 4];
        let bytes = encode_checkpoint_container(header, &blob);
        let (h, b) = decode_checkpoint_container(&bytes).unwrap();
        assert_eq!(h, header);
        assert_eq!(b, blob);
    }

    proptest! {
        #[test]
        fn flow_round_trip_bitwise(t in 1usize..4, h in 1usize..6, w in 1usize..6, seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let f = FlowStack {
                frames: t, h, w,
                data: (0..t * h * w * 2).map(|_| rng.random::<f32>() * 40.0 - 20.0).collect(),
            };
            let bytes = encode_flow_stack(&f);
            let back = decode_flow_stack(&bytes).unwrap();
            prop_assert_eq!(f.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }

        #[test]
        fn decoders_never_panic_on_noise(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = decode_video_tensor(&bytes);
            let _ = decode_flow_stack(&bytes);
            let _ = decode_feature_matrix(&bytes);
            let _ = decode_checkpoint_container(&bytes);
        }
    }
}
