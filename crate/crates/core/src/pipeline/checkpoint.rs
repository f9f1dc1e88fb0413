//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes  "GCLCKPT\0"
//! version      u32
//! input_dim    u64
//! n_hidden     u64, then n_hidden × u64 widths
//! feature_dim  u64
//! num_classes  u64
//! iteration    u64
//! rng seed     u64, then 4 × u64 generator state
//! parameters   f64 × parameter_count   (layer weights, layer biases, ..., classifier)
//! velocity     f64 × parameter_count   (same order)
//! checksum     u64   FNV-1a over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Dense, GradientSet, Model};
use crate::numerics::{Matrix, Rng};
use crate::pipeline::TrainerState;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GCLCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn encode(state: &TrainerState) -> Vec<u8> {
    let m = &state.model;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let mut put = |x: u64| out.extend_from_slice(&x.to_le_bytes());
    put(m.input_dim() as u64);
    put(m.hidden().len() as u64);
    for &h in m.hidden() {
        put(h as u64);
    }
    put(m.feature_dim() as u64);
    put(m.num_classes() as u64);
    put(state.iteration);
    put(state.rng.seed());
    for s in state.rng.state() {
        put(s);
    }
    for t in m.tensors().into_iter().chain(state.velocity.tensors()) {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint("file is truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn dim(&mut self) -> Result<usize> {
        let v = self.u64()?;
        if v == 0 || v > (1 << 24) {
            return Err(Error::Checkpoint(format!("implausible dimension {v}")));
        }
        Ok(v as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Checkpoint("size overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

fn decode(bytes: &[u8]) -> Result<TrainerState> {
    if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    if bytes.len() < 20 {
        return Err(Error::Checkpoint("file is truncated".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    let mut r = Reader { bytes: body, pos: 12 };

    let input_dim = r.dim()?;
    let n_hidden = r.u64()?;
    if n_hidden > 1024 {
        return Err(Error::Checkpoint(format!("implausible depth {n_hidden}")));
    }
    let hidden = (0..n_hidden).map(|_| r.dim()).collect::<Result<Vec<_>>>()?;
    let feature_dim = r.dim()?;
    let num_classes = r.dim()?;
    let iteration = r.u64()?;
    let seed = r.u64()?;
    let rng_state = [r.u64()?, r.u64()?, r.u64()?, r.u64()?];

    let mut widths = vec![input_dim];
    widths.extend_from_slice(&hidden);
    widths.push(feature_dim);
    let read_set = |r: &mut Reader| -> Result<(Vec<Dense>, Matrix)> {
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for w in widths.windows(2) {
            let weight = Matrix::from_vec(w[0], w[1], r.f64s(w[0] * w[1])?)?;
            let bias = r.f64s(w[1])?;
            layers.push(Dense { weight, bias });
        }
        let classifier = Matrix::from_vec(feature_dim, num_classes, r.f64s(feature_dim * num_classes)?)?;
        Ok((layers, classifier))
    };
    let (layers, classifier) = read_set(&mut r)?;
    let (vel_layers, vel_classifier) = read_set(&mut r)?;
    if r.pos != body.len() {
        return Err(Error::Checkpoint(format!(
            "{} unexpected trailing bytes",
            body.len() - r.pos
        )));
    }
    if fnv1a(body) != stored {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }

    let model = Model::from_parts(input_dim, hidden, feature_dim, layers, classifier)?;
    let velocity = GradientSet {
        layers: vel_layers,
        classifier: vel_classifier,
    };
    let rng = Rng::from_parts(seed, rng_state).map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(TrainerState {
        model,
        velocity,
        rng,
        iteration,
    })
}

/// Writes to a temporary sibling, then renames over `path`.
pub fn save_checkpoint(state: &TrainerState, path: &Path) -> Result<()> {
    let bytes = encode(state);
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainerState> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::CheckpointNotFound(path.to_path_buf()))
        }
        Err(e) => return Err(Error::io(path, e)),
    };
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> TrainerState {
        let model = Model::new(4, &[5], 3, 2, &mut Rng::new(8)).unwrap();
        let mut s = TrainerState::new(model, 8);
        s.iteration = 17;
        for t in s.velocity.tensors_mut() {
            t.iter_mut().enumerate().for_each(|(i, v)| *v = i as f64 * -0.125);
        }
        s.rng.next_u64();
        s
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let s = state();
        let bytes = encode(&s);
        let back = decode(&bytes).unwrap();
        assert_eq!(encode(&back), bytes);
        assert_eq!(back.iteration, 17);
        assert_eq!(back.rng, s.rng);
        assert_eq!(back.model.tensors(), s.model.tensors());
        assert_eq!(back.velocity, s.velocity);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode(&state());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode(&bad_magic), Err(Error::Checkpoint(_))));

        let mut bad_version = bytes.clone();
        bad_version[8] = 9;
        assert!(matches!(decode(&bad_version), Err(Error::Checkpoint(_))));

        assert!(matches!(decode(&bytes[..bytes.len() - 20]), Err(Error::Checkpoint(_))));

        let mut flipped = bytes.clone();
        let mid = bytes.len() / 2;
        flipped[mid] ^= 0x01;
        assert!(matches!(decode(&flipped), Err(Error::Checkpoint(_))));
    }
}
