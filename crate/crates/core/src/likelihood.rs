//! Per-frame state log-likelihoods: the decoder's only acoustic input.
//!
//! A [`LikelihoodMatrix`] is stored row-major (one row of `num_states`
//! values per frame). Values are treated as already-scaled log scores;
//! only differences of accumulated scores matter downstream, so whether a
//! producer emits log-posteriors or prior-scaled likelihoods is irrelevant
//! to the decoder.
//!
//! # File layout (`.kwsl`)
//!
//! | bytes | field                                  |
//! |-------|----------------------------------------|
//! | 4     | magic `KWSL`                           |
//! | 2     | format version (u16, currently 1)      |
//! | 2     | frame shift in ms (u16)                |
//! | 4     | number of frames (u32)                 |
//! | 4     | number of states (u32)                 |
//! | 4·F·S | f32 values, frame-major                |
//!
//! All integers and floats are little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{KwsError, Result};

pub const MATRIX_MAGIC: &[u8; 4] = b"KWSL";
pub const MATRIX_VERSION: u16 = 1;
pub const MATRIX_HEADER_LEN: usize = 16;
pub const DEFAULT_FRAME_SHIFT_MS: u16 = 10;

/// Frames × states table of log-likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodMatrix {
    num_frames: usize,
    num_states: usize,
    frame_shift_ms: u16,
    values: Vec<f32>,
}

impl LikelihoodMatrix {
    /// Builds a matrix from frame-major values, checking every invariant.
    pub fn from_values(
        num_states: usize,
        frame_shift_ms: u16,
        values: Vec<f32>,
    ) -> Result<Self> {
        if num_states == 0 {
            return Err(KwsError::DimensionMismatch(
                "a likelihood matrix needs at least one state".into(),
            ));
        }
        if frame_shift_ms == 0 {
            return Err(KwsError::InvalidConfig("frame shift must be positive".into()));
        }
        if values.len() % num_states != 0 {
            let frame = values.len() / num_states;
            return Err(KwsError::PayloadMismatch {
                expected: (frame + 1) * num_states,
                found: values.len(),
                frame,
                state: values.len() % num_states,
            });
        }
        check_finite(&values, num_states)?;
        Ok(Self {
            num_frames: values.len() / num_states,
            num_states,
            frame_shift_ms,
            values,
        })
    }

    /// Builds a matrix from a list of rows.
    pub fn from_rows(rows: &[Vec<f32>], frame_shift_ms: u16) -> Result<Self> {
        let num_states = rows.first().map(Vec::len).unwrap_or(0);
        if let Some((t, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != num_states) {
            return Err(KwsError::DimensionMismatch(format!(
                "row {t} has {} states, expected {num_states}",
                row.len()
            )));
        }
        Self::from_values(num_states, frame_shift_ms, rows.concat())
    }

    /// A zero-frame matrix.
    pub fn empty(num_states: usize, frame_shift_ms: u16) -> Result<Self> {
        Self::from_values(num_states, frame_shift_ms, Vec::new())
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn frame_shift_ms(&self) -> u16 {
        self.frame_shift_ms
    }

    /// Stream duration in seconds.
    pub fn duration_secs(&self) -> f64 {
        self.num_frames as f64 * f64::from(self.frame_shift_ms) / 1000.0
    }

    pub fn row(&self, frame: usize) -> &[f32] {
        let start = frame * self.num_states;
        &self.values[start..start + self.num_states]
    }

    pub fn get(&self, frame: usize, state: usize) -> f32 {
        self.values[frame * self.num_states + state]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.values.chunks_exact(self.num_states)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Adds `offsets[t]` to every state of frame `t`.
    pub fn shifted_per_frame(&self, offsets: &[f32]) -> Result<Self> {
        if offsets.len() != self.num_frames {
            return Err(KwsError::DimensionMismatch(format!(
                "{} offsets for {} frames",
                offsets.len(),
                self.num_frames
            )));
        }
        let values = self
            .rows()
            .zip(offsets)
            .flat_map(|(row, &c)| row.iter().map(move |v| v + c))
            .collect();
        Self::from_values(self.num_states, self.frame_shift_ms, values)
    }

    /// Serializes the matrix into the `.kwsl` byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(MATRIX_HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(MATRIX_MAGIC);
        out.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
        out.extend_from_slice(&self.frame_shift_ms.to_le_bytes());
        out.extend_from_slice(&(self.num_frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.num_states as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses the `.kwsl` byte layout.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MATRIX_HEADER_LEN {
            return Err(KwsError::MalformedHeader(format!(
                "{} bytes is shorter than the {MATRIX_HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MATRIX_MAGIC {
            return Err(KwsError::MalformedHeader(format!(
                "bad magic {:?}, expected \"KWSL\"",
                String::from_utf8_lossy(&bytes[0..4])
            )));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != MATRIX_VERSION {
            return Err(KwsError::MalformedHeader(format!(
                "unsupported version {version}"
            )));
        }
        let frame_shift_ms = u16::from_le_bytes([bytes[6], bytes[7]]);
        let num_frames = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let num_states = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        if num_states == 0 {
            return Err(KwsError::MalformedHeader("num_states is 0".into()));
        }
        if frame_shift_ms == 0 {
            return Err(KwsError::MalformedHeader("frame_shift_ms is 0".into()));
        }
        let values = decode_f32_payload(&bytes[MATRIX_HEADER_LEN..], num_frames, num_states)?;
        check_finite(&values, num_states)?;
        Ok(Self {
            num_frames,
            num_states,
            frame_shift_ms,
            values,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = fs::File::create(path).map_err(|e| KwsError::io(path, e))?;
        file.write_all(&self.to_bytes())
            .map_err(|e| KwsError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| KwsError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Decodes exactly `num_frames * num_states` little-endian f32 values.
pub(crate) fn decode_f32_payload(
    payload: &[u8],
    num_frames: usize,
    num_states: usize,
) -> Result<Vec<f32>> {
    let expected = num_frames * num_states;
    let found = payload.len() / 4;
    if payload.len() != expected * 4 {
        let stop = found.min(expected);
        return Err(KwsError::PayloadMismatch {
            expected,
            found,
            frame: stop / num_states,
            state: stop % num_states,
        });
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn check_finite(values: &[f32], num_states: usize) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(KwsError::NonFinite {
            frame: i / num_states,
            state: i % num_states,
            value: values[i],
        }),
        None => Ok(()),
    }
}

/// Total, surjective mapping from source states onto a smaller target set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateMap {
    num_targets: usize,
    target_of: Vec<u32>,
}

impl StateMap {
    pub fn new(num_targets: usize, target_of: Vec<u32>) -> Result<Self> {
        if num_targets == 0 {
            return Err(KwsError::InvalidStateMap("no target states".into()));
        }
        if num_targets > target_of.len() {
            return Err(KwsError::InvalidStateMap(format!(
                "{num_targets} targets exceed {} source states",
                target_of.len()
            )));
        }
        let mut hit = vec![false; num_targets];
        for (s, &q) in target_of.iter().enumerate() {
            let q = q as usize;
            if q >= num_targets {
                return Err(KwsError::InvalidStateMap(format!(
                    "source {s} maps to {q}, outside {num_targets} targets"
                )));
            }
            hit[q] = true;
        }
        if let Some(q) = hit.iter().position(|h| !h) {
            return Err(KwsError::InvalidStateMap(format!(
                "target {q} has no source state"
            )));
        }
        Ok(Self {
            num_targets,
            target_of,
        })
    }

    pub fn identity(num_states: usize) -> Result<Self> {
        Self::new(num_states, (0..num_states as u32).collect())
    }

    pub fn num_source_states(&self) -> usize {
        self.target_of.len()
    }

    pub fn num_target_states(&self) -> usize {
        self.num_targets
    }

    pub fn target_of(&self, source: usize) -> u32 {
        self.target_of[source]
    }

    pub fn targets(&self) -> &[u32] {
        &self.target_of
    }

    /// Pools one frame: `out[q] = max { row[s] : target_of(s) = q }`.
    pub fn pool_row(&self, row: &[f32], out: &mut [f32]) {
        out.fill(f32::NEG_INFINITY);
        for (&v, &q) in row.iter().zip(&self.target_of) {
            let slot = &mut out[q as usize];
            if v > *slot {
                *slot = v;
            }
        }
    }
}

/// Max-pools triphone-state likelihoods onto quasi-monophone states.
pub fn pool_quasi_mono(m: &LikelihoodMatrix, map: &StateMap) -> Result<LikelihoodMatrix> {
    if m.num_states() != map.num_source_states() {
        return Err(KwsError::DimensionMismatch(format!(
            "matrix has {} states, state map expects {}",
            m.num_states(),
            map.num_source_states()
        )));
    }
    let targets = map.num_target_states();
    let mut values = vec![0.0f32; m.num_frames() * targets];
    for (row, out) in m.rows().zip(values.chunks_exact_mut(targets)) {
        map.pool_row(row, out);
    }
    LikelihoodMatrix::from_values(targets, m.frame_shift_ms(), values)
}
