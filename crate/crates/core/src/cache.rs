//! Run cache: likelihoods plus the two per-frame best scores, so a stream
//! can be searched again with new keywords without the acoustic front end
//! or the filler units.
//!
//! # File layout (`.kwsc`)
//!
//! | bytes        | field                                   |
//! |--------------|-----------------------------------------|
//! | 4            | magic `KWSC`                            |
//! | 2            | format version (u16, currently 1)       |
//! | 16           | model fingerprint                       |
//! | 2            | frame shift in ms (u16)                 |
//! | 4            | number of frames (u32)                  |
//! | 4            | number of states `S` (u32)              |
//! | 4·F·(S+2)    | per frame: `S` likelihoods, `d_best`, `D_best` |
//!
//! All values are little-endian `f32`. With the default decoder settings
//! the summaries are already on the `f32` grid, so a replay sees exactly
//! the numbers the first pass used.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use crate::decoder::{Decoder, DecoderConfig, FrameSummary};
use crate::error::{KwsError, Result};
use crate::likelihood::LikelihoodMatrix;
use crate::model::HmmUnit;
use crate::pipeline::{RunOptions, SpotOutput};
use crate::spotter::{Spotter, SpotterConfig};

pub const CACHE_MAGIC: &[u8; 4] = b"KWSC";
pub const CACHE_VERSION: u16 = 1;
pub const CACHE_HEADER_LEN: usize = 32;

/// One frame of a cache: the values a replay needs and nothing else.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameCacheRecord<'a> {
    pub frame: usize,
    pub likelihoods: &'a [f32],
    pub d_best: f32,
    pub end_best: f32,
}

impl FrameCacheRecord<'_> {
    /// 32-bit values stored for this frame.
    pub fn value_count(&self) -> usize {
        self.likelihoods.len() + 2
    }
}

/// A decoded cache held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunCache {
    pub fingerprint: [u8; 16],
    pub matrix: LikelihoodMatrix,
    best: Vec<(f32, f32)>,
}

impl RunCache {
    /// Pairs a first-pass matrix with its frame summaries.
    pub fn new(fingerprint: [u8; 16], matrix: LikelihoodMatrix, summaries: &[FrameSummary]) -> Result<Self> {
        if summaries.len() != matrix.num_frames() {
            return Err(KwsError::DimensionMismatch(format!(
                "{} summaries for {} frames",
                summaries.len(),
                matrix.num_frames()
            )));
        }
        let best = summaries
            .iter()
            .map(|s| (s.best_score as f32, s.best_end_score as f32))
            .collect();
        Ok(Self {
            fingerprint,
            matrix,
            best,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.matrix.num_frames()
    }

    /// 32-bit values per frame record: states plus the two best scores.
    pub fn values_per_frame(&self) -> usize {
        self.matrix.num_states() + 2
    }

    pub fn record(&self, frame: usize) -> FrameCacheRecord<'_> {
        let (d_best, end_best) = self.best[frame];
        FrameCacheRecord {
            frame,
            likelihoods: self.matrix.row(frame),
            d_best,
            end_best,
        }
    }

    pub fn records(&self) -> impl Iterator<Item = FrameCacheRecord<'_>> + '_ {
        (0..self.num_frames()).map(|t| self.record(t))
    }

    /// Stored summaries widened back to `f64`.
    pub fn summaries(&self) -> Vec<FrameSummary> {
        self.best
            .iter()
            .enumerate()
            .map(|(frame, &(d, e))| FrameSummary {
                frame,
                best_score: f64::from(d),
                best_end_score: f64::from(e),
                best_end_start: None,
            })
            .collect()
    }

    /// Refuses a cache written for a different model.
    pub fn check_fingerprint(&self, current: &[u8; 16]) -> Result<()> {
        if &self.fingerprint != current {
            return Err(KwsError::FingerprintMismatch {
                cached: hex(&self.fingerprint),
                current: hex(current),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CACHE_HEADER_LEN + 4 * self.num_frames() * self.values_per_frame());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&self.fingerprint)?;
        w.write_all(&self.matrix.frame_shift_ms().to_le_bytes())?;
        w.write_all(&(self.num_frames() as u32).to_le_bytes())?;
        w.write_all(&(self.matrix.num_states() as u32).to_le_bytes())?;
        for rec in self.records() {
            for v in rec.likelihoods {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&rec.d_best.to_le_bytes())?;
            w.write_all(&rec.end_best.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < CACHE_HEADER_LEN {
            return Err(KwsError::MalformedHeader(format!(
                "cache header needs {CACHE_HEADER_LEN} bytes, found {}",
                bytes.len()
            )));
        }
        if &bytes[..4] != CACHE_MAGIC {
            return Err(KwsError::MalformedHeader(format!("bad cache magic {:?}", &bytes[..4])));
        }
        let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let version = u16_at(4);
        if version != CACHE_VERSION {
            return Err(KwsError::MalformedHeader(format!("unsupported cache version {version}")));
        }
        let fingerprint: [u8; 16] = bytes[6..22].try_into().expect("16 bytes");
        let shift = u16_at(22);
        let num_frames = u32_at(24) as usize;
        let num_states = u32_at(28) as usize;
        if num_states == 0 {
            return Err(KwsError::MalformedHeader("cache has zero states".into()));
        }
        let record_len = 4 * (num_states + 2);
        let payload = &bytes[CACHE_HEADER_LEN..];
        let complete = payload.len() / record_len;
        if complete < num_frames {
            return Err(KwsError::TruncatedCache {
                frame: complete,
                num_frames,
            });
        }
        if payload.len() != num_frames * record_len {
            return Err(KwsError::MalformedHeader(format!(
                "{} trailing bytes after {num_frames} frames",
                payload.len() - num_frames * record_len
            )));
        }
        let mut values = Vec::with_capacity(num_frames * num_states);
        let mut best = Vec::with_capacity(num_frames);
        for rec in payload.chunks_exact(record_len) {
            let mut floats = rec
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
            values.extend(floats.by_ref().take(num_states));
            let d = floats.next().expect("record holds d_best");
            let e = floats.next().expect("record holds D_best");
            best.push((d, e));
        }
        if shift == 0 {
            return Err(KwsError::MalformedHeader("frame shift is zero".into()));
        }
        Ok(Self {
            fingerprint,
            matrix: LikelihoodMatrix::from_values(num_states, shift, values)?,
            best,
        })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `m` and its first-pass summaries to `path`.
pub fn write_cache(
    path: impl AsRef<Path>,
    fingerprint: [u8; 16],
    m: &LikelihoodMatrix,
    summaries: &[FrameSummary],
) -> Result<()> {
    let path = path.as_ref();
    let cache = RunCache::new(fingerprint, m.clone(), summaries)?;
    let file = fs::File::create(path).map_err(|e| KwsError::io(path, e))?;
    let mut w = BufWriter::new(file);
    cache
        .write_to(&mut w)
        .and_then(|()| w.flush())
        .map_err(|e| KwsError::io(path, e))
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<RunCache> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| KwsError::io(path, e))?;
    RunCache::from_bytes(&bytes)
}

/// Decodes only `keywords` against the cached likelihoods, taking entry,
/// pruning and rival scores from the stored summaries.
///
/// With the keyword list of the first pass this reproduces its detections
/// exactly. A keyword absent from the first pass sees a stored `D_best`
/// that never included its own score, so its margin can only be smaller
/// than in a full re-run.
pub fn replay_decode(
    cache: &RunCache,
    keywords: &[HmmUnit],
    dcfg: DecoderConfig,
    scfg: SpotterConfig,
    opts: RunOptions,
) -> Result<SpotOutput> {
    let frames = cache.num_frames();
    if keywords.is_empty() {
        return Ok(SpotOutput {
            frames,
            ..SpotOutput::default()
        });
    }
    let mut decoder = Decoder::new(keywords, dcfg)?;
    if decoder.required_states() > cache.matrix.num_states() {
        return Err(KwsError::StateOutOfRange {
            state: decoder.required_states() as u32 - 1,
            num_states: cache.matrix.num_states(),
        });
    }
    let mut spotter = Spotter::new(keywords, scfg, cache.matrix.frame_shift_ms())?;
    if opts.log_candidates {
        spotter = spotter.with_candidate_log();
    }
    let mut summaries = Vec::new();
    let mut end_reports = Vec::new();
    let mut active_tokens = 0u64;
    let t0 = Instant::now();
    for rec in cache.records() {
        let stored = FrameSummary {
            frame: rec.frame,
            best_score: f64::from(rec.d_best),
            best_end_score: f64::from(rec.end_best),
            best_end_start: None,
        };
        let summary = decoder.step_with_summary(rec.likelihoods, &stored)?;
        active_tokens += decoder.active_state_count() as u64;
        if opts.keep_summaries {
            summaries.push(summary);
        }
        if opts.keep_end_reports {
            end_reports.extend_from_slice(decoder.end_reports());
        }
        crate::decoder::FrameObserver::on_frame(&mut spotter, &summary, decoder.end_reports());
    }
    let candidates = spotter.candidates().to_vec();
    let detections = spotter.finish();
    let elapsed_secs = t0.elapsed().as_secs_f64();
    Ok(SpotOutput {
        detections,
        summaries,
        candidates,
        end_reports,
        elapsed_secs,
        frames,
        active_tokens,
        evaluated_tokens: decoder.evaluated_tokens(),
    })
}
