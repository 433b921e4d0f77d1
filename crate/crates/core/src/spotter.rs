//! Spot management: rival margins, confidences, and the sliding buffer.
//!
//! For a keyword `w` whose end state is active at frame `t`, the rival
//! margin is `R = D_best(t) - D(w, t)`: how far the keyword's own path lies
//! below the best path of any unit sequence ending at `t`. Both paths share
//! the same history before the keyword started, so that history cancels and
//! no look-back is needed. The margin is normalised by the keyword's
//! duration in frames and its state count and mapped onto a 0..100
//! confidence with constant `k`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::decoder::{EndStateReport, FrameObserver, FrameSummary};
use crate::error::{KwsError, Result};
use crate::likelihood::LikelihoodMatrix;
use crate::model::{HmmUnit, KeywordEntry};

/// `k` calibrated on the bundled synthetic development corpus
/// (`corpus::CorpusConfig::dev`). Real acoustic models need their own.
pub const DEFAULT_K: f64 = 1610.0;
pub const DEFAULT_THRESHOLD: f64 = 75.0;
pub const DEFAULT_BUFFER_LEN: usize = 15;

/// `R = D_best(t) - D(w, t)`.
pub fn rival_margin(best_end_score: f64, keyword_end_score: f64) -> f64 {
    best_end_score - keyword_end_score
}

/// `C = 100 - k R / ((t - T) N_s)`.
pub fn confidence(
    rival_margin: f64,
    end_frame: usize,
    start_frame: usize,
    num_states: usize,
    k: f64,
) -> Result<f64> {
    if end_frame <= start_frame {
        return Err(KwsError::ZeroDuration(end_frame));
    }
    if num_states == 0 || !(k > 0.0) {
        return Err(KwsError::InvalidConfig(format!(
            "confidence needs N_s >= 1 and k > 0 (got {num_states}, {k})"
        )));
    }
    Ok(100.0 - k * normalized_margin(rival_margin, end_frame - start_frame, num_states))
}

/// `R / (duration * N_s)`, the k-independent detection statistic.
pub fn normalized_margin(rival_margin: f64, duration: usize, num_states: usize) -> f64 {
    rival_margin / (duration as f64 * num_states as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotterConfig {
    pub k: f64,
    pub accept_threshold: f64,
    pub buffer_len: usize,
}

impl Default for SpotterConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            accept_threshold: DEFAULT_THRESHOLD,
            buffer_len: DEFAULT_BUFFER_LEN,
        }
    }
}

impl SpotterConfig {
    /// Checks the configuration; `strict` also enforces the 10..=20 frame
    /// buffer range.
    pub fn validate(&self, strict: bool) -> Result<()> {
        if !(self.k > 0.0) || !self.k.is_finite() {
            return Err(KwsError::InvalidConfig(format!("k must be positive, got {}", self.k)));
        }
        if !(self.accept_threshold <= 100.0) {
            return Err(KwsError::InvalidConfig(format!(
                "threshold {} exceeds 100",
                self.accept_threshold
            )));
        }
        if strict && !(0.0..=100.0).contains(&self.accept_threshold) {
            return Err(KwsError::InvalidConfig(format!(
                "threshold {} outside 0..=100",
                self.accept_threshold
            )));
        }
        if self.buffer_len == 0 || (strict && !(10..=20).contains(&self.buffer_len)) {
            return Err(KwsError::InvalidConfig(format!(
                "buffer length {} outside 10..=20",
                self.buffer_len
            )));
        }
        Ok(())
    }
}

/// A keyword hypothesis that passed the acceptance threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotCandidate {
    /// Index into the spotter's keyword table.
    pub keyword: usize,
    pub end_frame: usize,
    pub start_frame: usize,
    pub rival_margin: f64,
    pub confidence: f64,
    pub keyword_states: usize,
}

/// One accepted keyword occurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotEvent {
    pub keyword: String,
    pub lemma: String,
    pub start_time: f64,
    pub end_time: f64,
    pub confidence: f64,
}

impl SpotEvent {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start_time + self.end_time)
    }
}

/// A spot event plus the frame-level values it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(flatten)]
    pub event: SpotEvent,
    pub start_frame: usize,
    pub end_frame: usize,
    pub rival_margin: f64,
    pub keyword_states: usize,
}

/// Per-keyword max-in-window filter.
///
/// Each keyword holds at most one pending candidate. A newer candidate
/// closer than `buffer_len` frames replaces it only with a strictly higher
/// confidence; the pending candidate is emitted once `buffer_len` frames
/// have passed since its end frame.
#[derive(Debug, Clone)]
pub struct SpotBuffer {
    buffer_len: usize,
    pending: BTreeMap<usize, SpotCandidate>,
}

impl SpotBuffer {
    pub fn new(buffer_len: usize) -> Self {
        Self {
            buffer_len: buffer_len.max(1),
            pending: BTreeMap::new(),
        }
    }

    /// Registers a candidate; candidates must arrive in nondecreasing
    /// end-frame order.
    pub fn push(&mut self, c: SpotCandidate, out: &mut Vec<SpotCandidate>) {
        match self.pending.get_mut(&c.keyword) {
            Some(p) if c.end_frame - p.end_frame >= self.buffer_len => {
                out.push(*p);
                *p = c;
            }
            Some(p) => {
                if c.confidence > p.confidence {
                    *p = c;
                }
            }
            None => {
                self.pending.insert(c.keyword, c);
            }
        }
    }

    /// Emits pending candidates whose window closed by `frame`.
    pub fn advance(&mut self, frame: usize, out: &mut Vec<SpotCandidate>) {
        let len = self.buffer_len;
        self.pending.retain(|_, p| {
            if frame >= p.end_frame + len {
                out.push(*p);
                false
            } else {
                true
            }
        });
    }

    pub fn flush(&mut self, out: &mut Vec<SpotCandidate>) {
        out.extend(std::mem::take(&mut self.pending).into_values());
    }
}

/// Runs the buffer over a complete candidate sequence.
pub fn buffer_filter(candidates: &[SpotCandidate], buffer_len: usize) -> Vec<SpotCandidate> {
    let mut buf = SpotBuffer::new(buffer_len);
    let mut out = Vec::new();
    for c in candidates {
        buf.advance(c.end_frame, &mut out);
        buf.push(*c, &mut out);
    }
    buf.flush(&mut out);
    out
}

#[derive(Debug, Clone)]
struct KeywordSlot {
    entry: KeywordEntry,
    states: usize,
}

/// Frame observer that turns keyword end-state reports into detections.
#[derive(Debug, Clone)]
pub struct Spotter {
    cfg: SpotterConfig,
    frame_shift_ms: u16,
    /// Decoder unit position -> keyword slot.
    slot_of_unit: Vec<Option<usize>>,
    keywords: Vec<KeywordSlot>,
    buffer: SpotBuffer,
    emitted: Vec<SpotCandidate>,
    detections: Vec<Detection>,
    candidate_log: Option<Vec<SpotCandidate>>,
}

impl Spotter {
    /// `units` must be the slice given to the decoder, in the same order.
    pub fn new(units: &[HmmUnit], cfg: SpotterConfig, frame_shift_ms: u16) -> Result<Self> {
        cfg.validate(false)?;
        let mut keywords = Vec::new();
        let slot_of_unit = units
            .iter()
            .map(|u| {
                u.keyword.as_ref().map(|entry| {
                    keywords.push(KeywordSlot {
                        entry: entry.clone(),
                        states: u.num_states(),
                    });
                    keywords.len() - 1
                })
            })
            .collect();
        Ok(Self {
            buffer: SpotBuffer::new(cfg.buffer_len),
            cfg,
            frame_shift_ms,
            slot_of_unit,
            keywords,
            emitted: Vec::new(),
            detections: Vec::new(),
            candidate_log: None,
        })
    }

    /// Keeps every accepted candidate (before buffering) for analysis.
    pub fn with_candidate_log(mut self) -> Self {
        self.candidate_log = Some(Vec::new());
        self
    }

    pub fn config(&self) -> &SpotterConfig {
        &self.cfg
    }

    pub fn candidates(&self) -> &[SpotCandidate] {
        self.candidate_log.as_deref().unwrap_or(&[])
    }

    pub fn keyword(&self, slot: usize) -> &KeywordEntry {
        &self.keywords[slot].entry
    }

    /// Detections emitted so far, in emission order.
    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }

    /// Flushes the buffer and returns all detections ordered by end frame,
    /// then start frame, then keyword form.
    pub fn finish(mut self) -> Vec<Detection> {
        self.buffer.flush(&mut self.emitted);
        self.drain_emitted();
        let mut out = self.detections;
        out.sort_by(|a, b| {
            (a.end_frame, a.start_frame, &a.event.keyword)
                .cmp(&(b.end_frame, b.start_frame, &b.event.keyword))
        });
        out
    }

    fn drain_emitted(&mut self) {
        self.emitted.sort_by_key(|c| (c.end_frame, c.keyword));
        let shift = f64::from(self.frame_shift_ms) / 1000.0;
        for c in self.emitted.drain(..) {
            let kw = &self.keywords[c.keyword].entry;
            self.detections.push(Detection {
                event: SpotEvent {
                    keyword: kw.form.clone(),
                    lemma: kw.lemma.clone(),
                    start_time: c.start_frame as f64 * shift,
                    end_time: (c.end_frame + 1) as f64 * shift,
                    confidence: c.confidence,
                },
                start_frame: c.start_frame,
                end_frame: c.end_frame,
                rival_margin: c.rival_margin,
                keyword_states: c.keyword_states,
            });
        }
    }
}

impl FrameObserver for Spotter {
    fn on_frame(&mut self, summary: &FrameSummary, ends: &[EndStateReport]) {
        let t = summary.frame;
        self.buffer.advance(t, &mut self.emitted);
        for e in ends {
            let Some(slot) = self.slot_of_unit.get(e.unit as usize).copied().flatten() else {
                continue;
            };
            let start = e.start as usize;
            if start >= t {
                continue;
            }
            let states = self.keywords[slot].states;
            let r = rival_margin(summary.best_end_score, e.score);
            let c = 100.0 - self.cfg.k * normalized_margin(r, t - start, states);
            if c < self.cfg.accept_threshold {
                continue;
            }
            let cand = SpotCandidate {
                keyword: slot,
                end_frame: t,
                start_frame: start,
                rival_margin: r,
                confidence: c,
                keyword_states: states,
            };
            if let Some(log) = &mut self.candidate_log {
                log.push(cand);
            }
            self.buffer.push(cand, &mut self.emitted);
        }
        if !self.emitted.is_empty() {
            self.drain_emitted();
        }
    }
}

/// Labelled detection statistic for calibrating `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample {
    pub rival_margin: f64,
    pub duration: usize,
    pub num_states: usize,
    pub is_hit: bool,
}

impl CalibrationSample {
    pub fn normalized(&self) -> f64 {
        normalized_margin(self.rival_margin, self.duration, self.num_states)
    }
}

/// Chooses `k` so that the equal-error operating point on `samples` maps
/// to confidence 75.
///
/// The EER threshold in normalised-margin units does not depend on `k`,
/// so the search reduces to locating that threshold `x*` and solving
/// `100 - k x* = 75`.
pub fn calibrate_k(samples: &[CalibrationSample]) -> Result<f64> {
    let hits = samples.iter().filter(|s| s.is_hit).count();
    if hits == 0 || hits == samples.len() {
        return Err(KwsError::DegenerateCalibration(
            "need both true hits and false alarms".into(),
        ));
    }
    if samples.iter().any(|s| s.duration == 0 || s.num_states == 0) {
        return Err(KwsError::DegenerateCalibration("zero duration or state count".into()));
    }
    // Score = -x so that higher means more confident.
    let scored: Vec<(f64, bool)> = samples.iter().map(|s| (-s.normalized(), s.is_hit)).collect();
    let eer = crate::eval::labelled_eer(&scored)
        .ok_or_else(|| KwsError::DegenerateCalibration("no equal-error crossing".into()))?;
    let x_star = -eer.threshold;
    if !(x_star > 0.0) || !x_star.is_finite() {
        return Err(KwsError::DegenerateCalibration(format!(
            "equal-error margin {x_star} is not positive"
        )));
    }
    Ok(25.0 / x_star)
}

/// Best score of any unit string exactly covering frames `start..=end`,
/// from a fresh Viterbi pass restricted to that span.
///
/// This is the reference the forward rival margin is validated against,
/// not part of the production path.
pub fn exact_filler_span_score(
    m: &LikelihoodMatrix,
    units: &[HmmUnit],
    start: usize,
    end: usize,
) -> Result<f64> {
    if start > end || end >= m.num_frames() {
        return Err(KwsError::InvalidConfig(format!(
            "span {start}..={end} outside 0..{}",
            m.num_frames()
        )));
    }
    if let Some(s) = units
        .iter()
        .flat_map(|u| &u.state_ids)
        .find(|&&s| s as usize >= m.num_states())
    {
        return Err(KwsError::StateOutOfRange {
            state: *s,
            num_states: m.num_states(),
        });
    }
    let mut scores: Vec<Vec<f64>> = units
        .iter()
        .map(|u| vec![f64::NEG_INFINITY; u.num_states()])
        .collect();
    let mut entry = 0.0f64;
    for t in start..=end {
        let row = m.row(t);
        let mut next_entry = f64::NEG_INFINITY;
        for (u, d) in units.iter().zip(scores.iter_mut()) {
            let prev = d.clone();
            for s in 0..d.len() {
                let from = if s == 0 { entry } else { prev[s - 1] };
                d[s] = from.max(prev[s]) + f64::from(row[u.state_ids[s] as usize]);
            }
            next_entry = next_entry.max(d[d.len() - 1]);
        }
        entry = next_entry;
    }
    Ok(entry)
}

/// Whether the best path ending at `summaries[end]` has a unit boundary
/// between frames `start - 1` and `start`.
///
/// Follows the start frames of successive best end-state holders
/// backwards. Returns `false` when the chain skips over `start` or when a
/// summary lacks the holder's start frame.
pub fn backtrack_passes(summaries: &[FrameSummary], start: usize, end: usize) -> bool {
    let mut cur = end;
    loop {
        let Some(holder_start) = summaries.get(cur).and_then(|s| s.best_end_start) else {
            return false;
        };
        let holder_start = holder_start as usize;
        if holder_start == start {
            return true;
        }
        if holder_start < start || holder_start == 0 {
            return false;
        }
        cur = holder_start - 1;
    }
}

/// Rival margin computed the long way: the exact best unit string over the
/// keyword's span minus the keyword's own span score.
pub fn exact_rival_margin(
    m: &LikelihoodMatrix,
    units: &[HmmUnit],
    summaries: &[FrameSummary],
    report: &EndStateReport,
    initial_score: f64,
) -> Result<f64> {
    let start = report.start as usize;
    let before = if start == 0 {
        initial_score
    } else {
        summaries[start - 1].best_end_score
    };
    let word_score = report.score - before;
    let rival = exact_filler_span_score(m, units, start, report.frame)?;
    Ok(rival - word_score)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(keyword: usize, end: usize, c: f64) -> SpotCandidate {
        SpotCandidate {
            keyword,
            end_frame: end,
            start_frame: end.saturating_sub(30),
            rival_margin: 0.0,
            confidence: c,
            keyword_states: 18,
        }
    }

    #[test]
    fn rival_margin_examples() {
        assert_eq!(rival_margin(-10.0, -10.0), 0.0);
        assert_eq!(rival_margin(-10.0, -14.5), 4.5);
    }

    #[test]
    fn confidence_examples() {
        assert_eq!(confidence(0.0, 40, 10, 15, 3.0).unwrap(), 100.0);
        assert_eq!(confidence(450.0, 30, 0, 15, 1.0).unwrap(), 99.0);
        assert!(matches!(confidence(1.0, 5, 5, 3, 1.0), Err(KwsError::ZeroDuration(5))));
    }

    #[test]
    fn calibration_solves_for_75() {
        // Hits at 0.4 and 0.6, false alarms at 0.6 and 0.8: the error
        // rates cross halfway between 0.4 and 0.6.
        let mk = |x: f64, hit| CalibrationSample {
            rival_margin: x,
            duration: 1,
            num_states: 1,
            is_hit: hit,
        };
        let samples = [mk(0.4, true), mk(0.6, true), mk(0.6, false), mk(0.8, false)];
        let k = calibrate_k(&samples).unwrap();
        assert!((k - 50.0).abs() < 1e-9, "k = {k}");
    }

    #[test]
    fn calibration_rejects_single_class() {
        let s = CalibrationSample {
            rival_margin: 1.0,
            duration: 10,
            num_states: 3,
            is_hit: true,
        };
        assert!(matches!(
            calibrate_k(&[s, s, s]),
            Err(KwsError::DegenerateCalibration(_))
        ));
    }

    #[test]
    fn single_candidate_passes_through() {
        let out = buffer_filter(&[cand(0, 100, 80.0)], 15);
        assert_eq!(out, vec![cand(0, 100, 80.0)]);
    }

    #[test]
    fn peak_in_window_wins() {
        let cands: Vec<_> = (100..=110)
            .map(|t| cand(0, t, 90.0 - (t as f64 - 105.0).abs()))
            .collect();
        let out = buffer_filter(&cands, 15);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].end_frame, 105);
    }

    #[test]
    fn keywords_buffer_independently() {
        let out = buffer_filter(&[cand(0, 100, 80.0), cand(1, 102, 85.0)], 15);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn equal_confidence_keeps_earliest() {
        let out = buffer_filter(&[cand(0, 100, 80.0), cand(0, 104, 80.0)], 15);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].end_frame, 100);
    }

    #[test]
    fn backtrack_single_chain() {
        let s = |frame, start| FrameSummary {
            frame,
            best_score: 0.0,
            best_end_score: 0.0,
            best_end_start: Some(start),
        };
        // holder at 9 started at 6; holder at 5 started at 2
        let sums = vec![s(0, 0), s(1, 0), s(2, 0), s(3, 2), s(4, 2), s(5, 2), s(6, 6), s(7, 6), s(8, 6), s(9, 6)];
        assert!(backtrack_passes(&sums, 6, 9));
        assert!(backtrack_passes(&sums, 2, 9));
        assert!(!backtrack_passes(&sums, 4, 9));
        assert!(backtrack_passes(&sums, 0, 9));
    }

    #[test]
    fn span_score_single_filler() {
        let m = LikelihoodMatrix::from_rows(
            &[vec![-1.0, -5.0, -5.0], vec![-5.0, -2.0, -5.0], vec![-5.0, -5.0, -3.0]],
            10,
        )
        .unwrap();
        let units = [HmmUnit::filler(0, "a", vec![0, 1, 2])];
        assert_eq!(exact_filler_span_score(&m, &units, 0, 2).unwrap(), -6.0);
        assert_eq!(
            exact_filler_span_score(&m, &units, 0, 1).unwrap(),
            f64::NEG_INFINITY
        );
    }
}
