//! Scoring spot output against time-aligned references.
//!
//! A spot is a hit when an unmatched reference word of the same lemma has
//! its midpoint within the tolerance (±0.5 s by default) of the spot's
//! midpoint. Each reference matches at most one spot. Within a lemma,
//! spots are swept in midpoint order and each takes the earliest feasible
//! reference; with equal-width windows this sweep yields a maximum
//! matching.
//!
//! The DET sweep re-matches the accepted subset at every threshold, so the
//! miss rate is nondecreasing and the false-alarm count nonincreasing in
//! the threshold.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{KwsError, Result};
use crate::spotter::SpotEvent;

pub const DEFAULT_TOLERANCE_SECS: f64 = 0.5;
const TIME_EPS: f64 = 1e-9;

/// One annotated word in the reference transcription.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceWord {
    pub word: String,
    pub lemma: String,
    pub start: f64,
    pub end: f64,
}

impl ReferenceWord {
    pub fn new(word: &str, lemma: &str, start: f64, end: f64) -> Result<Self> {
        if !(end > start) || start < 0.0 {
            return Err(KwsError::Evaluation(format!(
                "reference {word:?} has invalid span {start}..{end}"
            )));
        }
        Ok(Self {
            word: word.to_string(),
            lemma: lemma.to_string(),
            start,
            end,
        })
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start + self.end)
    }

    pub fn to_line(&self) -> String {
        format!("{},{},{:.2},{:.2}", self.word, self.lemma, self.start, self.end)
    }
}

/// Parses `word,lemma,start,end` lines (seconds).
pub fn parse_references(text: &str, file: &str) -> Result<Vec<ReferenceWord>> {
    let mut refs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| KwsError::Parse {
            file: file.to_string(),
            line: i + 1,
            message,
        };
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(err(format!("expected 4 columns, found {}", cols.len())));
        }
        let start: f64 = cols[2].parse().map_err(|_| err(format!("bad start {:?}", cols[2])))?;
        let end: f64 = cols[3].parse().map_err(|_| err(format!("bad end {:?}", cols[3])))?;
        refs.push(ReferenceWord::new(cols[0], cols[1], start, end).map_err(|e| err(e.to_string()))?);
    }
    Ok(refs)
}

pub fn load_references(path: impl AsRef<Path>) -> Result<Vec<ReferenceWord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| KwsError::io(path, e))?;
    parse_references(&text, &path.display().to_string())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    /// (event index, reference index).
    pub hits: Vec<(usize, usize)>,
    pub false_alarms: Vec<usize>,
    /// Reference indices of unmatched keyword occurrences.
    pub misses: Vec<usize>,
}

/// Max matching of sorted midpoints within one lemma.
fn match_sorted(events: &[(f64, usize)], refs: &[(f64, usize)], tol: f64) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let mut j = 0;
    for &(e, ei) in events {
        while j < refs.len() && refs[j].0 < e - tol - TIME_EPS {
            j += 1;
        }
        if j < refs.len() && refs[j].0 <= e + tol + TIME_EPS {
            pairs.push((ei, refs[j].1));
            j += 1;
        }
    }
    pairs
}

fn sort_by_mid(v: &mut [(f64, usize)]) {
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
}

/// Matches spots to references of the keyword lemmas.
pub fn match_spots(
    events: &[SpotEvent],
    refs: &[ReferenceWord],
    lemmas: &HashSet<String>,
    tolerance: f64,
) -> MatchResult {
    let mut ev_by: BTreeMap<&str, Vec<(f64, usize)>> = BTreeMap::new();
    for (i, e) in events.iter().enumerate() {
        ev_by.entry(e.lemma.as_str()).or_default().push((e.midpoint(), i));
    }
    let mut ref_by: BTreeMap<&str, Vec<(f64, usize)>> = BTreeMap::new();
    for (i, r) in refs.iter().enumerate() {
        if lemmas.contains(&r.lemma) {
            ref_by.entry(r.lemma.as_str()).or_default().push((r.midpoint(), i));
        }
    }
    let mut result = MatchResult::default();
    let mut event_hit = vec![false; events.len()];
    let mut ref_hit = vec![false; refs.len()];
    for (lemma, evs) in ev_by.iter_mut() {
        sort_by_mid(evs);
        if let Some(rs) = ref_by.get_mut(lemma) {
            sort_by_mid(rs);
            for (e, r) in match_sorted(evs, rs, tolerance) {
                event_hit[e] = true;
                ref_hit[r] = true;
                result.hits.push((e, r));
            }
        }
    }
    result.hits.sort_unstable();
    result.false_alarms = (0..events.len()).filter(|&i| !event_hit[i]).collect();
    result.misses = refs
        .iter()
        .enumerate()
        .filter(|(i, r)| lemmas.contains(&r.lemma) && !ref_hit[*i])
        .map(|(i, _)| i)
        .collect();
    result
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    /// Spots with confidence >= threshold are accepted.
    pub threshold: f64,
    pub md_rate: f64,
    /// False alarms per keyword per hour of audio.
    pub fa_per_kw_hour: f64,
    /// False alarms as a fraction of all false spots at the lowest threshold.
    pub fa_fraction: f64,
    pub false_alarms: usize,
    pub misses: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    pub points: Vec<DetPoint>,
    pub eer: f64,
    pub eer_threshold: f64,
    pub occurrences: usize,
    pub num_keywords: usize,
    pub audio_hours: f64,
}

impl DetCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("# md_rate = misses / keyword occurrences\n");
        out.push_str("# fa_per_kw_hour = false alarms / (keywords * audio hours)\n");
        out.push_str("# fa_fraction = false alarms / false spots at the lowest threshold\n");
        let _ = writeln!(
            out,
            "# eer (md_rate vs fa_fraction) = {:.6} at threshold {:.4}; occurrences={} keywords={} hours={:.4}",
            self.eer, self.eer_threshold, self.occurrences, self.num_keywords, self.audio_hours
        );
        out.push_str("threshold,md_rate,fa_per_kw_hour,fa_fraction\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:.6},{:.6},{:.6},{:.6}",
                p.threshold, p.md_rate, p.fa_per_kw_hour, p.fa_fraction
            );
        }
        out
    }
}

/// Equal-error point of a threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqualError {
    pub rate: f64,
    pub threshold: f64,
}

/// Finds where `md - fa` changes sign over `(threshold, md, fa)` points
/// sorted by ascending threshold, interpolating linearly between the two
/// neighbouring thresholds.
pub fn equal_error_point(points: &[(f64, f64, f64)]) -> Option<EqualError> {
    let first = points.iter().position(|&(_, md, fa)| md - fa >= 0.0)?;
    let (t1, md1, fa1) = points[first];
    let d1 = md1 - fa1;
    if d1 == 0.0 || first == 0 {
        return Some(EqualError {
            rate: if d1 == 0.0 { md1 } else { 0.5 * (md1 + fa1) },
            threshold: t1,
        });
    }
    let (t0, md0, fa0) = points[first - 1];
    let d0 = md0 - fa0;
    let lambda = d0 / (d0 - d1);
    Some(EqualError {
        rate: md0 + lambda * (md1 - md0),
        threshold: t0 + lambda * (t1 - t0),
    })
}

/// Equal-error point for labelled scores (higher score = more confident).
pub fn labelled_eer(scored: &[(f64, bool)]) -> Option<EqualError> {
    let hits = scored.iter().filter(|s| s.1).count();
    let falses = scored.len() - hits;
    if hits == 0 || falses == 0 {
        return None;
    }
    let mut sorted: Vec<(f64, bool)> = scored.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut points = Vec::new();
    let (mut missed, mut rejected) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let thr = sorted[i].0;
        points.push((
            thr,
            missed as f64 / hits as f64,
            (falses - rejected) as f64 / falses as f64,
        ));
        while i < sorted.len() && sorted[i].0 == thr {
            if sorted[i].1 {
                missed += 1;
            } else {
                rejected += 1;
            }
            i += 1;
        }
    }
    let top = sorted.last().map(|s| s.0).unwrap_or(0.0) + 1.0;
    points.push((top, 1.0, 0.0));
    equal_error_point(&points)
}

/// Sweeps the acceptance threshold over every distinct confidence.
///
/// The last point uses a threshold one unit above the highest confidence,
/// where nothing is accepted.
pub fn det_curve(
    events: &[SpotEvent],
    refs: &[ReferenceWord],
    lemmas: &HashSet<String>,
    num_keywords: usize,
    audio_hours: f64,
    tolerance: f64,
) -> Result<DetCurve> {
    let occurrences = refs.iter().filter(|r| lemmas.contains(&r.lemma)).count();
    if occurrences == 0 {
        return Err(KwsError::Evaluation("no keyword occurrences in references".into()));
    }
    if !(audio_hours > 0.0) || num_keywords == 0 {
        return Err(KwsError::Evaluation(
            "audio duration and keyword count must be positive".into(),
        ));
    }

    // Per-lemma state for incremental re-matching.
    let mut lemma_ids: BTreeMap<&str, usize> = BTreeMap::new();
    for e in events {
        let n = lemma_ids.len();
        lemma_ids.entry(e.lemma.as_str()).or_insert(n);
    }
    let mut lemma_refs: Vec<Vec<(f64, usize)>> = vec![Vec::new(); lemma_ids.len()];
    for (i, r) in refs.iter().enumerate() {
        if !lemmas.contains(&r.lemma) {
            continue;
        }
        if let Some(&l) = lemma_ids.get(r.lemma.as_str()) {
            lemma_refs[l].push((r.midpoint(), i));
        }
    }
    lemma_refs.iter_mut().for_each(|v| sort_by_mid(v));
    let mut lemma_events: Vec<Vec<(f64, usize)>> = vec![Vec::new(); lemma_ids.len()];
    for (i, e) in events.iter().enumerate() {
        lemma_events[lemma_ids[e.lemma.as_str()]].push((e.midpoint(), i));
    }
    lemma_events.iter_mut().for_each(|v| sort_by_mid(v));
    let mut lemma_hits: Vec<usize> = lemma_events
        .iter()
        .zip(&lemma_refs)
        .map(|(e, r)| match_sorted(e, r, tolerance).len())
        .collect();
    let mut accepted_in: Vec<Vec<(f64, usize)>> = lemma_events.clone();

    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| events[a].confidence.total_cmp(&events[b].confidence));

    let mut hits: usize = lemma_hits.iter().sum();
    let mut accepted = events.len();
    let total_false = accepted - hits;
    let kw_hours = num_keywords as f64 * audio_hours;
    let point = |thr: f64, hits: usize, accepted: usize| {
        let fa = accepted - hits;
        DetPoint {
            threshold: thr,
            md_rate: (occurrences - hits) as f64 / occurrences as f64,
            fa_per_kw_hour: fa as f64 / kw_hours,
            fa_fraction: if total_false == 0 { 0.0 } else { fa as f64 / total_false as f64 },
            false_alarms: fa,
            misses: occurrences - hits,
        }
    };

    let mut points = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let thr = events[order[i]].confidence;
        points.push(point(thr, hits, accepted));
        let mut touched = Vec::new();
        while i < order.len() && events[order[i]].confidence == thr {
            let ev = order[i];
            let l = lemma_ids[events[ev].lemma.as_str()];
            accepted_in[l].retain(|&(_, idx)| idx != ev);
            accepted -= 1;
            touched.push(l);
            i += 1;
        }
        touched.sort_unstable();
        touched.dedup();
        for l in touched {
            let now = match_sorted(&accepted_in[l], &lemma_refs[l], tolerance).len();
            hits = hits + now - lemma_hits[l];
            lemma_hits[l] = now;
        }
    }
    let top = events
        .iter()
        .map(|e| e.confidence)
        .fold(f64::NEG_INFINITY, f64::max);
    let top = if top.is_finite() { top + 1.0 } else { 100.0 };
    points.push(point(top, 0, 0));

    let triples: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|p| (p.threshold, p.md_rate, p.fa_fraction))
        .collect();
    let eer = equal_error_point(&triples).expect("last point has md = 1 >= fa = 0");
    Ok(DetCurve {
        points,
        eer: eer.rate,
        eer_threshold: eer.threshold,
        occurrences,
        num_keywords,
        audio_hours,
    })
}

/// Processing time over audio time.
pub fn rt_factor(processing_secs: f64, audio_secs: f64) -> Result<f64> {
    if !(audio_secs > 0.0) {
        return Err(KwsError::Evaluation(format!(
            "audio duration must be positive, got {audio_secs}"
        )));
    }
    Ok(processing_secs / audio_secs)
}
