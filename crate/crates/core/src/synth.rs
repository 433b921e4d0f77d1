//! Synthetic likelihood streams with planted ground truth.
//!
//! Every frame has one "true" state that scores `noise_floor +
//! target_margin`; all other states score `noise_floor` plus uniform jitter
//! in `[0, target_margin / 2)`. The true state sequence is a forced
//! alignment of planted keywords, decoys and random background phones, so
//! the planted path is strictly optimal and ground truth is exact.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{KwsError, Result};
use crate::likelihood::LikelihoodMatrix;
use crate::model::{HmmUnit, StateId};

/// Background phone durations in frames, inclusive.
pub const BACKGROUND_MIN_FRAMES: usize = 3;
pub const BACKGROUND_MAX_FRAMES: usize = 8;

/// A keyword occurrence over frames `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Planted {
    /// Index into the keyword list passed to [`synth_generate`].
    pub keyword: usize,
    pub start: usize,
    pub end: usize,
}

impl Planted {
    pub fn frames(&self) -> usize {
        self.end + 1 - self.start
    }
}

/// An unlabelled state sequence aligned over `start..=end`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub states: Vec<StateId>,
    pub start: usize,
    pub end: usize,
}

/// A unit the background may use, tagged with the phone it realises.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackgroundUnit {
    pub phone: usize,
    pub states: Vec<StateId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_frames: usize,
    pub num_states: usize,
    pub frame_shift_ms: u16,
    pub noise_floor: f32,
    pub target_margin: f32,
    pub seed: u64,
    pub planted: Vec<Planted>,
    /// Confusable material that is not a keyword occurrence.
    pub decoys: Vec<Segment>,
    /// Frame ranges `(start, end)` with no true state at all.
    pub fades: Vec<(usize, usize)>,
    /// Fills every frame not covered by a planted or decoy span.
    pub background: Vec<BackgroundUnit>,
    /// Phone sequences the background must never contain.
    pub avoid: Vec<Vec<usize>>,
}

impl SynthSpec {
    pub fn new(num_frames: usize, num_states: usize, seed: u64) -> Self {
        Self {
            num_frames,
            num_states,
            frame_shift_ms: crate::likelihood::DEFAULT_FRAME_SHIFT_MS,
            noise_floor: -10.0,
            target_margin: 4.0,
            seed,
            planted: Vec::new(),
            decoys: Vec::new(),
            fades: Vec::new(),
            background: Vec::new(),
            avoid: Vec::new(),
        }
    }

    fn validate(&self, keywords: &[HmmUnit]) -> Result<()> {
        let bad = |m: String| Err(KwsError::Synthesis(m));
        if self.num_states == 0 {
            return bad("num_states must be positive".into());
        }
        if !(self.target_margin >= 0.0) || !self.noise_floor.is_finite() {
            return bad(format!(
                "need finite noise floor and margin >= 0, got {} and {}",
                self.noise_floor, self.target_margin
            ));
        }
        let mut spans: Vec<(usize, usize)> = Vec::new();
        for p in &self.planted {
            let Some(kw) = keywords.get(p.keyword) else {
                return bad(format!("planted keyword index {} out of range", p.keyword));
            };
            if p.end < p.start || p.end >= self.num_frames {
                return bad(format!("planted span {}..={} outside stream", p.start, p.end));
            }
            if p.frames() < kw.num_states() {
                return bad(format!(
                    "span {}..={} of {:?} is shorter than its {} states",
                    p.start,
                    p.end,
                    kw.label,
                    kw.num_states()
                ));
            }
            spans.push((p.start, p.end));
        }
        for d in &self.decoys {
            if d.end < d.start || d.end >= self.num_frames || d.end + 1 - d.start < d.states.len() {
                return bad(format!("decoy span {}..={} invalid", d.start, d.end));
            }
            spans.push((d.start, d.end));
        }
        spans.sort_unstable();
        if spans.windows(2).any(|w| w[1].0 <= w[0].1) {
            return bad("planted and decoy spans overlap".into());
        }
        let used = keywords
            .iter()
            .flat_map(|k| k.state_ids.iter())
            .chain(self.decoys.iter().flat_map(|d| d.states.iter()))
            .chain(self.background.iter().flat_map(|b| b.states.iter()));
        if let Some(&s) = used.clone().find(|&&s| s as usize >= self.num_states) {
            return bad(format!("state {s} outside {} states", self.num_states));
        }
        if self.background.is_empty() && spans.iter().map(|s| s.1 + 1 - s.0).sum::<usize>() < self.num_frames
        {
            return bad("background units needed to fill gaps".into());
        }
        Ok(())
    }
}

/// Frame-to-state index for `states` spread evenly over `frames` frames.
pub fn even_alignment(states: usize, frames: usize) -> impl Iterator<Item = usize> {
    (0..frames).map(move |f| f * states / frames)
}

struct Babbler<'a> {
    units: &'a [BackgroundUnit],
    avoid: HashSet<&'a [usize]>,
    lengths: Vec<usize>,
    history: Vec<usize>,
}

impl<'a> Babbler<'a> {
    fn new(units: &'a [BackgroundUnit], avoid: &'a [Vec<usize>]) -> Self {
        let mut lengths: Vec<usize> = avoid.iter().map(Vec::len).filter(|&l| l > 0).collect();
        lengths.sort_unstable();
        lengths.dedup();
        Self {
            units,
            avoid: avoid.iter().map(Vec::as_slice).collect(),
            lengths,
            history: Vec::new(),
        }
    }

    /// Checks every avoided window that includes `phone`, with the recent
    /// history before it and `ahead` (the next planted phones) after it.
    fn allowed(&self, phone: usize, ahead: &[usize]) -> bool {
        let h = &self.history;
        let mut seq: Vec<usize> = h.iter().copied().chain([phone]).chain(ahead.iter().copied()).collect();
        let at = h.len();
        seq.truncate(at + 1 + self.lengths.last().copied().unwrap_or(1));
        self.lengths.iter().all(|&n| {
            let lo = (at + 1).saturating_sub(n);
            (lo..=at)
                .filter(|&i| i + n <= seq.len())
                .all(|i| !self.avoid.contains(&seq[i..i + n]))
        })
    }

    fn pick(&mut self, rng: &mut ChaCha8Rng, ahead: &[usize]) -> &'a BackgroundUnit {
        let mut choice = self.units.choose(rng).expect("background is non-empty");
        for _ in 0..64 {
            if self.allowed(choice.phone, ahead) {
                break;
            }
            choice = self.units.choose(rng).expect("background is non-empty");
        }
        self.push(choice.phone);
        choice
    }

    fn push(&mut self, phone: usize) {
        self.history.push(phone);
        if self.history.len() > 16 {
            self.history.drain(..8);
        }
    }
}

/// Generates the stream; returns it with the planted occurrences sorted
/// by start frame.
pub fn synth_generate(spec: &SynthSpec, keywords: &[HmmUnit]) -> Result<(LikelihoodMatrix, Vec<Planted>)> {
    spec.validate(keywords)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // True state per frame; None inside fades.
    let mut truth: Vec<Option<StateId>> = vec![None; spec.num_frames];
    let mut place = |states: &[StateId], start: usize, end: usize| {
        for (f, s) in even_alignment(states.len(), end + 1 - start).enumerate() {
            truth[start + f] = Some(states[s]);
        }
    };
    for p in &spec.planted {
        place(&keywords[p.keyword].state_ids, p.start, p.end);
    }
    for d in &spec.decoys {
        place(&d.states, d.start, d.end);
    }

    // Phones of every planted span, so background next to it avoids
    // completing a keyword across the boundary.
    let mut phone_start: HashMap<StateId, usize> = HashMap::new();
    for u in &spec.background {
        if let Some(&first) = u.states.first() {
            phone_start.insert(first, u.phone);
        }
    }
    let phones_of = |states: &[StateId]| -> Vec<usize> {
        states.iter().filter_map(|s| phone_start.get(s).copied()).collect()
    };
    let mut spans: Vec<(usize, usize, Vec<usize>)> = spec
        .planted
        .iter()
        .map(|p| (p.start, p.end, phones_of(&keywords[p.keyword].state_ids)))
        .chain(spec.decoys.iter().map(|d| (d.start, d.end, phones_of(&d.states))))
        .collect();
    spans.sort_by_key(|s| s.0);

    let mut babbler = Babbler::new(&spec.background, &spec.avoid);
    let mut t = 0;
    let mut next = 0;
    while t < spec.num_frames {
        if next < spans.len() && spans[next].0 <= t {
            for &p in &spans[next].2 {
                babbler.push(p);
            }
            t = spans[next].1 + 1;
            next += 1;
            continue;
        }
        let gap_end = spans.get(next).map_or(spec.num_frames, |s| s.0);
        let ahead: &[usize] = spans.get(next).map_or(&[], |s| &s.2);
        while t < gap_end {
            let left = gap_end - t;
            let mut dur = rng.gen_range(BACKGROUND_MIN_FRAMES..=BACKGROUND_MAX_FRAMES);
            if left < dur + BACKGROUND_MIN_FRAMES {
                dur = left;
            }
            let last = dur == left;
            let unit = babbler.pick(&mut rng, if last { ahead } else { &[] });
            let n = unit.states.len();
            for f in 0..dur {
                // Short remainders keep only the leading states.
                let s = if dur >= n { f * n / dur } else { f };
                truth[t + f] = Some(unit.states[s]);
            }
            t += dur;
        }
    }
    for &(a, b) in &spec.fades {
        for slot in truth.iter_mut().take(b.min(spec.num_frames.saturating_sub(1)) + 1).skip(a) {
            *slot = None;
        }
    }

    let half = spec.target_margin / 2.0;
    let mut values = Vec::with_capacity(spec.num_frames * spec.num_states);
    for target in &truth {
        let row_start = values.len();
        for _ in 0..spec.num_states {
            let jitter = if half > 0.0 { rng.gen_range(0.0..half) } else { 0.0 };
            values.push(spec.noise_floor + jitter);
        }
        if let Some(s) = target {
            values[row_start + *s as usize] = spec.noise_floor + spec.target_margin;
        }
    }
    let m = LikelihoodMatrix::from_values(spec.num_states, spec.frame_shift_ms, values)?;
    let mut planted = spec.planted.clone();
    planted.sort_by_key(|p| (p.start, p.keyword));
    Ok((m, planted))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kw(states: &[StateId]) -> HmmUnit {
        let mut u = HmmUnit::filler(0, "k", states.to_vec());
        u.kind = crate::model::UnitKind::Keyword;
        u
    }

    fn background(n: u32) -> Vec<BackgroundUnit> {
        (0..n)
            .map(|p| BackgroundUnit {
                phone: p as usize,
                states: vec![3 * p, 3 * p + 1, 3 * p + 2],
            })
            .collect()
    }

    #[test]
    fn planted_states_get_the_margin() {
        let mut spec = SynthSpec::new(40, 12, 7);
        spec.background = background(4);
        spec.planted.push(Planted { keyword: 0, start: 10, end: 21 });
        let k = kw(&[0, 1, 2, 3, 4, 5]);
        let (m, planted) = synth_generate(&spec, &[k]).unwrap();
        assert_eq!(planted.len(), 1);
        for f in 10..=21 {
            let s = (f - 10) * 6 / 12;
            assert_eq!(m.get(f, s), -6.0);
            for other in (0..12).filter(|&o| o != s) {
                let v = m.get(f, other);
                assert!((-10.0..-8.0).contains(&v), "{v}");
            }
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let mut spec = SynthSpec::new(200, 12, 3);
        spec.background = background(4);
        let a = synth_generate(&spec, &[]).unwrap().0;
        let b = synth_generate(&spec, &[]).unwrap().0;
        assert_eq!(a, b);
        spec.seed = 4;
        assert_ne!(a, synth_generate(&spec, &[]).unwrap().0);
    }

    #[test]
    fn zero_margin_is_flat() {
        let mut spec = SynthSpec::new(20, 12, 1);
        spec.background = background(4);
        spec.target_margin = 0.0;
        let (m, _) = synth_generate(&spec, &[]).unwrap();
        assert!(m.values().iter().all(|&v| v == -10.0));
    }

    #[test]
    fn short_span_is_rejected() {
        let mut spec = SynthSpec::new(40, 12, 1);
        spec.background = background(4);
        spec.planted.push(Planted { keyword: 0, start: 0, end: 4 });
        let err = synth_generate(&spec, &[kw(&[0, 1, 2, 3, 4, 5])]).unwrap_err();
        assert!(matches!(err, KwsError::Synthesis(_)));
    }

    #[test]
    fn overlapping_spans_are_rejected() {
        let mut spec = SynthSpec::new(60, 12, 1);
        spec.background = background(4);
        spec.planted.push(Planted { keyword: 0, start: 0, end: 10 });
        spec.planted.push(Planted { keyword: 0, start: 10, end: 20 });
        assert!(synth_generate(&spec, &[kw(&[0, 1, 2])]).is_err());
    }

    #[test]
    fn background_avoids_forbidden_sequences() {
        let mut spec = SynthSpec::new(3000, 6, 5);
        spec.background = background(2);
        spec.avoid = vec![vec![0, 0], vec![1, 1]];
        let (m, _) = synth_generate(&spec, &[]).unwrap();
        // Alternating phones: the true state's phone changes at every boundary.
        let phones: Vec<usize> = (0..m.num_frames())
            .map(|f| {
                let row = m.row(f);
                let s = (0..6).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
                s / 3
            })
            .collect();
        let mut runs = 0;
        for w in phones.windows(2) {
            if w[0] != w[1] {
                runs += 1;
            }
        }
        // Each background phone lasts at most 8 frames (or a short tail).
        assert!(runs >= 3000 / 16, "{runs}");
    }

    #[test]
    fn fades_remove_the_true_state() {
        let mut spec = SynthSpec::new(30, 6, 2);
        spec.background = background(2);
        spec.fades.push((5, 9));
        let (m, _) = synth_generate(&spec, &[]).unwrap();
        for f in 5..=9 {
            assert!(m.row(f).iter().all(|&v| v < -8.0));
        }
        assert!(m.row(0).iter().any(|&v| v == -6.0));
    }
}
