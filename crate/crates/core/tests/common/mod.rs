//! Independent reference implementations used by the integration tests
//! and the acceptance runner. None of them share code with the library's
//! search or matching paths.

#![allow(dead_code)]

pub mod props;

use std::collections::{HashMap, HashSet};

use kwspot::eval::ReferenceWord;
use kwspot::likelihood::LikelihoodMatrix;
use kwspot::model::HmmUnit;
use kwspot::spotter::SpotEvent;
use rand::Rng;

/// Best path score into every `(frame, unit, state)` by walking every
/// path through the unit loop. Unreachable cells stay at `-inf`.
///
/// A path starts in the first state of any unit at frame 0, may stay in a
/// state or advance to the next one, and from a unit's last state may
/// also enter the first state of any unit.
pub fn enumerate_viterbi(units: &[HmmUnit], rows: &[Vec<f32>]) -> Vec<Vec<Vec<f64>>> {
    let mut best: Vec<Vec<Vec<f64>>> = rows
        .iter()
        .map(|_| units.iter().map(|u| vec![f64::NEG_INFINITY; u.num_states()]).collect())
        .collect();
    fn walk(
        units: &[HmmUnit],
        rows: &[Vec<f32>],
        best: &mut Vec<Vec<Vec<f64>>>,
        t: usize,
        u: usize,
        s: usize,
        score: f64,
    ) {
        let here = score + f64::from(rows[t][units[u].state_ids[s] as usize]);
        if here > best[t][u][s] {
            best[t][u][s] = here;
        }
        if t + 1 == rows.len() {
            return;
        }
        walk(units, rows, best, t + 1, u, s, here);
        if s + 1 < units[u].num_states() {
            walk(units, rows, best, t + 1, u, s + 1, here);
        } else {
            for v in 0..units.len() {
                walk(units, rows, best, t + 1, v, 0, here);
            }
        }
    }
    if !rows.is_empty() {
        for u in 0..units.len() {
            walk(units, rows, &mut best, 0, u, 0, 0.0);
        }
    }
    best
}

/// Random filler units drawing state ids from a small pool, so prefixes
/// are often shared between units.
pub fn random_units(rng: &mut impl Rng, max_units: usize, states_per_unit: usize, pool: u32) -> Vec<HmmUnit> {
    let n = rng.gen_range(1..=max_units);
    (0..n)
        .map(|i| {
            let states = (0..states_per_unit).map(|_| rng.gen_range(0..pool)).collect();
            HmmUnit::filler(i as u32, format!("u{i}"), states)
        })
        .collect()
}

pub fn random_rows(rng: &mut impl Rng, frames: usize, states: usize) -> Vec<Vec<f32>> {
    (0..frames)
        .map(|_| (0..states).map(|_| rng.gen_range(-20.0f32..0.0)).collect())
        .collect()
}

/// Rows on a quarter grid, so every path sum is exact in `f64`.
pub fn dyadic_rows(rng: &mut impl Rng, frames: usize, states: usize) -> Vec<Vec<f32>> {
    (0..frames)
        .map(|_| (0..states).map(|_| rng.gen_range(-80i32..0) as f32 * 0.25).collect())
        .collect()
}

/// Best single pass of `unit` aligned exactly over `start..=end`: state 0
/// at `start`, last state at `end`, no re-entry.
pub fn align_unit(m: &LikelihoodMatrix, unit: &HmmUnit, start: usize, end: usize) -> f64 {
    let n = unit.num_states();
    let mut d = vec![f64::NEG_INFINITY; n];
    d[0] = f64::from(m.get(start, unit.state_ids[0] as usize));
    for t in start + 1..=end {
        for s in (0..n).rev() {
            let from = if s == 0 { d[0] } else { d[s].max(d[s - 1]) };
            d[s] = from + f64::from(m.get(t, unit.state_ids[s] as usize));
        }
    }
    d[n - 1]
}

fn compatible(e: &SpotEvent, r: &ReferenceWord, tol: f64) -> bool {
    e.lemma == r.lemma && (e.midpoint() - r.midpoint()).abs() <= tol + 1e-9
}

/// Largest one-to-one event/reference pairing by trying every assignment.
/// Meant for at most a dozen events.
pub fn exhaustive_hits(events: &[SpotEvent], refs: &[ReferenceWord], lemmas: &HashSet<String>, tol: f64) -> usize {
    let refs: Vec<&ReferenceWord> = refs.iter().filter(|r| lemmas.contains(&r.lemma)).collect();
    assert!(refs.len() <= 16, "exhaustive search is for small instances");
    fn go(
        i: usize,
        used: u32,
        events: &[SpotEvent],
        refs: &[&ReferenceWord],
        tol: f64,
        memo: &mut HashMap<(usize, u32), usize>,
    ) -> usize {
        if i == events.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, used)) {
            return v;
        }
        let mut best = go(i + 1, used, events, refs, tol, memo);
        for (j, r) in refs.iter().enumerate() {
            if used & (1 << j) == 0 && compatible(&events[i], r, tol) {
                best = best.max(1 + go(i + 1, used | (1 << j), events, refs, tol, memo));
            }
        }
        memo.insert((i, used), best);
        best
    }
    go(0, 0, events, &refs, tol, &mut HashMap::new())
}

/// Maximum bipartite matching by augmenting paths.
pub fn augmenting_hits(events: &[SpotEvent], refs: &[ReferenceWord], lemmas: &HashSet<String>, tol: f64) -> usize {
    let refs: Vec<&ReferenceWord> = refs.iter().filter(|r| lemmas.contains(&r.lemma)).collect();
    let adj: Vec<Vec<usize>> = events
        .iter()
        .map(|e| (0..refs.len()).filter(|&j| compatible(e, refs[j], tol)).collect())
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; refs.len()];
    fn augment(i: usize, adj: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].map_or(true, |o| augment(o, adj, owner, seen)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    let mut hits = 0;
    for i in 0..events.len() {
        let mut seen = vec![false; refs.len()];
        if augment(i, &adj, &mut owner, &mut seen) {
            hits += 1;
        }
    }
    hits
}

/// One sweep point: threshold, miss rate and false alarms as a fraction
/// of the false spots at the lowest threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub threshold: f64,
    pub md_rate: f64,
    pub fa_fraction: f64,
    pub false_alarms: usize,
}

/// Re-matches the accepted events from scratch at every distinct
/// confidence, then once more above the highest confidence.
pub fn brute_force_sweep(
    events: &[SpotEvent],
    refs: &[ReferenceWord],
    lemmas: &HashSet<String>,
    tol: f64,
) -> Vec<SweepPoint> {
    let occurrences = refs.iter().filter(|r| lemmas.contains(&r.lemma)).count();
    let mut thresholds: Vec<f64> = events.iter().map(|e| e.confidence).collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let top = thresholds.last().map_or(100.0, |t| t + 1.0);
    thresholds.push(top);
    let total_false = events.len() - augmenting_hits(events, refs, lemmas, tol);
    thresholds
        .into_iter()
        .map(|thr| {
            let accepted: Vec<SpotEvent> = events.iter().filter(|e| e.confidence >= thr).cloned().collect();
            let hits = augmenting_hits(&accepted, refs, lemmas, tol);
            let fa = accepted.len() - hits;
            SweepPoint {
                threshold: thr,
                md_rate: (occurrences - hits) as f64 / occurrences as f64,
                fa_fraction: if total_false == 0 { 0.0 } else { fa as f64 / total_false as f64 },
                false_alarms: fa,
            }
        })
        .collect()
}

/// Equal-error rate and threshold from a sweep: the first point where the
/// miss rate reaches the false-alarm fraction, interpolated linearly from
/// the point before it.
pub fn brute_force_eer(points: &[SweepPoint]) -> (f64, f64) {
    let i = points
        .iter()
        .position(|p| p.md_rate >= p.fa_fraction)
        .expect("sweep ends with md = 1, fa = 0");
    let p1 = points[i];
    let d1 = p1.md_rate - p1.fa_fraction;
    if d1 == 0.0 {
        return (p1.md_rate, p1.threshold);
    }
    if i == 0 {
        return (0.5 * (p1.md_rate + p1.fa_fraction), p1.threshold);
    }
    let p0 = points[i - 1];
    let d0 = p0.md_rate - p0.fa_fraction;
    let w = d0 / (d0 - d1);
    (
        p0.md_rate + w * (p1.md_rate - p0.md_rate),
        p0.threshold + w * (p1.threshold - p0.threshold),
    )
}

pub fn event(lemma: &str, start: f64, end: f64, confidence: f64) -> SpotEvent {
    SpotEvent {
        keyword: lemma.to_string(),
        lemma: lemma.to_string(),
        start_time: start,
        end_time: end,
        confidence,
    }
}

/// Small random evaluation instance on a centisecond grid.
pub fn random_eval_instance(
    rng: &mut impl Rng,
    max_events: usize,
    max_refs: usize,
) -> (Vec<SpotEvent>, Vec<ReferenceWord>, HashSet<String>) {
    let lemmas = ["ahoj", "brno", "praha"];
    let span = 6.0;
    let t = |rng: &mut dyn rand::RngCore| (rng.gen_range(0..(span * 100.0) as u32) as f64) / 100.0;
    let n_ev = rng.gen_range(0..=max_events);
    let n_ref = rng.gen_range(1..=max_refs);
    let events = (0..n_ev)
        .map(|_| {
            let s = t(rng);
            let len = rng.gen_range(20..80) as f64 / 100.0;
            event(lemmas[rng.gen_range(0..3)], s, s + len, rng.gen_range(0..10_000) as f64 / 100.0)
        })
        .collect();
    let refs = (0..n_ref)
        .map(|_| {
            let s = t(rng);
            let len = rng.gen_range(20..80) as f64 / 100.0;
            let l = lemmas[rng.gen_range(0..3)];
            ReferenceWord::new(l, l, s, s + len).unwrap()
        })
        .collect();
    let keyword_lemmas = lemmas[..2].iter().map(|s| s.to_string()).collect();
    (events, refs, keyword_lemmas)
}
