//! Property checks shared by the proptest suite and the acceptance runner.

#![allow(dead_code)]

use kwspot::decoder::DecoderConfig;
use kwspot::eval::det_curve;
use kwspot::likelihood::{LikelihoodMatrix, StateMap};
use kwspot::model::{HmmUnit, KeywordEntry, UnitKind};
use kwspot::pipeline::{spot_matrix, RunOptions};
use kwspot::spotter::{buffer_filter, confidence, SpotCandidate, SpotterConfig};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STATES: usize = 6;
pub const FRAMES: usize = 40;

fn keyword_unit(id: u32, states: Vec<u32>) -> HmmUnit {
    let form = format!("kw{id}");
    HmmUnit {
        id,
        kind: UnitKind::Keyword,
        label: form.clone(),
        state_ids: states,
        keyword: Some(KeywordEntry::new(&form, &form, &["a", "b", "c", "d"])),
    }
}

/// Six one-state fillers plus two random keywords over a six-state
/// stream.
pub fn small_network(seed: u64) -> Vec<HmmUnit> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut units: Vec<HmmUnit> = (0..STATES as u32)
        .map(|s| HmmUnit::filler(s, format!("f{s}"), vec![s]))
        .collect();
    for k in 0..2 {
        let len = rng.gen_range(3..=5);
        let states = (0..len).map(|_| rng.gen_range(0..STATES as u32)).collect();
        units.push(keyword_unit(units.len() as u32 + k, states));
    }
    units
}

pub fn small_matrix(seed: u64) -> LikelihoodMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let rows = super::dyadic_rows(&mut rng, FRAMES, STATES);
    LikelihoodMatrix::from_rows(&rows, 10).unwrap()
}

fn spot_all(m: &LikelihoodMatrix, units: &[HmmUnit], threshold: f64) -> Vec<kwspot::spotter::Detection> {
    let dcfg = DecoderConfig {
        round_summaries: false,
        ..DecoderConfig::default()
    };
    let scfg = SpotterConfig {
        k: 50.0,
        accept_threshold: threshold,
        buffer_len: 5,
    };
    spot_matrix(m, units, dcfg, scfg, RunOptions::default()).unwrap().detections
}

/// Adding `offsets[t]` to every likelihood of frame `t` leaves every
/// detection and its confidence unchanged.
pub fn check_shift_invariance(seed: u64, offsets: &[i32]) -> Result<(), TestCaseError> {
    let units = small_network(seed);
    let m = small_matrix(seed);
    let shifts: Vec<f32> = offsets.iter().map(|&o| o as f32).collect();
    let shifted = m.shifted_per_frame(&shifts).unwrap();
    let a = spot_all(&m, &units, f64::NEG_INFINITY);
    let b = spot_all(&shifted, &units, f64::NEG_INFINITY);
    prop_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        prop_assert_eq!((x.start_frame, x.end_frame), (y.start_frame, y.end_frame));
        prop_assert!((x.event.confidence - y.event.confidence).abs() <= 1e-9);
    }
    Ok(())
}

pub fn shift_strategy() -> impl Strategy<Value = (u64, Vec<i32>)> {
    (any::<u64>(), prop::collection::vec(-500i32..500, FRAMES))
}

/// Pooling takes the max over each target's sources, and raising any
/// source never lowers a pooled value.
pub fn check_pool_monotone(targets: usize, map: &[u32], row: &[f32], bump: &[f32]) -> Result<(), TestCaseError> {
    let mut target_of: Vec<u32> = (0..targets as u32).collect();
    target_of.extend(map.iter().map(|&q| q % targets as u32));
    let n = target_of.len();
    let sm = StateMap::new(targets, target_of.clone()).unwrap();
    let row = &row[..n];
    let raised: Vec<f32> = row.iter().zip(bump).map(|(v, b)| v + b).collect();
    let (mut lo, mut hi) = (vec![0.0; targets], vec![0.0; targets]);
    sm.pool_row(row, &mut lo);
    sm.pool_row(&raised, &mut hi);
    for q in 0..targets {
        let want = (0..n)
            .filter(|&s| target_of[s] as usize == q)
            .map(|s| row[s])
            .fold(f32::NEG_INFINITY, f32::max);
        prop_assert_eq!(lo[q], want);
        prop_assert!(hi[q] >= lo[q]);
    }
    Ok(())
}

pub fn pool_strategy() -> impl Strategy<Value = (usize, Vec<u32>, Vec<f32>, Vec<f32>)> {
    (
        1usize..8,
        prop::collection::vec(0u32..8, 0..24),
        prop::collection::vec(-50.0f32..0.0, 32),
        prop::collection::vec(0.0f32..5.0, 32),
    )
}

/// Candidates in nondecreasing end-frame order.
pub fn candidates_from(raw: &[(usize, usize, u32)]) -> Vec<SpotCandidate> {
    let mut end = 0;
    raw.iter()
        .map(|&(kw, step, c)| {
            end += step;
            SpotCandidate {
                keyword: kw,
                end_frame: end + 30,
                start_frame: end,
                rival_margin: 0.0,
                confidence: f64::from(c) / 10.0,
                keyword_states: 12,
            }
        })
        .collect()
}

pub fn candidate_strategy() -> impl Strategy<Value = (Vec<(usize, usize, u32)>, usize)> {
    (prop::collection::vec((0usize..3, 0usize..6, 0u32..1000), 0..60), 1usize..20)
}

/// No two emitted events of one keyword end closer than the buffer, every
/// emitted event is an input, and every input is covered by an emitted
/// event of its keyword with at least its confidence.
pub fn check_buffer_dedup(raw: &[(usize, usize, u32)], len: usize) -> Result<(), TestCaseError> {
    let cands = candidates_from(raw);
    let out = buffer_filter(&cands, len);
    for (i, a) in out.iter().enumerate() {
        prop_assert!(cands.contains(a));
        for b in &out[i + 1..] {
            if a.keyword == b.keyword {
                prop_assert!(a.end_frame.abs_diff(b.end_frame) >= len, "{:?} {:?}", a, b);
            }
        }
    }
    for c in &cands {
        prop_assert!(out
            .iter()
            .any(|e| e.keyword == c.keyword && e.confidence >= c.confidence));
    }
    Ok(())
}

/// Raising the acceptance threshold never adds events, at the buffer and
/// over a whole decode.
pub fn check_threshold_monotone(raw: &[(usize, usize, u32)], len: usize, seed: u64, lo: f64, hi: f64) -> Result<(), TestCaseError> {
    let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let cands = candidates_from(raw);
    let pass = |thr: f64| -> Vec<SpotCandidate> { cands.iter().filter(|c| c.confidence >= thr).copied().collect() };
    prop_assert!(buffer_filter(&pass(hi), len).len() <= buffer_filter(&pass(lo), len).len());

    let units = small_network(seed);
    let m = small_matrix(seed);
    prop_assert!(spot_all(&m, &units, hi).len() <= spot_all(&m, &units, lo).len());
    Ok(())
}

pub fn threshold_strategy() -> impl Strategy<Value = (Vec<(usize, usize, u32)>, usize, u64, f64, f64)> {
    (
        prop::collection::vec((0usize..3, 0usize..6, 0u32..1000), 0..60),
        1usize..20,
        any::<u64>(),
        -50.0f64..100.0,
        -50.0f64..100.0,
    )
}

/// Confidence falls strictly as the margin grows.
pub fn check_confidence_decreasing(r: f64, dr: f64, dur: usize, ns: usize, k: f64) -> Result<(), TestCaseError> {
    let a = confidence(r, dur + 1, 1, ns, k).unwrap();
    let b = confidence(r + dr, dur + 1, 1, ns, k).unwrap();
    prop_assert!(b < a);
    Ok(())
}

/// Miss rate never falls and false alarms never rise as the threshold
/// goes up.
pub fn check_det_monotone(seed: u64) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (events, refs, lemmas) = super::random_eval_instance(&mut rng, 12, 8);
    if !refs.iter().any(|r| lemmas.contains(&r.lemma)) {
        return Ok(());
    }
    let det = det_curve(&events, &refs, &lemmas, 2, 0.5, 0.5).unwrap();
    for w in det.points.windows(2) {
        prop_assert!(w[0].threshold < w[1].threshold);
        prop_assert!(w[1].md_rate >= w[0].md_rate);
        prop_assert!(w[1].fa_per_kw_hour <= w[0].fa_per_kw_hour);
        prop_assert!(w[1].fa_fraction <= w[0].fa_fraction);
    }
    Ok(())
}
