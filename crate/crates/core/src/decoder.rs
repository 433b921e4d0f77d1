//! Frame-synchronous Viterbi recombination over keyword and filler units.
//!
//! Every unit is a left-to-right chain of states. Per frame `t`, an interior
//! state takes the better of its own previous score and its predecessor's,
//! plus the state's log-likelihood. An initial state competes its own
//! previous score against the best end-state score of the previous frame,
//! which is how new unit instances start. Keywords and fillers share one
//! unit array and the same inner loop.
//!
//! Units that share a prefix of state ids share tokens. The decoder only
//! touches active tokens, their successors, and one entry check per
//! distinct initial state, so per-frame cost follows the beam rather than
//! the number of units.

use std::collections::HashMap;

use crate::error::{KwsError, Result};
use crate::likelihood::LikelihoodMatrix;
use crate::model::{HmmUnit, UnitKind};

pub const DEFAULT_BEAM: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    /// Log-domain pruning width below the frame's best state score.
    pub beam: f64,
    /// Virtual best end-state score before frame 0.
    pub initial_score: f64,
    /// Round each frame's best scores up to the nearest `f32` before they
    /// are used for entry, pruning and confidence. A replay from cache then
    /// sees exactly the numbers the first pass used.
    pub round_summaries: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            beam: DEFAULT_BEAM,
            initial_score: 0.0,
            round_summaries: true,
        }
    }
}

impl DecoderConfig {
    /// No pruning and no rounding: scores are exact Viterbi maxima.
    pub fn exact() -> Self {
        Self {
            beam: f64::INFINITY,
            initial_score: 0.0,
            round_summaries: false,
        }
    }

    pub fn with_beam(mut self, beam: f64) -> Self {
        self.beam = beam;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beam > 0.0) {
            return Err(KwsError::InvalidConfig(format!(
                "beam must be positive, got {}",
                self.beam
            )));
        }
        if !self.initial_score.is_finite() {
            return Err(KwsError::InvalidConfig("initial score must be finite".into()));
        }
        Ok(())
    }
}

/// Per-frame best scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSummary {
    pub frame: usize,
    /// Best score over all active states.
    pub best_score: f64,
    /// Best score over unit end states; feeds unit entry in the next frame.
    pub best_end_score: f64,
    /// Start frame of the unit instance holding `best_end_score`.
    /// Unknown when the summary was replayed from a cache.
    pub best_end_start: Option<u32>,
}

/// An active unit end state after a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndStateReport {
    pub unit: u32,
    pub frame: usize,
    /// Accumulated score in the end state.
    pub score: f64,
    /// Frame at which this unit instance started.
    pub start: u32,
}

/// Receives per-frame decoder output.
pub trait FrameObserver {
    fn on_frame(&mut self, summary: &FrameSummary, ends: &[EndStateReport]);
}

impl FrameObserver for () {
    fn on_frame(&mut self, _: &FrameSummary, _: &[EndStateReport]) {}
}

impl<F: FnMut(&FrameSummary, &[EndStateReport])> FrameObserver for F {
    fn on_frame(&mut self, summary: &FrameSummary, ends: &[EndStateReport]) {
        self(summary, ends)
    }
}

/// Rounds towards +inf onto the f32 grid.
pub fn round_up_f32(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let mut f = x as f32;
    if f64::from(f) < x {
        f = f.next_up();
    }
    f64::from(f)
}

const NO_PARENT: u32 = u32::MAX;
const END_FLAG: u32 = 1 << 31;

/// One token slot of the prefix tree.
#[derive(Debug, Clone, Copy)]
struct Node {
    score: f64,
    start: u32,
    state: u32,
    parent: u32,
    /// Children occupy `child_lo..child_hi`.
    child_lo: u32,
    child_hi: u32,
    /// Units ending here are `end_units[end_lo..end_hi]`.
    end_lo: u32,
    end_hi: u32,
    /// Frame stamp + 1 of the last time the node was evaluated.
    queued: u32,
}

impl Node {
    fn is_end(&self) -> bool {
        self.end_lo != self.end_hi
    }
}

/// Token state for one decode session.
///
/// Tokens live on a prefix tree of state-id sequences. A state's score
/// depends only on the states before it in its unit, so units sharing a
/// prefix share those tokens exactly; each unit is the root-to-node path
/// ending at its end state. Nodes are stored breadth-first, so siblings
/// are contiguous and roots come first.
#[derive(Debug, Clone)]
pub struct Decoder {
    cfg: DecoderConfig,
    nodes: Vec<Node>,
    /// Per node: state id, with `END_FLAG` set when units end there.
    keys: Vec<u32>,
    end_units: Vec<u32>,
    num_roots: usize,
    unit_off: Vec<u32>,
    unit_nodes: Vec<u32>,
    kinds: Vec<UnitKind>,
    active: Vec<u32>,
    next_active: Vec<u32>,
    pending: Vec<(u32, f64, u32)>,
    ends: Vec<EndStateReport>,
    required_states: usize,
    frame: usize,
    prev_end_best: f64,
    evaluated: u64,
}

impl Decoder {
    /// Sets up tokens for frame −1: everything inactive, the virtual best
    /// end-state score equal to `cfg.initial_score`.
    pub fn new(units: &[HmmUnit], cfg: DecoderConfig) -> Result<Self> {
        if units.is_empty() {
            return Err(KwsError::NoUnits);
        }
        cfg.validate()?;
        // Build in insertion order first.
        let mut state_of: Vec<u32> = Vec::new();
        let mut kids: Vec<Vec<u32>> = Vec::new();
        let mut roots: Vec<u32> = Vec::new();
        let mut index: HashMap<(u32, u32), u32> = HashMap::new();
        let mut paths: Vec<Vec<u32>> = Vec::with_capacity(units.len());
        let mut kinds = Vec::with_capacity(units.len());
        for unit in units {
            if unit.state_ids.is_empty() {
                return Err(KwsError::InvalidConfig(format!(
                    "unit {:?} has no states",
                    unit.label
                )));
            }
            let mut at = NO_PARENT;
            let mut path = Vec::with_capacity(unit.state_ids.len());
            for &s in &unit.state_ids {
                at = match index.get(&(at, s)) {
                    Some(&n) => n,
                    None => {
                        let n = state_of.len() as u32;
                        state_of.push(s);
                        kids.push(Vec::new());
                        if at == NO_PARENT {
                            roots.push(n);
                        } else {
                            kids[at as usize].push(n);
                        }
                        index.insert((at, s), n);
                        n
                    }
                };
                path.push(at);
            }
            paths.push(path);
            kinds.push(unit.kind);
        }

        // Breadth-first renumbering, siblings ordered by state id.
        roots.sort_by_key(|&r| state_of[r as usize]);
        for k in &mut kids {
            k.sort_by_key(|&c| state_of[c as usize]);
        }
        let n = state_of.len();
        let mut order: Vec<u32> = roots.clone();
        let mut head = 0;
        while head < order.len() {
            let old = order[head] as usize;
            order.extend_from_slice(&kids[old]);
            head += 1;
        }
        let mut new_id = vec![0u32; n];
        for (new, &old) in order.iter().enumerate() {
            new_id[old as usize] = new as u32;
        }
        let mut ends_at: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (u, path) in paths.iter().enumerate() {
            ends_at[new_id[*path.last().expect("non-empty") as usize] as usize].push(u as u32);
        }
        let mut nodes = Vec::with_capacity(n);
        let mut end_units = Vec::with_capacity(units.len());
        let mut parent_of = vec![NO_PARENT; n];
        for &old in &order {
            for &c in &kids[old as usize] {
                parent_of[new_id[c as usize] as usize] = new_id[old as usize];
            }
        }
        for (new, &old) in order.iter().enumerate() {
            let k = &kids[old as usize];
            let (child_lo, child_hi) = match (k.first(), k.last()) {
                (Some(&f), Some(&l)) => (new_id[f as usize], new_id[l as usize] + 1),
                _ => (0, 0),
            };
            let end_lo = end_units.len() as u32;
            end_units.extend_from_slice(&ends_at[new]);
            nodes.push(Node {
                score: f64::NEG_INFINITY,
                start: 0,
                state: state_of[old as usize],
                parent: parent_of[new],
                child_lo,
                child_hi,
                end_lo,
                end_hi: end_units.len() as u32,
                queued: 0,
            });
        }
        if state_of.iter().any(|&s| s & END_FLAG != 0) {
            return Err(KwsError::InvalidConfig("state id exceeds 2^31".into()));
        }
        let keys = nodes
            .iter()
            .map(|n: &Node| n.state | if n.is_end() { END_FLAG } else { 0 })
            .collect();
        let mut unit_off = vec![0u32];
        let mut unit_nodes = Vec::new();
        for path in &paths {
            unit_nodes.extend(path.iter().map(|&o| new_id[o as usize]));
            unit_off.push(unit_nodes.len() as u32);
        }
        let required_states = state_of.iter().max().map_or(0, |&m| m as usize + 1);
        Ok(Self {
            cfg,
            nodes,
            keys,
            end_units,
            num_roots: roots.len(),
            unit_off,
            unit_nodes,
            kinds,
            active: Vec::new(),
            next_active: Vec::new(),
            pending: Vec::new(),
            ends: Vec::new(),
            required_states,
            frame: 0,
            prev_end_best: cfg.initial_score,
            evaluated: 0,
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.cfg
    }

    /// Index of the next frame to be processed.
    pub fn frame(&self) -> usize {
        self.frame
    }

    /// Minimum likelihood row width.
    pub fn required_states(&self) -> usize {
        self.required_states
    }

    pub fn num_units(&self) -> usize {
        self.kinds.len()
    }

    /// Distinct token slots after prefix sharing.
    pub fn num_tokens(&self) -> usize {
        self.nodes.len()
    }

    fn unit_path(&self, unit: usize) -> &[u32] {
        &self.unit_nodes[self.unit_off[unit] as usize..self.unit_off[unit + 1] as usize]
    }

    /// Scores of a unit's states after the last processed frame
    /// (`-inf` for inactive states).
    pub fn unit_scores(&self, unit: usize) -> Vec<f64> {
        self.unit_path(unit).iter().map(|&n| self.nodes[n as usize].score).collect()
    }

    /// Start frames of a unit's states; meaningful only for active states.
    pub fn unit_starts(&self, unit: usize) -> Vec<u32> {
        self.unit_path(unit).iter().map(|&n| self.nodes[n as usize].start).collect()
    }

    pub fn is_unit_active(&self, unit: usize) -> bool {
        self.unit_path(unit)
            .iter()
            .any(|&n| self.nodes[n as usize].score > f64::NEG_INFINITY)
    }

    /// Units with at least one active state.
    pub fn active_units(&self) -> Vec<u32> {
        (0..self.num_units() as u32).filter(|&u| self.is_unit_active(u as usize)).collect()
    }

    pub fn active_units_of_kind(&self, kind: UnitKind) -> usize {
        (0..self.num_units())
            .filter(|&u| self.kinds[u] == kind && self.is_unit_active(u))
            .count()
    }

    /// Active token slots; a slot shared by several units counts once.
    pub fn active_state_count(&self) -> usize {
        self.active.len()
    }

    /// Token evaluations since construction, entry checks included.
    pub fn evaluated_tokens(&self) -> u64 {
        self.evaluated
    }

    /// End states reported by the last processed frame.
    pub fn end_reports(&self) -> &[EndStateReport] {
        &self.ends
    }

    /// Processes one frame, computing the frame's best scores itself.
    pub fn step(&mut self, row: &[f32]) -> Result<FrameSummary> {
        self.step_inner(row, None)
    }

    /// Processes one frame against externally supplied best scores, as in
    /// a replay where only a subset of units is decoded.
    pub fn step_with_summary(&mut self, row: &[f32], summary: &FrameSummary) -> Result<FrameSummary> {
        self.step_inner(row, Some(summary))
    }

    fn step_inner(&mut self, row: &[f32], external: Option<&FrameSummary>) -> Result<FrameSummary> {
        if row.len() < self.required_states {
            return Err(KwsError::StateOutOfRange {
                state: self.required_states as u32 - 1,
                num_states: row.len(),
            });
        }
        let t = self.frame;
        let t32 = t as u32;
        let stamp = t32.wrapping_add(1);
        let entry = self.prev_end_best;
        let mut best = f64::NEG_INFINITY;
        let mut end_best = f64::NEG_INFINITY;
        let mut end_start = 0u32;
        self.ends.clear();
        self.pending.clear();
        let nodes = &mut self.nodes;

        // Fresh entries are identical for every unit sharing a first state.
        // Every root scores at least its entry, so these also seed the
        // running best.
        let mut evaluated = 0u64;
        if external.is_none() && entry > f64::NEG_INFINITY {
            evaluated += self.num_roots as u64;
            for r in &nodes[..self.num_roots] {
                let e = entry + f64::from(row[r.state as usize]);
                if e > best {
                    best = e;
                }
                if r.is_end() && (e > end_best || (e == end_best && t32 > end_start)) {
                    end_best = e;
                    end_start = t32;
                }
            }
        }

        // Recombination for active tokens and their successors. Node scores
        // still hold frame t-1 until the write-back below. On a first pass
        // the running best only grows, so a score already below it minus
        // the beam is pruned whatever the final best turns out to be.
        let early = external.is_none();
        let beam = self.cfg.beam;
        let row_max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        for &a in &self.active {
            let a = a as usize;
            let own = nodes[a];
            let (parent_score, parent_start) = if own.parent == NO_PARENT {
                (entry, t32)
            } else {
                let p = &nodes[own.parent as usize];
                (p.score, p.start)
            };
            let (lo, mut hi) = (own.child_lo as usize, own.child_hi as usize);
            let bound = own.score + f64::from(row_max);
            if early && bound < best - beam && bound < end_best {
                // No child can survive or raise the end best through this
                // parent; active children are still visited on their own.
                hi = lo;
            }
            for n in std::iter::once(a).chain(lo..hi) {
                if early && n != a {
                    // Screen on the compact key first. Skipping is exact: a
                    // child reached only from here would be pruned, and an
                    // active child is evaluated in its own turn.
                    let key = self.keys[n];
                    let v = own.score + f64::from(row[(key & !END_FLAG) as usize]);
                    if v < best - beam && (key & END_FLAG == 0 || v < end_best) {
                        continue;
                    }
                }
                let node = &mut nodes[n];
                if node.queued == stamp {
                    continue;
                }
                node.queued = stamp;
                let (advance, advance_start) = if n == a {
                    (parent_score, parent_start)
                } else {
                    (own.score, own.start)
                };
                let (prev, st) = if advance >= node.score && advance > f64::NEG_INFINITY {
                    (advance, advance_start)
                } else {
                    (node.score, node.start)
                };
                if prev == f64::NEG_INFINITY {
                    continue;
                }
                evaluated += 1;
                let v = prev + f64::from(row[node.state as usize]);
                if v > best {
                    best = v;
                }
                if node.is_end() && (v > end_best || (v == end_best && st > end_start)) {
                    end_best = v;
                    end_start = st;
                }
                if early && v < best - beam {
                    continue;
                }
                self.pending.push((n as u32, v, st));
            }
        }

        let summary = match external {
            Some(ext) => FrameSummary {
                frame: t,
                best_score: ext.best_score,
                best_end_score: ext.best_end_score,
                best_end_start: None,
            },
            None if self.cfg.round_summaries => FrameSummary {
                frame: t,
                best_score: round_up_f32(best),
                best_end_score: round_up_f32(end_best),
                best_end_start: end_best.is_finite().then_some(end_start),
            },
            None => FrameSummary {
                frame: t,
                best_score: best,
                best_end_score: end_best,
                best_end_start: end_best.is_finite().then_some(end_start),
            },
        };
        let threshold = summary.best_score - self.cfg.beam;

        // Write-back with pruning.
        for &a in &self.active {
            nodes[a as usize].score = f64::NEG_INFINITY;
        }
        self.next_active.clear();
        for &(n, v, st) in &self.pending {
            if v < threshold {
                continue;
            }
            let node = &mut nodes[n as usize];
            node.score = v;
            node.start = st;
            self.next_active.push(n);
        }

        // Activation of first states whose entry survives the beam.
        if entry > f64::NEG_INFINITY {
            for (r, node) in nodes[..self.num_roots].iter_mut().enumerate() {
                if node.queued == stamp {
                    continue;
                }
                let e = entry + f64::from(row[node.state as usize]);
                if e < threshold {
                    continue;
                }
                node.score = e;
                node.start = t32;
                self.next_active.push(r as u32);
            }
        }

        for &n in &self.next_active {
            let node = &nodes[n as usize];
            for &u in &self.end_units[node.end_lo as usize..node.end_hi as usize] {
                self.ends.push(EndStateReport {
                    unit: u,
                    frame: t,
                    score: node.score,
                    start: node.start,
                });
            }
        }
        std::mem::swap(&mut self.active, &mut self.next_active);

        self.evaluated += evaluated;
        self.prev_end_best = summary.best_end_score;
        self.frame += 1;
        Ok(summary)
    }

    /// Decodes rows strictly in order, calling `observer` after every frame.
    pub fn run<'a, I, O>(&mut self, rows: I, observer: &mut O) -> Result<()>
    where
        I: IntoIterator<Item = &'a [f32]>,
        O: FrameObserver + ?Sized,
    {
        for row in rows {
            let summary = self.step(row)?;
            observer.on_frame(&summary, &self.ends);
        }
        Ok(())
    }
}

/// Everything a full decode produced, kept in memory.
#[derive(Debug, Clone, Default)]
pub struct DecodeOutput {
    pub summaries: Vec<FrameSummary>,
    pub ends: Vec<EndStateReport>,
}

/// Decodes a whole matrix and collects summaries and end-state reports.
pub fn decode_stream(
    m: &LikelihoodMatrix,
    units: &[HmmUnit],
    cfg: DecoderConfig,
) -> Result<DecodeOutput> {
    let mut decoder = Decoder::new(units, cfg)?;
    if decoder.required_states() > m.num_states() {
        return Err(KwsError::StateOutOfRange {
            state: decoder.required_states() as u32 - 1,
            num_states: m.num_states(),
        });
    }
    let mut out = DecodeOutput::default();
    decoder.run(m.rows(), &mut |s: &FrameSummary, ends: &[EndStateReport]| {
        out.summaries.push(*s);
        out.ends.extend_from_slice(ends);
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(id: u32, states: &[u32]) -> HmmUnit {
        HmmUnit::filler(id, format!("u{id}"), states.to_vec())
    }

    #[test]
    fn first_frame_enters_from_initial_score() {
        let units = [unit(0, &[0, 1, 2])];
        let mut dec = Decoder::new(&units, DecoderConfig::exact()).unwrap();
        dec.step(&[-2.5, -1.0, -1.0]).unwrap();
        assert_eq!(dec.unit_scores(0)[0], -2.5);
        assert_eq!(dec.unit_starts(0)[0], 0);
        assert!(dec.unit_scores(0)[1..].iter().all(|s| *s == f64::NEG_INFINITY));
    }

    #[test]
    fn three_units_all_enter_at_frame_zero() {
        let units = [unit(0, &[0, 1]), unit(1, &[2, 3]), unit(2, &[4, 5])];
        let mut dec = Decoder::new(&units, DecoderConfig::exact()).unwrap();
        dec.step(&[-1.0, 0.0, -2.0, 0.0, -3.0, 0.0]).unwrap();
        for (u, want) in [(0, -1.0), (1, -2.0), (2, -3.0)] {
            assert_eq!(dec.unit_scores(u)[0], want);
        }
    }

    #[test]
    fn empty_unit_list_is_rejected() {
        assert!(matches!(
            Decoder::new(&[], DecoderConfig::default()),
            Err(KwsError::NoUnits)
        ));
    }

    #[test]
    fn non_positive_beam_is_rejected() {
        let units = [unit(0, &[0])];
        assert!(Decoder::new(&units, DecoderConfig::default().with_beam(0.0)).is_err());
        assert!(Decoder::new(&units, DecoderConfig::default().with_beam(f64::NAN)).is_err());
    }

    #[test]
    fn interior_state_takes_better_predecessor() {
        // Drive unit 0 so that d(s1)=-3 and d(s2)=-5 after frame 1, then
        // check frame 2's s2 = L + max(-5, -3) = -4 inheriting s1's start.
        let units = [unit(0, &[0, 1, 2])];
        let mut dec = Decoder::new(&units, DecoderConfig::exact()).unwrap();
        dec.step(&[-4.0, 0.0, 0.0]).unwrap(); // s1 = -4 (T=0)
        dec.step(&[1.0, -1.0, 0.0]).unwrap(); // s1 = -3 (stay), s2 = -5 (T=0)
        assert_eq!(&dec.unit_scores(0)[..2], &[-3.0, -5.0]);
        dec.step(&[0.0, -1.0, 0.0]).unwrap();
        assert_eq!(dec.unit_scores(0)[1], -4.0);
        assert_eq!(dec.unit_starts(0)[1], 0);
    }

    #[test]
    fn initial_state_restarts_from_best_end() {
        // unit 0: single state, a cheap end state; unit 1 carries s1 = -6.
        let units = [unit(0, &[0]), unit(1, &[1, 2])];
        let mut dec = Decoder::new(&units, DecoderConfig::exact()).unwrap();
        // frame 0: unit0 end = -2 (D_best), unit1 s1 = -6
        dec.step(&[-2.0, -6.0, 0.0]).unwrap();
        assert_eq!(dec.unit_scores(1)[0], -6.0);
        // frame 1: unit1 s1 = L + max(D_best=-2, -6) = -1.5 - 2 = -3.5, T=1
        dec.step(&[-9.0, -1.5, 0.0]).unwrap();
        assert_eq!(dec.unit_scores(1)[0], -3.5);
        assert_eq!(dec.unit_starts(1)[0], 1);
    }

    #[test]
    fn entry_wins_ties_against_self_loop() {
        let units = [unit(0, &[0])];
        let mut dec = Decoder::new(&units, DecoderConfig::exact()).unwrap();
        dec.step(&[0.0]).unwrap();
        // D_best(0) = 0 = d(s1,0): entry preferred -> start moves to 1
        dec.step(&[-1.0]).unwrap();
        assert_eq!(dec.unit_starts(0)[0], 1);
    }

    #[test]
    fn empty_matrix_yields_nothing() {
        let units = [unit(0, &[0, 1, 2])];
        let m = LikelihoodMatrix::empty(3, 10).unwrap();
        let out = decode_stream(&m, &units, DecoderConfig::default()).unwrap();
        assert!(out.summaries.is_empty() && out.ends.is_empty());
    }

    #[test]
    fn narrow_matrix_is_rejected() {
        let units = [unit(0, &[0, 5])];
        let m = LikelihoodMatrix::from_rows(&[vec![0.0; 3]], 10).unwrap();
        assert!(matches!(
            decode_stream(&m, &units, DecoderConfig::default()),
            Err(KwsError::StateOutOfRange { .. })
        ));
    }

    #[test]
    fn rounding_is_upward_onto_f32() {
        let x = -123456.789_f64;
        let r = round_up_f32(x);
        assert!(r >= x);
        assert_eq!(r, f64::from(r as f32));
        assert!(r - x < 0.01);
        assert_eq!(round_up_f32(f64::NEG_INFINITY), f64::NEG_INFINITY);
        assert_eq!(round_up_f32(-2.5), -2.5);
    }

    #[test]
    fn end_best_never_exceeds_best() {
        let units = [unit(0, &[0, 1]), unit(1, &[1, 2, 0])];
        let rows: Vec<Vec<f32>> = (0..20)
            .map(|t| (0..3).map(|s| -((t * 7 + s * 3) % 5) as f32 - 0.5).collect())
            .collect();
        let m = LikelihoodMatrix::from_rows(&rows, 10).unwrap();
        let out = decode_stream(&m, &units, DecoderConfig::default()).unwrap();
        for s in &out.summaries {
            assert!(s.best_end_score <= s.best_score);
        }
    }
}
