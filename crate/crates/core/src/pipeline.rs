//! End-to-end runs: pooling, decoding, spotting and `k` calibration.

use std::borrow::Cow;
use std::collections::HashSet;
use std::time::Instant;

use crate::decoder::{Decoder, DecoderConfig, EndStateReport, FrameObserver, FrameSummary};
use crate::error::{KwsError, Result};
use crate::eval::{det_curve, DetCurve, ReferenceWord};
use crate::likelihood::{pool_quasi_mono, LikelihoodMatrix};
use crate::model::{HmmUnit, Network};
use crate::spotter::{normalized_margin, Detection, SpotCandidate, SpotEvent, Spotter, SpotterConfig};

/// The likelihoods a network decodes: pooled in quasi-monophone mode when
/// `m` is at triphone width, borrowed otherwise.
pub fn network_input<'a>(m: &'a LikelihoodMatrix, net: &Network) -> Result<Cow<'a, LikelihoodMatrix>> {
    match &net.state_map {
        Some(map) if m.num_states() == map.num_source_states() && m.num_states() != net.num_states => {
            Ok(Cow::Owned(pool_quasi_mono(m, map)?))
        }
        _ if m.num_states() < net.num_states => Err(KwsError::DimensionMismatch(format!(
            "{} mode needs {} states, matrix has {}",
            net.mode,
            net.num_states,
            m.num_states()
        ))),
        _ => Ok(Cow::Borrowed(m)),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    pub keep_summaries: bool,
    pub log_candidates: bool,
    pub keep_end_reports: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SpotOutput {
    pub detections: Vec<Detection>,
    pub summaries: Vec<FrameSummary>,
    pub candidates: Vec<SpotCandidate>,
    pub end_reports: Vec<EndStateReport>,
    /// Wall-clock seconds spent decoding and spotting.
    pub elapsed_secs: f64,
    pub frames: usize,
    /// Sum over frames of active token slots.
    pub active_tokens: u64,
    /// Token evaluations over the run.
    pub evaluated_tokens: u64,
}

impl SpotOutput {
    pub fn events(&self) -> Vec<SpotEvent> {
        self.detections.iter().map(|d| d.event.clone()).collect()
    }

    pub fn mean_active_tokens(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.active_tokens as f64 / self.frames as f64
        }
    }
}

struct Collector<'a> {
    spotter: &'a mut Spotter,
    opts: RunOptions,
    summaries: Vec<FrameSummary>,
    ends: Vec<EndStateReport>,
}

impl FrameObserver for Collector<'_> {
    fn on_frame(&mut self, summary: &FrameSummary, ends: &[EndStateReport]) {
        if self.opts.keep_summaries {
            self.summaries.push(*summary);
        }
        if self.opts.keep_end_reports {
            self.ends.extend_from_slice(ends);
        }
        self.spotter.on_frame(summary, ends);
    }
}

/// Decodes `m` with `units` and runs the spotter over the end states.
pub fn spot_matrix(
    m: &LikelihoodMatrix,
    units: &[HmmUnit],
    dcfg: DecoderConfig,
    scfg: SpotterConfig,
    opts: RunOptions,
) -> Result<SpotOutput> {
    let mut decoder = Decoder::new(units, dcfg)?;
    if decoder.required_states() > m.num_states() {
        return Err(KwsError::StateOutOfRange {
            state: decoder.required_states() as u32 - 1,
            num_states: m.num_states(),
        });
    }
    let mut spotter = Spotter::new(units, scfg, m.frame_shift_ms())?;
    if opts.log_candidates {
        spotter = spotter.with_candidate_log();
    }
    let mut collector = Collector {
        spotter: &mut spotter,
        opts,
        summaries: Vec::new(),
        ends: Vec::new(),
    };
    let mut active_tokens = 0u64;
    let t0 = Instant::now();
    for row in m.rows() {
        let summary = decoder.step(row)?;
        active_tokens += decoder.active_state_count() as u64;
        collector.on_frame(&summary, decoder.end_reports());
    }
    let (summaries, end_reports) = (collector.summaries, collector.ends);
    let candidates = spotter.candidates().to_vec();
    let detections = spotter.finish();
    let elapsed_secs = t0.elapsed().as_secs_f64();
    Ok(SpotOutput {
        detections,
        summaries,
        candidates,
        end_reports,
        elapsed_secs,
        frames: m.num_frames(),
        active_tokens,
        evaluated_tokens: decoder.evaluated_tokens(),
    })
}

/// Spots with a whole network, pooling first if needed.
pub fn spot_network(
    m: &LikelihoodMatrix,
    net: &Network,
    dcfg: DecoderConfig,
    scfg: SpotterConfig,
    opts: RunOptions,
) -> Result<SpotOutput> {
    let input = network_input(m, net)?;
    spot_matrix(&input, &net.units, dcfg, scfg, opts)
}

/// Result of tuning `k` so the equal-error point sits at confidence 75.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub k: f64,
    /// Equal-error normalised margin `x*`.
    pub x_star: f64,
    pub eer: f64,
    /// DET curve over `-x` scores, which do not depend on `k`.
    pub det: DetCurve,
}

/// Confidence at which calibration places the equal-error point.
pub const CALIBRATION_TARGET: f64 = 75.0;

/// Runs the spotter without an acceptance threshold, scores every
/// detection by its normalised margin and solves `100 - k x* = 75` at the
/// equal-error point of the resulting DET curve.
pub fn calibrate(
    m: &LikelihoodMatrix,
    net: &Network,
    refs: &[ReferenceWord],
    dcfg: DecoderConfig,
    buffer_len: usize,
    tolerance: f64,
) -> Result<Calibration> {
    let scfg = SpotterConfig {
        k: 1.0,
        accept_threshold: f64::NEG_INFINITY,
        buffer_len,
    };
    let out = spot_network(m, net, dcfg, scfg, RunOptions::default())?;
    let events: Vec<SpotEvent> = out
        .detections
        .iter()
        .map(|d| SpotEvent {
            confidence: -normalized_margin(d.rival_margin, d.end_frame - d.start_frame, d.keyword_states),
            ..d.event.clone()
        })
        .collect();
    let lemmas: HashSet<String> = net
        .keyword_units()
        .iter()
        .filter_map(|u| u.keyword.as_ref().map(|k| k.lemma.clone()))
        .collect();
    let det = det_curve(
        &events,
        refs,
        &lemmas,
        net.keyword_units().len(),
        m.duration_secs() / 3600.0,
        tolerance,
    )?;
    let x_star = -det.eer_threshold;
    if !(x_star > 0.0) || !x_star.is_finite() {
        return Err(KwsError::DegenerateCalibration(format!(
            "equal-error margin {x_star} is not positive"
        )));
    }
    Ok(Calibration {
        k: (100.0 - CALIBRATION_TARGET) / x_star,
        x_star,
        eer: det.eer,
        det,
    })
}
