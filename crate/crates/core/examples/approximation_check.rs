//! Measures how often the forward rival margin equals a full re-decode of
//! the keyword's span.

use kwspot::corpus::{Corpus, CorpusConfig};
use kwspot::decoder::DecoderConfig;
use kwspot::model::FillerMode;
use kwspot::pipeline::{network_input, spot_matrix, RunOptions};
use kwspot::spotter::{backtrack_passes, exact_rival_margin, SpotterConfig};

fn main() -> kwspot::Result<()> {
    let c = Corpus::generate(&CorpusConfig::dev().with_minutes(5.0))?;
    let net = c.network(FillerMode::QuasiMonophone)?;
    let m = network_input(&c.matrix, &net)?;
    let dcfg = DecoderConfig {
        round_summaries: false,
        ..DecoderConfig::default()
    };
    let opts = RunOptions {
        keep_summaries: true,
        keep_end_reports: true,
        ..RunOptions::default()
    };
    let out = spot_matrix(&m, &net.units, dcfg, SpotterConfig::default(), opts)?;
    let (mut passes, mut exact, mut total) = (0, 0, 0);
    for d in &out.detections {
        let Some(report) = out
            .end_reports
            .iter()
            .find(|e| {
                e.frame == d.end_frame
                    && e.start as usize == d.start_frame
                    && net.units[e.unit as usize].keyword.as_ref().is_some_and(|k| k.form == d.event.keyword)
            })
        else {
            continue;
        };
        total += 1;
        let oracle = exact_rival_margin(&m, &net.units, &out.summaries, report, dcfg.initial_score)?;
        if backtrack_passes(&out.summaries, d.start_frame, d.end_frame) {
            passes += 1;
        }
        if (oracle - d.rival_margin).abs() <= 1e-6 {
            exact += 1;
        }
    }
    println!("{total} detections: backtrack passes for {passes}, forward margin exact for {exact}");
    Ok(())
}
