//! Spots keywords in a synthetic stream and scores them against its
//! ground truth.

use kwspot::corpus::{Corpus, CorpusConfig};
use kwspot::decoder::DecoderConfig;
use kwspot::eval::{match_spots, rt_factor, DEFAULT_TOLERANCE_SECS};
use kwspot::events::events_to_text;
use kwspot::model::FillerMode;
use kwspot::pipeline::{spot_network, RunOptions};
use kwspot::spotter::SpotterConfig;

fn main() -> kwspot::Result<()> {
    let c = Corpus::generate(&CorpusConfig::high_margin().with_minutes(1.0))?;
    let net = c.network(FillerMode::QuasiMonophone)?;
    let out = spot_network(&c.matrix, &net, DecoderConfig::default(), SpotterConfig::default(), RunOptions::default())?;
    let events = out.events();
    print!("{}", events_to_text("synthetic", &events[..events.len().min(5)]));
    let m = match_spots(&events, &c.references, &c.lemmas(), DEFAULT_TOLERANCE_SECS);
    println!(
        "{} events: {} hits, {} false alarms, {} misses; RT factor {:.5}",
        events.len(),
        m.hits.len(),
        m.false_alarms.len(),
        m.misses.len(),
        rt_factor(out.elapsed_secs, c.matrix.duration_secs())?
    );
    Ok(())
}
