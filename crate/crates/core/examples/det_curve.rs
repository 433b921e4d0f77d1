//! Calibrates `k` on the dev stream and prints its DET curve.

use kwspot::corpus::{Corpus, CorpusConfig};
use kwspot::decoder::DecoderConfig;
use kwspot::eval::det_curve;
use kwspot::model::FillerMode;
use kwspot::pipeline::{calibrate, spot_network, RunOptions};
use kwspot::spotter::SpotterConfig;

fn main() -> kwspot::Result<()> {
    let c = Corpus::generate(&CorpusConfig::dev().with_minutes(10.0))?;
    let net = c.network(FillerMode::QuasiMonophone)?;
    let cal = calibrate(&c.matrix, &net, &c.references, DecoderConfig::default(), 15, 0.5)?;
    println!("calibrated k = {:.1} (equal-error margin {:.5})", cal.k, cal.x_star);

    let scfg = SpotterConfig {
        k: cal.k,
        accept_threshold: 0.0,
        ..SpotterConfig::default()
    };
    let out = spot_network(&c.matrix, &net, DecoderConfig::default(), scfg, RunOptions::default())?;
    let det = det_curve(&out.events(), &c.references, &c.lemmas(), c.keywords.len(), c.audio_hours(), 0.5)?;
    println!("EER {:.4} at confidence {:.2}", det.eer, det.eer_threshold);
    let step = (det.points.len() / 10).max(1);
    for p in det.points.iter().step_by(step) {
        println!("threshold {:6.2}  MD {:.3}  FA/kw/h {:8.3}", p.threshold, p.md_rate, p.fa_per_kw_hour);
    }
    Ok(())
}
