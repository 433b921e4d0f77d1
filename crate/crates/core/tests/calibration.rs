use kwspot::corpus::{Corpus, CorpusConfig};
use kwspot::decoder::DecoderConfig;
use kwspot::eval::det_curve;
use kwspot::model::FillerMode;
use kwspot::pipeline::{calibrate, spot_network, RunOptions};
use kwspot::spotter::{SpotterConfig, DEFAULT_K};

#[test]
fn calibrated_k_puts_the_equal_error_point_at_75() {
    let c = Corpus::generate(&CorpusConfig::dev()).unwrap();
    let net = c.network(FillerMode::QuasiMonophone).unwrap();
    let cal = calibrate(&c.matrix, &net, &c.references, DecoderConfig::default(), 15, 0.5).unwrap();
    assert!((cal.k - DEFAULT_K).abs() / DEFAULT_K < 0.01, "calibrated k {}", cal.k);

    let scfg = SpotterConfig {
        k: cal.k,
        accept_threshold: f64::NEG_INFINITY,
        ..SpotterConfig::default()
    };
    let out = spot_network(&c.matrix, &net, DecoderConfig::default(), scfg, RunOptions::default()).unwrap();
    let det = det_curve(&out.events(), &c.references, &c.lemmas(), c.keywords.len(), c.audio_hours(), 0.5).unwrap();
    assert!((det.eer_threshold - 75.0).abs() < 0.5, "EER at {}", det.eer_threshold);
    assert!((det.eer - cal.eer).abs() < 1e-12);
}
