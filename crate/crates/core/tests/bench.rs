use kwspot::bench::{select_lossless_beam, Stream, DEFAULT_BEAM_LADDER};
use kwspot::corpus::{Corpus, CorpusConfig};
use kwspot::decoder::DecoderConfig;
use kwspot::model::FillerMode;
use kwspot::pipeline::{network_input, spot_matrix, RunOptions};
use kwspot::spotter::SpotterConfig;

#[test]
fn selected_beam_is_lossless() {
    let c = Corpus::generate(&CorpusConfig::triphone().with_minutes(0.2)).unwrap();
    let nets: Vec<_> = [FillerMode::Triphone, FillerMode::QuasiMonophone]
        .into_iter()
        .map(|m| c.network(m).unwrap())
        .collect();
    let inputs: Vec<_> = nets.iter().map(|n| network_input(&c.matrix, n).unwrap().into_owned()).collect();
    let streams: Vec<Stream> = nets
        .iter()
        .zip(&inputs)
        .map(|(n, m)| Stream { matrix: m, units: &n.units })
        .collect();
    let scfg = SpotterConfig::default();
    let beam = select_lossless_beam(&streams, DEFAULT_BEAM_LADDER, scfg).unwrap();
    assert!(beam.is_finite() && DEFAULT_BEAM_LADDER.contains(&beam));
    for s in &streams {
        let open = spot_matrix(s.matrix, s.units, DecoderConfig::default().with_beam(f64::INFINITY), scfg, RunOptions::default()).unwrap();
        let tight = spot_matrix(s.matrix, s.units, DecoderConfig::default().with_beam(beam), scfg, RunOptions::default()).unwrap();
        assert_eq!(open.detections, tight.detections);
        assert!(tight.evaluated_tokens < open.evaluated_tokens);
    }
}
