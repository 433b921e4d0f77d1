use kwspot::cache::{replay_decode, RunCache};
use kwspot::corpus::{Corpus, CorpusConfig};
use kwspot::decoder::DecoderConfig;
use kwspot::model::{FillerMode, Network};
use kwspot::pipeline::{network_input, spot_matrix, RunOptions, SpotOutput};
use kwspot::spotter::SpotterConfig;

fn keep() -> RunOptions {
    RunOptions {
        keep_summaries: true,
        ..RunOptions::default()
    }
}

fn first_pass(c: &Corpus, net: &Network) -> (RunCache, SpotOutput) {
    let m = network_input(&c.matrix, net).unwrap().into_owned();
    let out = spot_matrix(&m, &net.units, DecoderConfig::default(), SpotterConfig::default(), keep()).unwrap();
    let cache = RunCache::new(c.inventory.fingerprint(net.mode), m, &out.summaries).unwrap();
    (cache, out)
}

#[test]
fn replay_with_first_pass_keywords_reproduces_detections() {
    let c = Corpus::generate(&CorpusConfig::dev().with_minutes(3.0)).unwrap();
    for mode in [FillerMode::QuasiMonophone, FillerMode::Monophone] {
        let net = c.network(mode).unwrap();
        let (cache, first) = first_pass(&c, &net);
        let cache = RunCache::from_bytes(&cache.to_bytes()).unwrap();
        let replay = replay_decode(&cache, net.keyword_units(), DecoderConfig::default(), SpotterConfig::default(), RunOptions::default()).unwrap();
        assert!(!first.detections.is_empty());
        assert_eq!(replay.detections, first.detections, "{mode}");
    }
}

#[test]
fn triphone_replay_reproduces_detections() {
    let c = Corpus::generate(&CorpusConfig::triphone().with_minutes(0.25)).unwrap();
    let net = c.network(FillerMode::Triphone).unwrap();
    let (cache, first) = first_pass(&c, &net);
    let replay = replay_decode(&cache, net.keyword_units(), DecoderConfig::default(), SpotterConfig::default(), RunOptions::default()).unwrap();
    assert_eq!(replay.detections, first.detections);
}

#[test]
fn replay_is_deterministic() {
    let c = Corpus::generate(&CorpusConfig::dev().with_minutes(1.0)).unwrap();
    let net = c.network(FillerMode::QuasiMonophone).unwrap();
    let (cache, _) = first_pass(&c, &net);
    let run = || replay_decode(&cache, net.keyword_units(), DecoderConfig::default(), SpotterConfig::default(), RunOptions::default()).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.detections.len(), b.detections.len());
    for (x, y) in a.detections.iter().zip(&b.detections) {
        assert_eq!(x.rival_margin.to_bits(), y.rival_margin.to_bits());
        assert_eq!(x.event.confidence.to_bits(), y.event.confidence.to_bits());
    }
}

/// A keyword left out of the first pass is found by a replay with close
/// to the confidence a full re-run gives it.
#[test]
fn new_keyword_replay_tracks_full_rerun() {
    let c = Corpus::generate(&CorpusConfig::high_margin().with_minutes(2.0)).unwrap();
    let full_net = c.network(FillerMode::QuasiMonophone).unwrap();
    let mut checked = 0;
    for new in 0..6 {
        let first_keywords: Vec<_> = c.keywords.iter().enumerate().filter(|&(i, _)| i != new).map(|(_, k)| k.clone()).collect();
        let first_net = Network::build(&c.inventory, &first_keywords, FillerMode::QuasiMonophone).unwrap();
        let (cache, _) = first_pass(&c, &first_net);

        let new_unit = &full_net.keyword_units()[new..=new];
        let replay = replay_decode(&cache, new_unit, DecoderConfig::default(), SpotterConfig::default(), RunOptions::default()).unwrap();
        let (_, full) = first_pass(&c, &full_net);
        let form = &c.keywords[new].form;
        let full_hits: Vec<_> = full.detections.iter().filter(|d| &d.event.keyword == form).collect();
        let planted = c.planted.iter().filter(|p| p.keyword == new).count();
        assert_eq!(full_hits.len(), planted, "{form}");
        assert_eq!(replay.detections.len(), planted, "{form}");
        for (r, f) in replay.detections.iter().zip(&full_hits) {
            assert_eq!((r.start_frame, r.end_frame), (f.start_frame, f.end_frame));
            assert!(
                (r.event.confidence - f.event.confidence).abs() <= 0.5,
                "{form}: replay {} vs full {}",
                r.event.confidence,
                f.event.confidence
            );
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn disjoint_replay_only_reports_new_keywords() {
    let c = Corpus::generate(&CorpusConfig::high_margin().with_minutes(1.0)).unwrap();
    let net = c.network(FillerMode::QuasiMonophone).unwrap();
    let (cache, _) = first_pass(&c, &net);
    let subset = &net.keyword_units()[..3];
    let replay = replay_decode(&cache, subset, DecoderConfig::default(), SpotterConfig::default(), RunOptions::default()).unwrap();
    let forms: Vec<&str> = subset.iter().map(|u| u.keyword.as_ref().unwrap().form.as_str()).collect();
    assert!(replay.detections.iter().all(|d| forms.contains(&d.event.keyword.as_str())));
}
