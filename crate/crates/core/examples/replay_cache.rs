//! Searches a cached stream again, including a keyword the first pass
//! never looked for.

use kwspot::cache::{read_cache, replay_decode, write_cache};
use kwspot::corpus::{Corpus, CorpusConfig};
use kwspot::decoder::DecoderConfig;
use kwspot::model::{FillerMode, Network};
use kwspot::pipeline::{network_input, spot_network, RunOptions};
use kwspot::spotter::SpotterConfig;

fn main() -> kwspot::Result<()> {
    let c = Corpus::generate(&CorpusConfig::high_margin().with_minutes(1.0))?;
    let mode = FillerMode::QuasiMonophone;
    // Hold out a keyword that occurs in the stream.
    let held = c.planted[0].keyword;
    let first_list: Vec<_> = c.keywords.iter().enumerate().filter(|&(i, _)| i != held).map(|(_, k)| k.clone()).collect();
    let first_net = Network::build(&c.inventory, &first_list, mode)?;
    let opts = RunOptions {
        keep_summaries: true,
        ..RunOptions::default()
    };
    let first = spot_network(&c.matrix, &first_net, DecoderConfig::default(), SpotterConfig::default(), opts)?;

    let path = std::env::temp_dir().join("kwspot-example.kwsc");
    let input = network_input(&c.matrix, &first_net)?;
    write_cache(&path, c.inventory.fingerprint(mode), &input, &first.summaries)?;
    let cache = read_cache(&path)?;
    cache.check_fingerprint(&c.inventory.fingerprint(mode))?;
    println!("cache: {} frames x {} values", cache.num_frames(), cache.values_per_frame());

    let again = replay_decode(&cache, first_net.keyword_units(), DecoderConfig::default(), SpotterConfig::default(), RunOptions::default())?;
    println!("same keywords: {} events, identical: {}", again.detections.len(), again.detections == first.detections);

    let new_net = Network::build(&c.inventory, &c.keywords[held..=held], mode)?;
    let new = replay_decode(&cache, new_net.keyword_units(), DecoderConfig::default(), SpotterConfig::default(), RunOptions::default())?;
    let planted = c.planted.iter().filter(|p| p.keyword == held).count();
    println!("new keyword {}: {planted} planted, {} found", c.keywords[held].form, new.detections.len());
    for d in &new.detections {
        println!("  {:.2}-{:.2}s, confidence {:.2}", d.event.start_time, d.event.end_time, d.event.confidence);
    }
    std::fs::remove_file(&path).ok();
    Ok(())
}
