//! Feeds frames to the decoder from a producer thread through a bounded
//! channel, reporting detections as they are emitted.

use std::sync::mpsc::sync_channel;
use std::thread;

use kwspot::corpus::{Corpus, CorpusConfig};
use kwspot::decoder::{Decoder, DecoderConfig, FrameObserver};
use kwspot::model::FillerMode;
use kwspot::spotter::{Spotter, SpotterConfig};

fn main() -> kwspot::Result<()> {
    let c = Corpus::generate(&CorpusConfig::high_margin().with_minutes(0.5))?;
    let net = c.network(FillerMode::Monophone)?;
    let (tx, rx) = sync_channel::<Vec<f32>>(32);
    let matrix = c.matrix.clone();
    let producer = thread::spawn(move || {
        for row in matrix.rows() {
            if tx.send(row.to_vec()).is_err() {
                break;
            }
        }
    });

    let mut decoder = Decoder::new(&net.units, DecoderConfig::default())?;
    let mut spotter = Spotter::new(&net.units, SpotterConfig::default(), c.matrix.frame_shift_ms())?;
    let mut seen = 0;
    for row in rx {
        let summary = decoder.step(&row)?;
        spotter.on_frame(&summary, decoder.end_reports());
        for d in &spotter.detections()[seen..] {
            println!(
                "frame {:5}: {} {:.2}-{:.2}s confidence {:.2}",
                summary.frame, d.event.keyword, d.event.start_time, d.event.end_time, d.event.confidence
            );
        }
        seen = spotter.detections().len();
    }
    producer.join().expect("producer thread");
    let total = spotter.finish().len();
    println!("{total} detections after flushing the buffer");
    Ok(())
}
