//! A short version of the benchmark table.

use kwspot::bench::{bench_suite, BenchConfig};

fn main() -> kwspot::Result<()> {
    let mut cfg = BenchConfig {
        repeats: 1,
        ..BenchConfig::default()
    };
    cfg.mode_corpus = cfg.mode_corpus.with_minutes(0.25);
    cfg.scaling_corpora = cfg.scaling_corpora.into_iter().map(|c| c.with_minutes(0.5)).collect();
    let report = bench_suite(&cfg)?;
    print!("{}", report.to_text());
    Ok(())
}
