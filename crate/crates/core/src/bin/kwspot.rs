use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use kwspot::bench::{bench_suite, BenchConfig};
use kwspot::cache::{read_cache, replay_decode, write_cache};
use kwspot::config::{ConfigFile, Overrides, RunManifest, Settings};
use kwspot::corpus::{Corpus, CorpusConfig};
use kwspot::eval::{det_curve, load_references, rt_factor};
use kwspot::events::{events_to_jsonl, events_to_text, load_events};
use kwspot::likelihood::LikelihoodMatrix;
use kwspot::model::{load_keyword_list, FillerMode, KeywordEntry, Network, PhonemeInventory};
use kwspot::pipeline::{network_input, spot_network, RunOptions, SpotOutput};

#[derive(Parser)]
#[command(name = "kwspot", version, about = "Keyword spotting over per-frame state likelihoods")]
struct Cli {
    /// Flat key = value config file; defaults to $KWSPOT_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode a likelihood stream and write keyword events.
    Spot(SpotArgs),
    /// Search a run cache again with a (new) keyword list.
    Replay(ReplayArgs),
    /// Generate a synthetic corpus with ground truth.
    Synth(SynthArgs),
    /// Score events against references and write a DET curve.
    Eval(EvalArgs),
    /// Time filler modes, replay and keyword scaling on synthetic streams.
    Bench(BenchArgs),
}

#[derive(Args, Clone, Default)]
struct Tuning {
    #[arg(long, value_enum)]
    fillers: Option<Fillers>,
    #[arg(long)]
    beam: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    /// Acceptance threshold on the 0..100 confidence scale.
    #[arg(long)]
    threshold: Option<f64>,
    /// Frames within which same-keyword candidates are merged.
    #[arg(long)]
    buffer_len: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_phones: Option<usize>,
    /// Matching tolerance in seconds.
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fillers {
    Triphone,
    Mono,
    Quasi,
}

impl From<Fillers> for FillerMode {
    fn from(f: Fillers) -> Self {
        match f {
            Fillers::Triphone => FillerMode::Triphone,
            Fillers::Mono => FillerMode::Monophone,
            Fillers::Quasi => FillerMode::QuasiMonophone,
        }
    }
}

#[derive(Args)]
struct EventOutput {
    /// Tab-separated events.
    #[arg(long)]
    out: PathBuf,
    /// Same events as JSON lines.
    #[arg(long)]
    jsonl_out: Option<PathBuf>,
    #[arg(long, default_value = "stream")]
    stream_id: String,
}

#[derive(Args)]
struct SpotArgs {
    /// `.kwsl` likelihood stream.
    #[arg(long)]
    likelihoods: PathBuf,
    #[arg(long)]
    inventory: PathBuf,
    #[arg(long)]
    keywords: PathBuf,
    #[command(flatten)]
    output: EventOutput,
    /// Also write a run cache for later replays.
    #[arg(long)]
    cache_out: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    cache_in: PathBuf,
    #[arg(long)]
    inventory: PathBuf,
    #[arg(long)]
    keywords: PathBuf,
    #[command(flatten)]
    output: EventOutput,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Dev,
    HighMargin,
    Triphone,
    Scaling,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "dev")]
    preset: Preset,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    minutes: Option<f64>,
    /// Keyword list size (scaling preset).
    #[arg(long, default_value_t = 555)]
    num_keywords: usize,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct EvalArgs {
    /// Events in text or `.jsonl` form.
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    references: PathBuf,
    #[arg(long)]
    inventory: PathBuf,
    #[arg(long)]
    keywords: PathBuf,
    /// Stream the events came from, for the audio duration.
    #[arg(long, conflicts_with = "audio_secs")]
    likelihoods: Option<PathBuf>,
    #[arg(long)]
    audio_secs: Option<f64>,
    /// DET curve as CSV.
    #[arg(long)]
    csv_out: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark table as CSV.
    #[arg(long)]
    csv_out: Option<PathBuf>,
    /// Timing repetitions; the fastest run counts.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Stream length in minutes for every benchmark corpus.
    #[arg(long)]
    minutes: Option<f64>,
    #[command(flatten)]
    tuning: Tuning,
}

impl Tuning {
    fn overrides(&self) -> Overrides {
        Overrides {
            fillers: self.fillers.map(Into::into),
            beam: self.beam,
            k: self.k,
            threshold: self.threshold,
            buffer_len: self.buffer_len,
            seed: self.seed,
            min_phones: self.min_phones,
            tolerance: self.tolerance,
        }
    }
}

fn settings(config: &Option<PathBuf>, tuning: &Tuning) -> Result<(Settings, ConfigFile)> {
    let file = match config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::from_env()?,
    };
    let s = Settings::resolve(&file, &tuning.overrides())?;
    Ok((s, file))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn load_keywords(path: &Path, inv: &PhonemeInventory, min_phones: usize) -> Result<Vec<KeywordEntry>> {
    let list = load_keyword_list(path, inv, min_phones)?;
    for r in &list.rejected {
        eprintln!("warning: {}:{}: keyword {:?} rejected: {}", path.display(), r.line, r.form, r.reason);
    }
    Ok(list.entries)
}

fn write_events(output: &EventOutput, out: &SpotOutput, manifest: &RunManifest) -> Result<()> {
    let events = out.events();
    write(&output.out, &events_to_text(&output.stream_id, &events))?;
    if let Some(p) = &output.jsonl_out {
        write(p, &events_to_jsonl(&output.stream_id, &events))?;
    }
    write(&manifest_path(&output.out), &manifest.to_json())
}

fn cmd_spot(config: &Option<PathBuf>, a: SpotArgs) -> Result<()> {
    let (s, file) = settings(config, &a.tuning)?;
    let cfg_path = file.path.clone();
    let mut manifest = RunManifest::new("spot", s, cfg_path)
        .input("likelihoods", &a.likelihoods)
        .input("inventory", &a.inventory)
        .input("keywords", &a.keywords)
        .output("events", &a.output.out);
    if let Some(p) = &a.output.jsonl_out {
        manifest = manifest.output("events_jsonl", p);
    }
    if let Some(p) = &a.cache_out {
        manifest = manifest.output("cache", p);
    }
    manifest.validate()?;

    let inv = PhonemeInventory::load(&a.inventory)?;
    let keywords = load_keywords(&a.keywords, &inv, s.min_phones)?;
    let net = Network::build(&inv, &keywords, s.fillers)?;
    let m = LikelihoodMatrix::load(&a.likelihoods)?;
    let opts = RunOptions {
        keep_summaries: a.cache_out.is_some(),
        ..RunOptions::default()
    };
    let out = spot_network(&m, &net, s.decoder(), s.spotter(), opts)?;
    write_events(&a.output, &out, &manifest)?;
    if let Some(p) = &a.cache_out {
        let input = network_input(&m, &net)?;
        write_cache(p, inv.fingerprint(s.fillers), &input, &out.summaries)?;
    }
    println!(
        "{} events, {} frames, RT factor {:.5}",
        out.detections.len(),
        out.frames,
        rt_factor(out.elapsed_secs, m.duration_secs().max(f64::MIN_POSITIVE))?
    );
    Ok(())
}

fn cmd_replay(config: &Option<PathBuf>, a: ReplayArgs) -> Result<()> {
    let (s, file) = settings(config, &a.tuning)?;
    let cfg_path = file.path.clone();
    let mut manifest = RunManifest::new("replay", s, cfg_path)
        .input("cache", &a.cache_in)
        .input("inventory", &a.inventory)
        .input("keywords", &a.keywords)
        .output("events", &a.output.out);
    if let Some(p) = &a.output.jsonl_out {
        manifest = manifest.output("events_jsonl", p);
    }
    manifest.validate()?;

    let inv = PhonemeInventory::load(&a.inventory)?;
    let cache = read_cache(&a.cache_in)?;
    cache
        .check_fingerprint(&inv.fingerprint(s.fillers))
        .with_context(|| format!("replaying {} in {} mode", a.cache_in.display(), s.fillers))?;
    let keywords = load_keywords(&a.keywords, &inv, s.min_phones)?;
    let net = Network::build(&inv, &keywords, s.fillers)?;
    let out = replay_decode(&cache, net.keyword_units(), s.decoder(), s.spotter(), RunOptions::default())?;
    write_events(&a.output, &out, &manifest)?;
    println!(
        "{} events, {} frames, RT factor {:.5}",
        out.detections.len(),
        out.frames,
        rt_factor(out.elapsed_secs, cache.matrix.duration_secs().max(f64::MIN_POSITIVE))?
    );
    Ok(())
}

fn cmd_synth(config: &Option<PathBuf>, a: SynthArgs) -> Result<()> {
    let (s, file) = settings(config, &a.tuning)?;
    let cfg_path = file.path.clone();
    let mut cfg = match a.preset {
        Preset::Dev => CorpusConfig::dev(),
        Preset::HighMargin => CorpusConfig::high_margin(),
        Preset::Triphone => CorpusConfig::triphone(),
        Preset::Scaling => CorpusConfig::scaling(a.num_keywords),
    };
    if let Some(m) = a.minutes {
        cfg = cfg.with_minutes(m);
    }
    // Presets carry their own seeds unless one is given explicitly.
    if a.tuning.seed.is_some() || file.has("seed") {
        cfg = cfg.with_seed(s.seed);
    }
    let manifest = RunManifest::new("synth", s, cfg_path).output("corpus", a.out_dir.join("stream.kwsl"));
    if a.out_dir.exists() && !a.out_dir.is_dir() {
        bail!("{} exists and is not a directory", a.out_dir.display());
    }
    let corpus = Corpus::generate(&cfg)?;
    corpus.write_dir(&a.out_dir)?;
    write(&a.out_dir.join("manifest.json"), &manifest.to_json())?;
    println!(
        "{}: {} frames, {} keywords, {} planted occurrences -> {}",
        cfg.name,
        corpus.matrix.num_frames(),
        corpus.keywords.len(),
        corpus.planted.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn cmd_eval(config: &Option<PathBuf>, a: EvalArgs) -> Result<()> {
    let (s, file) = settings(config, &a.tuning)?;
    let cfg_path = file.path.clone();
    let mut manifest = RunManifest::new("eval", s, cfg_path)
        .input("events", &a.events)
        .input("references", &a.references)
        .input("inventory", &a.inventory)
        .input("keywords", &a.keywords);
    if let Some(p) = &a.likelihoods {
        manifest = manifest.input("likelihoods", p);
    }
    if let Some(p) = &a.csv_out {
        manifest = manifest.output("det_csv", p);
    }
    manifest.validate()?;

    let audio_secs = match (&a.likelihoods, a.audio_secs) {
        (Some(p), _) => LikelihoodMatrix::load(p)?.duration_secs(),
        (None, Some(secs)) => secs,
        (None, None) => bail!("eval needs --likelihoods or --audio-secs for the audio duration"),
    };
    let inv = PhonemeInventory::load(&a.inventory)?;
    let keywords = load_keywords(&a.keywords, &inv, s.min_phones)?;
    let lemmas = keywords.iter().map(|k| k.lemma.clone()).collect();
    let refs = load_references(&a.references)?;
    let events: Vec<_> = load_events(&a.events)?.into_iter().map(|r| r.event).collect();
    let det = det_curve(&events, &refs, &lemmas, keywords.len(), audio_secs / 3600.0, s.tolerance)?;
    if let Some(p) = &a.csv_out {
        write(p, &format!("{}{}", manifest.header(), det.to_csv()))?;
    }
    println!("EER {:.4} at confidence {:.2}", det.eer, det.eer_threshold);
    Ok(())
}

fn cmd_bench(config: &Option<PathBuf>, a: BenchArgs) -> Result<()> {
    let (s, file) = settings(config, &a.tuning)?;
    let cfg_path = file.path.clone();
    let mut manifest = RunManifest::new("bench", s, cfg_path);
    if let Some(p) = &a.csv_out {
        manifest = manifest.output("bench_csv", p);
    }
    manifest.validate()?;
    let mut cfg = BenchConfig {
        spotter: s.spotter(),
        repeats: a.repeats,
        fixed_beam: a.tuning.beam,
        ..BenchConfig::default()
    };
    if a.tuning.seed.is_some() || file.has("seed") {
        cfg = cfg.with_seed(s.seed);
    }
    if let Some(m) = a.minutes {
        cfg.mode_corpus = cfg.mode_corpus.with_minutes(m);
        cfg.scaling_corpora = cfg.scaling_corpora.into_iter().map(|c| c.with_minutes(m)).collect();
    }
    let report = bench_suite(&cfg)?;
    if let Some(p) = &a.csv_out {
        write(p, &report.to_csv())?;
    }
    print!("{}", report.to_text());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Spot(a) => cmd_spot(&cli.config, a),
        Command::Replay(a) => cmd_replay(&cli.config, a),
        Command::Synth(a) => cmd_synth(&cli.config, a),
        Command::Eval(a) => cmd_eval(&cli.config, a),
        Command::Bench(a) => cmd_bench(&cli.config, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
