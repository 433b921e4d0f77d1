//! Canned synthetic corpora: inventory, keyword list, stream and
//! references generated together from one seed.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{KwsError, Result};
use crate::eval::ReferenceWord;
use crate::likelihood::LikelihoodMatrix;
use crate::model::{
    build_keyword_model, ContextMode, FillerMode, KeywordEntry, Network, PhonemeInventory,
    StateId, DEFAULT_STATES_PER_PHONE,
};
use crate::synth::{synth_generate, BackgroundUnit, Planted, Segment, SynthSpec};

pub const SYNTH_PHONES: usize = 40;
pub const SYNTH_NOISES: usize = 8;
/// Physical models in the synthetic triphone inventory, fillers included.
/// Leading keyword phones the background babble never reproduces.
pub const AVOIDED_PREFIX: usize = 3;
pub const SYNTH_TRIPHONE_MODELS: usize = 2000;

/// 40 phones `p00..p39` and 8 noises `nz0..nz7`, three states each.
pub fn synthetic_inventory() -> PhonemeInventory {
    let phones: Vec<String> = (0..SYNTH_PHONES).map(|i| format!("p{i:02}")).collect();
    let noises: Vec<String> = (0..SYNTH_NOISES).map(|i| format!("nz{i}")).collect();
    let p: Vec<&str> = phones.iter().map(String::as_str).collect();
    let n: Vec<&str> = noises.iter().map(String::as_str).collect();
    PhonemeInventory::new(&p, &n, DEFAULT_STATES_PER_PHONE).expect("static inventory is valid")
}

/// The synthetic inventory extended with context variants until it holds
/// `physical_models` models. Internal contexts of `keywords` come first,
/// random contexts fill the rest.
pub fn synthetic_triphone_inventory(
    physical_models: usize,
    keywords: &[KeywordEntry],
    seed: u64,
) -> Result<PhonemeInventory> {
    let mut inv = synthetic_inventory();
    let base = inv.num_symbols();
    if physical_models < base {
        return Err(KwsError::InvalidInventory(format!(
            "{physical_models} models cannot hold {base} context-independent ones"
        )));
    }
    let wanted = physical_models - base;
    let max_variants = SYNTH_PHONES * SYNTH_PHONES * SYNTH_PHONES;
    if wanted > max_variants {
        return Err(KwsError::InvalidInventory(format!("at most {max_variants} variants")));
    }
    let mut contexts: Vec<(usize, usize, usize)> = Vec::with_capacity(wanted);
    let mut seen = HashSet::new();
    for kw in keywords {
        let idx: Vec<usize> = kw.phones.iter().filter_map(|p| inv.symbol_index(p)).collect();
        for w in idx.windows(3) {
            let ctx = (w[1], w[0], w[2]);
            if contexts.len() < wanted && seen.insert(ctx) {
                contexts.push(ctx);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while contexts.len() < wanted {
        let ctx = (
            rng.gen_range(0..SYNTH_PHONES),
            rng.gen_range(0..SYNTH_PHONES),
            rng.gen_range(0..SYNTH_PHONES),
        );
        if seen.insert(ctx) {
            contexts.push(ctx);
        }
    }
    let spp = inv.states_per_phone();
    let mut next = inv.ci_state_count() as StateId;
    for (c, l, r) in contexts {
        let states: Vec<StateId> = (0..spp as StateId).map(|i| next + i).collect();
        next += spp as StateId;
        let (cs, ls, rs) = (
            inv.symbol(c).to_string(),
            inv.symbol(l).to_string(),
            inv.symbol(r).to_string(),
        );
        inv.add_variant(&cs, &ls, &rs, states)?;
    }
    Ok(inv)
}

/// `count` keyword forms grouped into lemmas.
///
/// A lemma is a random stem of 3..=5 phones; each of its 1..=`max_forms`
/// forms appends a distinct suffix phone. Phone sequences are unique and
/// generation is sequential, so a shorter list is a prefix of a longer one
/// with the same seed.
pub fn synthetic_keywords(
    inventory: &PhonemeInventory,
    count: usize,
    max_forms: usize,
    seed: u64,
) -> Vec<KeywordEntry> {
    let phones: Vec<&str> = inventory.phones().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut seen: HashSet<Vec<&str>> = HashSet::new();
    let mut lemma_no = 0usize;
    while out.len() < count {
        let stem_len = rng.gen_range(3..=5);
        let stem: Vec<&str> = (0..stem_len).map(|_| *phones.choose(&mut rng).unwrap()).collect();
        let forms = rng.gen_range(1..=max_forms.max(1));
        let mut suffixes: Vec<&str> = phones.choose_multiple(&mut rng, forms).copied().collect();
        suffixes.sort_unstable();
        // Truncate only after drawing so longer lists keep shorter ones as a prefix.
        suffixes.truncate(count - out.len());
        let lemma = format!("w{lemma_no:05}");
        lemma_no += 1;
        for (i, suffix) in suffixes.into_iter().enumerate() {
            let mut seq = stem.clone();
            seq.push(suffix);
            if !seen.insert(seq.clone()) {
                continue;
            }
            let form = format!("{lemma}{}", (b'a' + i as u8) as char);
            out.push(KeywordEntry::new(&form, &lemma, &seq));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusKind {
    /// Context-independent states only (144 states).
    Monophone,
    /// Stream over the triphone inventory with this many physical models.
    Triphone { physical_models: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub name: String,
    pub kind: CorpusKind,
    pub minutes: f64,
    pub num_keywords: usize,
    pub max_forms_per_lemma: usize,
    /// Only the first this-many keywords are planted.
    pub planted_keywords: Option<usize>,
    pub occurrences_per_minute: f64,
    pub decoys_per_minute: f64,
    /// Probability that an occurrence loses one inner phone to noise.
    pub dropout: f64,
    pub noise_floor: f32,
    pub target_margin: f32,
    pub keyword_seed: u64,
    pub seed: u64,
}

impl CorpusConfig {
    /// Development split with controlled confusions; `k` is calibrated here.
    pub fn dev() -> Self {
        Self {
            name: "dev".into(),
            kind: CorpusKind::Monophone,
            minutes: 30.0,
            num_keywords: 40,
            max_forms_per_lemma: 3,
            planted_keywords: None,
            occurrences_per_minute: 15.0,
            decoys_per_minute: 15.0,
            dropout: 0.25,
            noise_floor: -10.0,
            target_margin: 4.0,
            keyword_seed: 555,
            seed: 2020,
        }
    }

    /// Clean occurrences, no decoys, one form per lemma, a wide margin.
    pub fn high_margin() -> Self {
        Self {
            name: "high-margin".into(),
            minutes: 5.0,
            max_forms_per_lemma: 1,
            occurrences_per_minute: 20.0,
            decoys_per_minute: 0.0,
            dropout: 0.0,
            target_margin: 12.0,
            seed: 2021,
            ..Self::dev()
        }
    }

    /// Triphone-inventory stream with 555 keywords. Benchmark streams use
    /// the wide margin so a tight beam stays lossless.
    pub fn triphone() -> Self {
        Self {
            name: "triphone".into(),
            kind: CorpusKind::Triphone {
                physical_models: SYNTH_TRIPHONE_MODELS,
            },
            minutes: 1.0,
            num_keywords: 555,
            planted_keywords: None,
            occurrences_per_minute: 20.0,
            decoys_per_minute: 0.0,
            dropout: 0.0,
            target_margin: 12.0,
            seed: 2022,
            ..Self::dev()
        }
    }

    /// Monophone stream for keyword-count scaling; only the first 555
    /// keywords are planted so every list size sees the same stream.
    pub fn scaling(num_keywords: usize) -> Self {
        Self {
            name: format!("scaling-{num_keywords}"),
            minutes: 2.0,
            num_keywords,
            planted_keywords: Some(555),
            occurrences_per_minute: 20.0,
            decoys_per_minute: 0.0,
            dropout: 0.0,
            target_margin: 12.0,
            seed: 2023,
            ..Self::dev()
        }
    }

    pub fn with_minutes(mut self, minutes: f64) -> Self {
        self.minutes = minutes;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// A generated corpus with exact ground truth.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub inventory: PhonemeInventory,
    pub keywords: Vec<KeywordEntry>,
    pub matrix: LikelihoodMatrix,
    pub planted: Vec<Planted>,
    pub references: Vec<ReferenceWord>,
}

impl Corpus {
    pub fn generate(cfg: &CorpusConfig) -> Result<Self> {
        if !(cfg.minutes > 0.0) || cfg.num_keywords == 0 {
            return Err(KwsError::Synthesis("corpus needs a duration and keywords".into()));
        }
        let mono = synthetic_inventory();
        let keywords = synthetic_keywords(&mono, cfg.num_keywords, cfg.max_forms_per_lemma, cfg.keyword_seed);
        let (inventory, context) = match cfg.kind {
            CorpusKind::Monophone => (mono, ContextMode::Monophone),
            CorpusKind::Triphone { physical_models } => (
                synthetic_triphone_inventory(physical_models, &keywords, cfg.keyword_seed)?,
                ContextMode::Triphone,
            ),
        };
        let units = keywords
            .iter()
            .enumerate()
            .map(|(i, k)| build_keyword_model(i as u32, k, &inventory, context))
            .collect::<Result<Vec<_>>>()?;

        let shift = crate::likelihood::DEFAULT_FRAME_SHIFT_MS;
        let frames_per_minute = 60_000.0 / f64::from(shift);
        let num_frames = (cfg.minutes * frames_per_minute).round() as usize;
        let mut spec = SynthSpec::new(num_frames, inventory.num_states(), cfg.seed);
        spec.noise_floor = cfg.noise_floor;
        spec.target_margin = cfg.target_margin;
        spec.background = background_units(&inventory);
        let plantable = cfg.planted_keywords.unwrap_or(keywords.len()).min(keywords.len());
        // Background never contains the opening phones of a plantable
        // keyword, so every near-complete keyword in the stream is planted.
        spec.avoid = keywords[..plantable]
            .iter()
            .map(|k| {
                k.phones[..AVOIDED_PREFIX.min(k.phones.len())]
                    .iter()
                    .map(|p| inventory.symbol_index(p).expect("keyword phones are known"))
                    .collect()
            })
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
        let n_occ = (cfg.occurrences_per_minute * cfg.minutes).round() as usize;
        let n_decoy = (cfg.decoys_per_minute * cfg.minutes).round() as usize;
        let mut items: Vec<bool> = (0..n_occ).map(|_| true).chain((0..n_decoy).map(|_| false)).collect();
        items.shuffle(&mut rng);
        let slot = if items.is_empty() { num_frames } else { num_frames / items.len() };
        let known: HashSet<&[String]> = keywords.iter().map(|k| k.phones.as_slice()).collect();
        let guard = 10;

        for (i, is_occurrence) in items.into_iter().enumerate() {
            let kw = rng.gen_range(0..plantable);
            let phones = keywords[kw].phones.len();
            let per_phone: Vec<usize> = (0..phones).map(|_| rng.gen_range(4..=7)).collect();
            let dur: usize = per_phone.iter().sum();
            if dur + 2 * guard > slot {
                return Err(KwsError::Synthesis(format!(
                    "{} items do not fit into {num_frames} frames",
                    n_occ + n_decoy
                )));
            }
            let start = i * slot + guard + rng.gen_range(0..=slot - dur - 2 * guard);
            let end = start + dur - 1;
            if is_occurrence {
                spec.planted.push(Planted { keyword: kw, start, end });
                if rng.gen_bool(cfg.dropout) && phones > 2 {
                    let p = rng.gen_range(1..phones - 1);
                    let from = start + per_phone[..p].iter().sum::<usize>();
                    spec.fades.push((from, from + per_phone[p] - 1));
                }
            } else {
                let mut phones_of = keywords[kw].phones.clone();
                let stem = phones_of.len() - 1;
                loop {
                    let pos = rng.gen_range(0..stem);
                    let sub = inventory.symbol(rng.gen_range(0..SYNTH_PHONES)).to_string();
                    if sub == phones_of[pos] {
                        continue;
                    }
                    let mut cand = phones_of.clone();
                    cand[pos] = sub;
                    if !known.contains(cand.as_slice()) {
                        phones_of = cand;
                        break;
                    }
                }
                let refs: Vec<&str> = phones_of.iter().map(String::as_str).collect();
                let decoy = KeywordEntry::new("decoy", "decoy", &refs);
                let unit = build_keyword_model(0, &decoy, &inventory, ContextMode::Monophone)?;
                spec.decoys.push(Segment {
                    states: unit.state_ids,
                    start,
                    end,
                });
            }
        }

        let (matrix, planted) = synth_generate(&spec, &units)?;
        let secs = f64::from(shift) / 1000.0;
        let references = planted
            .iter()
            .map(|p| {
                let k = &keywords[p.keyword];
                ReferenceWord::new(&k.form, &k.lemma, p.start as f64 * secs, (p.end + 1) as f64 * secs)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: cfg.clone(),
            inventory,
            keywords,
            matrix,
            planted,
            references,
        })
    }

    pub fn network(&self, mode: FillerMode) -> Result<Network> {
        Network::build(&self.inventory, &self.keywords, mode)
    }

    pub fn lemmas(&self) -> HashSet<String> {
        self.keywords.iter().map(|k| k.lemma.clone()).collect()
    }

    pub fn audio_hours(&self) -> f64 {
        self.matrix.duration_secs() / 3600.0
    }

    /// Writes `inventory.txt`, `keywords.txt`, `stream.kwsl` and
    /// `references.csv` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| KwsError::io(dir, e))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| KwsError::io(&p, e))
        };
        write("inventory.txt", self.inventory.to_text())?;
        let mut kw = String::from("# form,lemma,phones\n");
        for k in &self.keywords {
            kw.push_str(&k.to_line());
            kw.push('\n');
        }
        write("keywords.txt", kw)?;
        let mut refs = String::from("# word,lemma,start,end\n");
        for r in &self.references {
            refs.push_str(&r.to_line());
            refs.push('\n');
        }
        write("references.csv", refs)?;
        self.matrix.write(dir.join("stream.kwsl"))
    }
}

/// Every physical model, tagged with its center phone.
fn background_units(inv: &PhonemeInventory) -> Vec<BackgroundUnit> {
    let mut units: Vec<BackgroundUnit> = (0..inv.num_symbols())
        .map(|s| BackgroundUnit {
            phone: s,
            states: inv.ci_states(s),
        })
        .collect();
    units.extend(inv.variants().map(|((c, _, _), states)| BackgroundUnit {
        phone: c,
        states: states.to_vec(),
    }));
    units
}
