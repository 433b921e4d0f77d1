//! Phoneme inventories, keyword lists, and HMM unit construction.
//!
//! Every phone and noise symbol owns `states_per_phone` context-independent
//! states numbered `symbol_index * states_per_phone + position`, in
//! declaration order. Triphone variants add further states; each state id
//! belongs to exactly one `(symbol, position)` pair, which is what makes the
//! quasi-monophone [`StateMap`] well defined.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{KwsError, Result};
use crate::likelihood::StateMap;

pub type StateId = u32;

pub const DEFAULT_STATES_PER_PHONE: usize = 3;
pub const DEFAULT_MIN_PHONES: usize = 4;

/// Phones, noises and their HMM state ids for one acoustic model.
#[derive(Debug, Clone, PartialEq)]
pub struct PhonemeInventory {
    symbols: Vec<String>,
    is_noise: Vec<bool>,
    index: HashMap<String, usize>,
    states_per_phone: usize,
    /// (center, left, right) -> state ids.
    variants: BTreeMap<(usize, usize, usize), Vec<StateId>>,
    /// state id -> (symbol, position) for states above the CI block.
    owners: HashMap<StateId, (usize, usize)>,
    num_states: usize,
}

impl PhonemeInventory {
    /// Phones first, then noises, in the given order.
    pub fn new(phones: &[&str], noises: &[&str], states_per_phone: usize) -> Result<Self> {
        let symbols = phones
            .iter()
            .map(|p| (p.to_string(), false))
            .chain(noises.iter().map(|n| (n.to_string(), true)))
            .collect();
        Self::from_symbols(symbols, states_per_phone)
    }

    pub fn from_symbols(symbols: Vec<(String, bool)>, states_per_phone: usize) -> Result<Self> {
        if states_per_phone == 0 {
            return Err(KwsError::InvalidInventory("states_per_phone must be >= 1".into()));
        }
        if symbols.is_empty() {
            return Err(KwsError::InvalidInventory("no symbols".into()));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, (sym, _)) in symbols.iter().enumerate() {
            if sym.is_empty() || sym.contains(|c: char| c.is_whitespace() || c == ',') {
                return Err(KwsError::InvalidInventory(format!("bad symbol {sym:?}")));
            }
            if index.insert(sym.clone(), i).is_some() {
                return Err(KwsError::InvalidInventory(format!("duplicate symbol {sym:?}")));
            }
        }
        let num_states = symbols.len() * states_per_phone;
        let (symbols, is_noise) = symbols.into_iter().unzip();
        Ok(Self {
            symbols,
            is_noise,
            index,
            states_per_phone,
            variants: BTreeMap::new(),
            owners: HashMap::new(),
            num_states,
        })
    }

    /// Registers the physical model used for `center` between `left` and `right`.
    pub fn add_variant(
        &mut self,
        center: &str,
        left: &str,
        right: &str,
        states: Vec<StateId>,
    ) -> Result<()> {
        let c = self.require(center)?;
        let l = self.require(left)?;
        let r = self.require(right)?;
        if states.len() != self.states_per_phone {
            return Err(KwsError::InvalidInventory(format!(
                "variant {left}-{center}+{right} has {} states, expected {}",
                states.len(),
                self.states_per_phone
            )));
        }
        if self.variants.contains_key(&(c, l, r)) {
            return Err(KwsError::InvalidInventory(format!(
                "duplicate variant {left}-{center}+{right}"
            )));
        }
        for (pos, &id) in states.iter().enumerate() {
            let owner = self.owner_of(id);
            match owner {
                Some(o) if o != (c, pos) => {
                    return Err(KwsError::InvalidInventory(format!(
                        "state {id} used by {}[{}] and {center}[{pos}]",
                        self.symbols[o.0], o.1
                    )))
                }
                Some(_) => {}
                None => {
                    self.owners.insert(id, (c, pos));
                }
            }
            self.num_states = self.num_states.max(id as usize + 1);
        }
        self.variants.insert((c, l, r), states);
        Ok(())
    }

    fn require(&self, symbol: &str) -> Result<usize> {
        self.index.get(symbol).copied().ok_or_else(|| KwsError::UnknownPhone {
            symbol: symbol.to_string(),
            line: None,
        })
    }

    /// `(symbol index, position)` that owns a state.
    pub fn owner_of(&self, state: StateId) -> Option<(usize, usize)> {
        let ci = self.ci_state_count();
        if (state as usize) < ci {
            let s = state as usize;
            Some((s / self.states_per_phone, s % self.states_per_phone))
        } else {
            self.owners.get(&state).copied()
        }
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol(&self, index: usize) -> &str {
        &self.symbols[index]
    }

    pub fn symbol_index(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn is_noise(&self, index: usize) -> bool {
        self.is_noise[index]
    }

    pub fn phones(&self) -> impl Iterator<Item = &str> + '_ {
        self.symbols
            .iter()
            .zip(&self.is_noise)
            .filter(|(_, n)| !**n)
            .map(|(s, _)| s.as_str())
    }

    pub fn num_phones(&self) -> usize {
        self.is_noise.iter().filter(|n| !**n).count()
    }

    pub fn num_noises(&self) -> usize {
        self.is_noise.iter().filter(|n| **n).count()
    }

    pub fn num_symbols(&self) -> usize {
        self.symbols.len()
    }

    pub fn states_per_phone(&self) -> usize {
        self.states_per_phone
    }

    /// Size of the context-independent (monophone) state block.
    pub fn ci_state_count(&self) -> usize {
        self.symbols.len() * self.states_per_phone
    }

    /// Size of the full triphone state space.
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_variants(&self) -> usize {
        self.variants.len()
    }

    pub fn ci_states(&self, symbol: usize) -> Vec<StateId> {
        let base = symbol * self.states_per_phone;
        (base..base + self.states_per_phone).map(|s| s as StateId).collect()
    }

    pub fn variant(&self, center: usize, left: usize, right: usize) -> Option<&[StateId]> {
        self.variants.get(&(center, left, right)).map(Vec::as_slice)
    }

    pub fn variants(&self) -> impl Iterator<Item = ((usize, usize, usize), &[StateId])> + '_ {
        self.variants.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// Maps every triphone state onto the CI state of its (symbol, position).
    pub fn quasi_state_map(&self) -> Result<StateMap> {
        let target_of = (0..self.num_states as StateId)
            .map(|s| {
                self.owner_of(s)
                    .map(|(sym, pos)| (sym * self.states_per_phone + pos) as u32)
                    .ok_or_else(|| {
                        KwsError::InvalidStateMap(format!(
                            "state {s} is not used by any model"
                        ))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        StateMap::new(self.ci_state_count(), target_of)
    }

    /// Parses the inventory text format.
    ///
    /// ```text
    /// states:3          # optional, before any symbol
    /// a
    /// noise:sil
    /// a,b,c,144,145,146 # center,left,right,state ids
    /// ```
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut states_per_phone = DEFAULT_STATES_PER_PHONE;
        let mut symbols: Vec<(String, bool)> = Vec::new();
        let mut rows: Vec<(usize, Vec<&str>)> = Vec::new();
        let parse_err = |line: usize, message: String| KwsError::Parse {
            file: file.to_string(),
            line,
            message,
        };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(n) = line.strip_prefix("states:") {
                if !symbols.is_empty() {
                    return Err(parse_err(line_no, "states: must precede all symbols".into()));
                }
                states_per_phone = n
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad state count {n:?}")))?;
            } else if line.contains(',') {
                rows.push((line_no, line.split(',').map(str::trim).collect()));
            } else if let Some(noise) = line.strip_prefix("noise:") {
                symbols.push((noise.trim().to_string(), true));
            } else {
                symbols.push((line.to_string(), false));
            }
        }
        let mut inv = Self::from_symbols(symbols, states_per_phone)
            .map_err(|e| parse_err(0, e.to_string()))?;
        for (line_no, cols) in rows {
            if cols.len() != 3 + states_per_phone {
                return Err(parse_err(
                    line_no,
                    format!("expected {} columns, found {}", 3 + states_per_phone, cols.len()),
                ));
            }
            let states = cols[3..]
                .iter()
                .map(|s| {
                    s.parse::<StateId>()
                        .map_err(|_| parse_err(line_no, format!("bad state id {s:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            inv.add_variant(cols[0], cols[1], cols[2], states)
                .map_err(|e| parse_err(line_no, e.to_string()))?;
        }
        Ok(inv)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| KwsError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Canonical text form; [`PhonemeInventory::parse`] reads it back.
    pub fn to_text(&self) -> String {
        let mut out = format!("states:{}\n", self.states_per_phone);
        for (sym, noise) in self.symbols.iter().zip(&self.is_noise) {
            if *noise {
                out.push_str("noise:");
            }
            out.push_str(sym);
            out.push('\n');
        }
        for ((c, l, r), states) in &self.variants {
            out.push_str(&format!("{},{},{}", self.symbols[*c], self.symbols[*l], self.symbols[*r]));
            for s in states {
                out.push_str(&format!(",{s}"));
            }
            out.push('\n');
        }
        out
    }

    /// 16-byte identity of this inventory decoded in `mode`.
    pub fn fingerprint(&self, mode: FillerMode) -> [u8; 16] {
        let mut hasher = Sha256::new();
        hasher.update(self.to_text().as_bytes());
        hasher.update(mode.as_str().as_bytes());
        let digest = hasher.finalize();
        let mut out = [0u8; 16];
        out.copy_from_slice(&digest[..16]);
        out
    }
}

/// One searchable word form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeywordEntry {
    pub form: String,
    pub lemma: String,
    pub phones: Vec<String>,
}

impl KeywordEntry {
    pub fn new(form: &str, lemma: &str, phones: &[&str]) -> Self {
        Self {
            form: form.to_string(),
            lemma: lemma.to_string(),
            phones: phones.iter().map(|p| p.to_string()).collect(),
        }
    }

    pub fn to_line(&self) -> String {
        format!("{},{},{}", self.form, self.lemma, self.phones.join(" "))
    }
}

/// A keyword line that parsed but was not accepted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub line: usize,
    pub form: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeywordList {
    pub entries: Vec<KeywordEntry>,
    pub rejected: Vec<Rejection>,
}

/// Parses `form,lemma,phone phone ...` lines.
pub fn parse_keyword_list(
    text: &str,
    file: &str,
    inventory: &PhonemeInventory,
    min_phones: usize,
) -> Result<KeywordList> {
    let mut list = KeywordList::default();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.splitn(3, ',');
        let (Some(form), Some(lemma), Some(phones)) = (cols.next(), cols.next(), cols.next())
        else {
            return Err(KwsError::Parse {
                file: file.to_string(),
                line: line_no,
                message: "expected form,lemma,phones".into(),
            });
        };
        let form = form.trim();
        let lemma = lemma.trim();
        if form.is_empty() || lemma.is_empty() {
            return Err(KwsError::Parse {
                file: file.to_string(),
                line: line_no,
                message: "empty form or lemma".into(),
            });
        }
        let phones: Vec<String> = phones.split_whitespace().map(str::to_string).collect();
        for p in &phones {
            match inventory.symbol_index(p) {
                None => {
                    return Err(KwsError::UnknownPhone {
                        symbol: p.clone(),
                        line: Some(line_no),
                    })
                }
                Some(idx) if inventory.is_noise(idx) => {
                    return Err(KwsError::Parse {
                        file: file.to_string(),
                        line: line_no,
                        message: format!("noise symbol {p:?} cannot appear in a keyword"),
                    })
                }
                Some(_) => {}
            }
        }
        if !seen.insert(form.to_string()) {
            return Err(KwsError::DuplicateKeyword(form.to_string()));
        }
        if phones.len() < min_phones {
            list.rejected.push(Rejection {
                line: line_no,
                form: form.to_string(),
                reason: format!("{} < {min_phones} phones", phones.len()),
            });
            continue;
        }
        list.entries.push(KeywordEntry {
            form: form.to_string(),
            lemma: lemma.to_string(),
            phones,
        });
    }
    Ok(list)
}

pub fn load_keyword_list(
    path: impl AsRef<Path>,
    inventory: &PhonemeInventory,
    min_phones: usize,
) -> Result<KeywordList> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| KwsError::io(path, e))?;
    parse_keyword_list(&text, &path.display().to_string(), inventory, min_phones)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnitKind {
    Keyword,
    Filler,
}

/// Left-to-right HMM: self-loops and forward transitions only.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmUnit {
    pub id: u32,
    pub kind: UnitKind,
    pub label: String,
    pub state_ids: Vec<StateId>,
    pub keyword: Option<KeywordEntry>,
}

impl HmmUnit {
    pub fn filler(id: u32, label: impl Into<String>, state_ids: Vec<StateId>) -> Self {
        Self {
            id,
            kind: UnitKind::Filler,
            label: label.into(),
            state_ids,
            keyword: None,
        }
    }

    /// N_s.
    pub fn num_states(&self) -> usize {
        self.state_ids.len()
    }

    pub fn is_keyword(&self) -> bool {
        self.kind == UnitKind::Keyword
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextMode {
    Triphone,
    Monophone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FillerMode {
    Triphone,
    Monophone,
    QuasiMonophone,
}

impl FillerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FillerMode::Triphone => "triphone",
            FillerMode::Monophone => "mono",
            FillerMode::QuasiMonophone => "quasi",
        }
    }

    /// Context handling for keywords decoded alongside this filler set.
    pub fn keyword_context(self) -> ContextMode {
        match self {
            FillerMode::Triphone => ContextMode::Triphone,
            _ => ContextMode::Monophone,
        }
    }
}

impl fmt::Display for FillerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FillerMode {
    type Err = KwsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "triphone" | "tri" => Ok(FillerMode::Triphone),
            "mono" | "monophone" => Ok(FillerMode::Monophone),
            "quasi" | "quasi_monophone" | "quasi-mono" => Ok(FillerMode::QuasiMonophone),
            other => Err(KwsError::InvalidConfig(format!("unknown filler mode {other:?}"))),
        }
    }
}

/// Concatenates the phone models of a keyword.
///
/// In triphone mode, word-internal phones use the `(left, center, right)`
/// variant; the first and last phones use context-independent states
/// because their outer neighbours are arbitrary fillers.
pub fn build_keyword_model(
    id: u32,
    entry: &KeywordEntry,
    inventory: &PhonemeInventory,
    context: ContextMode,
) -> Result<HmmUnit> {
    let idx = entry
        .phones
        .iter()
        .map(|p| {
            inventory.symbol_index(p).ok_or_else(|| KwsError::UnknownPhone {
                symbol: p.clone(),
                line: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut state_ids = Vec::with_capacity(idx.len() * inventory.states_per_phone());
    for (i, &c) in idx.iter().enumerate() {
        let internal = i > 0 && i + 1 < idx.len();
        if context == ContextMode::Triphone && internal {
            if let Some(states) = inventory.variant(c, idx[i - 1], idx[i + 1]) {
                state_ids.extend_from_slice(states);
                continue;
            }
            log::warn!(
                "keyword {:?}: no variant {}-{}+{}, using context-independent model",
                entry.form,
                inventory.symbol(idx[i - 1]),
                inventory.symbol(c),
                inventory.symbol(idx[i + 1])
            );
        }
        state_ids.extend(inventory.ci_states(c));
    }
    Ok(HmmUnit {
        id,
        kind: UnitKind::Keyword,
        label: entry.form.clone(),
        state_ids,
        keyword: Some(entry.clone()),
    })
}

/// Filler units for the given mode, plus the pooling map in quasi mode.
///
/// Monophone and quasi-monophone modes produce one filler per phone and
/// noise. Triphone mode produces one filler per distinct physical model:
/// every context-independent model plus each distinct variant state tuple.
pub fn build_filler_set(
    inventory: &PhonemeInventory,
    mode: FillerMode,
) -> Result<(Vec<HmmUnit>, Option<StateMap>)> {
    let mut fillers: Vec<HmmUnit> = (0..inventory.num_symbols())
        .map(|s| HmmUnit::filler(s as u32, inventory.symbol(s), inventory.ci_states(s)))
        .collect();
    match mode {
        FillerMode::Monophone => Ok((fillers, None)),
        FillerMode::QuasiMonophone => Ok((fillers, Some(inventory.quasi_state_map()?))),
        FillerMode::Triphone => {
            let mut seen: HashSet<Vec<StateId>> =
                fillers.iter().map(|f| f.state_ids.clone()).collect();
            for ((c, l, r), states) in inventory.variants() {
                if seen.insert(states.to_vec()) {
                    let label = format!(
                        "{}-{}+{}",
                        inventory.symbol(l),
                        inventory.symbol(c),
                        inventory.symbol(r)
                    );
                    fillers.push(HmmUnit::filler(fillers.len() as u32, label, states.to_vec()));
                }
            }
            Ok((fillers, None))
        }
    }
}

/// Fillers followed by keywords, with ids equal to positions.
#[derive(Debug, Clone)]
pub struct Network {
    pub mode: FillerMode,
    pub units: Vec<HmmUnit>,
    pub num_fillers: usize,
    /// Present in quasi-monophone mode.
    pub state_map: Option<StateMap>,
    /// Width of the likelihood rows the decoder consumes.
    pub num_states: usize,
}

impl Network {
    pub fn build(
        inventory: &PhonemeInventory,
        keywords: &[KeywordEntry],
        mode: FillerMode,
    ) -> Result<Self> {
        let (mut units, state_map) = build_filler_set(inventory, mode)?;
        let num_fillers = units.len();
        for kw in keywords {
            let id = units.len() as u32;
            units.push(build_keyword_model(id, kw, inventory, mode.keyword_context())?);
        }
        let num_states = match mode {
            FillerMode::Triphone => inventory.num_states(),
            FillerMode::Monophone | FillerMode::QuasiMonophone => inventory.ci_state_count(),
        };
        Ok(Self {
            mode,
            units,
            num_fillers,
            state_map,
            num_states,
        })
    }

    pub fn keyword_units(&self) -> &[HmmUnit] {
        &self.units[self.num_fillers..]
    }

    pub fn filler_units(&self) -> &[HmmUnit] {
        &self.units[..self.num_fillers]
    }
}
