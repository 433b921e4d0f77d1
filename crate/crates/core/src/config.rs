//! Run settings and the manifest that records them.
//!
//! Settings resolve as flags over a config file over built-in defaults.
//! The config file is flat `key = value` text; `#` starts a comment.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::decoder::{DecoderConfig, DEFAULT_BEAM};
use crate::error::{KwsError, Result};
use crate::eval::DEFAULT_TOLERANCE_SECS;
use crate::model::{FillerMode, DEFAULT_MIN_PHONES};
use crate::spotter::{SpotterConfig, DEFAULT_BUFFER_LEN, DEFAULT_K, DEFAULT_THRESHOLD};

/// Environment variable naming a default config file.
pub const CONFIG_ENV: &str = "KWSPOT_CONFIG";

pub const KNOWN_KEYS: &[&str] = &[
    "fillers",
    "beam",
    "k",
    "threshold",
    "buffer_len",
    "seed",
    "min_phones",
    "tolerance",
];

/// Parsed `key = value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub path: Option<PathBuf>,
    values: BTreeMap<String, (String, usize)>,
}

impl ConfigFile {
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| KwsError::Parse {
                file: file.to_string(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected key = value".into()))?;
            let key = key.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(err(format!("unknown key {key:?}")));
            }
            values.insert(key, (value.trim().to_string(), i + 1));
        }
        Ok(Self { path: None, values })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| KwsError::io(path, e))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        cfg.path = Some(path.to_path_buf());
        Ok(cfg)
    }

    /// The file named by `KWSPOT_CONFIG`, or an empty config when unset.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::load(PathBuf::from(p)),
            _ => Ok(Self::default()),
        }
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        let Some((raw, line)) = self.values.get(key) else {
            return Ok(None);
        };
        raw.parse().map(Some).map_err(|_| KwsError::Parse {
            file: self
                .path
                .as_ref()
                .map_or_else(|| "<config>".to_string(), |p| p.display().to_string()),
            line: *line,
            message: format!("bad value {raw:?} for {key}"),
        })
    }
}

/// Every tunable a subcommand may use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Settings {
    pub fillers: FillerMode,
    pub beam: f64,
    pub k: f64,
    pub threshold: f64,
    pub buffer_len: usize,
    pub seed: u64,
    pub min_phones: usize,
    pub tolerance: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            fillers: FillerMode::QuasiMonophone,
            beam: DEFAULT_BEAM,
            k: DEFAULT_K,
            threshold: DEFAULT_THRESHOLD,
            buffer_len: DEFAULT_BUFFER_LEN,
            seed: 2020,
            min_phones: DEFAULT_MIN_PHONES,
            tolerance: DEFAULT_TOLERANCE_SECS,
        }
    }
}

/// Values given on the command line; `None` defers to the file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub fillers: Option<FillerMode>,
    pub beam: Option<f64>,
    pub k: Option<f64>,
    pub threshold: Option<f64>,
    pub buffer_len: Option<usize>,
    pub seed: Option<u64>,
    pub min_phones: Option<usize>,
    pub tolerance: Option<f64>,
}

impl Settings {
    /// Flags over file over defaults.
    pub fn resolve(file: &ConfigFile, flags: &Overrides) -> Result<Self> {
        let d = Self::default();
        let s = Self {
            fillers: pick(flags.fillers, file.get("fillers")?, d.fillers),
            beam: pick(flags.beam, file.get("beam")?, d.beam),
            k: pick(flags.k, file.get("k")?, d.k),
            threshold: pick(flags.threshold, file.get("threshold")?, d.threshold),
            buffer_len: pick(flags.buffer_len, file.get("buffer_len")?, d.buffer_len),
            seed: pick(flags.seed, file.get("seed")?, d.seed),
            min_phones: pick(flags.min_phones, file.get("min_phones")?, d.min_phones),
            tolerance: pick(flags.tolerance, file.get("tolerance")?, d.tolerance),
        };
        s.decoder().validate()?;
        s.spotter().validate(false)?;
        if !(s.tolerance >= 0.0) {
            return Err(KwsError::InvalidConfig(format!("tolerance {} is negative", s.tolerance)));
        }
        Ok(s)
    }

    pub fn decoder(&self) -> DecoderConfig {
        DecoderConfig::default().with_beam(self.beam)
    }

    pub fn spotter(&self) -> SpotterConfig {
        SpotterConfig {
            k: self.k,
            accept_threshold: self.threshold,
            buffer_len: self.buffer_len,
        }
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// What a run read, wrote and used. Written next to the outputs so a
/// result can be reproduced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
    pub settings: Settings,
    pub config_file: Option<PathBuf>,
}

impl RunManifest {
    pub fn new(subcommand: &str, settings: Settings, config_file: Option<PathBuf>) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            settings,
            config_file,
        }
    }

    pub fn input(mut self, role: &str, path: impl Into<PathBuf>) -> Self {
        self.inputs.insert(role.to_string(), path.into());
        self
    }

    pub fn output(mut self, role: &str, path: impl Into<PathBuf>) -> Self {
        self.outputs.insert(role.to_string(), path.into());
        self
    }

    /// Every input must be a readable file and every output directory must
    /// exist, before any work starts.
    pub fn validate(&self) -> Result<()> {
        for (role, p) in &self.inputs {
            if !p.is_file() {
                return Err(KwsError::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, format!("{role} input is not a readable file")),
                ));
            }
        }
        for (role, p) in &self.outputs {
            let parent = p.parent().filter(|d| !d.as_os_str().is_empty());
            if let Some(dir) = parent {
                if !dir.is_dir() {
                    return Err(KwsError::io(
                        dir,
                        std::io::Error::new(std::io::ErrorKind::NotFound, format!("directory for {role} output does not exist")),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises")
    }

    /// `# key: value` lines for text outputs that carry a header.
    pub fn header(&self) -> String {
        let mut s = format!("# kwspot {}\n", self.subcommand);
        for (role, p) in &self.inputs {
            s.push_str(&format!("# input {role}: {}\n", p.display()));
        }
        let st = &self.settings;
        s.push_str(&format!(
            "# fillers={} beam={} k={} threshold={} buffer_len={} seed={} min_phones={} tolerance={}\n",
            st.fillers, st.beam, st.k, st.threshold, st.buffer_len, st.seed, st.min_phones, st.tolerance
        ));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file = ConfigFile::parse("beam = 40\nk = 900 # tuned\nfillers = triphone\n", "c").unwrap();
        let flags = Overrides {
            k: Some(1200.0),
            ..Overrides::default()
        };
        let s = Settings::resolve(&file, &flags).unwrap();
        assert_eq!(s.beam, 40.0);
        assert_eq!(s.k, 1200.0);
        assert_eq!(s.fillers, FillerMode::Triphone);
        assert_eq!(s.threshold, DEFAULT_THRESHOLD);
        assert_eq!(s.buffer_len, DEFAULT_BUFFER_LEN);
    }

    #[test]
    fn unknown_key_names_the_line() {
        let err = ConfigFile::parse("\nbeam = 3\nbeem = 4\n", "c.cfg").unwrap_err();
        assert!(matches!(err, KwsError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn bad_value_is_reported() {
        let file = ConfigFile::parse("buffer-len = lots\n", "c").unwrap();
        assert!(Settings::resolve(&file, &Overrides::default()).is_err());
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let flags = Overrides {
            beam: Some(-1.0),
            ..Overrides::default()
        };
        assert!(Settings::resolve(&ConfigFile::default(), &flags).is_err());
    }

    #[test]
    fn manifest_rejects_missing_input() {
        let m = RunManifest::new("spot", Settings::default(), None).input("keywords", "/definitely/not/here.txt");
        assert!(m.validate().is_err());
    }
}
