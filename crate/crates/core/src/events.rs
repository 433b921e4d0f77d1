//! Event files: a tab-separated listing for people and diff tools, and a
//! JSON-lines file with the same fields for programs.
//!
//! Text lines read `stream-id  form  lemma  start  end  confidence`. Times
//! and confidences carry two decimals; with 10 ms frames the times are
//! exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{KwsError, Result};
use crate::spotter::SpotEvent;

/// A spot event tagged with the stream it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub stream: String,
    #[serde(flatten)]
    pub event: SpotEvent,
}

pub fn event_line(stream: &str, e: &SpotEvent) -> String {
    format!(
        "{stream}\t{}\t{}\t{:.2}\t{:.2}\t{:.2}",
        e.keyword, e.lemma, e.start_time, e.end_time, e.confidence
    )
}

/// All events as text, one line each, newline-terminated.
pub fn events_to_text(stream: &str, events: &[SpotEvent]) -> String {
    events.iter().map(|e| event_line(stream, e) + "\n").collect()
}

pub fn events_to_jsonl(stream: &str, events: &[SpotEvent]) -> String {
    events
        .iter()
        .map(|e| {
            let rec = EventRecord {
                stream: stream.to_string(),
                event: e.clone(),
            };
            serde_json::to_string(&rec).expect("event records serialise") + "\n"
        })
        .collect()
}

/// Parses the text format; blank lines and `#` comments are skipped.
pub fn parse_events(text: &str, file: &str) -> Result<Vec<EventRecord>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| KwsError::Parse {
            file: file.to_string(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(err(format!("expected 6 tab-separated fields, found {}", fields.len())));
        }
        let num = |s: &str, what: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| err(format!("bad {what} {s:?}")))
        };
        out.push(EventRecord {
            stream: fields[0].to_string(),
            event: SpotEvent {
                keyword: fields[1].to_string(),
                lemma: fields[2].to_string(),
                start_time: num(fields[3], "start")?,
                end_time: num(fields[4], "end")?,
                confidence: num(fields[5], "confidence")?,
            },
        });
    }
    Ok(out)
}

pub fn parse_events_jsonl(text: &str, file: &str) -> Result<Vec<EventRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| KwsError::Parse {
                file: file.to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Reads either format, choosing JSON lines for a `.jsonl` extension.
pub fn load_events(path: impl AsRef<Path>) -> Result<Vec<EventRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| KwsError::io(path, e))?;
    let name = path.display().to_string();
    if path.extension().is_some_and(|x| x == "jsonl") {
        parse_events_jsonl(&text, &name)
    } else {
        parse_events(&text, &name)
    }
}
