//! RTTM reading and writing.
//!
//! Only `SPEAKER` records are interpreted:
//!
//! ```text
//! SPEAKER <file> <chan> <onset> <dur> <NA> <NA> <spk> <NA> <NA>
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::{sort_regions, Annotation, Region};
use crate::error::{Error, Result};

/// Rounds to the nanosecond so that `onset + duration` reproduces offsets
/// written with millisecond precision.
fn snap(t: f64) -> f64 {
    (t * 1e9).round() / 1e9
}

/// Parses RTTM text into one annotation per file id, sorted by id.
pub fn parse_rttm(text: &str) -> Result<Vec<Annotation>> {
    let mut by_file: BTreeMap<String, Vec<Region>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] != "SPEAKER" {
            log::warn!("rttm line {line_no}: skipping `{}` record", fields[0]);
            continue;
        }
        if fields.len() < 8 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("SPEAKER record needs at least 8 fields, got {}", fields.len()),
            });
        }
        let number = |s: &str, what: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("invalid {what} `{s}`"),
                })
        };
        let onset = number(fields[3], "onset")?;
        let duration = number(fields[4], "duration")?;
        if duration < 0.0 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("negative duration {duration}"),
            });
        }
        if duration == 0.0 {
            log::warn!("rttm line {line_no}: skipping zero-length region");
            continue;
        }
        by_file
            .entry(fields[1].to_string())
            .or_default()
            .push(Region::new(fields[7], snap(onset), snap(onset + duration)));
    }
    Ok(by_file
        .into_iter()
        .map(|(id, mut regions)| {
            sort_regions(&mut regions);
            Annotation {
                recording_id: id,
                regions,
            }
        })
        .collect())
}

pub fn read_rttm(path: impl AsRef<Path>) -> Result<Vec<Annotation>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rttm(&text)
}

/// Formats annotations ordered by (recording, onset, speaker), times with
/// three decimals.
pub fn emit_rttm(annotations: &[Annotation]) -> String {
    let mut sorted: Vec<&Annotation> = annotations.iter().collect();
    sorted.sort_by(|a, b| a.recording_id.cmp(&b.recording_id));
    let mut out = String::new();
    for ann in sorted {
        let mut regions = ann.regions.clone();
        sort_regions(&mut regions);
        for r in regions {
            out.push_str(&format!(
                "SPEAKER {} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>\n",
                ann.recording_id,
                r.onset,
                r.offset - r.onset,
                r.speaker
            ));
        }
    }
    out
}

pub fn write_rttm(path: impl AsRef<Path>, annotations: &[Annotation]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, emit_rttm(annotations)).map_err(|e| Error::io(path, e))
}
