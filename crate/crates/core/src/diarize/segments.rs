use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scoring::timeline::Interval;

/// Time scales of the subsystems: (window, shift) in seconds.
pub const STANDARD_TIME_SCALES: [(f64, f64); 3] = [(1.0, 0.5), (1.2, 0.6), (1.5, 0.75)];

/// Sorted analysis segments of one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentList {
    pub recording_id: String,
    intervals: Vec<Interval>,
    /// `(window, shift)` used to cut the segments, if uniform.
    pub time_scale: Option<(f64, f64)>,
}

impl SegmentList {
    pub fn new(recording_id: impl Into<String>, mut intervals: Vec<Interval>) -> Result<Self> {
        if let Some(bad) = intervals.iter().find(|iv| !(iv.offset > iv.onset)) {
            return Err(Error::InvalidArgument(format!(
                "segment [{}, {}] has non-positive length",
                bad.onset, bad.offset
            )));
        }
        intervals.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.offset.total_cmp(&b.offset)));
        Ok(Self {
            recording_id: recording_id.into(),
            intervals,
            time_scale: None,
        })
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Kaldi-style utterance id of segment `i`.
    pub fn utterance_id(&self, i: usize) -> String {
        let iv = self.intervals[i];
        format!(
            "{}-{:07}-{:07}",
            self.recording_id,
            (iv.onset * 1000.0).round() as i64,
            (iv.offset * 1000.0).round() as i64
        )
    }

    /// `<utt-id> <rec-id> <onset> <offset>` lines.
    pub fn to_kaldi(&self) -> String {
        (0..self.len())
            .map(|i| {
                let iv = self.intervals[i];
                format!(
                    "{} {} {:.3} {:.3}\n",
                    self.utterance_id(i),
                    self.recording_id,
                    iv.onset,
                    iv.offset
                )
            })
            .collect()
    }
}

/// Parses a Kaldi `segments` file into one list per recording id.
pub fn parse_segments(text: &str) -> Result<BTreeMap<String, SegmentList>> {
    let mut by_rec: BTreeMap<String, Vec<Interval>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse { line: i + 1, message };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(err(format!(
                "expected `<utt-id> <rec-id> <onset> <offset>`, got {} fields",
                f.len()
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("invalid time `{s}`")))
        };
        let (on, off) = (num(f[2])?, num(f[3])?);
        if off <= on {
            return Err(err(format!("offset {off} not after onset {on}")));
        }
        by_rec.entry(f[1].to_string()).or_default().push(Interval::new(on, off));
    }
    by_rec
        .into_iter()
        .map(|(rec, ivs)| SegmentList::new(rec.clone(), ivs).map(|s| (rec, s)))
        .collect()
}

pub fn read_segments(path: impl AsRef<Path>) -> Result<BTreeMap<String, SegmentList>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_segments(&text)
}

/// Tiles every speech interval with `window`-second segments every `shift`
/// seconds. Speech left uncovered after the last full window becomes one
/// shorter segment starting at the next shift position; an interval shorter
/// than the window becomes a single segment.
pub fn uniform_segments(
    recording_id: &str,
    vad: &[Interval],
    window: f64,
    shift: f64,
) -> Result<SegmentList> {
    if !(window > 0.0 && shift > 0.0 && shift <= window) {
        return Err(Error::InvalidArgument(format!(
            "time scale needs 0 < shift <= window, got window {window}, shift {shift}"
        )));
    }
    let eps = 1e-9;
    let mut out = Vec::new();
    for iv in crate::scoring::timeline::merge(vad.to_vec()) {
        let mut i = 0usize;
        let mut covered = iv.onset;
        loop {
            let start = iv.onset + shift * i as f64;
            if start + window > iv.offset + eps {
                break;
            }
            let end = (start + window).min(iv.offset);
            out.push(Interval::new(start, end));
            covered = end;
            i += 1;
        }
        if covered < iv.offset - eps {
            let start = if i == 0 { iv.onset } else { iv.onset + shift * i as f64 };
            out.push(Interval::new(start, iv.offset));
        }
    }
    let mut list = SegmentList::new(recording_id, out)?;
    list.time_scale = Some((window, shift));
    Ok(list)
}

/// Parses `window:shift`.
pub fn parse_time_scale(text: &str) -> Result<(f64, f64)> {
    let (w, s) = text
        .split_once(':')
        .ok_or_else(|| Error::InvalidArgument(format!("time scale `{text}` is not `window:shift`")))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidArgument(format!("invalid time scale `{text}`")))
    };
    let (w, s) = (parse(w)?, parse(s)?);
    if !(w > 0.0 && s > 0.0 && s <= w) {
        return Err(Error::InvalidArgument(format!("time scale `{text}` needs 0 < shift <= window")));
    }
    Ok((w, s))
}
