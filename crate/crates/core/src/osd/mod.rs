//! Overlapped speech detection: the multi-channel AFSB front end, frame
//! probability decoding, second-speaker assignment and detection metrics.

mod afsb;
mod decode;
mod metrics;
mod relabel;

use std::path::Path;

use crate::error::{Error, Result};
use crate::scoring::timeline::{self, Interval};

pub use afsb::{
    afsb_forward, afsb_forward_with_gates, se_gates, AfsbConfig, AfsbWeights, ConvLayer, ConvWeights,
    WeightMode,
};
pub use decode::{decode_probabilities, detect_overlap, DecodeParams, FrameEncoder, LogisticScorer};
pub use metrics::{detection_metrics, DetectionMetrics, METRIC_FRAME_RATE};
pub use relabel::{assign_second_speaker, assign_second_speaker_by};

/// Sorted, disjoint spans marked as overlapped speech.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OverlapTimeline {
    intervals: Vec<Interval>,
}

impl OverlapTimeline {
    /// Merges the given intervals.
    pub fn new(intervals: Vec<Interval>) -> Self {
        Self {
            intervals: timeline::merge(intervals),
        }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn duration(&self) -> f64 {
        timeline::total_duration(&self.intervals)
    }

    /// Parses `onset offset` lines (seconds).
    pub fn parse(text: &str) -> Result<Self> {
        let mut intervals = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(err(format!("expected `onset offset`, got {} fields", fields.len())));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("invalid time `{s}`")))
            };
            let (onset, offset) = (num(fields[0])?, num(fields[1])?);
            if offset <= onset {
                return Err(err(format!("offset {offset} not after onset {onset}")));
            }
            intervals.push(Interval::new(onset, offset));
        }
        Ok(Self::new(intervals))
    }

    /// One `onset offset` line per interval, three decimals.
    pub fn to_text(&self) -> String {
        self.intervals
            .iter()
            .map(|iv| format!("{:.3} {:.3}\n", iv.onset, iv.offset))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Reads an overlap file produced by an external detector.
pub fn load_external_overlaps(path: impl AsRef<Path>) -> Result<OverlapTimeline> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    OverlapTimeline::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_file_parsing() {
        assert!(OverlapTimeline::parse("").unwrap().is_empty());
        let t = OverlapTimeline::parse("1.0 2.0\n1.5 3.0\n").unwrap();
        assert_eq!(t.intervals(), &[Interval::new(1.0, 3.0)]);
        match OverlapTimeline::parse("0.5 0.7\n2.0 1.0\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert_eq!(t.to_text(), "1.000 3.000\n");
    }

    #[test]
    fn load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ovl");
        std::fs::write(&p, "4 5\n1 2\n").unwrap();
        let t = load_external_overlaps(&p).unwrap();
        assert_eq!(t.intervals(), &[Interval::new(1.0, 2.0), Interval::new(4.0, 5.0)]);
        assert!(load_external_overlaps(dir.path().join("none")).is_err());
    }
}
