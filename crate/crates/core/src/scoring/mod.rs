//! Diarization annotations, RTTM interchange and DER scoring.

mod assignment;
mod der;
mod rttm;
pub mod timeline;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use assignment::{max_weight_assignment, max_weight_assignment_exhaustive, max_weight_assignment_hungarian};
pub use der::{compute_der, DerBreakdown};
pub use rttm::{emit_rttm, parse_rttm, read_rttm, write_rttm};
pub use timeline::Interval;

/// One speaker-labelled time span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub speaker: String,
    pub onset: f64,
    pub offset: f64,
}

impl Region {
    pub fn new(speaker: impl Into<String>, onset: f64, offset: f64) -> Self {
        Self {
            speaker: speaker.into(),
            onset,
            offset,
        }
    }

    pub fn interval(&self) -> Interval {
        Interval::new(self.onset, self.offset)
    }

    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }
}

/// Speaker labels over time for one recording.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Annotation {
    pub recording_id: String,
    pub regions: Vec<Region>,
}

impl Annotation {
    pub fn new(recording_id: impl Into<String>) -> Self {
        Self {
            recording_id: recording_id.into(),
            regions: Vec::new(),
        }
    }

    pub fn with_regions(recording_id: impl Into<String>, regions: Vec<Region>) -> Self {
        Self {
            recording_id: recording_id.into(),
            regions,
        }
        .normalized()
    }

    pub fn push(&mut self, speaker: impl Into<String>, onset: f64, offset: f64) {
        self.regions.push(Region::new(speaker, onset, offset));
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Speaker ids in sorted order.
    pub fn speakers(&self) -> Vec<String> {
        let mut s: Vec<String> = self.regions.iter().map(|r| r.speaker.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    /// Merged timeline of each speaker.
    pub fn speaker_timelines(&self) -> BTreeMap<String, Vec<Interval>> {
        let mut map: BTreeMap<String, Vec<Interval>> = BTreeMap::new();
        for r in &self.regions {
            map.entry(r.speaker.clone()).or_default().push(r.interval());
        }
        map.into_iter()
            .map(|(k, v)| (k, timeline::merge(v)))
            .collect()
    }

    /// Merges overlapping or touching regions of the same speaker, drops
    /// empty regions and sorts by (onset, speaker, offset).
    pub fn normalized(&self) -> Annotation {
        let mut regions: Vec<Region> = self
            .speaker_timelines()
            .into_iter()
            .flat_map(|(spk, ivs)| {
                ivs.into_iter()
                    .map(move |iv| Region::new(spk.clone(), iv.onset, iv.offset))
            })
            .collect();
        sort_regions(&mut regions);
        Annotation {
            recording_id: self.recording_id.clone(),
            regions,
        }
    }

    /// Union of all speech.
    pub fn speech(&self) -> Vec<Interval> {
        timeline::merge(self.regions.iter().map(Region::interval).collect())
    }

    /// Spans where at least two speakers are active.
    pub fn overlaps(&self) -> Vec<Interval> {
        let lines = self.speaker_timelines();
        let all: Vec<&Interval> = lines.values().flatten().collect();
        let cuts = timeline::boundaries(all.iter().copied());
        let pieces = cuts.windows(2).filter_map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let active = lines
                .values()
                .filter(|ivs| ivs.iter().any(|iv| iv.contains(mid)))
                .count();
            (active >= 2).then_some(Interval::new(w[0], w[1]))
        });
        timeline::merge(pieces.collect())
    }

    /// Elementary pieces between consecutive region boundaries, with the
    /// sorted speakers active on each. Pieces with no speaker are omitted.
    pub fn label_function(&self) -> Vec<(Interval, Vec<String>)> {
        let lines = self.speaker_timelines();
        let cuts = timeline::boundaries(lines.values().flatten());
        let mut out: Vec<(Interval, Vec<String>)> = Vec::new();
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let active: Vec<String> = lines
                .iter()
                .filter(|(_, ivs)| ivs.iter().any(|iv| iv.contains(mid)))
                .map(|(s, _)| s.clone())
                .collect();
            if active.is_empty() {
                continue;
            }
            match out.last_mut() {
                Some((iv, prev)) if *prev == active && iv.offset == w[0] => iv.offset = w[1],
                _ => out.push((Interval::new(w[0], w[1]), active)),
            }
        }
        out
    }

    /// Applies `rename` to every speaker id.
    pub fn renamed(&self, rename: impl Fn(&str) -> String) -> Annotation {
        Annotation {
            recording_id: self.recording_id.clone(),
            regions: self
                .regions
                .iter()
                .map(|r| Region::new(rename(&r.speaker), r.onset, r.offset))
                .collect(),
        }
        .normalized()
    }
}

pub(crate) fn sort_regions(regions: &mut [Region]) {
    regions.sort_by(|a, b| {
        a.onset
            .total_cmp(&b.onset)
            .then_with(|| a.speaker.cmp(&b.speaker))
            .then(a.offset.total_cmp(&b.offset))
    });
}
