//! Diarization error rate with optimal speaker mapping, collar and overlap
//! handling.

use serde::Serialize;

use super::assignment::max_weight_assignment;
use super::timeline::{self, Interval};
use super::Annotation;
use crate::error::{Error, Result};

/// DER components in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerBreakdown {
    pub missed_speech: f64,
    pub false_alarm: f64,
    pub speaker_confusion: f64,
    /// Scored reference speaker time, after collar excision.
    pub total_reference_speech: f64,
    /// Reference speaker time attributed to the mapped hypothesis speaker.
    pub correct: f64,
    pub der: f64,
}

impl DerBreakdown {
    pub fn der_percent(&self) -> f64 {
        100.0 * self.der
    }

    /// Sums components over recordings and recomputes the rate. `None` for
    /// an empty slice.
    pub fn total(scores: &[DerBreakdown]) -> Option<DerBreakdown> {
        if scores.is_empty() {
            return None;
        }
        let mut t = DerBreakdown {
            missed_speech: 0.0,
            false_alarm: 0.0,
            speaker_confusion: 0.0,
            total_reference_speech: 0.0,
            correct: 0.0,
            der: 0.0,
        };
        for s in scores {
            t.missed_speech += s.missed_speech;
            t.false_alarm += s.false_alarm;
            t.speaker_confusion += s.speaker_confusion;
            t.total_reference_speech += s.total_reference_speech;
            t.correct += s.correct;
        }
        let err = t.missed_speech + t.false_alarm + t.speaker_confusion;
        t.der = if t.total_reference_speech > 0.0 {
            err / t.total_reference_speech
        } else if err > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        Some(t)
    }
}

/// Scores `hypothesis` against `reference`. Reference boundaries are
/// surrounded by a no-score collar of `collar` seconds on each side; with
/// `score_overlap` false, spans where the reference has two or more
/// speakers are excluded too.
pub fn compute_der(
    reference: &Annotation,
    hypothesis: &Annotation,
    collar: f64,
    score_overlap: bool,
) -> Result<DerBreakdown> {
    if reference.recording_id != hypothesis.recording_id {
        return Err(Error::RecordingMismatch(format!(
            "reference `{}` vs hypothesis `{}`",
            reference.recording_id, hypothesis.recording_id
        )));
    }
    if !(collar >= 0.0) {
        return Err(Error::InvalidArgument(format!("collar must be >= 0, got {collar}")));
    }
    let ref_lines: Vec<(String, Vec<Interval>)> = reference.speaker_timelines().into_iter().collect();
    let hyp_lines: Vec<(String, Vec<Interval>)> = hypothesis.speaker_timelines().into_iter().collect();

    let mut excluded: Vec<Interval> = Vec::new();
    if collar > 0.0 {
        for (_, ivs) in &ref_lines {
            for iv in ivs {
                for b in [iv.onset, iv.offset] {
                    excluded.push(Interval::new(b - collar, b + collar));
                }
            }
        }
    }
    if !score_overlap {
        excluded.extend(reference.overlaps());
    }
    let excluded = timeline::merge(excluded);

    let cuts = timeline::boundaries(
        ref_lines
            .iter()
            .chain(&hyp_lines)
            .flat_map(|(_, ivs)| ivs.iter())
            .chain(excluded.iter()),
    );

    // per scored piece: duration, active reference and hypothesis indices
    let active = |lines: &[(String, Vec<Interval>)], t: f64| -> Vec<usize> {
        lines
            .iter()
            .enumerate()
            .filter(|(_, (_, ivs))| ivs.iter().any(|iv| iv.contains(t)))
            .map(|(i, _)| i)
            .collect()
    };
    let mut pieces: Vec<(f64, Vec<usize>, Vec<usize>)> = Vec::new();
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        if excluded.iter().any(|iv| iv.contains(mid)) {
            continue;
        }
        let r = active(&ref_lines, mid);
        let h = active(&hyp_lines, mid);
        if !r.is_empty() || !h.is_empty() {
            pieces.push((w[1] - w[0], r, h));
        }
    }

    let mut cooc = vec![vec![0.0; hyp_lines.len()]; ref_lines.len()];
    for (d, r, h) in &pieces {
        for &i in r {
            for &j in h {
                cooc[i][j] += d;
            }
        }
    }
    let mapping = max_weight_assignment(&cooc);

    let (mut missed, mut fa, mut conf, mut total, mut correct) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (d, r, h) in &pieces {
        let (nr, nh) = (r.len() as f64, h.len() as f64);
        let hits = r
            .iter()
            .filter(|i| mapping[**i].is_some_and(|j| h.contains(&j)))
            .count() as f64;
        total += d * nr;
        missed += d * (nr - nh).max(0.0);
        fa += d * (nh - nr).max(0.0);
        conf += d * (nr.min(nh) - hits);
        correct += d * hits;
    }
    let der = if total > 0.0 {
        (missed + fa + conf) / total
    } else if fa > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(DerBreakdown {
        missed_speech: missed,
        false_alarm: fa,
        speaker_confusion: conf,
        total_reference_speech: total,
        correct,
        der,
    })
}
