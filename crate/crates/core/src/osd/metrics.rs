use serde::Serialize;

use super::OverlapTimeline;
use crate::error::{Error, Result};
use crate::scoring::timeline;

/// Frame rate of the frame-wise accuracy, precision and recall.
pub const METRIC_FRAME_RATE: f64 = 100.0;

/// Overlap detection scores. Rates are fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionMetrics {
    /// `(missed + false alarm) / reference overlap`; infinite when the
    /// reference is empty but the hypothesis is not.
    pub deter: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub missed: f64,
    pub false_alarm: f64,
    pub reference_duration: f64,
    pub note: Option<String>,
}

fn frame_labels(t: &OverlapTimeline, frames: usize) -> Vec<bool> {
    (0..frames)
        .map(|j| {
            let centre = (j as f64 + 0.5) / METRIC_FRAME_RATE;
            t.intervals().iter().any(|iv| iv.contains(centre))
        })
        .collect()
}

/// Scores a hypothesis overlap timeline against the reference over the
/// recording span `[0, total)`. Precision (recall) with no predicted
/// (reference) positive frames is 1.
pub fn detection_metrics(
    reference: &OverlapTimeline,
    hypothesis: &OverlapTimeline,
    total: f64,
) -> Result<DetectionMetrics> {
    let end = |t: &OverlapTimeline| t.intervals().last().map_or(0.0, |iv| iv.offset);
    if !(total > 0.0) || end(reference) > total + 1e-9 || end(hypothesis) > total + 1e-9 {
        return Err(Error::Bounds(format!(
            "timelines must lie within the recording span [0, {total}]"
        )));
    }
    let missed = timeline::total_duration(&timeline::difference(reference.intervals(), hypothesis.intervals()));
    let false_alarm = timeline::total_duration(&timeline::difference(hypothesis.intervals(), reference.intervals()));
    let reference_duration = reference.duration();
    let (deter, note) = if reference_duration > 0.0 {
        ((missed + false_alarm) / reference_duration, None)
    } else if false_alarm > 0.0 {
        (
            f64::INFINITY,
            Some("reference has no overlapped speech; DetER undefined for a non-empty hypothesis".into()),
        )
    } else {
        (0.0, None)
    };

    let frames = (total * METRIC_FRAME_RATE).round() as usize;
    let r = frame_labels(reference, frames);
    let h = frame_labels(hypothesis, frames);
    let (mut tp, mut fp, mut fneg, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (a, b) in r.iter().zip(&h) {
        match (a, b) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fneg += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    Ok(DetectionMetrics {
        deter,
        accuracy: ratio(tp + tn, frames),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fneg),
        missed,
        false_alarm,
        reference_duration,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::Interval;

    fn tl(v: &[(f64, f64)]) -> OverlapTimeline {
        OverlapTimeline::new(v.iter().map(|(a, b)| Interval::new(*a, *b)).collect())
    }

    #[test]
    fn perfect_hypothesis() {
        let r = tl(&[(1.0, 2.5), (7.0, 9.0)]);
        let m = detection_metrics(&r, &r, 20.0).unwrap();
        assert_eq!((m.deter, m.accuracy, m.precision, m.recall), (0.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn half_detected() {
        let m = detection_metrics(&tl(&[(0.0, 10.0)]), &tl(&[(0.0, 5.0)]), 100.0).unwrap();
        assert_eq!(m.missed, 5.0);
        assert_eq!(m.false_alarm, 0.0);
        assert_eq!(m.deter, 0.5);
        assert_eq!(m.recall, 0.5);
        assert_eq!(m.precision, 1.0);
        assert!((m.accuracy - 0.95).abs() < 1e-12);
    }

    #[test]
    fn empty_reference() {
        let m = detection_metrics(&tl(&[]), &tl(&[(1.0, 2.0)]), 10.0).unwrap();
        assert!(m.deter.is_infinite());
        assert!(m.note.is_some());
        assert!(detection_metrics(&tl(&[]), &tl(&[(1.0, 12.0)]), 10.0).is_err());
    }
}
