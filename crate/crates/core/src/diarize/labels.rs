use super::cluster::ClusterLabels;
use super::segments::SegmentList;
use crate::error::{Error, Result};
use crate::scoring::{Annotation, Region};

/// Default speaker name for cluster `k`.
pub fn speaker_name(k: usize) -> String {
    format!("spk{k}")
}

/// Turns labelled segments into a single-speaker timeline. Each segment keeps
/// the span between the midpoints of its overlaps with the previous and next
/// segment; same-speaker neighbours merge.
pub fn assign_primary_labels(segments: &SegmentList, labels: &ClusterLabels) -> Result<Annotation> {
    assign_primary_labels_with(segments, labels, speaker_name)
}

pub fn assign_primary_labels_with(
    segments: &SegmentList,
    labels: &ClusterLabels,
    name: impl Fn(usize) -> String,
) -> Result<Annotation> {
    if segments.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} segments but {} labels",
            segments.len(),
            labels.len()
        )));
    }
    let ivs = segments.intervals();
    let mut regions = Vec::with_capacity(ivs.len());
    for (i, iv) in ivs.iter().enumerate() {
        let lo = match i.checked_sub(1).map(|p| ivs[p]) {
            Some(prev) if prev.offset > iv.onset => 0.5 * (iv.onset + prev.offset),
            _ => iv.onset,
        };
        let hi = match ivs.get(i + 1) {
            Some(next) if next.onset < iv.offset => 0.5 * (next.onset + iv.offset),
            _ => iv.offset,
        };
        if hi > lo {
            regions.push(Region::new(name(labels.labels()[i]), lo, hi));
        }
    }
    Ok(Annotation::with_regions(segments.recording_id.clone(), regions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::timeline::Interval;

    fn segs(ivs: &[(f64, f64)]) -> SegmentList {
        SegmentList::new("r", ivs.iter().map(|&(a, b)| Interval::new(a, b)).collect()).unwrap()
    }

    #[test]
    fn same_label_merges() {
        let a = assign_primary_labels(&segs(&[(0.0, 1.0), (0.5, 1.5)]), &ClusterLabels::new(&[0, 0]).unwrap()).unwrap();
        assert_eq!(a.regions, vec![Region::new("spk0", 0.0, 1.5)]);
    }

    #[test]
    fn conflict_split_at_midpoint() {
        let a = assign_primary_labels(&segs(&[(0.0, 1.0), (0.5, 1.5)]), &ClusterLabels::new(&[0, 1]).unwrap()).unwrap();
        assert_eq!(a.regions, vec![Region::new("spk0", 0.0, 0.75), Region::new("spk1", 0.75, 1.5)]);
    }

    #[test]
    fn empty_and_mismatch() {
        let empty = SegmentList::new("r", vec![]).unwrap();
        let none = ClusterLabels::new(&[]).unwrap();
        assert!(assign_primary_labels(&empty, &none).unwrap().is_empty());
        let labels = ClusterLabels::new(&[0]).unwrap();
        assert!(assign_primary_labels(&empty, &labels).is_err());
        let a = assign_primary_labels_with(&segs(&[(0.0, 1.0)]), &labels, |k| format!("S{k}")).unwrap();
        assert_eq!(a.regions[0].speaker, "S0");
    }

    #[test]
    fn dense_windows_tile_without_gaps() {
        let s = segs(&[(0.0, 1.0), (0.2, 1.2), (0.4, 1.4), (0.6, 1.6)]);
        let a = assign_primary_labels(&s, &ClusterLabels::new(&[0, 1, 0, 1]).unwrap()).unwrap();
        let total: f64 = a.regions.iter().map(Region::duration).sum();
        assert!((total - 1.6).abs() < 1e-12);
        assert!(a.overlaps().is_empty());
    }
}
