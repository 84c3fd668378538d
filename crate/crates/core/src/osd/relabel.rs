//! Second-speaker labels inside detected overlap.

use crate::diarize::{ClusterLabels, SegmentList};
use crate::error::{Error, Result};
use crate::scoring::{Annotation, Region};

use super::OverlapTimeline;

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Adds a second speaker to every part of `annotation` that falls inside
/// `overlaps`, using cosine similarity between the covering segment's
/// embedding and the cluster centroids. Primary speakers are named
/// `speaker_name(cluster)`.
pub fn assign_second_speaker(
    annotation: &Annotation,
    overlaps: &OverlapTimeline,
    segments: &SegmentList,
    labels: &ClusterLabels,
    embeddings: &[Vec<f64>],
    speaker_name: impl Fn(usize) -> String,
) -> Result<Annotation> {
    if embeddings.len() != labels.labels().len() {
        return Err(Error::Dimension(format!(
            "{} embeddings for {} labelled segments",
            embeddings.len(),
            labels.labels().len()
        )));
    }
    let dim = embeddings.first().map_or(0, Vec::len);
    let mut centroids = vec![vec![0.0; dim]; labels.num_clusters()];
    let mut counts = vec![0usize; labels.num_clusters()];
    for (e, l) in embeddings.iter().zip(labels.labels()) {
        counts[*l] += 1;
        for (c, v) in centroids[*l].iter_mut().zip(e) {
            *c += v;
        }
    }
    for (c, n) in centroids.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|v| *v /= (*n).max(1) as f64);
    }
    assign_second_speaker_by(annotation, overlaps, segments, labels, speaker_name, |seg, cluster| {
        cosine(&embeddings[seg], &centroids[cluster])
    })
}

/// As [`assign_second_speaker`] with an arbitrary segment-to-cluster score.
/// The second label of a region is the best-scoring cluster other than the
/// region's own speaker.
pub fn assign_second_speaker_by(
    annotation: &Annotation,
    overlaps: &OverlapTimeline,
    segments: &SegmentList,
    labels: &ClusterLabels,
    speaker_name: impl Fn(usize) -> String,
    score: impl Fn(usize, usize) -> f64,
) -> Result<Annotation> {
    if segments.len() != labels.labels().len() {
        return Err(Error::Dimension(format!(
            "{} segments but {} labels",
            segments.len(),
            labels.labels().len()
        )));
    }
    if overlaps.is_empty() {
        return Ok(annotation.clone());
    }
    let k = labels.num_clusters();
    if k < 2 {
        log::warn!(
            "{}: {} cluster(s) found; overlap present but no second speaker can be assigned",
            annotation.recording_id,
            k
        );
        return Ok(annotation.clone());
    }
    let names: Vec<String> = (0..k).map(&speaker_name).collect();
    let mut extra: Vec<Region> = Vec::new();
    for region in &annotation.regions {
        let Some(primary) = names.iter().position(|n| *n == region.speaker) else {
            continue;
        };
        for ov in overlaps.intervals() {
            let Some(piece) = region.interval().intersect(ov) else {
                continue;
            };
            // segment of this speaker covering most of the piece, else any segment
            let best = |same_label: bool| {
                segments
                    .intervals()
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !same_label || labels.labels()[*i] == primary)
                    .map(|(i, s)| (i, s.overlap(&piece)))
                    .filter(|(_, o)| *o > 0.0)
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
            };
            let Some(seg) = best(true).or_else(|| best(false)) else {
                continue;
            };
            let second = (0..k)
                .filter(|c| *c != primary)
                .max_by(|a, b| score(seg, *a).total_cmp(&score(seg, *b)).then(b.cmp(a)))
                .expect("k >= 2");
            extra.push(Region::new(names[second].clone(), piece.onset, piece.offset));
        }
    }
    let mut out = annotation.clone();
    out.regions.extend(extra);
    Ok(out.normalized())
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::diarize::{assign_primary_labels, speaker_name};
    use crate::scoring::timeline::Interval;

    fn setup() -> (SegmentList, ClusterLabels, Vec<Vec<f64>>) {
        let segs = SegmentList::new(
            "r",
            vec![Interval::new(0.0, 1.0), Interval::new(0.5, 1.5), Interval::new(1.0, 2.0)],
        )
        .unwrap();
        let labels = ClusterLabels::new(&[0, 0, 1]).unwrap();
        let emb = vec![vec![1.0, 0.0, 0.0], vec![1.0, 0.1, 0.0], vec![0.0, 1.0, 0.0]];
        (segs, labels, emb)
    }

    #[test]
    fn overlap_gets_other_cluster() {
        let (segs, labels, emb) = setup();
        let primary = assign_primary_labels(&segs, &labels).unwrap();
        let ovl = OverlapTimeline::new(vec![Interval::new(1.2, 1.6)]);
        let out = assign_second_speaker(&primary, &ovl, &segs, &labels, &emb, speaker_name).unwrap();
        let overlaps = out.overlaps();
        assert_eq!(overlaps.len(), 1);
        assert!((overlaps[0].onset - 1.2).abs() < 1e-12 && (overlaps[0].offset - 1.6).abs() < 1e-12);
        assert_eq!(out.speakers(), vec!["spk0".to_string(), "spk1".to_string()]);
    }

    #[test]
    fn no_overlap_or_single_cluster_is_identity() {
        let (segs, _, emb) = setup();
        let one = ClusterLabels::new(&[0, 0, 0]).unwrap();
        let primary = assign_primary_labels(&segs, &one).unwrap();
        let ovl = OverlapTimeline::new(vec![Interval::new(0.2, 0.4)]);
        assert_eq!(assign_second_speaker(&primary, &ovl, &segs, &one, &emb, speaker_name).unwrap(), primary);
        let none = OverlapTimeline::new(vec![]);
        assert_eq!(assign_second_speaker(&primary, &none, &segs, &one, &emb, speaker_name).unwrap(), primary);
        assert!(assign_second_speaker(&primary, &none, &segs, &one, &emb[..2], speaker_name).is_err());
    }

    #[test]
    fn custom_score_picks_best_other() {
        let segs = SegmentList::new("r", vec![Interval::new(0.0, 2.0)]).unwrap();
        let labels = ClusterLabels::new(&[0]).unwrap();
        let primary = assign_primary_labels(&segs, &labels).unwrap();
        // Only one cluster in labels means no second speaker even with a score.
        let ovl = OverlapTimeline::new(vec![Interval::new(0.5, 1.0)]);
        let out = assign_second_speaker_by(&primary, &ovl, &segs, &labels, speaker_name, |_, c| c as f64).unwrap();
        assert_eq!(out, primary);
    }
}
