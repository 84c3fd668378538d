//! Overlap-aware fusion of diarization hypotheses by label mapping and
//! weighted voting.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::scoring::timeline::{self, Interval};
use crate::scoring::{Annotation, Region};

/// Hypotheses of one recording with normalized voting weights.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet {
    hypotheses: Vec<Annotation>,
    weights: Vec<f64>,
}

/// `1/rank` weights normalized to sum 1.
pub fn rank_weights(count: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=count).map(|r| 1.0 / r as f64).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

impl HypothesisSet {
    /// `weights` default to rank weights in input order.
    pub fn new(hypotheses: Vec<Annotation>, weights: Option<Vec<f64>>) -> Result<Self> {
        if hypotheses.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "fusion needs at least 2 hypotheses, got {}",
                hypotheses.len()
            )));
        }
        let rec = &hypotheses[0].recording_id;
        if let Some(h) = hypotheses.iter().find(|h| &h.recording_id != rec) {
            return Err(Error::RecordingMismatch(format!(
                "hypotheses cover `{rec}` and `{}`",
                h.recording_id
            )));
        }
        let weights = match weights {
            None => rank_weights(hypotheses.len()),
            Some(w) => {
                if w.len() != hypotheses.len() {
                    return Err(Error::Dimension(format!(
                        "{} weights for {} hypotheses",
                        w.len(),
                        hypotheses.len()
                    )));
                }
                if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(Error::InvalidArgument("fusion weights must be positive".into()));
                }
                let total: f64 = w.iter().sum();
                w.into_iter().map(|v| v / total).collect()
            }
        };
        let hypotheses = hypotheses.iter().map(Annotation::normalized).collect();
        Ok(Self { hypotheses, weights })
    }

    pub fn hypotheses(&self) -> &[Annotation] {
        &self.hypotheses
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn recording_id(&self) -> &str {
        &self.hypotheses[0].recording_id
    }
}

/// Rewrites every hypothesis into one shared label space. Each label of a
/// later hypothesis is matched greedily, by overlap duration, to a label of
/// the anchor built from the hypotheses already mapped; unmatched labels get
/// fresh ids. Ids are named after the label that created them. Empty
/// hypotheses are passed through unchanged.
pub fn map_labels(set: &HypothesisSet) -> HypothesisSet {
    let mut anchor_names: Vec<String> = Vec::new();
    let mut anchor_lines: Vec<Vec<Interval>> = Vec::new();
    let mut mapped = Vec::with_capacity(set.hypotheses.len());
    for (h_idx, hyp) in set.hypotheses.iter().enumerate() {
        if hyp.is_empty() {
            log::warn!(
                "{}: hypothesis {} is empty and takes no part in label mapping",
                hyp.recording_id,
                h_idx + 1
            );
            mapped.push(hyp.clone());
            continue;
        }
        let lines: Vec<(String, Vec<Interval>)> = hyp.speaker_timelines().into_iter().collect();
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (s, (_, ivs)) in lines.iter().enumerate() {
            for (a, anchor) in anchor_lines.iter().enumerate() {
                let ov = timeline::total_duration(&timeline::intersection(ivs, anchor));
                if ov > 0.0 {
                    pairs.push((ov, a, s));
                }
            }
        }
        pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut target: Vec<Option<usize>> = vec![None; lines.len()];
        let mut used = vec![false; anchor_lines.len()];
        for (_, a, s) in pairs {
            if target[s].is_none() && !used[a] {
                target[s] = Some(a);
                used[a] = true;
            }
        }
        let taken: BTreeSet<String> = anchor_names.iter().cloned().collect();
        for (s, (name, _)) in lines.iter().enumerate() {
            if target[s].is_none() {
                let mut fresh = name.clone();
                let mut n = 2;
                while taken.contains(&fresh) || anchor_names.contains(&fresh) {
                    fresh = format!("{name}_{n}");
                    n += 1;
                }
                anchor_names.push(fresh);
                anchor_lines.push(Vec::new());
                target[s] = Some(anchor_names.len() - 1);
            }
        }
        let mut regions = Vec::new();
        for (s, (_, ivs)) in lines.iter().enumerate() {
            let a = target[s].expect("every label mapped");
            anchor_lines[a] = timeline::union(&anchor_lines[a], ivs);
            regions.extend(ivs.iter().map(|iv| Region::new(anchor_names[a].clone(), iv.onset, iv.offset)));
        }
        mapped.push(Annotation::with_regions(hyp.recording_id.clone(), regions));
    }
    HypothesisSet {
        hypotheses: mapped,
        weights: set.weights.clone(),
    }
}

/// Weighted vote over elementary regions of mapped hypotheses. Each region
/// gets `round_half_up(sum_i w_i c_i)` speakers, `c_i` being hypothesis `i`'s
/// concurrent speaker count, chosen by vote mass with ties to the label
/// created first.
pub fn vote(mapped: &HypothesisSet) -> Annotation {
    // label order = order of first appearance across hypotheses
    let mut order: Vec<String> = Vec::new();
    for h in &mapped.hypotheses {
        for r in &h.regions {
            if !order.contains(&r.speaker) {
                order.push(r.speaker.clone());
            }
        }
    }
    let label_id: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    // events: (time, delta, hypothesis, label)
    let mut events: Vec<(f64, i32, usize, usize)> = Vec::new();
    for (h, hyp) in mapped.hypotheses.iter().enumerate() {
        for r in &hyp.regions {
            let l = label_id[r.speaker.as_str()];
            events.push((r.onset, 1, h, l));
            events.push((r.offset, -1, h, l));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let hyps = mapped.hypotheses.len();
    let mut active = vec![vec![0i32; order.len()]; hyps];
    let mut counts = vec![0i32; hyps];
    let mut regions = Vec::new();
    let mut i = 0;
    while i < events.len() {
        let t = events[i].0;
        while i < events.len() && events[i].0 == t {
            let (_, d, h, l) = events[i];
            active[h][l] += d;
            counts[h] += d;
            i += 1;
        }
        let Some(&(next, ..)) = events.get(i) else { break };
        let expected: f64 = counts.iter().zip(&mapped.weights).map(|(c, w)| f64::from(*c) * w).sum();
        let k_hat = (expected + 0.5 + 1e-9).floor() as usize;
        if k_hat == 0 {
            continue;
        }
        let mut mass: Vec<(f64, usize)> = (0..order.len())
            .map(|l| {
                let m: f64 = (0..hyps).filter(|h| active[*h][l] > 0).map(|h| mapped.weights[h]).sum();
                (m, l)
            })
            .filter(|(m, _)| *m > 0.0)
            .collect();
        mass.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, l) in mass.iter().take(k_hat) {
            regions.push(Region::new(order[l].clone(), t, next));
        }
    }
    Annotation::with_regions(mapped.recording_id().to_string(), regions)
}

/// Maps labels and votes.
pub fn fuse(set: &HypothesisSet) -> Annotation {
    vote(&map_labels(set))
}

/// Fuses several hypothesis files, each holding annotations for the same
/// set of recordings. Returns one fused annotation per recording.
pub fn fuse_campaign(inputs: &[Vec<Annotation>], weights: Option<Vec<f64>>) -> Result<Vec<Annotation>> {
    if inputs.len() < 2 {
        return Err(Error::InvalidArgument(format!("fusion needs at least 2 inputs, got {}", inputs.len())));
    }
    let keyed: Vec<BTreeMap<String, Annotation>> = inputs
        .iter()
        .map(|anns| {
            let mut by_rec: BTreeMap<String, Annotation> = BTreeMap::new();
            for a in anns {
                by_rec
                    .entry(a.recording_id.clone())
                    .or_insert_with(|| Annotation::new(a.recording_id.clone()))
                    .regions
                    .extend(a.regions.iter().cloned());
            }
            by_rec
        })
        .collect();
    let recs: BTreeSet<&String> = keyed[0].keys().collect();
    for (i, k) in keyed.iter().enumerate().skip(1) {
        let other: BTreeSet<&String> = k.keys().collect();
        if other != recs {
            let missing: Vec<&&String> = recs.difference(&other).collect();
            let extra: Vec<&&String> = other.difference(&recs).collect();
            return Err(Error::RecordingMismatch(format!(
                "input {} lacks {missing:?} and adds {extra:?} relative to input 1",
                i + 1
            )));
        }
    }
    recs.into_iter()
        .map(|rec| {
            let hyps = keyed.iter().map(|k| k[rec].clone()).collect();
            Ok(fuse(&HypothesisSet::new(hyps, weights.clone())?))
        })
        .collect()
}
