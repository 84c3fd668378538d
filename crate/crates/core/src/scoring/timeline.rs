//! Interval algebra over sorted, disjoint sets of time intervals (seconds).

use serde::{Deserialize, Serialize};

/// Half-open time span `[onset, offset)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub onset: f64,
    pub offset: f64,
}

impl Interval {
    pub fn new(onset: f64, offset: f64) -> Self {
        Self { onset, offset }
    }

    pub fn duration(&self) -> f64 {
        (self.offset - self.onset).max(0.0)
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.onset && t < self.offset
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.onset.max(other.onset);
        let hi = self.offset.min(other.offset);
        (hi > lo).then_some(Interval::new(lo, hi))
    }

    pub fn overlap(&self, other: &Interval) -> f64 {
        self.intersect(other).map_or(0.0, |i| i.duration())
    }
}

/// Sorts and merges overlapping or touching intervals, dropping empty ones.
pub fn merge(mut intervals: Vec<Interval>) -> Vec<Interval> {
    intervals.retain(|i| i.offset > i.onset);
    intervals.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.offset.total_cmp(&b.offset)));
    let mut out: Vec<Interval> = Vec::with_capacity(intervals.len());
    for iv in intervals {
        match out.last_mut() {
            Some(last) if iv.onset <= last.offset => last.offset = last.offset.max(iv.offset),
            _ => out.push(iv),
        }
    }
    out
}

pub fn union(a: &[Interval], b: &[Interval]) -> Vec<Interval> {
    merge(a.iter().chain(b).copied().collect())
}

/// Intersection of two merged timelines.
pub fn intersection(a: &[Interval], b: &[Interval]) -> Vec<Interval> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        if let Some(x) = a[i].intersect(&b[j]) {
            out.push(x);
        }
        if a[i].offset < b[j].offset {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// `a` minus `b`, both merged.
pub fn difference(a: &[Interval], b: &[Interval]) -> Vec<Interval> {
    let mut out = Vec::new();
    let mut j = 0;
    for iv in a {
        let mut cur = iv.onset;
        while j < b.len() && b[j].offset <= cur {
            j += 1;
        }
        let mut k = j;
        while k < b.len() && b[k].onset < iv.offset {
            if b[k].onset > cur {
                out.push(Interval::new(cur, b[k].onset));
            }
            cur = cur.max(b[k].offset);
            k += 1;
        }
        if cur < iv.offset {
            out.push(Interval::new(cur, iv.offset));
        }
    }
    out
}

pub fn total_duration(intervals: &[Interval]) -> f64 {
    // fold from +0.0: an empty float sum is -0.0
    intervals.iter().map(Interval::duration).fold(0.0, |a, b| a + b)
}

pub fn clip(intervals: &[Interval], lo: f64, hi: f64) -> Vec<Interval> {
    intervals
        .iter()
        .filter_map(|iv| iv.intersect(&Interval::new(lo, hi)))
        .collect()
}

/// Sorted, de-duplicated cut points of a set of intervals.
pub fn boundaries<'a>(intervals: impl IntoIterator<Item = &'a Interval>) -> Vec<f64> {
    let mut b: Vec<f64> = intervals
        .into_iter()
        .flat_map(|iv| [iv.onset, iv.offset])
        .collect();
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}
