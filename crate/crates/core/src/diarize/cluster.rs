use nalgebra::{DMatrix, SymmetricEigen};

use super::similarity::SimilarityMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_SPEAKERS: usize = 8;
const KMEANS_ITERATIONS: usize = 100;

/// Binarization fractions 0.05, 0.10, ..., 0.50.
pub fn default_p_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 * 0.05).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabels {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterLabels {
    /// Relabels clusters in order of first appearance. An empty slice gives
    /// an empty labelling with no clusters.
    pub fn new(raw: &[usize]) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Ok(Self { labels, k: map.len() })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_clusters(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Per-fraction diagnostics of the eigengap search.
#[derive(Debug, Clone, PartialEq)]
pub struct NmeTrace {
    pub p: f64,
    pub ratio: f64,
    pub k: usize,
    /// Connected components of the pruned graph.
    pub components: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmeResult {
    pub labels: ClusterLabels,
    pub p: Option<f64>,
    pub trace: Vec<NmeTrace>,
}

fn pruned_affinity(a: &DMatrix<f64>, p: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let keep = ((p * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let mut b = DMatrix::zeros(n, n);
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..n {
        order.sort_by(|&x, &y| a[(i, y)].total_cmp(&a[(i, x)]).then(x.cmp(&y)));
        for &j in &order[..keep] {
            b[(i, j)] = a[(i, j)].max(0.0);
        }
    }
    for i in 0..n {
        for j in 0..i {
            let v = b[(i, j)].max(b[(j, i)]);
            b[(i, j)] = v;
            b[(j, i)] = v;
        }
    }
    b
}

fn laplacian(b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows();
    let mut l = -b.clone();
    for i in 0..n {
        let degree: f64 = b.row(i).iter().sum();
        l[(i, i)] += degree;
    }
    l
}

fn components(b: &DMatrix<f64>) -> usize {
    let n = b.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in 0..i {
            if b[(i, j)] > 0.0 {
                let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    (0..n).filter(|&i| root(&mut parent, i) == i).count()
}

/// Eigenvalues ascending with matching eigenvector columns.
fn sorted_eigen(l: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = l.nrows();
    let eig = SymmetricEigen::try_new(l, 1e-12, 10_000)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite Laplacian eigenvalue".into()));
    }
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
    Ok((values, vectors))
}

/// Largest gap among the first `max_k` and its 1-based position.
fn max_gap(values: &[f64], max_k: usize) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 1);
    for k in 1..=max_k.min(values.len() - 1) {
        let g = values[k] - values[k - 1];
        if g > best.0 {
            best = (g, k);
        }
    }
    best
}

/// Lloyd iterations from a farthest-point initialization. Returns labels in
/// `[0, k)`; clusters that end up empty are dropped by [`ClusterLabels::new`].
pub fn kmeans(points: &[Vec<f64>], k: usize, iterations: usize) -> Vec<usize> {
    let n = points.len();
    if n == 0 || k == 0 {
        return vec![0; n];
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let dim = points[0].len();
    let mean: Vec<f64> = (0..dim)
        .map(|d| points.iter().map(|p| p[d]).sum::<f64>() / n as f64)
        .collect();
    let argmax = |f: &dyn Fn(usize) -> f64| {
        (0..n).fold(0, |best, i| if f(i) > f(best) { i } else { best })
    };
    let mut centres = vec![points[argmax(&|i| dist(&points[i], &mean))].clone()];
    while centres.len() < k {
        let next = argmax(&|i| {
            centres
                .iter()
                .map(|c| dist(&points[i], c))
                .fold(f64::INFINITY, f64::min)
        });
        centres.push(points[next].clone());
    }
    let mut labels = vec![0usize; n];
    for _ in 0..iterations {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for (c, centre) in centres.iter().enumerate() {
                let d = dist(p, centre);
                if d < best.0 {
                    best = (d, c);
                }
            }
            if labels[i] != best.1 {
                labels[i] = best.1;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centres[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

/// Spectral clustering with the cluster count and pruning fraction chosen by
/// the normalized maximum eigengap.
pub fn nme_sc(a: &SimilarityMatrix, max_speakers: usize, p_grid: &[f64]) -> Result<ClusterLabels> {
    nme_sc_detailed(a, max_speakers, p_grid).map(|r| r.labels)
}

pub fn nme_sc_detailed(a: &SimilarityMatrix, max_speakers: usize, p_grid: &[f64]) -> Result<NmeResult> {
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("clustering needs at least 2 segments, got {n}")));
    }
    if max_speakers == 0 {
        return Err(Error::InvalidArgument("max_speakers must be at least 1".into()));
    }
    if p_grid.is_empty() || p_grid.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
        return Err(Error::InvalidArgument("p grid must be non-empty with values in (0, 1]".into()));
    }
    // Pruning levels that split the graph beyond its unpruned components are
    // skipped; they fake a large eigengap. If none survives, all compete.
    let baseline = components(&pruned_affinity(a.values(), 1.0));
    let mut trace = Vec::with_capacity(p_grid.len());
    let mut best: Option<(f64, f64, usize, DMatrix<f64>)> = None;
    let mut fallback: Option<(f64, f64, usize, DMatrix<f64>)> = None;
    for &p in p_grid {
        let b = pruned_affinity(a.values(), p);
        let comps = components(&b);
        let (values, vectors) = sorted_eigen(laplacian(&b))?;
        let top = values[n - 1];
        let (gap, k) = max_gap(&values, max_speakers);
        let ratio = if top > 1e-10 && gap > 1e-12 { p / (gap / top) } else { f64::INFINITY };
        trace.push(NmeTrace { p, ratio, k, components: comps });
        if !ratio.is_finite() {
            continue;
        }
        let slot = if comps <= baseline { &mut best } else { &mut fallback };
        if slot.as_ref().map_or(true, |b| ratio < b.0) {
            *slot = Some((ratio, p, k, vectors));
        }
    }
    let best = best.or(fallback);
    let Some((_, p, k, vectors)) = best else {
        // Every pruned graph is edgeless: each segment stands alone.
        if n <= max_speakers {
            let raw: Vec<usize> = (0..n).collect();
            return Ok(NmeResult { labels: ClusterLabels::new(&raw)?, p: None, trace });
        }
        return Err(Error::Numerical(format!(
            "affinity graph over {n} segments has no edges at any pruning fraction"
        )));
    };
    let points: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let row: Vec<f64> = (0..k).map(|c| vectors[(i, c)]).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter().map(|v| v / norm).collect()
            } else {
                row
            }
        })
        .collect();
    let raw = kmeans(&points, k, KMEANS_ITERATIONS);
    Ok(NmeResult { labels: ClusterLabels::new(&raw)?, p: Some(p), trace })
}
