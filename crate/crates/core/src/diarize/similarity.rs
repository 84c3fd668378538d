use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default fusion weight on the speaker similarity.
pub const DEFAULT_FUSION_WEIGHT: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityKind {
    Speaker,
    Spatial,
    Fused,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    values: DMatrix<f64>,
    pub kind: SimilarityKind,
}

impl SimilarityMatrix {
    /// Checks shape, symmetry (1e-9) and unit diagonal (1e-9).
    pub fn new(values: DMatrix<f64>, kind: SimilarityKind) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n {
            return Err(Error::Dimension(format!("similarity matrix is {n}x{}", values.ncols())));
        }
        for i in 0..n {
            if (values[(i, i)] - 1.0).abs() > 1e-9 {
                return Err(Error::Contract(format!("diagonal entry {i} is {}", values[(i, i)])));
            }
            for j in 0..i {
                if (values[(i, j)] - values[(j, i)]).abs() > 1e-9 || !values[(i, j)].is_finite() {
                    return Err(Error::Contract(format!("entry ({i}, {j}) breaks symmetry")));
                }
            }
        }
        Ok(Self { values, kind })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }
}

/// Scalar in `[0, 1]` weighting the speaker similarity against the spatial one.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FusionWeight(f64);

impl FusionWeight {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("fusion weight {alpha} outside [0, 1]")));
        }
        Ok(Self(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for FusionWeight {
    fn default() -> Self {
        Self(DEFAULT_FUSION_WEIGHT)
    }
}

pub fn cosine_similarity_matrix(embeddings: &[Vec<f64>], kind: SimilarityKind) -> Result<SimilarityMatrix> {
    let n = embeddings.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 embeddings, got {n}")));
    }
    let d = embeddings[0].len();
    if let Some(i) = embeddings.iter().position(|e| e.len() != d) {
        return Err(Error::Dimension(format!(
            "embedding {i} has dimension {}, expected {d}",
            embeddings[i].len()
        )));
    }
    let norms: Vec<f64> = embeddings.iter().map(|e| e.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    if let Some(index) = norms.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::DegenerateEmbedding { index });
    }
    let mut values = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            let dot: f64 = embeddings[i].iter().zip(&embeddings[j]).map(|(a, b)| a * b).sum();
            let s = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            values[(i, j)] = s;
            values[(j, i)] = s;
        }
    }
    Ok(SimilarityMatrix { values, kind })
}

/// `alpha * speaker + (1 - alpha) * spatial`; the endpoints return the
/// corresponding input unchanged.
pub fn late_fuse(
    speaker: &SimilarityMatrix,
    spatial: &SimilarityMatrix,
    alpha: FusionWeight,
) -> Result<SimilarityMatrix> {
    if speaker.values.shape() != spatial.values.shape() {
        return Err(Error::Dimension(format!(
            "cannot fuse {}x{} with {}x{}",
            speaker.len(),
            speaker.len(),
            spatial.len(),
            spatial.len()
        )));
    }
    let a = alpha.value();
    let values = if a == 1.0 {
        speaker.values.clone()
    } else if a == 0.0 {
        spatial.values.clone()
    } else {
        speaker.values.zip_map(&spatial.values, |x, s| a * x + (1.0 - a) * s)
    };
    Ok(SimilarityMatrix { values, kind: SimilarityKind::Fused })
}
