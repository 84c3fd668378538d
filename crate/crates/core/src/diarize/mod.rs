//! Segmentation, embedding similarity, clustering and label assignment.

mod cluster;
mod embedding;
mod labels;
mod segments;
mod similarity;

pub use cluster::{default_p_grid, kmeans, nme_sc, nme_sc_detailed, ClusterLabels, NmeResult, NmeTrace, DEFAULT_MAX_SPEAKERS};
pub use embedding::EmbeddingMatrix;
pub use labels::{assign_primary_labels, assign_primary_labels_with, speaker_name};
pub use segments::{parse_segments, parse_time_scale, read_segments, uniform_segments, SegmentList, STANDARD_TIME_SCALES};
pub use similarity::{
    cosine_similarity_matrix, late_fuse, FusionWeight, SimilarityKind, SimilarityMatrix, DEFAULT_FUSION_WEIGHT,
};
