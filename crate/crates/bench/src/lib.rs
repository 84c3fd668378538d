//! Criterion benchmarks for the diarization toolkit; see `benches/`.
