//! Campaign runner: per-recording diarization over time scales, embedding
//! modes and overlap detectors, fusion across detectors and across
//! subsystems, scoring and reporting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::array::{ArrayGeometry, DirectionGrid, DEFAULT_SPEED_OF_SOUND};
use crate::diarize::{
    assign_primary_labels, cosine_similarity_matrix, default_p_grid, late_fuse, nme_sc, read_segments,
    speaker_name, uniform_segments, ClusterLabels, EmbeddingMatrix, FusionWeight, SegmentList, SimilarityKind,
    STANDARD_TIME_SCALES,
};
use crate::error::{Error, Result};
use crate::fsb::{self, band_frequencies, design_bank, DesignSpec, DesiredResponse, FilterBank};
use crate::fusion::{fuse, HypothesisSet};
use crate::osd::{assign_second_speaker, detect_overlap, load_external_overlaps, AfsbWeights, DecodeParams, LogisticScorer};
use crate::scoring::{compute_der, read_rttm, timeline::Interval, write_rttm, Annotation, DerBreakdown};
use crate::signal::load_wav;
use crate::svector::{svectors_to_text, SVector, SVectorExtractor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    /// Speaker embeddings only.
    Xvector,
    /// Late fusion of speaker and spatial similarities.
    Sxvector,
    /// Spatial embeddings only.
    Svector,
}

impl EmbeddingMode {
    pub fn label(self) -> &'static str {
        match self {
            EmbeddingMode::Xvector => "x-vector",
            EmbeddingMode::Sxvector => "sx-vector",
            EmbeddingMode::Svector => "s-vector",
        }
    }

    fn alpha(self, configured: f64) -> f64 {
        match self {
            EmbeddingMode::Xvector => 1.0,
            EmbeddingMode::Sxvector => configured,
            EmbeddingMode::Svector => 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    pub cache: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("pipeline_out"), workers: 0, cache: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    /// Text file of `x y` lines; the default circular array when absent.
    pub geometry: Option<PathBuf>,
    pub speed_of_sound: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self { geometry: None, speed_of_sound: DEFAULT_SPEED_OF_SOUND }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankConfig {
    /// Precomputed bank; designed from the fields below when absent.
    pub path: Option<PathBuf>,
    pub directions: usize,
    pub order: usize,
    pub band: [f64; 2],
    pub design_bins: usize,
    pub relative_regularization: f64,
    /// Absolute ridge weight, overriding the relative one.
    pub regularization: Option<f64>,
    pub sample_rate: u32,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            path: None,
            directions: 240,
            order: fsb::DEFAULT_ORDER,
            band: [fsb::DEFAULT_BAND.0, fsb::DEFAULT_BAND.1],
            design_bins: fsb::DEFAULT_DESIGN_BINS,
            relative_regularization: fsb::DEFAULT_RELATIVE_REGULARIZATION,
            regularization: None,
            sample_rate: fsb::DEFAULT_SAMPLE_RATE,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    /// `[window, shift]` pairs in seconds.
    pub time_scales: Vec<[f64; 2]>,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self { time_scales: STANDARD_TIME_SCALES.iter().map(|&(w, s)| [w, s]).collect() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub modes: Vec<EmbeddingMode>,
    pub alpha: f64,
    /// Band for s-vector energy; the bank band when absent.
    pub svector_band: Option<[f64; 2]>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            modes: vec![EmbeddingMode::Xvector, EmbeddingMode::Sxvector],
            alpha: crate::diarize::DEFAULT_FUSION_WEIGHT,
            svector_band: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub max_speakers: usize,
    pub p_grid: Vec<f64>,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self { max_speakers: crate::diarize::DEFAULT_MAX_SPEAKERS, p_grid: default_p_grid() }
    }
}

/// One overlap detector: internal (AFSB weights) or external (one overlap
/// file per recording).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OsdVariant {
    pub name: String,
    #[serde(default)]
    pub weights: Option<PathBuf>,
    #[serde(default)]
    pub overlaps: BTreeMap<String, PathBuf>,
    #[serde(default = "default_onset")]
    pub onset: f64,
    #[serde(default = "default_offset")]
    pub offset: f64,
    #[serde(default = "default_min_duration")]
    pub min_on: f64,
    #[serde(default = "default_min_duration")]
    pub min_off: f64,
}

fn default_onset() -> f64 {
    DecodeParams::default().onset
}
fn default_offset() -> f64 {
    DecodeParams::default().offset
}
fn default_min_duration() -> f64 {
    DecodeParams::default().min_on
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OsdConfig {
    pub variants: Vec<OsdVariant>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Fuse each subsystem's outputs over overlap detectors.
    pub across_osd: bool,
    /// Subsystem ids (`S1`, ...) fused in the final system; all when absent.
    pub subsystems: Option<Vec<String>>,
    /// Explicit fusion weights, in input order.
    pub weights: Option<Vec<f64>>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { across_osd: true, subsystems: None, weights: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub collar: f64,
    pub score_overlap: bool,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self { collar: 0.25, score_overlap: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingConfig {
    pub id: String,
    pub wav: PathBuf,
    /// Kaldi segments file giving the speech regions of this recording.
    pub segments: PathBuf,
    /// Speaker embedding files keyed by `window:shift`.
    #[serde(default)]
    pub xvectors: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub array: ArrayConfig,
    #[serde(default)]
    pub bank: BankConfig,
    #[serde(default)]
    pub segmentation: SegmentationConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub clustering: ClusteringConfig,
    #[serde(default)]
    pub osd: OsdConfig,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub scoring: ScoringConfig,
    pub recordings: Vec<RecordingConfig>,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("pipeline config: {e}")))
    }

    /// Parses a config file and resolves relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output.dir);
        self.array.geometry.as_mut().map(fix);
        self.bank.path.as_mut().map(fix);
        for v in &mut self.osd.variants {
            v.weights.as_mut().map(fix);
            v.overlaps.values_mut().for_each(fix);
        }
        for r in &mut self.recordings {
            fix(&mut r.wav);
            fix(&mut r.segments);
            r.xvectors.values_mut().for_each(fix);
            r.reference.as_mut().map(fix);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("# unserializable config: {e}\n"))
    }

    fn needs_xvectors(&self) -> bool {
        self.embedding.modes.iter().any(|m| *m != EmbeddingMode::Svector)
    }

    fn needs_svectors(&self) -> bool {
        self.embedding
            .modes
            .iter()
            .any(|m| m.alpha(self.embedding.alpha) < 1.0)
    }

    fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.recordings.is_empty() {
            problems.push("no recordings configured".to_string());
        }
        if self.segmentation.time_scales.is_empty() {
            problems.push("no time scales configured".to_string());
        }
        if self.embedding.modes.is_empty() {
            problems.push("no embedding modes configured".to_string());
        }
        for [w, s] in &self.segmentation.time_scales {
            if !(*w > 0.0 && *s > 0.0 && s <= w) {
                problems.push(format!("time scale {w}:{s} needs 0 < shift <= window"));
            }
        }
        if FusionWeight::new(self.embedding.alpha).is_err() {
            problems.push(format!("alpha {} outside [0, 1]", self.embedding.alpha));
        }
        let mut names = std::collections::BTreeSet::new();
        for v in &self.osd.variants {
            if !names.insert(v.name.as_str()) || v.name == "none" || v.name == "fusion" {
                problems.push(format!("OSD variant name `{}` is reserved or repeated", v.name));
            }
            if v.weights.is_some() == !v.overlaps.is_empty() {
                problems.push(format!("OSD variant `{}` needs exactly one of `weights` or `overlaps`", v.name));
            }
        }
        let mut ids = std::collections::BTreeSet::new();
        for r in &self.recordings {
            if !ids.insert(r.id.as_str()) {
                problems.push(format!("recording `{}` listed twice", r.id));
            }
        }
        let exists = |p: &Path, what: String, problems: &mut Vec<String>| {
            if !p.is_file() {
                problems.push(format!("missing {what}: {}", p.display()));
            }
        };
        if let Some(p) = &self.array.geometry {
            exists(p, "array geometry".into(), &mut problems);
        }
        if let Some(p) = &self.bank.path {
            exists(p, "filter bank".into(), &mut problems);
        }
        for v in &self.osd.variants {
            if let Some(p) = &v.weights {
                exists(p, format!("AFSB weights of `{}`", v.name), &mut problems);
            } else {
                for r in &self.recordings {
                    match v.overlaps.get(&r.id) {
                        Some(p) => exists(p, format!("overlaps of `{}` for `{}`", v.name, r.id), &mut problems),
                        None => problems.push(format!("OSD variant `{}` has no overlap file for `{}`", v.name, r.id)),
                    }
                }
            }
        }
        for r in &self.recordings {
            exists(&r.wav, format!("audio of `{}`", r.id), &mut problems);
            exists(&r.segments, format!("segments of `{}`", r.id), &mut problems);
            if let Some(p) = &r.reference {
                exists(p, format!("reference of `{}`", r.id), &mut problems);
            }
            if self.needs_xvectors() {
                for scale in &self.segmentation.time_scales {
                    match find_xvectors(r, *scale) {
                        Some(p) => exists(p, format!("x-vectors of `{}` at {}", r.id, scale_label(*scale)), &mut problems),
                        None => problems.push(format!(
                            "recording `{}` has no x-vector file for time scale {}:{}",
                            r.id, scale[0], scale[1]
                        )),
                    }
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("pipeline inputs invalid:\n  {}", problems.join("\n  "))))
        }
    }
}

fn find_xvectors(r: &RecordingConfig, scale: [f64; 2]) -> Option<&PathBuf> {
    r.xvectors.iter().find_map(|(k, p)| {
        crate::diarize::parse_time_scale(k)
            .ok()
            .filter(|(w, s)| (w - scale[0]).abs() < 1e-9 && (s - scale[1]).abs() < 1e-9)
            .map(|_| p)
    })
}

/// `window/shift` with shortest float formatting, e.g. `1/0.5`.
pub fn scale_label(scale: [f64; 2]) -> String {
    format!("{}/{}", scale[0], scale[1])
}

/// One row of the subsystem grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Subsystem {
    pub id: String,
    pub scale: [f64; 2],
    pub mode: EmbeddingMode,
}

/// Column of a subsystem's results: no overlap handling, or one detector.
pub const NO_OSD: &str = "none";
/// Column holding the fusion over detectors.
pub const OSD_FUSION: &str = "fusion";

#[derive(Debug, Clone, Default)]
pub struct PipelineOutcome {
    pub subsystems: Vec<Subsystem>,
    /// Hypotheses keyed by (subsystem id, column), one annotation per
    /// successful recording, in recording order.
    pub hypotheses: BTreeMap<(String, String), Vec<Annotation>>,
    /// Final fusion over subsystems, when at least two take part.
    pub final_fusion: Option<(Vec<String>, Vec<Annotation>)>,
    /// Aggregated scores over recordings with a reference.
    pub scores: BTreeMap<(String, String), DerBreakdown>,
    pub final_score: Option<DerBreakdown>,
    pub failures: Vec<(String, String)>,
    pub report: String,
}

fn hash_bytes(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

struct Shared<'a> {
    cfg: &'a PipelineConfig,
    bank: FilterBank,
    bank_hash: String,
    extractor: Option<SVectorExtractor>,
    detectors: Vec<Option<(crate::osd::AfsbConfig, AfsbWeights)>>,
    cache_dir: Option<PathBuf>,
}

fn load_or_design_bank(cfg: &PipelineConfig, cache_dir: Option<&Path>) -> Result<FilterBank> {
    if let Some(p) = &cfg.bank.path {
        return FilterBank::load(p);
    }
    let geometry = match &cfg.array.geometry {
        Some(p) => ArrayGeometry::load(p, cfg.array.speed_of_sound)?,
        None => ArrayGeometry::uniform_circular(
            crate::array::DEFAULT_UCA_MICS,
            crate::array::DEFAULT_UCA_RADIUS,
            cfg.array.speed_of_sound,
        )?,
    };
    let b = &cfg.bank;
    let grid = DirectionGrid::new(b.directions)?;
    let spec = DesignSpec {
        frequencies: band_frequencies(b.band[0], b.band[1], b.design_bins)?,
        sample_rate: b.sample_rate,
        order: b.order,
        regularization: b
            .regularization
            .unwrap_or_else(|| fsb::relative_regularization(b.relative_regularization, b.directions, b.design_bins)),
        desired: DesiredResponse::for_grid(&grid)?,
        group_delay: fsb::centred_delay(b.order),
    };
    let key = hash_bytes(&[
        geometry.to_text().as_bytes(),
        format!("{}|{:?}|{}|{}|{}|{}", b.directions, spec.frequencies, spec.sample_rate, spec.order, spec.regularization, spec.group_delay)
            .as_bytes(),
    ]);
    let cached = cache_dir.map(|d| d.join(format!("bank-{}.fsb", &key[..16])));
    if let Some(p) = &cached {
        if p.is_file() {
            if let Ok(bank) = FilterBank::load(p) {
                return Ok(bank);
            }
        }
    }
    let bank = design_bank(&geometry, &grid, &spec)?;
    if let Some(p) = &cached {
        bank.save(p)?;
    }
    Ok(bank)
}

/// Results of one recording: (subsystem index, column) -> annotation.
type RecordingResult = BTreeMap<(usize, String), Annotation>;

fn cluster(
    cfg: &PipelineConfig,
    mode: EmbeddingMode,
    xvec: Option<&[Vec<f64>]>,
    svec: Option<&[Vec<f64>]>,
    n: usize,
) -> Result<ClusterLabels> {
    if n < 2 {
        return ClusterLabels::new(&vec![0; n]);
    }
    let alpha = mode.alpha(cfg.embedding.alpha);
    let speaker = || cosine_similarity_matrix(xvec.expect("x-vectors loaded"), SimilarityKind::Speaker);
    let spatial = || cosine_similarity_matrix(svec.expect("s-vectors extracted"), SimilarityKind::Spatial);
    let fused = if alpha == 1.0 {
        speaker()?
    } else if alpha == 0.0 {
        spatial()?
    } else {
        late_fuse(&speaker()?, &spatial()?, FusionWeight::new(alpha)?)?
    };
    nme_sc(&fused, cfg.clustering.max_speakers, &cfg.clustering.p_grid)
}

fn svectors_cached(shared: &Shared, wav_hash: &str, segments: &SegmentList, audio: &crate::signal::MultiChannelAudio) -> Result<Vec<SVector>> {
    let extractor = shared.extractor.as_ref().expect("extractor built");
    let seg_text = segments.to_kaldi();
    let key = hash_bytes(&[
        wav_hash.as_bytes(),
        shared.bank_hash.as_bytes(),
        format!("{:?}", extractor.band()).as_bytes(),
        seg_text.as_bytes(),
    ]);
    let path = shared.cache_dir.as_ref().map(|d| d.join(format!("svec-{}.svec", &key[..24])));
    if let Some(p) = &path {
        if p.is_file() {
            if let Ok(s) = crate::svector::read_svectors(p) {
                if s.len() == segments.len() {
                    return Ok(s);
                }
            }
        }
    }
    let svecs = extractor.extract_segments(audio, segments.intervals())?;
    if let Some(p) = &path {
        std::fs::write(p, svectors_to_text(&svecs)).map_err(|e| Error::io(p, e))?;
    }
    Ok(svecs)
}

fn run_recording(shared: &Shared, subsystems: &[Subsystem], rec: &RecordingConfig) -> Result<RecordingResult> {
    let cfg = shared.cfg;
    let wav_bytes = std::fs::read(&rec.wav).map_err(|e| Error::io(&rec.wav, e))?;
    let wav_hash = hash_bytes(&[&wav_bytes]);
    drop(wav_bytes);
    let audio = load_wav(&rec.wav)?;
    if audio.num_channels() != shared.bank.num_mics() {
        return Err(Error::Dimension(format!(
            "{} channels but the filter bank has {} microphones",
            audio.num_channels(),
            shared.bank.num_mics()
        )));
    }
    let segs_by_rec = read_segments(&rec.segments)?;
    let vad: Vec<Interval> = segs_by_rec
        .get(&rec.id)
        .map(|s| s.intervals().to_vec())
        .ok_or_else(|| Error::RecordingMismatch(format!("segments file has no entries for `{}`", rec.id)))?;
    let vad = crate::scoring::timeline::clip(&crate::scoring::timeline::merge(vad), 0.0, audio.duration());

    let mut overlaps = Vec::with_capacity(cfg.osd.variants.len());
    for (v, det) in cfg.osd.variants.iter().zip(&shared.detectors) {
        let tl = match det {
            Some((acfg, weights)) => {
                let params = DecodeParams { onset: v.onset, offset: v.offset, min_on: v.min_on, min_off: v.min_off };
                detect_overlap(&audio, weights, acfg, &LogisticScorer::from_afsb(weights), &params)?
            }
            None => load_external_overlaps(&v.overlaps[&rec.id])?,
        };
        overlaps.push(tl);
    }

    let mut out = RecordingResult::new();
    let mut per_scale: BTreeMap<String, (SegmentList, Option<Vec<Vec<f64>>>, Option<Vec<Vec<f64>>>)> = BTreeMap::new();
    for (si, sub) in subsystems.iter().enumerate() {
        let key = scale_label(sub.scale);
        if !per_scale.contains_key(&key) {
            let segments = uniform_segments(&rec.id, &vad, sub.scale[0], sub.scale[1])?;
            let xvec = if cfg.needs_xvectors() {
                let path = find_xvectors(rec, sub.scale).expect("validated");
                let m = EmbeddingMatrix::load(path)?;
                if m.len() != segments.len() {
                    return Err(Error::Dimension(format!(
                        "{} has {} rows but time scale {key} yields {} segments",
                        path.display(),
                        m.len(),
                        segments.len()
                    )));
                }
                Some(m.into_rows())
            } else {
                None
            };
            let svec = if cfg.needs_svectors() && !segments.is_empty() {
                let s = svectors_cached(shared, &wav_hash, &segments, &audio)?;
                Some(s.into_iter().map(|v| v.weights().to_vec()).collect())
            } else {
                None
            };
            per_scale.insert(key.clone(), (segments, xvec, svec));
        }
        let (segments, xvec, svec) = &per_scale[&key];
        let labels = cluster(cfg, sub.mode, xvec.as_deref(), svec.as_deref(), segments.len())?;
        let primary = assign_primary_labels(segments, &labels)?;
        // second speakers ranked with speaker embeddings when the mode has them
        let ranking = match sub.mode {
            EmbeddingMode::Svector => svec.as_deref(),
            _ => xvec.as_deref(),
        };
        for (v, tl) in cfg.osd.variants.iter().zip(&overlaps) {
            let ann = match ranking {
                Some(emb) => assign_second_speaker(&primary, tl, segments, &labels, emb, speaker_name)?,
                None => primary.clone(),
            };
            out.insert((si, v.name.clone()), ann);
        }
        out.insert((si, NO_OSD.to_string()), primary);
    }
    Ok(out)
}

fn fuse_recordings(inputs: &[&Vec<Annotation>], weights: Option<Vec<f64>>) -> Result<Vec<Annotation>> {
    let n = inputs[0].len();
    (0..n)
        .map(|r| {
            let hyps = inputs.iter().map(|h| h[r].clone()).collect();
            Ok(fuse(&HypothesisSet::new(hyps, weights.clone())?))
        })
        .collect()
}

/// Runs the campaign described by `cfg` and writes RTTMs, the resolved
/// config and the report under `cfg.output.dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output.dir).map_err(|e| Error::io(&cfg.output.dir, e))?;
    let cache_dir = if cfg.output.cache {
        let d = cfg.output.dir.join("cache");
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Some(d)
    } else {
        None
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.output.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    pool.install(|| run_inner(cfg, cache_dir))
}

fn run_inner(cfg: &PipelineConfig, cache_dir: Option<PathBuf>) -> Result<PipelineOutcome> {
    let bank = load_or_design_bank(cfg, cache_dir.as_deref())?;
    let mut bank_bytes = Vec::new();
    bank.write_to(&mut bank_bytes).map_err(|e| Error::io("<bank>", e))?;
    let bank_hash = hash_bytes(&[&bank_bytes]);
    let band = cfg.embedding.svector_band.unwrap_or(cfg.bank.band);
    let extractor = if cfg.needs_svectors() { Some(SVectorExtractor::new(&bank, Some((band[0], band[1])))?) } else { None };
    let detectors = cfg
        .osd
        .variants
        .iter()
        .map(|v| v.weights.as_ref().map(AfsbWeights::load).transpose())
        .collect::<Result<Vec<_>>>()?;
    let shared = Shared { cfg, bank, bank_hash, extractor, detectors, cache_dir };

    let mut subsystems = Vec::new();
    for mode in &cfg.embedding.modes {
        for scale in &cfg.segmentation.time_scales {
            subsystems.push(Subsystem { id: format!("S{}", subsystems.len() + 1), scale: *scale, mode: *mode });
        }
    }

    let results: Vec<Result<RecordingResult>> =
        cfg.recordings.par_iter().map(|r| run_recording(&shared, &subsystems, r)).collect();
    let mut outcome = PipelineOutcome { subsystems: subsystems.clone(), ..Default::default() };
    let mut ok_recs: Vec<&RecordingConfig> = Vec::new();
    for (rec, res) in cfg.recordings.iter().zip(results) {
        match res {
            Ok(map) => {
                ok_recs.push(rec);
                for ((si, col), ann) in map {
                    outcome.hypotheses.entry((subsystems[si].id.clone(), col)).or_default().push(ann);
                }
            }
            Err(e) => {
                log::error!("recording `{}` failed: {e}", rec.id);
                outcome.failures.push((rec.id.clone(), e.to_string()));
            }
        }
    }

    let osd_names: Vec<String> = cfg.osd.variants.iter().map(|v| v.name.clone()).collect();
    if !ok_recs.is_empty() {
        if cfg.fusion.across_osd && osd_names.len() >= 2 {
            for sub in &subsystems {
                let inputs: Vec<&Vec<Annotation>> =
                    osd_names.iter().map(|n| &outcome.hypotheses[&(sub.id.clone(), n.clone())]).collect();
                let fused = fuse_recordings(&inputs, cfg.fusion.weights.clone().filter(|w| w.len() == inputs.len()))?;
                outcome.hypotheses.insert((sub.id.clone(), OSD_FUSION.to_string()), fused);
            }
        }
        let chosen: Vec<String> = match &cfg.fusion.subsystems {
            Some(ids) => ids.clone(),
            None => subsystems.iter().map(|s| s.id.clone()).collect(),
        };
        if let Some(bad) = chosen.iter().find(|id| !subsystems.iter().any(|s| &s.id == *id)) {
            return Err(Error::InvalidArgument(format!("fusion names unknown subsystem `{bad}`")));
        }
        if chosen.len() >= 2 {
            let best_col = |id: &String| -> String {
                [OSD_FUSION.to_string()]
                    .into_iter()
                    .chain(osd_names.iter().cloned())
                    .find(|c| outcome.hypotheses.contains_key(&(id.clone(), c.clone())))
                    .unwrap_or_else(|| NO_OSD.to_string())
            };
            let inputs: Vec<&Vec<Annotation>> =
                chosen.iter().map(|id| &outcome.hypotheses[&(id.clone(), best_col(id))]).collect();
            let weights = cfg.fusion.weights.clone().filter(|w| w.len() == inputs.len());
            outcome.final_fusion = Some((chosen.clone(), fuse_recordings(&inputs, weights)?));
        }
    }

    // scoring
    let mut references: Vec<Option<Annotation>> = Vec::new();
    for rec in &ok_recs {
        references.push(match &rec.reference {
            Some(p) => {
                let anns = read_rttm(p)?;
                let mut merged = Annotation::new(rec.id.clone());
                for a in anns.into_iter().filter(|a| a.recording_id == rec.id) {
                    merged.regions.extend(a.regions);
                }
                Some(merged.normalized())
            }
            None => None,
        });
    }
    let score_list = |hyps: &[Annotation]| -> Result<Option<DerBreakdown>> {
        let mut s = Vec::new();
        for (h, r) in hyps.iter().zip(&references) {
            if let Some(r) = r {
                s.push(compute_der(r, h, cfg.scoring.collar, cfg.scoring.score_overlap)?);
            }
        }
        Ok(DerBreakdown::total(&s))
    };
    for (key, hyps) in &outcome.hypotheses {
        if let Some(s) = score_list(hyps)? {
            outcome.scores.insert(key.clone(), s);
        }
    }
    if let Some((_, hyps)) = &outcome.final_fusion {
        outcome.final_score = score_list(hyps)?;
    }

    // outputs
    let rttm_dir = cfg.output.dir.join("rttm");
    std::fs::create_dir_all(&rttm_dir).map_err(|e| Error::io(&rttm_dir, e))?;
    for ((id, col), hyps) in &outcome.hypotheses {
        write_rttm(rttm_dir.join(format!("{id}_{col}.rttm")), hyps)?;
    }
    if let Some((_, hyps)) = &outcome.final_fusion {
        write_rttm(rttm_dir.join("final_fusion.rttm"), hyps)?;
    }
    outcome.report = render_report(cfg, &outcome);
    let report_path = cfg.output.dir.join("report.txt");
    std::fs::write(&report_path, &outcome.report).map_err(|e| Error::io(&report_path, e))?;
    let cfg_path = cfg.output.dir.join("resolved_config.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).map_err(|e| Error::io(&cfg_path, e))?;
    Ok(outcome)
}

fn pct(s: Option<&DerBreakdown>, f: impl Fn(&DerBreakdown) -> f64) -> String {
    match s {
        Some(s) if s.total_reference_speech > 0.0 => format!("{:.2}", 100.0 * f(s) / s.total_reference_speech),
        Some(s) => format!("{:.2}", 100.0 * s.der),
        None => "-".to_string(),
    }
}

/// Header comment, a long table with one row per subsystem and detector
/// column, a wide DER table, the final fusion line and failures.
pub fn render_report(cfg: &PipelineConfig, outcome: &PipelineOutcome) -> String {
    let mut r = String::new();
    let _ = writeln!(r, "# beamdiar pipeline report");
    let _ = writeln!(
        r,
        "# Synthetic or user-supplied campaign. Published meeting-corpus DER/DetER figures need the original audio and trained neural models and are not reproduced by this run."
    );
    let _ = writeln!(r, "# resolved configuration:");
    for line in cfg.to_toml().lines() {
        let _ = writeln!(r, "#   {line}");
    }
    let mut cols: Vec<String> = vec![NO_OSD.to_string()];
    cols.extend(cfg.osd.variants.iter().map(|v| v.name.clone()));
    let _ = writeln!(r);
    let _ = writeln!(r, "[subsystems]");
    let _ = writeln!(
        r,
        "{:<6} {:<12} {:<10} {:<12} {:>8} {:>8} {:>8} {:>8}",
        "ID", "time_scale", "embedding", "osd", "DER%", "miss%", "fa%", "conf%"
    );
    for sub in &outcome.subsystems {
        for col in &cols {
            let s = outcome.scores.get(&(sub.id.clone(), col.clone()));
            let _ = writeln!(
                r,
                "{:<6} {:<12} {:<10} {:<12} {:>8} {:>8} {:>8} {:>8}",
                sub.id,
                scale_label(sub.scale),
                sub.mode.label(),
                col,
                pct(s, |s| s.missed_speech + s.false_alarm + s.speaker_confusion),
                pct(s, |s| s.missed_speech),
                pct(s, |s| s.false_alarm),
                pct(s, |s| s.speaker_confusion),
            );
        }
    }
    let _ = writeln!(r);
    let _ = writeln!(r, "[der_table]");
    let mut header = format!("{:<6} {:<14} {:<10} {:>8}", "ID", "Time scales/s", "Embedding", "NME-SC");
    for v in &cfg.osd.variants {
        let _ = write!(header, " {:>10}", v.name);
    }
    let _ = write!(header, " {:>14}", "Fusion(OSD)");
    let _ = writeln!(r, "{header}");
    for sub in &outcome.subsystems {
        let der = |col: &str| pct(outcome.scores.get(&(sub.id.clone(), col.to_string())), |s| {
            s.missed_speech + s.false_alarm + s.speaker_confusion
        });
        let mut line = format!("{:<6} {:<14} {:<10} {:>8}", sub.id, scale_label(sub.scale), sub.mode.label(), der(NO_OSD));
        for v in &cfg.osd.variants {
            let _ = write!(line, " {:>10}", der(&v.name));
        }
        let _ = write!(line, " {:>14}", der(OSD_FUSION));
        let _ = writeln!(r, "{line}");
    }
    match &outcome.final_fusion {
        Some((ids, _)) => {
            let _ = writeln!(
                r,
                "Fusion {}: {}",
                ids.join(" "),
                pct(outcome.final_score.as_ref(), |s| s.missed_speech + s.false_alarm + s.speaker_confusion)
            );
        }
        None => {
            let _ = writeln!(r, "Fusion: -");
        }
    }
    let _ = writeln!(r);
    let _ = writeln!(r, "[failures]");
    if outcome.failures.is_empty() {
        let _ = writeln!(r, "none");
    }
    for (id, e) in &outcome.failures {
        let _ = writeln!(r, "{id}: {}", e.replace('\n', " "));
    }
    r
}
