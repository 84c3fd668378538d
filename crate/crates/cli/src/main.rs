//! `beamdiar`: command-line front end to the diarization toolkit.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use beamdiar_core::array::{ArrayGeometry, DirectionGrid, DEFAULT_SPEED_OF_SOUND};
use beamdiar_core::diarize::{
    assign_primary_labels, cosine_similarity_matrix, default_p_grid, late_fuse, nme_sc, parse_time_scale,
    read_segments, speaker_name, uniform_segments, ClusterLabels, EmbeddingMatrix, FusionWeight, SegmentList,
    SimilarityKind, DEFAULT_FUSION_WEIGHT, DEFAULT_MAX_SPEAKERS,
};
use beamdiar_core::fsb::{
    band_frequencies, design_bank, relative_regularization, DesignSpec, DEFAULT_DESIGN_BINS,
    DEFAULT_ORDER, DEFAULT_RELATIVE_REGULARIZATION, DEFAULT_SAMPLE_RATE,
};
use beamdiar_core::fusion::fuse_campaign;
use beamdiar_core::osd::{
    assign_second_speaker, detect_overlap, detection_metrics, load_external_overlaps, AfsbConfig, AfsbWeights,
    DecodeParams, LogisticScorer, WeightMode,
};
use beamdiar_core::pipeline::{run_pipeline, PipelineConfig};
use beamdiar_core::scoring::{compute_der, read_rttm, write_rttm, DerBreakdown};
use beamdiar_core::signal::{load_wav, write_wav, WavEncoding};
use beamdiar_core::simulator::{render, speech_segments, SceneSpec};
use beamdiar_core::svector::{extract_svectors, read_svectors, write_svectors};
use beamdiar_core::{Error, ErrorClass, FilterBank};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "beamdiar", version, about = "Multi-channel speaker diarization toolkit")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design a filter-and-sum beamformer bank over a direction grid.
    DesignFilters(DesignArgs),
    /// Compute per-segment s-vectors from a multi-channel recording.
    ExtractSvector(ExtractArgs),
    /// Cluster segment embeddings into a speaker-labelled RTTM.
    Diarize(DiarizeArgs),
    /// Detect overlapped speech with AFSB weights.
    Osd(OsdArgs),
    /// Score an overlap timeline against a reference.
    OsdScore(OsdScoreArgs),
    /// Diarization error rate of a hypothesis RTTM.
    Score(ScoreArgs),
    /// Fuse several RTTM hypotheses by overlap-aware voting.
    Fuse(FuseArgs),
    /// Render a synthetic array recording from a scene file.
    Simulate(SimulateArgs),
    /// Run a configured campaign end to end.
    Pipeline(PipelineArgs),
    /// Cut a VAD or segments file into uniform windows.
    Segment(SegmentArgs),
    /// Write randomly initialized AFSB weights.
    InitAfsb(InitAfsbArgs),
}

#[derive(Args)]
struct DesignArgs {
    /// Microphone positions, one `x y` line per mic (metres). Default: 8-mic UCA.
    #[arg(long)]
    geometry: Option<PathBuf>,
    #[arg(long, default_value_t = 240)]
    directions: usize,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    /// Design band `lo:hi` in Hz.
    #[arg(long, default_value = "300:3400")]
    band: String,
    #[arg(long, default_value_t = DEFAULT_DESIGN_BINS)]
    bins: usize,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE)]
    sample_rate: u32,
    /// Ridge weight relative to the Gram diagonal.
    #[arg(long, default_value_t = DEFAULT_RELATIVE_REGULARIZATION)]
    rho: f64,
    /// Absolute ridge weight; overrides `--rho`.
    #[arg(long)]
    regularization: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SPEED_OF_SOUND)]
    speed_of_sound: f64,
    #[arg(long)]
    out: PathBuf,
}

/// Segment selection shared by commands that read a segments file.
#[derive(Args)]
struct SegmentSource {
    /// Kaldi-style segments file.
    #[arg(long)]
    segments: PathBuf,
    /// Recording to use when the file lists several.
    #[arg(long)]
    recording: Option<String>,
    /// Re-cut the segments as VAD into `window:shift` windows.
    #[arg(long)]
    time_scale: Option<String>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    wav: PathBuf,
    #[command(flatten)]
    source: SegmentSource,
    /// Energy band `lo:hi` in Hz.
    #[arg(long, default_value = "300:3400", conflicts_with = "broadband")]
    band: String,
    #[arg(long)]
    broadband: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiarizeArgs {
    #[arg(long)]
    xvec: Option<PathBuf>,
    #[arg(long)]
    svec: Option<PathBuf>,
    /// Weight of the speaker similarity when both embeddings are given.
    #[arg(long, default_value_t = DEFAULT_FUSION_WEIGHT)]
    alpha: f64,
    #[command(flatten)]
    source: SegmentSource,
    #[arg(long, default_value_t = DEFAULT_MAX_SPEAKERS)]
    max_speakers: usize,
    /// Overlap timeline; adds a second speaker inside it.
    #[arg(long)]
    overlaps: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OsdArgs {
    #[arg(long)]
    wav: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long, default_value_t = DecodeParams::default().onset)]
    onset: f64,
    #[arg(long, default_value_t = DecodeParams::default().offset)]
    offset: f64,
    #[arg(long, default_value_t = DecodeParams::default().min_on)]
    min_on: f64,
    #[arg(long, default_value_t = DecodeParams::default().min_off)]
    min_off: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OsdScoreArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    hyp: PathBuf,
    /// Recording length in seconds; defaults to the latest offset of either file.
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    collar: f64,
    /// Score overlapped reference speech (default).
    #[arg(long, overrides_with = "no_overlap")]
    overlap: bool,
    /// Exclude overlapped reference speech from scoring.
    #[arg(long, overrides_with = "overlap")]
    no_overlap: bool,
}

#[derive(Args)]
struct FuseArgs {
    /// Hypothesis RTTMs, best first.
    #[arg(required = true, num_args = 2..)]
    hypotheses: Vec<PathBuf>,
    /// Comma-separated weights, one per hypothesis.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Writes `<prefix>.wav`, `.rttm`, `.ovl` and `.seg`.
    #[arg(long)]
    out_prefix: PathBuf,
    /// Recording id; defaults to the prefix file name.
    #[arg(long)]
    recording: Option<String>,
    /// 16-bit PCM instead of 32-bit float samples.
    #[arg(long)]
    pcm16: bool,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output.workers`.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SegmentArgs {
    #[command(flatten)]
    source: SegmentSource,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InitAfsbArgs {
    #[arg(long, default_value_t = 8)]
    channels: usize,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE)]
    sample_rate: u32,
    /// `shared` or `discriminative`.
    #[arg(long, default_value = "discriminative")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Failure of a command, mapped to an exit status.
enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CmdResult = Result<(), Failure>;

fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

fn parse_band(text: &str) -> Result<(f64, f64), Failure> {
    let parsed = text
        .split_once(':')
        .and_then(|(a, b)| Some((a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?)));
    match parsed {
        Some((lo, hi)) if lo >= 0.0 && hi > lo => Ok((lo, hi)),
        _ => usage(format!("band `{text}` is not `lo:hi` with 0 <= lo < hi")),
    }
}

fn load_segments(src: &SegmentSource) -> Result<SegmentList, Failure> {
    let mut all = read_segments(&src.segments)?;
    let list = match &src.recording {
        Some(id) => match all.remove(id) {
            Some(l) => l,
            None => return usage(format!("recording `{id}` not in {}", src.segments.display())),
        },
        None if all.len() == 1 => all.into_values().next().expect("one entry"),
        None if all.is_empty() => return Err(Error::EmptyInput(format!("{} has no segments", src.segments.display())).into()),
        None => {
            let ids: Vec<_> = all.keys().cloned().collect();
            return usage(format!("segments file lists several recordings ({}); pass --recording", ids.join(", ")));
        }
    };
    match &src.time_scale {
        Some(ts) => {
            let (w, s) = parse_time_scale(ts)?;
            Ok(uniform_segments(&list.recording_id, list.intervals(), w, s)?)
        }
        None => Ok(list),
    }
}

fn design_filters(a: DesignArgs) -> CmdResult {
    let geometry = match &a.geometry {
        Some(p) => ArrayGeometry::load(p, a.speed_of_sound)?,
        None => ArrayGeometry::uniform_circular(
            beamdiar_core::array::DEFAULT_UCA_MICS,
            beamdiar_core::array::DEFAULT_UCA_RADIUS,
            a.speed_of_sound,
        )?,
    };
    let grid = DirectionGrid::new(a.directions)?;
    let (lo, hi) = parse_band(&a.band)?;
    let mut spec = DesignSpec::new(&grid, a.order, a.sample_rate)?;
    spec.frequencies = band_frequencies(lo, hi, a.bins)?;
    spec.regularization = a
        .regularization
        .unwrap_or_else(|| relative_regularization(a.rho, a.directions, a.bins));
    info!("designing {} beams, {} mics, {} taps", a.directions, geometry.num_mics(), a.order);
    design_bank(&geometry, &grid, &spec)?.save(&a.out)?;
    Ok(())
}

fn extract_svector(a: ExtractArgs) -> CmdResult {
    let bank = FilterBank::load(&a.bank)?;
    let audio = load_wav(&a.wav)?;
    let segments = load_segments(&a.source)?;
    let band = if a.broadband { None } else { Some(parse_band(&a.band)?) };
    let svectors = extract_svectors(&audio, &bank, segments.intervals(), band)?;
    info!("{} s-vectors of dimension {}", svectors.len(), bank.num_directions());
    write_svectors(&a.out, &svectors)?;
    Ok(())
}

fn diarize(a: DiarizeArgs) -> CmdResult {
    if a.xvec.is_none() && a.svec.is_none() {
        return usage("diarize needs --xvec, --svec or both");
    }
    let segments = load_segments(&a.source)?;
    let load_rows = |p: &Option<PathBuf>, what: &str| -> Result<Option<Vec<Vec<f64>>>, Failure> {
        let Some(p) = p else { return Ok(None) };
        let rows = if what == "s-vector" {
            read_svectors(p)?.into_iter().map(|s| s.weights().to_vec()).collect()
        } else {
            EmbeddingMatrix::load(p)?.into_rows()
        };
        if rows.len() != segments.len() {
            return Err(Error::Dimension(format!(
                "{} has {} {what} rows for {} segments",
                p.display(),
                rows.len(),
                segments.len()
            ))
            .into());
        }
        Ok(Some(rows))
    };
    let xvec = load_rows(&a.xvec, "x-vector")?;
    let svec = load_rows(&a.svec, "s-vector")?;
    let labels = if segments.len() < 2 {
        ClusterLabels::new(&vec![0; segments.len()])?
    } else {
        let speaker = xvec.as_ref().map(|r| cosine_similarity_matrix(r, SimilarityKind::Speaker)).transpose()?;
        let spatial = svec.as_ref().map(|r| cosine_similarity_matrix(r, SimilarityKind::Spatial)).transpose()?;
        let affinity = match (speaker, spatial) {
            (Some(x), Some(s)) => late_fuse(&x, &s, FusionWeight::new(a.alpha)?)?,
            (Some(x), None) => x,
            (None, Some(s)) => s,
            (None, None) => unreachable!("checked above"),
        };
        nme_sc(&affinity, a.max_speakers, &default_p_grid())?
    };
    info!("{} segments in {} clusters", segments.len(), labels.num_clusters());
    let mut annotation = assign_primary_labels(&segments, &labels)?;
    if let Some(path) = &a.overlaps {
        let overlaps = load_external_overlaps(path)?;
        let rows = xvec.as_ref().or(svec.as_ref()).expect("one embedding present");
        annotation = assign_second_speaker(&annotation, &overlaps, &segments, &labels, rows, speaker_name)?;
    }
    write_rttm(&a.out, &[annotation])?;
    Ok(())
}

fn osd(a: OsdArgs) -> CmdResult {
    let audio = load_wav(&a.wav)?;
    let (config, weights) = AfsbWeights::load(&a.weights)?;
    let params = DecodeParams { onset: a.onset, offset: a.offset, min_on: a.min_on, min_off: a.min_off };
    let timeline = detect_overlap(&audio, &weights, &config, &LogisticScorer::from_afsb(&weights), &params)?;
    info!("{} overlap regions, {:.2} s", timeline.intervals().len(), timeline.duration());
    timeline.save(&a.out)?;
    Ok(())
}

fn osd_score(a: OsdScoreArgs) -> CmdResult {
    let reference = load_external_overlaps(&a.reference)?;
    let hypothesis = load_external_overlaps(&a.hyp)?;
    let end = |t: &beamdiar_core::osd::OverlapTimeline| t.intervals().last().map_or(0.0, |iv| iv.offset);
    let total = a.duration.unwrap_or_else(|| end(&reference).max(end(&hypothesis)));
    let m = detection_metrics(&reference, &hypothesis, total)?;
    if let Some(note) = &m.note {
        warn!("{note}");
    }
    println!("DetER     {:.2}%", 100.0 * m.deter);
    println!("accuracy  {:.2}%", 100.0 * m.accuracy);
    println!("precision {:.2}%", 100.0 * m.precision);
    println!("recall    {:.2}%", 100.0 * m.recall);
    println!("missed {:.3} s, false alarm {:.3} s, reference {:.3} s", m.missed, m.false_alarm, m.reference_duration);
    Ok(())
}

fn print_der(name: &str, d: &DerBreakdown) {
    let pct = |v: f64| if d.total_reference_speech > 0.0 { 100.0 * v / d.total_reference_speech } else { 0.0 };
    println!(
        "{name:<16} DER {:6.2}%  miss {:6.2}%  fa {:6.2}%  conf {:6.2}%  scored {:.3} s",
        d.der_percent(),
        pct(d.missed_speech),
        pct(d.false_alarm),
        pct(d.speaker_confusion),
        d.total_reference_speech
    );
}

fn score(a: ScoreArgs) -> CmdResult {
    let reference = read_rttm(&a.reference)?;
    let hypothesis = read_rttm(&a.hyp)?;
    let score_overlap = !a.no_overlap;
    let mut all = Vec::new();
    for r in &reference {
        let h = hypothesis
            .iter()
            .find(|h| h.recording_id == r.recording_id)
            .cloned()
            .unwrap_or_else(|| {
                warn!("no hypothesis for `{}`; scoring as empty", r.recording_id);
                beamdiar_core::scoring::Annotation::new(r.recording_id.clone())
            });
        let d = compute_der(r, &h, a.collar, score_overlap)?;
        print_der(&r.recording_id, &d);
        all.push(d);
    }
    for h in &hypothesis {
        if !reference.iter().any(|r| r.recording_id == h.recording_id) {
            warn!("hypothesis recording `{}` has no reference; ignored", h.recording_id);
        }
    }
    if let Some(total) = DerBreakdown::total(&all) {
        print_der("OVERALL", &total);
    }
    Ok(())
}

fn fuse(a: FuseArgs) -> CmdResult {
    if let Some(w) = &a.weights {
        if w.len() != a.hypotheses.len() {
            return usage(format!("{} weights for {} hypotheses", w.len(), a.hypotheses.len()));
        }
    }
    let inputs = a.hypotheses.iter().map(read_rttm).collect::<Result<Vec<_>, _>>()?;
    write_rttm(&a.out, &fuse_campaign(&inputs, a.weights)?)?;
    Ok(())
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn simulate(a: SimulateArgs) -> CmdResult {
    let scene = SceneSpec::load(&a.scene)?;
    let id = match a.recording {
        Some(id) => id,
        None => match a.out_prefix.file_name() {
            Some(n) => n.to_string_lossy().into_owned(),
            None => return usage("--out-prefix needs a file name"),
        },
    };
    let rendered = render(&scene, &id, a.seed)?;
    if let Some(dir) = a.out_prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let encoding = if a.pcm16 { WavEncoding::Pcm16 } else { WavEncoding::Float32 };
    write_wav(with_extension(&a.out_prefix, "wav"), &rendered.audio, encoding)?;
    write_rttm(with_extension(&a.out_prefix, "rttm"), &[rendered.reference.clone()])?;
    rendered.overlaps.save(with_extension(&a.out_prefix, "ovl"))?;
    let seg_path = with_extension(&a.out_prefix, "seg");
    let text = if rendered.reference.is_empty() { String::new() } else { speech_segments(&rendered.reference)?.to_kaldi() };
    std::fs::write(&seg_path, text).map_err(|e| Error::io(&seg_path, e))?;
    Ok(())
}

fn pipeline(a: PipelineArgs) -> CmdResult {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Some(w) = a.workers {
        cfg.output.workers = w;
    }
    if let Some(d) = a.out_dir {
        cfg.output.dir = d;
    }
    let outcome = run_pipeline(&cfg)?;
    print!("{}", outcome.report);
    for (rec, err) in &outcome.failures {
        warn!("{rec}: {err}");
    }
    Ok(())
}

fn segment(a: SegmentArgs) -> CmdResult {
    if a.source.time_scale.is_none() {
        return usage("segment needs --time-scale");
    }
    let segments = load_segments(&a.source)?;
    std::fs::write(&a.out, segments.to_kaldi()).map_err(|e| Error::io(&a.out, e))?;
    Ok(())
}

fn init_afsb(a: InitAfsbArgs) -> CmdResult {
    let weight_mode = match a.mode.as_str() {
        "shared" => WeightMode::Shared,
        "discriminative" => WeightMode::Discriminative,
        other => return usage(format!("unknown AFSB mode `{other}`")),
    };
    let config = AfsbConfig { channels: a.channels, sample_rate: a.sample_rate, weight_mode, ..AfsbConfig::default() };
    AfsbWeights::init(&config, a.seed)?.save(&config, &a.out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::DesignFilters(a) => design_filters(a),
        Command::ExtractSvector(a) => extract_svector(a),
        Command::Diarize(a) => diarize(a),
        Command::Osd(a) => osd(a),
        Command::OsdScore(a) => osd_score(a),
        Command::Score(a) => score(a),
        Command::Fuse(a) => fuse(a),
        Command::Simulate(a) => simulate(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Segment(a) => segment(a),
        Command::InitAfsb(a) => init_afsb(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            match e.class() {
                ErrorClass::Data => ExitCode::from(EXIT_DATA),
                ErrorClass::Numerical => ExitCode::from(EXIT_NUMERICAL),
            }
        }
    }
}
