#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use beamdiar_core::array::{ArrayGeometry, DirectionGrid};
use beamdiar_core::diarize::{uniform_segments, EmbeddingMatrix};
use beamdiar_core::scoring::write_rttm;
use beamdiar_core::signal::{write_wav, WavEncoding};
use beamdiar_core::simulator::{render, speech_segments, synthetic_embeddings, SceneSpec, SourceKind, SourceSpec};

/// Two white-noise talkers at 60 and 210 degrees, overlapping on [4.5, 6].
pub fn two_talker_scene(grid: &DirectionGrid) -> SceneSpec {
    let talker = |name: &str, idx: usize, on: f64, off: f64| SourceSpec {
        speaker: name.into(),
        angle: grid.angle(idx),
        kind: SourceKind::WhiteNoise,
        onset: on,
        offset: off,
        gain: 1.0,
    };
    let n = grid.len();
    SceneSpec {
        geometry: ArrayGeometry::default(),
        sources: vec![
            talker("alice", n / 6, 0.5, 6.0),
            talker("bob", n * 7 / 12, 4.5, 10.0),
            talker("alice", n / 6, 11.0, 13.0),
        ],
        noise_snr_db: None,
        duration: 13.5,
        sample_rate: 16000,
    }
}

pub struct Campaign {
    pub config_path: PathBuf,
    pub reference: PathBuf,
}

/// Writes audio, segments, per-scale x-vectors, oracle overlaps and a
/// pipeline config into `dir`.
pub fn write_campaign(
    dir: &Path,
    scales: &[(f64, f64)],
    modes: &[&str],
    directions: usize,
    extra_osd: bool,
) -> Campaign {
    let grid = DirectionGrid::new(directions).unwrap();
    let scene = two_talker_scene(&grid);
    let rendered = render(&scene, "rec1", 7).unwrap();
    write_wav(dir.join("rec1.wav"), &rendered.audio, WavEncoding::Float32).unwrap();
    write_rttm(dir.join("rec1.rttm"), &[rendered.reference.clone()]).unwrap();
    std::fs::write(dir.join("rec1.seg"), speech_segments(&rendered.reference).unwrap().to_kaldi()).unwrap();
    rendered.overlaps.save(dir.join("rec1.ovl")).unwrap();
    // a second, coarser detector: oracle overlaps widened by 0.2 s
    let widened: Vec<_> = rendered
        .overlaps
        .intervals()
        .iter()
        .map(|iv| beamdiar_core::scoring::Interval::new((iv.onset - 0.2).max(0.0), iv.offset + 0.2))
        .collect();
    beamdiar_core::osd::OverlapTimeline::new(widened).save(dir.join("rec1_wide.ovl")).unwrap();

    let mut cfg = String::new();
    writeln!(cfg, "[output]\ndir = \"out\"\nworkers = 2\n").unwrap();
    writeln!(cfg, "[bank]\ndirections = {directions}\norder = 64\n").unwrap();
    let ts: Vec<String> = scales.iter().map(|(w, s)| format!("[{w:?}, {s:?}]")).collect();
    writeln!(cfg, "[segmentation]\ntime_scales = [{}]\n", ts.join(", ")).unwrap();
    let ms: Vec<String> = modes.iter().map(|m| format!("\"{m}\"")).collect();
    writeln!(cfg, "[embedding]\nmodes = [{}]\n", ms.join(", ")).unwrap();
    writeln!(cfg, "[[osd.variants]]\nname = \"oracle\"\noverlaps = {{ rec1 = \"rec1.ovl\" }}\n").unwrap();
    if extra_osd {
        writeln!(cfg, "[[osd.variants]]\nname = \"wide\"\noverlaps = {{ rec1 = \"rec1_wide.ovl\" }}\n").unwrap();
    }
    writeln!(cfg, "[[recordings]]\nid = \"rec1\"\nwav = \"rec1.wav\"\nsegments = \"rec1.seg\"\nreference = \"rec1.rttm\"").unwrap();
    let vad = rendered.reference.speech();
    let mut xv = String::new();
    for (i, (w, s)) in scales.iter().enumerate() {
        let segs = uniform_segments("rec1", &vad, *w, *s).unwrap();
        let emb = synthetic_embeddings(&rendered.reference, segs.intervals(), 128, 1.0, 0.1, 100 + i as u64);
        let name = format!("rec1_{w}_{s}.xvec");
        EmbeddingMatrix::new(emb).unwrap().save(dir.join(&name)).unwrap();
        xv.push_str(&format!("\"{w}:{s}\" = \"{name}\", "));
    }
    writeln!(cfg, "xvectors = {{ {} }}", xv.trim_end_matches(", ")).unwrap();
    let config_path = dir.join("campaign.toml");
    std::fs::write(&config_path, cfg).unwrap();
    Campaign { config_path, reference: dir.join("rec1.rttm") }
}
