use std::path::Path;
use std::process::{Command, Output};

use beamdiar_core::diarize::{read_segments, EmbeddingMatrix};
use beamdiar_core::scoring::read_rttm;
use beamdiar_core::simulator::synthetic_embeddings;

fn beamdiar(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamdiar"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = beamdiar(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    beamdiar(dir, args).status.code().expect("exit status")
}

const SCENE: &str = "duration 13.5\nsource alice 60 noise 0.5 6\nsource bob 210 noise 4.5 10\nsource alice 60 noise 11 13\n";

fn simulate(dir: &Path) {
    std::fs::write(dir.join("scene.txt"), SCENE).unwrap();
    ok(dir, &["simulate", "--scene", "scene.txt", "--seed", "3", "--out-prefix", "rec"]);
    for ext in ["wav", "rttm", "ovl", "seg"] {
        assert!(dir.join(format!("rec.{ext}")).exists(), "rec.{ext}");
    }
}

fn overall_der(report: &str) -> f64 {
    report
        .lines()
        .find(|l| l.starts_with("OVERALL"))
        .and_then(|l| l.split_whitespace().nth(2))
        .and_then(|v| v.trim_end_matches('%').parse().ok())
        .unwrap_or_else(|| panic!("no OVERALL line in {report}"))
}

#[test]
fn diarization_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    simulate(d);
    assert_eq!(std::fs::read_to_string(d.join("rec.ovl")).unwrap(), "4.500 6.000\n");
    ok(d, &["design-filters", "--directions", "24", "--order", "32", "--out", "bank.fsb"]);
    let bank = std::fs::read(d.join("bank.fsb")).unwrap();
    assert_eq!(&bank[..4], b"FSB1");
    assert_eq!(bank.len(), 16 + 24 * 8 * 32 * 8);

    let scale = ["--segments", "rec.seg", "--time-scale", "1.5:0.75"];
    ok(d, &[&["segment"][..], &scale, &["--out", "uni.seg"]].concat());
    let uni = read_segments(d.join("uni.seg")).unwrap().remove("rec").unwrap();
    ok(d, &[&["extract-svector", "--bank", "bank.fsb", "--wav", "rec.wav"][..], &scale, &["--out", "rec.svec"]].concat());
    let svec = std::fs::read_to_string(d.join("rec.svec")).unwrap();
    assert_eq!(svec.lines().next().unwrap(), format!("{} 24", uni.len()));

    let reference = read_rttm(d.join("rec.rttm")).unwrap().remove(0);
    let xvec = synthetic_embeddings(&reference, uni.intervals(), 64, 1.0, 0.1, 11);
    EmbeddingMatrix::new(xvec).unwrap().save(d.join("rec.xvec")).unwrap();

    let score = |hyp: &str| {
        overall_der(&ok(d, &["score", "--ref", "rec.rttm", "--hyp", hyp, "--collar", "0.25", "--overlap"]))
    };
    ok(d, &[&["diarize", "--xvec", "rec.xvec", "--overlaps", "rec.ovl"][..], &scale, &["--out", "x.rttm"]].concat());
    assert!(score("x.rttm") <= 2.0);
    let fused = ["diarize", "--xvec", "rec.xvec", "--svec", "rec.svec", "--alpha", "0.95", "--overlaps", "rec.ovl"];
    ok(d, &[&fused[..], &scale, &["--out", "sx.rttm"]].concat());
    assert!(score("sx.rttm") <= 2.0);
    // spatial-only clustering is not held to the bound
    ok(d, &[&["diarize", "--svec", "rec.svec"][..], &scale, &["--out", "s.rttm"]].concat());
    assert!(score("s.rttm").is_finite());
}

#[test]
fn scoring_and_fusion_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    simulate(d);
    let self_score = ok(d, &["score", "--ref", "rec.rttm", "--hyp", "rec.rttm"]);
    assert!(self_score.contains("DER   0.00%"), "{self_score}");
    ok(d, &["fuse", "--out", "fused.rttm", "rec.rttm", "rec.rttm", "rec.rttm", "--weights", "0.5,0.3,0.2"]);
    let fused = ok(d, &["score", "--ref", "rec.rttm", "--hyp", "fused.rttm", "--no-overlap"]);
    assert!(fused.contains("DER   0.00%"), "{fused}");
    let osd = ok(d, &["osd-score", "--ref", "rec.ovl", "--hyp", "rec.ovl", "--duration", "13.5"]);
    assert!(osd.contains("DetER     0.00%") && osd.contains("recall    100.00%"), "{osd}");
}

#[test]
fn afsb_detector_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("scene.txt"), "duration 1\nsource a 0 noise 0 1\n").unwrap();
    ok(d, &["simulate", "--scene", "scene.txt", "--out-prefix", "short", "--pcm16"]);
    ok(d, &["init-afsb", "--seed", "1", "--out", "w.afsb"]);
    assert_eq!(&std::fs::read(d.join("w.afsb")).unwrap()[..4], b"AFSB");
    ok(d, &["osd", "--wav", "short.wav", "--weights", "w.afsb", "--out", "short.ovl"]);
    let text = std::fs::read_to_string(d.join("short.ovl")).unwrap();
    assert!(text.lines().all(|l| l.split_whitespace().count() == 2));
    // weights for a 4-mic array do not fit 8-channel audio
    ok(d, &["init-afsb", "--channels", "4", "--out", "w4.afsb"]);
    assert_eq!(code(d, &["osd", "--wav", "short.wav", "--weights", "w4.afsb", "--out", "x.ovl"]), 2);
}

#[test]
fn pipeline_command_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    simulate(d);
    let cfg = "[output]\ndir = \"out\"\nworkers = 1\n\n[bank]\ndirections = 24\norder = 32\n\n\
               [segmentation]\ntime_scales = [[1.5, 0.75]]\n\n[embedding]\nmodes = [\"svector\"]\n\n\
               [[osd.variants]]\nname = \"oracle\"\noverlaps = { rec = \"rec.ovl\" }\n\n\
               [[recordings]]\nid = \"rec\"\nwav = \"rec.wav\"\nsegments = \"rec.seg\"\nreference = \"rec.rttm\"\n";
    std::fs::write(d.join("campaign.toml"), cfg).unwrap();
    let report = ok(d, &["pipeline", "--config", "campaign.toml"]);
    assert!(report.contains("[der_table]"), "{report}");
    assert!(d.join("out/report.txt").exists());
    assert!(d.join("out/rttm/S1_oracle.rttm").exists());
    assert!(d.join("out/resolved_config.toml").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(d, &[]), 1);
    assert_eq!(code(d, &["score", "--bogus"]), 1);
    assert_eq!(code(d, &["--help"]), 0);
    assert_eq!(code(d, &["score", "--ref", "missing.rttm", "--hyp", "missing.rttm"]), 2);
    std::fs::write(d.join("a.seg"), "u1 r 0 1\nu2 r 1 2\nu3 r 2 3\n").unwrap();
    assert_eq!(code(d, &["diarize", "--segments", "a.seg", "--out", "o.rttm"]), 1);
    // orthogonal embeddings leave the pruned graph without edges
    std::fs::write(d.join("a.xvec"), "3 3\n1 0 0\n0 1 0\n0 0 1\n").unwrap();
    let args = ["diarize", "--xvec", "a.xvec", "--segments", "a.seg", "--max-speakers", "2", "--out", "o.rttm"];
    assert_eq!(code(d, &args), 3);
    std::fs::write(d.join("b.xvec"), "2 3\n1 0 0\n0 1 0\n").unwrap();
    assert_eq!(code(d, &["diarize", "--xvec", "b.xvec", "--segments", "a.seg", "--out", "o.rttm"]), 2);
    assert_eq!(code(d, &["fuse", "--out", "f.rttm", "x.rttm", "y.rttm", "--weights", "1"]), 1);
}
