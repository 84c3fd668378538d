//! Synthetic far-field scenes: plane-wave sources rendered onto an array
//! with fractional delays, optional spatially white noise, and the ground
//! truth speaker and overlap timelines.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::array::ArrayGeometry;
use crate::diarize::SegmentList;
use crate::error::{Error, Result};
use crate::osd::OverlapTimeline;
use crate::scoring::timeline::Interval;
use crate::scoring::{Annotation, Region};
use crate::signal::{load_wav, MultiChannelAudio};

/// Half length of the fractional-delay kernel; the kernel has `2 * HALF` taps.
const SINC_HALF: i64 = 32;
const KAISER_BETA: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    /// Sinusoid at the given frequency in Hz, amplitude `gain`.
    Tone(f64),
    /// Unit-variance Gaussian white noise scaled by `gain`.
    WhiteNoise,
    /// First channel of a WAV file at the scene's sample rate, looped to fill
    /// the active interval.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub speaker: String,
    /// Arrival azimuth in radians.
    pub angle: f64,
    pub kind: SourceKind,
    pub onset: f64,
    pub offset: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub geometry: ArrayGeometry,
    pub sources: Vec<SourceSpec>,
    /// Source-to-noise ratio of the added per-channel white noise.
    pub noise_snr_db: Option<f64>,
    pub duration: f64,
    pub sample_rate: u32,
}

/// Output of [`render`].
#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub audio: MultiChannelAudio,
    pub reference: Annotation,
    pub overlaps: OverlapTimeline,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || self.sample_rate == 0 {
            return Err(Error::InvalidArgument("scene needs positive duration and sample rate".into()));
        }
        for (i, s) in self.sources.iter().enumerate() {
            if !(s.onset >= 0.0 && s.offset > s.onset && s.offset <= self.duration + 1e-9) {
                return Err(Error::InvalidArgument(format!(
                    "source {i}: interval [{}, {}] not within [0, {}]",
                    s.onset, s.offset, self.duration
                )));
            }
            if !(s.gain > 0.0) {
                return Err(Error::InvalidArgument(format!("source {i}: gain must be positive")));
            }
            if let SourceKind::Tone(f) = s.kind {
                if !(f > 0.0 && f < f64::from(self.sample_rate) / 2.0) {
                    return Err(Error::InvalidArgument(format!(
                        "source {i}: tone frequency {f} Hz outside (0, Nyquist)"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parses a scene description. One directive per line, `#` comments:
    ///
    /// ```text
    /// sample_rate 16000
    /// duration 10
    /// speed_of_sound 343
    /// uca 8 0.0425                 # or one `mic x y` line per microphone
    /// source <spk> <azimuth-deg> tone <hz> <onset> <offset> [gain]
    /// source <spk> <azimuth-deg> noise <onset> <offset> [gain]
    /// source <spk> <azimuth-deg> file <path> <onset> <offset> [gain]
    /// noise <snr-db>
    /// ```
    ///
    /// Relative file paths resolve against `base_dir`. Without `mic`/`uca`
    /// lines the default 8-mic circular array is used.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut sample_rate = 16000u32;
        let mut duration = None;
        let mut speed = crate::array::DEFAULT_SPEED_OF_SOUND;
        let mut mics: Vec<[f64; 2]> = Vec::new();
        let mut uca: Option<(usize, f64)> = None;
        let mut sources = Vec::new();
        let mut noise = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let err = |message: String| Error::Parse { line: line_no, message };
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("expected a number, got `{s}`")));
            let want = |n: usize| {
                if f.len() == n {
                    Ok(())
                } else {
                    Err(err(format!("`{}` takes {} argument(s)", f[0], n - 1)))
                }
            };
            match f[0] {
                "sample_rate" => {
                    want(2)?;
                    sample_rate = f[1].parse().map_err(|_| err("invalid sample rate".into()))?;
                }
                "duration" => {
                    want(2)?;
                    duration = Some(num(f[1])?);
                }
                "speed_of_sound" => {
                    want(2)?;
                    speed = num(f[1])?;
                }
                "mic" => {
                    want(3)?;
                    mics.push([num(f[1])?, num(f[2])?]);
                }
                "uca" => {
                    want(3)?;
                    let count = f[1].parse().map_err(|_| err("invalid mic count".into()))?;
                    uca = Some((count, num(f[2])?));
                }
                "noise" => {
                    want(2)?;
                    noise = Some(num(f[1])?);
                }
                "source" => {
                    if f.len() < 5 {
                        return Err(err("source needs speaker, azimuth and kind".into()));
                    }
                    let speaker = f[1].to_string();
                    let angle = num(f[2])?.to_radians();
                    let (kind, rest) = match f[3] {
                        "tone" => {
                            let hz = num(f.get(4).copied().unwrap_or(""))?;
                            (SourceKind::Tone(hz), &f[5..])
                        }
                        "noise" => (SourceKind::WhiteNoise, &f[4..]),
                        "file" => (SourceKind::File(base_dir.join(f[4])), &f[5..]),
                        other => return Err(err(format!("unknown source kind `{other}`"))),
                    };
                    if !(rest.len() == 2 || rest.len() == 3) {
                        return Err(err("source needs `<onset> <offset> [gain]`".into()));
                    }
                    sources.push(SourceSpec {
                        speaker,
                        angle,
                        kind,
                        onset: num(rest[0])?,
                        offset: num(rest[1])?,
                        gain: rest.get(2).map(|g| num(g)).transpose()?.unwrap_or(1.0),
                    });
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }
        let geometry = match (uca, mics.is_empty()) {
            (Some(_), false) => {
                return Err(Error::Format("scene mixes `uca` and `mic` directives".into()))
            }
            (Some((m, r)), true) => ArrayGeometry::uniform_circular(m, r, speed)?,
            (None, false) => ArrayGeometry::new(mics, speed)?,
            (None, true) => ArrayGeometry::uniform_circular(
                crate::array::DEFAULT_UCA_MICS,
                crate::array::DEFAULT_UCA_RADIUS,
                speed,
            )?,
        };
        let duration = duration.ok_or_else(|| Error::Format("scene lacks a `duration` directive".into()))?;
        let scene = Self {
            geometry,
            sources,
            noise_snr_db: noise,
            duration,
            sample_rate,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Speaker timelines implied by the source intervals.
    pub fn reference(&self, recording_id: &str) -> Annotation {
        Annotation::with_regions(
            recording_id,
            self.sources
                .iter()
                .map(|s| Region::new(s.speaker.clone(), s.onset, s.offset))
                .collect(),
        )
    }
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Kaiser-windowed sinc taps for a delay of `frac` samples in `[0, 1)`;
/// tap `i` (for `i` in `-HALF+1..=HALF`) weights input sample `n - i`.
fn fractional_delay_kernel(frac: f64) -> Vec<f64> {
    let radius = SINC_HALF as f64;
    let norm = bessel_i0(KAISER_BETA);
    (-SINC_HALF + 1..=SINC_HALF)
        .map(|i| {
            let u = i as f64 - frac;
            let sinc = if u.abs() < 1e-12 { 1.0 } else { (PI * u).sin() / (PI * u) };
            let r = (u / radius).clamp(-1.0, 1.0);
            sinc * bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm
        })
        .collect()
}

fn source_samples(
    source: &SourceSpec,
    index: usize,
    seed: u64,
    start: i64,
    len: usize,
    sample_rate: u32,
) -> Result<Vec<f64>> {
    match &source.kind {
        SourceKind::WhiteNoise => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index as u64 + 1);
            Ok((0..len)
                .map(|_| source.gain * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect::<Vec<f64>>())
        }
        SourceKind::File(path) => {
            let audio = load_wav(path)?;
            if audio.sample_rate() != sample_rate {
                return Err(Error::InvalidArgument(format!(
                    "{}: sample rate {} differs from scene rate {sample_rate}",
                    path.display(),
                    audio.sample_rate()
                )));
            }
            let x = audio.channel(0);
            Ok((0..len)
                .map(|i| {
                    let n = (start + i as i64).rem_euclid(x.len() as i64) as usize;
                    source.gain * x[n]
                })
                .collect())
        }
        SourceKind::Tone(_) => unreachable!("tones are rendered in closed form"),
    }
}

/// Renders the scene. Identical `(scene, seed)` pairs give bit-identical
/// audio.
pub fn render(scene: &SceneSpec, recording_id: &str, seed: u64) -> Result<RenderedScene> {
    scene.validate()?;
    let fs = f64::from(scene.sample_rate);
    let total = (scene.duration * fs).round() as usize;
    let mics = scene.geometry.num_mics();
    let mut mix = DMatrix::<f64>::zeros(total, mics);
    let mut active = vec![false; total];

    for (index, source) in scene.sources.iter().enumerate() {
        let n_on = (source.onset * fs).round() as usize;
        let n_off = ((source.offset * fs).round() as usize).min(total);
        if n_off <= n_on {
            continue;
        }
        active[n_on..n_off].iter_mut().for_each(|a| *a = true);
        let delays = scene.geometry.delays(source.angle);
        match source.kind {
            SourceKind::Tone(freq) => {
                for (m, tau) in delays.iter().enumerate() {
                    for n in n_on..n_off {
                        let t = n as f64 / fs - tau;
                        mix[(n, m)] += source.gain * (2.0 * PI * freq * t).cos();
                    }
                }
            }
            _ => {
                let margin = SINC_HALF + 2 + (scene.geometry.delays(source.angle).iter().fold(0.0f64, |a, t| a.max(t.abs())) * fs).ceil() as i64;
                let start = n_on as i64 - margin;
                let len = (n_off - n_on) + 2 * margin as usize;
                let s = source_samples(source, index, seed, start, len, scene.sample_rate)?;
                for (m, tau) in delays.iter().enumerate() {
                    let d = tau * fs;
                    let whole = d.floor();
                    let kernel = fractional_delay_kernel(d - whole);
                    let whole = whole as i64;
                    for n in n_on..n_off {
                        let mut acc = 0.0;
                        for (k, h) in kernel.iter().enumerate() {
                            let i = k as i64 - SINC_HALF + 1;
                            let j = n as i64 - whole - i - start;
                            acc += h * s[j as usize];
                        }
                        mix[(n, m)] += acc;
                    }
                }
            }
        }
    }

    if let Some(snr_db) = scene.noise_snr_db {
        let active_count = active.iter().filter(|a| **a).count();
        if active_count > 0 {
            let power: f64 = (0..mics)
                .map(|m| {
                    mix.column(m)
                        .iter()
                        .zip(&active)
                        .filter(|(_, a)| **a)
                        .map(|(v, _)| v * v)
                        .sum::<f64>()
                })
                .sum::<f64>()
                / (active_count * mics) as f64;
            let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(0);
            for m in 0..mics {
                for n in 0..total {
                    let z: f64 = Distribution::<f64>::sample(&StandardNormal, &mut rng);
                    mix[(n, m)] += sigma * z;
                }
            }
        }
    }

    let reference = scene.reference(recording_id);
    let overlaps = OverlapTimeline::new(reference.overlaps());
    Ok(RenderedScene {
        audio: MultiChannelAudio::new(mix, scene.sample_rate)?,
        reference,
        overlaps,
    })
}

/// Speech regions of a reference as Kaldi-style segments (`<rec>-<on>-<off>`
/// utterance ids), one per merged speech interval.
pub fn speech_segments(reference: &Annotation) -> Result<SegmentList> {
    SegmentList::new(reference.recording_id.clone(), reference.speech())
}

/// Stand-in speaker embeddings: each reference speaker gets a Gaussian
/// centroid with unit-variance coordinates scaled by `separation`, and each
/// segment the centroid of the speaker it overlaps most plus Gaussian noise
/// of standard deviation `spread`. Segments without speech draw pure noise.
pub fn synthetic_embeddings(
    reference: &Annotation,
    segments: &[Interval],
    dim: usize,
    separation: f64,
    spread: f64,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lines = reference.speaker_timelines();
    let centroids: Vec<Vec<f64>> = lines
        .keys()
        .map(|_| (0..dim).map(|_| separation * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect())
        .collect();
    segments
        .iter()
        .map(|seg| {
            let best = lines
                .values()
                .enumerate()
                .map(|(i, ivs)| (i, ivs.iter().map(|iv| iv.overlap(seg)).sum::<f64>()))
                .filter(|(_, d)| *d > 0.0)
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            (0..dim)
                .map(|d| {
                    let noise = spread * Distribution::<f64>::sample(&StandardNormal, &mut rng);
                    best.map_or(0.0, |(i, _)| centroids[i][d]) + noise
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::Interval;
    use crate::signal::dft;

    fn tone_scene(geometry: ArrayGeometry, angle: f64) -> SceneSpec {
        SceneSpec {
            geometry,
            sources: vec![SourceSpec {
                speaker: "a".into(),
                angle,
                kind: SourceKind::Tone(1000.0),
                onset: 0.0,
                offset: 1.0,
                gain: 0.5,
            }],
            noise_snr_db: None,
            duration: 1.0,
            sample_rate: 16000,
        }
    }

    #[test]
    fn colocated_mics_give_identical_channels() {
        let g = ArrayGeometry::new_unchecked(vec![[0.03, 0.0], [0.03, 0.0]], 343.0);
        let r = render(&tone_scene(g, 0.0), "s", 1).unwrap();
        assert_eq!(r.audio.channel(0), r.audio.channel(1));
    }

    #[test]
    fn overlap_ground_truth() {
        let mut scene = tone_scene(ArrayGeometry::default(), 0.0);
        scene.duration = 8.0;
        scene.sources[0].offset = 5.0;
        assert!(render(&scene, "s", 0).unwrap().overlaps.is_empty());
        scene.sources.push(SourceSpec {
            speaker: "b".into(),
            angle: 2.0,
            kind: SourceKind::WhiteNoise,
            onset: 3.0,
            offset: 8.0,
            gain: 0.1,
        });
        let r = render(&scene, "s", 0).unwrap();
        assert_eq!(r.overlaps.intervals(), &[Interval::new(3.0, 5.0)]);
        assert_eq!(r.reference.speakers(), vec!["a", "b"]);
    }

    #[test]
    fn tone_phase_matches_steering_delays() {
        let g = ArrayGeometry::default();
        let theta = 0.7;
        let r = render(&tone_scene(g.clone(), theta), "s", 0).unwrap();
        // 1 kHz at 16 kHz: 16 samples per period; a 1600-sample frame holds 100 periods
        let l = 800;
        let bin = 100 - 1;
        let omega = 2.0 * PI * 1000.0;
        let frame = |m: usize| r.audio.channel(m)[4000..5600].to_vec();
        let ref_phase = dft(&frame(0), l).unwrap().bins()[bin].arg();
        for m in 1..g.num_mics() {
            let phase = dft(&frame(m), l).unwrap().bins()[bin].arg();
            let measured = crate::fsb::wrap_angle(phase - ref_phase);
            let expected = crate::fsb::wrap_angle(-omega * (g.delay(m, theta) - g.delay(0, theta)));
            assert!((measured - expected).abs() < 1e-6, "mic {m}: {measured} vs {expected}");
        }
    }

    #[test]
    fn noise_source_delay_is_consistent_with_steering() {
        // cross-spectrum phase of a broadband source follows the steering delays
        let g = ArrayGeometry::default();
        let theta = 2.2;
        let mut scene = tone_scene(g.clone(), theta);
        scene.sources[0].kind = SourceKind::WhiteNoise;
        let r = render(&scene, "s", 3).unwrap();
        let l = 8000;
        let x0 = dft(r.audio.channel(0), l).unwrap();
        let x3 = dft(r.audio.channel(3), l).unwrap();
        let fs = 16000.0;
        let mut acc = rustfft::num_complex::Complex64::new(0.0, 0.0);
        let k = 1000; // 1 kHz
        for b in k - 20..k + 20 {
            let w = x0.frequencies()[b - 1] * fs;
            let expected = rustfft::num_complex::Complex64::from_polar(1.0, w * (g.delay(3, theta) - g.delay(0, theta)));
            acc += x3.bins()[b - 1] * x0.bins()[b - 1].conj() * expected;
        }
        assert!(acc.arg().abs() < 0.05, "residual phase {}", acc.arg());
    }

    #[test]
    fn deterministic_and_gain_scaling() {
        let mut scene = tone_scene(ArrayGeometry::default(), 1.0);
        scene.sources[0].kind = SourceKind::WhiteNoise;
        let a = render(&scene, "s", 9).unwrap();
        let b = render(&scene, "s", 9).unwrap();
        assert_eq!(a.audio, b.audio);
        scene.sources[0].gain = 1.5;
        let c = render(&scene, "s", 9).unwrap();
        let ea: f64 = a.audio.samples().iter().map(|v| v * v).sum();
        let ec: f64 = c.audio.samples().iter().map(|v| v * v).sum();
        assert!((ec / ea - 9.0).abs() < 1e-9 * 9.0);
        scene.noise_snr_db = Some(10.0);
        let d = render(&scene, "s", 9).unwrap();
        let e = render(&scene, "s", 10).unwrap();
        assert_ne!(d.audio, e.audio);
    }

    #[test]
    fn scene_file() {
        let text = "# demo\nsample_rate 8000\nduration 4\nuca 4 0.05\nsource A 90 tone 440 0 2 0.5\nsource B -45 noise 1.5 4\nnoise 20\n";
        let s = SceneSpec::parse(text, Path::new(".")).unwrap();
        assert_eq!(s.sample_rate, 8000);
        assert_eq!(s.geometry.num_mics(), 4);
        assert_eq!(s.sources.len(), 2);
        assert!((s.sources[0].angle - PI / 2.0).abs() < 1e-12);
        assert_eq!(s.sources[1].gain, 1.0);
        assert_eq!(s.noise_snr_db, Some(20.0));
        match SceneSpec::parse("duration 1\nsource A 0 tone 440 0.5 2\n", Path::new(".")) {
            Err(Error::InvalidArgument(_)) => {}
            other => panic!("{other:?}"),
        }
        match SceneSpec::parse("duration 1\nbogus 3\n", Path::new(".")) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
