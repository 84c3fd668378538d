//! Multi-channel audio container, WAV I/O, framing and the real DFT used by
//! the beamforming and detection front ends.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// A recording from an `M`-channel array: `T x M` samples, one column per
/// microphone, amplitudes nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelAudio {
    samples: DMatrix<f64>,
    sample_rate: u32,
}

impl MultiChannelAudio {
    pub fn new(samples: DMatrix<f64>, sample_rate: u32) -> Result<Self> {
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::EmptyInput(format!(
                "audio must have at least one sample and one channel, got {}x{}",
                samples.nrows(),
                samples.ncols()
            )));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Format("audio contains non-finite samples".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Builds audio from per-channel sample vectors of equal length.
    pub fn from_channels(channels: &[Vec<f64>], sample_rate: u32) -> Result<Self> {
        let m = channels.len();
        let t = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != t) {
            return Err(Error::Dimension("channels have unequal lengths".into()));
        }
        let samples = DMatrix::from_fn(t, m, |i, j| channels[j][i]);
        Self::new(samples, sample_rate)
    }

    pub fn zeros(num_samples: usize, channels: usize, sample_rate: u32) -> Result<Self> {
        Self::new(DMatrix::zeros(num_samples, channels), sample_rate)
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn num_channels(&self) -> usize {
        self.samples.ncols()
    }

    pub fn duration(&self) -> f64 {
        self.num_samples() as f64 / f64::from(self.sample_rate)
    }

    /// Contiguous samples of channel `m`.
    pub fn channel(&self, m: usize) -> &[f64] {
        let t = self.num_samples();
        &self.samples.as_slice()[m * t..(m + 1) * t]
    }

    /// Samples `[start, end)` of every channel.
    pub fn crop(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.num_samples() {
            return Err(Error::Bounds(format!(
                "sample range [{start}, {end}) outside [0, {})",
                self.num_samples()
            )));
        }
        Self::new(
            self.samples.rows(start, end - start).into_owned(),
            self.sample_rate,
        )
    }

    /// Crops the time interval `[onset, offset)` given in seconds.
    pub fn crop_seconds(&self, onset: f64, offset: f64) -> Result<Self> {
        let eps = 1e-9;
        if !(onset >= -eps && offset <= self.duration() + eps && offset > onset) {
            return Err(Error::Bounds(format!(
                "interval [{onset:.3}, {offset:.3}] outside recording span [0, {:.3}]",
                self.duration()
            )));
        }
        let fs = f64::from(self.sample_rate);
        let start = ((onset.max(0.0) * fs).round() as usize).min(self.num_samples() - 1);
        let end = ((offset * fs).round() as usize)
            .min(self.num_samples())
            .max(start + 1);
        self.crop(start, end)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.samples * factor, self.sample_rate)
    }
}

/// Sample encodings accepted by [`load_wav`] and produced by [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

fn map_hound(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::io(path, e),
        hound::Error::FormatError(msg) => Error::Format(format!("{}: {msg}", path.display())),
        hound::Error::Unsupported => {
            Error::Unsupported(format!("{}: unsupported WAV variant", path.display()))
        }
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Reads a RIFF/WAVE file with 16-bit PCM or 32-bit float samples.
pub fn load_wav(path: impl AsRef<Path>) -> Result<MultiChannelAudio> {
    load_wav_with_encoding(path).map(|(audio, _)| audio)
}

pub fn load_wav_with_encoding(path: impl AsRef<Path>) -> Result<(MultiChannelAudio, WavEncoding)> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    let (interleaved, encoding): (Vec<f64>, _) = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => (
            reader
                .into_samples::<i16>()
                .map(|s| s.map(|v| f64::from(v) / 32768.0))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| map_hound(path, e))?,
            WavEncoding::Pcm16,
        ),
        (hound::SampleFormat::Float, 32) => (
            reader
                .into_samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| map_hound(path, e))?,
            WavEncoding::Float32,
        ),
        (fmt, bits) => {
            return Err(Error::Unsupported(format!(
                "{}: {bits}-bit {fmt:?} samples (expected 16-bit PCM or 32-bit float)",
                path.display()
            )))
        }
    };
    if channels == 0 || interleaved.len() % channels != 0 {
        return Err(Error::Format(format!(
            "{}: sample count not a multiple of channel count",
            path.display()
        )));
    }
    let frames = interleaved.len() / channels;
    let samples = DMatrix::from_fn(frames, channels, |t, m| interleaved[t * channels + m]);
    Ok((MultiChannelAudio::new(samples, spec.sample_rate)?, encoding))
}

/// Writes audio as a RIFF/WAVE file. PCM16 output is clamped to the
/// representable range.
pub fn write_wav(
    path: impl AsRef<Path>,
    audio: &MultiChannelAudio,
    encoding: WavEncoding,
) -> Result<()> {
    let path = path.as_ref();
    let channels = u16::try_from(audio.num_channels())
        .map_err(|_| Error::Unsupported("more than 65535 channels".into()))?;
    let spec = hound::WavSpec {
        channels,
        sample_rate: audio.sample_rate(),
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => hound::SampleFormat::Int,
            WavEncoding::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    let samples = audio.samples();
    for t in 0..audio.num_samples() {
        for m in 0..audio.num_channels() {
            let v = samples[(t, m)];
            match encoding {
                WavEncoding::Pcm16 => {
                    let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(q)
                }
                WavEncoding::Float32 => writer.write_sample(v as f32),
            }
            .map_err(|e| map_hound(path, e))?;
        }
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

/// Analysis window applied to each frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Rectangular,
    Hann,
}

impl Window {
    /// Periodic window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameGrid {
    frame_length: usize,
    frame_shift: usize,
    window: Window,
}

impl FrameGrid {
    pub fn new(frame_length: usize, frame_shift: usize, window: Window) -> Result<Self> {
        if frame_shift == 0 || frame_shift > frame_length {
            return Err(Error::InvalidArgument(format!(
                "frame shift must satisfy 0 < shift <= length, got shift {frame_shift}, length {frame_length}"
            )));
        }
        Ok(Self {
            frame_length,
            frame_shift,
            window,
        })
    }

    pub fn frame_length(&self) -> usize {
        self.frame_length
    }

    pub fn frame_shift(&self) -> usize {
        self.frame_shift
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Number of complete frames over `num_samples`; the trailing partial
    /// frame is dropped.
    pub fn frame_count(&self, num_samples: usize) -> usize {
        if num_samples < self.frame_length {
            0
        } else {
            (num_samples - self.frame_length) / self.frame_shift + 1
        }
    }
}

/// Splits audio into windowed `frame_length x M` frames.
pub fn frame_signal(audio: &MultiChannelAudio, grid: &FrameGrid) -> Result<Vec<DMatrix<f64>>> {
    let t = audio.num_samples();
    if grid.frame_length > t {
        return Err(Error::EmptyInput(format!(
            "frame length {} exceeds signal length {t}",
            grid.frame_length
        )));
    }
    let window = grid.window.coefficients(grid.frame_length);
    let samples = audio.samples();
    Ok((0..grid.frame_count(t))
        .map(|f| {
            let start = f * grid.frame_shift;
            DMatrix::from_fn(grid.frame_length, audio.num_channels(), |i, m| {
                samples[(start + i, m)] * window[i]
            })
        })
        .collect())
}

/// Weighted overlap-add of frames produced by [`frame_signal`], using the
/// analysis window again for synthesis. Samples not covered by any window
/// mass are left at zero.
pub fn overlap_add(frames: &[DMatrix<f64>], grid: &FrameGrid, num_samples: usize) -> DMatrix<f64> {
    let channels = frames.first().map_or(0, DMatrix::ncols);
    let window = grid.window.coefficients(grid.frame_length);
    let mut out = DMatrix::zeros(num_samples, channels);
    let mut norm = vec![0.0; num_samples];
    for (f, frame) in frames.iter().enumerate() {
        let start = f * grid.frame_shift;
        for i in 0..grid.frame_length {
            norm[start + i] += window[i] * window[i];
            for m in 0..channels {
                out[(start + i, m)] += frame[(i, m)] * window[i];
            }
        }
    }
    for (t, w) in norm.iter().enumerate() {
        if *w > 1e-12 {
            for m in 0..channels {
                out[(t, m)] /= w;
            }
        }
    }
    out
}

/// One-sided spectrum sampled at `L` uniformly spaced frequencies
/// `pi * l / L`, `l = 1..=L`, plus the DC term.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    dc: f64,
    bins: Vec<Complex64>,
    frequencies: Vec<f64>,
}

impl Spectrum {
    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    /// Bin frequencies in radians per sample, strictly increasing in `(0, pi]`.
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn dc(&self) -> f64 {
        self.dc
    }

    /// Energy of the underlying length-`2L` periodic sequence, so that for
    /// frames of length at most `2L` this equals the time-domain energy.
    pub fn energy(&self) -> f64 {
        let l = self.bins.len();
        let n = (2 * l) as f64;
        let interior: f64 = self.bins[..l - 1].iter().map(|b| b.norm_sqr()).sum();
        (self.dc * self.dc + 2.0 * interior + self.bins[l - 1].norm_sqr()) / n
    }

    /// Reconstructs the first `len` samples of the analysed frame; exact
    /// whenever the frame length was at most `2L`.
    pub fn inverse(&self, len: usize) -> Result<Vec<f64>> {
        let l = self.bins.len();
        let n = 2 * l;
        if len > n {
            return Err(Error::InvalidArgument(format!(
                "cannot reconstruct {len} samples from {l} bins (at most {n})"
            )));
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[0] = Complex64::new(self.dc, 0.0);
        for (i, b) in self.bins.iter().enumerate() {
            let k = i + 1;
            buf[k] = *b;
            if k < l {
                buf[n - k] = b.conj();
            }
        }
        FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
        Ok(buf[..len].iter().map(|c| c.re / n as f64).collect())
    }
}

/// Discrete Fourier transform of a real frame evaluated at `L` positive
/// frequencies `pi * l / L`. Frames longer than `2L` are folded, which
/// leaves the values at these frequencies unchanged.
pub fn dft(frame: &[f64], num_bins: usize) -> Result<Spectrum> {
    if num_bins == 0 {
        return Err(Error::InvalidArgument("bin count must be at least 1".into()));
    }
    let n = 2 * num_bins;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (t, x) in frame.iter().enumerate() {
        buf[t % n].re += x;
    }
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    Ok(Spectrum {
        dc: buf[0].re,
        bins: buf[1..=num_bins].to_vec(),
        frequencies: (1..=num_bins)
            .map(|l| PI * l as f64 / num_bins as f64)
            .collect(),
    })
}
