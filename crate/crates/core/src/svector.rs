//! Spatial embeddings: normalized output energy of a steered filter bank.

use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::array::DirectionGrid;
use crate::error::{Error, Result};
use crate::fsb::FilterBank;
use crate::scoring::timeline::Interval;
use crate::signal::MultiChannelAudio;

/// Shortest segment accepted, in seconds.
pub const MIN_SEGMENT_DURATION: f64 = 0.05;

/// Direction distribution of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SVector {
    weights: Vec<f64>,
}

impl SVector {
    pub fn from_energies(energies: &[f64]) -> Result<Self> {
        if energies.is_empty() {
            return Err(Error::EmptyInput("no directions".into()));
        }
        if energies.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::Numerical("direction energies must be finite and non-negative".into()));
        }
        let total: f64 = energies.iter().sum();
        let n = energies.len() as f64;
        let weights = if total > 0.0 {
            energies.iter().map(|e| e / total).collect()
        } else {
            vec![1.0 / n; energies.len()]
        };
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Index of the strongest direction (lowest index on ties).
    pub fn argmax(&self) -> usize {
        self.weights
            .iter()
            .enumerate()
            .fold(0, |best, (i, w)| if *w > self.weights[best] { i } else { best })
    }

    /// Angle of the strongest direction on `grid`.
    pub fn peak_angle(&self, grid: &DirectionGrid) -> Result<f64> {
        if grid.len() != self.len() {
            return Err(Error::Dimension(format!("grid has {} directions, s-vector {}", grid.len(), self.len())));
        }
        Ok(grid.angle(self.argmax()))
    }
}

/// Precomputed tap cross-correlations of a bank, reusable across segments.
///
/// The energy of `y = sum_m a_m * x_m` (full linear convolution) equals
/// `sum_{m,m'} sum_d c_{mm'}[d] r_{mm'}[d]`, with `c` the tap correlation and
/// `r` the signal correlation at lag `d`; `r` is computed once per segment.
#[derive(Debug, Clone)]
pub struct SVectorExtractor {
    directions: usize,
    mics: usize,
    order: usize,
    band: Option<(f64, f64)>,
    /// `[direction][pair][lag + K - 1]`, pairs `m <= m'` in row order.
    tap_corr: Arc<Vec<f64>>,
}

impl SVectorExtractor {
    /// `band` restricts the energy to `[lo, hi]` Hz; `None` is broadband.
    pub fn new(bank: &FilterBank, band: Option<(f64, f64)>) -> Result<Self> {
        if let Some((lo, hi)) = band {
            if !(lo >= 0.0 && hi > lo) {
                return Err(Error::InvalidArgument(format!("invalid band {lo}:{hi} Hz")));
            }
        }
        let (n, m, k) = bank.shape();
        let lags = 2 * k - 1;
        let pairs = m * (m + 1) / 2;
        let raw = bank.raw();
        let mut tap_corr = vec![0.0; n * pairs * lags];
        for dir in 0..n {
            let taps = &raw[dir * m * k..(dir + 1) * m * k];
            let mut p = 0;
            for a in 0..m {
                for b in a..m {
                    let ta = &taps[a * k..(a + 1) * k];
                    let tb = &taps[b * k..(b + 1) * k];
                    let out = &mut tap_corr[(dir * pairs + p) * lags..(dir * pairs + p + 1) * lags];
                    // c[d] = sum_k ta[k] tb[k - d]
                    for (i, &va) in ta.iter().enumerate() {
                        if va == 0.0 {
                            continue;
                        }
                        for (j, &vb) in tb.iter().enumerate() {
                            out[i + k - 1 - j] += va * vb;
                        }
                    }
                    p += 1;
                }
            }
        }
        Ok(Self {
            directions: n,
            mics: m,
            order: k,
            band,
            tap_corr: Arc::new(tap_corr),
        })
    }

    pub fn num_directions(&self) -> usize {
        self.directions
    }

    pub fn band(&self) -> Option<(f64, f64)> {
        self.band
    }

    /// Signal correlations `r_{mm'}[d]` for `|d| < K`, band-limited if requested.
    fn signal_correlations(&self, audio: &MultiChannelAudio) -> Vec<f64> {
        let t = audio.num_samples();
        let k = self.order;
        let nfft = (t + k).next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(nfft);
        let inv = planner.plan_fft_inverse(nfft);
        let fs = f64::from(audio.sample_rate());
        let keep = |bin: usize| match self.band {
            None => true,
            Some((lo, hi)) => {
                let f = bin.min(nfft - bin) as f64 * fs / nfft as f64;
                f >= lo && f <= hi
            }
        };
        let spectra: Vec<Vec<Complex64>> = (0..self.mics)
            .map(|m| {
                let mut buf: Vec<Complex64> = audio.channel(m).iter().map(|&v| Complex64::new(v, 0.0)).collect();
                buf.resize(nfft, Complex64::new(0.0, 0.0));
                fwd.process(&mut buf);
                for (bin, v) in buf.iter_mut().enumerate() {
                    if !keep(bin) {
                        *v = Complex64::new(0.0, 0.0);
                    }
                }
                buf
            })
            .collect();
        let lags = 2 * k - 1;
        let mut out = Vec::with_capacity(self.mics * (self.mics + 1) / 2 * lags);
        let scale = 1.0 / nfft as f64;
        for a in 0..self.mics {
            for b in a..self.mics {
                let mut cross: Vec<Complex64> =
                    spectra[a].iter().zip(&spectra[b]).map(|(x, y)| x.conj() * y).collect();
                inv.process(&mut cross);
                // cross[d] = sum_s x_a[s] x_b[s + d], negative lags wrapped.
                for i in 0..lags {
                    let d = i as isize - (k as isize - 1);
                    let idx = d.rem_euclid(nfft as isize) as usize;
                    out.push(cross[idx].re * scale);
                }
            }
        }
        out
    }

    /// Output energy per look direction.
    pub fn energies(&self, audio: &MultiChannelAudio) -> Result<Vec<f64>> {
        if audio.num_channels() != self.mics {
            return Err(Error::Dimension(format!(
                "audio has {} channels but the bank expects {}",
                audio.num_channels(),
                self.mics
            )));
        }
        if audio.duration() < MIN_SEGMENT_DURATION - 1e-12 {
            return Err(Error::Duration(format!(
                "{:.4} s is shorter than {MIN_SEGMENT_DURATION} s",
                audio.duration()
            )));
        }
        let r = self.signal_correlations(audio);
        let lags = 2 * self.order - 1;
        let pairs = self.mics * (self.mics + 1) / 2;
        let mut diag = vec![false; pairs];
        let mut p = 0;
        for a in 0..self.mics {
            for b in a..self.mics {
                diag[p] = a == b;
                p += 1;
            }
        }
        Ok((0..self.directions)
            .map(|dir| {
                let c = &self.tap_corr[dir * pairs * lags..(dir + 1) * pairs * lags];
                let mut e = 0.0;
                for (p, is_diag) in diag.iter().enumerate() {
                    let s: f64 = c[p * lags..(p + 1) * lags]
                        .iter()
                        .zip(&r[p * lags..(p + 1) * lags])
                        .map(|(x, y)| x * y)
                        .sum();
                    e += if *is_diag { s } else { 2.0 * s };
                }
                e.max(0.0)
            })
            .collect())
    }

    pub fn extract(&self, audio: &MultiChannelAudio) -> Result<SVector> {
        SVector::from_energies(&self.energies(audio)?)
    }

    /// One s-vector per interval (seconds), in order.
    pub fn extract_segments(&self, audio: &MultiChannelAudio, intervals: &[Interval]) -> Result<Vec<SVector>> {
        use rayon::prelude::*;
        let total = audio.duration();
        if let Some(bad) = intervals
            .iter()
            .find(|iv| iv.onset < -1e-9 || iv.offset > total + 1e-9 || iv.offset <= iv.onset)
        {
            return Err(Error::Bounds(format!(
                "segment [{}, {}] outside [0, {total}]",
                bad.onset, bad.offset
            )));
        }
        intervals
            .par_iter()
            .map(|iv| self.extract(&audio.crop_seconds(iv.onset.max(0.0), iv.offset.min(total))?))
            .collect()
    }
}

pub fn extract_svector(audio: &MultiChannelAudio, bank: &FilterBank, band: Option<(f64, f64)>) -> Result<SVector> {
    SVectorExtractor::new(bank, band)?.extract(audio)
}

pub fn extract_svectors(
    audio: &MultiChannelAudio,
    bank: &FilterBank,
    intervals: &[Interval],
    band: Option<(f64, f64)>,
) -> Result<Vec<SVector>> {
    SVectorExtractor::new(bank, band)?.extract_segments(audio, intervals)
}

/// Text matrix: `n N` header, then one row per segment.
pub fn svectors_to_text(svectors: &[SVector]) -> String {
    let rows: Vec<Vec<f64>> = svectors.iter().map(|s| s.weights.clone()).collect();
    let dim = rows.first().map_or(0, Vec::len);
    let mut out = format!("{} {}\n", rows.len(), dim);
    for r in rows {
        out.push_str(&r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "));
        out.push('\n');
    }
    out
}

pub fn write_svectors(path: impl AsRef<Path>, svectors: &[SVector]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, svectors_to_text(svectors)).map_err(|e| Error::io(path, e))
}

pub fn read_svectors(path: impl AsRef<Path>) -> Result<Vec<SVector>> {
    let m = crate::diarize::EmbeddingMatrix::load(path)?;
    m.into_rows()
        .into_iter()
        .map(|w| {
            let total: f64 = w.iter().sum();
            if w.iter().any(|v| *v < 0.0) || (total - 1.0).abs() > 1e-6 {
                return Err(Error::Format("s-vector rows must be non-negative and sum to 1".into()));
            }
            Ok(SVector { weights: w })
        })
        .collect()
}
