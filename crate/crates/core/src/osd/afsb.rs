//! Attention filter-and-sum (AFSB) front end.
//!
//! Each microphone stream passes through a band-pass sinc filterbank and a
//! stack of 1-D convolutions (one weight set per microphone in
//! discriminative mode, a single set in shared mode). A squeeze-and-excitation
//! block turns per-stream averages into channel gates in `(0, 1)`; the gated
//! streams are then collapsed to one by a 1x1 convolution across channels,
//! the learnable counterpart of the sum over microphones in a
//! filter-and-sum beamformer.
//!
//! Cross-channel sums are evaluated over value-sorted terms, so reordering
//! the microphones (together with their weights) reproduces the output bit
//! for bit.

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::signal::MultiChannelAudio;

const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// One filterbank and conv stack applied to every microphone.
    Shared,
    /// Separate filterbank and conv stack per microphone.
    Discriminative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayer {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AfsbConfig {
    pub channels: usize,
    pub sample_rate: u32,
    pub sinc_filters: usize,
    pub sinc_kernel: usize,
    pub sinc_stride: usize,
    /// Non-overlapping max-pool width after the rectified filterbank.
    pub pool: usize,
    pub conv_layers: Vec<ConvLayer>,
    pub weight_mode: WeightMode,
    pub se_reduction: usize,
}

impl Default for AfsbConfig {
    /// 8 microphones at 16 kHz, 80 sinc filters of 251 taps, 100 frames/s.
    fn default() -> Self {
        Self {
            channels: 8,
            sample_rate: 16000,
            sinc_filters: 80,
            sinc_kernel: 251,
            sinc_stride: 10,
            pool: 4,
            conv_layers: vec![
                ConvLayer { out_channels: 60, kernel: 5, stride: 2 },
                ConvLayer { out_channels: 60, kernel: 5, stride: 2 },
            ],
            weight_mode: WeightMode::Discriminative,
            se_reduction: 2,
        }
    }
}

impl AfsbConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.channels == 0 || self.sinc_filters == 0 || self.sinc_kernel == 0 {
            return bad("channels, sinc filters and sinc kernel must be positive".into());
        }
        if self.sinc_stride == 0 || self.pool == 0 || self.sample_rate == 0 {
            return bad("strides, pool and sample rate must be positive".into());
        }
        if self.se_reduction == 0 || self.channels % self.se_reduction != 0 {
            return bad(format!(
                "SE reduction {} must divide the channel count {}",
                self.se_reduction, self.channels
            ));
        }
        if self
            .conv_layers
            .iter()
            .any(|l| l.out_channels == 0 || l.kernel == 0 || l.stride == 0)
        {
            return bad("conv layers need positive width, kernel and stride".into());
        }
        Ok(())
    }

    pub fn groups(&self) -> usize {
        match self.weight_mode {
            WeightMode::Shared => 1,
            WeightMode::Discriminative => self.channels,
        }
    }

    fn group_of(&self, channel: usize) -> usize {
        match self.weight_mode {
            WeightMode::Shared => 0,
            WeightMode::Discriminative => channel,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.conv_layers.last().map_or(self.sinc_filters, |l| l.out_channels)
    }

    pub fn se_hidden(&self) -> usize {
        self.channels / self.se_reduction
    }

    /// Input samples per output frame.
    pub fn hop(&self) -> usize {
        self.sinc_stride * self.pool * self.conv_layers.iter().map(|l| l.stride).product::<usize>()
    }

    pub fn frame_rate(&self) -> f64 {
        f64::from(self.sample_rate) / self.hop() as f64
    }

    /// Output frames for `samples` input samples; 0 if too short.
    pub fn output_frames(&self, samples: usize) -> usize {
        if samples < self.sinc_kernel {
            return 0;
        }
        let mut t = (samples - self.sinc_kernel) / self.sinc_stride + 1;
        t /= self.pool;
        for l in &self.conv_layers {
            if t < l.kernel {
                return 0;
            }
            t = (t - l.kernel) / l.stride + 1;
        }
        t
    }
}

/// Kernel of one conv layer, `out x in x k` flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub weights: Vec<f64>,
}

impl ConvWeights {
    fn at(&self, o: usize, i: usize, k: usize) -> f64 {
        self.weights[(o * self.in_channels + i) * self.kernel + k]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AfsbWeights {
    /// Per group, per filter `(low, high)` cutoffs in Hz.
    pub sinc_cutoffs: Vec<Vec<(f64, f64)>>,
    /// Per group, per layer.
    pub convs: Vec<Vec<ConvWeights>>,
    /// `hidden x M`.
    pub se_down: DMatrix<f64>,
    /// `M x hidden`.
    pub se_up: DMatrix<f64>,
    /// 1x1 reduction weight per channel.
    pub reduce: Vec<f64>,
    /// Logistic frame scorer on the reduced features.
    pub scorer: Vec<f64>,
    pub scorer_bias: f64,
}

fn mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn inv_mel(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

impl AfsbWeights {
    /// Mel-spaced cutoffs and seeded random kernels.
    pub fn init(config: &AfsbConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nyq = f64::from(config.sample_rate) / 2.0;
        let (lo, hi) = (mel(30.0), mel(nyq - 100.0f64.min(nyq * 0.1)));
        let edges: Vec<f64> = (0..=config.sinc_filters)
            .map(|i| inv_mel(lo + (hi - lo) * i as f64 / config.sinc_filters as f64))
            .collect();
        let cutoffs: Vec<(f64, f64)> = edges.windows(2).map(|w| (w[0], w[1])).collect();
        let groups = config.groups();
        let mut gauss = |std: f64, n: usize| -> Vec<f64> {
            let d = Normal::new(0.0, std).expect("valid std");
            (0..n).map(|_| d.sample(&mut rng)).collect()
        };
        let mut convs = Vec::with_capacity(groups);
        for _ in 0..groups {
            let mut in_ch = config.sinc_filters;
            let mut layers = Vec::new();
            for l in &config.conv_layers {
                let std = (2.0 / (in_ch * l.kernel) as f64).sqrt();
                layers.push(ConvWeights {
                    out_channels: l.out_channels,
                    in_channels: in_ch,
                    kernel: l.kernel,
                    weights: gauss(std, l.out_channels * in_ch * l.kernel),
                });
                in_ch = l.out_channels;
            }
            convs.push(layers);
        }
        let (m, h) = (config.channels, config.se_hidden());
        let se_down = DMatrix::from_vec(h, m, gauss(1.0 / (m as f64).sqrt(), h * m));
        let se_up = DMatrix::from_vec(m, h, gauss(1.0 / (h as f64).sqrt(), m * h));
        let reduce = gauss(0.1 / m as f64, m).into_iter().map(|v| v + 1.0 / m as f64).collect();
        let d = config.feature_dim();
        let scorer = gauss(1.0 / (d as f64).sqrt(), d);
        let weights = Self {
            sinc_cutoffs: vec![cutoffs; groups],
            convs,
            se_down,
            se_up,
            reduce,
            scorer,
            scorer_bias: 0.0,
        };
        weights.check(config)?;
        Ok(weights)
    }

    /// Verifies tensor shapes and cutoff ordering against `config`.
    pub fn check(&self, config: &AfsbConfig) -> Result<()> {
        config.validate()?;
        let dim = |m: String| Err(Error::Dimension(m));
        let groups = config.groups();
        let nyq = f64::from(config.sample_rate) / 2.0;
        if self.sinc_cutoffs.len() != groups || self.convs.len() != groups {
            return dim(format!("expected {groups} weight groups"));
        }
        for bank in &self.sinc_cutoffs {
            if bank.len() != config.sinc_filters {
                return dim(format!("expected {} sinc filters", config.sinc_filters));
            }
            if bank.iter().any(|(lo, hi)| !(0.0 < *lo && lo < hi && *hi < nyq)) {
                return Err(Error::InvalidArgument(
                    "sinc cutoffs must satisfy 0 < low < high < Nyquist".into(),
                ));
            }
        }
        for layers in &self.convs {
            if layers.len() != config.conv_layers.len() {
                return dim("conv layer count differs from config".into());
            }
            let mut in_ch = config.sinc_filters;
            for (w, l) in layers.iter().zip(&config.conv_layers) {
                if w.out_channels != l.out_channels
                    || w.in_channels != in_ch
                    || w.kernel != l.kernel
                    || w.weights.len() != l.out_channels * in_ch * l.kernel
                {
                    return dim("conv kernel shape differs from config".into());
                }
                in_ch = l.out_channels;
            }
        }
        let (m, h) = (config.channels, config.se_hidden());
        if self.se_down.shape() != (h, m) || self.se_up.shape() != (m, h) {
            return dim(format!("SE matrices must be {h}x{m} and {m}x{h}"));
        }
        if self.reduce.len() != m {
            return dim(format!("reduction needs {m} weights"));
        }
        if self.scorer.len() != config.feature_dim() {
            return dim(format!("scorer needs {} weights", config.feature_dim()));
        }
        let all_finite = self
            .sinc_cutoffs
            .iter()
            .flatten()
            .flat_map(|(a, b)| [*a, *b])
            .chain(self.convs.iter().flatten().flat_map(|c| c.weights.iter().copied()))
            .chain(self.se_down.iter().copied())
            .chain(self.se_up.iter().copied())
            .chain(self.reduce.iter().copied())
            .chain(self.scorer.iter().copied())
            .chain([self.scorer_bias])
            .all(f64::is_finite);
        if !all_finite {
            return Err(Error::Numerical("AFSB weights contain non-finite values".into()));
        }
        Ok(())
    }

    /// Binary layout: `AFSB`, version, config block of u32 values, then all
    /// tensors as little-endian f64 in the order sinc cutoffs, conv kernels,
    /// SE down, SE up (row-major), reduction, scorer, scorer bias.
    pub fn to_bytes(&self, config: &AfsbConfig) -> Vec<u8> {
        let mut out = b"AFSB".to_vec();
        let mut u = |v: usize| out.extend((v as u32).to_le_bytes());
        u(1);
        u(config.channels);
        u(config.sample_rate as usize);
        u(config.sinc_filters);
        u(config.sinc_kernel);
        u(config.sinc_stride);
        u(config.pool);
        u(match config.weight_mode {
            WeightMode::Shared => 0,
            WeightMode::Discriminative => 1,
        });
        u(config.se_reduction);
        u(config.conv_layers.len());
        for l in &config.conv_layers {
            u(l.out_channels);
            u(l.kernel);
            u(l.stride);
        }
        let mut f = |v: f64| out.extend(v.to_le_bytes());
        for (lo, hi) in self.sinc_cutoffs.iter().flatten() {
            f(*lo);
            f(*hi);
        }
        for c in self.convs.iter().flatten() {
            c.weights.iter().for_each(|v| f(*v));
        }
        for r in 0..self.se_down.nrows() {
            self.se_down.row(r).iter().for_each(|v| f(*v));
        }
        for r in 0..self.se_up.nrows() {
            self.se_up.row(r).iter().for_each(|v| f(*v));
        }
        self.reduce.iter().for_each(|v| f(*v));
        self.scorer.iter().for_each(|v| f(*v));
        f(self.scorer_bias);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(AfsbConfig, Self)> {
        let fmt = |m: &str| Error::Format(format!("AFSB weights: {m}"));
        if bytes.len() < 4 || &bytes[..4] != b"AFSB" {
            return Err(fmt("missing `AFSB` header"));
        }
        let mut pos = 4;
        let mut u = || -> Result<usize> {
            let b = bytes.get(pos..pos + 4).ok_or_else(|| fmt("truncated config block"))?;
            pos += 4;
            Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
        };
        if u()? != 1 {
            return Err(fmt("unsupported version"));
        }
        let channels = u()?;
        let sample_rate = u()? as u32;
        let sinc_filters = u()?;
        let sinc_kernel = u()?;
        let sinc_stride = u()?;
        let pool = u()?;
        let weight_mode = match u()? {
            0 => WeightMode::Shared,
            1 => WeightMode::Discriminative,
            _ => return Err(fmt("unknown weight mode")),
        };
        let se_reduction = u()?;
        let layers = u()?;
        if layers > 64 {
            return Err(fmt("implausible conv layer count"));
        }
        let mut conv_layers = Vec::with_capacity(layers);
        for _ in 0..layers {
            conv_layers.push(ConvLayer {
                out_channels: u()?,
                kernel: u()?,
                stride: u()?,
            });
        }
        let config = AfsbConfig {
            channels,
            sample_rate,
            sinc_filters,
            sinc_kernel,
            sinc_stride,
            pool,
            conv_layers,
            weight_mode,
            se_reduction,
        };
        config.validate()?;
        let mut floats = bytes[pos..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        if bytes[pos..].len() % 8 != 0 {
            return Err(fmt("payload is not a whole number of f64 values"));
        }
        let mut take = |n: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = floats.by_ref().take(n).collect();
            if v.len() == n {
                Ok(v)
            } else {
                Err(fmt("truncated tensor payload"))
            }
        };
        let groups = config.groups();
        let mut sinc_cutoffs = Vec::with_capacity(groups);
        for _ in 0..groups {
            let v = take(2 * sinc_filters)?;
            sinc_cutoffs.push(v.chunks_exact(2).map(|p| (p[0], p[1])).collect());
        }
        let mut convs = Vec::with_capacity(groups);
        for _ in 0..groups {
            let mut in_ch = sinc_filters;
            let mut ws = Vec::new();
            for l in &config.conv_layers {
                ws.push(ConvWeights {
                    out_channels: l.out_channels,
                    in_channels: in_ch,
                    kernel: l.kernel,
                    weights: take(l.out_channels * in_ch * l.kernel)?,
                });
                in_ch = l.out_channels;
            }
            convs.push(ws);
        }
        let (m, h) = (channels, config.se_hidden());
        let se_down = DMatrix::from_row_slice(h, m, &take(h * m)?);
        let se_up = DMatrix::from_row_slice(m, h, &take(m * h)?);
        let reduce = take(m)?;
        let scorer = take(config.feature_dim())?;
        let scorer_bias = take(1)?[0];
        if floats.next().is_some() {
            return Err(fmt("trailing data after tensors"));
        }
        let weights = Self {
            sinc_cutoffs,
            convs,
            se_down,
            se_up,
            reduce,
            scorer,
            scorer_bias,
        };
        weights.check(&config)?;
        Ok((config, weights))
    }

    pub fn save(&self, config: &AfsbConfig, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes(config)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(AfsbConfig, Self)> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Hamming-windowed band-pass sinc kernel for cutoffs in Hz.
fn sinc_kernel(low: f64, high: f64, len: usize, sample_rate: f64) -> Vec<f64> {
    let (f1, f2) = (low / sample_rate, high / sample_rate);
    let centre = (len as f64 - 1.0) / 2.0;
    let lowpass = |f: f64, n: f64| {
        if n == 0.0 {
            2.0 * f
        } else {
            (2.0 * PI * f * n).sin() / (PI * n)
        }
    };
    (0..len)
        .map(|i| {
            let n = i as f64 - centre;
            let window = if len > 1 {
                0.54 - 0.46 * (2.0 * PI * i as f64 / (len as f64 - 1.0)).cos()
            } else {
                1.0
            };
            (lowpass(f2, n) - lowpass(f1, n)) * window
        })
        .collect()
}

fn leaky(v: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        LEAKY_SLOPE * v
    }
}

/// Sum that does not depend on the order of `terms`.
fn ordered_sum(terms: &mut [f64]) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// Per-microphone stream `C x T_f` (row per feature channel).
fn channel_stream(x: &[f64], group: usize, weights: &AfsbWeights, config: &AfsbConfig) -> DMatrix<f64> {
    let fs = f64::from(config.sample_rate);
    let k = config.sinc_kernel;
    let steps = (x.len() - k) / config.sinc_stride + 1;
    let pooled_len = steps / config.pool;
    let bank = &weights.sinc_cutoffs[group];
    let mut cur = DMatrix::zeros(bank.len(), pooled_len);
    for (f, (lo, hi)) in bank.iter().enumerate() {
        let h = sinc_kernel(*lo, *hi, k, fs);
        for p in 0..pooled_len {
            let mut best = f64::NEG_INFINITY;
            for q in 0..config.pool {
                let start = (p * config.pool + q) * config.sinc_stride;
                let v: f64 = h.iter().zip(&x[start..start + k]).map(|(a, b)| a * b).sum();
                best = best.max(v.abs());
            }
            cur[(f, p)] = best;
        }
    }
    for (w, layer) in weights.convs[group].iter().zip(&config.conv_layers) {
        let layer_stride = layer.stride;
        let t_out = (cur.ncols() - w.kernel) / layer_stride + 1;
        let mut next = DMatrix::zeros(w.out_channels, t_out);
        for o in 0..w.out_channels {
            for t in 0..t_out {
                let mut acc = 0.0;
                for i in 0..w.in_channels {
                    for kk in 0..w.kernel {
                        acc += w.at(o, i, kk) * cur[(i, t * layer_stride + kk)];
                    }
                }
                next[(o, t)] = leaky(acc);
            }
        }
        cur = next;
    }
    cur
}

fn check_input(audio: &MultiChannelAudio, weights: &AfsbWeights, config: &AfsbConfig) -> Result<()> {
    weights.check(config)?;
    if audio.num_channels() != config.channels {
        return Err(Error::Dimension(format!(
            "audio has {} channels, AFSB expects {}",
            audio.num_channels(),
            config.channels
        )));
    }
    if audio.sample_rate() != config.sample_rate {
        return Err(Error::Dimension(format!(
            "audio sample rate {} differs from AFSB rate {}",
            audio.sample_rate(),
            config.sample_rate
        )));
    }
    if config.output_frames(audio.num_samples()) == 0 {
        return Err(Error::Duration(format!(
            "{} samples too short for one AFSB frame",
            audio.num_samples()
        )));
    }
    Ok(())
}

fn streams(audio: &MultiChannelAudio, weights: &AfsbWeights, config: &AfsbConfig) -> Vec<DMatrix<f64>> {
    (0..config.channels)
        .map(|m| channel_stream(audio.channel(m), config.group_of(m), weights, config))
        .collect()
}

fn gates_from_streams(streams: &[DMatrix<f64>], weights: &AfsbWeights) -> Vec<f64> {
    let pooled: Vec<f64> = streams.iter().map(|s| s.mean()).collect();
    let hidden: Vec<f64> = (0..weights.se_down.nrows())
        .map(|j| {
            let mut terms: Vec<f64> = pooled
                .iter()
                .enumerate()
                .map(|(m, p)| weights.se_down[(j, m)] * p)
                .collect();
            ordered_sum(&mut terms).max(0.0)
        })
        .collect();
    (0..weights.se_up.nrows())
        .map(|m| {
            let mut terms: Vec<f64> = hidden
                .iter()
                .enumerate()
                .map(|(j, h)| weights.se_up[(m, j)] * h)
                .collect();
            1.0 / (1.0 + (-ordered_sum(&mut terms)).exp())
        })
        .collect()
}

/// Squeeze-and-excitation channel gates for `audio`.
pub fn se_gates(audio: &MultiChannelAudio, weights: &AfsbWeights, config: &AfsbConfig) -> Result<Vec<f64>> {
    check_input(audio, weights, config)?;
    Ok(gates_from_streams(&streams(audio, weights, config), weights))
}

fn reduce(streams: &[DMatrix<f64>], gates: &[f64], weights: &AfsbWeights) -> DMatrix<f64> {
    let (c, t) = streams[0].shape();
    let scale: Vec<f64> = gates.iter().zip(&weights.reduce).map(|(g, w)| g * w).collect();
    let mut terms = vec![0.0; streams.len()];
    DMatrix::from_fn(t, c, |ti, ci| {
        for (m, s) in streams.iter().enumerate() {
            terms[m] = scale[m] * s[(ci, ti)];
        }
        ordered_sum(&mut terms)
    })
}

/// Frame features `T_f x D` for `audio`.
pub fn afsb_forward(audio: &MultiChannelAudio, weights: &AfsbWeights, config: &AfsbConfig) -> Result<DMatrix<f64>> {
    check_input(audio, weights, config)?;
    let s = streams(audio, weights, config);
    let gates = gates_from_streams(&s, weights);
    Ok(reduce(&s, &gates, weights))
}

/// Forward pass with externally fixed channel gates.
pub fn afsb_forward_with_gates(
    audio: &MultiChannelAudio,
    weights: &AfsbWeights,
    config: &AfsbConfig,
    gates: &[f64],
) -> Result<DMatrix<f64>> {
    check_input(audio, weights, config)?;
    if gates.len() != config.channels {
        return Err(Error::Dimension(format!("expected {} gates", config.channels)));
    }
    Ok(reduce(&streams(audio, weights, config), gates, weights))
}
