//! Filter-and-sum beamformer design by regularized least squares, time-domain
//! application, and spatial response evaluation.
//!
//! A beamformer is one real FIR filter of `K` taps per microphone. For a
//! plane wave from azimuth `theta` at angular frequency `omega` its response
//! is
//!
//! ```text
//! F(theta, omega) = sum_m sum_k a[m,k] exp(-j omega k / fs) z_m(theta, omega)
//! ```
//!
//! where `z_m` is the steering phase of [`crate::array::steering`]. Design
//! minimizes the squared deviation of `F` from a desired angular pattern over
//! a discrete (direction, frequency) grid, plus a ridge penalty.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::array::{steering, steering_blocks, ArrayGeometry, DirectionGrid};
use crate::error::{Error, Result};
use crate::signal::MultiChannelAudio;

/// Default ridge weight relative to the Gram diagonal, which equals
/// `frequencies * directions` for unit-modulus steering.
pub const DEFAULT_RELATIVE_REGULARIZATION: f64 = 1.0;
pub const DEFAULT_ORDER: usize = 128;
pub const DEFAULT_BAND: (f64, f64) = (300.0, 3400.0);
pub const DEFAULT_DESIGN_BINS: usize = 64;
pub const DEFAULT_SAMPLE_RATE: u32 = 16000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseShape {
    Boxcar,
    RaisedCosine,
}

/// Desired angular gain pattern around the look direction: 1 inside the main
/// lobe, 0 outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesiredResponse {
    shape: ResponseShape,
    half_width: f64,
}

impl DesiredResponse {
    pub fn new(shape: ResponseShape, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width < PI) {
            return Err(Error::InvalidArgument(format!(
                "main-lobe half width must lie in (0, pi), got {half_width}"
            )));
        }
        Ok(Self { shape, half_width })
    }

    /// Boxcar whose half width is one grid step.
    pub fn for_grid(grid: &DirectionGrid) -> Result<Self> {
        Self::new(ResponseShape::Boxcar, grid.step().min(PI * (1.0 - 1e-9)))
    }

    pub fn shape(&self) -> ResponseShape {
        self.shape
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Gain at angular offset `delta` from the look direction.
    pub fn gain(&self, delta: f64) -> f64 {
        let d = wrap_angle(delta).abs();
        // grid points sitting exactly on the lobe edge count as inside
        if d > self.half_width * (1.0 + 1e-9) {
            return 0.0;
        }
        match self.shape {
            ResponseShape::Boxcar => 1.0,
            ResponseShape::RaisedCosine => 0.5 * (1.0 + (PI * d / self.half_width).cos()),
        }
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// `count` frequencies in Hz uniformly spaced over `[lo, hi]`, endpoints
/// included. A single bin sits at the band centre.
pub fn band_frequencies(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || count == 0 {
        return Err(Error::InvalidArgument(format!(
            "band must satisfy 0 < lo < hi with at least one bin, got [{lo}, {hi}] x {count}"
        )));
    }
    if count == 1 {
        return Ok(vec![0.5 * (lo + hi)]);
    }
    let step = (hi - lo) / (count - 1) as f64;
    Ok((0..count).map(|i| lo + step * i as f64).collect())
}

/// Parameters of a least-squares filter design.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    /// Design frequencies in Hz.
    pub frequencies: Vec<f64>,
    pub sample_rate: u32,
    /// Taps per microphone filter.
    pub order: usize,
    pub regularization: f64,
    pub desired: DesiredResponse,
    /// Delay in samples imposed on the desired response. Causal taps
    /// `0..K` then realize a filter centred on tap `(K - 1) / 2`.
    pub group_delay: f64,
}

/// Absolute ridge weight `rho * frequencies * directions`.
pub fn relative_regularization(rho: f64, directions: usize, frequencies: usize) -> f64 {
    rho * (directions * frequencies) as f64
}

impl DesignSpec {
    /// Default band and bin count, centred group delay, ridge
    /// [`DEFAULT_RELATIVE_REGULARIZATION`] times the Gram diagonal.
    pub fn new(grid: &DirectionGrid, order: usize, sample_rate: u32) -> Result<Self> {
        Ok(Self {
            frequencies: band_frequencies(DEFAULT_BAND.0, DEFAULT_BAND.1, DEFAULT_DESIGN_BINS)?,
            sample_rate,
            order,
            regularization: relative_regularization(DEFAULT_RELATIVE_REGULARIZATION, grid.len(), DEFAULT_DESIGN_BINS),
            desired: DesiredResponse::for_grid(grid)?,
            group_delay: centred_delay(order),
        })
    }

    fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidArgument("filter order must be at least 1".into()));
        }
        if self.frequencies.is_empty() {
            return Err(Error::EmptyInput("no design frequencies".into()));
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        let nyquist = f64::from(self.sample_rate) / 2.0;
        if let Some(f) = self.frequencies.iter().find(|f| !(**f >= 0.0 && **f <= nyquist)) {
            return Err(Error::InvalidArgument(format!(
                "design frequency {f} Hz outside [0, {nyquist}]"
            )));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(Error::InvalidArgument("regularization must be >= 0".into()));
        }
        Ok(())
    }

    fn tap_frequencies(&self) -> Vec<f64> {
        let fs = f64::from(self.sample_rate);
        self.frequencies.iter().map(|f| 2.0 * PI * f / fs).collect()
    }

    fn angular_frequencies(&self) -> Vec<f64> {
        self.frequencies.iter().map(|f| 2.0 * PI * f).collect()
    }
}

pub fn centred_delay(order: usize) -> f64 {
    (order as f64 - 1.0) / 2.0
}

/// The shared part of every look direction's normal equations: the Gram
/// matrix of the real design basis and per-frequency steering blocks.
struct NormalSystem {
    mics: usize,
    order: usize,
    /// `(G + lambda I)`, factored.
    cholesky: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    gram: DMatrix<f64>,
    regularization: f64,
    /// Steering blocks, one `N x M` block per design frequency.
    blocks: Vec<DMatrix<Complex64>>,
    tap_freqs: Vec<f64>,
}

impl NormalSystem {
    fn build(geometry: &ArrayGeometry, angles: &[f64], spec: &DesignSpec) -> Result<Self> {
        spec.validate()?;
        let mics = geometry.num_mics();
        let order = spec.order;
        let blocks = steering_blocks(geometry, angles, &spec.angular_frequencies())?;
        let tap_freqs = spec.tap_frequencies();

        // R_l = Z_l^H Z_l summed over directions
        let spatial: Vec<DMatrix<Complex64>> = blocks.iter().map(|z| z.adjoint() * z).collect();
        // S_d[m, m'] = Re sum_l exp(j w_l d) R_l[m, m'] for tap lag d = k - k'
        let lags = 2 * order - 1;
        let lag_blocks: Vec<DMatrix<f64>> = (0..lags)
            .map(|idx| {
                let d = idx as f64 - (order as f64 - 1.0);
                let mut s = DMatrix::zeros(mics, mics);
                for (r, w) in spatial.iter().zip(&tap_freqs) {
                    let rot = Complex64::from_polar(1.0, w * d);
                    s.zip_apply(r, |acc, v| *acc += (rot * v).re);
                }
                s
            })
            .collect();

        let dim = mics * order;
        let gram = DMatrix::from_fn(dim, dim, |row, col| {
            let (m, k) = (row / order, row % order);
            let (mp, kp) = (col / order, col % order);
            lag_blocks[k + order - 1 - kp][(m, mp)]
        });
        // symmetrize away rounding so the factorization sees an exact symmetric matrix
        let gram = (&gram + gram.transpose()) * 0.5;
        let mut system = gram.clone();
        for i in 0..dim {
            system[(i, i)] += spec.regularization;
        }
        let cholesky = system.cholesky().ok_or_else(|| {
            if spec.regularization == 0.0 {
                Error::Conditioning(
                    "normal matrix is singular without regularization; use lambda > 0 \
                     or more design frequencies/directions"
                        .into(),
                )
            } else {
                Error::Conditioning(format!(
                    "normal matrix not positive definite at lambda = {}; increase lambda",
                    spec.regularization
                ))
            }
        })?;
        Ok(Self {
            mics,
            order,
            cholesky,
            gram,
            regularization: spec.regularization,
            blocks,
            tap_freqs,
        })
    }

    /// Right-hand side `Re sum c^* t` for the given desired gains per
    /// direction.
    fn rhs(&self, desired: &[f64], group_delay: f64) -> DVector<f64> {
        let mut b = DVector::zeros(self.mics * self.order);
        for (z, w) in self.blocks.iter().zip(&self.tap_freqs) {
            // q[m] = sum_i d_i conj(z_m(theta_i))
            let q: Vec<Complex64> = (0..self.mics)
                .map(|m| {
                    desired
                        .iter()
                        .enumerate()
                        .filter(|(_, d)| **d != 0.0)
                        .map(|(i, d)| z[(i, m)].conj() * *d)
                        .sum()
                })
                .collect();
            for k in 0..self.order {
                let rot = Complex64::from_polar(1.0, w * (k as f64 - group_delay));
                for (m, qm) in q.iter().enumerate() {
                    b[m * self.order + k] += (rot * qm).re;
                }
            }
        }
        b
    }

    fn solve(&self, desired: &[f64], group_delay: f64) -> Result<DMatrix<f64>> {
        let b = self.rhs(desired, group_delay);
        let a = self.cholesky.solve(&b);
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("filter design produced non-finite taps".into()));
        }
        let mut residual = &self.gram * &a - &b;
        residual.axpy(self.regularization, &a, 1.0);
        let scale = b.norm().max(f64::MIN_POSITIVE);
        if residual.norm() > 1e-8 * scale.max(1.0) {
            return Err(Error::Conditioning(format!(
                "normal-equation residual {:.3e} too large; increase regularization",
                residual.norm() / scale
            )));
        }
        Ok(DMatrix::from_fn(self.mics, self.order, |m, k| a[m * self.order + k]))
    }
}

fn desired_gains(angles: &[f64], look: f64, desired: &DesiredResponse) -> Vec<f64> {
    angles.iter().map(|a| desired.gain(a - look)).collect()
}

/// Designs the `M x K` taps steering the array toward `look_direction`.
pub fn design_filter(
    geometry: &ArrayGeometry,
    grid: &DirectionGrid,
    look_direction: f64,
    spec: &DesignSpec,
) -> Result<DMatrix<f64>> {
    let angles = grid.angles();
    let system = NormalSystem::build(geometry, &angles, spec)?;
    system.solve(&desired_gains(&angles, look_direction, &spec.desired), spec.group_delay)
}

/// Discretized design objective: squared response error over the
/// (direction, frequency) grid plus `lambda * |a|^2`.
pub fn design_objective(
    coefficients: &DMatrix<f64>,
    geometry: &ArrayGeometry,
    grid: &DirectionGrid,
    look_direction: f64,
    spec: &DesignSpec,
) -> f64 {
    let fs = f64::from(spec.sample_rate);
    let mut total = spec.regularization * coefficients.norm_squared();
    for theta in grid.angles() {
        let target_gain = spec.desired.gain(theta - look_direction);
        for f in &spec.frequencies {
            let omega = 2.0 * PI * f;
            let response = spatial_response(coefficients, geometry, theta, omega, fs);
            let target = Complex64::from_polar(target_gain, -omega / fs * spec.group_delay);
            total += (target - response).norm_sqr();
        }
    }
    total
}

/// `N` filters of shape `M x K`, one per look direction of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    directions: usize,
    mics: usize,
    order: usize,
    /// Direction-major, channel-minor, tap-innermost.
    coefficients: Vec<f64>,
}

impl FilterBank {
    pub fn from_filters(filters: &[DMatrix<f64>]) -> Result<Self> {
        let first = filters
            .first()
            .ok_or_else(|| Error::EmptyInput("filter bank needs at least one filter".into()))?;
        let (mics, order) = first.shape();
        let mut coefficients = Vec::with_capacity(filters.len() * mics * order);
        for f in filters {
            if f.shape() != (mics, order) {
                return Err(Error::Dimension(format!(
                    "filter shape {:?} differs from {:?}",
                    f.shape(),
                    (mics, order)
                )));
            }
            for m in 0..mics {
                coefficients.extend(f.row(m).iter());
            }
        }
        Self::from_raw(filters.len(), mics, order, coefficients)
    }

    pub fn from_raw(directions: usize, mics: usize, order: usize, coefficients: Vec<f64>) -> Result<Self> {
        if directions == 0 || mics == 0 || order == 0 {
            return Err(Error::Dimension(format!(
                "bank dimensions must be positive, got ({directions}, {mics}, {order})"
            )));
        }
        if coefficients.len() != directions * mics * order {
            return Err(Error::Dimension(format!(
                "expected {} coefficients, got {}",
                directions * mics * order,
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numerical("filter bank contains non-finite taps".into()));
        }
        Ok(Self {
            directions,
            mics,
            order,
            coefficients,
        })
    }

    /// `(N, M, K)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.directions, self.mics, self.order)
    }

    pub fn num_directions(&self) -> usize {
        self.directions
    }

    pub fn num_mics(&self) -> usize {
        self.mics
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn raw(&self) -> &[f64] {
        &self.coefficients
    }

    /// Taps of look direction `i` as an `M x K` matrix.
    pub fn filter(&self, i: usize) -> DMatrix<f64> {
        let block = self.mics * self.order;
        let taps = &self.coefficients[i * block..(i + 1) * block];
        DMatrix::from_fn(self.mics, self.order, |m, k| taps[m * self.order + k])
    }

    const MAGIC: &'static [u8; 4] = b"FSB1";

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        out.write_all(Self::MAGIC)?;
        for dim in [self.directions, self.mics, self.order] {
            out.write_all(&(dim as u32).to_le_bytes())?;
        }
        for c in &self.coefficients {
            out.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut input: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io("<filter bank>", e))?;
        if bytes.len() < 16 || &bytes[..4] != Self::MAGIC {
            return Err(Error::Format("filter bank file must start with `FSB1`".into()));
        }
        let dim = |i: usize| {
            u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize
        };
        let (n, m, k) = (dim(0), dim(1), dim(2));
        let count = n
            .checked_mul(m)
            .and_then(|v| v.checked_mul(k))
            .ok_or_else(|| Error::Format("filter bank dimensions overflow".into()))?;
        if bytes.len() != 16 + 8 * count {
            return Err(Error::Format(format!(
                "filter bank ({n}, {m}, {k}) needs {} payload bytes, found {}",
                8 * count,
                bytes.len() - 16
            )));
        }
        let coefficients = bytes[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Self::from_raw(n, m, k, coefficients)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

/// Designs one filter per grid direction. The normal matrix is shared by
/// all look directions and factored once.
pub fn design_bank(geometry: &ArrayGeometry, grid: &DirectionGrid, spec: &DesignSpec) -> Result<FilterBank> {
    let angles = grid.angles();
    let system = NormalSystem::build(geometry, &angles, spec)?;
    let filters = angles
        .par_iter()
        .map(|look| system.solve(&desired_gains(&angles, *look, &spec.desired), spec.group_delay))
        .collect::<Result<Vec<_>>>()?;
    FilterBank::from_filters(&filters)
}

/// `y(t) = sum_m sum_k a[m,k] x_m(t - k)` with zero history before the
/// first sample; the output has the input's length.
pub fn apply_filter_and_sum(audio: &MultiChannelAudio, coefficients: &DMatrix<f64>) -> Result<Vec<f64>> {
    if audio.num_channels() != coefficients.nrows() {
        return Err(Error::Dimension(format!(
            "audio has {} channels but filter has {}",
            audio.num_channels(),
            coefficients.nrows()
        )));
    }
    let t_len = audio.num_samples();
    let mut y = vec![0.0; t_len];
    for m in 0..audio.num_channels() {
        let x = audio.channel(m);
        for (k, a) in coefficients.row(m).iter().enumerate() {
            if *a == 0.0 || k >= t_len {
                continue;
            }
            for (yt, xt) in y[k..].iter_mut().zip(x) {
                *yt += a * xt;
            }
        }
    }
    Ok(y)
}

/// Response of `coefficients` to a unit plane wave from `theta` at
/// angular frequency `omega` (rad/s), including the FIR phase at that
/// frequency.
pub fn spatial_response(
    coefficients: &DMatrix<f64>,
    geometry: &ArrayGeometry,
    theta: f64,
    omega: f64,
    sample_rate: f64,
) -> Complex64 {
    let z = steering(geometry, theta, omega.max(0.0)).expect("non-negative frequency");
    let tap_omega = omega / sample_rate;
    let mut total = Complex64::new(0.0, 0.0);
    for (m, zm) in z.entries.iter().enumerate().take(coefficients.nrows()) {
        let h: Complex64 = coefficients
            .row(m)
            .iter()
            .enumerate()
            .map(|(k, a)| Complex64::from_polar(*a, -tap_omega * k as f64))
            .sum();
        total += h * zm;
    }
    total
}
