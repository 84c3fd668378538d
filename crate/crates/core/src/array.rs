//! Planar microphone-array geometry and far-field steering vectors.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;
pub const DEFAULT_UCA_MICS: usize = 8;
pub const DEFAULT_UCA_RADIUS: f64 = 0.0425;

/// Microphone positions in meters on a plane, plus the propagation speed.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    positions: Vec<[f64; 2]>,
    speed_of_sound: f64,
}

impl ArrayGeometry {
    pub fn new(positions: Vec<[f64; 2]>, speed_of_sound: f64) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "array needs at least 2 microphones, got {}",
                positions.len()
            )));
        }
        if !(speed_of_sound > 0.0 && speed_of_sound.is_finite()) {
            return Err(Error::InvalidArgument("speed of sound must be positive".into()));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite microphone position".into()));
        }
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                if positions[i] == positions[j] {
                    return Err(Error::InvalidArgument(format!(
                        "microphones {i} and {j} share a position"
                    )));
                }
            }
        }
        Ok(Self {
            positions,
            speed_of_sound,
        })
    }

    /// Uniform circular array with microphone `i` at azimuth `2 pi i / M`.
    pub fn uniform_circular(mics: usize, radius: f64, speed_of_sound: f64) -> Result<Self> {
        let positions = (0..mics)
            .map(|i| {
                let phi = 2.0 * PI * i as f64 / mics as f64;
                [radius * phi.cos(), radius * phi.sin()]
            })
            .collect();
        Self::new(positions, speed_of_sound)
    }

    /// Positions as given, skipping the distinctness check. Used by the
    /// simulator for degenerate test scenes (co-located microphones).
    pub fn new_unchecked(positions: Vec<[f64; 2]>, speed_of_sound: f64) -> Self {
        Self {
            positions,
            speed_of_sound,
        }
    }

    /// Parses a geometry file: one `x y` pair in meters per line, `#` starts
    /// a comment.
    pub fn from_text(text: &str, speed_of_sound: f64) -> Result<Self> {
        let mut positions = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("expected a number, got `{s}`"),
                })
            };
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected `x y`, got {} fields", fields.len()),
                });
            }
            positions.push([parse(fields[0])?, parse(fields[1])?]);
        }
        Self::new(positions, speed_of_sound)
    }

    pub fn load(path: impl AsRef<Path>, speed_of_sound: f64) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, speed_of_sound)
    }

    pub fn to_text(&self) -> String {
        self.positions
            .iter()
            .map(|[x, y]| format!("{x} {y}\n"))
            .collect()
    }

    pub fn num_mics(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn speed_of_sound(&self) -> f64 {
        self.speed_of_sound
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.positions.len() as f64;
        let (sx, sy) = self
            .positions
            .iter()
            .fold((0.0, 0.0), |(sx, sy), [x, y]| (sx + x, sy + y));
        [sx / n, sy / n]
    }

    /// Arrival delay in seconds at mic `m`, relative to the array centroid,
    /// for a plane wave arriving from azimuth `theta`.
    pub fn delay(&self, m: usize, theta: f64) -> f64 {
        let [cx, cy] = self.centroid();
        let [x, y] = self.positions[m];
        -((x - cx) * theta.cos() + (y - cy) * theta.sin()) / self.speed_of_sound
    }

    pub fn delays(&self, theta: f64) -> Vec<f64> {
        (0..self.num_mics()).map(|m| self.delay(m, theta)).collect()
    }
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self::uniform_circular(DEFAULT_UCA_MICS, DEFAULT_UCA_RADIUS, DEFAULT_SPEED_OF_SOUND)
            .expect("default array is valid")
    }
}

/// `N` look directions equally spaced over the full circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectionGrid {
    count: usize,
}

impl DirectionGrid {
    /// Direction counts offered by default configuration (15, 10, 5, 3 and
    /// 1.5 degree resolution).
    pub const STANDARD_SIZES: [usize; 5] = [24, 36, 72, 120, 240];

    pub fn new(count: usize) -> Result<Self> {
        if count < 1 {
            return Err(Error::InvalidArgument("direction grid must be non-empty".into()));
        }
        Ok(Self { count })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn step(&self) -> f64 {
        2.0 * PI / self.count as f64
    }

    pub fn angle(&self, i: usize) -> f64 {
        2.0 * PI * i as f64 / self.count as f64
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.angle(i)).collect()
    }

    /// Index of the grid direction closest to `theta`.
    pub fn nearest(&self, theta: f64) -> usize {
        let k = (theta.rem_euclid(2.0 * PI) / self.step()).round() as usize;
        k % self.count
    }
}

/// Per-microphone phase factors of a far-field plane wave.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub entries: Vec<Complex64>,
    pub angle: f64,
    /// Angular frequency in rad/s.
    pub frequency: f64,
}

/// `z_m = exp(-j omega tau_m(theta))`, with `omega` in rad/s.
pub fn steering(geometry: &ArrayGeometry, theta: f64, omega: f64) -> Result<SteeringVector> {
    if !(omega >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "angular frequency must be non-negative, got {omega}"
        )));
    }
    let entries = geometry
        .delays(theta)
        .into_iter()
        .map(|tau| Complex64::from_polar(1.0, -omega * tau))
        .collect();
    Ok(SteeringVector {
        entries,
        angle: theta,
        frequency: omega,
    })
}

/// Steering rows for every `(angle, frequency)` pair: one `angles x M`
/// block per frequency, rows in angle order.
pub fn steering_blocks(
    geometry: &ArrayGeometry,
    angles: &[f64],
    omegas: &[f64],
) -> Result<Vec<DMatrix<Complex64>>> {
    if angles.is_empty() || omegas.is_empty() {
        return Err(Error::EmptyInput("steering matrix needs angles and frequencies".into()));
    }
    let m = geometry.num_mics();
    let delays: Vec<Vec<f64>> = angles.iter().map(|a| geometry.delays(*a)).collect();
    omegas
        .iter()
        .map(|&w| {
            if !(w >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "angular frequency must be non-negative, got {w}"
                )));
            }
            Ok(DMatrix::from_fn(angles.len(), m, |i, j| {
                Complex64::from_polar(1.0, -w * delays[i][j])
            }))
        })
        .collect()
}

/// [`steering_blocks`] over a direction grid.
pub fn steering_matrix(
    geometry: &ArrayGeometry,
    grid: &DirectionGrid,
    omegas: &[f64],
) -> Result<Vec<DMatrix<Complex64>>> {
    steering_blocks(geometry, &grid.angles(), omegas)
}
