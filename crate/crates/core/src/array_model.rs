//! Planar array geometry, steering vectors and the three-pilot observation model.
//!
//! Elements are laid out row-major over `(m, n)`: element `(m, n)` (1-based)
//! lives at flat index `(m - 1) * N + (n - 1)`. Every vector of length `M * N`
//! in this crate follows that layout.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::ops::{Add, Neg, Sub};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gains below this magnitude have no defined phase.
pub const DEGENERATE_GAIN: f64 = 1e-12;

/// Rectangular `M x N` array. Spacings are stored as ratios `d / lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    m: usize,
    n: usize,
    d1: f64,
    d2: f64,
}

impl ArrayGeometry {
    /// `d1` and `d2` are element spacings in wavelengths.
    pub fn new(m: usize, n: usize, d1: f64, d2: f64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidParameter(format!(
                "array dimensions must be positive, got {m}x{n}"
            )));
        }
        if !(d1 > 0.0 && d1.is_finite() && d2 > 0.0 && d2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "element spacings must be positive, got d1={d1}, d2={d2}"
            )));
        }
        Ok(Self { m, n, d1, d2 })
    }

    /// Spacings and wavelength in the same physical unit.
    pub fn from_physical(m: usize, n: usize, d1: f64, d2: f64, wavelength: f64) -> Result<Self> {
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        Self::new(m, n, d1 / wavelength, d2 / wavelength)
    }

    /// Half-wavelength spaced `m x n` array.
    pub fn half_wavelength(m: usize, n: usize) -> Result<Self> {
        Self::new(m, n, 0.5, 0.5)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d1(&self) -> f64 {
        self.d1
    }

    pub fn d2(&self) -> f64 {
        self.d2
    }

    /// Number of elements, `M * N`.
    pub fn len(&self) -> usize {
        self.m * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat index of the 1-based element `(m, n)`.
    pub fn flat_index(&self, m: usize, n: usize) -> usize {
        debug_assert!((1..=self.m).contains(&m) && (1..=self.n).contains(&n));
        (m - 1) * self.n + (n - 1)
    }
}

/// Angle of arrival: elevation `theta` in `[0, pi/2]`, azimuth `phi` in `[-pi, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AoA {
    theta: f64,
    phi: f64,
}

impl AoA {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=FRAC_PI_2).contains(&theta) {
            return Err(Error::InvalidParameter(format!(
                "elevation {theta} outside [0, pi/2]"
            )));
        }
        if !(-PI..PI).contains(&phi) {
            return Err(Error::InvalidParameter(format!(
                "azimuth {phi} outside [-pi, pi)"
            )));
        }
        Ok(Self { theta, phi })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

/// Normalized spatial frequencies `[x1, x2]` along the two array axes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DirectionParams {
    pub x1: f64,
    pub x2: f64,
}

impl DirectionParams {
    pub const ZERO: Self = Self { x1: 0.0, x2: 0.0 };

    pub const fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    pub fn is_finite(&self) -> bool {
        self.x1.is_finite() && self.x2.is_finite()
    }

    /// True when both components lie in the open interval `(-1, 1)`.
    pub fn in_main_lobe(&self) -> bool {
        self.x1.abs() < 1.0 && self.x2.abs() < 1.0
    }
}

impl Add for DirectionParams {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self::new(self.x1 + rhs.x1, self.x2 + rhs.x2)
    }
}

impl Sub for DirectionParams {
    type Output = Self;

    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x1 - rhs.x1, self.x2 - rhs.x2)
    }
}

impl Neg for DirectionParams {
    type Output = Self;

    fn neg(self) -> Self {
        Self::new(-self.x1, -self.x2)
    }
}

/// Channel parameter vector `[Re beta, Im beta, x1, x2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub beta: Complex64,
    pub x: DirectionParams,
}

impl ChannelParams {
    pub fn new(beta: Complex64, x: DirectionParams) -> Self {
        Self { beta, x }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.beta.re, self.beta.im, self.x.x1, self.x.x2]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(Complex64::new(v[0], v[1]), DirectionParams::new(v[2], v[3]))
    }

    pub fn is_finite(&self) -> bool {
        self.beta.is_finite() && self.x.is_finite()
    }

    /// Channel vector `h = beta * a(x)`.
    pub fn channel_vector(&self, geom: &ArrayGeometry) -> Vec<Complex64> {
        let mut a = steering_vector(self.x, geom);
        a.iter_mut().for_each(|v| *v *= self.beta);
        a
    }
}

/// Pilot symbol `s_p` and per-sample complex noise variance `sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    symbol: Complex64,
    noise_var: f64,
}

impl PilotConfig {
    pub fn new(symbol: Complex64, noise_var: f64) -> Result<Self> {
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be positive, got {noise_var}"
            )));
        }
        if !(symbol.norm() > 0.0 && symbol.is_finite()) {
            return Err(Error::InvalidParameter("pilot symbol must be nonzero".into()));
        }
        Ok(Self { symbol, noise_var })
    }

    /// Unit pilot with transmit SNR `|s_p|^2 / sigma^2` given in dB.
    pub fn from_snr_db(snr_db: f64) -> Result<Self> {
        Self::new(Complex64::new(1.0, 0.0), 10f64.powf(-snr_db / 10.0))
    }

    pub fn symbol(&self) -> Complex64 {
        self.symbol
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Pilot energy `E_p = |s_p|^2`.
    pub fn energy(&self) -> f64 {
        self.symbol.norm_sqr()
    }

    pub fn snr(&self) -> f64 {
        self.energy() / self.noise_var
    }
}

pub fn aoa_to_direction(aoa: AoA, geom: &ArrayGeometry) -> DirectionParams {
    let c = aoa.theta.cos();
    DirectionParams::new(
        geom.m as f64 * geom.d1 * c * aoa.phi.cos(),
        geom.n as f64 * geom.d2 * c * aoa.phi.sin(),
    )
}

/// `a_mn(x) = exp(j 2 pi ((m-1) x1 / M + (n-1) x2 / N))`.
pub fn steering_vector(x: DirectionParams, geom: &ArrayGeometry) -> Vec<Complex64> {
    let (m_count, n_count) = (geom.m, geom.n);
    let row: Vec<Complex64> = (0..n_count)
        .map(|n| Complex64::cis(TAU * n as f64 * x.x2 / n_count as f64))
        .collect();
    let mut out = Vec::with_capacity(geom.len());
    for m in 0..m_count {
        let col = Complex64::cis(TAU * m as f64 * x.x1 / m_count as f64);
        out.extend(row.iter().map(|r| col * r));
    }
    out
}

/// Partial derivatives `(da/dx1, da/dx2)` of the steering vector.
pub fn steering_gradient(
    x: DirectionParams,
    geom: &ArrayGeometry,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let a = steering_vector(x, geom);
    let (m_count, n_count) = (geom.m as f64, geom.n as f64);
    let mut d1 = Vec::with_capacity(a.len());
    let mut d2 = Vec::with_capacity(a.len());
    for (idx, v) in a.iter().enumerate() {
        let (m, n) = ((idx / geom.n) as f64, (idx % geom.n) as f64);
        d1.push(Complex64::new(0.0, TAU * m / m_count) * v);
        d2.push(Complex64::new(0.0, TAU * n / n_count) * v);
    }
    (d1, d2)
}

/// `w^H v` for equal-length vectors.
pub fn inner(w: &[Complex64], v: &[Complex64]) -> Complex64 {
    w.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

/// Three unit-norm analog beamformers steered to `base + offset_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    base: DirectionParams,
    offsets: [DirectionParams; 3],
    geom: ArrayGeometry,
    columns: [Vec<Complex64>; 3],
}

impl ProbeSet {
    pub fn new(base: DirectionParams, offsets: [DirectionParams; 3], geom: &ArrayGeometry) -> Self {
        let scale = 1.0 / (geom.len() as f64).sqrt();
        let columns = offsets.map(|d| {
            let mut w = steering_vector(base + d, geom);
            w.iter_mut().for_each(|v| *v *= scale);
            w
        });
        Self {
            base,
            offsets,
            geom: *geom,
            columns,
        }
    }

    pub fn base(&self) -> DirectionParams {
        self.base
    }

    pub fn offsets(&self) -> [DirectionParams; 3] {
        self.offsets
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geom
    }

    /// Column `w_i` of the `MN x 3` beamforming matrix.
    pub fn column(&self, i: usize) -> &[Complex64] {
        &self.columns[i]
    }

    /// `W^H v`.
    pub fn project(&self, v: &[Complex64]) -> [Complex64; 3] {
        [0, 1, 2].map(|i| inner(&self.columns[i], v))
    }
}

/// Noiseless response `s_p * beta * W^H a(x)`.
pub fn noiseless_observation(
    psi: &ChannelParams,
    probes: &ProbeSet,
    pilot: &PilotConfig,
) -> [Complex64; 3] {
    let a = steering_vector(psi.x, probes.geometry());
    let scale = pilot.symbol * psi.beta;
    probes.project(&a).map(|g| scale * g)
}

/// Circularly symmetric complex Gaussian with variance `noise_var`.
pub fn sample_cn<R: Rng + ?Sized>(noise_var: f64, rng: &mut R) -> Complex64 {
    let s = (noise_var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

pub fn sample_noise<R: Rng + ?Sized>(pilot: &PilotConfig, rng: &mut R) -> [Complex64; 3] {
    let z0 = sample_cn(pilot.noise_var, rng);
    let z1 = sample_cn(pilot.noise_var, rng);
    let z2 = sample_cn(pilot.noise_var, rng);
    [z0, z1, z2]
}

/// Noisy three-pilot observation `y_i = s_p beta w_i^H a(x) + z_i`.
pub fn observe<R: Rng + ?Sized>(
    psi: &ChannelParams,
    probes: &ProbeSet,
    pilot: &PilotConfig,
    rng: &mut R,
) -> [Complex64; 3] {
    let clean = noiseless_observation(psi, probes, pilot);
    let z = sample_noise(pilot, rng);
    [clean[0] + z[0], clean[1] + z[1], clean[2] + z[2]]
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_phase(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Pairwise phase differences `[y1 - y2, y1 - y3, y2 - y3]` of the noiseless observations.
pub fn phase_difference_residual(
    psi: &ChannelParams,
    probes: &ProbeSet,
    pilot: &PilotConfig,
) -> Result<[f64; 3]> {
    let y = noiseless_observation(psi, probes, pilot);
    let a = steering_vector(psi.x, probes.geometry());
    for (index, g) in probes.project(&a).iter().enumerate() {
        if g.norm() < DEGENERATE_GAIN {
            return Err(Error::DegenerateProbe {
                index,
                gain: g.norm(),
            });
        }
    }
    let ph = y.map(|v| v.arg());
    Ok([
        wrap_phase(ph[0] - ph[1]),
        wrap_phase(ph[0] - ph[2]),
        wrap_phase(ph[1] - ph[2]),
    ])
}

/// Phase differences predicted from the offsets alone, valid for offsets
/// inside the main lobe where every Dirichlet factor is positive.
pub fn phase_difference_closed_form(offsets: &[DirectionParams; 3], geom: &ArrayGeometry) -> [f64; 3] {
    let fm = (geom.m as f64 - 1.0) / geom.m as f64;
    let fn_ = (geom.n as f64 - 1.0) / geom.n as f64;
    let diff = |i: usize, j: usize| {
        let (di, dj) = (offsets[i], offsets[j]);
        wrap_phase(PI * (fm * (dj.x1 - di.x1) + fn_ * (dj.x2 - di.x2)))
    };
    [diff(0, 1), diff(0, 2), diff(1, 2)]
}
