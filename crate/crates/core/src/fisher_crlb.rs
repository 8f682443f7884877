//! Fisher information, the channel-vector CRLB and the closed forms behind them.
//!
//! The Fisher matrix is indexed by `[Re beta, Im beta, x1, x2]` and already
//! carries the factor `2 |s_p|^2 / sigma^2`. [`crlb`] returns the per-element
//! bound `(1/MN) Tr{(k I)^-1 T}`. [`asymptotic_crlb`] returns the limit of
//! `MN` times that bound as `M, N -> inf`; divide by `MN` (see
//! [`asymptotic_crlb_per_element`]) before comparing against [`crlb`].

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix4, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array_model::{
    steering_gradient, steering_vector, ArrayGeometry, ChannelParams, DirectionParams,
    PilotConfig, ProbeSet,
};
use crate::error::{Error, Result};

/// Information matrices above this condition number are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Largest tolerated imaginary residue (relative) when a trace must be real.
pub const TRACE_IMAG_TOL: f64 = 1e-10;

/// Below this `|delta|` the Dirichlet ratio is replaced by its limit.
const DIRICHLET_LIMIT: f64 = 1e-6;

/// Below this `|delta|` the weighted geometric sum switches to its power series;
/// the closed form loses digits to cancellation near zero.
const SERIES_CUTOFF: f64 = 0.05;

const J: Complex64 = Complex64::new(0.0, 1.0);

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `g = W^H a(x)` and the beta-scaled gradient projections `beta W^H da/dx_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projections {
    pub g: [Complex64; 3],
    pub gt1: [Complex64; 3],
    pub gt2: [Complex64; 3],
}

impl Projections {
    /// Direct evaluation against the realized probe columns.
    pub fn from_probes(beta: Complex64, x: DirectionParams, probes: &ProbeSet) -> Self {
        let geom = probes.geometry();
        let a = steering_vector(x, geom);
        let (d1, d2) = steering_gradient(x, geom);
        let g = probes.project(&a);
        let gt1 = probes.project(&d1).map(|v| beta * v);
        let gt2 = probes.project(&d2).map(|v| beta * v);
        Self { g, gt1, gt2 }
    }

    /// Closed-form evaluation from the offsets alone (independent of `x`).
    pub fn closed_form(
        beta: Complex64,
        offsets: &[DirectionParams; 3],
        geom: &ArrayGeometry,
    ) -> Result<Self> {
        let mut out = Self {
            g: [c(0.0); 3],
            gt1: [c(0.0); 3],
            gt2: [c(0.0); 3],
        };
        for (i, d) in offsets.iter().enumerate() {
            out.g[i] = g_closed_form(*d, geom);
            out.gt1[i] = gtilde_closed_form(*d, geom, beta)?;
            out.gt2[i] = gtilde2_closed_form(*d, geom, beta)?;
        }
        Ok(out)
    }

    /// Element-wise limits of the projections divided by `sqrt(MN)`.
    pub fn asymptotic(beta: Complex64, offsets: &[DirectionParams; 3]) -> Self {
        Self {
            g: offsets.map(asymptotic_g),
            gt1: offsets.map(|d| asymptotic_gtilde(d.x1, d.x2, beta)),
            gt2: offsets.map(|d| asymptotic_gtilde(d.x2, d.x1, beta)),
        }
    }
}

/// Real symmetric 4x4 Fisher information matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherMatrix {
    pub entries: Matrix4<f64>,
    /// The factor `2 |s_p|^2 / sigma^2` already folded into `entries`.
    pub snr_scale: f64,
}

impl FisherMatrix {
    pub fn from_projections(proj: &Projections, pilot: &PilotConfig) -> Self {
        let scale = 2.0 * pilot.energy() / pilot.noise_var();
        let dot = |a: &[Complex64; 3], b: &[Complex64; 3]| -> Complex64 {
            a.iter().zip(b).map(|(u, v)| u.conj() * v).sum()
        };
        let gg = dot(&proj.g, &proj.g).re;
        let c1 = dot(&proj.g, &proj.gt1);
        let c2 = dot(&proj.g, &proj.gt2);
        let t11 = dot(&proj.gt1, &proj.gt1).re;
        let t22 = dot(&proj.gt2, &proj.gt2).re;
        let t12 = dot(&proj.gt1, &proj.gt2).re;
        #[rustfmt::skip]
        let m = Matrix4::new(
            gg,   0.0,  c1.re, c2.re,
            0.0,  gg,   c1.im, c2.im,
            c1.re, c1.im, t11, t12,
            c2.re, c2.im, t12, t22,
        );
        Self {
            entries: m * scale,
            snr_scale: scale,
        }
    }

    /// Inverse with a symmetric-eigenvalue condition guard.
    pub fn inverse(&self) -> Result<Matrix4<f64>> {
        checked_inverse(&self.entries)
    }

    pub fn condition_number(&self) -> f64 {
        condition_number(&self.entries)
    }
}

/// `lambda_max / lambda_min` of a symmetric matrix; infinite when not positive definite.
pub fn condition_number(m: &Matrix4<f64>) -> f64 {
    if !m.iter().all(|v| v.is_finite()) {
        return f64::INFINITY;
    }
    let eig = SymmetricEigen::new(*m).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 || max <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn checked_inverse(m: &Matrix4<f64>) -> Result<Matrix4<f64>> {
    let condition = condition_number(m);
    if condition > MAX_CONDITION {
        return Err(Error::SingularInformation { condition });
    }
    m.try_inverse()
        .ok_or(Error::SingularInformation { condition })
}

pub fn fisher_matrix(psi: &ChannelParams, probes: &ProbeSet, pilot: &PilotConfig) -> FisherMatrix {
    FisherMatrix::from_projections(&Projections::from_probes(psi.beta, psi.x, probes), pilot)
}

/// `T(M, N, beta) = sum_{m,n} v_mn^H v_mn`, a Hermitian 4x4 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightingMatrix {
    pub entries: Matrix4<Complex64>,
}

pub fn weighting_t(geom: &ArrayGeometry, beta: Complex64) -> WeightingMatrix {
    let (m, n) = (geom.m() as f64, geom.n() as f64);
    let fm = (m - 1.0) / m;
    let fn_ = (n - 1.0) / n;
    let b = beta;
    let bc = beta.conj();
    let p2 = PI * PI * beta.norm_sqr();
    #[rustfmt::skip]
    let t = Matrix4::new(
        c(1.0),            J,               J * PI * b * fm,   J * PI * b * fn_,
        -J,                c(1.0),          b * PI * fm,       b * PI * fn_,
        -J * PI * bc * fm, bc * PI * fm,    c(2.0 / 3.0 * p2 * (m - 1.0) * (2.0 * m - 1.0) / (m * m)), c(p2 * fm * fn_),
        -J * PI * bc * fn_, bc * PI * fn_,  c(p2 * fm * fn_),  c(2.0 / 3.0 * p2 * (n - 1.0) * (2.0 * n - 1.0) / (n * n)),
    );
    WeightingMatrix {
        entries: t * c(m * n),
    }
}

/// `Tr{S T}` for real symmetric `S` and Hermitian `T`; errors if the
/// imaginary residue is not roundoff.
pub fn real_trace(s: &Matrix4<f64>, t: &Matrix4<Complex64>) -> Result<f64> {
    let mut tr = c(0.0);
    for i in 0..4 {
        for j in 0..4 {
            tr += t[(j, i)] * s[(i, j)];
        }
    }
    if tr.im.abs() > TRACE_IMAG_TOL * tr.re.abs().max(1.0) {
        return Err(Error::ComplexResidue(tr.im));
    }
    Ok(tr.re)
}

/// Per-element CRLB after `slots_k` slots probed with the same beamformers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrlbValue {
    pub value: f64,
    pub slots_k: u64,
}

pub fn crlb_from_projections(
    proj: &Projections,
    beta: Complex64,
    geom: &ArrayGeometry,
    pilot: &PilotConfig,
    k: u64,
) -> Result<CrlbValue> {
    if k == 0 {
        return Err(Error::InvalidParameter("slot count k must be >= 1".into()));
    }
    let fisher = FisherMatrix::from_projections(proj, pilot);
    let inv = fisher.inverse()?;
    let t = weighting_t(geom, beta);
    let tr = real_trace(&inv, &t.entries)?;
    Ok(CrlbValue {
        value: tr.max(0.0) / (geom.len() as f64 * k as f64),
        slots_k: k,
    })
}

/// Per-element channel-vector CRLB `(1/MN) Tr{(k I(psi, W))^-1 T}`.
pub fn crlb(psi: &ChannelParams, probes: &ProbeSet, pilot: &PilotConfig, k: u64) -> Result<CrlbValue> {
    let proj = Projections::from_probes(psi.beta, psi.x, probes);
    crlb_from_projections(&proj, psi.beta, probes.geometry(), pilot, k)
}

/// `sin(pi d) / sin(pi d / count)` with removable singularities filled in.
pub fn dirichlet(delta: f64, count: usize) -> f64 {
    let count_f = count as f64;
    let p = (delta / count_f).round();
    let eps = delta - p * count_f;
    if eps.abs() < DIRICHLET_LIMIT {
        // limit at delta = p * count
        let parity = ((p as i64) * (count as i64 - 1)).rem_euclid(2);
        let sign = if parity == 0 { 1.0 } else { -1.0 };
        return sign * count_f;
    }
    (PI * delta).sin() / (PI * delta / count_f).sin()
}

/// `sum_{m=0}^{count-1} exp(-j 2 pi m delta / count)`.
fn geometric_sum(delta: f64, count: usize) -> Complex64 {
    let count_f = count as f64;
    dirichlet(delta, count) * Complex64::cis(-PI * (count_f - 1.0) * delta / count_f)
}

/// `sum_{m=0}^{count-1} m exp(-j 2 pi m delta / count)`.
fn weighted_geometric_sum(delta: f64, count: usize) -> Complex64 {
    let count_f = count as f64;
    let theta = TAU * delta / count_f;
    if delta.abs() < SERIES_CUTOFF {
        // sum_k (-j theta)^k / k! * sum_m m^(k+1)
        let mut total = c(0.0);
        let mut coef = c(1.0);
        for k in 0..24 {
            if k > 0 {
                coef *= -J * theta / k as f64;
            }
            let power_sum: f64 = (1..count).map(|m| (m as f64).powi(k + 1)).sum();
            let term = coef * power_sum;
            total += term;
            if term.norm() <= 1e-18 * total.norm() {
                break;
            }
        }
        return total;
    }
    let z = Complex64::cis(-theta);
    let numerator = c(count_f - 1.0) * Complex64::cis(-TAU * delta)
        - c(count_f) * Complex64::cis(-TAU * (count_f - 1.0) * delta / count_f)
        + c(1.0);
    let denom = (c(1.0) - z) * (c(1.0) - z);
    numerator / denom * z
}

/// Closed form of `w_i^H a(x)` for a probe offset `delta`.
pub fn g_closed_form(delta: DirectionParams, geom: &ArrayGeometry) -> Complex64 {
    let (m, n) = (geom.m() as f64, geom.n() as f64);
    let phase = Complex64::cis(-PI * ((m - 1.0) * delta.x1 / m + (n - 1.0) * delta.x2 / n));
    phase * (dirichlet(delta.x1, geom.m()) * dirichlet(delta.x2, geom.n()) / (m * n).sqrt())
}

fn check_main_lobe(delta: DirectionParams) -> Result<()> {
    if delta.in_main_lobe() {
        Ok(())
    } else {
        Err(Error::OutsideMainLobe(delta.x1, delta.x2))
    }
}

/// Closed form of `beta w_i^H da(x)/dx1`.
pub fn gtilde_closed_form(delta: DirectionParams, geom: &ArrayGeometry, beta: Complex64) -> Result<Complex64> {
    check_main_lobe(delta)?;
    let (m, n) = (geom.m(), geom.n());
    let scale = J * TAU * beta / (m as f64 * ((m * n) as f64).sqrt());
    Ok(scale * weighted_geometric_sum(delta.x1, m) * geometric_sum(delta.x2, n))
}

/// Closed form of `beta w_i^H da(x)/dx2`, by exchanging the roles of the axes.
pub fn gtilde2_closed_form(delta: DirectionParams, geom: &ArrayGeometry, beta: Complex64) -> Result<Complex64> {
    check_main_lobe(delta)?;
    let (m, n) = (geom.m(), geom.n());
    let scale = J * TAU * beta / (n as f64 * ((m * n) as f64).sqrt());
    Ok(scale * weighted_geometric_sum(delta.x2, n) * geometric_sum(delta.x1, m))
}

/// `sin(x) / x`.
pub fn sa(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0
    } else {
        x.sin() / x
    }
}

/// `integral_0^1 u exp(-j a u) du`.
fn ramp_integral(a: f64) -> Complex64 {
    if a.abs() < 1.0 {
        // sum_k (-j a)^k / (k! (k + 2))
        let mut total = c(0.0);
        let mut coef = c(1.0);
        for k in 0..30 {
            if k > 0 {
                coef *= -J * a / k as f64;
            }
            total += coef / (k as f64 + 2.0);
        }
        return total;
    }
    (Complex64::cis(-a) * (c(1.0) + J * a) - c(1.0)) / (a * a)
}

fn asymptotic_g(d: DirectionParams) -> Complex64 {
    Complex64::cis(-PI * (d.x1 + d.x2)) * (sa(PI * d.x1) * sa(PI * d.x2))
}

/// Limit of `beta w^H da/dx_along / sqrt(MN)`; `across` is the other axis.
fn asymptotic_gtilde(along: f64, across: f64, beta: Complex64) -> Complex64 {
    J * TAU * beta * Complex64::cis(-PI * across) * sa(PI * across) * ramp_integral(TAU * along)
}

/// `lim T(M, N, beta) / MN`.
pub fn weighting_t_limit(beta: Complex64) -> Matrix4<Complex64> {
    let b = beta;
    let bc = beta.conj();
    let p2 = PI * PI * beta.norm_sqr();
    #[rustfmt::skip]
    let t = Matrix4::new(
        c(1.0),       J,          J * PI * b,         J * PI * b,
        -J,           c(1.0),     b * PI,             b * PI,
        -J * PI * bc, bc * PI,    c(4.0 / 3.0 * p2),  c(p2),
        -J * PI * bc, bc * PI,    c(p2),              c(4.0 / 3.0 * p2),
    );
    t
}

/// `lim_{M,N -> inf} MN * CRLB = Tr{(k I_L)^-1 T_L(beta)}`.
pub fn asymptotic_crlb(
    beta: Complex64,
    offsets: &[DirectionParams; 3],
    pilot: &PilotConfig,
    k: u64,
) -> Result<f64> {
    for d in offsets {
        check_main_lobe(*d)?;
    }
    if beta.norm() == 0.0 {
        return Err(Error::SingularInformation {
            condition: f64::INFINITY,
        });
    }
    if k == 0 {
        return Err(Error::InvalidParameter("slot count k must be >= 1".into()));
    }
    let fisher = FisherMatrix::from_projections(&Projections::asymptotic(beta, offsets), pilot);
    let inv = fisher.inverse()? / k as f64;
    real_trace(&inv, &weighting_t_limit(beta))
}

/// [`asymptotic_crlb`] divided by `MN` of `geom`, comparable with [`crlb`].
pub fn asymptotic_crlb_per_element(
    beta: Complex64,
    offsets: &[DirectionParams; 3],
    pilot: &PilotConfig,
    k: u64,
    geom: &ArrayGeometry,
) -> Result<f64> {
    Ok(asymptotic_crlb(beta, offsets, pilot, k)? / geom.len() as f64)
}
