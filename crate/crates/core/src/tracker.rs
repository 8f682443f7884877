//! Coarse beam sweeping and the recursive joint beam/channel update.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::array_model::{
    inner, sample_cn, steering_vector, ArrayGeometry, ChannelParams, DirectionParams, PilotConfig,
    ProbeSet,
};
use crate::error::{Error, Result};
use crate::fisher_crlb::{FisherMatrix, Projections};

/// `|beta_hat|` below this marks a run as diverged.
pub const MIN_BETA: f64 = 1e-9;

/// Candidate directions scored during the coarse sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    m0: usize,
    n0: usize,
    points: Vec<DirectionParams>,
}

impl Codebook {
    pub fn new(geom: &ArrayGeometry, m0: usize, n0: usize) -> Result<Self> {
        if m0 < geom.m() || n0 < geom.n() {
            return Err(Error::InvalidParameter(format!(
                "codebook {m0}x{n0} smaller than the {}x{} array",
                geom.m(),
                geom.n()
            )));
        }
        let (m, n) = (geom.m() as f64, geom.n() as f64);
        let mut points = Vec::with_capacity(m0 * n0);
        for i in 1..=m0 {
            for j in 1..=n0 {
                points.push(DirectionParams::new(
                    (2.0 * i as f64 - 1.0 - m0 as f64) * m * geom.d1() / m0 as f64,
                    (2.0 * j as f64 - 1.0 - n0 as f64) * n * geom.d2() / n0 as f64,
                ));
            }
        }
        Ok(Self { m0, n0, points })
    }

    /// `M0 = 2M`, `N0 = 2N`.
    pub fn default_for(geom: &ArrayGeometry) -> Self {
        Self::new(geom, 2 * geom.m(), 2 * geom.n()).expect("2M >= M")
    }

    pub fn m0(&self) -> usize {
        self.m0
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn points(&self) -> &[DirectionParams] {
        &self.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// `b_k = epsilon / (k + k0)`.
    Diminishing { epsilon: f64, k0: f64 },
    Constant { value: f64 },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Diminishing { epsilon, k0 } => epsilon > 0.0 && k0 >= 0.0 && k0.is_finite(),
            Self::Constant { value } => value > 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid step schedule {self:?}")))
        }
    }
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self::Diminishing {
            epsilon: 1.0,
            k0: 0.0,
        }
    }
}

/// Step size `b_k` for slot `k >= 1`.
pub fn step_size(schedule: &StepSchedule, k: u64) -> f64 {
    match *schedule {
        StepSchedule::Diminishing { epsilon, k0 } => epsilon / (k as f64 + k0),
        StepSchedule::Constant { value } => value,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub psi_hat: ChannelParams,
    pub slot: u64,
    pub schedule: StepSchedule,
    pub offsets: [DirectionParams; 3],
}

impl TrackerState {
    pub fn new(psi_hat: ChannelParams, schedule: StepSchedule, offsets: [DirectionParams; 3]) -> Self {
        Self {
            psi_hat,
            slot: 0,
            schedule,
            offsets,
        }
    }
}

/// The `M * N` sweep beams, one per element position, in flat order.
pub fn sweep_beams(geom: &ArrayGeometry) -> Vec<Vec<Complex64>> {
    let scale = 1.0 / (geom.len() as f64).sqrt();
    let (m, n) = (geom.m() as f64, geom.n() as f64);
    let mut beams = Vec::with_capacity(geom.len());
    for i in 1..=geom.m() {
        for j in 1..=geom.n() {
            let x = DirectionParams::new(
                (2.0 * i as f64 - 1.0 - m) * geom.d1(),
                (2.0 * j as f64 - 1.0 - n) * geom.d2(),
            );
            let mut w = steering_vector(x, geom);
            w.iter_mut().for_each(|v| *v *= scale);
            beams.push(w);
        }
    }
    beams
}

/// Noiseless sweep observations `s_p beta w_mn^H a(x)`.
pub fn sweep_response(geom: &ArrayGeometry, pilot: &PilotConfig, psi: &ChannelParams) -> Vec<Complex64> {
    let a = steering_vector(psi.x, geom);
    let scale = pilot.symbol() * psi.beta;
    sweep_beams(geom).iter().map(|w| scale * inner(w, &a)).collect()
}

/// Initial estimate from a full set of sweep observations: codebook argmax of
/// `|a(x)^H W y|` (ties to the lowest index), then least squares for beta.
pub fn coarse_sweep_from_observations(
    geom: &ArrayGeometry,
    codebook: &Codebook,
    pilot: &PilotConfig,
    y_sweep: &[Complex64],
) -> Result<ChannelParams> {
    let beams = sweep_beams(geom);
    if y_sweep.len() != beams.len() {
        return Err(Error::InvalidParameter(format!(
            "expected {} sweep observations, got {}",
            beams.len(),
            y_sweep.len()
        )));
    }
    // combined = W y
    let mut combined = vec![Complex64::new(0.0, 0.0); geom.len()];
    for (w, y) in beams.iter().zip(y_sweep) {
        for (c, wv) in combined.iter_mut().zip(w) {
            *c += wv * y;
        }
    }
    let mut best = (0usize, f64::NEG_INFINITY);
    for (idx, x) in codebook.points().iter().enumerate() {
        let score = inner(&steering_vector(*x, geom), &combined).norm();
        if score > best.1 {
            best = (idx, score);
        }
    }
    let x0 = codebook.points()[best.0];
    let a = steering_vector(x0, geom);
    let u: Vec<Complex64> = beams.iter().map(|w| inner(w, &a)).collect();
    let energy: f64 = u.iter().map(|v| v.norm_sqr()).sum();
    if !(energy > 0.0) {
        return Err(Error::RankDeficient);
    }
    let beta = inner(&u, y_sweep) / energy / pilot.symbol();
    Ok(ChannelParams::new(beta, x0))
}

pub fn coarse_sweep<R: Rng + ?Sized>(
    geom: &ArrayGeometry,
    codebook: &Codebook,
    pilot: &PilotConfig,
    psi_true: &ChannelParams,
    rng: &mut R,
) -> Result<ChannelParams> {
    let mut y = sweep_response(geom, pilot, psi_true);
    for v in &mut y {
        *v += sample_cn(pilot.noise_var(), rng);
    }
    coarse_sweep_from_observations(geom, codebook, pilot, &y)
}

/// Probes centered on the current direction estimate.
pub fn make_probes(state: &TrackerState, geom: &ArrayGeometry) -> ProbeSet {
    ProbeSet::new(state.psi_hat.x, state.offsets, geom)
}

fn score_vector(proj: &Projections, v: &[Complex64; 3]) -> [Complex64; 3] {
    let dot = |a: &[Complex64; 3]| -> Complex64 { a.iter().zip(v).map(|(p, q)| p.conj() * q).sum() };
    [dot(&proj.g), dot(&proj.gt1), dot(&proj.gt2)]
}

fn stack(s: [Complex64; 3]) -> nalgebra::Vector4<f64> {
    nalgebra::Vector4::new(s[0].re, s[0].im, s[1].re, s[2].re)
}

fn information_at(psi_hat: &ChannelParams, probes: &ProbeSet, pilot: &PilotConfig) -> Result<(Projections, nalgebra::Matrix4<f64>)> {
    if !psi_hat.is_finite() || psi_hat.beta.norm() < MIN_BETA {
        return Err(Error::SingularInformation {
            condition: f64::INFINITY,
        });
    }
    let proj = Projections::from_probes(psi_hat.beta, psi_hat.x, probes);
    let inv = FisherMatrix::from_projections(&proj, pilot).inverse()?;
    Ok((proj, inv))
}

/// One tracking step with externally realized probes `probes` (which must be
/// `make_probes(state)`) and their observations `y`.
pub fn update_with_probes(
    state: &TrackerState,
    probes: &ProbeSet,
    y: &[Complex64; 3],
    pilot: &PilotConfig,
) -> Result<TrackerState> {
    let psi = state.psi_hat;
    let (proj, inv) = information_at(&psi, probes, pilot)?;
    let s = pilot.symbol();
    let residual = [0, 1, 2].map(|i| y[i] - s * psi.beta * proj.g[i]);
    let weighted = residual.map(|r| s.conj() * r);
    let score = stack(score_vector(&proj, &weighted));
    let k = state.slot + 1;
    let b = step_size(&state.schedule, k);
    let step = inv * score * (2.0 / pilot.noise_var() * b);
    let mut next = psi.to_array();
    for (v, d) in next.iter_mut().zip(step.iter()) {
        *v += d;
    }
    Ok(TrackerState {
        psi_hat: ChannelParams::from_array(next),
        slot: k,
        ..*state
    })
}

pub fn update(
    state: &TrackerState,
    y: &[Complex64; 3],
    pilot: &PilotConfig,
    geom: &ArrayGeometry,
) -> Result<TrackerState> {
    update_with_probes(state, &make_probes(state, geom), y, pilot)
}

/// Mean update direction: `I^-1` times the expected score at `psi_hat` when the channel is `psi_true`.
pub fn drift_f(
    psi_hat: &ChannelParams,
    psi_true: &ChannelParams,
    probes: &ProbeSet,
    pilot: &PilotConfig,
) -> Result<[f64; 4]> {
    let (proj, inv) = information_at(psi_hat, probes, pilot)?;
    let truth = probes.project(&steering_vector(psi_true.x, probes.geometry()));
    let diff = [0, 1, 2].map(|i| psi_true.beta * truth[i] - psi_hat.beta * proj.g[i]);
    let v = stack(score_vector(&proj, &diff)) * (2.0 * pilot.energy() / pilot.noise_var());
    let f = inv * v;
    Ok([f[0], f[1], f[2], f[3]])
}

/// Zero-mean part of the update direction produced by the noise `z`.
pub fn noise_term(
    psi_hat: &ChannelParams,
    probes: &ProbeSet,
    pilot: &PilotConfig,
    z: &[Complex64; 3],
) -> Result<[f64; 4]> {
    let (proj, inv) = information_at(psi_hat, probes, pilot)?;
    let s = pilot.symbol();
    let weighted = z.map(|v| s.conj() * v);
    let out = inv * stack(score_vector(&proj, &weighted)) * (2.0 / pilot.noise_var());
    Ok([out[0], out[1], out[2], out[3]])
}
