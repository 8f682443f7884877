//! Monte-Carlo scenarios, MSE aggregation against the bound, and export.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array_model::{
    aoa_to_direction, observe, sample_cn, steering_vector, AoA, ArrayGeometry,
    ChannelParams, DirectionParams, PilotConfig, ProbeSet,
};
use crate::error::{Error, Result};
use crate::fisher_crlb::{crlb, fisher_matrix, MAX_CONDITION};
use crate::tracker::{
    coarse_sweep, make_probes, update_with_probes, Codebook, StepSchedule, TrackerState, MIN_BETA,
};

/// Environment variable holding the worker count for trial-level parallelism.
pub const THREADS_ENV: &str = "BEAMTRACK_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticScenario {
    pub geom: ArrayGeometry,
    pub pilot: PilotConfig,
    pub beta: Complex64,
    pub schedule: StepSchedule,
    pub offsets: [DirectionParams; 3],
    pub codebook_m0: usize,
    pub codebook_n0: usize,
    pub slots: u64,
    pub trials: u64,
    pub seed: u64,
    /// Report the mean over converged trials as the headline MSE.
    pub converged_only: bool,
}

impl StaticScenario {
    pub fn validate(&self) -> Result<()> {
        if self.slots == 0 || self.trials == 0 {
            return Err(Error::Config("slots and trials must be at least 1".into()));
        }
        if !(self.beta.is_finite() && self.beta.norm() > 0.0) {
            return Err(Error::Config(format!("beta must be finite and nonzero, got {}", self.beta)));
        }
        if self.offsets.iter().any(|d| !d.is_finite()) {
            return Err(Error::Config("offsets must be finite".into()));
        }
        self.schedule
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Codebook::new(&self.geom, self.codebook_m0, self.codebook_n0)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicScenario {
    #[serde(flatten)]
    pub base: StaticScenario,
    /// Standard deviation of the per-slot elevation and azimuth increments, in radians.
    pub delta_std: f64,
    /// Rician K-factor in dB; `None` keeps the gain at its line-of-sight value.
    pub rician_k_db: Option<f64>,
}

impl DynamicScenario {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(self.delta_std >= 0.0 && self.delta_std.is_finite()) {
            return Err(Error::Config(format!("delta_std must be >= 0, got {}", self.delta_std)));
        }
        if let Some(k) = self.rician_k_db {
            if !k.is_finite() {
                return Err(Error::Config(format!("rician_k_db must be finite, got {k}")));
            }
        }
        Ok(())
    }
}

/// Fixed line-of-sight component plus a fresh diffuse draw per call.
///
/// `beta = sqrt(K/(K+1)) * los + sqrt(1/(K+1)) * |los| * CN(0, 1)`, so a unit
/// modulus `los` gives unit mean power.
pub fn rician_step<R: Rng + ?Sized>(los: Complex64, k_factor_db: f64, rng: &mut R) -> Complex64 {
    if k_factor_db == f64::INFINITY {
        return los;
    }
    let k = 10f64.powf(k_factor_db / 10.0);
    let los_gain = (k / (k + 1.0)).sqrt();
    let diffuse_gain = (1.0 / (k + 1.0)).sqrt() * los.norm();
    los * los_gain + sample_cn(1.0, rng) * diffuse_gain
}

/// Fraction of mean power carried by the diffuse component.
pub fn rician_diffuse_fraction(k_factor_db: f64) -> f64 {
    1.0 / (10f64.powf(k_factor_db / 10.0) + 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    /// Mean of `(1/MN) |h_hat - h|^2` over all trials.
    pub mse_mean: f64,
    /// Same mean restricted to converged trials; `None` when no trial converged.
    pub mse_converged: Option<f64>,
    /// `crlb(k)` at the scenario offsets, static runs only.
    pub crlb_ref: Option<f64>,
    pub diverged_fraction: f64,
    pub trials: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseCurve {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub converged_only: bool,
    pub converged_trials: u64,
    /// Scenario echo for reproducibility.
    pub scenario: serde_json::Value,
    pub records: Vec<SlotRecord>,
}

impl MseCurve {
    /// The headline value written to the CSV `mse_mean` column.
    pub fn headline(&self, record: &SlotRecord) -> f64 {
        if self.converged_only {
            record.mse_converged.unwrap_or(f64::NAN)
        } else {
            record.mse_mean
        }
    }
}

/// Per-trial outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTrace {
    pub mse: Vec<f64>,
    /// First slot at which the estimate froze, if any.
    pub diverged_at: Option<u64>,
    pub converged: bool,
}

struct Dynamics {
    delta_std: f64,
    rician_k_db: f64,
}

fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample_aoa<R: Rng + ?Sized>(rng: &mut R) -> AoA {
    let theta = rng.random_range(0.0..=FRAC_PI_2);
    let phi = rng.random_range(-PI..PI);
    AoA::new(theta, phi).expect("sampled inside the AoA domain")
}

fn advance_aoa<R: Rng + ?Sized>(aoa: AoA, std: f64, rng: &mut R) -> AoA {
    let dt: f64 = rng.sample(StandardNormal);
    let dp: f64 = rng.sample(StandardNormal);
    let theta = (aoa.theta() + std * dt).clamp(0.0, FRAC_PI_2);
    let mut phi = (aoa.phi() + std * dp + PI).rem_euclid(TAU) - PI;
    if phi >= PI {
        phi = -PI;
    }
    AoA::new(theta, phi).expect("clamped and wrapped")
}

/// `(1/MN) |beta_hat a(x_hat) - beta a(x)|^2`.
pub fn channel_mse(estimate: &ChannelParams, truth: &ChannelParams, geom: &ArrayGeometry) -> f64 {
    let a_hat = steering_vector(estimate.x, geom);
    let a = steering_vector(truth.x, geom);
    a_hat
        .iter()
        .zip(&a)
        .map(|(u, v)| (estimate.beta * u - truth.beta * v).norm_sqr())
        .sum::<f64>()
        / geom.len() as f64
}

/// Wraps `d` into `(-period/2, period/2]`.
fn wrap_periodic(d: f64, period: f64) -> f64 {
    let r = d.rem_euclid(period);
    if r > period / 2.0 {
        r - period
    } else {
        r
    }
}

/// Whether the final direction estimate sits within half a beamwidth of the
/// truth, modulo the steering vector's periodicity in `x`.
pub fn direction_converged(estimate: DirectionParams, truth: DirectionParams, geom: &ArrayGeometry) -> bool {
    let e1 = wrap_periodic(estimate.x1 - truth.x1, geom.m() as f64);
    let e2 = wrap_periodic(estimate.x2 - truth.x2, geom.n() as f64);
    e1.abs() < 0.5 && e2.abs() < 0.5
}

fn run_trial(sc: &StaticScenario, codebook: &Codebook, trial: u64, dynamics: Option<&Dynamics>) -> TrialTrace {
    let geom = &sc.geom;
    let mut rng = trial_rng(sc.seed, 2 * trial);
    let mut dyn_rng = trial_rng(sc.seed, 2 * trial + 1);
    let mut aoa = sample_aoa(&mut rng);
    let mut truth = ChannelParams::new(sc.beta, aoa_to_direction(aoa, geom));
    let mut mse = Vec::with_capacity(sc.slots as usize);
    let mut diverged_at = None;

    let initial = coarse_sweep(geom, codebook, &sc.pilot, &truth, &mut rng);
    let mut state = match initial {
        Ok(psi) => TrackerState::new(psi, sc.schedule, sc.offsets),
        Err(_) => {
            diverged_at = Some(0);
            TrackerState::new(
                ChannelParams::new(Complex64::new(0.0, 0.0), codebook.points()[0]),
                sc.schedule,
                sc.offsets,
            )
        }
    };

    for k in 1..=sc.slots {
        if let Some(d) = dynamics {
            if d.delta_std > 0.0 {
                aoa = advance_aoa(aoa, d.delta_std, &mut dyn_rng);
                truth.x = aoa_to_direction(aoa, geom);
            }
            truth.beta = rician_step(sc.beta, d.rician_k_db, &mut dyn_rng);
        }
        if diverged_at.is_none() {
            let probes = make_probes(&state, geom);
            let y = observe(&truth, &probes, &sc.pilot, &mut rng);
            match step(&state, &probes, &y, &sc.pilot) {
                Some(next) => state = next,
                None => diverged_at = Some(k),
            }
        }
        mse.push(channel_mse(&state.psi_hat, &truth, geom));
    }
    let converged = diverged_at.is_none() && direction_converged(state.psi_hat.x, truth.x, geom);
    TrialTrace {
        mse,
        diverged_at,
        converged,
    }
}

fn step(state: &TrackerState, probes: &ProbeSet, y: &[Complex64; 3], pilot: &PilotConfig) -> Option<TrackerState> {
    let next = update_with_probes(state, probes, y, pilot).ok()?;
    let psi = next.psi_hat;
    if !psi.is_finite() || psi.beta.norm() < MIN_BETA {
        return None;
    }
    Some(next)
}

fn worker_count() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

fn run_trials(sc: &StaticScenario, dynamics: Option<&Dynamics>) -> Result<Vec<TrialTrace>> {
    let codebook = Codebook::new(&sc.geom, sc.codebook_m0, sc.codebook_n0)?;
    let job = || -> Vec<TrialTrace> {
        (0..sc.trials)
            .into_par_iter()
            .map(|t| run_trial(sc, &codebook, t, dynamics))
            .collect()
    };
    match worker_count() {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(job))
        }
        None => Ok(job()),
    }
}

/// Fixed-order reduction of per-trial traces into per-slot records.
pub fn aggregate(traces: &[TrialTrace], slots: u64, crlb_ref: Option<&[f64]>) -> Vec<SlotRecord> {
    let trials = traces.len() as u64;
    let converged = traces.iter().filter(|t| t.converged).count() as f64;
    (1..=slots)
        .map(|k| {
            let i = (k - 1) as usize;
            let mut all = 0.0;
            let mut conv = 0.0;
            let mut diverged = 0u64;
            for t in traces {
                all += t.mse[i];
                if t.converged {
                    conv += t.mse[i];
                }
                if t.diverged_at.is_some_and(|d| d <= k) {
                    diverged += 1;
                }
            }
            SlotRecord {
                slot: k,
                mse_mean: all / trials as f64,
                mse_converged: (converged > 0.0).then(|| conv / converged),
                crlb_ref: crlb_ref.map(|c| c[i]),
                diverged_fraction: diverged as f64 / trials as f64,
                trials,
            }
        })
        .collect()
}

/// Bound `crlb(k)` for a static channel probed with the scenario offsets.
pub fn static_reference(sc: &StaticScenario) -> Result<Vec<f64>> {
    let psi = ChannelParams::new(sc.beta, DirectionParams::ZERO);
    let probes = ProbeSet::new(psi.x, sc.offsets, &sc.geom);
    let cond = fisher_matrix(&psi, &probes, &sc.pilot).condition_number();
    if !(cond <= MAX_CONDITION) {
        return Err(Error::Config(format!(
            "offsets give a singular information matrix (condition {cond:e})"
        )));
    }
    (1..=sc.slots)
        .map(|k| crlb(&psi, &probes, &sc.pilot, k).map(|c| c.value))
        .collect()
}

pub fn run_static_traces(sc: &StaticScenario) -> Result<Vec<TrialTrace>> {
    sc.validate()?;
    run_trials(sc, None)
}

pub fn run_static(sc: &StaticScenario) -> Result<MseCurve> {
    let reference = static_reference(sc)?;
    let traces = run_static_traces(sc)?;
    Ok(MseCurve {
        kind: ScenarioKind::Static,
        seed: sc.seed,
        converged_only: sc.converged_only,
        converged_trials: traces.iter().filter(|t| t.converged).count() as u64,
        scenario: serde_json::to_value(sc).expect("scenario serializes"),
        records: aggregate(&traces, sc.slots, Some(&reference)),
    })
}

pub fn run_dynamic(sc: &DynamicScenario) -> Result<MseCurve> {
    sc.validate()?;
    let dynamics = Dynamics {
        delta_std: sc.delta_std,
        rician_k_db: sc.rician_k_db.unwrap_or(f64::INFINITY),
    };
    let traces = run_trials(&sc.base, Some(&dynamics))?;
    Ok(MseCurve {
        kind: ScenarioKind::Dynamic,
        seed: sc.base.seed,
        converged_only: sc.base.converged_only,
        converged_trials: traces.iter().filter(|t| t.converged).count() as u64,
        scenario: serde_json::to_value(sc).expect("scenario serializes"),
        records: aggregate(&traces, sc.base.slots, None),
    })
}

/// Mean of the headline MSE over the last `window` slots.
pub fn steady_state_mse(curve: &MseCurve, window: usize) -> f64 {
    let tail = &curve.records[curve.records.len().saturating_sub(window)..];
    tail.iter().map(|r| curve.headline(r)).sum::<f64>() / tail.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl ExportFormat {
    /// `.json` selects JSON; anything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Csv,
        }
    }
}

pub const CSV_HEADER: [&str; 5] = ["slot", "mse_mean", "crlb_ref", "diverged_fraction", "trials"];

pub fn write_csv<W: Write>(curve: &MseCurve, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &curve.records {
        w.write_record([
            r.slot.to_string(),
            curve.headline(r).to_string(),
            r.crlb_ref.map(|c| c.to_string()).unwrap_or_default(),
            r.diverged_fraction.to_string(),
            r.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(curve: &MseCurve, mut out: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, curve)?;
    out.write_all(b"\n")
}

pub fn export(curve: &MseCurve, path: &Path, format: ExportFormat) -> Result<()> {
    let io_err = |source: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    match format {
        ExportFormat::Csv => write_csv(curve, &mut out).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?,
        ExportFormat::Json => write_json(curve, &mut out).map_err(io_err)?,
    }
    out.flush().map_err(io_err)
}

pub fn import_json(path: &Path) -> Result<MseCurve> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offset_search::REFERENCE_OFFSETS;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn small(seed: u64) -> StaticScenario {
        StaticScenario {
            geom: ArrayGeometry::half_wavelength(4, 4).unwrap(),
            pilot: PilotConfig::from_snr_db(10.0).unwrap(),
            beta: Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2),
            schedule: StepSchedule::default(),
            offsets: REFERENCE_OFFSETS,
            codebook_m0: 8,
            codebook_n0: 8,
            slots: 20,
            trials: 6,
            seed,
            converged_only: false,
        }
    }

    #[test]
    fn rician_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let los = Complex64::new(0.6, 0.8);
        for _ in 0..10 {
            assert_eq!(rician_step(los, f64::INFINITY, &mut rng), los);
        }
        assert!((rician_diffuse_fraction(15.0) - 0.0307).abs() < 1e-4);
    }

    #[test]
    fn angle_walk_stays_in_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut aoa = AoA::new(0.01, 3.1).unwrap();
        for _ in 0..1000 {
            aoa = advance_aoa(aoa, 0.3, &mut rng);
        }
        assert!((0.0..=FRAC_PI_2).contains(&aoa.theta()));
        assert!((-PI..PI).contains(&aoa.phi()));
    }

    #[test]
    fn wrap_periodic_range() {
        assert_eq!(wrap_periodic(7.9, 8.0), -0.09999999999999964);
        assert_eq!(wrap_periodic(4.0, 8.0), 4.0);
        assert_eq!(wrap_periodic(-4.0, 8.0), 4.0);
        assert!(direction_converged(
            DirectionParams::new(3.9, 0.0),
            DirectionParams::new(-3.95, 0.1),
            &ArrayGeometry::half_wavelength(8, 8).unwrap()
        ));
    }

    #[test]
    fn static_run_is_deterministic_and_shaped() {
        let a = run_static(&small(11)).unwrap();
        let b = run_static(&small(11)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 20);
        for w in a.records.windows(2) {
            assert!(w[1].diverged_fraction >= w[0].diverged_fraction);
        }
        assert!(a.records.iter().all(|r| r.mse_mean >= 0.0 && r.crlb_ref.is_some()));
    }

    #[test]
    fn noiseless_on_grid_is_exact() {
        let mut sc = small(0);
        sc.pilot = PilotConfig::from_snr_db(300.0).unwrap();
        let codebook = Codebook::new(&sc.geom, 8, 8).unwrap();
        let truth = ChannelParams::new(sc.beta, codebook.points()[20]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let psi0 = coarse_sweep(&sc.geom, &codebook, &sc.pilot, &truth, &mut rng).unwrap();
        let mut state = TrackerState::new(psi0, sc.schedule, sc.offsets);
        for _ in 0..10 {
            let probes = make_probes(&state, &sc.geom);
            let y = observe(&truth, &probes, &sc.pilot, &mut rng);
            state = step(&state, &probes, &y, &sc.pilot).unwrap();
            assert!(channel_mse(&state.psi_hat, &truth, &sc.geom) < 1e-20);
        }
    }

    #[test]
    fn zero_dynamics_matches_static() {
        let sc = small(5);
        let dynamic = DynamicScenario {
            base: sc.clone(),
            delta_std: 0.0,
            rician_k_db: None,
        };
        let s = run_static(&sc).unwrap();
        let d = run_dynamic(&dynamic).unwrap();
        for (a, b) in s.records.iter().zip(&d.records) {
            assert_eq!(a.mse_mean, b.mse_mean);
            assert_eq!(a.diverged_fraction, b.diverged_fraction);
            assert!(b.crlb_ref.is_none());
        }
    }

    #[test]
    fn empty_curve_csv_is_header_only() {
        let curve = MseCurve {
            kind: ScenarioKind::Static,
            seed: 0,
            converged_only: false,
            converged_trials: 0,
            scenario: serde_json::Value::Null,
            records: vec![],
        };
        let mut buf = Vec::new();
        write_csv(&curve, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "slot,mse_mean,crlb_ref,diverged_fraction,trials\n");
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let mut sc = small(0);
        sc.trials = 0;
        assert!(matches!(sc.validate(), Err(Error::Config(_))));
        let mut sc = small(0);
        sc.codebook_m0 = 2;
        assert!(sc.validate().is_err());
        let d = DynamicScenario {
            base: small(0),
            delta_std: -1.0,
            rician_k_db: Some(15.0),
        };
        assert!(d.validate().is_err());
    }
}
