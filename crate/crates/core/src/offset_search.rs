//! Numerical search for the three probing offsets that minimize the CRLB.
//!
//! The objective is the `k = 1` bound evaluated through the closed-form
//! projections, so it depends only on the six offset coordinates (it is
//! invariant to `beta` and `x`). Points outside the main-lobe box `(-1, 1)^2`
//! evaluate to `+inf`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array_model::{ArrayGeometry, DirectionParams, PilotConfig};
use crate::error::{Error, Result};
use crate::fisher_crlb::{asymptotic_crlb, crlb_from_projections, Projections};
use crate::nelder_mead::{self, SimplexOptions};

/// Reference asymptotic probing offsets. The tracker probes with these by default.
pub const REFERENCE_OFFSETS: [DirectionParams; 3] = [
    DirectionParams::new(0.0963, 0.5098),
    DirectionParams::new(-0.5098, -0.0963),
    DirectionParams::new(0.2906, -0.2906),
];

/// Channel coefficient used when evaluating the search objective. Any nonzero
/// value gives the same objective.
pub const OBJECTIVE_BETA: Complex64 = Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2);

/// Which CRLB the search minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SearchObjective {
    /// Per-element CRLB of a concrete array.
    Finite(ArrayGeometry),
    /// `lim MN * CRLB` as the array grows without bound.
    Asymptotic,
}

impl SearchObjective {
    pub fn evaluate(&self, offsets: &[DirectionParams; 3], pilot: &PilotConfig) -> Result<f64> {
        match self {
            Self::Finite(geom) => {
                let proj = Projections::closed_form(OBJECTIVE_BETA, offsets, geom)?;
                Ok(crlb_from_projections(&proj, OBJECTIVE_BETA, geom, pilot, 1)?.value)
            }
            Self::Asymptotic => asymptotic_crlb(OBJECTIVE_BETA, offsets, pilot, 1),
        }
    }

    /// Objective over the flattened 6-vector; `+inf` when infeasible.
    fn value(&self, v: &[f64], pilot: &PilotConfig) -> f64 {
        if v.iter().any(|c| !(c.abs() < 1.0)) {
            return f64::INFINITY;
        }
        self.evaluate(&unflatten(v), pilot).unwrap_or(f64::INFINITY)
    }

    pub fn symmetry(&self) -> SymmetryGroup {
        match self {
            Self::Finite(geom) => SymmetryGroup {
                swap_axes: geom.m() == geom.n(),
            },
            Self::Asymptotic => SymmetryGroup { swap_axes: true },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetryGroup {
    /// Exchanging the two axes is a symmetry (square arrays and the limit).
    pub swap_axes: bool,
}

impl SymmetryGroup {
    /// Per-offset maps: independent sign flips on each axis, optionally composed with an axis swap.
    fn maps(&self) -> Vec<(bool, f64, f64)> {
        let swaps: &[bool] = if self.swap_axes { &[false, true] } else { &[false] };
        let mut out = Vec::new();
        for &swap in swaps {
            for s1 in [1.0, -1.0] {
                for s2 in [1.0, -1.0] {
                    out.push((swap, s1, s2));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetTriple {
    pub deltas: [DirectionParams; 3],
    pub objective: f64,
    pub canonical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub starts: usize,
    pub max_iter: usize,
    pub f_tol: f64,
    pub initial_step: f64,
    /// Extra starting points tried in addition to the low-discrepancy starts.
    pub warm_starts: Vec<[DirectionParams; 3]>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            starts: 32,
            max_iter: 2000,
            f_tol: 1e-10,
            initial_step: 0.1,
            warm_starts: Vec::new(),
        }
    }
}

fn flatten(d: &[DirectionParams; 3]) -> [f64; 6] {
    [d[0].x1, d[0].x2, d[1].x1, d[1].x2, d[2].x1, d[2].x2]
}

fn unflatten(v: &[f64]) -> [DirectionParams; 3] {
    [
        DirectionParams::new(v[0], v[1]),
        DirectionParams::new(v[2], v[3]),
        DirectionParams::new(v[4], v[5]),
    ]
}

const PRIMES: [u64; 6] = [2, 3, 5, 7, 11, 13];

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    out
}

/// Halton point `index` (1-based) mapped into `(-0.9, 0.9)^6`.
pub fn start_point(index: u64) -> [f64; 6] {
    PRIMES.map(|p| -0.9 + 1.8 * radical_inverse(index, p))
}

/// Multi-start simplex search followed by a coordinate refinement pass.
pub fn search_offsets(
    objective: &SearchObjective,
    pilot: &PilotConfig,
    config: &OptimizerConfig,
) -> Result<OffsetTriple> {
    let starts: Vec<[f64; 6]> = (1..=config.starts as u64)
        .map(start_point)
        .chain(config.warm_starts.iter().map(flatten))
        .collect();
    let opts = SimplexOptions {
        max_iter: config.max_iter,
        f_tol: config.f_tol,
        initial_step: config.initial_step,
    };
    let f = |v: &[f64]| objective.value(v, pilot);

    let results: Vec<_> = starts
        .par_iter()
        .map(|x0| nelder_mead::minimize(f, x0, &opts))
        .collect();

    let best = results
        .iter()
        .filter(|r| r.converged)
        .min_by(|a, b| a.f.total_cmp(&b.f))
        .ok_or(Error::NoConvergence {
            max_iter: config.max_iter,
        })?;
    if !best.f.is_finite() {
        return Err(Error::SingularInformation {
            condition: f64::INFINITY,
        });
    }
    let (x, fx) = nelder_mead::coordinate_refine(f, &best.x, best.f, 1e-2, 1e-10);
    let triple = OffsetTriple {
        deltas: unflatten(&x),
        objective: fx,
        canonical: false,
    };
    Ok(canonicalize(&triple, objective.symmetry()))
}

/// Unique representative of the triple's orbit under probe permutations and
/// the group's coordinate maps: the lexicographically smallest flattened
/// triple after sorting the offsets by `(x1, x2)`.
pub fn canonicalize(triple: &OffsetTriple, group: SymmetryGroup) -> OffsetTriple {
    let mut best: Option<[f64; 6]> = None;
    for (swap, s1, s2) in group.maps() {
        let mut mapped = triple.deltas.map(|d| {
            let (a, b) = if swap { (d.x2, d.x1) } else { (d.x1, d.x2) };
            DirectionParams::new(s1 * a, s2 * b)
        });
        mapped.sort_by(|p, q| p.x1.total_cmp(&q.x1).then(p.x2.total_cmp(&q.x2)));
        let key = flatten(&mapped);
        let smaller = match &best {
            None => true,
            Some(b) => key
                .iter()
                .zip(b)
                .map(|(u, v)| u.total_cmp(v))
                .find(|o| o.is_ne())
                .is_some_and(|o| o.is_lt()),
        };
        if smaller {
            best = Some(key);
        }
    }
    OffsetTriple {
        deltas: unflatten(&best.expect("group is never empty")),
        objective: triple.objective,
        canonical: true,
    }
}

/// L-infinity distance between the canonical forms of two triples.
pub fn canonical_distance(a: &[DirectionParams; 3], b: &[DirectionParams; 3], group: SymmetryGroup) -> f64 {
    let wrap = |d: &[DirectionParams; 3]| OffsetTriple {
        deltas: *d,
        objective: f64::NAN,
        canonical: false,
    };
    let ca = flatten(&canonicalize(&wrap(a), group).deltas);
    let cb = flatten(&canonicalize(&wrap(b), group).deltas);
    ca.iter()
        .zip(&cb)
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub m: usize,
    pub n: usize,
    pub crlb_min: Option<f64>,
    pub crlb_reference: Option<f64>,
    /// `(crlb_reference - crlb_min) / crlb_min`.
    pub relative_gap: Option<f64>,
    pub error: Option<String>,
}

/// Per-size comparison between the searched minimum and the reference offsets.
pub fn offset_gap_report(
    sizes: &[(usize, usize)],
    pilot: &PilotConfig,
    config: &OptimizerConfig,
) -> Vec<GapRow> {
    let mut config = config.clone();
    config.warm_starts.push(REFERENCE_OFFSETS);
    sizes
        .iter()
        .map(|&(m, n)| {
            let outcome = (|| -> Result<(f64, f64)> {
                let geom = ArrayGeometry::half_wavelength(m, n)?;
                let objective = SearchObjective::Finite(geom);
                let found = search_offsets(&objective, pilot, &config)?;
                let reference = objective.evaluate(&REFERENCE_OFFSETS, pilot)?;
                Ok((found.objective, reference))
            })();
            match outcome {
                Ok((min, reference)) => GapRow {
                    m,
                    n,
                    crlb_min: Some(min),
                    crlb_reference: Some(reference),
                    relative_gap: Some((reference - min) / min),
                    error: None,
                },
                Err(e) => GapRow {
                    m,
                    n,
                    crlb_min: None,
                    crlb_reference: None,
                    relative_gap: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}
