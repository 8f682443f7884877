//! Bare Nelder-Mead simplex minimizer for small, smooth, box-restricted objectives.
//!
//! Infeasible points are expected to evaluate to `+inf`; the simplex then
//! contracts away from them.

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_iter: usize,
    /// Converged once `f_worst - f_best` drops below this.
    pub f_tol: f64,
    /// Edge length of the initial axis-aligned simplex.
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            f_tol: 1e-10,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ALPHA: f64 = 1.0;
const GAMMA: f64 = 2.0;
const RHO: f64 = 0.5;
const SIGMA: f64 = 0.5;

pub fn minimize<F>(f: F, x0: &[f64], opts: &SimplexOptions) -> SimplexResult
where
    F: Fn(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..dim {
        let mut p = x0.to_vec();
        p[i] += opts.initial_step;
        let mut fp = f(&p);
        if !fp.is_finite() {
            p[i] = x0[i] - opts.initial_step;
            fp = f(&p);
        }
        simplex.push((p, fp));
    }

    let sort = |s: &mut Vec<(Vec<f64>, f64)>| {
        s.sort_by(|a, b| a.1.total_cmp(&b.1));
    };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        sort(&mut simplex);
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        if best.is_finite() && worst - best <= opts.f_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; dim];
        for (p, _) in &simplex[..dim] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / dim as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[dim].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(ALPHA);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(GAMMA);
            let fe = f(&xe);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
            continue;
        }
        // contraction: outside if the reflection improved on the worst point
        let (xc, fc) = if fr < simplex[dim].1 {
            let xc = along(RHO);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = along(-RHO);
            let fc = f(&xc);
            (xc, fc)
        };
        if fc < simplex[dim].1.min(fr) {
            simplex[dim] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for (p, fp) in simplex.iter_mut().skip(1) {
            for (v, b) in p.iter_mut().zip(&x_best) {
                *v = b + SIGMA * (*v - b);
            }
            *fp = f(p);
        }
    }
    sort(&mut simplex);
    let (x, fx) = simplex.swap_remove(0);
    SimplexResult {
        x,
        f: fx,
        iterations,
        converged,
    }
}

/// Compass search around `x`: probe each coordinate at `+-step`, halving the
/// step whenever a full sweep fails to improve, down to `min_step`.
pub fn coordinate_refine<F>(f: F, x: &[f64], fx: f64, initial_step: f64, min_step: f64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = x.to_vec();
    let mut fx = fx;
    let mut step = initial_step;
    while step >= min_step {
        let mut improved = false;
        for i in 0..x.len() {
            for sign in [1.0, -1.0] {
                let mut trial = x.clone();
                trial[i] += sign * step;
                let ft = f(&trial);
                if ft < fx {
                    x = trial;
                    fx = ft;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}
