//! Brute-force reference computations shared by the integration tests.
//!
//! Nothing here calls the library's closed forms: every quantity is built
//! from explicit element sums or finite differences.

#![allow(dead_code)]

use std::f64::consts::TAU;

use nalgebra::Matrix4;
use num_complex::Complex64;

pub const J: Complex64 = Complex64::new(0.0, 1.0);

/// Element `(m, n)` (0-based) of the steering vector.
pub fn element(m: usize, n: usize, x1: f64, x2: f64, mm: usize, nn: usize) -> Complex64 {
    Complex64::cis(TAU * (m as f64 * x1 / mm as f64 + n as f64 * x2 / nn as f64))
}

/// `w^H a(x)` with `w = a(x + delta) / sqrt(MN)`, summed element by element.
pub fn g_sum(delta: [f64; 2], mm: usize, nn: usize) -> Complex64 {
    let mut s = Complex64::new(0.0, 0.0);
    for m in 0..mm {
        for n in 0..nn {
            let w = element(m, n, delta[0], delta[1], mm, nn);
            s += w.conj() * element(m, n, 0.0, 0.0, mm, nn);
        }
    }
    s / ((mm * nn) as f64).sqrt()
}

/// `beta w^H da/dx_axis` summed element by element.
pub fn gtilde_sum(delta: [f64; 2], mm: usize, nn: usize, beta: Complex64, axis: usize) -> Complex64 {
    let mut s = Complex64::new(0.0, 0.0);
    for m in 0..mm {
        for n in 0..nn {
            let w = element(m, n, delta[0], delta[1], mm, nn);
            let slope = if axis == 0 {
                TAU * m as f64 / mm as f64
            } else {
                TAU * n as f64 / nn as f64
            };
            s += w.conj() * J * slope;
        }
    }
    beta * s / ((mm * nn) as f64).sqrt()
}

/// `sum_{m,n} v_mn^H v_mn` with `v_mn = [1, j, j 2 pi m beta / M, j 2 pi n beta / N]`.
pub fn weighting_sum(mm: usize, nn: usize, beta: Complex64) -> Matrix4<Complex64> {
    let mut t = Matrix4::<Complex64>::zeros();
    for m in 0..mm {
        for n in 0..nn {
            let v = [
                Complex64::new(1.0, 0.0),
                J,
                J * TAU * m as f64 / mm as f64 * beta,
                J * TAU * n as f64 / nn as f64 * beta,
            ];
            for i in 0..4 {
                for k in 0..4 {
                    t[(i, k)] += v[i].conj() * v[k];
                }
            }
        }
    }
    t
}

/// Noiseless mean `s beta w_i^H a(x)` of the three observations, with probes at
/// `center + offsets[i]`.
pub fn mean_observation(
    psi: [f64; 4],
    center: [f64; 2],
    offsets: &[[f64; 2]; 3],
    mm: usize,
    nn: usize,
    symbol: Complex64,
) -> [Complex64; 3] {
    let beta = Complex64::new(psi[0], psi[1]);
    offsets.map(|d| {
        let mut s = Complex64::new(0.0, 0.0);
        for m in 0..mm {
            for n in 0..nn {
                let w = element(m, n, center[0] + d[0], center[1] + d[1], mm, nn);
                s += w.conj() * element(m, n, psi[2], psi[3], mm, nn);
            }
        }
        symbol * beta * s / ((mm * nn) as f64).sqrt()
    })
}

/// Fisher matrix `(2/sigma^2) Re{dmu^H dmu}` from central differences of the
/// mean observation, probes held fixed at `psi`'s direction.
pub fn fisher_fd(
    psi: [f64; 4],
    offsets: &[[f64; 2]; 3],
    mm: usize,
    nn: usize,
    symbol: Complex64,
    noise_var: f64,
) -> Matrix4<f64> {
    let h = 1e-6;
    let center = [psi[2], psi[3]];
    let mut grads = [[Complex64::new(0.0, 0.0); 3]; 4];
    for (p, grad) in grads.iter_mut().enumerate() {
        let mut plus = psi;
        let mut minus = psi;
        plus[p] += h;
        minus[p] -= h;
        let up = mean_observation(plus, center, offsets, mm, nn, symbol);
        let down = mean_observation(minus, center, offsets, mm, nn, symbol);
        for i in 0..3 {
            grad[i] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    let mut fim = Matrix4::zeros();
    for a in 0..4 {
        for b in 0..4 {
            let s: Complex64 = (0..3).map(|i| grads[a][i].conj() * grads[b][i]).sum();
            fim[(a, b)] = 2.0 / noise_var * s.re;
        }
    }
    fim
}

/// Per-element bound `(1/(MN k)) Tr{I^-1 J^H J}` with `J = dh/dpsi` from
/// finite differences of `h = beta a(x)`.
pub fn crlb_fd(
    psi: [f64; 4],
    offsets: &[[f64; 2]; 3],
    mm: usize,
    nn: usize,
    symbol: Complex64,
    noise_var: f64,
    k: u64,
) -> f64 {
    let fim = fisher_fd(psi, offsets, mm, nn, symbol, noise_var);
    let inv = fim.try_inverse().expect("invertible oracle Fisher matrix");
    let h = 1e-6;
    let channel = |p: [f64; 4]| -> Vec<Complex64> {
        let beta = Complex64::new(p[0], p[1]);
        let mut out = Vec::with_capacity(mm * nn);
        for m in 0..mm {
            for n in 0..nn {
                out.push(beta * element(m, n, p[2], p[3], mm, nn));
            }
        }
        out
    };
    let mut jac = vec![[Complex64::new(0.0, 0.0); 4]; mm * nn];
    for p in 0..4 {
        let mut plus = psi;
        let mut minus = psi;
        plus[p] += h;
        minus[p] -= h;
        let (up, down) = (channel(plus), channel(minus));
        for e in 0..mm * nn {
            jac[e][p] = (up[e] - down[e]) / (2.0 * h);
        }
    }
    let mut trace = Complex64::new(0.0, 0.0);
    for row in &jac {
        for a in 0..4 {
            for b in 0..4 {
                trace += row[a] * inv[(a, b)] * row[b].conj();
            }
        }
    }
    trace.re / ((mm * nn) as f64 * k as f64)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn c_rel_err(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
