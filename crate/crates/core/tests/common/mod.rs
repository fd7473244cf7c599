//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use mimo_mmse::channel::normalize_trace;
use mimo_mmse::largesys::{StructuredObjective, Surrogate};
use mimo_mmse::matcore::{sample_circular_gaussian, CMatrix, RngStream};
use rand::Rng;
use rayon::prelude::*;

/// Trace-normalized `AAᴴ + εI` from a fixed stream.
pub fn random_correlation(n: usize, seed: u64, stream: u64) -> CMatrix {
    let a = sample_circular_gaussian(n, n, &mut RngStream::new(seed, stream).rng());
    let mut c = a.matmul(&a.adjoint()).unwrap();
    for i in 0..n {
        c[(i, i)] += 0.02;
    }
    normalize_trace(&c).unwrap()
}

/// Uniform draw in `[lo, hi)` from a fixed stream.
pub fn uniform(seed: u64, stream: u64, lo: f64, hi: f64) -> f64 {
    RngStream::new(seed, stream).rng().random_range(lo..hi)
}

/// Central difference with one Richardson step: error `O(h⁴)`.
pub fn richardson_derivative(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let c = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    (4.0 * c(h / 2.0) - c(h)) / 3.0
}

/// Best value of the surrogate over the `t = 2` feasible set, sampled on the
/// grid `λ_j = 2 d_j x_j` with `x_1, x_2 ∈ {0, step, 2·step, ...}` and
/// `x_1 + x_2 ≤ 1`. Returns `(value, λ)`.
pub fn grid_optimum_t2(d: [f64; 2], obj: &StructuredObjective, step: f64) -> (f64, [f64; 2]) {
    let n = (1.0 / step).round() as usize;
    (0..=n)
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::NEG_INFINITY, [0.0; 2]);
            for j in 0..=(n - i) {
                let l = [2.0 * d[0] * i as f64 * step, 2.0 * d[1] * j as f64 * step];
                let v = obj.value(&l).unwrap();
                if v > best.0 {
                    best = (v, l);
                }
            }
            best
        })
        .reduce(|| (f64::NEG_INFINITY, [0.0; 2]), |a, b| if b.0 > a.0 { b } else { a })
}

/// Surrogate `Î` on loads for the uncorrelated channel.
pub fn iid_i_hat(t: usize, sigma2: f64) -> StructuredObjective {
    StructuredObjective::new(vec![1.0; t], sigma2, Surrogate::IHat)
}

/// Best `Î` over `s`-uniform loads (`λ = t/s` on `s` entries) by direct
/// evaluation through the fixed point.
pub fn best_uniform_support(t: usize, sigma2: f64) -> (usize, f64) {
    let obj = iid_i_hat(t, sigma2);
    let mut best = (0, f64::NEG_INFINITY);
    for s in 1..=t {
        let l: Vec<f64> = (0..t).map(|j| if j < s { t as f64 / s as f64 } else { 0.0 }).collect();
        let v = obj.value(&l).unwrap();
        if v >= best.1 {
            best = (s, v);
        }
    }
    best
}
