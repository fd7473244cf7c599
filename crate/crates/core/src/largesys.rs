//! Deterministic equivalents of the MMSE mutual information.
//!
//! For transmit correlation `C` (already including the precoder, `KᴴC_TK`)
//! and receive correlation `C_R`, the pair `(δ, δ̃)` is the unique positive
//! solution of
//!
//! ```text
//! δ  = (1/t) Tr[ C   (σ²(I + δ̃ C  ))⁻¹ ] = (1/t) Tr[C T_T]
//! δ̃  = (1/t) Tr[ C_R (σ²(I + δ  C_R))⁻¹ ] = (1/t) Tr[C_R T_R]
//! ```
//!
//! Both traces only depend on the spectra of `C` and `C_R`, so the iteration
//! runs on eigenvalues and the resolvent approximants `T_T`, `T_R` are
//! rebuilt from the eigenvectors once it has converged.
//!
//! From the solution we get
//!
//! * `Î = -Σ_j log(σ² T_T,jj)` (first-order approximation),
//! * `J̄ = 1/(2δ̃²) · γ̃/(1 - σ⁴γγ̃) · (1/t) Σ_j (1 - ((σ²T_T)²)_jj / (σ²T_T,jj))²`,
//! * `Ī = Î + J̄` (corrected approximation),
//!
//! all in nats, with `γ = (1/t)Tr(C²T_T²)` and `γ̃ = (1/t)Tr(C_R²T_R²)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{herm_eig, CMatrix, HermitianEig};

pub const DEFAULT_MAX_ITER: usize = 10_000;
const STEP_TOL: f64 = 1e-13;
const RESIDUAL_TOL: f64 = 1e-12;
const DEGENERATE_DET: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    pub max_iter: usize,
    /// Starting value for δ; defaults to `(1/t)Tr(C)/σ²`.
    pub init_delta: Option<f64>,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self { max_iter: DEFAULT_MAX_ITER, init_delta: None }
    }
}

/// Scalar part of the fixed point, computed from the two spectra alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSolution {
    pub delta: f64,
    pub delta_tilde: f64,
    pub gamma: f64,
    pub gamma_tilde: f64,
    /// `1 - σ⁴γγ̃`
    pub stability: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// `(1/t) Σ_k c_k / (σ²(1 + x c_k))`
fn trace_map(eig: &[f64], x: f64, sigma2: f64, t: f64) -> f64 {
    eig.iter().map(|&c| c / (sigma2 * (1.0 + x * c))).sum::<f64>() / t
}

/// `(1/t) Σ_k c_k² / (σ²(1 + x c_k))²`
fn gamma_map(eig: &[f64], x: f64, sigma2: f64, t: f64) -> f64 {
    eig.iter().map(|&c| (c / (sigma2 * (1.0 + x * c))).powi(2)).sum::<f64>() / t
}

fn rel_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn clamp_spectrum(eig: &[f64]) -> Vec<f64> {
    eig.iter().map(|&c| c.max(0.0)).collect()
}

/// Solves the coupled system on spectra `tx` (length t) and `rx` (length r).
///
/// Alternating substitution `δ̃ ← g(δ)`, `δ ← f(δ̃)`. When the residual grows
/// the update is damped by 0.5 (repeatedly, if needed).
pub fn solve_spectral(tx: &[f64], rx: &[f64], sigma2: f64, opts: &FixedPointOptions) -> Result<SpectralSolution> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::Domain(format!("noise variance must be positive, got {sigma2}")));
    }
    if tx.is_empty() || rx.is_empty() {
        return Err(Error::Dimension("empty spectrum".into()));
    }
    let tx = clamp_spectrum(tx);
    let rx = clamp_spectrum(rx);
    if rx.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Domain("receive correlation has zero trace".into()));
    }
    let t = tx.len() as f64;
    let f = |dt: f64| trace_map(&tx, dt, sigma2, t);
    let g = |d: f64| trace_map(&rx, d, sigma2, t);
    let residual = |d: f64, dt: f64| rel_gap(d, f(dt)).max(rel_gap(dt, g(d)));

    let mut delta = opts.init_delta.unwrap_or_else(|| tx.iter().sum::<f64>() / t / sigma2);
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::Domain(format!("invalid initial delta {delta}")));
    }
    let mut delta_tilde = g(delta);
    let mut res = residual(delta, delta_tilde);
    let mut damping = 1.0;

    for it in 1..=opts.max_iter {
        let dt_full = g(delta);
        let d_full = f(dt_full);
        let mut d_new = delta + damping * (d_full - delta);
        let mut dt_new = g(d_new);
        let mut res_new = residual(d_new, dt_new);
        if res_new > res && damping > 1.0 / 64.0 {
            damping *= 0.5;
            d_new = delta + damping * (d_full - delta);
            dt_new = g(d_new);
            res_new = residual(d_new, dt_new);
        } else if res_new < res && damping < 1.0 {
            damping = (damping * 2.0).min(1.0);
        }
        let step = rel_gap(d_new, delta).max(rel_gap(dt_new, delta_tilde));
        delta = d_new;
        delta_tilde = dt_new;
        res = res_new;
        if (step < STEP_TOL && res < RESIDUAL_TOL) || res == 0.0 {
            return Ok(finish(&tx, &rx, sigma2, delta, delta_tilde, res, it));
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: res })
}

fn finish(tx: &[f64], rx: &[f64], sigma2: f64, delta: f64, delta_tilde: f64, residual: f64, iterations: usize) -> SpectralSolution {
    let t = tx.len() as f64;
    let gamma = gamma_map(tx, delta_tilde, sigma2, t);
    let gamma_tilde = gamma_map(rx, delta, sigma2, t);
    SpectralSolution {
        delta,
        delta_tilde,
        gamma,
        gamma_tilde,
        stability: 1.0 - sigma2 * sigma2 * gamma * gamma_tilde,
        residual,
        iterations,
    }
}

/// Deterministic equivalents for one `(KᴴC_TK, C_R, σ²)` triple.
#[derive(Debug, Clone)]
pub struct FixedPointSolution {
    pub delta: f64,
    pub delta_tilde: f64,
    /// `(σ²(I + δ̃ C))⁻¹`, t×t
    pub t_t: CMatrix,
    /// `(σ²(I + δ C_R))⁻¹`, r×r
    pub t_r: CMatrix,
    pub gamma: f64,
    pub gamma_tilde: f64,
    pub stability: f64,
    pub residual: f64,
    pub iterations: usize,
    pub sigma2: f64,
    /// Eigendecomposition of the transmit correlation, decreasing eigenvalues.
    pub tx_eig: HermitianEig,
    pub rx_eigvals: Vec<f64>,
}

impl FixedPointSolution {
    pub fn t(&self) -> usize {
        self.t_t.rows()
    }

    /// Diagonal of `T = [σ²(I + δ̃D)]⁻¹` in the transmit eigenbasis.
    pub fn t_eigen_diag(&self) -> Vec<f64> {
        self.tx_eig.eigvals.iter().map(|&d| 1.0 / (self.sigma2 * (1.0 + self.delta_tilde * d.max(0.0)))).collect()
    }

    pub fn spectral(&self) -> SpectralSolution {
        SpectralSolution {
            delta: self.delta,
            delta_tilde: self.delta_tilde,
            gamma: self.gamma,
            gamma_tilde: self.gamma_tilde,
            stability: self.stability,
            residual: self.residual,
            iterations: self.iterations,
        }
    }
}

/// Solves the fixed point with `C_T` replaced by the effective correlation.
pub fn solve_fixed_point(c_t_eff: &CMatrix, c_r: &CMatrix, sigma2: f64) -> Result<FixedPointSolution> {
    solve_fixed_point_with(c_t_eff, c_r, sigma2, &FixedPointOptions::default())
}

pub fn solve_fixed_point_with(
    c_t_eff: &CMatrix,
    c_r: &CMatrix,
    sigma2: f64,
    opts: &FixedPointOptions,
) -> Result<FixedPointSolution> {
    let tx_eig = herm_eig(c_t_eff)?;
    let rx_eig = herm_eig(c_r)?;
    let sol = solve_spectral(&tx_eig.eigvals, &rx_eig.eigvals, sigma2, opts)?;

    let t_t = tx_eig.map(|d| 1.0 / (sigma2 * (1.0 + sol.delta_tilde * d.max(0.0))));
    let t_r = rx_eig.map(|d| 1.0 / (sigma2 * (1.0 + sol.delta * d.max(0.0))));
    Ok(FixedPointSolution {
        delta: sol.delta,
        delta_tilde: sol.delta_tilde,
        t_t,
        t_r,
        gamma: sol.gamma,
        gamma_tilde: sol.gamma_tilde,
        stability: sol.stability,
        residual: sol.residual,
        iterations: sol.iterations,
        sigma2,
        tx_eig,
        rx_eigvals: rx_eig.eigvals,
    })
}

/// Large-system approximations of the MMSE mutual information, in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub i_hat: f64,
    pub j_bar: f64,
    pub i_bar: f64,
    /// `-log(σ² T_T,jj)` per transmit antenna.
    pub per_stream: Vec<f64>,
}

/// `Î = -Σ_j log(σ² T_T,jj)` with its per-antenna terms.
pub fn i_hat(fp: &FixedPointSolution) -> (f64, Vec<f64>) {
    let per_stream: Vec<f64> = fp.t_t.real_diag().iter().map(|&x| -(fp.sigma2 * x).ln()).collect();
    (per_stream.iter().sum(), per_stream)
}

fn check_stability(stability: f64) -> Result<()> {
    if stability > 0.0 {
        Ok(())
    } else {
        Err(Error::Stability(stability))
    }
}

/// Variance correction `J̄` from the full (possibly non-diagonal) `T_T`.
pub fn j_bar(fp: &FixedPointSolution) -> Result<f64> {
    check_stability(fp.stability)?;
    let s2 = fp.sigma2;
    let t = fp.t();
    let mut acc = 0.0;
    for j in 0..t {
        let tjj = s2 * fp.t_t[(j, j)].re;
        // ((σ²T_T)²)_jj = σ⁴ Σ_k |T_T,jk|² for Hermitian T_T
        let sq: f64 = (0..t).map(|k| (s2 * fp.t_t[(j, k)]).norm_sqr()).sum();
        acc += (1.0 - sq / tjj).powi(2);
    }
    acc /= t as f64;
    Ok(acc * fp.gamma_tilde / (fp.stability * 2.0 * fp.delta_tilde.powi(2)))
}

/// `J̄ = ½ σ⁴γγ̃ / (1 - σ⁴γγ̃)`, exact when the transmit correlation is diagonal.
pub fn j_bar_diagonal(sol: &SpectralSolution, sigma2: f64) -> Result<f64> {
    check_stability(sol.stability)?;
    let p = sigma2 * sigma2 * sol.gamma * sol.gamma_tilde;
    Ok(0.5 * p / sol.stability)
}

/// `Ī = Î + J̄`
pub fn i_bar(fp: &FixedPointSolution) -> Result<ApproxReport> {
    let (i_hat, per_stream) = i_hat(fp);
    let j_bar = j_bar(fp)?;
    Ok(ApproxReport { i_hat, j_bar, i_bar: i_hat + j_bar, per_stream })
}

/// Predicted `Var(u Q uᴴ)` for the resolvent `Q = (YYᴴ + σ²I)⁻¹` of the
/// channel expressed in the correlation eigenbases; `u` is a unit vector in
/// transmit-eigenbasis coordinates.
///
/// `(1/t) · σ⁴γ̃/(1 - σ⁴γγ̃) · (u T² D uᴴ)²`
pub fn quadform_variance_prediction(fp: &FixedPointSolution, u: &[Complex64]) -> Result<f64> {
    let t = fp.t();
    if u.len() != t {
        return Err(Error::Dimension(format!("u has length {}, expected {t}", u.len())));
    }
    let norm2: f64 = u.iter().map(|z| z.norm_sqr()).sum();
    if (norm2 - 1.0).abs() > 1e-10 {
        return Err(Error::Domain(format!("u must have unit norm, |u|^2 = {norm2}")));
    }
    check_stability(fp.stability)?;
    let tdiag = fp.t_eigen_diag();
    let quad: f64 = u
        .iter()
        .zip(&tdiag)
        .zip(&fp.tx_eig.eigvals)
        .map(|((z, &tj), &d)| z.norm_sqr() * tj * tj * d.max(0.0))
        .sum();
    let s4 = fp.sigma2 * fp.sigma2;
    Ok(s4 * fp.gamma_tilde / fp.stability * quad * quad / t as f64)
}

/// Which large-system surrogate of the mutual information is being optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surrogate {
    /// `Î`
    IHat,
    /// `Ī = Î + J̄`
    IBar,
}

/// Surrogate as a function of the diagonal effective correlation
/// `Λ = KᴴC_TK` for an eigen-aligned precoder. Only the receive spectrum
/// and the noise level enter.
#[derive(Debug, Clone)]
pub struct StructuredObjective {
    rx_eigvals: Vec<f64>,
    sigma2: f64,
    surrogate: Surrogate,
    opts: FixedPointOptions,
}

impl StructuredObjective {
    pub fn new(rx_eigvals: Vec<f64>, sigma2: f64, surrogate: Surrogate) -> Self {
        Self { rx_eigvals: clamp_spectrum(&rx_eigvals), sigma2, surrogate, opts: FixedPointOptions::default() }
    }

    pub fn from_receive_correlation(c_r: &CMatrix, sigma2: f64, surrogate: Surrogate) -> Result<Self> {
        Ok(Self::new(herm_eig(c_r)?.eigvals, sigma2, surrogate))
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn surrogate(&self) -> Surrogate {
        self.surrogate
    }

    pub fn rx_eigvals(&self) -> &[f64] {
        &self.rx_eigvals
    }

    pub fn solve(&self, lambda: &[f64]) -> Result<SpectralSolution> {
        check_lambda(lambda)?;
        solve_spectral(lambda, &self.rx_eigvals, self.sigma2, &self.opts)
    }

    pub fn value(&self, lambda: &[f64]) -> Result<f64> {
        let sol = self.solve(lambda)?;
        self.value_at(lambda, &sol)
    }

    fn value_at(&self, lambda: &[f64], sol: &SpectralSolution) -> Result<f64> {
        let rate: f64 = lambda.iter().map(|&l| (l * sol.delta_tilde).ln_1p()).sum();
        match self.surrogate {
            Surrogate::IHat => Ok(rate),
            Surrogate::IBar => Ok(rate + j_bar_diagonal(sol, self.sigma2)?),
        }
    }

    /// Value and gradient with respect to `λ`, by implicit differentiation
    /// of the fixed-point system.
    pub fn value_and_grad(&self, lambda: &[f64]) -> Result<(f64, Vec<f64>)> {
        let sol = self.solve(lambda)?;
        let value = self.value_at(lambda, &sol)?;
        let grad = self.grad_at(lambda, &sol)?;
        Ok((value, grad))
    }

    fn grad_at(&self, lambda: &[f64], sol: &SpectralSolution) -> Result<Vec<f64>> {
        let s2 = self.sigma2;
        let s4 = s2 * s2;
        let t = lambda.len() as f64;
        let (d, dt) = (sol.delta, sol.delta_tilde);

        // Jacobian of (δ - f(δ̃, λ), δ̃ - g(δ)) in (δ, δ̃) is [[1, σ²γ], [σ²γ̃, 1]].
        let det = sol.stability;
        if det.abs() < DEGENERATE_DET {
            return Err(Error::Degenerate(det));
        }
        let (g, gt) = (sol.gamma, sol.gamma_tilde);

        let sum_rate_dt: f64 = lambda.iter().map(|&l| l / (1.0 + l * dt)).sum();
        let dgamma_ddt = -2.0 / (t * s4) * lambda.iter().map(|&l| (l / (1.0 + l * dt)).powi(3)).sum::<f64>();
        let dgammat_dd =
            -2.0 / (t * s4) * self.rx_eigvals.iter().map(|&c| (c / (1.0 + d * c)).powi(3)).sum::<f64>();
        let p = s4 * g * gt;
        let dj_dp = 0.5 / (1.0 - p).powi(2);

        let grad = lambda
            .iter()
            .map(|&l| {
                let w = 1.0 + l * dt;
                // -∂F1/∂λ_j; the second equation does not involve λ
                let a = 1.0 / (t * s2 * w * w);
                let dd = a / det;
                let ddt = -s2 * gt * a / det;
                let rate = dt / w + sum_rate_dt * ddt;
                match self.surrogate {
                    Surrogate::IHat => rate,
                    Surrogate::IBar => {
                        let dgamma = 2.0 * l / (t * s4 * w * w * w) + dgamma_ddt * ddt;
                        let dgammat = dgammat_dd * dd;
                        rate + dj_dp * s4 * (dgamma * gt + g * dgammat)
                    }
                }
            })
            .collect();
        Ok(grad)
    }
}

fn check_lambda(lambda: &[f64]) -> Result<()> {
    if lambda.is_empty() {
        return Err(Error::Dimension("empty power vector".into()));
    }
    if let Some(l) = lambda.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(Error::Domain(format!("power loads must be finite and nonnegative, got {l}")));
    }
    Ok(())
}

/// Gradient of `Ī(Λ)` with respect to the diagonal loads `λ_j`.
pub fn grad_lambda(lambda: &[f64], rx_eigvals: &[f64], sigma2: f64) -> Result<Vec<f64>> {
    let obj = StructuredObjective::new(rx_eigvals.to_vec(), sigma2, Surrogate::IBar);
    Ok(obj.value_and_grad(lambda)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::normalize_trace;
    use crate::matcore::testutil::*;
    use crate::matcore::RngStream;
    use rand::Rng;

    const GOLDEN: f64 = 0.618_033_988_749_894_8; // (√5 - 1)/2

    fn random_psd(n: usize, seed: u64) -> CMatrix {
        // rank can drop to n/2 so that degenerate spectra are covered
        let m = random_matrix(n, (n / 2).max(1) + (seed as usize % (n / 2 + 1)), seed);
        normalize_trace(&(&m * &m.adjoint())).unwrap()
    }

    #[test]
    fn iid_golden_ratio() {
        for t in [1, 2, 4, 8] {
            let fp = solve_fixed_point(&CMatrix::identity(t), &CMatrix::identity(t), 1.0).unwrap();
            assert!((fp.delta - GOLDEN).abs() < 1e-12);
            assert!((fp.delta_tilde - GOLDEN).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_power_is_degenerate_but_solvable() {
        let c_r = random_psd(3, 5);
        let fp = solve_fixed_point(&CMatrix::zeros(3, 3), &c_r, 0.5).unwrap();
        assert_eq!(fp.delta, 0.0);
        assert!((fp.delta_tilde - c_r.trace().re / 3.0 / 0.5).abs() < 1e-14);
        assert!((&fp.t_t - &CMatrix::identity(3).scale(2.0)).max_abs() < 1e-14);
        let rep = i_bar(&fp).unwrap();
        assert_eq!(rep.i_hat, 0.0);
        assert_eq!(rep.j_bar, 0.0);
    }

    #[test]
    fn low_snr_asymptote() {
        let fp = solve_fixed_point(&CMatrix::identity(4), &CMatrix::identity(4), 1e6).unwrap();
        let scaled = fp.delta * 1e6;
        assert!((0.999..=1.001).contains(&scaled), "{scaled}");
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(solve_fixed_point(&CMatrix::identity(2), &CMatrix::identity(2), 0.0), Err(Error::Domain(_))));
        let opts = FixedPointOptions { max_iter: 2, init_delta: None };
        let e = solve_fixed_point_with(&CMatrix::identity(4), &CMatrix::identity(4), 1e-3, &opts).unwrap_err();
        assert!(matches!(e, Error::NoConvergence { iterations: 2, .. }));
    }

    #[test]
    fn solution_invariants() {
        for seed in 0..30u64 {
            let t = [2, 4, 8][seed as usize % 3];
            let c_t = random_psd(t, seed);
            let c_r = random_psd(t, seed + 1000);
            let fp = solve_fixed_point(&c_t, &c_r, 0.3).unwrap();
            let tf = t as f64;
            assert!(fp.residual < 1e-12);
            assert!(fp.stability > 0.0);
            assert!(fp.delta > 0.0 && fp.delta_tilde > 0.0);
            assert!(((&c_t * &fp.t_t).trace().re / tf - fp.delta).abs() < 1e-10 * fp.delta);
            assert!(((&c_r * &fp.t_r).trace().re / tf - fp.delta_tilde).abs() < 1e-10 * fp.delta_tilde);
            let ct2 = &c_t * &fp.t_t;
            let cr2 = &c_r * &fp.t_r;
            assert!(((&ct2 * &ct2).trace().re / tf - fp.gamma).abs() < 1e-10 * fp.gamma);
            assert!(((&cr2 * &cr2).trace().re / tf - fp.gamma_tilde).abs() < 1e-10 * fp.gamma_tilde);
            let (ih, per) = i_hat(&fp);
            assert!(ih >= 0.0 && per.iter().all(|&p| p >= 0.0));
            assert!(fp.t_t.real_diag().iter().all(|&x| x * 0.3 > 0.0 && x * 0.3 <= 1.0 + 1e-15));
        }
    }

    #[test]
    fn unique_from_two_starts() {
        for seed in 0..20u64 {
            let c_t = random_psd(4, seed);
            let c_r = random_psd(4, seed + 7);
            let a = solve_fixed_point(&c_t, &c_r, 0.1).unwrap();
            let start = 10.0 * c_t.normalized_trace() / 0.1;
            let opts = FixedPointOptions { init_delta: Some(start), ..Default::default() };
            let b = solve_fixed_point_with(&c_t, &c_r, 0.1, &opts).unwrap();
            assert!((a.delta - b.delta).abs() < 1e-10 * a.delta);
            assert!((a.delta_tilde - b.delta_tilde).abs() < 1e-10 * a.delta_tilde);
        }
    }

    #[test]
    fn i_hat_iid_value() {
        let fp = solve_fixed_point(&CMatrix::identity(4), &CMatrix::identity(4), 1.0).unwrap();
        let expected = 4.0 * (1.0 + GOLDEN).ln();
        assert!((i_hat(&fp).0 - expected).abs() < 1e-12);
        assert!((expected - 1.924_847).abs() < 1e-6);
    }

    #[test]
    fn i_hat_diagonal_identity() {
        let lambda = [1.7, 0.9, 0.3, 0.0];
        let c_r = random_psd(4, 3);
        let fp = solve_fixed_point(&CMatrix::from_real_diag(&lambda), &c_r, 0.2).unwrap();
        let direct: f64 = lambda.iter().map(|l| (1.0 + l * fp.delta_tilde).ln()).sum();
        assert!((i_hat(&fp).0 - direct).abs() < 1e-12);
    }

    #[test]
    fn j_bar_dual_path_on_diagonal_inputs() {
        let mut rng = RngStream::new(77, 0).rng();
        for seed in 0..20u64 {
            let lambda: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..2.0)).collect();
            let c_r = random_psd(4, seed);
            let fp = solve_fixed_point(&CMatrix::from_real_diag(&lambda), &c_r, 0.4).unwrap();
            let general = j_bar(&fp).unwrap();
            let reduced = j_bar_diagonal(&fp.spectral(), fp.sigma2).unwrap();
            assert!((general - reduced).abs() < 1e-12, "{general} vs {reduced}");
        }
        let fp = solve_fixed_point(&CMatrix::identity(4), &CMatrix::identity(4), 1.0).unwrap();
        let general = j_bar(&fp).unwrap();
        assert!((general - j_bar_diagonal(&fp.spectral(), 1.0).unwrap()).abs() < 1e-12);
        assert!(general > 0.0);
    }

    #[test]
    fn i_bar_is_sum() {
        let fp = solve_fixed_point(&random_psd(4, 1), &random_psd(4, 2), 0.1).unwrap();
        let rep = i_bar(&fp).unwrap();
        assert_eq!(rep.i_bar, rep.i_hat + rep.j_bar);
        assert!(rep.j_bar >= 0.0);
    }

    #[test]
    fn stability_error() {
        let mut fp = solve_fixed_point(&CMatrix::identity(2), &CMatrix::identity(2), 1.0).unwrap();
        fp.stability = 0.0;
        assert_eq!(j_bar(&fp), Err(Error::Stability(0.0)));
        assert!(quadform_variance_prediction(&fp, &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]).is_err());
    }

    #[test]
    fn variance_prediction_formula() {
        let lambda = [2.0, 1.0, 0.5, 0.5];
        let fp = solve_fixed_point(&CMatrix::from_real_diag(&lambda), &random_psd(4, 9), 0.5).unwrap();
        let e1: Vec<Complex64> = (0..4).map(|i| Complex64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0)).collect();
        let t11 = 1.0 / (0.5 * (1.0 + fp.delta_tilde * 2.0));
        let expected = 0.25 * fp.gamma_tilde / fp.stability * (2.0 * t11 * t11).powi(2) / 4.0;
        assert!((quadform_variance_prediction(&fp, &e1).unwrap() - expected).abs() < 1e-14);

        let fp0 = solve_fixed_point(&CMatrix::zeros(4, 4), &random_psd(4, 9), 0.5).unwrap();
        assert_eq!(quadform_variance_prediction(&fp0, &e1).unwrap(), 0.0);
        assert!(quadform_variance_prediction(&fp0, &[Complex64::new(1.0, 0.0); 4]).is_err());
    }

    #[test]
    fn mu_delta_tilde_is_increasing() {
        let lambda = [1.5, 1.0, 0.5, 0.0, 1.0];
        let obj = StructuredObjective::new(vec![1.0; 5], 0.2, Surrogate::IHat);
        let mut prev = 0.0;
        for k in 1..=100 {
            let mu = 0.1 * k as f64;
            let scaled: Vec<f64> = lambda.iter().map(|l| l * mu).collect();
            let v = mu * obj.solve(&scaled).unwrap().delta_tilde;
            assert!(v > prev);
            prev = v;
        }
    }

    fn fd_grad(obj: &StructuredObjective, lambda: &[f64]) -> Vec<f64> {
        (0..lambda.len())
            .map(|j| {
                let h = 1e-6 * lambda[j].max(1.0);
                let mut up = lambda.to_vec();
                let mut dn = lambda.to_vec();
                up[j] += h;
                dn[j] -= h;
                (obj.value(&up).unwrap() - obj.value(&dn).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = RngStream::new(31, 0).rng();
        for surrogate in [Surrogate::IBar, Surrogate::IHat] {
            for seed in 0..10u64 {
                let t = 4;
                let rx = herm_eig(&random_psd(t, seed)).unwrap().eigvals;
                let lambda: Vec<f64> = (0..t).map(|_| rng.random_range(0.05..2.0)).collect();
                let obj = StructuredObjective::new(rx, 0.2, surrogate);
                let (_, g) = obj.value_and_grad(&lambda).unwrap();
                let fd = fd_grad(&obj, &lambda);
                for (a, b) in g.iter().zip(&fd) {
                    assert!((a - b).abs() <= 1e-5 * a.abs().max(1e-3), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn gradient_symmetry_and_scaling() {
        let obj = StructuredObjective::new(vec![1.3, 1.0, 0.7, 1.0], 0.3, Surrogate::IBar);
        let g = grad_lambda(&[0.8; 4], obj.rx_eigvals(), 0.3).unwrap();
        assert!(g.iter().all(|x| (x - g[0]).abs() < 1e-13));

        // d/dμ F(μΛ) = Σ_j λ_j ∂F/∂λ_j at μΛ
        let lambda = [1.2, 0.4, 0.9, 0.1];
        let mu = 1.3;
        let scaled: Vec<f64> = lambda.iter().map(|l| l * mu).collect();
        let (_, g) = obj.value_and_grad(&scaled).unwrap();
        let chain: f64 = g.iter().zip(&lambda).map(|(a, b)| a * b).sum();
        let h = 1e-6;
        let at = |m: f64| obj.value(&lambda.iter().map(|l| l * m).collect::<Vec<_>>()).unwrap();
        let fd = (at(mu + h) - at(mu - h)) / (2.0 * h);
        assert!((chain - fd).abs() < 1e-6 * chain.abs());
    }

    #[test]
    fn structured_objective_matches_matrix_path() {
        let c_r = random_psd(4, 44);
        let lambda = [1.9, 1.1, 0.6, 0.2];
        let obj = StructuredObjective::from_receive_correlation(&c_r, 0.1, Surrogate::IBar).unwrap();
        let fp = solve_fixed_point(&CMatrix::from_real_diag(&lambda), &c_r, 0.1).unwrap();
        assert!((obj.value(&lambda).unwrap() - i_bar(&fp).unwrap().i_bar).abs() < 1e-10);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn residual_and_positivity(
                t_idx in 0usize..4, r_idx in 0usize..4,
                seed in any::<u64>(), log_s2 in -3.0f64..1.0,
            ) {
                let (t, r) = ([2, 4, 8, 16][t_idx], [2, 4, 8, 16][r_idx]);
                let sigma2 = 10f64.powf(log_s2);
                let c_t = random_psd(t, seed);
                let c_r = random_psd(r, seed ^ 0xabcdef);
                let fp = solve_fixed_point(&c_t, &c_r, sigma2).unwrap();
                prop_assert!(fp.residual < 1e-12);
                prop_assert!(fp.delta > 0.0 && fp.delta_tilde > 0.0);
                prop_assert!(fp.stability > 0.0);
            }
        }
    }
}
