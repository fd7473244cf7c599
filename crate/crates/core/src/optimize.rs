//! Precoder design.
//!
//! The optimal precoder for the corrected approximation has the structure
//! `K = U·D^{-1/2}·Λ^{1/2}`, where `C_T = U·D·Uᴴ` (decreasing `d_j`) and `Λ`
//! diagonal, nonnegative, with `(1/t)Σ λ_j/d_j ≤ 1`. What remains is a
//! t-dimensional power-loading problem, solved here by projected gradient
//! ascent in `α_j = √λ_j`.
//!
//! The same ascent driver (radial projection onto an ellipsoid, Armijo
//! backtracking) also runs the Monte-Carlo baselines on the true mutual
//! information, where gradients come from central finite differences over a
//! fixed set of channel draws.

use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{check_power, precoder_power, ChannelModel, MatrixJson};
use crate::error::{Error, Result};
use crate::largesys::{i_hat, j_bar, solve_fixed_point, StructuredObjective, Surrogate};
use crate::matcore::{herm_eig, CMatrix, RngStream};
use crate::mcsim::{mean_var, pairwise_sum, ChannelSamples, DEFAULT_REALIZATIONS};

const FEAS_TOL: f64 = 1e-12;
/// Eigenvalues at or below this carry no power.
pub const NULL_MODE: f64 = 1e-14;

/// A precoder either as a full matrix or as diagonal loads in the transmit eigenbasis.
#[derive(Debug, Clone)]
pub enum PrecoderSpec {
    General(CMatrix),
    /// `λ_j` aligned with the decreasing eigenvalues of `C_T`.
    Structured(Vec<f64>),
}

impl PrecoderSpec {
    /// Checks the power constraint against `C_T`.
    pub fn validate(&self, c_t: &CMatrix) -> Result<()> {
        match self {
            PrecoderSpec::General(k) => check_power(k, c_t.rows()),
            PrecoderSpec::Structured(lambda) => {
                let d = herm_eig(c_t)?.eigvals;
                structured_power(lambda, &d).map(|_| ())
            }
        }
    }

    pub fn to_matrix(&self, c_t: &CMatrix) -> Result<CMatrix> {
        match self {
            PrecoderSpec::General(k) => {
                check_power(k, c_t.rows())?;
                Ok(k.clone())
            }
            PrecoderSpec::Structured(lambda) => assemble_precoder(c_t, lambda),
        }
    }
}

/// `(1/t) Σ λ_j / d_j`, rejecting load on null modes and infeasible loads.
pub fn structured_power(lambda: &[f64], d: &[f64]) -> Result<f64> {
    if lambda.len() != d.len() {
        return Err(Error::Dimension(format!("{} loads for {} modes", lambda.len(), d.len())));
    }
    let mut p = 0.0;
    for (j, (&l, &dj)) in lambda.iter().zip(d).enumerate() {
        if !(l >= 0.0) || !l.is_finite() {
            return Err(Error::Domain(format!("load {j} is {l}")));
        }
        if l > 0.0 {
            if dj <= NULL_MODE {
                return Err(Error::RankDeficient { index: j, eigenvalue: dj });
            }
            p += l / dj;
        }
    }
    p /= d.len() as f64;
    if p > 1.0 + FEAS_TOL {
        return Err(Error::PowerConstraint { value: p });
    }
    Ok(p)
}

/// `K = U·D^{-1/2}·Λ^{1/2}`, so that `Kᴴ·C_T·K = Λ`.
pub fn assemble_precoder(c_t: &CMatrix, lambda: &[f64]) -> Result<CMatrix> {
    let eig = herm_eig(c_t)?;
    structured_power(lambda, &eig.eigvals)?;
    let scale: Vec<f64> =
        lambda.iter().zip(&eig.eigvals).map(|(&l, &d)| if l > 0.0 { (l / d).sqrt() } else { 0.0 }).collect();
    Ok(eig.eigvecs.scale_cols(&scale))
}

/// Objective of the structured design problem: `Ī` of the eigen-aligned
/// precoder with loads `λ`, in nats.
pub fn problem1_objective(lambda: &[f64], c_r: &CMatrix, sigma2: f64) -> Result<f64> {
    StructuredObjective::from_receive_correlation(c_r, sigma2, Surrogate::IBar)?.value(lambda)
}

/// Value at a point of the ascent parameter space, optionally with its gradient.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Per-coordinate standard error of a stochastic gradient.
    pub grad_std_error: Option<Vec<f64>>,
}

/// A smooth function of the ascent parameters (`α` or the entries of `K`).
pub trait AscentObjective: Sync {
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn evaluate(&self, x: &[f64]) -> Result<Evaluation>;
}

/// Deterministic surrogate as a function of `α` with `λ = α²`.
#[derive(Debug, Clone)]
pub struct SurrogateInAlpha {
    inner: StructuredObjective,
    /// Multiplies values and gradients; `1/ln 2` reports bits.
    scale: f64,
}

impl SurrogateInAlpha {
    pub fn new(inner: StructuredObjective) -> Self {
        Self { inner, scale: 1.0 }
    }

    pub fn in_bits(inner: StructuredObjective) -> Self {
        Self { inner, scale: std::f64::consts::LOG2_E }
    }
}

fn squares(x: &[f64]) -> Vec<f64> {
    x.iter().map(|a| a * a).collect()
}

impl AscentObjective for SurrogateInAlpha {
    fn value(&self, alpha: &[f64]) -> Result<f64> {
        Ok(self.scale * self.inner.value(&squares(alpha))?)
    }

    fn evaluate(&self, alpha: &[f64]) -> Result<Evaluation> {
        let (v, g) = self.inner.value_and_grad(&squares(alpha))?;
        let grad = alpha.iter().zip(&g).map(|(a, gl)| self.scale * 2.0 * a * gl).collect();
        Ok(Evaluation { value: self.scale * v, grad, grad_std_error: None })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentOptions {
    pub max_iter: usize,
    pub step0: f64,
    pub backtrack: f64,
    pub armijo: f64,
    pub grad_tol: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self { max_iter: 500, step0: 1.0, backtrack: 0.5, armijo: 1e-4, grad_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    /// The step that produced this iterate was pulled back onto the constraint.
    pub projected: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimResult {
    pub lambda_opt: Vec<f64>,
    pub objective: f64,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precoder: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl OptimResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }
}

#[derive(Debug, Clone)]
pub struct AscentOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// Ellipsoid `Σ w_j x_j² ≤ 1`; coordinates with `w_j = ∞` are pinned at 0.
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    pub weights: Vec<f64>,
}

impl Ellipsoid {
    /// `(1/t) Σ α_j²/d_j ≤ 1`
    pub fn for_modes(d: &[f64]) -> Self {
        let t = d.len() as f64;
        Self { weights: d.iter().map(|&dj| if dj > NULL_MODE { 1.0 / (t * dj) } else { f64::INFINITY }).collect() }
    }

    /// `Σ x_j² ≤ radius2`
    pub fn ball(n: usize, radius2: f64) -> Self {
        Self { weights: vec![1.0 / radius2; n] }
    }

    pub fn level(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.weights).filter(|(_, w)| w.is_finite()).map(|(a, w)| w * a * a).sum()
    }

    fn pin(&self, x: &mut [f64]) {
        for (a, w) in x.iter_mut().zip(&self.weights) {
            if !w.is_finite() {
                *a = 0.0;
            }
        }
    }

    /// Radial pull-back onto the boundary when outside; returns whether it moved.
    pub fn project(&self, x: &mut [f64]) -> bool {
        self.pin(x);
        let c = self.level(x);
        if c > 1.0 {
            let s = 1.0 / c.sqrt();
            x.iter_mut().for_each(|a| *a *= s);
            true
        } else {
            false
        }
    }

    /// Gradient with the outward normal component removed on the boundary.
    pub fn tangent(&self, x: &[f64], g: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = g.iter().zip(&self.weights).map(|(v, w)| if w.is_finite() { *v } else { 0.0 }).collect();
        if self.level(x) >= 1.0 - 1e-10 {
            let n: Vec<f64> = x.iter().zip(&self.weights).map(|(a, w)| if w.is_finite() { w * a } else { 0.0 }).collect();
            let gn: f64 = g.iter().zip(&n).map(|(a, b)| a * b).sum();
            let nn: f64 = n.iter().map(|a| a * a).sum();
            if gn > 0.0 && nn > 0.0 {
                g.iter_mut().zip(&n).for_each(|(a, b)| *a -= gn / nn * b);
            }
        }
        g
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Relative objective gain below which an accepted step counts as a stall.
const STALL_EPS: f64 = 4.0 * f64::EPSILON;

/// Backtracking along `dir` with radial pull-back and the Armijo test.
fn line_search<O: AscentObjective + ?Sized>(
    x: &[f64],
    eval: &Evaluation,
    dir: &[f64],
    region: &Ellipsoid,
    objective: &O,
    opts: &AscentOptions,
) -> Result<Option<(Vec<f64>, bool)>> {
    let mut step = opts.step0;
    for _ in 0..60 {
        let mut cand: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + step * d).collect();
        let moved = region.project(&mut cand);
        let ascent: f64 = cand.iter().zip(x).zip(&eval.grad).map(|((c, a), g)| g * (c - a)).sum();
        if ascent > 0.0 {
            let v = objective.value(&cand)?;
            if v >= eval.value + opts.armijo * ascent {
                return Ok(Some((cand, moved)));
            }
        }
        step *= opts.backtrack;
    }
    Ok(None)
}

/// Projected gradient ascent with Armijo backtracking.
///
/// Every accepted iterate is feasible and the recorded objective never
/// decreases. Stops when the tangential gradient norm drops below
/// `grad_tol`, when no step length yields a measurable gain, or after
/// `max_iter`. A stop without gain counts as converged if the tangential
/// gradient norm is below `√grad_tol`.
pub fn ellipsoid_ascent<O: AscentObjective + ?Sized>(
    x0: &[f64],
    region: &Ellipsoid,
    objective: &O,
    opts: &AscentOptions,
) -> Result<AscentOutcome> {
    let mut x = x0.to_vec();
    let initially_projected = region.project(&mut x);
    let mut eval = objective.evaluate(&x)?;
    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut projected = initially_projected;
    let mut converged = false;
    let mut iterations = 0;

    loop {
        let tangent = region.tangent(&x, &eval.grad);
        let gnorm = norm(&tangent);
        trace.push(TraceEntry { iteration: iterations, objective: eval.value, gradient_norm: gnorm, projected });
        if let Some(se) = &eval.grad_std_error {
            let full = norm(&eval.grad);
            if norm(se) > full && warnings.is_empty() {
                warnings.push(format!(
                    "iteration {iterations}: gradient standard error {:.3e} exceeds gradient norm {full:.3e}",
                    norm(se)
                ));
            }
        }
        if gnorm < opts.grad_tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }

        // on the boundary, step along the tangent plane; a raw gradient step
        // pulled back radially can stall with the normal component dominating
        let Some((cand, moved)) = line_search(&x, &eval, &tangent, region, objective, opts)? else {
            // no representable ascent step left
            converged = gnorm < opts.grad_tol.sqrt();
            break;
        };
        x = cand;
        projected = moved;
        let previous = eval.value;
        eval = objective.evaluate(&x)?;
        iterations += 1;
        if eval.value - previous <= STALL_EPS * previous.abs() {
            // flat to rounding: record the point and stop
            let gnorm = norm(&region.tangent(&x, &eval.grad));
            trace.push(TraceEntry { iteration: iterations, objective: eval.value, gradient_norm: gnorm, projected });
            converged = gnorm < opts.grad_tol.sqrt();
            break;
        }
    }
    Ok(AscentOutcome { value: eval.value, x, trace, converged, iterations, warnings })
}

fn outcome_to_result(out: AscentOutcome) -> OptimResult {
    OptimResult {
        lambda_opt: squares(&out.x),
        objective: out.value,
        trace: out.trace,
        converged: out.converged,
        iterations: out.iterations,
        precoder: None,
        warnings: out.warnings,
    }
}

/// Maximizes a structured objective over `λ` from one starting point, given
/// the transmit eigenvalues `d` (decreasing).
pub fn maximize_loads<O: AscentObjective + ?Sized>(
    lambda0: &[f64],
    d: &[f64],
    objective: &O,
    opts: &AscentOptions,
) -> Result<OptimResult> {
    structured_power(lambda0, d)?;
    let alpha0: Vec<f64> = lambda0.iter().map(|l| l.sqrt()).collect();
    Ok(outcome_to_result(ellipsoid_ascent(&alpha0, &Ellipsoid::for_modes(d), objective, opts)?))
}

/// Projected gradient maximization of `Ī` over eigen-aligned precoders.
pub fn projected_gradient(
    lambda0: &[f64],
    c_t: &CMatrix,
    c_r: &CMatrix,
    sigma2: f64,
    opts: &AscentOptions,
) -> Result<OptimResult> {
    let eig = herm_eig(c_t)?;
    let obj = SurrogateInAlpha::new(StructuredObjective::from_receive_correlation(c_r, sigma2, Surrogate::IBar)?);
    let mut res = maximize_loads(lambda0, &eig.eigvals, &obj, opts)?;
    res.precoder = Some(MatrixJson::from(&assemble_precoder(c_t, &res.lambda_opt)?));
    Ok(res)
}

/// Starting loads for multi-start runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartPlan {
    /// `λ = d` (no precoding).
    pub uniform: bool,
    /// For every s < t: full power split over the s strongest modes.
    pub sparse: bool,
    /// Random boundary points.
    pub random: usize,
    pub seed: u64,
}

impl Default for StartPlan {
    fn default() -> Self {
        Self { uniform: true, sparse: true, random: 0, seed: 0 }
    }
}

/// Builds the starting loads described by `plan` for modes `d`.
pub fn starting_points(d: &[f64], plan: &StartPlan) -> Vec<Vec<f64>> {
    let t = d.len();
    let live: Vec<usize> = (0..t).filter(|&j| d[j] > NULL_MODE).collect();
    let mut starts = Vec::new();
    let spread = |active: &[usize]| {
        // λ_j/d_j equal on the active set, constraint tight
        let mut l = vec![0.0; t];
        for &j in active {
            l[j] = d[j] * t as f64 / active.len() as f64;
        }
        l
    };
    if live.is_empty() {
        return vec![vec![0.0; t]];
    }
    if plan.uniform {
        starts.push(spread(&live));
    }
    if plan.sparse {
        for s in (1..live.len()).rev() {
            starts.push(spread(&live[..s]));
        }
    }
    for i in 0..plan.random {
        let mut rng = RngStream::new(plan.seed, i as u64).rng();
        let mut l = vec![0.0; t];
        for &j in &live {
            l[j] = d[j] * rng.random_range(0.05..1.0);
        }
        let p: f64 = live.iter().map(|&j| l[j] / d[j]).sum::<f64>() / t as f64;
        l.iter_mut().for_each(|x| *x /= p);
        starts.push(l);
    }
    if starts.is_empty() {
        starts.push(spread(&live));
    }
    starts
}

/// Runs every start in parallel and keeps the best objective; ties go to
/// the lowest start index.
pub fn multi_start<O: AscentObjective + ?Sized>(
    starts: &[Vec<f64>],
    d: &[f64],
    objective: &O,
    opts: &AscentOptions,
) -> Result<(usize, OptimResult)> {
    let runs: Vec<OptimResult> =
        starts.par_iter().map(|l0| maximize_loads(l0, d, objective, opts)).collect::<Result<_>>()?;
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.objective > runs[best].objective {
            best = i;
        }
    }
    Ok((best, runs.into_iter().nth(best).expect("at least one start")))
}

/// Multi-start projected gradient on `Ī` (or `Î`) for the given correlations.
pub fn optimize_structured(
    c_t: &CMatrix,
    c_r: &CMatrix,
    sigma2: f64,
    surrogate: Surrogate,
    plan: &StartPlan,
    opts: &AscentOptions,
) -> Result<OptimResult> {
    let eig = herm_eig(c_t)?;
    let obj = SurrogateInAlpha::new(StructuredObjective::from_receive_correlation(c_r, sigma2, surrogate)?);
    let starts = starting_points(&eig.eigvals, plan);
    let (_, mut res) = multi_start(&starts, &eig.eigvals, &obj, opts)?;
    res.precoder = Some(MatrixJson::from(&assemble_precoder(c_t, &res.lambda_opt)?));
    Ok(res)
}

/// Value of the antenna-selection objective for `s` active antennas at
/// power `t/s` each, in nats:
/// `s·log[(t/s - 1 + σ² + √((t/s - 1 + σ²)² + 4σ²)) / (2σ²)]`.
pub fn antenna_selection_value(t: usize, s: usize, sigma2: f64) -> f64 {
    let a = t as f64 / s as f64 - 1.0 + sigma2;
    s as f64 * ((a + (a * a + 4.0 * sigma2).sqrt()) / (2.0 * sigma2)).ln()
}

/// Best number of active antennas for an uncorrelated channel and the
/// corresponding `Î`, ties going to the larger `s`.
pub fn antenna_selection_iid(t: usize, sigma2: f64) -> Result<(usize, f64)> {
    if t == 0 {
        return Err(Error::Domain("need at least one transmit antenna".into()));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::Domain(format!("noise variance must be positive, got {sigma2}")));
    }
    let mut best = (1, antenna_selection_value(t, 1, sigma2));
    for s in 2..=t {
        let v = antenna_selection_value(t, s, sigma2);
        if v >= best.1 {
            best = (s, v);
        }
    }
    Ok(best)
}

/// Approximations for a precoder and for its diagonalizing rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dominance {
    pub i_hat_k: f64,
    pub i_hat_kd: f64,
    pub j_bar_k: f64,
    pub j_bar_kd: f64,
}

impl Dominance {
    pub fn holds(&self, slack: f64) -> bool {
        self.i_hat_k <= self.i_hat_kd + slack && self.j_bar_k <= self.j_bar_kd + slack
    }
}

/// Compares `K` with `K_d = K·W`, where `Kᴴ·C_T·K = W·Λ·Wᴴ`.
pub fn prop3_dominance_check(k: &CMatrix, c_t: &CMatrix, c_r: &CMatrix, sigma2: f64) -> Result<Dominance> {
    check_power(k, c_t.rows())?;
    let eff = (&(&k.adjoint() * c_t) * k).hermitian_part()?;
    let w = herm_eig(&eff)?.eigvecs;
    let kd = k * &w;
    let eff_d = (&(&kd.adjoint() * c_t) * &kd).hermitian_part()?;
    let fp = solve_fixed_point(&eff, c_r, sigma2)?;
    let fp_d = solve_fixed_point(&eff_d, c_r, sigma2)?;
    Ok(Dominance { i_hat_k: i_hat(&fp).0, i_hat_kd: i_hat(&fp_d).0, j_bar_k: j_bar(&fp)?, j_bar_kd: j_bar(&fp_d)? })
}

/// Options for the Monte-Carlo baselines on the true mutual information.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueEmiOptions {
    pub ascent: AscentOptions,
    /// Relative central-difference step.
    pub fd_step: f64,
}

impl Default for TrueEmiOptions {
    fn default() -> Self {
        Self {
            ascent: AscentOptions { max_iter: 100, grad_tol: 1e-5, ..AscentOptions::default() },
            fd_step: 1e-5,
        }
    }
}

type PrecoderMap<'a> = Box<dyn Fn(&[f64]) -> CMatrix + Sync + 'a>;

/// Sample-average mutual information over fixed channel draws, as a
/// function of the ascent parameters.
struct McObjective<'a> {
    samples: &'a ChannelSamples,
    to_precoder: PrecoderMap<'a>,
    fd_step: f64,
}

impl McObjective<'_> {
    fn samples_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.samples.mi_samples(&(self.to_precoder)(x))
    }
}

impl AscentObjective for McObjective<'_> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        let s = self.samples_at(x)?;
        Ok(pairwise_sum(&s) / s.len() as f64)
    }

    fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        let value = self.value(x)?;
        let mut grad = Vec::with_capacity(x.len());
        let mut se = Vec::with_capacity(x.len());
        for j in 0..x.len() {
            let h = self.fd_step * x[j].abs().max(1.0);
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[j] += h;
            dn[j] -= h;
            // same channel draws on both sides: per-realization differences
            let a = self.samples_at(&up)?;
            let b = self.samples_at(&dn)?;
            let diff: Vec<f64> = a.iter().zip(&b).map(|(p, m)| (p - m) / (2.0 * h)).collect();
            let (m, v) = mean_var(&diff);
            grad.push(m);
            se.push((v / diff.len() as f64).sqrt());
        }
        Ok(Evaluation { value, grad, grad_std_error: Some(se) })
    }
}

/// Stochastic projected gradient on the Monte-Carlo mutual information.
///
/// `structured = true` searches eigen-aligned precoders (`t` parameters)
/// from the default multi-start plan; otherwise all `t²` complex entries of
/// `K` under `(1/t)Tr(KKᴴ) ≤ 1`, starting from `K = I`. Channel draws are fixed by `seed`
/// and shared by every evaluation.
pub fn optimize_true_emi(
    model: &ChannelModel,
    structured: bool,
    n_mc: usize,
    seed: u64,
    opts: &TrueEmiOptions,
) -> Result<OptimResult> {
    let t = model.t();
    let samples = ChannelSamples::draw(model, n_mc.max(2), seed);
    if structured {
        let eig = herm_eig(model.c_t())?;
        let d = eig.eigvals.clone();
        let u = eig.eigvecs.clone();
        let obj = McObjective {
            samples: &samples,
            to_precoder: Box::new(move |alpha: &[f64]| {
                let s: Vec<f64> =
                    alpha.iter().zip(&d).map(|(a, &dj)| if dj > NULL_MODE { a / dj.sqrt() } else { 0.0 }).collect();
                u.scale_cols(&s)
            }),
            fd_step: opts.fd_step,
        };
        let starts = starting_points(&eig.eigvals, &StartPlan::default());
        let (_, mut res) = multi_start(&starts, &eig.eigvals, &obj, &opts.ascent)?;
        res.precoder = Some(MatrixJson::from(&assemble_precoder(model.c_t(), &res.lambda_opt)?));
        Ok(res)
    } else {
        let n = t * t;
        let to_k = move |x: &[f64]| CMatrix::from_fn(t, t, |i, j| Complex64::new(x[i * t + j], x[n + i * t + j]));
        let obj = McObjective { samples: &samples, to_precoder: Box::new(to_k), fd_step: opts.fd_step };
        let mut x0 = vec![0.0; 2 * n];
        for i in 0..t {
            x0[i * t + i] = 1.0;
        }
        let out = ellipsoid_ascent(&x0, &Ellipsoid::ball(2 * n, t as f64), &obj, &opts.ascent)?;
        let k = to_k(&out.x);
        let lambda = herm_eig(&(&(&k.adjoint() * model.c_t()) * &k))?.eigvals;
        let mut res = outcome_to_result(out);
        res.lambda_opt = lambda.into_iter().map(|l| l.max(0.0)).collect();
        res.precoder = Some(MatrixJson::from(&k));
        Ok(res)
    }
}

/// Monte-Carlo mutual information of an optimized precoder on fresh draws.
pub fn evaluate_result(model: &ChannelModel, res: &OptimResult, n: usize, seed: u64) -> Result<crate::mcsim::McEstimate> {
    let k: CMatrix = match &res.precoder {
        Some(j) => j.clone().try_into()?,
        None => assemble_precoder(model.c_t(), &res.lambda_opt)?,
    };
    // guard against rounding just past the constraint
    let p = precoder_power(&k);
    let k = if p > 1.0 { k.scale(1.0 / p.sqrt()) } else { k };
    crate::mcsim::emi_estimate(model, &k, n.max(2), seed)
}

/// Wall-clock seconds of `f`.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

pub const DEFAULT_TRUE_EMI_REALIZATIONS: usize = DEFAULT_REALIZATIONS;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{normalize_trace, ClusterSpec};
    use crate::largesys::i_bar;
    use crate::matcore::testutil::*;
    use std::f64::consts::PI;

    fn random_corr(n: usize, seed: u64) -> CMatrix {
        normalize_trace(&random_pd(n, 0.05, seed)).unwrap()
    }

    #[test]
    fn assemble_identity_and_zero() {
        let k = assemble_precoder(&CMatrix::identity(3), &[1.0; 3]).unwrap();
        assert!((&(&k.adjoint() * &k) - &CMatrix::identity(3)).max_abs() < 1e-14);
        let k0 = assemble_precoder(&CMatrix::identity(3), &[0.0; 3]).unwrap();
        assert_eq!(k0.max_abs(), 0.0);
    }

    #[test]
    fn assemble_diagonalizes() {
        let mut rng = RngStream::new(3, 0).rng();
        for seed in 0..20 {
            let c_t = random_corr(4, seed);
            let d = herm_eig(&c_t).unwrap().eigvals;
            let mut lambda: Vec<f64> = d.iter().map(|dj| dj * rng.random_range(0.0..1.0)).collect();
            let p: f64 = lambda.iter().zip(&d).map(|(l, d)| l / d).sum::<f64>() / 4.0;
            lambda.iter_mut().for_each(|l| *l /= p * rng.random_range(1.0..2.0));
            let k = assemble_precoder(&c_t, &lambda).unwrap();
            let eff = &(&k.adjoint() * &c_t) * &k;
            assert!((&eff - &CMatrix::from_real_diag(&lambda)).max_abs() < 1e-12);
            let expected: f64 = lambda.iter().zip(&d).map(|(l, d)| l / d).sum::<f64>() / 4.0;
            assert!((precoder_power(&k) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn assemble_errors() {
        let c_t = CMatrix::from_real_diag(&[2.0, 0.0]);
        assert!(matches!(assemble_precoder(&c_t, &[1.0, 0.5]), Err(Error::RankDeficient { index: 1, .. })));
        assert!(assemble_precoder(&c_t, &[1.0, 0.0]).is_ok());
        assert!(matches!(assemble_precoder(&CMatrix::identity(2), &[1.5, 1.0]), Err(Error::PowerConstraint { .. })));
    }

    #[test]
    fn objective_basics() {
        let c_r = CMatrix::identity(4);
        assert_eq!(problem1_objective(&[0.0; 4], &c_r, 1.0).unwrap(), 0.0);
        let v = problem1_objective(&[1.0; 4], &c_r, 1.0).unwrap();
        let fp = solve_fixed_point(&CMatrix::identity(4), &c_r, 1.0).unwrap();
        assert!((v - i_bar(&fp).unwrap().i_bar).abs() < 1e-10);
        let a = problem1_objective(&[1.5, 0.5, 1.0, 1.0], &c_r, 0.3).unwrap();
        let b = problem1_objective(&[1.0, 1.0, 0.5, 1.5], &c_r, 0.3).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn cross_module_identity() {
        let mut rng = RngStream::new(8, 0).rng();
        for seed in 0..100u64 {
            let c_t = random_corr(4, seed);
            let c_r = random_corr(4, seed + 500);
            let d = herm_eig(&c_t).unwrap().eigvals;
            let raw: Vec<f64> = d.iter().map(|dj| dj * rng.random_range(0.0..1.0)).collect();
            let p: f64 = raw.iter().zip(&d).map(|(l, d)| l / d).sum::<f64>() / 4.0;
            let lambda: Vec<f64> = raw.iter().map(|l| l / p).collect();
            let sigma2 = 10f64.powf(rng.random_range(-1.5..0.5));
            let k = assemble_precoder(&c_t, &lambda).unwrap();
            let eff = (&(&k.adjoint() * &c_t) * &k).hermitian_part().unwrap();
            let via_matrix = i_bar(&solve_fixed_point(&eff, &c_r, sigma2).unwrap()).unwrap().i_bar;
            let direct = problem1_objective(&lambda, &c_r, sigma2).unwrap();
            assert!((via_matrix - direct).abs() < 1e-10, "{via_matrix} vs {direct}");
        }
    }

    #[test]
    fn scaling_to_boundary_increases_rate() {
        let obj = StructuredObjective::new(vec![1.0; 4], 0.1, Surrogate::IHat);
        let lambda = [0.9, 0.4, 0.2, 0.1];
        let p: f64 = lambda.iter().sum::<f64>() / 4.0;
        let scaled: Vec<f64> = lambda.iter().map(|l| l / p).collect();
        assert!(obj.value(&scaled).unwrap() > obj.value(&lambda).unwrap());
    }

    #[test]
    fn ellipsoid_projection() {
        let e = Ellipsoid::for_modes(&[2.0, 1.0, 0.0]);
        let mut x = vec![3.0, 1.0, 5.0];
        assert!(e.project(&mut x));
        assert_eq!(x[2], 0.0);
        assert!((e.level(&x) - 1.0).abs() < 1e-15);
        let mut y = vec![0.1, 0.1, 0.0];
        assert!(!e.project(&mut y));
    }

    #[test]
    fn single_antenna_start_is_stationary() {
        let res = projected_gradient(&[1.0], &CMatrix::identity(1), &CMatrix::identity(2), 0.5, &Default::default())
            .unwrap();
        assert_eq!(res.iterations, 0);
        assert!(res.converged);
        assert_eq!(res.lambda_opt, vec![1.0]);
    }

    #[test]
    fn ascent_is_monotone_and_feasible() {
        let tx = ClusterSpec::new(PI / 4.0, 0.5, 4).unwrap();
        let rx = ClusterSpec::new(PI / 12.0, 0.4, 4).unwrap();
        let m = ChannelModel::clustered(&tx, &rx, 0.1).unwrap();
        let d = herm_eig(m.c_t()).unwrap().eigvals;
        let res = projected_gradient(&d, m.c_t(), m.c_r(), 0.1, &Default::default()).unwrap();
        assert!(res.trace.windows(2).all(|w| w[1].objective >= w[0].objective));
        assert!(structured_power(&res.lambda_opt, &d).unwrap() <= 1.0 + 1e-12);
        assert!(res.objective > res.trace[0].objective);
        let json = res.to_json();
        assert!(json.contains("\"lambda_opt\"") && json.contains("\"trace\""));
    }

    #[test]
    fn iid_multistart_finds_antenna_selection() {
        let sigma2 = 10f64.powf(-1.5);
        let res = optimize_structured(
            &CMatrix::identity(8),
            &CMatrix::identity(8),
            sigma2,
            Surrogate::IHat,
            &StartPlan::default(),
            &Default::default(),
        )
        .unwrap();
        let active: Vec<f64> = res.lambda_opt.iter().copied().filter(|&l| l > 1e-6).collect();
        assert_eq!(active.len(), 6);
        assert!(active.iter().all(|l| (l - 8.0 / 6.0).abs() < 1e-6));
        let (s, v) = antenna_selection_iid(8, sigma2).unwrap();
        assert_eq!(s, 6);
        assert!((res.objective - v).abs() < 1e-9);
    }

    #[test]
    fn antenna_selection_full_set_matches_golden_ratio() {
        let v = antenna_selection_value(4, 4, 1.0);
        assert!((v - 4.0 * (1.0 + 0.618_033_988_749_894_8f64).ln()).abs() < 1e-12);
        assert_eq!(antenna_selection_iid(1, 0.3).unwrap().0, 1);
        assert!(antenna_selection_iid(0, 0.3).is_err());
        // very low SNR favors spreading over every antenna
        assert_eq!(antenna_selection_iid(8, 10.0).unwrap().0, 8);
    }

    #[test]
    fn bits_do_not_change_the_argmax() {
        let inner = StructuredObjective::new(vec![1.4, 1.0, 0.6], 0.2, Surrogate::IBar);
        let d = [1.5, 1.0, 0.5];
        let nats = SurrogateInAlpha::new(inner.clone());
        let bits = SurrogateInAlpha::in_bits(inner);
        let opts = AscentOptions::default();
        let opts_bits = AscentOptions {
            step0: opts.step0 * std::f64::consts::LN_2,
            grad_tol: opts.grad_tol * std::f64::consts::LOG2_E,
            ..opts
        };
        let l0 = d;
        let a = maximize_loads(&l0, &d, &nats, &opts).unwrap();
        let b = maximize_loads(&l0, &d, &bits, &opts_bits).unwrap();
        assert_eq!(a.iterations, b.iterations);
        for (x, y) in a.lambda_opt.iter().zip(&b.lambda_opt) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!((a.objective * std::f64::consts::LOG2_E - b.objective).abs() < 1e-9);
    }

    #[test]
    fn dominance_holds_for_random_precoders() {
        for seed in 0..30u64 {
            let c_t = random_corr(4, seed);
            let c_r = random_corr(4, seed + 99);
            let k = random_matrix(4, 4, seed + 1234);
            let k = k.scale(0.9 / precoder_power(&k).sqrt());
            let dom = prop3_dominance_check(&k, &c_t, &c_r, 0.2).unwrap();
            assert!(dom.holds(1e-10), "{dom:?}");
        }
    }

    #[test]
    fn dominance_equality_cases() {
        let c_t = CMatrix::from_real_diag(&[1.5, 0.5]);
        let dom = prop3_dominance_check(&CMatrix::identity(2), &c_t, &CMatrix::identity(2), 0.5).unwrap();
        assert!((dom.i_hat_k - dom.i_hat_kd).abs() < 1e-12);
        assert!((dom.j_bar_k - dom.j_bar_kd).abs() < 1e-12);
        let zero = prop3_dominance_check(&CMatrix::zeros(2, 2), &c_t, &CMatrix::identity(2), 0.5).unwrap();
        assert_eq!(zero, Dominance { i_hat_k: 0.0, i_hat_kd: 0.0, j_bar_k: 0.0, j_bar_kd: 0.0 });
    }

    #[test]
    fn true_emi_flat_at_very_low_snr() {
        let m = ChannelModel::iid(2, 2, 1e3).unwrap();
        let opts = TrueEmiOptions { ascent: AscentOptions { max_iter: 5, ..Default::default() }, ..Default::default() };
        let res = optimize_true_emi(&m, true, 200, 1, &opts).unwrap();
        assert!(res.objective < 5e-3);
        for l in &res.lambda_opt {
            assert!((l - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn true_emi_general_improves_and_stays_feasible() {
        let tx = ClusterSpec::new(PI / 4.0, 0.5, 3).unwrap();
        let rx = ClusterSpec::new(PI / 12.0, 0.4, 3).unwrap();
        let m = ChannelModel::clustered(&tx, &rx, 0.1).unwrap();
        let opts = TrueEmiOptions { ascent: AscentOptions { max_iter: 10, ..Default::default() }, ..Default::default() };
        let res = optimize_true_emi(&m, false, 200, 2, &opts).unwrap();
        assert!(res.trace.windows(2).all(|w| w[1].objective >= w[0].objective));
        let k: CMatrix = res.precoder.clone().unwrap().try_into().unwrap();
        assert!(precoder_power(&k) <= 1.0 + 1e-12);
        assert!(res.objective > res.trace[0].objective);
    }
}
