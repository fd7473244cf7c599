//! Seeded Monte Carlo reference for the true MMSE quantities.
//!
//! Realization `i` of a run with seed `s` always draws its channel from
//! ChaCha stream `(s, i)`, and per-realization values are reduced with a
//! fixed pairwise tree. Results are therefore bit-identical for any number
//! of rayon workers.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{check_power, ChannelModel};
use crate::error::{Error, Result};
use crate::matcore::{herm_eig, sample_circular_gaussian, CMatrix, Cholesky, RngStream};

/// Realization count used when none is given.
pub const DEFAULT_REALIZATIONS: usize = 1000;

/// SINRs more negative than this are treated as a numerical failure.
const SINR_SLACK: f64 = 1e-10;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    #[serde(rename = "n")]
    pub n_realizations: usize,
    pub seed: u64,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64], seed: u64) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::Domain(format!("need at least 2 realizations, got {n}")));
        }
        let (mean, var) = mean_var(samples);
        Ok(Self { mean, std_error: (var / n as f64).sqrt(), n_realizations: n, seed })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

/// Pairwise (tree) summation with a fixed split, independent of threading.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if x.len() <= LEAF {
        x.iter().sum()
    } else {
        let mid = x.len() / 2;
        pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
    }
}

/// Mean and unbiased variance, both by pairwise reduction.
pub fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = pairwise_sum(x) / n;
    let dev: Vec<f64> = x.iter().map(|v| (v - mean).powi(2)).collect();
    let var = if x.len() > 1 { pairwise_sum(&dev) / (n - 1.0) } else { 0.0 };
    (mean, var)
}

fn require_realizations(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::Domain(format!("need at least 2 realizations, got {n}")))
    } else {
        Ok(())
    }
}

/// Diagonal of `σ²Q_T(K) = (KᴴHᴴHK/σ² + I)⁻¹` for one realization.
pub fn scaled_resolvent_diag(h: &CMatrix, k: &CMatrix, sigma2: f64) -> Result<Vec<f64>> {
    let hk = h.matmul(k)?;
    let mut a = hk.gram().scale(1.0 / sigma2);
    for j in 0..a.rows() {
        a[(j, j)] += 1.0;
    }
    Ok(Cholesky::factor(&a)?.inverse_diag())
}

/// `β_j = 1/(σ² Q_T,jj) - 1`, clipping rounding-level negatives to 0.
pub fn sinrs_from_resolvent(scaled_q: &[f64]) -> Result<Vec<f64>> {
    scaled_q
        .iter()
        .enumerate()
        .map(|(j, &q)| {
            let b = 1.0 / q - 1.0;
            if b >= 0.0 {
                Ok(b)
            } else if b > -SINR_SLACK {
                Ok(0.0)
            } else {
                Err(Error::NegativeSinr { stream: j, value: b })
            }
        })
        .collect()
}

/// `-Σ_j log(σ² Q_T,jj)`: the instantaneous mutual information of one realization.
pub fn realization_mi(scaled_q: &[f64]) -> f64 {
    -scaled_q.iter().map(|q| q.ln()).sum::<f64>()
}

/// A fixed set of channel draws, reused across precoders (common random numbers).
#[derive(Debug, Clone)]
pub struct ChannelSamples {
    pub channels: Vec<CMatrix>,
    pub sigma2: f64,
    pub seed: u64,
}

impl ChannelSamples {
    pub fn draw(model: &ChannelModel, n: usize, seed: u64) -> Self {
        let channels =
            (0..n as u64).into_par_iter().map(|i| model.sample(&mut RngStream::new(seed, i).rng())).collect();
        Self { channels, sigma2: model.sigma2(), seed }
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Per-realization mutual information for precoder `k`, in realization order.
    pub fn mi_samples(&self, k: &CMatrix) -> Result<Vec<f64>> {
        self.channels.par_iter().map(|h| Ok(realization_mi(&scaled_resolvent_diag(h, k, self.sigma2)?))).collect()
    }

    pub fn emi(&self, k: &CMatrix) -> Result<McEstimate> {
        McEstimate::from_samples(&self.mi_samples(k)?, self.seed)
    }

    /// Sample mean only; used inside optimizers.
    pub fn emi_mean(&self, k: &CMatrix) -> Result<f64> {
        let s = self.mi_samples(k)?;
        Ok(pairwise_sum(&s) / s.len() as f64)
    }
}

/// Per-realization MMSE output SINRs (n rows of t values).
pub fn sinr_samples(model: &ChannelModel, k: &CMatrix, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    check_power(k, model.t())?;
    let sigma2 = model.sigma2();
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let h = model.sample(&mut RngStream::new(seed, i).rng());
            sinrs_from_resolvent(&scaled_resolvent_diag(&h, k, sigma2)?)
        })
        .collect()
}

/// Ergodic mutual information `E Σ_j log(1 + β_j)` in nats.
pub fn emi_estimate(model: &ChannelModel, k: &CMatrix, n: usize, seed: u64) -> Result<McEstimate> {
    check_power(k, model.t())?;
    require_realizations(n)?;
    let sigma2 = model.sigma2();
    let samples: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let h = model.sample(&mut RngStream::new(seed, i).rng());
            Ok(realization_mi(&scaled_resolvent_diag(&h, k, sigma2)?))
        })
        .collect::<Result<_>>()?;
    McEstimate::from_samples(&samples, seed)
}

/// Channel statistics rotated into the correlation eigenbases:
/// `Y = t^{-1/2} D^{1/2} X D̃^{1/2}` with `X` t×r i.i.d. CN(0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct EigenbasisModel {
    /// Transmit eigenvalues, decreasing.
    pub d: Vec<f64>,
    /// Receive eigenvalues, decreasing.
    pub d_tilde: Vec<f64>,
    pub sigma2: f64,
}

impl EigenbasisModel {
    pub fn from_model(model: &ChannelModel) -> Result<Self> {
        let clamp = |v: Vec<f64>| v.into_iter().map(|x| x.max(0.0)).collect();
        Ok(Self {
            d: clamp(herm_eig(model.c_t())?.eigvals),
            d_tilde: clamp(herm_eig(model.c_r())?.eigvals),
            sigma2: model.sigma2(),
        })
    }

    fn sample_y(&self, stream: RngStream) -> CMatrix {
        let t = self.d.len();
        let x = sample_circular_gaussian(t, self.d_tilde.len(), &mut stream.rng());
        let left: Vec<f64> = self.d.iter().map(|d| (d / t as f64).sqrt()).collect();
        let right: Vec<f64> = self.d_tilde.iter().map(|d| d.sqrt()).collect();
        x.scale_rows(&left).scale_cols(&right)
    }
}

/// Sample variance of `u Q uᴴ` with `Q = (YYᴴ + σ²I)⁻¹`.
///
/// `mean` holds the variance estimate and `std_error` its asymptotic
/// standard error `sqrt((m₄ - s⁴)/n)`.
pub fn quadform_variance_estimate(model: &EigenbasisModel, u: &[Complex64], n: usize, seed: u64) -> Result<McEstimate> {
    let t = model.d.len();
    if u.len() != t {
        return Err(Error::Dimension(format!("u has length {}, expected {t}", u.len())));
    }
    let norm2: f64 = u.iter().map(|z| z.norm_sqr()).sum();
    if (norm2 - 1.0).abs() > 1e-10 {
        return Err(Error::Domain(format!("u must have unit norm, |u|^2 = {norm2}")));
    }
    require_realizations(n)?;
    let uh = CMatrix::new(t, 1, u.iter().map(|z| z.conj()).collect())?;
    let values: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let y = model.sample_y(RngStream::new(seed, i));
            let mut a = y.adjoint().gram();
            for j in 0..t {
                a[(j, j)] += model.sigma2;
            }
            let x = Cholesky::factor(&a)?.solve(&uh)?;
            // u A⁻¹ uᴴ
            Ok((0..t).map(|j| (u[j] * x[(j, 0)]).re).sum::<f64>())
        })
        .collect::<Result<_>>()?;
    let (mean, var) = mean_var(&values);
    let m4: Vec<f64> = values.iter().map(|v| (v - mean).powi(4)).collect();
    let m4 = pairwise_sum(&m4) / n as f64;
    let se = ((m4 - var * var).max(0.0) / n as f64).sqrt();
    Ok(McEstimate { mean: var, std_error: se, n_realizations: n, seed })
}

/// Writes one CSV row per realization: `realization,beta_1,...,beta_t`.
pub fn write_sinr_csv<W: Write>(mut w: W, samples: &[Vec<f64>]) -> Result<()> {
    let t = samples.first().map_or(0, |r| r.len());
    let header: Vec<String> = (1..=t).map(|j| format!("beta_{j}")).collect();
    writeln!(w, "realization,{}", header.join(","))?;
    for (i, row) in samples.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|b| format!("{b:.17e}")).collect();
        writeln!(w, "{i},{}", cells.join(","))?;
    }
    Ok(())
}
