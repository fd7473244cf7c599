//! Kronecker-correlated Rayleigh channels.
//!
//! `H = t^{-1/2} · C_R^{1/2} · X · C_T^{1/2}` with `X` i.i.d. CN(0, 1), both
//! correlation matrices normalized to unit normalized trace.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{herm_eig, sample_circular_gaussian, CMatrix};

const TRACE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// One scatterer cluster seen from a uniform linear array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    /// Mean angle of departure/arrival, radians.
    pub mean_angle: f64,
    /// Angular spread, radians.
    pub angle_std: f64,
    /// Number of antennas.
    pub size: usize,
}

impl ClusterSpec {
    pub fn new(mean_angle: f64, angle_std: f64, size: usize) -> Result<Self> {
        let spec = Self { mean_angle, angle_std, size };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.angle_std >= 0.0) || !self.mean_angle.is_finite() || !self.angle_std.is_finite() {
            return Err(Error::Domain(format!(
                "cluster angles must be finite with angle_std >= 0, got ({}, {})",
                self.mean_angle, self.angle_std
            )));
        }
        if self.size == 0 {
            return Err(Error::Domain("cluster size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Clustered correlation:
/// `C[k,l] = a·exp(-iπ(k-l)cos φ)·exp(-½(π(k-l) sin φ σ_φ)²)`, with `a`
/// fixing the normalized trace to one.
pub fn clustered_correlation(spec: &ClusterSpec) -> Result<CMatrix> {
    spec.validate()?;
    let (sin, cos) = spec.mean_angle.sin_cos();
    let c = CMatrix::from_fn(spec.size, spec.size, |k, l| {
        let lag = k as f64 - l as f64;
        let phase = Complex64::from_polar(1.0, -PI * lag * cos);
        let spread = (PI * lag * sin * spec.angle_std).powi(2);
        phase * (-0.5 * spread).exp()
    });
    normalize_trace(&c)
}

/// Rescales a square matrix so that `(1/n)·Re Tr(C) = 1`.
pub fn normalize_trace(c: &CMatrix) -> Result<CMatrix> {
    let nt = c.hermitian_part()?.normalized_trace();
    if !(nt > 0.0) {
        return Err(Error::Domain(format!("correlation matrix has non-positive trace {nt}")));
    }
    c.scale(1.0 / nt).hermitian_part()
}

/// Hermitian PSD square root through the eigendecomposition, with
/// negative eigenvalues clamped to zero.
pub fn psd_sqrt(c: &CMatrix) -> Result<CMatrix> {
    Ok(herm_eig(c)?.map(|l| l.max(0.0).sqrt()))
}

/// Correlation structure and noise level of a Kronecker channel.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    t: usize,
    r: usize,
    c_t: CMatrix,
    c_r: CMatrix,
    c_t_sqrt: CMatrix,
    c_r_sqrt: CMatrix,
    sigma2: f64,
}

impl ChannelModel {
    /// Symmetrizes and trace-normalizes both correlations, then checks they
    /// are positive semidefinite.
    pub fn new(c_t: CMatrix, c_r: CMatrix, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::Domain(format!("noise variance must be positive, got {sigma2}")));
        }
        let c_t = normalize_trace(&c_t)?;
        let c_r = normalize_trace(&c_r)?;
        for (name, c) in [("transmit", &c_t), ("receive", &c_r)] {
            let min = herm_eig(c)?.eigvals.last().copied().unwrap_or(0.0);
            if min < -PSD_TOL {
                return Err(Error::Domain(format!(
                    "{name} correlation is not positive semidefinite (min eigenvalue {min:e})"
                )));
            }
        }
        Ok(Self {
            t: c_t.rows(),
            r: c_r.rows(),
            c_t_sqrt: psd_sqrt(&c_t)?,
            c_r_sqrt: psd_sqrt(&c_r)?,
            c_t,
            c_r,
            sigma2,
        })
    }

    /// Uncorrelated channel with `C_T = I_t`, `C_R = I_r`.
    pub fn iid(t: usize, r: usize, sigma2: f64) -> Result<Self> {
        Self::new(CMatrix::identity(t), CMatrix::identity(r), sigma2)
    }

    pub fn clustered(tx: &ClusterSpec, rx: &ClusterSpec, sigma2: f64) -> Result<Self> {
        Self::new(clustered_correlation(tx)?, clustered_correlation(rx)?, sigma2)
    }

    pub fn with_sigma2(&self, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::Domain(format!("noise variance must be positive, got {sigma2}")));
        }
        Ok(Self { sigma2, ..self.clone() })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn c_t(&self) -> &CMatrix {
        &self.c_t
    }

    pub fn c_r(&self) -> &CMatrix {
        &self.c_r
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn snr_db(&self) -> f64 {
        sigma2_to_snr_db(self.sigma2)
    }

    /// Draws one realization of `H` (r×t).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CMatrix {
        sample_channel(self, rng)
    }
}

/// `σ² = 10^(-SNR/10)` under unit signal and channel power.
pub fn snr_db_to_sigma2(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

pub fn sigma2_to_snr_db(sigma2: f64) -> f64 {
    -10.0 * sigma2.log10()
}

/// `H = (1/√t)·C_R^{1/2}·X·C_T^{1/2}`.
pub fn sample_channel<R: Rng + ?Sized>(model: &ChannelModel, rng: &mut R) -> CMatrix {
    let x = sample_circular_gaussian(model.r, model.t, rng);
    let h = &(&model.c_r_sqrt * &x) * &model.c_t_sqrt;
    h.scale(1.0 / (model.t as f64).sqrt())
}

/// `(1/t)·Tr(K·Kᴴ)`
pub fn precoder_power(k: &CMatrix) -> f64 {
    k.frobenius_norm().powi(2) / k.rows() as f64
}

pub(crate) fn check_power(k: &CMatrix, t: usize) -> Result<()> {
    if k.rows() != t || k.cols() != t {
        return Err(Error::Dimension(format!("precoder must be {t}x{t}, got {}x{}", k.rows(), k.cols())));
    }
    let p = precoder_power(k);
    if p > 1.0 + TRACE_TOL {
        return Err(Error::PowerConstraint { value: p });
    }
    Ok(())
}

/// Transmit correlation seen through the precoder: `Kᴴ·C_T·K`.
pub fn effective_transmit_correlation(model: &ChannelModel, k: &CMatrix) -> Result<CMatrix> {
    check_power(k, model.t)?;
    (&(&k.adjoint() * &model.c_t) * k).hermitian_part()
}

/// Wire form of a complex matrix: row-major real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&CMatrix> for MatrixJson {
    fn from(m: &CMatrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            re: m.as_slice().iter().map(|z| z.re).collect(),
            im: m.as_slice().iter().map(|z| z.im).collect(),
        }
    }
}

impl TryFrom<MatrixJson> for CMatrix {
    type Error = Error;

    fn try_from(j: MatrixJson) -> Result<Self> {
        if j.re.len() != j.im.len() {
            return Err(Error::Dimension(format!(
                "re has {} entries but im has {}",
                j.re.len(),
                j.im.len()
            )));
        }
        let data = j.re.iter().zip(&j.im).map(|(&re, &im)| Complex64::new(re, im)).collect();
        CMatrix::new(j.rows, j.cols, data)
    }
}

pub fn matrix_to_json(m: &CMatrix) -> String {
    serde_json::to_string(&MatrixJson::from(m)).expect("plain struct serializes")
}

pub fn matrix_from_json(s: &str) -> Result<CMatrix> {
    let j: MatrixJson = serde_json::from_str(s)?;
    j.try_into()
}
