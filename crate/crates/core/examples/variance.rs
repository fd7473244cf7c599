//! Check the predicted variance of a resolvent quadratic form against a
//! Monte-Carlo estimate in the correlation eigenbasis.

use std::f64::consts::PI;

use num_complex::Complex64;

use mimo_mmse::channel::{snr_db_to_sigma2, ChannelModel, ClusterSpec};
use mimo_mmse::largesys::{quadform_variance_prediction, solve_fixed_point};
use mimo_mmse::mcsim::{quadform_variance_estimate, EigenbasisModel};

fn main() -> mimo_mmse::Result<()> {
    let t = 8;
    let tx = ClusterSpec::new(PI / 4.0, 0.5, t)?;
    let rx = ClusterSpec::new(PI / 12.0, 0.5, t)?;
    let model = ChannelModel::clustered(&tx, &rx, snr_db_to_sigma2(10.0))?;
    let eb = EigenbasisModel::from_model(&model)?;
    let diag = |v: &[f64]| mimo_mmse::matcore::CMatrix::from_real_diag(v);
    let fp = solve_fixed_point(&diag(&eb.d), &diag(&eb.d_tilde), eb.sigma2)?;
    let mut u = vec![Complex64::new(0.0, 0.0); t];
    u[0] = Complex64::new(1.0, 0.0);
    let pred = quadform_variance_prediction(&fp, &u)?;
    let est = quadform_variance_estimate(&eb, &u, 20_000, 5)?;
    println!("predicted variance {pred:.4e}");
    println!("estimated variance {:.4e} ± {:.1e} (ratio {:.3})", est.mean, est.std_error, est.mean / pred);
    Ok(())
}
