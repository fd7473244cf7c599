//! Optimize an eigen-aligned precoder on the corrected approximation and
//! score it by Monte Carlo against no precoding.

use std::f64::consts::PI;

use mimo_mmse::channel::{snr_db_to_sigma2, ChannelModel, ClusterSpec};
use mimo_mmse::largesys::Surrogate;
use mimo_mmse::matcore::CMatrix;
use mimo_mmse::mcsim::emi_estimate;
use mimo_mmse::optimize::{evaluate_result, optimize_structured, AscentOptions, StartPlan};

fn main() -> mimo_mmse::Result<()> {
    let tx = ClusterSpec::new(PI / 4.0, 0.5, 4)?;
    let rx = ClusterSpec::new(PI / 12.0, 0.4, 4)?;
    let model = ChannelModel::clustered(&tx, &rx, snr_db_to_sigma2(15.0))?;
    let plan = StartPlan { random: 4, seed: 3, ..StartPlan::default() };
    let res = optimize_structured(
        model.c_t(),
        model.c_r(),
        model.sigma2(),
        Surrogate::IBar,
        &plan,
        &AscentOptions::default(),
    )?;
    println!("lambda_opt = {:.4?}", res.lambda_opt);
    println!("objective  = {:.5} nats after {} iterations (converged: {})", res.objective, res.iterations, res.converged);
    let base = emi_estimate(&model, &CMatrix::identity(4), 5000, 7)?;
    let opt = evaluate_result(&model, &res, 5000, 7)?;
    println!("no precoding: {:.4} ± {:.4} nats", base.mean, base.std_error);
    println!("optimized:    {:.4} ± {:.4} nats", opt.mean, opt.std_error);
    Ok(())
}
