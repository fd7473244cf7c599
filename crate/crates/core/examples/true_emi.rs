//! Maximize the Monte-Carlo mutual information directly, over eigen-aligned
//! precoders and over unconstrained ones, and compare with the surrogate.
//!
//! Usage: `cargo run --release --example true_emi [n_mc]`

use std::f64::consts::PI;

use mimo_mmse::channel::{snr_db_to_sigma2, ChannelModel, ClusterSpec};
use mimo_mmse::largesys::Surrogate;
use mimo_mmse::optimize::{
    evaluate_result, optimize_structured, optimize_true_emi, timed, AscentOptions, StartPlan, TrueEmiOptions,
};

fn main() -> mimo_mmse::Result<()> {
    let n: usize = std::env::args().nth(1).map_or(300, |s| s.parse().expect("n_mc"));
    let tx = ClusterSpec::new(PI / 4.0, 0.5, 4)?;
    let rx = ClusterSpec::new(PI / 12.0, 0.4, 4)?;
    let model = ChannelModel::clustered(&tx, &rx, snr_db_to_sigma2(10.0))?;
    let opts = TrueEmiOptions::default();

    let (surrogate, t0) = timed(|| {
        optimize_structured(
            model.c_t(),
            model.c_r(),
            model.sigma2(),
            Surrogate::IBar,
            &StartPlan::default(),
            &AscentOptions::default(),
        )
    });
    let (structured, t1) = timed(|| optimize_true_emi(&model, true, n, 1, &opts));
    let (general, t2) = timed(|| optimize_true_emi(&model, false, n, 1, &opts));
    for (name, res, secs) in [("surrogate", surrogate?, t0), ("structured", structured?, t1), ("general", general?, t2)] {
        let e = evaluate_result(&model, &res, 2000, 0)?;
        println!("{name:<10}  {:.4} ± {:.4} nats  {secs:>8.3} s  {} iterations", e.mean, e.std_error, res.iterations);
    }
    Ok(())
}
