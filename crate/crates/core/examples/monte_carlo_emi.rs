//! Compare the Monte-Carlo mutual information of the unprecoded channel with
//! its large-system approximations.
//!
//! Usage: `cargo run --release --example monte_carlo_emi [n_mc] [seed]`

use std::f64::consts::PI;

use mimo_mmse::channel::{snr_db_to_sigma2, ChannelModel, ClusterSpec};
use mimo_mmse::largesys::{i_bar, solve_fixed_point};
use mimo_mmse::matcore::CMatrix;
use mimo_mmse::mcsim::emi_estimate;

fn main() -> mimo_mmse::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(10_000, |s| s.parse().expect("n_mc"));
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed"));
    let tx = ClusterSpec::new(PI / 4.0, 0.5, 4)?;
    let rx = ClusterSpec::new(PI / 12.0, 0.5, 4)?;
    println!("n = {n}, seed = {seed}");
    println!("snr_db  i_mc       stderr     i_hat      i_bar");
    for snr_db in [0.0, 5.0, 10.0, 15.0] {
        let model = ChannelModel::clustered(&tx, &rx, snr_db_to_sigma2(snr_db))?;
        let mc = emi_estimate(&model, &CMatrix::identity(4), n, seed)?;
        let rep = i_bar(&solve_fixed_point(model.c_t(), model.c_r(), model.sigma2())?)?;
        println!("{snr_db:>6.1}  {:<9.5}  {:<9.5}  {:<9.5}  {:<9.5}", mc.mean, mc.std_error, rep.i_hat, rep.i_bar);
    }
    Ok(())
}
