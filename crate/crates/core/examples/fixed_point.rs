//! Solve the large-system fixed point for a clustered 4×4 channel and print
//! the approximations of the mutual information over a few SNRs.

use std::f64::consts::PI;

use mimo_mmse::channel::{snr_db_to_sigma2, ChannelModel, ClusterSpec};
use mimo_mmse::largesys::{i_bar, solve_fixed_point};

fn main() -> mimo_mmse::Result<()> {
    let tx = ClusterSpec::new(PI / 4.0, 0.5, 4)?;
    let rx = ClusterSpec::new(PI / 12.0, 0.5, 4)?;
    println!("snr_db  delta      delta_t    stability  i_hat      j_bar      i_bar   (nats)");
    for snr_db in [0.0, 5.0, 10.0, 15.0, 20.0] {
        let model = ChannelModel::clustered(&tx, &rx, snr_db_to_sigma2(snr_db))?;
        let fp = solve_fixed_point(model.c_t(), model.c_r(), model.sigma2())?;
        let rep = i_bar(&fp)?;
        println!(
            "{snr_db:>6.1}  {:<9.6}  {:<9.6}  {:<9.6}  {:<9.6}  {:<9.6}  {:<9.6}",
            fp.delta, fp.delta_tilde, fp.stability, rep.i_hat, rep.j_bar, rep.i_bar
        );
    }
    Ok(())
}
