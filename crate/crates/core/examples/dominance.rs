//! Rotating a precoder so that it diagonalizes the effective transmit
//! correlation never lowers either approximation term.

use mimo_mmse::channel::{precoder_power, ChannelModel, ClusterSpec};
use mimo_mmse::matcore::{sample_circular_gaussian, RngStream};
use mimo_mmse::optimize::prop3_dominance_check;

fn main() -> mimo_mmse::Result<()> {
    let tx = ClusterSpec::new(0.8, 0.3, 4)?;
    let rx = ClusterSpec::new(0.2, 0.6, 4)?;
    let model = ChannelModel::clustered(&tx, &rx, 0.1)?;
    println!("i_hat(K)   i_hat(K_d)  j_bar(K)   j_bar(K_d)");
    for i in 0..5 {
        let k = sample_circular_gaussian(4, 4, &mut RngStream::new(11, i).rng());
        let k = k.scale(1.0 / precoder_power(&k).sqrt());
        let d = prop3_dominance_check(&k, model.c_t(), model.c_r(), model.sigma2())?;
        println!("{:<9.5}  {:<10.5}  {:<9.5}  {:<9.5}", d.i_hat_k, d.i_hat_kd, d.j_bar_k, d.j_bar_kd);
    }
    Ok(())
}
