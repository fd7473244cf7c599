//! Best number of active transmit antennas for an uncorrelated 8×8 channel.

use mimo_mmse::channel::snr_db_to_sigma2;
use mimo_mmse::optimize::{antenna_selection_iid, antenna_selection_value};

fn main() -> mimo_mmse::Result<()> {
    let t = 8;
    println!("snr_db  s_opt  value(s_opt)  value(s=t)   (nats)");
    for snr_db in (0..=20).step_by(2).map(f64::from) {
        let sigma2 = snr_db_to_sigma2(snr_db);
        let (s, v) = antenna_selection_iid(t, sigma2)?;
        println!("{snr_db:>6.1}  {s:>5}  {v:<12.5}  {:<10.5}", antenna_selection_value(t, t, sigma2));
    }
    Ok(())
}
