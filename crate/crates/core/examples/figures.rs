//! Write the CSV tables of figures 1 to 4 into a directory, with a reduced
//! realization count. Figure 5 runs Monte-Carlo optimizers and is left to
//! the command-line tool.
//!
//! Usage: `cargo run --release --example figures [out_dir] [n_mc]`

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use mimo_mmse::experiments::{run_figure, ExperimentConfig};

fn main() -> mimo_mmse::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "figures".into()));
    let n_mc: usize = args.next().map_or(200, |s| s.parse().expect("n_mc"));
    std::fs::create_dir_all(&dir)?;
    for id in 1..=4 {
        let cfg = ExperimentConfig { n_mc, ..ExperimentConfig::for_figure(id)? };
        let path = dir.join(format!("figure{id}.csv"));
        run_figure(id, &cfg, BufWriter::new(File::create(&path)?))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
