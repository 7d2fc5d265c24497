//! Refinement depth on the MBB half-beam: the finest level `kbar` goes
//! 1, 2, 3 in unbalanced and balanced mode.
//!
//!     cargo run --release --example mbb_depth [n0x n0y]

use quadopt::optimizer::RunConfig;
use quadopt::problems::{make_mbb, Problem};
use quadopt::{run, DependencyMode};

fn main() -> quadopt::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n0 = match args[..] {
        [a, b] => (a, b),
        _ => (12, 4),
    };
    println!("mode        kbar  compliance  volume  sharpness  iterations");
    for mode in [DependencyMode::Unbalanced, DependencyMode::Balanced] {
        for kbar in 1..=3 {
            let problem = Problem::build(make_mbb(n0, 5).with_kbar(kbar))?;
            let config = RunConfig {
                volume_fraction: 0.3,
                mode,
                ..RunConfig::default()
            };
            let out = run(&problem, &config, |_| {})?;
            println!(
                "{:<10}  {kbar:>4}  {:>10.3}  {:.4}  {:>9.4}  {:>10}",
                format!("{mode:?}"),
                out.compliance,
                out.volume_fraction,
                out.sharpness,
                out.state.iteration
            );
        }
    }
    Ok(())
}
