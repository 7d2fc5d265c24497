//! Greedy refine/coarsen baseline against the continuous optimizer on the
//! MBB half-beam at four volume fractions.
//!
//!     cargo run --release --example greedy_vs_continuous [n0x n0y]

use quadopt::greedy::{greedy_optimize, GreedyOptions};
use quadopt::optimizer::RunConfig;
use quadopt::problems::{make_mbb, Problem};
use quadopt::{run, DependencyMode};

fn main() -> quadopt::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n0 = match args[..] {
        [a, b] => (a, b),
        _ => (12, 4),
    };
    let problem = Problem::build(make_mbb(n0, 5))?;
    println!("volume  greedy (vol, iters)         continuous (vol)      greedy/continuous");
    for v in [0.2, 0.3, 0.4, 0.5] {
        let g = greedy_optimize(&problem, v, &GreedyOptions::default())?;
        let config = RunConfig {
            volume_fraction: g.volume_fraction,
            mode: DependencyMode::Unbalanced,
            ..RunConfig::default()
        };
        let c = run(&problem, &config, |_| {})?;
        println!(
            "{v:.1}     {:>10.3} ({:.4}, {:>4})    {:>10.3} ({:.4})    {:.3}",
            g.compliance,
            g.volume_fraction,
            g.iterations,
            c.compliance,
            c.volume_fraction,
            g.compliance / c.compliance
        );
    }
    Ok(())
}
