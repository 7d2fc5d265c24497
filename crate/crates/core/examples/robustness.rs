//! Robustness of the three cantilever variants: a load a tenth of the design
//! load is moved along the top edge and the compliance recorded at 101
//! positions. Writes `out/examples/robustness/sweep.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use quadopt::optimizer::RunConfig;
use quadopt::problems::{make_cantilever, robustness_sweep, Problem};
use quadopt::{run, DependencyMode};

fn main() -> quadopt::Result<()> {
    let problem = Problem::build(make_cantilever((8, 4), 5))?;
    let modes = [DependencyMode::None, DependencyMode::Unbalanced, DependencyMode::Balanced];
    let mut sweeps = Vec::new();
    for mode in modes {
        let config = RunConfig {
            mode,
            ..RunConfig::default()
        };
        let out = run(&problem, &config, |_| {})?;
        let sweep = robustness_sweep(&problem, &out.rho, 101)?;
        println!(
            "{:<10}  design compliance {:>8.3}  sweep range {:.4}  std dev {:.4}",
            format!("{mode:?}"),
            out.compliance,
            sweep.range,
            sweep.std_dev
        );
        sweeps.push(sweep);
    }
    let mut csv = String::from("position,none,unbalanced,balanced\n");
    for i in 0..sweeps[0].positions.len() {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            sweeps[0].positions[i], sweeps[0].compliance[i], sweeps[1].compliance[i], sweeps[2].compliance[i]
        );
    }
    let dir = Path::new("out/examples/robustness");
    fs::create_dir_all(dir).map_err(|e| quadopt::Error::io(dir, e))?;
    let path = dir.join("sweep.csv");
    fs::write(&path, csv).map_err(|e| quadopt::Error::io(&path, e))?;
    println!("curves in {}", path.display());
    Ok(())
}
