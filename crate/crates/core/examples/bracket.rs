//! Curved bracket on a masked domain: the budget is the volume of the
//! bounding grid refined uniformly twice, and the optimized quadtree is
//! compared with that uniform pattern.

use std::path::Path;

use quadopt::optimizer::RunConfig;
use quadopt::problems::{make_bracket, uniform_reference, Problem};
use quadopt::runner::{export_density_snapshot, optimize_to_dir};
use quadopt::DependencyMode;

fn main() -> quadopt::Result<()> {
    let problem = Problem::build(make_bracket((6, 4), 5)?)?;
    let (uniform, fraction) = uniform_reference(&problem, 2)?;
    let rho_uniform = uniform.density(&problem.hierarchy, &problem.transform);
    let c_uniform = problem.solver.solve(&rho_uniform)?.compliance;

    let dir = Path::new("out/examples/bracket");
    let config = RunConfig {
        volume_fraction: fraction,
        mode: DependencyMode::Unbalanced,
        ..RunConfig::default()
    };
    let out = optimize_to_dir(&problem, &config, dir, 50)?;
    export_density_snapshot(&rho_uniform, &dir.join("uniform.pgm"))?;
    println!("volume fraction {fraction:.4}");
    println!("uniform   compliance {c_uniform:.3}");
    println!("optimized compliance {:.3} ({} iterations)", out.compliance, out.state.iteration);
    println!("stiffness ratio {:.2}", c_uniform / out.compliance);
    Ok(())
}
