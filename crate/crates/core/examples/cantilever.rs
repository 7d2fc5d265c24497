//! Balanced quadtree cantilever at desk scale (256×128 elements).
//!
//! Writes density snapshots, the convergence log, the thresholded quadtree
//! and an SVG drawing to `out/examples/cantilever`.
//!
//!     cargo run --release --example cantilever [none|unbalanced|balanced]

use std::path::Path;

use quadopt::optimizer::{RunConfig, Termination};
use quadopt::problems::{make_cantilever, Problem};
use quadopt::runner::optimize_to_dir;
use quadopt::DependencyMode;

fn main() -> quadopt::Result<()> {
    let mode = match std::env::args().nth(1).as_deref() {
        Some("none") => DependencyMode::None,
        Some("unbalanced") => DependencyMode::Unbalanced,
        _ => DependencyMode::Balanced,
    };
    let problem = Problem::build(make_cantilever((8, 4), 5))?;
    let config = RunConfig {
        volume_fraction: 0.4,
        mode,
        ..RunConfig::default()
    };
    let dir = Path::new("out/examples/cantilever");
    let out = optimize_to_dir(&problem, &config, dir, 20)?;
    for r in out.state.history.iter().filter(|r| r.iter % 40 == 0) {
        println!(
            "it {:3}  beta {:2}  c {:9.3}  vol {:.4}  s {:.3}",
            r.iter, r.beta, r.compliance, r.volume, r.sharpness
        );
    }
    println!(
        "{mode:?}: compliance {:.3}, volume {:.5}, sharpness {:.4}, {} iterations ({})",
        out.compliance,
        out.volume_fraction,
        out.sharpness,
        out.state.iteration,
        if out.state.termination == Some(Termination::Converged) { "converged" } else { "iteration limit" }
    );
    println!("outputs in {}", dir.display());
    Ok(())
}
