//! Analytic design gradients against central differences on a small
//! cantilever. Plain `f64` differences lose the smallest entries to
//! round-off, so only entries above a floor are compared here; the test
//! suite checks every entry with a double-double oracle.

use quadopt::filters::FilterParams;
use quadopt::problems::{make_cantilever, Problem};
use quadopt::sensitivity::{evaluate, full_gradients};
use quadopt::{DependencyMode, DependencyTable, DesignField};

fn main() -> quadopt::Result<()> {
    let problem = Problem::build(make_cantilever((4, 2), 4))?;
    let deps = DependencyTable::build(&problem.hierarchy, DependencyMode::Balanced);
    let ts = &problem.transform;
    let params = FilterParams {
        beta: 4.0,
        ..FilterParams::default()
    };
    let n = problem.hierarchy.total_cells();
    let x = DesignField::from_values(&problem.hierarchy, (0..n).map(|a| 0.3 + 0.4 * ((a * 7 % 11) as f64 / 10.0)).collect())?;
    let eval = evaluate(&x, &params, &deps, ts, &problem.solver)?;
    let grads = full_gradients(&x, &eval, &deps, ts, problem.model())?;
    let c0 = eval.compliance();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for a in 0..n {
        let g = grads.compliance.values()[a];
        if g.abs() < 1e-3 * c0 {
            continue;
        }
        let at = |d: f64| -> quadopt::Result<f64> {
            let mut v = x.values().to_vec();
            v[a] += d;
            Ok(evaluate(&x.with_values(v), &params, &deps, ts, &problem.solver)?.compliance())
        };
        let fd = (at(h)? - at(-h)?) / (2.0 * h);
        worst = worst.max((g - fd).abs() / fd.abs());
        compared += 1;
    }
    println!("compliance {c0:.6}; {compared} of {n} entries compared, worst relative error {worst:.2e}");
    Ok(())
}
