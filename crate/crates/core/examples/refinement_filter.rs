//! What the refinement filter does to a random binary field: suspended
//! cells disappear, and the balanced variant also removes cells more than
//! one level finer than a neighbour.
//!
//! Writes three density images to `out/examples/refinement_filter`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quadopt::filters::{exact_min_filter, smooth_min_filter, X_MIN};
use quadopt::runner::export_density_snapshot;
use quadopt::{BinaryQuadtree, DependencyMode, DependencyTable, DesignField, QuadtreeHierarchy, TransformStack};

fn main() -> quadopt::Result<()> {
    let h = QuadtreeHierarchy::new(4, 2, 6)?;
    let ts = TransformStack::build(&h, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let values: Vec<f64> = (0..h.total_cells())
        .map(|_| if rng.random_bool(0.6) { 1.0 } else { X_MIN })
        .collect();
    let x = DesignField::from_values(&h, values)?;
    let dir = Path::new("out/examples/refinement_filter");
    fs::create_dir_all(dir).map_err(|e| quadopt::Error::io(dir, e))?;
    export_density_snapshot(&ts.apply(&x)?, &dir.join("raw.pgm"))?;

    let none = DependencyTable::build(&h, DependencyMode::None);
    let raw = BinaryQuadtree::from_flags(&h, x.values().iter().map(|&v| v > 0.5).collect())?;
    for (name, mode) in [("unbalanced", DependencyMode::Unbalanced), ("balanced", DependencyMode::Balanced)] {
        let deps = DependencyTable::build(&h, mode);
        let exact = exact_min_filter(&x, &deps);
        let smooth = smooth_min_filter(&x, &deps, -16.0)?;
        let worst = exact.max_abs_diff(&smooth);
        let tree = BinaryQuadtree::from_filtered(&smooth, &none, 0.5);
        export_density_snapshot(&ts.apply(&exact)?, &dir.join(format!("{name}.pgm")))?;
        println!(
            "{name:<10}: refined cells {} -> {}, violations {} -> {}, smooth vs exact max gap {:.4}",
            raw.refined_count(),
            tree.refined_count(),
            raw.violations(&deps),
            tree.violations(&deps),
            worst
        );
    }
    println!("images in {}", dir.display());
    Ok(())
}
