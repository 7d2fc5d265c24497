//! Binary quadtrees and the greedy refine/coarsen baseline.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::fea::cell_strain_energy_density;
use crate::filters::DesignField;
use crate::hierarchy::{DependencyTable, QuadtreeHierarchy};
use crate::mapping::{DensityField, Passive, TransformStack};
use crate::problems::Problem;

/// One refinement flag per cell of levels `1..=kbar`, in global cell order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryQuadtree {
    refined: Vec<bool>,
}

impl BinaryQuadtree {
    /// Only the coarse grid.
    pub fn new(h: &QuadtreeHierarchy) -> Self {
        Self {
            refined: vec![false; h.total_cells()],
        }
    }

    /// Every cell of levels `1..=r` refined.
    pub fn uniform(h: &QuadtreeHierarchy, r: usize) -> Self {
        let mut t = Self::new(h);
        for k in 1..=r.min(h.max_level()) {
            for g in h.level_range(k) {
                t.refined[g] = true;
            }
        }
        t
    }

    pub fn from_flags(h: &QuadtreeHierarchy, refined: Vec<bool>) -> Result<Self> {
        if refined.len() != h.total_cells() {
            return Err(Error::Format {
                what: "quadtree",
                message: format!("{} flags for {} cells", refined.len(), h.total_cells()),
            });
        }
        Ok(Self { refined })
    }

    /// Thresholds `filtered` and drops every cell whose dependencies are not
    /// all kept, so the result is dependency-closed.
    pub fn from_filtered(filtered: &DesignField, deps: &DependencyTable, threshold: f64) -> Self {
        let v = filtered.values();
        let mut refined = vec![false; v.len()];
        // dependencies always live on coarser levels, so one pass in global order suffices
        for g in 0..v.len() {
            refined[g] = v[g] >= threshold && deps.deps(g).iter().all(|&d| refined[d]);
        }
        Self { refined }
    }

    pub fn flags(&self) -> &[bool] {
        &self.refined
    }

    pub fn is_refined(&self, g: usize) -> bool {
        self.refined[g]
    }

    pub fn set(&mut self, g: usize, refined: bool) {
        self.refined[g] = refined;
    }

    pub fn refined_count(&self) -> usize {
        self.refined.iter().filter(|&&r| r).count()
    }

    /// Number of refined cells whose dependencies are not all refined.
    pub fn violations(&self, deps: &DependencyTable) -> usize {
        (0..self.refined.len())
            .filter(|&g| self.refined[g] && deps.deps(g).iter().any(|&d| !self.refined[d]))
            .count()
    }

    /// Filtered values of this structure: 1 for refined cells, 0 otherwise.
    pub fn as_design(&self, h: &QuadtreeHierarchy) -> DesignField {
        DesignField::from_values(h, self.refined.iter().map(|&r| r as u8 as f64).collect()).unwrap()
    }

    pub fn density(&self, h: &QuadtreeHierarchy, ts: &TransformStack) -> DensityField {
        ts.apply(&self.as_design(h)).expect("tree matches hierarchy")
    }

    pub fn volume(&self, h: &QuadtreeHierarchy, ts: &TransformStack) -> f64 {
        ts.volume_of(&self.as_design(h))
    }
}

/// Step sizes of the greedy baseline, as fractions of the domain element count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyOptions {
    pub refine_step: f64,
    pub coarsen_step: f64,
    pub max_iterations: usize,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        Self {
            refine_step: 0.004,
            coarsen_step: 0.001,
            max_iterations: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GreedyRecord {
    pub iteration: usize,
    pub compliance: f64,
    pub volume: f64,
}

#[derive(Debug, Clone)]
pub struct GreedyOutcome {
    pub tree: BinaryQuadtree,
    pub compliance: f64,
    pub volume_fraction: f64,
    pub iterations: usize,
    /// False when the loop stopped short of the target (iteration cap, or a
    /// refine/coarsen cycle that makes no progress).
    pub converged: bool,
    pub history: Vec<GreedyRecord>,
}

/// Non-void elements under each cell's square.
fn cell_areas(h: &QuadtreeHierarchy, ts: &TransformStack) -> Vec<Vec<usize>> {
    let (nelx, _) = h.element_resolution();
    (0..h.total_cells())
        .map(|g| {
            let (x0, y0, side) = h.cell_rect(h.cell(g));
            (y0..y0 + side)
                .flat_map(|ey| (x0..x0 + side).map(move |ex| ey * nelx + ex))
                .filter(|&e| ts.passive(e) != Passive::Void)
                .collect()
        })
        .collect()
}

/// Alternating strain-energy-driven refinement (odd iterations) and
/// coarsening (even iterations) of an unbalanced binary quadtree.
pub fn greedy_optimize(problem: &Problem, volume_fraction: f64, opts: &GreedyOptions) -> Result<GreedyOutcome> {
    let h = &problem.hierarchy;
    let ts = &problem.transform;
    let model = problem.model();
    let target = volume_fraction * problem.element_count() as f64;
    if target < ts.fixed_volume() {
        return Err(Error::InfeasibleTarget {
            target: volume_fraction,
            frame: problem.volume_fraction(ts.fixed_volume()),
        });
    }
    let domain = ts.domain_element_count() as f64;
    let refine_budget = opts.refine_step * domain;
    let coarsen_budget = opts.coarsen_step * domain;
    let finest = h
        .level_range(h.max_level())
        .map(|g| ts.cell_weight(g))
        .max()
        .unwrap_or(0) as f64;
    let areas = cell_areas(h, ts);
    let level_of: Vec<usize> = (0..h.total_cells()).map(|g| h.cell(g).level).collect();
    let parent_of = |g: usize| h.cell(g).parent().map(|p| h.global_index(p));
    let mut tree = BinaryQuadtree::new(h);
    let mut volume = tree.volume(h, ts);
    let mut seen = HashSet::new();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iteration = 0;
    let mut compliance;

    loop {
        iteration += 1;
        let rho = tree.density(h, ts);
        let state = problem.solver.solve(&rho).map_err(|e| Error::AtIteration {
            iteration,
            source: Box::new(e),
        })?;
        compliance = state.compliance;
        history.push(GreedyRecord {
            iteration,
            compliance,
            volume: problem.volume_fraction(volume),
        });
        if iteration > opts.max_iterations {
            break;
        }
        let energies = model.element_energies(&state.u);
        let sed = |g: usize| cell_strain_energy_density(model, &energies, &rho, areas[g].iter().copied());

        if iteration % 2 == 1 {
            let mut candidates = Vec::new();
            for g in 0..h.total_cells() {
                let open = !tree.is_refined(g) && parent_of(g).is_none_or(|p| tree.is_refined(p));
                if open && ts.is_active(g) && !areas[g].is_empty() {
                    candidates.push((sed(g)?, g));
                }
            }
            // descending energy, ties by (level, row-major index)
            candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(level_of[a.1].cmp(&level_of[b.1])).then(a.1.cmp(&b.1)));
            let mut added = 0.0;
            let mut selected = 0;
            for &(_, g) in &candidates {
                if volume >= target || added > refine_budget {
                    break;
                }
                let inc = ts.cell_weight(g) as f64;
                if volume + inc > target + finest {
                    continue;
                }
                tree.set(g, true);
                volume += inc;
                added += inc;
                selected += 1;
            }
            let repeated = !seen.insert(tree.clone());
            if volume >= target - coarsen_budget && (selected == 0 || repeated) {
                converged = true;
                break;
            }
            if repeated {
                // cycling below the target: steps too coarse for this grid
                break;
            }
        } else {
            // 2×2 blocks of finest leaves: refined cells on the deepest level
            let mut candidates = Vec::new();
            for g in h.level_range(h.max_level()) {
                if tree.is_refined(g) {
                    candidates.push((sed(g)?, g));
                }
            }
            candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(level_of[a.1].cmp(&level_of[b.1])).then(a.1.cmp(&b.1)));
            let mut removed = 0.0;
            for &(_, g) in &candidates {
                if removed >= coarsen_budget {
                    break;
                }
                tree.set(g, false);
                let dec = ts.cell_weight(g) as f64;
                volume -= dec;
                removed += dec;
            }
        }
    }

    let rho = tree.density(h, ts);
    let final_c = problem.solver.solve(&rho)?.compliance;
    Ok(GreedyOutcome {
        volume_fraction: problem.volume_fraction(tree.volume(h, ts)),
        tree,
        compliance: final_c,
        iterations: iteration,
        converged,
        history,
    })
}
