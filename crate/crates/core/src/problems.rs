//! Built-in benchmark problems and their compiled form.

use crate::error::{Error, Result};
use crate::fea::{dof_index, Component, FeModel, FeSolver, Material, SolverKind};
use crate::greedy::BinaryQuadtree;
use crate::hierarchy::QuadtreeHierarchy;
use crate::mapping::{DensityField, DomainMask, TransformStack};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Left,
    Right,
    Top,
    Bottom,
}

/// Node on the boundary of the element grid. `position` runs left to right
/// on horizontal edges and top to bottom on vertical ones.
fn edge_node(nelx: usize, nely: usize, edge: Edge, position: f64) -> (usize, usize) {
    let along = |n: usize| ((position.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
    match edge {
        Edge::Left => (0, along(nely)),
        Edge::Right => (nelx, along(nely)),
        Edge::Top => (along(nelx), 0),
        Edge::Bottom => (along(nelx), nely),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SupportSpec {
    /// Every node of an edge.
    Edge { edge: Edge, fix_x: bool, fix_y: bool },
    /// A single node on an edge.
    Point {
        edge: Edge,
        position: f64,
        fix_x: bool,
        fix_y: bool,
    },
}

/// Point load on an edge node.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSpec {
    pub edge: Edge,
    pub position: f64,
    pub fx: f64,
    pub fy: f64,
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub n0: (usize, usize),
    pub m: u32,
    /// Finest refinement level; `None` means `m - 2`.
    pub kbar: Option<usize>,
    pub mask: Option<DomainMask>,
    pub supports: Vec<SupportSpec>,
    pub loads: Vec<LoadSpec>,
    pub material: Material,
    pub solver: SolverKind,
}

impl ProblemSpec {
    pub fn hierarchy(&self) -> Result<QuadtreeHierarchy> {
        match self.kbar {
            Some(k) => QuadtreeHierarchy::with_max_level(self.n0.0, self.n0.1, self.m, k),
            None => QuadtreeHierarchy::new(self.n0.0, self.n0.1, self.m),
        }
    }

    pub fn with_kbar(mut self, kbar: usize) -> Self {
        self.kbar = Some(kbar);
        self
    }

    /// Supported DOFs on an `nelx × nely` grid.
    pub fn fixed_dofs(&self, nelx: usize, nely: usize) -> Vec<usize> {
        let mut fixed = Vec::new();
        let mut push = |nx: usize, ny: usize, fx: bool, fy: bool| {
            if fx {
                fixed.push(dof_index(nely, nx, ny, Component::X));
            }
            if fy {
                fixed.push(dof_index(nely, nx, ny, Component::Y));
            }
        };
        for s in &self.supports {
            match *s {
                SupportSpec::Edge { edge, fix_x, fix_y } => {
                    let nodes: Vec<(usize, usize)> = match edge {
                        Edge::Left => (0..=nely).map(|y| (0, y)).collect(),
                        Edge::Right => (0..=nely).map(|y| (nelx, y)).collect(),
                        Edge::Top => (0..=nelx).map(|x| (x, 0)).collect(),
                        Edge::Bottom => (0..=nelx).map(|x| (x, nely)).collect(),
                    };
                    for (nx, ny) in nodes {
                        push(nx, ny, fix_x, fix_y);
                    }
                }
                SupportSpec::Point {
                    edge,
                    position,
                    fix_x,
                    fix_y,
                } => {
                    let (nx, ny) = edge_node(nelx, nely, edge, position);
                    push(nx, ny, fix_x, fix_y);
                }
            }
        }
        fixed.sort_unstable();
        fixed.dedup();
        fixed
    }

    /// Load vector on an `nelx × nely` grid.
    pub fn load_vector(&self, nelx: usize, nely: usize) -> Vec<f64> {
        let mut f = vec![0.0; 2 * (nelx + 1) * (nely + 1)];
        for l in &self.loads {
            let (nx, ny) = edge_node(nelx, nely, l.edge, l.position);
            f[dof_index(nely, nx, ny, Component::X)] += l.fx;
            f[dof_index(nely, nx, ny, Component::Y)] += l.fy;
        }
        f
    }

    /// Largest load magnitude in the spec.
    pub fn load_magnitude(&self) -> f64 {
        self.loads.iter().map(|l| l.fx.hypot(l.fy)).fold(0.0, f64::max)
    }
}

/// A problem ready to optimize: hierarchy, transforms, and FE solver.
#[derive(Debug)]
pub struct Problem {
    pub spec: ProblemSpec,
    pub hierarchy: QuadtreeHierarchy,
    pub transform: TransformStack,
    pub solver: FeSolver,
}

impl Problem {
    pub fn build(spec: ProblemSpec) -> Result<Self> {
        let hierarchy = spec.hierarchy()?;
        let transform = TransformStack::build(&hierarchy, spec.mask.as_ref())?;
        let (nelx, nely) = hierarchy.element_resolution();
        spec.material.validate()?;
        let model = model_for(&spec, nelx, nely)?;
        if model.loads().iter().all(|&f| f == 0.0) {
            return Err(Error::Format {
                what: "problem",
                message: format!("{}: no nonzero load", spec.name),
            });
        }
        let solver = FeSolver::new(model, spec.solver)?;
        Ok(Self {
            spec,
            hierarchy,
            transform,
            solver,
        })
    }

    pub fn model(&self) -> &FeModel {
        self.solver.model()
    }

    /// Number of elements in the bounding box; volume fractions are relative
    /// to it.
    pub fn element_count(&self) -> usize {
        self.transform.element_count()
    }

    pub fn volume_fraction(&self, volume: f64) -> f64 {
        volume / self.element_count() as f64
    }
}

fn model_for(spec: &ProblemSpec, nelx: usize, nely: usize) -> Result<FeModel> {
    let fixed = spec.fixed_dofs(nelx, nely);
    FeModel::new(nelx, nely, spec.material, &fixed, spec.load_vector(nelx, nely))
}

/// Left edge clamped, unit downward load at mid-height of the right edge.
/// The standard instance uses `n0 = (8, 4)` and a volume fraction of 0.4.
pub fn make_cantilever(n0: (usize, usize), m: u32) -> ProblemSpec {
    ProblemSpec {
        name: "cantilever".into(),
        n0,
        m,
        kbar: None,
        mask: None,
        supports: vec![SupportSpec::Edge {
            edge: Edge::Left,
            fix_x: true,
            fix_y: true,
        }],
        loads: vec![LoadSpec {
            edge: Edge::Right,
            position: 0.5,
            fx: 0.0,
            fy: -1.0,
        }],
        material: Material::default(),
        solver: SolverKind::Direct,
    }
}

/// Right half of the MBB beam: symmetry rollers on the left edge, vertical
/// roller at the bottom-right corner, unit downward load at the top-left
/// corner. The standard instance uses `n0 = (12, 4)` and a volume fraction of
/// 0.3.
pub fn make_mbb(n0: (usize, usize), m: u32) -> ProblemSpec {
    ProblemSpec {
        name: "mbb".into(),
        n0,
        m,
        kbar: None,
        mask: None,
        supports: vec![
            SupportSpec::Edge {
                edge: Edge::Left,
                fix_x: true,
                fix_y: false,
            },
            SupportSpec::Point {
                edge: Edge::Bottom,
                position: 1.0,
                fix_x: false,
                fix_y: true,
            },
        ],
        loads: vec![LoadSpec {
            edge: Edge::Top,
            position: 0.0,
            fx: 0.0,
            fy: -1.0,
        }],
        material: Material::default(),
        solver: SolverKind::Direct,
    }
}

/// Problem on a masked domain. The mask must match the element grid.
pub fn make_masked(
    mask: DomainMask,
    n0: (usize, usize),
    m: u32,
    supports: Vec<SupportSpec>,
    loads: Vec<LoadSpec>,
) -> Result<ProblemSpec> {
    let spec = ProblemSpec {
        name: "masked".into(),
        n0,
        m,
        kbar: None,
        mask: None,
        supports,
        loads,
        material: Material::default(),
        solver: SolverKind::Direct,
    };
    let (nelx, nely) = spec.hierarchy()?.element_resolution();
    if (mask.nelx, mask.nely) != (nelx, nely) {
        return Err(Error::MaskMismatch {
            expected: (nelx, nely),
            got: (mask.nelx, mask.nely),
        });
    }
    if mask.interior_count() == 0 {
        return Err(Error::EmptyDomain);
    }
    Ok(ProblemSpec {
        mask: Some(mask),
        ..spec
    })
}

/// A curved bracket inside its bounding box: full height on the left, a
/// circular arc cut from the bottom right and a rounded top-right corner
/// leave a tapering arm.
pub fn bracket_mask(nelx: usize, nely: usize) -> DomainMask {
    let (w, h) = (nelx as f64, nely as f64);
    let (cx, cy, r) = (0.75 * w, h, 0.55 * h);
    let rc = 0.25 * h;
    DomainMask::from_fn(nelx, nely, |ex, ey| {
        let (x, y) = (ex as f64 + 0.5, ey as f64 + 0.5);
        let in_cut = (x - cx).powi(2) + (y - cy).powi(2) < r * r;
        let corner = x > w - rc && y < rc && (x - (w - rc)).powi(2) + (y - rc).powi(2) > rc * rc;
        !in_cut && !corner
    })
}

/// The bracket: left edge clamped, downward load on the arm tip.
pub fn make_bracket(n0: (usize, usize), m: u32) -> Result<ProblemSpec> {
    let h = QuadtreeHierarchy::new(n0.0, n0.1, m)?;
    let (nelx, nely) = h.element_resolution();
    let mask = bracket_mask(nelx, nely);
    // middle of the arm's right end
    let tip_rows: Vec<usize> = (0..nely).filter(|&ey| mask.is_inside(nelx - 1, ey)).collect();
    let mid = tip_rows[tip_rows.len() / 2] as f64 / nely as f64;
    let mut spec = make_masked(
        mask,
        n0,
        m,
        vec![SupportSpec::Edge {
            edge: Edge::Left,
            fix_x: true,
            fix_y: true,
        }],
        vec![LoadSpec {
            edge: Edge::Right,
            position: mid,
            fx: 0.0,
            fy: -1.0,
        }],
    )?;
    spec.name = "bracket".into();
    Ok(spec)
}

/// Every cell refined through level `r`, and its volume fraction.
pub fn uniform_reference(problem: &Problem, r: usize) -> Result<(BinaryQuadtree, f64)> {
    let h = &problem.hierarchy;
    if r > h.max_level() {
        return Err(Error::InvalidLevel {
            level: r,
            max_level: h.max_level(),
        });
    }
    let tree = BinaryQuadtree::uniform(h, r);
    let v = tree.volume(h, &problem.transform);
    Ok((tree, problem.volume_fraction(v)))
}

/// Compliance under a small probing load moved along the top edge.
#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Load positions as fractions of the top edge.
    pub positions: Vec<f64>,
    pub compliance: Vec<f64>,
    pub std_dev: f64,
    /// `max - min` of the compliance curve.
    pub range: f64,
}

/// Applies a downward load of `0.1 ×` the design load magnitude alone at each
/// of `count` evenly spaced top-edge nodes, supports unchanged.
pub fn robustness_sweep(problem: &Problem, rho: &DensityField, count: usize) -> Result<SweepResult> {
    robustness_sweep_scaled(problem, rho, count, 0.1)
}

pub fn robustness_sweep_scaled(problem: &Problem, rho: &DensityField, count: usize, factor: f64) -> Result<SweepResult> {
    let model = problem.model();
    let magnitude = factor * problem.spec.load_magnitude();
    let fact = problem.solver.factorize(rho)?;
    let mut positions = Vec::with_capacity(count);
    let mut compliance = Vec::with_capacity(count);
    for i in 0..count {
        let t = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.5 };
        let (nx, ny) = edge_node(model.nelx(), model.nely(), Edge::Top, t);
        let mut f = vec![0.0; model.dof_count()];
        f[model.dof(nx, ny, Component::Y)] = -magnitude;
        positions.push(t);
        compliance.push(fact.solve(&f)?.compliance);
    }
    let n = compliance.len() as f64;
    let mean = compliance.iter().sum::<f64>() / n;
    let std_dev = (compliance.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n).sqrt();
    let lo = compliance.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = compliance.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SweepResult {
        positions,
        compliance,
        std_dev,
        range: hi - lo,
    })
}

/// Compliance of a half-MBB design and of its mirrored full beam (doubled
/// load at mid-span, rollers at both bottom corners).
pub fn mbb_mirror_check(problem: &Problem, rho: &DensityField) -> Result<(f64, f64)> {
    let half = problem.solver.solve(rho)?.compliance;
    let full_rho = rho.unfold_left();
    let (nelx, nely) = (full_rho.nelx, full_rho.nely);
    let magnitude = problem.spec.load_magnitude();
    let full = ProblemSpec {
        name: "mbb-full".into(),
        supports: vec![
            SupportSpec::Point {
                edge: Edge::Bottom,
                position: 0.0,
                fix_x: false,
                fix_y: true,
            },
            SupportSpec::Point {
                edge: Edge::Bottom,
                position: 1.0,
                fix_x: false,
                fix_y: true,
            },
            SupportSpec::Point {
                edge: Edge::Top,
                position: 0.5,
                fix_x: true,
                fix_y: false,
            },
        ],
        loads: vec![LoadSpec {
            edge: Edge::Top,
            position: 0.5,
            fx: 0.0,
            fy: -2.0 * magnitude,
        }],
        ..problem.spec.clone()
    };
    let model = model_for(&full, nelx, nely)?;
    let solver = FeSolver::new(model, SolverKind::Direct)?;
    Ok((half, solver.solve(&full_rho)?.compliance))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_and_desk_resolutions() {
        let h = make_cantilever((8, 4), 6).hierarchy().unwrap();
        assert_eq!((h.element_resolution(), h.max_level()), ((512, 256), 4));
        let h = make_cantilever((8, 4), 5).hierarchy().unwrap();
        assert_eq!((h.element_resolution(), h.max_level()), ((256, 128), 3));
        let h = make_mbb((12, 4), 6).hierarchy().unwrap();
        assert_eq!(h.element_resolution(), (768, 256));
    }

    #[test]
    fn built_in_problems_are_supported() {
        for spec in [
            make_cantilever((2, 1), 4),
            make_mbb((3, 1), 4),
            make_bracket((3, 2), 4).unwrap(),
        ] {
            let p = Problem::build(spec).unwrap();
            p.model().check_supports().unwrap();
        }
    }

    #[test]
    fn masked_rejects_bad_masks() {
        let black = DomainMask::from_fn(32, 16, |_, _| false);
        let sup = vec![SupportSpec::Edge {
            edge: Edge::Left,
            fix_x: true,
            fix_y: true,
        }];
        let load = vec![LoadSpec {
            edge: Edge::Right,
            position: 0.5,
            fx: 0.0,
            fy: -1.0,
        }];
        assert!(matches!(
            make_masked(black, (2, 1), 4, sup.clone(), load.clone()),
            Err(Error::EmptyDomain)
        ));
        let small = DomainMask::from_fn(16, 16, |_, _| true);
        assert!(matches!(make_masked(small, (2, 1), 4, sup, load), Err(Error::MaskMismatch { .. })));
    }

    #[test]
    fn uniform_reference_grows_with_depth() {
        let p = Problem::build(make_bracket((3, 2), 5).unwrap()).unwrap();
        let mut last = -1.0;
        for r in 0..=p.hierarchy.max_level() {
            let (_, frac) = uniform_reference(&p, r).unwrap();
            assert!(frac > last);
            last = frac;
        }
        let (_, frame) = uniform_reference(&p, 0).unwrap();
        assert!((frame - p.volume_fraction(p.transform.fixed_volume())).abs() < 1e-15);
        assert!(uniform_reference(&p, 9).is_err());
    }

    #[test]
    fn zero_probe_gives_flat_curve() {
        let p = Problem::build(make_cantilever((2, 1), 4)).unwrap();
        let rho = DensityField::uniform(32, 16, 0.5);
        let s = robustness_sweep_scaled(&p, &rho, 11, 0.0).unwrap();
        assert!(s.compliance.iter().all(|&c| c == 0.0));
        assert_eq!(s.range, 0.0);
        let s = robustness_sweep(&p, &rho, 11).unwrap();
        assert_eq!(s.positions.len(), 11);
        // the first position sits on the clamped corner
        assert_eq!(s.compliance[0], 0.0);
        assert!(s.compliance[1..].iter().all(|&c| c > 0.0));
    }

    #[test]
    fn mirrored_mbb_doubles_compliance() {
        let p = Problem::build(make_mbb((3, 1), 4)).unwrap();
        let mut rho = DensityField::uniform(48, 16, 1.0);
        for (e, v) in rho.values.iter_mut().enumerate() {
            *v = 0.3 + 0.6 * ((e * 7919) % 13) as f64 / 13.0;
        }
        let (half, full) = mbb_mirror_check(&p, &rho).unwrap();
        assert!((full / half - 2.0).abs() < 1e-8, "{half} {full}");
    }
}
