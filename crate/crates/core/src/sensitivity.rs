//! Adjoint sensitivities of compliance and volume with respect to the raw
//! multi-level design variables.

use crate::error::{Error, Result};
use crate::fea::{FeModel, FeSolver, SolveResult};
use crate::filters::{filter_chain, project_derivative, smooth_min_jacobian, DesignField, FilterParams, FilteredDesign};
use crate::hierarchy::DependencyTable;
use crate::mapping::{DensityField, TransformStack};

/// `∂c/∂ρ_e = -dE/dρ(ρ_e) u_eᵀ k0 u_e`.
pub fn dc_drho(model: &FeModel, rho: &DensityField, u: &[f64]) -> Vec<f64> {
    let mat = model.material();
    model
        .element_energies(u)
        .into_iter()
        .zip(&rho.values)
        .map(|(w, &r)| -mat.young_derivative(r) * w)
        .collect()
}

/// Everything computed by one forward pass, kept so that the gradient is
/// evaluated against exactly the state it belongs to.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub x: DesignField,
    pub params: FilterParams,
    pub design: FilteredDesign,
    pub rho: DensityField,
    pub state: SolveResult,
}

impl Evaluation {
    pub fn compliance(&self) -> f64 {
        self.state.compliance
    }
}

/// Projection, filter, mapping, and FE solve.
pub fn evaluate(
    x: &DesignField,
    params: &FilterParams,
    deps: &DependencyTable,
    ts: &TransformStack,
    solver: &FeSolver,
) -> Result<Evaluation> {
    let design = filter_chain(x, params, deps)?;
    let rho = ts.apply(&design.filtered)?;
    let state = solver.solve(&rho)?;
    Ok(Evaluation {
        x: x.clone(),
        params: *params,
        design,
        rho,
        state,
    })
}

/// Gradients with respect to the raw design variables.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub compliance: DesignField,
    pub volume: DesignField,
}

/// Chains per-cell partials with respect to the filtered values back through
/// the filter Jacobian and the projection.
fn pull_back(
    d_filtered: &[f64],
    eval: &Evaluation,
    deps: &DependencyTable,
    ts: &TransformStack,
    jac: &crate::filters::FilterJacobian,
) -> Vec<f64> {
    let x = eval.x.values();
    (0..x.len())
        .map(|a| {
            if !ts.is_active(a) {
                return 0.0;
            }
            let mut acc = jac.row(a)[0] * d_filtered[a];
            for &g in deps.dependents(a) {
                let pos = deps.deps(g).iter().position(|&d| d == a).expect("dependents are transposed deps");
                acc += jac.row(g)[pos + 1] * d_filtered[g];
            }
            acc * project_derivative(x[a], eval.params.beta, eval.params.eta)
        })
        .collect()
}

/// `∂c/∂x` and `∂V/∂x` at the state of `eval`. `x` must be the design the
/// evaluation was computed from.
pub fn full_gradients(
    x: &DesignField,
    eval: &Evaluation,
    deps: &DependencyTable,
    ts: &TransformStack,
    model: &FeModel,
) -> Result<Gradients> {
    if x != &eval.x {
        return Err(Error::StaleState("design changed since the last forward evaluation".into()));
    }
    if deps.len() != x.len() || ts.cell_count() != x.len() {
        return Err(Error::StaleState("dependency table or transform built for another hierarchy".into()));
    }
    let dcdr = dc_drho(model, &eval.rho, &eval.state.u);
    let n = x.len();
    let mut dc_filtered = vec![0.0; n];
    let mut dv_filtered = vec![0.0; n];
    for g in 0..n {
        let elems = ts.cell_elements(g);
        dc_filtered[g] = elems.iter().map(|&e| dcdr[e as usize]).sum();
        dv_filtered[g] = elems.len() as f64;
    }
    let jac = smooth_min_jacobian(&eval.design.projected, deps, eval.params.p_norm)?;
    let dc = pull_back(&dc_filtered, eval, deps, ts, &jac);
    let dv = pull_back(&dv_filtered, eval, deps, ts, &jac);
    Ok(Gradients {
        compliance: x.with_values(dc),
        volume: x.with_values(dv),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fea::{Material, SolverKind};
    use crate::hierarchy::{DependencyMode, QuadtreeHierarchy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cantilever(nelx: usize, nely: usize) -> FeModel {
        let fixed: Vec<usize> = (0..2 * (nely + 1)).collect();
        let mut loads = vec![0.0; 2 * (nelx + 1) * (nely + 1)];
        loads[2 * (nelx * (nely + 1) + nely / 2) + 1] = -1.0;
        FeModel::new(nelx, nely, Material::default(), &fixed, loads).unwrap()
    }

    #[test]
    fn dc_drho_sign_and_zero() {
        let model = cantilever(16, 8);
        let solver = FeSolver::new(model.clone(), SolverKind::Direct).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = DensityField {
            nelx: 16,
            nely: 8,
            values: (0..128).map(|_| rng.random_range(0.2..1.0)).collect(),
        };
        let s = solver.solve(&rho).unwrap();
        assert!(dc_drho(&model, &rho, &s.u).iter().all(|&v| v < 0.0));
        let zero = dc_drho(&model, &rho, &vec![0.0; model.dof_count()]);
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_state_is_rejected() {
        let h = QuadtreeHierarchy::new(2, 1, 4).unwrap();
        let deps = DependencyTable::build(&h, DependencyMode::Unbalanced);
        let ts = TransformStack::build(&h, None).unwrap();
        let model = cantilever(32, 16);
        let solver = FeSolver::new(model.clone(), SolverKind::Direct).unwrap();
        let x = DesignField::uniform(&h, 0.5);
        let eval = evaluate(&x, &FilterParams::default(), &deps, &ts, &solver).unwrap();
        assert!(full_gradients(&x, &eval, &deps, &ts, &model).is_ok());
        let y = DesignField::uniform(&h, 0.6);
        assert!(matches!(full_gradients(&y, &eval, &deps, &ts, &model), Err(Error::StaleState(_))));
    }

    #[test]
    fn volume_gradient_matches_recount() {
        let h = QuadtreeHierarchy::new(2, 1, 5).unwrap();
        let ts = TransformStack::build(&h, None).unwrap();
        let model = cantilever(64, 32);
        let solver = FeSolver::new(model.clone(), SolverKind::Direct).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for mode in [DependencyMode::None, DependencyMode::Unbalanced, DependencyMode::Balanced] {
            let deps = DependencyTable::build(&h, mode);
            let params = FilterParams {
                beta: 4.0,
                ..Default::default()
            };
            let x = DesignField::from_values(&h, (0..h.total_cells()).map(|_| rng.random_range(0.1..0.9)).collect()).unwrap();
            let eval = evaluate(&x, &params, &deps, &ts, &solver).unwrap();
            let grads = full_gradients(&x, &eval, &deps, &ts, &model).unwrap();
            let vol = |x: &DesignField| ts.volume_of(&filter_chain(x, &params, &deps).unwrap().filtered);
            for a in 0..x.len() {
                assert!(grads.volume.values()[a] >= 0.0);
                let step = 1e-6;
                let mut p = x.clone();
                p.values_mut()[a] += step;
                let mut m = x.clone();
                m.values_mut()[a] -= step;
                let fd = (vol(&p) - vol(&m)) / (2.0 * step);
                let an = grads.volume.values()[a];
                assert!((an - fd).abs() <= 1e-5 * fd.abs().max(1.0), "{mode:?} cell {a}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn symmetric_problem_gives_symmetric_gradient() {
        // clamped on both sides, load at the middle of the bottom edge
        let h = QuadtreeHierarchy::new(2, 1, 4).unwrap();
        let ts = TransformStack::build(&h, None).unwrap();
        let deps = DependencyTable::build(&h, DependencyMode::Balanced);
        let (nelx, nely) = (32, 16);
        let mut fixed: Vec<usize> = (0..2 * (nely + 1)).collect();
        fixed.extend((0..2 * (nely + 1)).map(|d| 2 * nelx * (nely + 1) + d));
        let mut loads = vec![0.0; 2 * (nelx + 1) * (nely + 1)];
        loads[2 * ((nelx / 2) * (nely + 1) + nely) + 1] = -1.0;
        let model = FeModel::new(nelx, nely, Material::default(), &fixed, loads).unwrap();
        let solver = FeSolver::new(model.clone(), SolverKind::Direct).unwrap();
        let x = DesignField::uniform(&h, 0.4);
        let eval = evaluate(&x, &FilterParams::default(), &deps, &ts, &solver).unwrap();
        let grads = full_gradients(&x, &eval, &deps, &ts, &model).unwrap();
        for k in 1..=h.max_level() {
            let (nx, ny) = h.level_resolution(k).unwrap();
            let lvl = grads.compliance.level(k);
            for j in 0..ny {
                for i in 0..nx {
                    let a = lvl[j * nx + i];
                    let b = lvl[j * nx + nx - 1 - i];
                    assert!((a - b).abs() <= 1e-8 * a.abs().max(b.abs()), "level {k} ({i},{j}): {a} vs {b}");
                }
            }
        }
    }
}
