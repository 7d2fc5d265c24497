use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};

use super::FeModel;
use crate::error::{Error, Result};
use crate::mapping::DensityField;

const NOT_STORED: u32 = u32::MAX;

/// Linear solver used for `K(ρ) U = F`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SolverKind {
    #[default]
    /// Sparse Cholesky with a fill-reducing ordering; the symbolic analysis is
    /// shared across solves.
    Direct,
    /// Jacobi-preconditioned conjugate gradients, matrix-free.
    Pcg { tolerance: f64, max_iterations: usize },
}

impl SolverKind {
    pub fn pcg() -> Self {
        SolverKind::Pcg {
            tolerance: 1e-8,
            max_iterations: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Nodal displacements on the full DOF set; fixed DOFs are zero.
    pub u: Vec<f64>,
    /// `Fᵀ U`.
    pub compliance: f64,
    pub iterations: usize,
    /// `‖K U - F‖ / ‖F‖` over free DOFs.
    pub residual: f64,
}

struct DirectPattern {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    scatter: Vec<u32>,
    symbolic: SymbolicLlt<usize>,
}

/// Reusable solver bound to one model's mesh and supports.
pub struct FeSolver {
    model: FeModel,
    kind: SolverKind,
    free_index: Vec<usize>,
    free_dofs: Vec<usize>,
    direct: Option<DirectPattern>,
}

impl std::fmt::Debug for FeSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeSolver")
            .field("kind", &self.kind)
            .field("free_dofs", &self.free_dofs.len())
            .finish()
    }
}

impl FeSolver {
    pub fn new(model: FeModel, kind: SolverKind) -> Result<Self> {
        let ndof = model.dof_count();
        let mut free_index = vec![usize::MAX; ndof];
        let mut free_dofs = Vec::new();
        for d in 0..ndof {
            if !model.is_fixed(d) {
                free_index[d] = free_dofs.len();
                free_dofs.push(d);
            }
        }
        let mut solver = Self {
            model,
            kind,
            free_index,
            free_dofs,
            direct: None,
        };
        if kind == SolverKind::Direct {
            solver.direct = Some(solver.build_pattern()?);
        }
        Ok(solver)
    }

    pub fn model(&self) -> &FeModel {
        &self.model
    }

    pub fn kind(&self) -> SolverKind {
        self.kind
    }

    fn free_edofs(&self, e: usize) -> [usize; 8] {
        self.model.edofs_of(e).map(|d| self.free_index[d])
    }

    fn build_pattern(&self) -> Result<DirectPattern> {
        let n = self.free_dofs.len();
        let nel = self.model.element_count();
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in 0..nel {
            let fe = self.free_edofs(e);
            for &r in &fe {
                for &c in &fe {
                    if r != usize::MAX && c != usize::MAX && r >= c {
                        cols[c].push(r);
                    }
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::new();
        for col in &mut cols {
            col.sort_unstable();
            col.dedup();
            row_idx.extend_from_slice(col);
            col_ptr.push(row_idx.len());
        }
        let mut scatter = vec![NOT_STORED; nel * 64];
        for e in 0..nel {
            let fe = self.free_edofs(e);
            for a in 0..8 {
                for b in 0..8 {
                    let (r, c) = (fe[a], fe[b]);
                    if r == usize::MAX || c == usize::MAX || r < c {
                        continue;
                    }
                    let span = &row_idx[col_ptr[c]..col_ptr[c + 1]];
                    let pos = col_ptr[c] + span.binary_search(&r).expect("pattern entry");
                    scatter[e * 64 + a * 8 + b] = pos as u32;
                }
            }
        }
        let sym = SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx);
        let symbolic = SymbolicLlt::try_new(sym, Side::Lower).map_err(|_| Error::SingularSystem)?;
        Ok(DirectPattern {
            col_ptr,
            row_idx,
            scatter,
            symbolic,
        })
    }

    fn check_rho(&self, rho: &DensityField) -> Result<()> {
        if rho.values.len() != self.model.element_count() {
            return Err(Error::MaskMismatch {
                expected: (self.model.nelx(), self.model.nely()),
                got: (rho.nelx, rho.nely),
            });
        }
        Ok(())
    }

    /// Assembles and factorizes `K(ρ)` for repeated solves (direct solver only;
    /// the iterative solver re-runs CG per right-hand side).
    pub fn factorize(&self, rho: &DensityField) -> Result<Factorization<'_>> {
        self.check_rho(rho)?;
        let llt = match &self.direct {
            Some(p) => {
                let mut values = vec![0.0; p.row_idx.len()];
                let k0 = self.model.k0();
                for e in 0..self.model.element_count() {
                    let ee = self.model.material().young(rho.values[e]);
                    let sc = &p.scatter[e * 64..e * 64 + 64];
                    for a in 0..8 {
                        for b in 0..8 {
                            let pos = sc[a * 8 + b];
                            if pos != NOT_STORED {
                                values[pos as usize] += ee * k0[a][b];
                            }
                        }
                    }
                }
                let n = self.free_dofs.len();
                let sym = SymbolicSparseColMatRef::new_checked(n, n, &p.col_ptr, None, &p.row_idx);
                let mat = SparseColMatRef::new(sym, &values);
                Some(Llt::try_new_with_symbolic(p.symbolic.clone(), mat, Side::Lower).map_err(|_| Error::SingularSystem)?)
            }
            None => None,
        };
        Ok(Factorization {
            solver: self,
            rho: rho.clone(),
            llt,
        })
    }

    /// Solves `K(ρ) U = F` for the model's loads.
    pub fn solve(&self, rho: &DensityField) -> Result<SolveResult> {
        self.factorize(rho)?.solve(self.model.loads())
    }

    /// `K_ff x` restricted to free DOFs.
    fn apply_free(&self, rho: &DensityField, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let k0 = self.model.k0();
        for e in 0..self.model.element_count() {
            let fe = self.free_edofs(e);
            let xe: [f64; 8] = std::array::from_fn(|a| if fe[a] == usize::MAX { 0.0 } else { x[fe[a]] });
            let ee = self.model.material().young(rho.values[e]);
            for a in 0..8 {
                if fe[a] == usize::MAX {
                    continue;
                }
                let mut acc = 0.0;
                for b in 0..8 {
                    acc += k0[a][b] * xe[b];
                }
                y[fe[a]] += ee * acc;
            }
        }
    }

    fn pcg(&self, rho: &DensityField, f: &[f64], tolerance: f64, max_iterations: usize) -> Result<(Vec<f64>, usize, f64)> {
        let n = f.len();
        let mut diag = vec![0.0; n];
        let k0 = self.model.k0();
        for e in 0..self.model.element_count() {
            let fe = self.free_edofs(e);
            let ee = self.model.material().young(rho.values[e]);
            for a in 0..8 {
                if fe[a] != usize::MAX {
                    diag[fe[a]] += ee * k0[a][a];
                }
            }
        }
        let fnorm = norm(f);
        let mut x = vec![0.0; n];
        let mut r = f.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut q = vec![0.0; n];
        let mut rz = dot(&r, &z);
        let mut rel = norm(&r) / fnorm;
        for it in 1..=max_iterations {
            self.apply_free(rho, &p, &mut q);
            let alpha = rz / dot(&p, &q);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            rel = norm(&r) / fnorm;
            if rel <= tolerance {
                return Ok((x, it, rel));
            }
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::SolverNotConverged {
            iterations: max_iterations,
            residual: rel,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A stiffness matrix ready for repeated right-hand sides.
pub struct Factorization<'a> {
    solver: &'a FeSolver,
    rho: DensityField,
    llt: Option<Llt<usize, f64>>,
}

impl Factorization<'_> {
    /// Solves for an arbitrary full-length load vector.
    pub fn solve(&self, loads: &[f64]) -> Result<SolveResult> {
        let s = self.solver;
        let ndof = s.model.dof_count();
        assert_eq!(loads.len(), ndof);
        let f: Vec<f64> = s.free_dofs.iter().map(|&d| loads[d]).collect();
        let fnorm = norm(&f);
        let mut u = vec![0.0; ndof];
        if fnorm == 0.0 {
            return Ok(SolveResult {
                u,
                compliance: 0.0,
                iterations: 0,
                residual: 0.0,
            });
        }
        let (uf, iterations) = match (&self.llt, s.kind) {
            (Some(llt), _) => {
                let mut x = f.clone();
                llt.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, f.len(), 1));
                (x, 1)
            }
            (None, SolverKind::Pcg { tolerance, max_iterations }) => {
                let (x, it, _) = s.pcg(&self.rho, &f, tolerance, max_iterations)?;
                (x, it)
            }
            (None, SolverKind::Direct) => unreachable!("direct solver without factor"),
        };
        let mut ku = vec![0.0; f.len()];
        s.apply_free(&self.rho, &uf, &mut ku);
        let residual = ku.iter().zip(&f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / fnorm;
        if !residual.is_finite() || residual > 1e-6 {
            return Err(Error::SingularSystem);
        }
        for (i, &d) in s.free_dofs.iter().enumerate() {
            u[d] = uf[i];
        }
        let compliance = dot(loads, &u);
        Ok(SolveResult {
            u,
            compliance,
            iterations,
            residual,
        })
    }
}
