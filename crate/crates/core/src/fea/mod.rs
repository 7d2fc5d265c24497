//! Plane-stress analysis on the uniform square element grid.
//!
//! Nodes are numbered column by column, `node = nx * (nely + 1) + ny`, with
//! `ny = 0` on the top edge. Node `n` owns DOFs `2n` (x) and `2n + 1` (y,
//! positive upwards). Element DOFs are ordered counter-clockwise from the
//! bottom-left corner.

mod solver;

pub use solver::{FeSolver, Factorization, SolveResult, SolverKind};

use crate::error::{Error, Result};
use crate::mapping::DensityField;

/// Element stiffness of the unit-modulus bilinear square.
pub type ElementMatrix = [[f64; 8]; 8];

/// Linear elastic material with the modified SIMP interpolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub e0: f64,
    pub emin: f64,
    pub nu: f64,
    pub penalty: f64,
}

impl Default for Material {
    fn default() -> Self {
        Self {
            e0: 1.0,
            emin: 1e-9,
            nu: 0.3,
            penalty: 3.0,
        }
    }
}

impl Material {
    /// `E_min + ρ^p (E_0 - E_min)`.
    pub fn young(&self, rho: f64) -> f64 {
        self.emin + rho.powf(self.penalty) * (self.e0 - self.emin)
    }

    /// `dE/dρ`.
    pub fn young_derivative(&self, rho: f64) -> f64 {
        self.penalty * rho.powf(self.penalty - 1.0) * (self.e0 - self.emin)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.nu) {
            return Err(Error::InvalidMaterial(format!("Poisson ratio {} outside [0, 0.5)", self.nu)));
        }
        if !(self.emin > 0.0 && self.emin < self.e0) {
            return Err(Error::InvalidMaterial(format!(
                "need 0 < Emin < E0, got Emin = {}, E0 = {}",
                self.emin, self.e0
            )));
        }
        if !(self.penalty >= 1.0) {
            return Err(Error::InvalidMaterial(format!("penalty {} below 1", self.penalty)));
        }
        Ok(())
    }
}

/// Unit-modulus plane-stress stiffness of a unit square element, integrated
/// with 2×2 Gauss quadrature.
pub fn element_stiffness_unit(nu: f64) -> Result<ElementMatrix> {
    if !(0.0..0.5).contains(&nu) {
        return Err(Error::InvalidMaterial(format!("Poisson ratio {nu} outside [0, 0.5)")));
    }
    let d = {
        let s = 1.0 / (1.0 - nu * nu);
        [[s, s * nu, 0.0], [s * nu, s, 0.0], [0.0, 0.0, s * (1.0 - nu) / 2.0]]
    };
    let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    let g = 1.0 / 3f64.sqrt();
    let mut k = [[0.0; 8]; 8];
    for (xi, eta) in [(-g, -g), (g, -g), (g, g), (-g, g)] {
        // unit square: x = (ξ + 1) / 2, so d/dx = 2 d/dξ and det J = 1/4
        let mut b = [[0.0; 8]; 3];
        for (n, &(cx, cy)) in corners.iter().enumerate() {
            let dndx = 2.0 * 0.25 * cx * (1.0 + cy * eta);
            let dndy = 2.0 * 0.25 * cy * (1.0 + cx * xi);
            b[0][2 * n] = dndx;
            b[1][2 * n + 1] = dndy;
            b[2][2 * n] = dndy;
            b[2][2 * n + 1] = dndx;
        }
        for r in 0..8 {
            for c in 0..8 {
                let mut acc = 0.0;
                for a in 0..3 {
                    for bb in 0..3 {
                        acc += b[a][r] * d[a][bb] * b[bb][c];
                    }
                }
                k[r][c] += acc * 0.25;
            }
        }
    }
    Ok(k)
}

/// A physical DOF on the node grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    X,
    Y,
}

/// Global DOF of component `c` at node `(nx, ny)` on a grid `nely` elements tall.
pub fn dof_index(nely: usize, nx: usize, ny: usize, c: Component) -> usize {
    2 * (nx * (nely + 1) + ny) + matches!(c, Component::Y) as usize
}

/// Element grid, material, supports and loads.
#[derive(Debug, Clone)]
pub struct FeModel {
    nelx: usize,
    nely: usize,
    material: Material,
    k0: ElementMatrix,
    fixed: Vec<bool>,
    loads: Vec<f64>,
}

impl FeModel {
    /// `fixed_dofs` and `loads` are in global DOF numbering; `loads` has one
    /// entry per DOF.
    pub fn new(nelx: usize, nely: usize, material: Material, fixed_dofs: &[usize], loads: Vec<f64>) -> Result<Self> {
        material.validate()?;
        let ndof = 2 * (nelx + 1) * (nely + 1);
        if loads.len() != ndof {
            return Err(Error::Format {
                what: "load vector",
                message: format!("{} entries for {ndof} DOFs", loads.len()),
            });
        }
        let mut fixed = vec![false; ndof];
        for &d in fixed_dofs {
            if d >= ndof {
                return Err(Error::Format {
                    what: "support",
                    message: format!("DOF {d} out of range"),
                });
            }
            fixed[d] = true;
        }
        let model = Self {
            nelx,
            nely,
            material,
            k0: element_stiffness_unit(material.nu)?,
            fixed,
            loads,
        };
        model.check_supports()?;
        Ok(model)
    }

    pub fn nelx(&self) -> usize {
        self.nelx
    }

    pub fn nely(&self) -> usize {
        self.nely
    }

    pub fn element_count(&self) -> usize {
        self.nelx * self.nely
    }

    pub fn dof_count(&self) -> usize {
        self.fixed.len()
    }

    pub fn material(&self) -> &Material {
        &self.material
    }

    pub fn k0(&self) -> &ElementMatrix {
        &self.k0
    }

    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    pub fn is_fixed(&self, dof: usize) -> bool {
        self.fixed[dof]
    }

    pub fn fixed_dofs(&self) -> Vec<usize> {
        (0..self.fixed.len()).filter(|&d| self.fixed[d]).collect()
    }

    pub fn with_loads(&self, loads: Vec<f64>) -> Result<Self> {
        Self::new(self.nelx, self.nely, self.material, &self.fixed_dofs(), loads)
    }

    pub fn node(&self, nx: usize, ny: usize) -> usize {
        nx * (self.nely + 1) + ny
    }

    pub fn dof(&self, nx: usize, ny: usize, c: Component) -> usize {
        dof_index(self.nely, nx, ny, c)
    }

    pub fn node_position(&self, node: usize) -> (usize, usize) {
        (node / (self.nely + 1), node % (self.nely + 1))
    }

    /// DOFs of element `(ex, ey)`: bottom-left, bottom-right, top-right, top-left.
    pub fn edofs(&self, ex: usize, ey: usize) -> [usize; 8] {
        let tl = self.node(ex, ey);
        let tr = self.node(ex + 1, ey);
        let nodes = [tl + 1, tr + 1, tr, tl];
        let mut out = [0; 8];
        for (n, &node) in nodes.iter().enumerate() {
            out[2 * n] = 2 * node;
            out[2 * n + 1] = 2 * node + 1;
        }
        out
    }

    pub fn edofs_of(&self, e: usize) -> [usize; 8] {
        self.edofs(e % self.nelx, e / self.nelx)
    }

    /// Rejects support sets that leave a rigid-body mode unconstrained.
    ///
    /// The three planar rigid modes restricted to the fixed DOFs must have
    /// rank three.
    pub fn check_supports(&self) -> Result<()> {
        let cx = self.nelx as f64 / 2.0;
        let cy = self.nely as f64 / 2.0;
        let len = self.nelx.max(self.nely) as f64;
        let mut gram = [[0.0; 3]; 3];
        for d in 0..self.fixed.len() {
            if !self.fixed[d] {
                continue;
            }
            let (nx, ny) = self.node_position(d / 2);
            let x = (nx as f64 - cx) / len;
            let y = (cy - ny as f64) / len;
            let row = if d % 2 == 0 { [1.0, 0.0, -y] } else { [0.0, 1.0, x] };
            for a in 0..3 {
                for b in 0..3 {
                    gram[a][b] += row[a] * row[b];
                }
            }
        }
        let det = gram[0][0] * (gram[1][1] * gram[2][2] - gram[1][2] * gram[2][1])
            - gram[0][1] * (gram[1][0] * gram[2][2] - gram[1][2] * gram[2][0])
            + gram[0][2] * (gram[1][0] * gram[2][1] - gram[1][1] * gram[2][0]);
        let scale = (gram[0][0] + gram[1][1] + gram[2][2]).max(1.0);
        if det <= 1e-9 * scale * scale * scale {
            let which = if gram[0][0] == 0.0 {
                "horizontal translation is free"
            } else if gram[1][1] == 0.0 {
                "vertical translation is free"
            } else {
                "rotation is free"
            };
            return Err(Error::InsufficientSupports(which.into()));
        }
        Ok(())
    }

    /// `u_eᵀ k0 u_e` for every element.
    pub fn element_energies(&self, u: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.element_count());
        for ey in 0..self.nely {
            for ex in 0..self.nelx {
                let ed = self.edofs(ex, ey);
                let ue: [f64; 8] = std::array::from_fn(|a| u[ed[a]]);
                let mut acc = 0.0;
                for a in 0..8 {
                    let mut row = 0.0;
                    for b in 0..8 {
                        row += self.k0[a][b] * ue[b];
                    }
                    acc += ue[a] * row;
                }
                out.push(acc);
            }
        }
        out
    }

    /// `K(ρ) u` on the full DOF set (no constraint elimination).
    pub fn apply_stiffness(&self, rho: &DensityField, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dof_count()];
        for e in 0..self.element_count() {
            let ed = self.edofs_of(e);
            let ee = self.material.young(rho.values[e]);
            for a in 0..8 {
                let mut acc = 0.0;
                for b in 0..8 {
                    acc += self.k0[a][b] * u[ed[b]];
                }
                out[ed[a]] += ee * acc;
            }
        }
        out
    }
}

/// `Σ ρ_e` with unit element volume.
pub fn volume(rho: &DensityField) -> f64 {
    rho.values.iter().sum()
}

pub fn volume_fraction(rho: &DensityField) -> f64 {
    volume(rho) / rho.values.len() as f64
}

/// `(4 / n) Σ ρ_e (1 - ρ_e)`; zero for a binary field, one for a field of 0.5.
pub fn sharpness(rho: &DensityField, n: usize) -> f64 {
    4.0 / n as f64 * rho.values.iter().map(|r| r * (1.0 - r)).sum::<f64>()
}

/// Average stiffness-weighted strain energy over a set of elements.
pub fn cell_strain_energy_density(
    model: &FeModel,
    energies: &[f64],
    rho: &DensityField,
    elements: impl IntoIterator<Item = usize>,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for e in elements {
        sum += model.material.young(rho.values[e]) * energies[e];
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyCell);
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed-form matrix from the classic educational implementation.
    fn reference_k0(nu: f64) -> ElementMatrix {
        let a11 = [[12., 3., -6., -3.], [3., 12., 3., 0.], [-6., 3., 12., -3.], [-3., 0., -3., 12.]];
        let a12 = [[-6., -3., 0., 3.], [-3., -6., -3., -6.], [0., -3., -6., 3.], [3., -6., 3., -6.]];
        let b11 = [[-4., 3., -2., 9.], [3., -4., -9., 4.], [-2., -9., -4., -3.], [9., 4., -3., -4.]];
        let b12 = [[2., -3., 4., -9.], [-3., 2., 9., -2.], [4., 9., 2., 3.], [-9., -2., 3., 2.]];
        let mut k = [[0.0; 8]; 8];
        for r in 0..4 {
            for c in 0..4 {
                k[r][c] = a11[r][c] + nu * b11[r][c];
                k[r][c + 4] = a12[r][c] + nu * b12[r][c];
                k[r + 4][c] = a12[c][r] + nu * b12[c][r];
                k[r + 4][c + 4] = a11[r][c] + nu * b11[r][c];
            }
        }
        let s = 1.0 / (1.0 - nu * nu) / 24.0;
        k.map(|row| row.map(|v| v * s))
    }

    #[test]
    fn quadrature_matches_closed_form() {
        for nu in [0.0, 0.25, 0.3, 0.45] {
            let k = element_stiffness_unit(nu).unwrap();
            let r = reference_k0(nu);
            for a in 0..8 {
                for b in 0..8 {
                    assert!((k[a][b] - r[a][b]).abs() < 1e-13, "{nu} [{a}][{b}]");
                }
            }
        }
    }

    #[test]
    fn k0_symmetric_with_rigid_modes() {
        let k = element_stiffness_unit(0.3).unwrap();
        for a in 0..8 {
            for b in 0..8 {
                assert!((k[a][b] - k[b][a]).abs() < 1e-15);
            }
        }
        let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let tx: [f64; 8] = std::array::from_fn(|i| if i % 2 == 0 { 1.0 } else { 0.0 });
        let ty: [f64; 8] = std::array::from_fn(|i| if i % 2 == 1 { 1.0 } else { 0.0 });
        let rot: [f64; 8] = std::array::from_fn(|i| {
            let (x, y) = corners[i / 2];
            if i % 2 == 0 {
                -y
            } else {
                x
            }
        });
        for mode in [tx, ty, rot] {
            for row in &k {
                let v: f64 = row.iter().zip(&mode).map(|(a, b)| a * b).sum();
                assert!(v.abs() < 1e-14);
            }
        }
        assert!(element_stiffness_unit(0.5).is_err());
        assert!(element_stiffness_unit(-0.1).is_err());
    }

    #[test]
    fn assembled_row_sums_vanish() {
        let loads = vec![0.0; 2 * 3 * 3];
        let m = FeModel::new(2, 2, Material::default(), &[0, 1, 13], loads).unwrap();
        let rho = DensityField::uniform(2, 2, 1.0);
        // K times a uniform translation is zero in every row
        for c in 0..2 {
            let u: Vec<f64> = (0..m.dof_count()).map(|d| (d % 2 == c) as u8 as f64).collect();
            for v in m.apply_stiffness(&rho, &u) {
                assert!(v.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn support_rank_check() {
        let n = 2 * 5 * 3;
        let m = |fixed: &[usize]| FeModel::new(4, 2, Material::default(), fixed, vec![0.0; n]);
        assert!(matches!(m(&[]), Err(Error::InsufficientSupports(_))));
        // single pinned node: rotation free
        assert!(m(&[0, 1]).is_err());
        // two x-fixed nodes on the same vertical line plus one y
        assert!(m(&[0, 2, 1]).is_ok());
        // only x DOFs
        assert!(m(&[0, 2, 4]).is_err());
    }

    #[test]
    fn sharpness_and_volume() {
        let half = DensityField::uniform(4, 4, 0.5);
        assert!((sharpness(&half, 16) - 1.0).abs() < 1e-15);
        assert_eq!(volume(&half), 8.0);
        let bin = DensityField {
            nelx: 2,
            nely: 1,
            values: vec![0.0, 1.0],
        };
        assert_eq!(sharpness(&bin, 2), 0.0);
        assert_eq!(volume(&DensityField::uniform(3, 3, 0.0)), 0.0);
    }

    #[test]
    fn strain_energy_of_empty_set() {
        let m = FeModel::new(2, 1, Material::default(), &[0, 1, 2], vec![0.0; 12]).unwrap();
        let rho = DensityField::uniform(2, 1, 1.0);
        let energies = vec![0.0; 2];
        assert!(matches!(
            cell_strain_energy_density(&m, &energies, &rho, std::iter::empty()),
            Err(Error::EmptyCell)
        ));
        assert_eq!(cell_strain_energy_density(&m, &energies, &rho, [0, 1]).unwrap(), 0.0);
    }
}
