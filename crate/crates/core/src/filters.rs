//! Refinement filters over multi-level design fields.
//!
//! Three operators live here: the Heaviside projection that sharpens raw
//! design variables, the exact `min` refinement filter, and its smooth
//! normalized p-norm approximation used during optimization.

use crate::error::{Error, Result};
use crate::hierarchy::{CellId, DependencyTable, QuadtreeHierarchy};

/// Default lower bound on design variables.
pub const X_MIN: f64 = 1e-3;

/// Continuous refinement values on every level of a hierarchy.
///
/// Values are stored flat in global cell order (see [`QuadtreeHierarchy`]).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignField {
    shapes: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl DesignField {
    pub fn uniform(h: &QuadtreeHierarchy, value: f64) -> Self {
        Self::from_values(h, vec![value; h.total_cells()]).unwrap()
    }

    pub fn from_values(h: &QuadtreeHierarchy, values: Vec<f64>) -> Result<Self> {
        if values.len() != h.total_cells() {
            return Err(Error::Format {
                what: "design field",
                message: format!("{} values for {} cells", values.len(), h.total_cells()),
            });
        }
        let shapes = (1..=h.max_level())
            .map(|k| h.level_resolution(k).unwrap())
            .collect();
        let mut offsets = vec![0];
        for k in 1..=h.max_level() {
            offsets.push(h.level_range(k).end);
        }
        Ok(Self {
            shapes,
            offsets,
            values,
        })
    }

    /// Same shape as `self`, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self {
            shapes: self.shapes.clone(),
            offsets: self.offsets.clone(),
            values,
        }
    }

    pub fn levels(&self) -> usize {
        self.shapes.len()
    }

    pub fn shape(&self, k: usize) -> (usize, usize) {
        self.shapes[k - 1]
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.values[self.offsets[k - 1]..self.offsets[k]]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[self.offsets[k - 1]..self.offsets[k]]
    }

    pub fn get(&self, cell: CellId) -> f64 {
        let (nx, _) = self.shape(cell.level);
        self.values[self.offsets[cell.level - 1] + cell.j * nx + cell.i]
    }

    pub fn set(&mut self, cell: CellId, v: f64) {
        let (nx, _) = self.shape(cell.level);
        self.values[self.offsets[cell.level - 1] + cell.j * nx + cell.i] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Checks the level structure against a hierarchy.
    pub fn check_shape(&self, h: &QuadtreeHierarchy) -> Result<()> {
        if self.levels() != h.max_level() {
            return Err(Error::LevelMismatch {
                expected: h.max_level(),
                got: self.levels(),
            });
        }
        for k in 1..=h.max_level() {
            if self.shape(k) != h.level_resolution(k)? {
                return Err(Error::LevelMismatch {
                    expected: h.max_level(),
                    got: self.levels(),
                });
            }
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &DesignField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Parameters of the projection and smooth refinement filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    /// Negative p-norm exponent of the smooth minimum.
    pub p_norm: f64,
    /// Projection sharpness.
    pub beta: f64,
    /// Projection threshold.
    pub eta: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            p_norm: -16.0,
            beta: 1.0,
            eta: 0.5,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Format {
            what: "filter parameters",
            message: m,
        });
        if !(self.p_norm < 0.0) {
            return bad(format!("p-norm exponent {} must be negative", self.p_norm));
        }
        if !(self.beta >= 1.0) {
            return bad(format!("projection sharpness {} must be at least 1", self.beta));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad(format!("projection threshold {} must lie in [0, 1]", self.eta));
        }
        Ok(())
    }
}

fn ln_sinh(t: f64) -> f64 {
    // t > 0
    if t < 20.0 {
        t.sinh().ln()
    } else {
        t + (-(-2.0 * t).exp()).ln_1p() - std::f64::consts::LN_2
    }
}

fn ln_cosh(t: f64) -> f64 {
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Tanh projection of a single value.
///
/// Evaluated through `tanh a + tanh b = sinh(a + b) / (cosh a cosh b)` so that
/// strictly positive inputs map to strictly positive outputs even when the
/// textbook form cancels to zero at large `beta`.
pub fn project(x: f64, beta: f64, eta: f64) -> f64 {
    if x <= 0.0 || eta <= 0.0 || eta >= 1.0 {
        let num = (beta * eta).tanh() + (beta * (x - eta)).tanh();
        let den = (beta * eta).tanh() + (beta * (1.0 - eta)).tanh();
        return num / den;
    }
    let ln = ln_sinh(beta * x) + ln_cosh(beta * (1.0 - eta)) - ln_sinh(beta) - ln_cosh(beta * (x - eta));
    // exact value is at most 1 on the unit interval; the logarithms round above it
    if x <= 1.0 {
        ln.exp().min(1.0)
    } else {
        ln.exp()
    }
}

/// Derivative of [`project`] with respect to `x`.
pub fn project_derivative(x: f64, beta: f64, eta: f64) -> f64 {
    let den = (beta * eta).tanh() + (beta * (1.0 - eta)).tanh();
    let c = (beta * (x - eta)).cosh();
    beta / (c * c) / den
}

/// Elementwise Heaviside projection.
pub fn heaviside_project(x: &DesignField, beta: f64, eta: f64) -> DesignField {
    x.with_values(x.values.iter().map(|&v| project(v, beta, eta)).collect())
}

/// `min` over each cell and its dependency list.
pub fn exact_min_filter(x: &DesignField, deps: &DependencyTable) -> DesignField {
    let out = (0..x.len())
        .map(|g| {
            deps.deps(g)
                .iter()
                .fold(x.values[g], |m, &d| m.min(x.values[d]))
        })
        .collect();
    x.with_values(out)
}

/// Normalized p-norm of the arguments, `((1/N) Σ a^p)^(1/p)`.
///
/// Arguments are rescaled by their minimum before exponentiation so no
/// intermediate power overflows. All arguments must be strictly positive.
pub fn smooth_min(args: &[f64], p: f64) -> f64 {
    let lo = args.iter().copied().fold(f64::INFINITY, f64::min);
    if args.len() == 1 {
        return lo;
    }
    let mean = args.iter().map(|&a| (a / lo).powf(p)).sum::<f64>() / args.len() as f64;
    lo * mean.powf(1.0 / p)
}

fn gather_args(x: &[f64], g: usize, deps: &DependencyTable, buf: &mut Vec<f64>) -> Result<()> {
    buf.clear();
    buf.push(x[g]);
    buf.extend(deps.deps(g).iter().map(|&d| x[d]));
    for (n, &a) in buf.iter().enumerate() {
        if !(a > 0.0) {
            let cell = if n == 0 { g } else { deps.deps(g)[n - 1] };
            return Err(Error::NonPositiveArgument { cell, value: a });
        }
    }
    Ok(())
}

/// Smooth refinement filter: the normalized p-norm over each cell and its
/// dependency list.
pub fn smooth_min_filter(x: &DesignField, deps: &DependencyTable, p_norm: f64) -> Result<DesignField> {
    let mut buf = Vec::new();
    let mut out = Vec::with_capacity(x.len());
    for g in 0..x.len() {
        gather_args(&x.values, g, deps, &mut buf)?;
        out.push(smooth_min(&buf, p_norm));
    }
    Ok(x.with_values(out))
}

/// Sparse Jacobian of [`smooth_min_filter`]. Row `g` holds the partials of the
/// filtered value of cell `g` with respect to the cell itself (first entry)
/// followed by its dependencies in table order.
#[derive(Debug, Clone)]
pub struct FilterJacobian {
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl FilterJacobian {
    pub fn row(&self, g: usize) -> &[f64] {
        &self.values[self.offsets[g]..self.offsets[g + 1]]
    }

    /// Partial of filtered cell `row` with respect to input cell `col`, zero
    /// when `col` is neither `row` nor one of its dependencies.
    pub fn entry(&self, deps: &DependencyTable, row: usize, col: usize) -> f64 {
        let r = self.row(row);
        if row == col {
            return r[0];
        }
        deps.deps(row)
            .iter()
            .position(|&d| d == col)
            .map_or(0.0, |n| r[n + 1])
    }
}

/// Partials `∂x̃_g/∂a = (1/N) (x̃_g / a)^(1-p)` for every argument `a` of cell `g`.
pub fn smooth_min_jacobian(x: &DesignField, deps: &DependencyTable, p_norm: f64) -> Result<FilterJacobian> {
    let mut buf = Vec::new();
    let mut offsets = Vec::with_capacity(x.len() + 1);
    offsets.push(0);
    let mut values = Vec::new();
    for g in 0..x.len() {
        gather_args(&x.values, g, deps, &mut buf)?;
        let n = buf.len() as f64;
        if buf.len() == 1 {
            values.push(1.0);
        } else {
            let filtered = smooth_min(&buf, p_norm);
            values.extend(buf.iter().map(|&a| (filtered / a).powf(1.0 - p_norm) / n));
        }
        offsets.push(values.len());
    }
    Ok(FilterJacobian { offsets, values })
}

/// Projected and filtered design, as produced by [`filter_chain`].
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredDesign {
    pub projected: DesignField,
    pub filtered: DesignField,
}

/// Projection followed by the smooth refinement filter.
pub fn filter_chain(x: &DesignField, params: &FilterParams, deps: &DependencyTable) -> Result<FilteredDesign> {
    let projected = heaviside_project(x, params.beta, params.eta);
    let filtered = smooth_min_filter(&projected, deps, params.p_norm)?;
    Ok(FilteredDesign {
        projected,
        filtered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::DependencyMode;

    fn textbook_projection(x: f64, beta: f64, eta: f64) -> f64 {
        ((beta * eta).tanh() + (beta * (x - eta)).tanh()) / ((beta * eta).tanh() + (beta * (1.0 - eta)).tanh())
    }

    #[test]
    fn projection_endpoints_and_midpoint() {
        for beta in [1.0, 2.0, 8.0, 32.0] {
            assert!(project(0.0, beta, 0.5).abs() < 1e-15);
            assert!((project(1.0, beta, 0.5) - 1.0).abs() < 1e-14);
            assert!((project(0.5, beta, 0.5) - 0.5).abs() < 1e-14);
        }
        assert!(project(0.6, 32.0, 0.5) > 0.95);
    }

    #[test]
    fn stable_projection_matches_textbook_form() {
        for beta in [1.0, 4.0, 16.0, 32.0] {
            for eta in [0.3, 0.5, 0.7] {
                for n in 1..100 {
                    let x = n as f64 / 100.0;
                    let a = project(x, beta, eta);
                    let b = textbook_projection(x, beta, eta);
                    assert!((a - b).abs() < 1e-12, "beta {beta} eta {eta} x {x}: {a} vs {b}");
                }
            }
        }
        // the textbook form loses every digit here
        assert!(project(1e-3, 32.0, 0.5) > 0.0);
    }

    #[test]
    fn projection_derivative_matches_fd() {
        for beta in [1.0, 8.0, 32.0] {
            for x in [0.1, 0.45, 0.5, 0.52, 0.9] {
                let h = 1e-6;
                let fd = (project(x + h, beta, 0.5) - project(x - h, beta, 0.5)) / (2.0 * h);
                let an = project_derivative(x, beta, 0.5);
                assert!((an - fd).abs() < 1e-5 * fd.abs() + 1e-8, "{beta} {x}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn smooth_min_values() {
        assert_eq!(smooth_min(&[1.0, 1.0, 1.0], -16.0), 1.0);
        let v = smooth_min(&[0.5, 1.0], -16.0);
        let direct = ((0.5f64.powf(-16.0) + 1.0) / 2.0).powf(-1.0 / 16.0);
        assert!((v - direct).abs() < 1e-14);
        assert!((v - 0.522).abs() < 5e-4);
        assert_eq!(smooth_min(&[0.37], -16.0), 0.37);
    }

    #[test]
    fn smooth_filter_rejects_zero() {
        let h = QuadtreeHierarchy::new(1, 1, 4).unwrap();
        let deps = DependencyTable::build(&h, DependencyMode::Unbalanced);
        let mut x = DesignField::uniform(&h, 0.5);
        x.set(CellId::new(1, 0, 0), 0.0);
        assert!(matches!(
            smooth_min_filter(&x, &deps, -16.0),
            Err(Error::NonPositiveArgument { cell: 0, .. })
        ));
    }

    #[test]
    fn exact_filter_parent_rules() {
        let h = QuadtreeHierarchy::new(1, 1, 4).unwrap();
        let deps = DependencyTable::build(&h, DependencyMode::Unbalanced);
        let mut x = DesignField::uniform(&h, 1.0);
        x.set(CellId::new(1, 0, 0), 0.0);
        let f = exact_min_filter(&x, &deps);
        assert!(f.level(2).iter().all(|&v| v == 0.0));

        let mut x = DesignField::uniform(&h, 1.0);
        x.set(CellId::new(2, 1, 1), 0.3);
        let f = exact_min_filter(&x, &deps);
        assert_eq!(f.get(CellId::new(2, 1, 1)), 0.3);
    }

    #[test]
    fn jacobian_equal_and_dominant_arguments() {
        let h = QuadtreeHierarchy::new(1, 1, 4).unwrap();
        let deps = DependencyTable::build(&h, DependencyMode::Unbalanced);
        let x = DesignField::uniform(&h, 0.7);
        let j = smooth_min_jacobian(&x, &deps, -16.0).unwrap();
        for g in h.level_range(2) {
            for &v in j.row(g) {
                assert!((v - 0.5).abs() < 1e-14);
            }
        }
        let mut x = DesignField::uniform(&h, 1.0);
        x.set(CellId::new(1, 0, 0), 0.1);
        let j = smooth_min_jacobian(&x, &deps, -16.0).unwrap();
        let row = j.row(h.global_index(CellId::new(2, 0, 0)));
        assert!(row[0] < 1e-15);
        assert!((row[1] - 1.0).abs() < 0.05);
    }

    #[test]
    fn none_mode_filter_is_identity() {
        let h = QuadtreeHierarchy::new(2, 1, 5).unwrap();
        let deps = DependencyTable::build(&h, DependencyMode::None);
        let vals: Vec<f64> = (0..h.total_cells()).map(|g| 0.01 + g as f64 / 100.0).collect();
        let x = DesignField::from_values(&h, vals).unwrap();
        assert_eq!(smooth_min_filter(&x, &deps, -16.0).unwrap(), x);
    }

    #[test]
    fn chain_with_equal_arguments() {
        let h = QuadtreeHierarchy::new(2, 1, 5).unwrap();
        let deps = DependencyTable::build(&h, DependencyMode::Balanced);
        let params = FilterParams {
            beta: 1.0,
            ..Default::default()
        };
        let x = DesignField::uniform(&h, 0.49);
        let out = filter_chain(&x, &params, &deps).unwrap();
        let expected = project(0.49, 1.0, 0.5);
        for &v in out.filtered.values() {
            assert!((v - expected).abs() < 1e-14);
        }
    }
}
