//! Shared oracles for the integration tests.
//!
//! The finite-difference oracle re-evaluates the whole forward pipeline in
//! double-double arithmetic, so central differences with a 1e-6 step resolve
//! gradient entries far below what plain `f64` round-off allows.
#![allow(dead_code)]

use std::ops::{Add, Div, Mul, Neg, Sub};

use quadopt::fea::{Component, FeModel, FeSolver, Material, SolverKind};
use quadopt::{DensityField, DependencyTable, TransformStack};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    const LN2: Dd = Dd {
        hi: std::f64::consts::LN_2,
        lo: 2.319046813846299558e-17,
    };

    pub fn new(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    fn scale(self, s: f64) -> Self {
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let x = 1.0 / self.hi.sqrt();
        let ax = Dd::new(self.hi * x);
        ax + Dd::new((self - ax * ax).hi * x * 0.5)
    }

    pub fn exp(self) -> Self {
        let k = (self.hi / std::f64::consts::LN_2).round();
        let r = (self - Dd::LN2 * Dd::new(k)).scale(1.0 / 1024.0);
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for n in 1..=14 {
            term = term * r / Dd::new(n as f64);
            sum = sum + term;
        }
        for _ in 0..10 {
            sum = sum * sum;
        }
        sum.scale(2f64.powi(k as i32))
    }

    pub fn tanh(self) -> Self {
        let e = (self + self).exp();
        (e - Dd::ONE) / (e + Dd::ONE)
    }

    pub fn powi(self, n: u32) -> Self {
        let mut out = Dd::ONE;
        for _ in 0..n {
            out = out * self;
        }
        out
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + -b
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let p = self.hi * b.hi;
        let e = self.hi.mul_add(b.hi, -p) + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * Dd::new(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Dd::new(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::new(q3)
    }
}

/// Textbook tanh projection.
pub fn project_dd(x: Dd, beta: f64, eta: f64) -> Dd {
    let b = Dd::new(beta);
    let e = Dd::new(eta);
    let num = (b * e).tanh() + (b * (x - e)).tanh();
    let den = (b * e).tanh() + (b * (Dd::ONE - e)).tanh();
    num / den
}

/// `((1/N) Σ a^p)^(1/p)` for a negative power of two `p`.
pub fn smooth_min_dd(args: &[Dd], p_norm: f64) -> Dd {
    let q = (-p_norm) as u32;
    assert!(q.is_power_of_two() && -(q as f64) == p_norm, "oracle handles p = -2^k only");
    let mut mean = Dd::ZERO;
    for &a in args {
        mean = mean + Dd::ONE / a.powi(q);
    }
    let mut root = mean / Dd::new(args.len() as f64);
    for _ in 0..q.trailing_zeros() {
        root = root.sqrt();
    }
    Dd::ONE / root
}

/// High-precision forward pipeline for one problem.
pub struct Oracle<'a> {
    pub deps: &'a DependencyTable,
    pub ts: &'a TransformStack,
    pub solver: &'a FeSolver,
    pub beta: f64,
    pub eta: f64,
    pub p_norm: f64,
}

impl Oracle<'_> {
    pub fn filtered(&self, x: &[Dd]) -> Vec<Dd> {
        let proj: Vec<Dd> = x.iter().map(|&v| project_dd(v, self.beta, self.eta)).collect();
        (0..x.len())
            .map(|g| {
                let mut args = vec![proj[g]];
                args.extend(self.deps.deps(g).iter().map(|&d| proj[d]));
                if args.len() == 1 {
                    args[0]
                } else {
                    smooth_min_dd(&args, self.p_norm)
                }
            })
            .collect()
    }

    /// Element densities, mapped independently of the library's `apply`.
    pub fn density(&self, filtered: &[Dd]) -> Vec<Dd> {
        let n = self.ts.element_count();
        let mut rho = vec![Dd::ZERO; n];
        for c in 0..self.ts.frame_count() {
            for &e in self.ts.frame_elements(c) {
                rho[e as usize] = Dd::ONE;
            }
        }
        for (g, &v) in filtered.iter().enumerate() {
            for &e in self.ts.cell_elements(g) {
                rho[e as usize] = v;
            }
        }
        for &e in self.ts.passive_solid() {
            rho[e as usize] = Dd::ONE;
        }
        rho
    }

    pub fn volume(&self, x: &[Dd]) -> Dd {
        let mut v = Dd::ZERO;
        for r in self.density(&self.filtered(x)) {
            v = v + r;
        }
        v
    }

    pub fn compliance(&self, x: &[Dd]) -> Dd {
        compliance_dd(self.solver, &self.density(&self.filtered(x)))
    }
}

/// `Fᵀ U` for densities given in double-double, by mixed-precision iterative
/// refinement: a double factorization drives corrections, residuals are formed
/// in double-double.
pub fn compliance_dd(solver: &FeSolver, rho: &[Dd]) -> Dd {
    let model = solver.model();
    let mat = model.material();
    let approx = DensityField {
        nelx: model.nelx(),
        nely: model.nely(),
        values: rho.iter().map(|r| r.to_f64()).collect(),
    };
    let fact = solver.factorize(&approx).expect("factorization");
    let young: Vec<Dd> = rho
        .iter()
        .map(|&r| Dd::new(mat.emin) + r.powi(mat.penalty as u32) * Dd::new(mat.e0 - mat.emin))
        .collect();
    assert_eq!(mat.penalty.fract(), 0.0);
    let loads = model.loads();
    let ndof = model.dof_count();
    let mut u = vec![Dd::ZERO; ndof];
    let k0 = model.k0();
    for _ in 0..30 {
        let mut r: Vec<Dd> = loads.iter().map(|&f| Dd::new(f)).collect();
        for e in 0..model.element_count() {
            let ed = model.edofs_of(e);
            for a in 0..8 {
                let mut acc = Dd::ZERO;
                for b in 0..8 {
                    acc = acc + Dd::new(k0[a][b]) * u[ed[b]];
                }
                r[ed[a]] = r[ed[a]] - young[e] * acc;
            }
        }
        let rf: Vec<f64> = (0..ndof)
            .map(|d| if model.is_fixed(d) { 0.0 } else { r[d].to_f64() })
            .collect();
        if rf.iter().all(|&v| v == 0.0) {
            break;
        }
        let corr = fact.solve(&rf).expect("correction solve");
        let mut small = true;
        for d in 0..ndof {
            let before = u[d];
            u[d] = u[d] + Dd::new(corr.u[d]);
            if corr.u[d].abs() > 1e-30 * before.hi.abs().max(1e-300) {
                small = false;
            }
        }
        if small {
            break;
        }
    }
    let mut c = Dd::ZERO;
    for d in 0..ndof {
        c = c + Dd::new(loads[d]) * u[d];
    }
    c
}

/// Central difference of `f` in coordinate `a` at step `h`, in double-double.
pub fn central_difference(x: &[f64], a: usize, h: f64, f: impl Fn(&[Dd]) -> Dd) -> f64 {
    let mut p: Vec<Dd> = x.iter().map(|&v| Dd::new(v)).collect();
    let mut m = p.clone();
    p[a] = p[a] + Dd::new(h);
    m[a] = m[a] - Dd::new(h);
    ((f(&p) - f(&m)) / Dd::new(2.0 * h)).to_f64()
}

/// Cantilever on a bare element grid: left edge clamped, unit downward load
/// at the middle of the right edge.
pub fn grid_cantilever(nelx: usize, nely: usize) -> FeModel {
    let fixed: Vec<usize> = (0..2 * (nely + 1)).collect();
    let probe = FeModel::new(nelx, nely, Material::default(), &fixed, vec![0.0; 2 * (nelx + 1) * (nely + 1)]).unwrap();
    let mut loads = vec![0.0; probe.dof_count()];
    loads[probe.dof(nelx, nely / 2, Component::Y)] = -1.0;
    probe.with_loads(loads).unwrap()
}

pub fn direct(model: FeModel) -> FeSolver {
    FeSolver::new(model, SolverKind::Direct).unwrap()
}
