//! The outer optimization loop: design update, projection continuation and
//! convergence tracking.

use crate::error::{Error, Result};
use crate::fea::sharpness;
use crate::filters::{filter_chain, DesignField, FilterParams, FilteredDesign, X_MIN};
use crate::hierarchy::{DependencyMode, DependencyTable};
use crate::mapping::{DensityField, TransformStack};
use crate::problems::Problem;
use crate::sensitivity::{evaluate, full_gradients};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Optimality criteria with a bisected volume multiplier.
    #[default]
    Oc,
    /// Method of moving asymptotes with one volume constraint.
    Mma,
}

/// Projection sharpness `beta`, doubled every `interval` iterations up to `max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSchedule {
    pub start: f64,
    pub max: f64,
    pub interval: usize,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            max: 32.0,
            interval: 60,
        }
    }
}

impl BetaSchedule {
    /// `beta` in force at 1-based iteration `iter`.
    pub fn at(&self, iter: usize) -> f64 {
        let doublings = (iter.max(1) - 1) / self.interval.max(1);
        let mut beta = self.start;
        for _ in 0..doublings {
            if beta >= self.max {
                break;
            }
            beta *= 2.0;
        }
        beta.min(self.max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Target volume as a fraction of the bounding-box element count.
    pub volume_fraction: f64,
    pub mode: DependencyMode,
    pub method: Method,
    pub max_iterations: usize,
    /// Convergence threshold on the largest element density change between
    /// two iterations, both at the maximal `beta`.
    pub tolerance: f64,
    pub beta: BetaSchedule,
    pub p_norm: f64,
    pub eta: f64,
    pub move_limit: f64,
    /// Adapt OC move limits per variable (see [`MoveLimits`]); `false` keeps
    /// the fixed limit.
    pub adaptive_move: bool,
    /// Homogeneous starting value; chosen by bisection when `None`.
    pub initial_value: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            volume_fraction: 0.4,
            mode: DependencyMode::Balanced,
            method: Method::Oc,
            max_iterations: 400,
            tolerance: 1e-4,
            beta: BetaSchedule::default(),
            p_norm: -16.0,
            eta: 0.5,
            move_limit: 0.2,
            adaptive_move: true,
            initial_value: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| {
            Err(Error::Format {
                what: "run configuration",
                message: m,
            })
        };
        if !(self.volume_fraction > 0.0 && self.volume_fraction < 1.0) {
            return bad(format!("volume fraction {} outside (0, 1)", self.volume_fraction));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        if !(self.move_limit > 0.0 && self.move_limit <= 1.0) {
            return bad(format!("move limit {} outside (0, 1]", self.move_limit));
        }
        if !(self.beta.start >= 1.0 && self.beta.max >= self.beta.start && self.beta.interval > 0) {
            return bad("beta schedule needs 1 <= start <= max and a positive interval".into());
        }
        if let Some(v) = self.initial_value {
            if !(X_MIN..=1.0).contains(&v) {
                return bad(format!("initial value {v} outside [{X_MIN}, 1]"));
            }
        }
        self.params(self.beta.start).validate()
    }

    pub fn params(&self, beta: f64) -> FilterParams {
        FilterParams {
            p_norm: self.p_norm,
            beta,
            eta: self.eta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub compliance: f64,
    /// Mapped volume fraction.
    pub volume: f64,
    pub sharpness: f64,
    /// `max |Δρ|` against the previous iteration's densities (1 on the first).
    pub change: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub iteration: usize,
    pub beta: f64,
    pub x: DesignField,
    pub history: Vec<IterationRecord>,
    pub termination: Option<Termination>,
}

/// Final design of a run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub x: DesignField,
    pub design: FilteredDesign,
    pub rho: DensityField,
    pub compliance: f64,
    pub volume_fraction: f64,
    pub sharpness: f64,
    pub state: OptimizerState,
}

/// What an observer sees after each iteration.
pub struct IterationView<'a> {
    pub record: &'a IterationRecord,
    pub rho: &'a DensityField,
    pub filtered: &'a DesignField,
}

fn mapped_volume(x: &DesignField, params: &FilterParams, deps: &DependencyTable, ts: &TransformStack) -> Result<f64> {
    Ok(ts.volume_of(&filter_chain(x, params, deps)?.filtered))
}

fn homogeneous(ts: &TransformStack, x: &DesignField, v: f64) -> DesignField {
    let values = (0..x.len())
        .map(|g| if ts.is_active(g) { v } else { X_MIN })
        .collect();
    x.with_values(values)
}

/// Homogeneous start whose mapped volume at the starting `beta` does not
/// exceed the target.
pub fn initialize_design(problem: &Problem, config: &RunConfig, deps: &DependencyTable) -> Result<DesignField> {
    let ts = &problem.transform;
    let target = config.volume_fraction * problem.element_count() as f64;
    let params = config.params(config.beta.start);
    let base = DesignField::uniform(&problem.hierarchy, X_MIN);
    if let Some(v) = config.initial_value {
        return Ok(homogeneous(ts, &base, v));
    }
    let vol = |v: f64| mapped_volume(&homogeneous(ts, &base, v), &params, deps, ts);
    let at_min = vol(X_MIN)?;
    if at_min > target {
        return Err(Error::InfeasibleTarget {
            target: config.volume_fraction,
            frame: problem.volume_fraction(at_min),
        });
    }
    if vol(1.0)? <= target {
        return Ok(homogeneous(ts, &base, 1.0));
    }
    let (mut lo, mut hi) = (X_MIN, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if vol(mid)? <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(homogeneous(ts, &base, lo))
}

fn box_bounds(x: f64, move_limit: f64) -> (f64, f64) {
    ((x - move_limit).max(X_MIN), (x + move_limit).min(1.0))
}

/// Optimality-criteria update with one move limit per variable. The
/// multiplier is bisected in log space on the true mapped volume at `params`;
/// the returned design satisfies `V ≤ target` whenever the lower box bounds do.
#[allow(clippy::too_many_arguments)]
pub fn oc_update(
    x: &DesignField,
    dc: &[f64],
    dv: &[f64],
    target: f64,
    moves: &[f64],
    params: &FilterParams,
    deps: &DependencyTable,
    ts: &TransformStack,
) -> Result<DesignField> {
    let n = x.len();
    let xv = x.values();
    let ratios: Vec<f64> = (0..n)
        .map(|a| {
            let num = (-dc[a]).max(0.0);
            if dv[a] > 0.0 {
                num / dv[a]
            } else if num > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .collect();
    let candidate = |lambda: f64| -> DesignField {
        let vals = (0..n)
            .map(|a| {
                if !ts.is_active(a) {
                    return xv[a];
                }
                let (lo, hi) = box_bounds(xv[a], moves[a]);
                (xv[a] * (ratios[a] / lambda).sqrt()).clamp(lo, hi)
            })
            .collect();
        x.with_values(vals)
    };
    let finite: Vec<f64> = ratios.iter().copied().filter(|r| r.is_finite() && *r > 0.0).collect();
    let lowest = x.with_values(
        (0..n)
            .map(|a| if ts.is_active(a) { box_bounds(xv[a], moves[a]).0 } else { xv[a] })
            .collect(),
    );
    if finite.is_empty() {
        return Ok(lowest);
    }
    let rmin = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let rmax = finite.iter().copied().fold(0.0, f64::max);
    let (mut l1, mut l2) = (rmin * 1e-6, rmax * 1e6);
    let v_hi = mapped_volume(&candidate(l1), params, deps, ts)?;
    if v_hi <= target {
        return Ok(candidate(l1));
    }
    let v_lo = mapped_volume(&candidate(l2), params, deps, ts)?;
    if v_lo > target {
        let v_min = mapped_volume(&lowest, params, deps, ts)?;
        if v_min > target {
            return Err(Error::NonBracketing {
                min_volume: v_min,
                target,
            });
        }
        l2 = f64::MAX.sqrt();
    }
    // invariant: V(l1) > target >= V(l2)
    for _ in 0..200 {
        let mid = (l1 * l2).sqrt();
        let v = mapped_volume(&candidate(mid), params, deps, ts)?;
        if v > target {
            l1 = mid;
        } else {
            l2 = mid;
        }
        if l2 / l1 - 1.0 < 1e-12 {
            break;
        }
        if target - v <= 1e-6 * target && v <= target {
            break;
        }
    }
    Ok(candidate(l2))
}

/// Per-variable OC move limits. A variable whose step reverses direction
/// has its limit shrunk, one moving steadily has it grown back towards the cap.
/// Without this the update 2-cycles around the kinks of the min filter.
#[derive(Debug, Clone)]
pub struct MoveLimits {
    cap: f64,
    limits: Vec<f64>,
    last_step: Vec<f64>,
}

impl MoveLimits {
    const SHRINK: f64 = 0.7;
    const GROW: f64 = 1.2;

    pub fn new(n: usize, cap: f64) -> Self {
        Self {
            cap,
            limits: vec![cap; n],
            last_step: vec![0.0; n],
        }
    }

    pub fn limits(&self) -> &[f64] {
        &self.limits
    }

    /// Records the step `new - old` and adapts the limits.
    pub fn adapt(&mut self, old: &[f64], new: &[f64]) {
        for a in 0..self.limits.len() {
            let step = new[a] - old[a];
            let s = step * self.last_step[a];
            if s < 0.0 {
                self.limits[a] *= Self::SHRINK;
            } else if s > 0.0 {
                self.limits[a] = (self.limits[a] * Self::GROW).min(self.cap);
            }
            if step != 0.0 {
                self.last_step[a] = step;
            }
        }
    }

    pub fn reset(&mut self) {
        self.limits.fill(self.cap);
        self.last_step.fill(0.0);
    }
}

/// Moving-asymptote history for [`mma_update`].
#[derive(Debug, Clone, Default)]
pub struct MmaState {
    xold1: Option<Vec<f64>>,
    xold2: Option<Vec<f64>>,
    low: Vec<f64>,
    upp: Vec<f64>,
}

impl MmaState {
    /// Forgets the iterate history, so the next step starts from the initial asymptotes.
    pub fn reset(&mut self) {
        self.xold1 = None;
        self.xold2 = None;
    }
}

/// One MMA step for `min c` s.t. `V ≤ target`, solved through the scalar dual.
/// `c_scale` normalizes the objective gradient.
#[allow(clippy::too_many_arguments)]
pub fn mma_update(
    x: &DesignField,
    dc: &[f64],
    dv: &[f64],
    volume: f64,
    target: f64,
    c_scale: f64,
    move_limit: f64,
    ts: &TransformStack,
    state: &mut MmaState,
) -> Result<DesignField> {
    const ASYINIT: f64 = 0.5;
    const ASYDECR: f64 = 0.7;
    const ASYINCR: f64 = 1.2;
    const RAA0: f64 = 1e-5;
    const C_SLACK: f64 = 1000.0;
    let n = x.len();
    let xv = x.values();
    let range = 1.0 - X_MIN;
    if state.low.len() != n {
        state.low = vec![0.0; n];
        state.upp = vec![0.0; n];
    }
    for a in 0..n {
        match (&state.xold1, &state.xold2) {
            (Some(o1), Some(o2)) => {
                let s = (xv[a] - o1[a]) * (o1[a] - o2[a]);
                let gamma = if s < 0.0 {
                    ASYDECR
                } else if s > 0.0 {
                    ASYINCR
                } else {
                    1.0
                };
                let low = xv[a] - gamma * (o1[a] - state.low[a]);
                let upp = xv[a] + gamma * (state.upp[a] - o1[a]);
                state.low[a] = low.clamp(xv[a] - 10.0 * range, xv[a] - 0.01 * range);
                state.upp[a] = upp.clamp(xv[a] + 0.01 * range, xv[a] + 10.0 * range);
            }
            _ => {
                state.low[a] = xv[a] - ASYINIT * range;
                state.upp[a] = xv[a] + ASYINIT * range;
            }
        }
    }
    let g0 = volume / target - 1.0;
    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];
    let mut p0 = vec![0.0; n];
    let mut q0 = vec![0.0; n];
    let mut p1 = vec![0.0; n];
    let mut q1 = vec![0.0; n];
    let mut b = -g0;
    for a in 0..n {
        let (l, u, xa) = (state.low[a], state.upp[a], xv[a]);
        alpha[a] = (l + 0.1 * (xa - l)).max(xa - move_limit * range).max(X_MIN);
        beta[a] = (u - 0.1 * (u - xa)).min(xa + move_limit * range).min(1.0);
        let (ux, xl) = (u - xa, xa - l);
        let df = dc[a] / c_scale;
        let dg = dv[a] / target;
        p0[a] = ux * ux * (1.001 * df.max(0.0) + 0.001 * (-df).max(0.0) + RAA0 / range);
        q0[a] = xl * xl * (0.001 * df.max(0.0) + 1.001 * (-df).max(0.0) + RAA0 / range);
        p1[a] = ux * ux * (1.001 * dg.max(0.0) + 0.001 * (-dg).max(0.0) + RAA0 / range);
        q1[a] = xl * xl * (0.001 * dg.max(0.0) + 1.001 * (-dg).max(0.0) + RAA0 / range);
        b += p1[a] / ux + q1[a] / xl;
    }
    let solve_x = |lambda: f64| -> Vec<f64> {
        (0..n)
            .map(|a| {
                if !ts.is_active(a) {
                    return xv[a];
                }
                let p = (p0[a] + lambda * p1[a]).sqrt();
                let q = (q0[a] + lambda * q1[a]).sqrt();
                ((p * state.low[a] + q * state.upp[a]) / (p + q)).clamp(alpha[a], beta[a])
            })
            .collect()
    };
    let constraint = |xs: &[f64]| -> f64 {
        (0..n)
            .filter(|&a| ts.is_active(a))
            .map(|a| p1[a] / (state.upp[a] - xs[a]) + q1[a] / (xs[a] - state.low[a]))
            .sum::<f64>()
            - b
    };
    // the constraint carries an artificial slack priced at C_SLACK, so the
    // multiplier is capped there and the subproblem is always solvable
    let mut new_x = solve_x(0.0);
    if constraint(&new_x) > 0.0 {
        let capped = solve_x(C_SLACK);
        if constraint(&capped) > 0.0 {
            new_x = capped;
        } else {
            let (mut lo, mut hi) = (0.0, C_SLACK);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if constraint(&solve_x(mid)) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-14 * hi {
                    break;
                }
            }
            new_x = solve_x(hi);
        }
    }
    state.xold2 = state.xold1.take();
    state.xold1 = Some(xv.to_vec());
    Ok(x.with_values(new_x))
}

/// Runs the optimization loop, calling `observer` after every iteration.
pub fn run(problem: &Problem, config: &RunConfig, mut observer: impl FnMut(&IterationView)) -> Result<RunOutcome> {
    config.validate()?;
    let deps = DependencyTable::build(&problem.hierarchy, config.mode);
    let ts = &problem.transform;
    let total = problem.element_count() as f64;
    let target = config.volume_fraction * total;
    let sharp_n = ts.domain_element_count();
    let mut x = initialize_design(problem, config, &deps)?;
    let mut state = OptimizerState {
        iteration: 0,
        beta: config.beta.start,
        x: x.clone(),
        history: Vec::new(),
        termination: None,
    };
    let mut mma = MmaState::default();
    let mut moves = MoveLimits::new(x.len(), config.move_limit);
    let mut c_scale = None;
    let mut previous: Option<(f64, DensityField)> = None;
    let mut converged = None;

    for iter in 1..=config.max_iterations {
        let at = |e: Error| Error::AtIteration {
            iteration: iter,
            source: Box::new(e),
        };
        let beta = config.beta.at(iter);
        let params = config.params(beta);
        let eval = evaluate(&x, &params, &deps, ts, &problem.solver).map_err(at)?;
        let volume = ts.volume_of(&eval.design.filtered);
        // density change since the previous iteration; 1 (the largest possible) on the first
        let (change, settled) = match &previous {
            Some((b, rho)) => (eval.rho.max_abs_diff(rho), *b == beta && beta >= config.beta.max),
            None => (1.0, false),
        };
        let record = IterationRecord {
            iter,
            compliance: eval.compliance(),
            volume: volume / total,
            sharpness: sharpness(&eval.rho, sharp_n),
            change,
            beta,
        };
        state.history.push(record);
        state.iteration = iter;
        state.beta = beta;
        observer(&IterationView {
            record: &record,
            rho: &eval.rho,
            filtered: &eval.design.filtered,
        });
        if settled && change < config.tolerance {
            state.termination = Some(Termination::Converged);
            converged = Some(eval);
            break;
        }

        let grads = full_gradients(&x, &eval, &deps, ts, problem.model()).map_err(at)?;
        // the update is measured at the beta the new design will be evaluated with
        let next = config.params(config.beta.at(iter + 1));
        if next.beta != beta {
            // the volume moves with beta; shrunken limits could not follow it
            moves.reset();
        }
        let new_x = match config.method {
            Method::Oc => oc_update(
                &x,
                grads.compliance.values(),
                grads.volume.values(),
                target,
                moves.limits(),
                &next,
                &deps,
                ts,
            ),
            Method::Mma => {
                let scale = *c_scale.get_or_insert(eval.compliance().abs().max(f64::MIN_POSITIVE));
                mma_update(
                    &x,
                    grads.compliance.values(),
                    grads.volume.values(),
                    volume,
                    target,
                    scale,
                    config.move_limit,
                    ts,
                    &mut mma,
                )
            }
        }
        .map_err(at)?;
        if config.adaptive_move {
            moves.adapt(x.values(), new_x.values());
        }
        previous = Some((beta, eval.rho));
        x = new_x;
    }

    let eval = match converged {
        Some(eval) => eval,
        None => {
            state.termination = Some(Termination::IterationLimit);
            let params = config.params(config.beta.at(state.iteration + 1));
            evaluate(&x, &params, &deps, ts, &problem.solver)?
        }
    };
    state.x = x.clone();
    let volume = ts.volume_of(&eval.design.filtered);
    Ok(RunOutcome {
        x,
        compliance: eval.compliance(),
        volume_fraction: volume / total,
        sharpness: sharpness(&eval.rho, sharp_n),
        design: eval.design,
        rho: eval.rho,
        state,
    })
}
