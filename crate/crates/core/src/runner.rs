//! Job files, run drivers and exporters.
//!
//! A job is a TOML file with three tables:
//!
//! ```toml
//! [problem]
//! kind = "cantilever"      # cantilever | mbb | bracket | masked
//! n0 = [8, 4]
//! m = 5
//! kbar = 3                 # optional, at most m - 2
//! # mask = "domain.pgm"    # masked only, relative to the job file
//! # [[problem.supports]] / [[problem.loads]] replace the built-in ones
//!
//! [optimizer]
//! method = "oc"            # oc | mma | greedy
//! volume_fraction = 0.4    # or a list, or uniform_reference_level = 2
//! balanced = true
//!
//! [output]
//! dir = "out/cantilever"
//! snapshot_every = 20
//! ```
//!
//! Unknown keys are rejected. `QUADOPT_OUTPUT_DIR` overrides `output.dir`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::Spanned;

use crate::error::{Error, Result};
use crate::fea::{Material, SolverKind};
use crate::greedy::{greedy_optimize, BinaryQuadtree, GreedyOptions, GreedyOutcome};
use crate::hierarchy::{DependencyMode, DependencyTable, QuadtreeHierarchy};
use crate::mapping::{DensityField, DomainMask, Passive, TransformStack};
use crate::optimizer::{run, BetaSchedule, IterationRecord, Method, RunConfig, RunOutcome, Termination};
use crate::pgm::GrayImage;
use crate::problems::{
    make_bracket, make_cantilever, make_masked, make_mbb, robustness_sweep, uniform_reference, Edge, LoadSpec,
    Problem, ProblemSpec, SupportSpec, SweepResult,
};

/// Environment variable that replaces `output.dir`.
pub const OUTPUT_DIR_ENV: &str = "QUADOPT_OUTPUT_DIR";

/// Header of the convergence log.
pub const CSV_HEADER: &str = "iter,compliance,volume,sharpness,change,beta";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Driver {
    Continuous(Method),
    Greedy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VolumeTarget {
    Fractions(Vec<f64>),
    /// The volume fraction of every cell refined through this level.
    UniformReference(usize),
}

/// A parsed job file.
#[derive(Debug, Clone)]
pub struct Job {
    pub problem: ProblemSpec,
    pub run: RunConfig,
    pub driver: Driver,
    pub target: VolumeTarget,
    pub greedy: GreedyOptions,
    pub output_dir: PathBuf,
    pub snapshot_every: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJob {
    problem: RawProblem,
    #[serde(default)]
    optimizer: RawOptimizer,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Cantilever,
    Mbb,
    Bracket,
    Masked,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    kind: Spanned<Kind>,
    n0: Option<Spanned<[usize; 2]>>,
    m: Option<Spanned<u32>>,
    kbar: Option<Spanned<usize>>,
    mask: Option<Spanned<PathBuf>>,
    #[serde(default)]
    solver: RawSolver,
    supports: Option<Vec<RawSupport>>,
    loads: Option<Vec<RawLoad>>,
}

#[derive(Deserialize, Default, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum RawSolver {
    #[default]
    Direct,
    Pcg,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum RawEdge {
    Left,
    Right,
    Top,
    Bottom,
}

impl From<RawEdge> for Edge {
    fn from(e: RawEdge) -> Self {
        match e {
            RawEdge::Left => Edge::Left,
            RawEdge::Right => Edge::Right,
            RawEdge::Top => Edge::Top,
            RawEdge::Bottom => Edge::Bottom,
        }
    }
}

/// A whole edge when `position` is absent, otherwise the node at that
/// fraction along it.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSupport {
    edge: RawEdge,
    position: Option<f64>,
    #[serde(default)]
    fix_x: bool,
    #[serde(default)]
    fix_y: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoad {
    edge: RawEdge,
    position: f64,
    #[serde(default)]
    fx: f64,
    #[serde(default)]
    fy: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Deserialize, Clone, Copy, Default)]
#[serde(rename_all = "lowercase")]
enum RawMethod {
    #[default]
    Oc,
    Mma,
    Greedy,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOptimizer {
    #[serde(default)]
    method: RawMethod,
    volume_fraction: Option<Spanned<OneOrMany>>,
    uniform_reference_level: Option<Spanned<usize>>,
    refinement_filter: Option<bool>,
    balanced: Option<bool>,
    penalty: Option<f64>,
    p_norm: Option<f64>,
    eta: Option<f64>,
    beta_start: Option<f64>,
    beta_max: Option<f64>,
    beta_interval: Option<usize>,
    max_iterations: Option<usize>,
    tolerance: Option<f64>,
    move_limit: Option<f64>,
    adaptive_move: Option<bool>,
    initial_value: Option<f64>,
    refine_step: Option<f64>,
    coarsen_step: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    #[serde(default = "default_dir")]
    dir: PathBuf,
    #[serde(default = "default_snapshot_every")]
    snapshot_every: usize,
}

impl Default for RawOutput {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            snapshot_every: default_snapshot_every(),
        }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_snapshot_every() -> usize {
    20
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn config_error<T>(src: &str, span: std::ops::Range<usize>, message: impl Into<String>) -> Result<T> {
    Err(Error::Config {
        line: line_of(src, span.start),
        message: message.into(),
    })
}

/// Parses a job. Relative paths inside it resolve against `base`.
pub fn parse_job(src: &str, base: &Path) -> Result<Job> {
    let raw: RawJob = toml::from_str(src).map_err(|e| Error::Config {
        line: e.span().map_or(0, |s| line_of(src, s.start)),
        message: e.message().to_string(),
    })?;
    let p = raw.problem;
    let o = raw.optimizer;
    let kind = *p.kind.get_ref();

    let (default_n0, default_m) = match kind {
        Kind::Cantilever => ((8, 4), 5),
        Kind::Mbb => ((12, 4), 5),
        Kind::Bracket => ((6, 4), 5),
        Kind::Masked => ((0, 0), 5),
    };
    let n0 = match &p.n0 {
        Some(s) => {
            let [a, b] = *s.get_ref();
            if a == 0 || b == 0 {
                return config_error(src, s.span(), "n0 entries must be positive");
            }
            (a, b)
        }
        None if kind == Kind::Masked => return config_error(src, p.kind.span(), "a masked problem needs n0"),
        None => default_n0,
    };
    let m = p.m.as_ref().map_or(default_m, |s| *s.get_ref());
    if m < 3 {
        let span = p.m.as_ref().map_or(p.kind.span(), |s| s.span());
        return config_error(src, span, format!("m = {m} leaves no refinement level (need m >= 3)"));
    }

    let mut spec = match kind {
        Kind::Cantilever => make_cantilever(n0, m),
        Kind::Mbb => make_mbb(n0, m),
        Kind::Bracket => make_bracket(n0, m)?,
        Kind::Masked => {
            let Some(mask) = &p.mask else {
                return config_error(src, p.kind.span(), "a masked problem needs `mask`");
            };
            if p.supports.is_none() || p.loads.is_none() {
                return config_error(src, p.kind.span(), "a masked problem needs supports and loads");
            }
            let path = base.join(mask.get_ref());
            let mask = DomainMask::read_pgm(&path)?;
            make_masked(mask, n0, m, Vec::new(), Vec::new())?
        }
    };
    if p.mask.is_some() && kind != Kind::Masked {
        return config_error(src, p.mask.as_ref().unwrap().span(), "`mask` only applies to kind = \"masked\"");
    }
    if let Some(k) = &p.kbar {
        let kbar = *k.get_ref();
        if kbar == 0 || kbar > m as usize - 2 {
            return config_error(src, k.span(), format!("kbar = {kbar} outside 1..={}", m - 2));
        }
        spec.kbar = Some(kbar);
    }
    if let Some(s) = p.supports {
        spec.supports = s
            .into_iter()
            .map(|s| match s.position {
                None => SupportSpec::Edge {
                    edge: s.edge.into(),
                    fix_x: s.fix_x,
                    fix_y: s.fix_y,
                },
                Some(position) => SupportSpec::Point {
                    edge: s.edge.into(),
                    position,
                    fix_x: s.fix_x,
                    fix_y: s.fix_y,
                },
            })
            .collect();
    }
    if let Some(l) = p.loads {
        spec.loads = l
            .into_iter()
            .map(|l| LoadSpec {
                edge: l.edge.into(),
                position: l.position,
                fx: l.fx,
                fy: l.fy,
            })
            .collect();
    }
    spec.solver = match p.solver {
        RawSolver::Direct => SolverKind::Direct,
        RawSolver::Pcg => SolverKind::pcg(),
    };
    spec.material = Material {
        penalty: o.penalty.unwrap_or(Material::default().penalty),
        ..Material::default()
    };

    let defaults = RunConfig::default();
    let beta_defaults = BetaSchedule::default();
    let mode = match (o.refinement_filter.unwrap_or(true), o.balanced.unwrap_or(true)) {
        (false, _) => DependencyMode::None,
        (true, false) => DependencyMode::Unbalanced,
        (true, true) => DependencyMode::Balanced,
    };
    let target = match (&o.volume_fraction, &o.uniform_reference_level) {
        (Some(_), Some(r)) => {
            return config_error(src, r.span(), "give either volume_fraction or uniform_reference_level");
        }
        (Some(v), None) => {
            let list = match v.get_ref() {
                OneOrMany::One(x) => vec![*x],
                OneOrMany::Many(xs) => xs.clone(),
            };
            if list.is_empty() || list.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
                return config_error(src, v.span(), "volume fractions must lie in (0, 1)");
            }
            VolumeTarget::Fractions(list)
        }
        (None, Some(r)) => {
            let level = *r.get_ref();
            let finest = spec.kbar.unwrap_or(m as usize - 2);
            if level == 0 || level > finest {
                return config_error(src, r.span(), format!("uniform_reference_level {level} outside 1..={finest}"));
            }
            VolumeTarget::UniformReference(level)
        }
        (None, None) => VolumeTarget::Fractions(vec![defaults.volume_fraction]),
    };
    let driver = match o.method {
        RawMethod::Oc => Driver::Continuous(Method::Oc),
        RawMethod::Mma => Driver::Continuous(Method::Mma),
        RawMethod::Greedy => Driver::Greedy,
    };
    let run = RunConfig {
        volume_fraction: match &target {
            VolumeTarget::Fractions(v) => v[0],
            VolumeTarget::UniformReference(_) => defaults.volume_fraction,
        },
        mode,
        method: match driver {
            Driver::Continuous(m) => m,
            Driver::Greedy => Method::Oc,
        },
        max_iterations: o.max_iterations.unwrap_or(defaults.max_iterations),
        tolerance: o.tolerance.unwrap_or(defaults.tolerance),
        beta: BetaSchedule {
            start: o.beta_start.unwrap_or(beta_defaults.start),
            max: o.beta_max.unwrap_or(beta_defaults.max),
            interval: o.beta_interval.unwrap_or(beta_defaults.interval),
        },
        p_norm: o.p_norm.unwrap_or(defaults.p_norm),
        eta: o.eta.unwrap_or(defaults.eta),
        move_limit: o.move_limit.unwrap_or(defaults.move_limit),
        adaptive_move: o.adaptive_move.unwrap_or(defaults.adaptive_move),
        initial_value: o.initial_value,
    };
    run.validate().map_err(|e| Error::Config {
        line: 0,
        message: e.to_string(),
    })?;
    spec.material.validate().map_err(|e| Error::Config {
        line: 0,
        message: e.to_string(),
    })?;
    let greedy_defaults = GreedyOptions::default();
    let greedy = GreedyOptions {
        refine_step: o.refine_step.unwrap_or(greedy_defaults.refine_step),
        coarsen_step: o.coarsen_step.unwrap_or(greedy_defaults.coarsen_step),
        max_iterations: o.max_iterations.unwrap_or(greedy_defaults.max_iterations),
    };
    if raw.output.snapshot_every == 0 {
        return Err(Error::Config {
            line: 0,
            message: "output.snapshot_every must be positive".into(),
        });
    }
    let output_dir = match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) => PathBuf::from(dir),
        None => base.join(&raw.output.dir),
    };
    Ok(Job {
        problem: spec,
        run,
        driver,
        target,
        greedy,
        output_dir,
        snapshot_every: raw.output.snapshot_every,
    })
}

/// Reads and parses a job file.
pub fn load_job(path: &Path) -> Result<Job> {
    let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_job(&src, base)
}

impl Job {
    pub fn build_problem(&self) -> Result<Problem> {
        Problem::build(self.problem.clone())
    }

    /// Target volume fractions, resolving a uniform reference against `problem`.
    pub fn volume_fractions(&self, problem: &Problem) -> Result<Vec<f64>> {
        match &self.target {
            VolumeTarget::Fractions(v) => Ok(v.clone()),
            VolumeTarget::UniformReference(r) => Ok(vec![uniform_reference(problem, *r)?.1]),
        }
    }
}

/// Summary of one finished run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub volume_fraction: f64,
    pub compliance: f64,
    pub achieved_volume: f64,
    pub iterations: usize,
    pub converged: bool,
    pub dir: PathBuf,
}

fn run_dir(job: &Job, fractions: &[f64], v: f64) -> PathBuf {
    if fractions.len() == 1 {
        job.output_dir.clone()
    } else {
        job.output_dir.join(format!("vf{v:.3}"))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Runs the continuous optimizer and writes snapshots every
/// `snapshot_every` iterations, the final density, the convergence log, the
/// thresholded quadtree and its SVG drawing into `dir`.
pub fn optimize_to_dir(problem: &Problem, config: &RunConfig, dir: &Path, snapshot_every: usize) -> Result<RunOutcome> {
    create_dir(dir)?;
    let mut failure = None;
    let outcome = run(problem, config, |view| {
        if failure.is_none() && view.record.iter % snapshot_every.max(1) == 0 {
            let path = dir.join(format!("snapshot_{:04}.pgm", view.record.iter));
            if let Err(e) = export_density_snapshot(view.rho, &path) {
                failure = Some(e);
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    export_density_snapshot(&outcome.rho, &dir.join("final.pgm"))?;
    export_convergence_csv(&outcome.state.history, &dir.join("history.csv"))?;
    let deps = DependencyTable::build(&problem.hierarchy, config.mode);
    let tree = BinaryQuadtree::from_filtered(&outcome.design.filtered, &deps, 0.5);
    export_quadtree(&tree, &problem.hierarchy, &dir.join("quadtree.txt"))?;
    write_file(&dir.join("structure.svg"), svg_edges(&tree, &problem.hierarchy, &problem.transform))?;
    Ok(outcome)
}

/// Runs the greedy baseline and writes the binary density, its history,
/// quadtree and SVG drawing into `dir`.
pub fn greedy_to_dir(problem: &Problem, volume_fraction: f64, opts: &GreedyOptions, dir: &Path) -> Result<GreedyOutcome> {
    create_dir(dir)?;
    let out = greedy_optimize(problem, volume_fraction, opts)?;
    let rho = out.tree.density(&problem.hierarchy, &problem.transform);
    export_density_snapshot(&rho, &dir.join("final.pgm"))?;
    let mut csv = String::from("iter,compliance,volume\n");
    for r in &out.history {
        let _ = writeln!(csv, "{},{},{}", r.iteration, r.compliance, r.volume);
    }
    write_file(&dir.join("history.csv"), csv)?;
    export_quadtree(&out.tree, &problem.hierarchy, &dir.join("quadtree.txt"))?;
    write_file(&dir.join("structure.svg"), svg_edges(&out.tree, &problem.hierarchy, &problem.transform))?;
    Ok(out)
}

/// Runs `job` at each of its volume fractions. `snapshot_every` overrides the
/// job's cadence.
pub fn execute(job: &Job, snapshot_every: Option<usize>) -> Result<Vec<RunSummary>> {
    let problem = job.build_problem()?;
    let fractions = job.volume_fractions(&problem)?;
    let every = snapshot_every.unwrap_or(job.snapshot_every);
    let mut out = Vec::new();
    for &v in &fractions {
        let dir = run_dir(job, &fractions, v);
        let summary = match job.driver {
            Driver::Continuous(_) => {
                let config = RunConfig {
                    volume_fraction: v,
                    ..job.run.clone()
                };
                let o = optimize_to_dir(&problem, &config, &dir, every)?;
                RunSummary {
                    volume_fraction: v,
                    compliance: o.compliance,
                    achieved_volume: o.volume_fraction,
                    iterations: o.state.iteration,
                    converged: o.state.termination == Some(Termination::Converged),
                    dir,
                }
            }
            Driver::Greedy => {
                let o = greedy_to_dir(&problem, v, &job.greedy, &dir)?;
                RunSummary {
                    volume_fraction: v,
                    compliance: o.compliance,
                    achieved_volume: o.volume_fraction,
                    iterations: o.iterations,
                    converged: o.converged,
                    dir,
                }
            }
        };
        out.push(summary);
    }
    Ok(out)
}

/// One row of a comparison: the same volume fraction under two jobs.
#[derive(Debug, Clone)]
pub struct CompareRow {
    pub volume_fraction: f64,
    pub first: RunSummary,
    pub second: RunSummary,
}

/// Runs both jobs and pairs their results by volume fraction.
pub fn compare(a: &Job, b: &Job, snapshot_every: Option<usize>) -> Result<Vec<CompareRow>> {
    let ra = execute(a, snapshot_every)?;
    let rb = execute(b, snapshot_every)?;
    if ra.len() != rb.len() {
        return Err(Error::Format {
            what: "comparison",
            message: format!("{} volume fractions against {}", ra.len(), rb.len()),
        });
    }
    Ok(ra
        .into_iter()
        .zip(rb)
        .map(|(first, second)| CompareRow {
            volume_fraction: first.volume_fraction,
            first,
            second,
        })
        .collect())
}

/// Plain-text table of a comparison.
pub fn compare_table(rows: &[CompareRow]) -> String {
    let mut s = String::from("volume  compliance_a  compliance_b  b/a\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<6.3}  {:>12.4}  {:>12.4}  {:.4}",
            r.volume_fraction,
            r.first.compliance,
            r.second.compliance,
            r.second.compliance / r.first.compliance
        );
    }
    s
}

/// Robustness sweep of a density snapshot, written as `position,compliance`.
pub fn sweep_design(problem: &Problem, design: &Path, count: usize, out: Option<&Path>) -> Result<SweepResult> {
    let img = GrayImage::read(design)?;
    let (nelx, nely) = problem.hierarchy.element_resolution();
    if (img.width, img.height) != (nelx, nely) {
        return Err(Error::MaskMismatch {
            expected: (nelx, nely),
            got: (img.width, img.height),
        });
    }
    let rho = DensityField::from_image(&img);
    let result = robustness_sweep(problem, &rho, count)?;
    if let Some(path) = out {
        let mut csv = String::from("position,compliance\n");
        for (p, c) in result.positions.iter().zip(&result.compliance) {
            let _ = writeln!(csv, "{p},{c}");
        }
        write_file(path, csv)?;
    }
    Ok(result)
}

/// 8-bit P5 image of `rho`, 255 = solid, first row = top edge.
pub fn export_density_snapshot(rho: &DensityField, path: &Path) -> Result<()> {
    rho.to_image().write(path)
}

pub fn convergence_csv(records: &[IterationRecord]) -> String {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.iter, r.compliance, r.volume, r.sharpness, r.change, r.beta
        );
    }
    s
}

pub fn export_convergence_csv(records: &[IterationRecord], path: &Path) -> Result<()> {
    write_file(path, convergence_csv(records))
}

fn coarse_grid(h: &QuadtreeHierarchy) -> (usize, usize) {
    h.level_resolution(1).expect("every hierarchy has level 1")
}

/// Text listing of a binary quadtree: a header with the coarse grid and the
/// number of levels, then one line per level with the row-major indices of
/// its refined cells.
///
/// ```text
/// quadtree 8 4 3
/// level 1: 0 1 2 9
/// level 2:
/// level 3:
/// ```
pub fn quadtree_text(tree: &BinaryQuadtree, h: &QuadtreeHierarchy) -> String {
    let (n0x, n0y) = coarse_grid(h);
    let mut s = format!("quadtree {n0x} {n0y} {}\n", h.max_level());
    for k in 1..=h.max_level() {
        let range = h.level_range(k);
        let start = range.start;
        let _ = write!(s, "level {k}:");
        for g in range.filter(|&g| tree.is_refined(g)) {
            let _ = write!(s, " {}", g - start);
        }
        s.push('\n');
    }
    s
}

pub fn parse_quadtree(text: &str, h: &QuadtreeHierarchy) -> Result<BinaryQuadtree> {
    let bad = |message: String| Error::Format {
        what: "quadtree",
        message,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file".into()))?.split_whitespace().collect();
    let expected = {
        let (a, b) = coarse_grid(h);
        vec!["quadtree".to_string(), a.to_string(), b.to_string(), h.max_level().to_string()]
    };
    if header != expected {
        return Err(bad(format!("header {:?} does not match the hierarchy {:?}", header, expected)));
    }
    let mut flags = vec![false; h.total_cells()];
    let mut seen = vec![false; h.max_level() + 1];
    for line in lines {
        let (head, rest) = line.split_once(':').ok_or_else(|| bad(format!("expected `level k: ...`, got {line:?}")))?;
        let k: usize = head
            .trim()
            .strip_prefix("level")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad(format!("bad level label {head:?}")))?;
        if k == 0 || k > h.max_level() || seen[k] {
            return Err(bad(format!("unexpected or repeated level {k}")));
        }
        seen[k] = true;
        let range = h.level_range(k);
        for tok in rest.split_whitespace() {
            let i: usize = tok.parse().map_err(|_| bad(format!("bad index {tok:?}")))?;
            if i >= range.len() {
                return Err(bad(format!("index {i} outside level {k}")));
            }
            flags[range.start + i] = true;
        }
    }
    BinaryQuadtree::from_flags(h, flags)
}

pub fn export_quadtree(tree: &BinaryQuadtree, h: &QuadtreeHierarchy, path: &Path) -> Result<()> {
    write_file(path, quadtree_text(tree, h))
}

pub fn import_quadtree(path: &Path, h: &QuadtreeHierarchy) -> Result<BinaryQuadtree> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_quadtree(&text, h)
}

/// SVG line drawing of a binary quadtree in element units: the outline of
/// every coarse cell that touches the domain and the two midlines of every
/// refined cell.
pub fn svg_edges(tree: &BinaryQuadtree, h: &QuadtreeHierarchy, ts: &TransformStack) -> String {
    let (nelx, nely) = h.element_resolution();
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {nelx} {nely}\" width=\"{}\" height=\"{}\">\n\
         <g stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n",
        nelx * 2,
        nely * 2
    );
    let touches = |x0: usize, y0: usize, side: usize| {
        (y0..y0 + side).any(|ey| (x0..x0 + side).any(|ex| ts.passive(ey * nelx + ex) != Passive::Void))
    };
    for g in h.level_range(1) {
        let (x0, y0, side) = h.cell_rect(h.cell(g));
        if touches(x0, y0, side) {
            let _ = writeln!(s, "<rect x=\"{x0}\" y=\"{y0}\" width=\"{side}\" height=\"{side}\"/>");
        }
    }
    for g in 0..h.total_cells() {
        if !tree.is_refined(g) {
            continue;
        }
        let (x0, y0, side) = h.cell_rect(h.cell(g));
        let half = side / 2;
        let _ = writeln!(
            s,
            "<line x1=\"{}\" y1=\"{y0}\" x2=\"{}\" y2=\"{}\"/>",
            x0 + half,
            x0 + half,
            y0 + side
        );
        let _ = writeln!(
            s,
            "<line x1=\"{x0}\" y1=\"{}\" x2=\"{}\" y2=\"{}\"/>",
            y0 + half,
            x0 + side,
            y0 + half
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(src: &str) -> Result<Job> {
        parse_job(src, Path::new("/tmp"))
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let job = parse("[problem]\nkind = \"cantilever\"\n").unwrap();
        assert_eq!(job.problem.n0, (8, 4));
        assert_eq!(job.problem.material.penalty, 3.0);
        assert_eq!(job.run.p_norm, -16.0);
        assert_eq!(job.run.eta, 0.5);
        assert_eq!(job.run.beta.max, 32.0);
        assert_eq!(job.run.mode, DependencyMode::Balanced);
        assert_eq!(job.target, VolumeTarget::Fractions(vec![0.4]));
        assert_eq!(job.snapshot_every, 20);
    }

    #[test]
    fn kbar_above_limit_is_rejected_with_its_line() {
        let err = parse("[problem]\nkind = \"mbb\"\nm = 5\nkbar = 4\n").unwrap_err();
        match err {
            Error::Config { line, message } => {
                assert_eq!(line, 4);
                assert!(message.contains("kbar"), "{message}");
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let err = parse("[problem]\nkind = \"mbb\"\n\n[optimizer]\nvolume = 0.3\n").unwrap_err();
        match err {
            Error::Config { line, message } => {
                assert_eq!(line, 5);
                assert!(message.contains("volume"), "{message}");
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn flags_select_the_dependency_mode() {
        let job = |extra: &str| parse(&format!("[problem]\nkind = \"cantilever\"\n[optimizer]\n{extra}")).unwrap();
        assert_eq!(job("balanced = false\n").run.mode, DependencyMode::Unbalanced);
        assert_eq!(job("refinement_filter = false\n").run.mode, DependencyMode::None);
        assert_eq!(job("").run.mode, DependencyMode::Balanced);
    }

    #[test]
    fn volume_lists_and_references() {
        let job = parse("[problem]\nkind = \"mbb\"\n[optimizer]\nvolume_fraction = [0.2, 0.3]\nmethod = \"greedy\"\n").unwrap();
        assert_eq!(job.target, VolumeTarget::Fractions(vec![0.2, 0.3]));
        assert_eq!(job.driver, Driver::Greedy);
        let job = parse("[problem]\nkind = \"bracket\"\n[optimizer]\nuniform_reference_level = 2\n").unwrap();
        assert_eq!(job.target, VolumeTarget::UniformReference(2));
        assert!(parse("[problem]\nkind = \"mbb\"\n[optimizer]\nvolume_fraction = 1.5\n").is_err());
        assert!(parse("[problem]\nkind = \"mbb\"\n[optimizer]\nuniform_reference_level = 4\n").is_err());
    }

    #[test]
    fn masked_needs_its_inputs() {
        assert!(parse("[problem]\nkind = \"masked\"\nn0 = [2, 1]\n").is_err());
        assert!(parse("[problem]\nkind = \"cantilever\"\nmask = \"a.pgm\"\n").is_err());
    }

    #[test]
    fn quadtree_text_round_trips() {
        let h = QuadtreeHierarchy::new(3, 2, 5).unwrap();
        let mut tree = BinaryQuadtree::uniform(&h, 1);
        tree.set(h.level_range(2).start + 5, true);
        let text = quadtree_text(&tree, &h);
        assert!(text.starts_with("quadtree 3 2 3\nlevel 1: 0 1 2 3 4 5\nlevel 2: 5\n"));
        assert_eq!(parse_quadtree(&text, &h).unwrap(), tree);
        assert!(parse_quadtree("quadtree 2 2 3\n", &h).is_err());
        assert!(parse_quadtree("quadtree 3 2 3\nlevel 1: 6\n", &h).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let r = IterationRecord {
            iter: 1,
            compliance: 2.5,
            volume: 0.4,
            sharpness: 0.5,
            change: 1.0,
            beta: 1.0,
        };
        let csv = convergence_csv(&[r, IterationRecord { iter: 2, ..r }]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines, ["iter,compliance,volume,sharpness,change,beta", "1,2.5,0.4,0.5,1,1", "2,2.5,0.4,0.5,1,1"]);
    }
}
