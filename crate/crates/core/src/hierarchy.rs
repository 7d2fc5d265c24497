//! Quadtree level arithmetic and refinement dependency tables.
//!
//! Levels are numbered `1..=max_level` with level 1 equal to the coarse grid.
//! Cell indices `(i, j)` are zero-based, `i` along x (columns) and `j` along y
//! (rows, top to bottom). Every cell of every level also has a *global* index:
//! levels are concatenated in increasing order, cells within a level are
//! row-major.

use crate::error::{Error, Result};

/// A cell on a refinement level, with zero-based in-level indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId {
    pub level: usize,
    pub i: usize,
    pub j: usize,
}

impl CellId {
    pub fn new(level: usize, i: usize, j: usize) -> Self {
        Self { level, i, j }
    }

    /// The cell this one was created from, or `None` on level 1.
    pub fn parent(&self) -> Option<CellId> {
        (self.level > 1).then(|| CellId::new(self.level - 1, self.i / 2, self.j / 2))
    }
}

/// Parent index in one-based numbering: `h(i, -1) = floor((i + 1) / 2)`.
///
/// The zero-based equivalent used internally is `i / 2`.
pub fn parent_index(i: usize) -> usize {
    assert!(i >= 1, "parent_index uses one-based indices");
    (i + 1) / 2
}

/// Resolution bookkeeping for a multi-level quadtree over a coarse grid of
/// `n0x × n0y` cells, each backed by a `2^m × 2^m` block of finite elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadtreeHierarchy {
    n0x: usize,
    n0y: usize,
    m: u32,
    max_level: usize,
    offsets: Vec<usize>,
}

impl QuadtreeHierarchy {
    /// Hierarchy with the deepest admissible refinement, `m - 2` levels.
    pub fn new(n0x: usize, n0y: usize, m: u32) -> Result<Self> {
        if m < 3 {
            return Err(Error::InvalidHierarchy(format!(
                "block exponent m = {m} must be at least 3"
            )));
        }
        Self::with_max_level(n0x, n0y, m, (m - 2) as usize)
    }

    /// Hierarchy truncated to `max_level` refinement levels (`1 ≤ max_level ≤ m - 2`).
    pub fn with_max_level(n0x: usize, n0y: usize, m: u32, max_level: usize) -> Result<Self> {
        if n0x == 0 || n0y == 0 {
            return Err(Error::InvalidHierarchy(format!(
                "coarse grid {n0x}x{n0y} must be non-empty"
            )));
        }
        if m < 3 {
            return Err(Error::InvalidHierarchy(format!(
                "block exponent m = {m} must be at least 3"
            )));
        }
        if m > 12 {
            return Err(Error::InvalidHierarchy(format!(
                "block exponent m = {m} is unreasonably large"
            )));
        }
        let deepest = (m - 2) as usize;
        if max_level == 0 || max_level > deepest {
            return Err(Error::InvalidHierarchy(format!(
                "maximum refinement level {max_level} must lie in 1..={deepest} for m = {m}"
            )));
        }
        let mut offsets = Vec::with_capacity(max_level + 1);
        offsets.push(0);
        for k in 1..=max_level {
            let scale = 1usize << (k - 1);
            let last = *offsets.last().unwrap();
            offsets.push(last + scale * n0x * scale * n0y);
        }
        Ok(Self {
            n0x,
            n0y,
            m,
            max_level,
            offsets,
        })
    }

    pub fn coarse_resolution(&self) -> (usize, usize) {
        (self.n0x, self.n0y)
    }

    pub fn block_exponent(&self) -> u32 {
        self.m
    }

    /// Elements along one side of a coarse block.
    pub fn block_size(&self) -> usize {
        1 << self.m
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    /// `(2^(k-1)·n0x, 2^(k-1)·n0y)`.
    pub fn level_resolution(&self, k: usize) -> Result<(usize, usize)> {
        self.check_level(k)?;
        Ok(self.res(k))
    }

    fn res(&self, k: usize) -> (usize, usize) {
        let scale = 1usize << (k - 1);
        (scale * self.n0x, scale * self.n0y)
    }

    pub fn element_resolution(&self) -> (usize, usize) {
        (self.n0x << self.m, self.n0y << self.m)
    }

    pub fn element_count(&self) -> usize {
        let (nx, ny) = self.element_resolution();
        nx * ny
    }

    /// Side length in elements of a cell on level `k` (level 0 = coarse block).
    pub fn cell_size(&self, k: usize) -> usize {
        1 << (self.m as usize + 1 - k.max(1))
    }

    pub fn cell_count(&self, k: usize) -> usize {
        self.offsets[k] - self.offsets[k - 1]
    }

    pub fn total_cells(&self) -> usize {
        self.offsets[self.max_level]
    }

    /// Global index range of level `k`.
    pub fn level_range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k - 1]..self.offsets[k]
    }

    pub fn global_index(&self, cell: CellId) -> usize {
        let (nx, _) = self.res(cell.level);
        self.offsets[cell.level - 1] + cell.j * nx + cell.i
    }

    pub fn cell(&self, global: usize) -> CellId {
        let level = self.offsets.partition_point(|&o| o <= global);
        let local = global - self.offsets[level - 1];
        let (nx, _) = self.res(level);
        CellId::new(level, local % nx, local / nx)
    }

    pub fn contains(&self, cell: CellId) -> bool {
        if cell.level == 0 || cell.level > self.max_level {
            return false;
        }
        let (nx, ny) = self.res(cell.level);
        cell.i < nx && cell.j < ny
    }

    /// Element rectangle `(x0, y0, side)` covered by a cell.
    pub fn cell_rect(&self, cell: CellId) -> (usize, usize, usize) {
        let side = self.cell_size(cell.level);
        (cell.i * side, cell.j * side, side)
    }

    fn check_level(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.max_level {
            Err(Error::InvalidLevel {
                level: k,
                max_level: self.max_level,
            })
        } else {
            Ok(())
        }
    }
}

/// How refinement of a cell depends on coarser cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DependencyMode {
    /// No dependency: every cell is refined independently.
    None,
    /// A cell depends on its ancestor chain.
    #[default]
    Unbalanced,
    /// A cell additionally depends on the neighbours of its parent,
    /// recursively, so adjacent leaves differ by at most one level.
    Balanced,
}

/// Flattened, deduplicated refinement dependencies for every cell, plus the
/// transposed relation (which cells depend on a given cell).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyTable {
    mode: DependencyMode,
    dep_offsets: Vec<usize>,
    deps: Vec<usize>,
    rev_offsets: Vec<usize>,
    rev: Vec<usize>,
}

impl DependencyTable {
    pub fn build(h: &QuadtreeHierarchy, mode: DependencyMode) -> Self {
        let total = h.total_cells();
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); total];

        if mode != DependencyMode::None {
            for k in 2..=h.max_level() {
                let (px, py) = h.res(k - 1);
                for g in h.level_range(k) {
                    let parent = h.cell(g).parent().unwrap();
                    let mut sources = vec![parent];
                    if mode == DependencyMode::Balanced {
                        for dj in -1i64..=1 {
                            for di in -1i64..=1 {
                                if di == 0 && dj == 0 {
                                    continue;
                                }
                                let ni = parent.i as i64 + di;
                                let nj = parent.j as i64 + dj;
                                if ni >= 0 && nj >= 0 && (ni as usize) < px && (nj as usize) < py {
                                    sources.push(CellId::new(k - 1, ni as usize, nj as usize));
                                }
                            }
                        }
                    }
                    let mut list = Vec::new();
                    for s in sources {
                        let sg = h.global_index(s);
                        list.push(sg);
                        list.extend_from_slice(&lists[sg]);
                    }
                    // Nearest level first, row-major within a level. Global
                    // indices increase with level, so sort descending by the
                    // level offset and ascending inside it.
                    list.sort_unstable_by_key(|&c| (std::cmp::Reverse(h.cell(c).level), c));
                    list.dedup();
                    lists[g] = list;
                }
            }
        }

        let mut dep_offsets = Vec::with_capacity(total + 1);
        dep_offsets.push(0);
        let mut deps = Vec::new();
        for l in &lists {
            deps.extend_from_slice(l);
            dep_offsets.push(deps.len());
        }

        let mut counts = vec![0usize; total];
        for &d in &deps {
            counts[d] += 1;
        }
        let mut rev_offsets = Vec::with_capacity(total + 1);
        rev_offsets.push(0);
        for c in &counts {
            rev_offsets.push(rev_offsets.last().unwrap() + c);
        }
        let mut fill = rev_offsets.clone();
        let mut rev = vec![0usize; deps.len()];
        for (g, l) in lists.iter().enumerate() {
            for &d in l {
                rev[fill[d]] = g;
                fill[d] += 1;
            }
        }

        Self {
            mode,
            dep_offsets,
            deps,
            rev_offsets,
            rev,
        }
    }

    pub fn mode(&self) -> DependencyMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.dep_offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Global indices the refinement of `global` depends on (excluding itself).
    pub fn deps(&self, global: usize) -> &[usize] {
        &self.deps[self.dep_offsets[global]..self.dep_offsets[global + 1]]
    }

    /// Global indices whose dependency list contains `global`, ascending.
    pub fn dependents(&self, global: usize) -> &[usize] {
        &self.rev[self.rev_offsets[global]..self.rev_offsets[global + 1]]
    }

    pub fn deps_of(&self, h: &QuadtreeHierarchy, cell: CellId) -> Vec<CellId> {
        self.deps(h.global_index(cell))
            .iter()
            .map(|&g| h.cell(g))
            .collect()
    }
}
