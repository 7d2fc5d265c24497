//! Element-assignment transforms from quadtree cells to finite elements.
//!
//! Geometry, in elements, for a cell of side `L` whose top-left element is
//! `(x0, y0)`:
//!
//! * level 0 (coarse frame): the outer one-element ring of every coarse block,
//!   so walls between neighbouring blocks are two elements thick;
//! * level `k ≥ 1`: a two-element-thick plus shape on the cell midlines
//!   (columns/rows `x0 + L/2 - 1` and `x0 + L/2`), clipped to the
//!   `(L-2) × (L-2)` interior inside the cell's one-element ring.
//!
//! Elements are indexed row-major, `e = ey * nelx + ex`, with `ey = 0` on top.

use std::path::Path;

use crate::error::{Error, Result};
use crate::filters::DesignField;
use crate::hierarchy::QuadtreeHierarchy;
use crate::pgm::GrayImage;

/// Binary element mask of a (possibly curved) design domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainMask {
    pub nelx: usize,
    pub nely: usize,
    inside: Vec<bool>,
}

impl DomainMask {
    pub fn new(nelx: usize, nely: usize, inside: Vec<bool>) -> Result<Self> {
        if inside.len() != nelx * nely {
            return Err(Error::MaskMismatch {
                expected: (nelx, nely),
                got: (inside.len(), 1),
            });
        }
        Ok(Self { nelx, nely, inside })
    }

    pub fn from_fn(nelx: usize, nely: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let inside = (0..nely)
            .flat_map(|ey| (0..nelx).map(move |ex| (ex, ey)))
            .map(|(ex, ey)| f(ex, ey))
            .collect();
        Self { nelx, nely, inside }
    }

    /// White (≥ 128) pixels are inside the domain.
    pub fn from_image(img: &GrayImage) -> Self {
        Self {
            nelx: img.width,
            nely: img.height,
            inside: img.pixels.iter().map(|&p| p >= 128).collect(),
        }
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            width: self.nelx,
            height: self.nely,
            pixels: self.inside.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        Ok(Self::from_image(&GrayImage::read(path)?))
    }

    pub fn is_inside(&self, ex: usize, ey: usize) -> bool {
        self.inside[ey * self.nelx + ex]
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    pub fn interior_count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }
}

/// Fixed density class of an element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Passive {
    Free,
    Solid,
    Void,
}

/// Per-level painting lists plus passive element sets.
#[derive(Debug, Clone)]
pub struct TransformStack {
    nelx: usize,
    nely: usize,
    frame_offsets: Vec<usize>,
    frame: Vec<u32>,
    cell_offsets: Vec<usize>,
    cells: Vec<u32>,
    passive: Vec<Passive>,
    passive_solid: Vec<u32>,
    passive_void: Vec<u32>,
    active: Vec<bool>,
    fixed_volume: f64,
}

fn ring(nelx: usize, x0: usize, y0: usize, side: usize, out: &mut Vec<u32>) {
    for ey in y0..y0 + side {
        for ex in x0..x0 + side {
            if ex == x0 || ey == y0 || ex == x0 + side - 1 || ey == y0 + side - 1 {
                out.push((ey * nelx + ex) as u32);
            }
        }
    }
}

fn plus(nelx: usize, x0: usize, y0: usize, side: usize, out: &mut Vec<u32>) {
    let mid = side / 2;
    for ey in y0 + 1..y0 + side - 1 {
        for ex in x0 + 1..x0 + side - 1 {
            let dx = ex - x0;
            let dy = ey - y0;
            if dx == mid - 1 || dx == mid || dy == mid - 1 || dy == mid {
                out.push((ey * nelx + ex) as u32);
            }
        }
    }
}

impl TransformStack {
    pub fn build(h: &QuadtreeHierarchy, mask: Option<&DomainMask>) -> Result<Self> {
        let (nelx, nely) = h.element_resolution();
        let mut passive = vec![Passive::Free; nelx * nely];
        if let Some(mask) = mask {
            if (mask.nelx, mask.nely) != (nelx, nely) {
                return Err(Error::MaskMismatch {
                    expected: (nelx, nely),
                    got: (mask.nelx, mask.nely),
                });
            }
            if mask.interior_count() == 0 {
                return Err(Error::EmptyDomain);
            }
            let outside = |x: i64, y: i64| {
                x < 0 || y < 0 || x >= nelx as i64 || y >= nely as i64 || !mask.is_inside(x as usize, y as usize)
            };
            for ey in 0..nely {
                for ex in 0..nelx {
                    let e = ey * nelx + ex;
                    if !mask.is_inside(ex, ey) {
                        passive[e] = Passive::Void;
                        continue;
                    }
                    let near_boundary = (-2i64..=2).any(|dy| {
                        (-2i64..=2).any(|dx| outside(ex as i64 + dx, ey as i64 + dy))
                    });
                    if near_boundary {
                        passive[e] = Passive::Solid;
                    }
                }
            }
        }

        let keep = |e: &u32| passive[*e as usize] == Passive::Free;
        let block = h.block_size();
        let (n0x, n0y) = h.coarse_resolution();
        let mut frame_offsets = vec![0];
        let mut frame = Vec::new();
        let mut scratch = Vec::new();
        for j in 0..n0y {
            for i in 0..n0x {
                scratch.clear();
                ring(nelx, i * block, j * block, block, &mut scratch);
                frame.extend(scratch.iter().filter(|e| keep(e)));
                frame_offsets.push(frame.len());
            }
        }

        let mut cell_offsets = vec![0];
        let mut cells = Vec::new();
        let mut active = Vec::with_capacity(h.total_cells());
        for g in 0..h.total_cells() {
            let (x0, y0, side) = h.cell_rect(h.cell(g));
            scratch.clear();
            plus(nelx, x0, y0, side, &mut scratch);
            let before = cells.len();
            cells.extend(scratch.iter().filter(|e| keep(e)));
            active.push(cells.len() > before);
            cell_offsets.push(cells.len());
        }

        let passive_solid: Vec<u32> = (0..passive.len())
            .filter(|&e| passive[e] == Passive::Solid)
            .map(|e| e as u32)
            .collect();
        let passive_void: Vec<u32> = (0..passive.len())
            .filter(|&e| passive[e] == Passive::Void)
            .map(|e| e as u32)
            .collect();
        let fixed_volume = (frame.len() + passive_solid.len()) as f64;

        Ok(Self {
            nelx,
            nely,
            frame_offsets,
            frame,
            cell_offsets,
            cells,
            passive,
            passive_solid,
            passive_void,
            active,
            fixed_volume,
        })
    }

    pub fn element_resolution(&self) -> (usize, usize) {
        (self.nelx, self.nely)
    }

    pub fn element_count(&self) -> usize {
        self.nelx * self.nely
    }

    pub fn cell_count(&self) -> usize {
        self.active.len()
    }

    /// Number of coarse cells carrying a frame.
    pub fn frame_count(&self) -> usize {
        self.frame_offsets.len() - 1
    }

    /// Elements of the level-0 frame painted by coarse cell `c` (row-major).
    pub fn frame_elements(&self, c: usize) -> &[u32] {
        &self.frame[self.frame_offsets[c]..self.frame_offsets[c + 1]]
    }

    /// Elements painted by the plus shape of global cell `g`.
    pub fn cell_elements(&self, g: usize) -> &[u32] {
        &self.cells[self.cell_offsets[g]..self.cell_offsets[g + 1]]
    }

    pub fn passive(&self, e: usize) -> Passive {
        self.passive[e]
    }

    pub fn passive_solid(&self) -> &[u32] {
        &self.passive_solid
    }

    pub fn passive_void(&self) -> &[u32] {
        &self.passive_void
    }

    /// Elements not forced void.
    pub fn domain_element_count(&self) -> usize {
        self.element_count() - self.passive_void.len()
    }

    /// Whether a cell paints at least one free element. Inactive cells are
    /// frozen at the lower bound and excluded from the update.
    pub fn is_active(&self, g: usize) -> bool {
        self.active[g]
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    /// Volume of the frame plus passive solids, independent of the design.
    pub fn fixed_volume(&self) -> f64 {
        self.fixed_volume
    }

    /// Largest volume the parameterization can reach (every cell at 1).
    pub fn max_volume(&self) -> f64 {
        self.fixed_volume + self.cells.len() as f64
    }

    /// `ρ = Σ_k T^k x̃^k` with passive overrides.
    pub fn apply(&self, filtered: &DesignField) -> Result<DensityField> {
        if filtered.len() != self.cell_count() {
            return Err(Error::LevelMismatch {
                expected: self.cell_count(),
                got: filtered.len(),
            });
        }
        let mut rho = vec![0.0; self.element_count()];
        for &e in &self.frame {
            rho[e as usize] = 1.0;
        }
        for (g, &v) in filtered.values().iter().enumerate() {
            for &e in self.cell_elements(g) {
                rho[e as usize] = v;
            }
        }
        for &e in &self.passive_solid {
            rho[e as usize] = 1.0;
        }
        for &e in &self.passive_void {
            rho[e as usize] = 0.0;
        }
        Ok(DensityField {
            nelx: self.nelx,
            nely: self.nely,
            values: rho,
        })
    }

    /// Total mapped volume without materializing the density field.
    pub fn volume_of(&self, filtered: &DesignField) -> f64 {
        let painted: f64 = filtered
            .values()
            .iter()
            .enumerate()
            .map(|(g, &v)| v * (self.cell_offsets[g + 1] - self.cell_offsets[g]) as f64)
            .sum();
        self.fixed_volume + painted
    }

    /// Number of free elements painted by cell `g`.
    pub fn cell_weight(&self, g: usize) -> usize {
        self.cell_offsets[g + 1] - self.cell_offsets[g]
    }
}

/// Per-element densities on the element grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub nelx: usize,
    pub nely: usize,
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn uniform(nelx: usize, nely: usize, v: f64) -> Self {
        Self {
            nelx,
            nely,
            values: vec![v; nelx * nely],
        }
    }

    pub fn get(&self, ex: usize, ey: usize) -> f64 {
        self.values[ey * self.nelx + ex]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs_diff(&self, other: &DensityField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Horizontal mirror image, used for symmetric half-domain models.
    pub fn mirrored_x(&self) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for ey in 0..self.nely {
            for ex in 0..self.nelx {
                values[ey * self.nelx + ex] = self.values[ey * self.nelx + (self.nelx - 1 - ex)];
            }
        }
        Self {
            nelx: self.nelx,
            nely: self.nely,
            values,
        }
    }

    /// Mirror copy on the left, the original on the right.
    pub fn unfold_left(&self) -> Self {
        let mirror = self.mirrored_x();
        let nelx = 2 * self.nelx;
        let mut values = Vec::with_capacity(nelx * self.nely);
        for ey in 0..self.nely {
            values.extend_from_slice(&mirror.values[ey * self.nelx..(ey + 1) * self.nelx]);
            values.extend_from_slice(&self.values[ey * self.nelx..(ey + 1) * self.nelx]);
        }
        Self {
            nelx,
            nely: self.nely,
            values,
        }
    }

    /// 8-bit grayscale image, 255 = solid.
    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            width: self.nelx,
            height: self.nely,
            pixels: self
                .values
                .iter()
                .map(|&r| (r.clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect(),
        }
    }

    pub fn from_image(img: &GrayImage) -> Self {
        Self {
            nelx: img.width,
            nely: img.height,
            values: img.pixels.iter().map(|&p| p as f64 / 255.0).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rho: &DensityField) -> Vec<String> {
        (0..rho.nely)
            .map(|ey| {
                (0..rho.nelx)
                    .map(|ex| if rho.get(ex, ey) > 0.5 { '#' } else { '.' })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn single_block_frame_and_plus() {
        let h = QuadtreeHierarchy::new(1, 1, 3).unwrap();
        let ts = TransformStack::build(&h, None).unwrap();
        let rho = ts.apply(&DesignField::uniform(&h, 0.0)).unwrap();
        assert_eq!(
            grid(&rho),
            [
                "########", "#......#", "#......#", "#......#", "#......#", "#......#", "#......#",
                "########"
            ]
        );
        let rho = ts.apply(&DesignField::uniform(&h, 1.0)).unwrap();
        assert_eq!(
            grid(&rho),
            [
                "########", "#..##..#", "#..##..#", "########", "########", "#..##..#", "#..##..#",
                "########"
            ]
        );
        assert_eq!(ts.cell_elements(0).len(), 20);
    }

    #[test]
    fn half_refinement_gives_half_density() {
        let h = QuadtreeHierarchy::new(2, 1, 4).unwrap();
        let ts = TransformStack::build(&h, None).unwrap();
        let mut x = DesignField::uniform(&h, 0.0);
        x.values_mut()[1] = 0.5;
        let rho = ts.apply(&x).unwrap();
        for &e in ts.cell_elements(1) {
            assert_eq!(rho.values[e as usize], 0.5);
        }
        assert_eq!(rho.values.iter().filter(|&&r| r == 0.5).count(), ts.cell_elements(1).len());
    }

    #[test]
    fn sources_are_disjoint() {
        let h = QuadtreeHierarchy::new(3, 2, 5).unwrap();
        let ts = TransformStack::build(&h, None).unwrap();
        let mut hits = vec![0u32; ts.element_count()];
        for c in 0..6 {
            for &e in ts.frame_elements(c) {
                hits[e as usize] += 1;
            }
        }
        for g in 0..ts.cell_count() {
            for &e in ts.cell_elements(g) {
                hits[e as usize] += 1;
            }
        }
        assert!(hits.iter().all(|&c| c <= 1));
    }

    #[test]
    fn finest_cells_keep_two_by_two_voids() {
        let h = QuadtreeHierarchy::new(2, 2, 5).unwrap();
        let ts = TransformStack::build(&h, None).unwrap();
        let rho = ts.apply(&DesignField::uniform(&h, 1.0)).unwrap();
        let side = h.cell_size(h.max_level());
        assert_eq!(side, 8);
        let (nelx, nely) = h.element_resolution();
        for cy in (0..nely).step_by(side) {
            for cx in (0..nelx).step_by(side) {
                for (ox, oy) in [(1, 1), (5, 1), (1, 5), (5, 5)] {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            assert_eq!(rho.get(cx + ox + dx, cy + oy + dy), 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn mask_passive_layers() {
        let h = QuadtreeHierarchy::new(2, 1, 4).unwrap();
        // right half outside the domain
        let mask = DomainMask::from_fn(32, 16, |ex, _| ex < 16);
        let ts = TransformStack::build(&h, Some(&mask)).unwrap();
        assert!(!ts.is_active(1));
        assert!(ts.is_active(0));
        assert_eq!(ts.cell_elements(1).len(), 0);
        let row = 8 * 32;
        assert_eq!(ts.passive(row + 20), Passive::Void);
        assert_eq!(ts.passive(row + 15), Passive::Solid);
        assert_eq!(ts.passive(row + 14), Passive::Solid);
        assert_eq!(ts.passive(row + 13), Passive::Free);
        assert_eq!(ts.passive(32 + 5), Passive::Solid);
        let rho = ts.apply(&DesignField::uniform(&h, 1.0)).unwrap();
        for &e in ts.passive_void() {
            assert_eq!(rho.values[e as usize], 0.0);
        }
        for &e in ts.passive_solid() {
            assert_eq!(rho.values[e as usize], 1.0);
        }
    }

    #[test]
    fn mask_errors() {
        let h = QuadtreeHierarchy::new(2, 1, 4).unwrap();
        let wrong = DomainMask::from_fn(16, 16, |_, _| true);
        assert!(matches!(TransformStack::build(&h, Some(&wrong)), Err(Error::MaskMismatch { .. })));
        let black = DomainMask::from_fn(32, 16, |_, _| false);
        assert!(matches!(TransformStack::build(&h, Some(&black)), Err(Error::EmptyDomain)));
    }

    #[test]
    fn volume_of_matches_density_sum() {
        let h = QuadtreeHierarchy::new(2, 1, 5).unwrap();
        let mask = DomainMask::from_fn(64, 32, |ex, ey| (ex as f64 - 64.0).hypot(ey as f64) > 20.0);
        let ts = TransformStack::build(&h, Some(&mask)).unwrap();
        let vals = (0..h.total_cells()).map(|g| (g % 7) as f64 / 7.0).collect();
        let x = DesignField::from_values(&h, vals).unwrap();
        let rho = ts.apply(&x).unwrap();
        let sum: f64 = rho.values.iter().sum();
        assert!((sum - ts.volume_of(&x)).abs() < 1e-9);
    }
}
