//! Fine and coarse rectangular grids, domain layouts and oversampled regions.
//!
//! Cells are numbered row-major, `k = j * nx + i`. Faces are stored in one
//! array: first the x-faces (normal +x, `(nx + 1) * ny` of them), then the
//! y-faces (normal +y, `nx * (ny + 1)`). Face fluxes are oriented along the
//! positive axis.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineGrid {
    pub x0: f64,
    pub y0: f64,
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
}

impl FineGrid {
    pub fn new(x0: f64, y0: f64, lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Config(format!("grid needs positive cell counts, got {nx}x{ny}")));
        }
        if !(lx > 0.0 && ly > 0.0) {
            return Err(Error::Config(format!("grid needs positive extents, got {lx}x{ly}")));
        }
        Ok(Self { x0, y0, lx, ly, nx, ny, hx: lx / nx as f64, hy: ly / ny as f64 })
    }

    /// Unit-spaced grid with origin at zero, handy for local problems and tests.
    pub fn uniform(nx: usize, ny: usize, hx: f64, hy: f64) -> Self {
        Self { x0: 0.0, y0: 0.0, lx: nx as f64 * hx, ly: ny as f64 * hy, nx, ny, hx, hy }
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }
    pub fn center(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.ij(k);
        (self.x0 + (i as f64 + 0.5) * self.hx, self.y0 + (j as f64 + 0.5) * self.hy)
    }
    pub fn x1(&self) -> f64 {
        self.x0 + self.lx
    }
    pub fn y1(&self) -> f64 {
        self.y0 + self.ly
    }

    pub fn n_xfaces(&self) -> usize {
        (self.nx + 1) * self.ny
    }
    pub fn n_yfaces(&self) -> usize {
        self.nx * (self.ny + 1)
    }
    pub fn n_faces(&self) -> usize {
        self.n_xfaces() + self.n_yfaces()
    }
    /// x-face at `x0 + i * hx` in row `j`, `i` in `0..=nx`.
    pub fn xface(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }
    /// y-face at `y0 + j * hy` in column `i`, `j` in `0..=ny`.
    pub fn yface(&self, i: usize, j: usize) -> usize {
        self.n_xfaces() + j * self.nx + i
    }
    pub fn face_axis(&self, f: usize) -> Axis {
        if f < self.n_xfaces() {
            Axis::X
        } else {
            Axis::Y
        }
    }
    /// Lattice position of a face (`i` in `0..=nx` for x-faces, `j` in `0..=ny` for y-faces).
    pub fn face_ij(&self, f: usize) -> (Axis, usize, usize) {
        if f < self.n_xfaces() {
            (Axis::X, f % (self.nx + 1), f / (self.nx + 1))
        } else {
            let g = f - self.n_xfaces();
            (Axis::Y, g % self.nx, g / self.nx)
        }
    }
    pub fn face_area(&self, f: usize) -> f64 {
        match self.face_axis(f) {
            Axis::X => self.hy,
            Axis::Y => self.hx,
        }
    }
    /// Distance between the two cell centres across a face of this axis.
    pub fn spacing(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.hx,
            Axis::Y => self.hy,
        }
    }
    pub fn face_center(&self, f: usize) -> (f64, f64) {
        match self.face_ij(f) {
            (Axis::X, i, j) => (self.x0 + i as f64 * self.hx, self.y0 + (j as f64 + 0.5) * self.hy),
            (Axis::Y, i, j) => (self.x0 + (i as f64 + 0.5) * self.hx, self.y0 + j as f64 * self.hy),
        }
    }
    /// Cells on the negative and positive side of a face (`None` outside the grid).
    pub fn face_cells(&self, f: usize) -> (Option<usize>, Option<usize>) {
        match self.face_ij(f) {
            (Axis::X, i, j) => (
                (i > 0).then(|| self.cell(i - 1, j)),
                (i < self.nx).then(|| self.cell(i, j)),
            ),
            (Axis::Y, i, j) => (
                (j > 0).then(|| self.cell(i, j - 1)),
                (j < self.ny).then(|| self.cell(i, j)),
            ),
        }
    }
    pub fn is_boundary_face(&self, f: usize) -> bool {
        let (a, b) = self.face_cells(f);
        a.is_none() || b.is_none()
    }
    /// The four faces of a cell as (face, outward sign): +1 when the face
    /// orientation points out of the cell.
    pub fn cell_faces(&self, k: usize) -> [(usize, f64); 4] {
        let (i, j) = self.ij(k);
        [
            (self.xface(i, j), -1.0),
            (self.xface(i + 1, j), 1.0),
            (self.yface(i, j), -1.0),
            (self.yface(i, j + 1), 1.0),
        ]
    }
    /// Index of the cell containing a point, clamped to the grid.
    pub fn locate(&self, x: f64, y: f64) -> usize {
        let i = (((x - self.x0) / self.hx).floor().max(0.0) as usize).min(self.nx - 1);
        let j = (((y - self.y0) / self.hy).floor().max(0.0) as usize).min(self.ny - 1);
        self.cell(i, j)
    }
}

/// Side of a rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];
}

impl FineGrid {
    /// Boundary side a boundary face lies on.
    pub fn face_side(&self, f: usize) -> Option<Side> {
        match self.face_ij(f) {
            (Axis::X, 0, _) => Some(Side::Left),
            (Axis::X, i, _) if i == self.nx => Some(Side::Right),
            (Axis::Y, _, 0) => Some(Side::Bottom),
            (Axis::Y, _, j) if j == self.ny => Some(Side::Top),
            _ => None,
        }
    }
    pub fn side_faces(&self, side: Side) -> Vec<usize> {
        match side {
            Side::Left => (0..self.ny).map(|j| self.xface(0, j)).collect(),
            Side::Right => (0..self.ny).map(|j| self.xface(self.nx, j)).collect(),
            Side::Bottom => (0..self.nx).map(|i| self.yface(i, 0)).collect(),
            Side::Top => (0..self.nx).map(|i| self.yface(i, self.ny)).collect(),
        }
    }
}

/// Coarse partition of a fine grid into `bnx x bny` blocks of equal size.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseGrid {
    pub fine: FineGrid,
    pub nx: usize,
    pub ny: usize,
    /// Fine cells per block in x and y.
    pub bx: usize,
    pub by: usize,
}

impl CoarseGrid {
    pub fn new(fine: FineGrid, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Config(format!("coarse grid needs positive counts, got {nx}x{ny}")));
        }
        if !fine.nx.is_multiple_of(nx) {
            return Err(Error::Config(format!(
                "coarse count {nx} does not divide fine count {} in x",
                fine.nx
            )));
        }
        if !fine.ny.is_multiple_of(ny) {
            return Err(Error::Config(format!(
                "coarse count {ny} does not divide fine count {} in y",
                fine.ny
            )));
        }
        Ok(Self { bx: fine.nx / nx, by: fine.ny / ny, fine, nx, ny })
    }

    pub fn n_blocks(&self) -> usize {
        self.nx * self.ny
    }
    pub fn block(&self, bi: usize, bj: usize) -> usize {
        bj * self.nx + bi
    }
    pub fn block_ij(&self, b: usize) -> (usize, usize) {
        (b % self.nx, b / self.nx)
    }
    pub fn block_area(&self) -> f64 {
        self.bx as f64 * self.fine.hx * self.by as f64 * self.fine.hy
    }
    pub fn block_size(&self) -> (f64, f64) {
        (self.bx as f64 * self.fine.hx, self.by as f64 * self.fine.hy)
    }
    /// Fine cell range `[i0, i1) x [j0, j1)` of a block.
    pub fn block_range(&self, b: usize) -> (usize, usize, usize, usize) {
        let (bi, bj) = self.block_ij(b);
        (bi * self.bx, (bi + 1) * self.bx, bj * self.by, (bj + 1) * self.by)
    }
    pub fn block_cells(&self, b: usize) -> Vec<usize> {
        let (i0, i1, j0, j1) = self.block_range(b);
        let mut out = Vec::with_capacity(self.bx * self.by);
        for j in j0..j1 {
            for i in i0..i1 {
                out.push(self.fine.cell(i, j));
            }
        }
        out
    }
    /// Block containing a fine cell.
    pub fn block_of(&self, k: usize) -> usize {
        let (i, j) = self.fine.ij(k);
        self.block(i / self.bx, j / self.by)
    }
    pub fn block_center(&self, b: usize) -> (f64, f64) {
        let (bi, bj) = self.block_ij(b);
        let (w, h) = self.block_size();
        (self.fine.x0 + (bi as f64 + 0.5) * w, self.fine.y0 + (bj as f64 + 0.5) * h)
    }

    /// Vertical edges come first (`(nx + 1) * ny`), then horizontal ones.
    pub fn n_vedges(&self) -> usize {
        (self.nx + 1) * self.ny
    }
    pub fn n_hedges(&self) -> usize {
        self.nx * (self.ny + 1)
    }
    pub fn n_edges(&self) -> usize {
        self.n_vedges() + self.n_hedges()
    }
    pub fn vedge(&self, bi: usize, bj: usize) -> usize {
        bj * (self.nx + 1) + bi
    }
    pub fn hedge(&self, bi: usize, bj: usize) -> usize {
        self.n_vedges() + bj * self.nx + bi
    }
    pub fn edge_ij(&self, e: usize) -> (Axis, usize, usize) {
        if e < self.n_vedges() {
            (Axis::X, e % (self.nx + 1), e / (self.nx + 1))
        } else {
            let g = e - self.n_vedges();
            (Axis::Y, g % self.nx, g / self.nx)
        }
    }
    /// Blocks on the negative and positive side of an edge.
    pub fn edge_blocks(&self, e: usize) -> (Option<usize>, Option<usize>) {
        match self.edge_ij(e) {
            (Axis::X, bi, bj) => (
                (bi > 0).then(|| self.block(bi - 1, bj)),
                (bi < self.nx).then(|| self.block(bi, bj)),
            ),
            (Axis::Y, bi, bj) => (
                (bj > 0).then(|| self.block(bi, bj - 1)),
                (bj < self.ny).then(|| self.block(bi, bj)),
            ),
        }
    }
    pub fn is_interior_edge(&self, e: usize) -> bool {
        let (a, b) = self.edge_blocks(e);
        a.is_some() && b.is_some()
    }
    pub fn interior_edges(&self) -> Vec<usize> {
        (0..self.n_edges()).filter(|&e| self.is_interior_edge(e)).collect()
    }
    pub fn edge_side(&self, e: usize) -> Option<Side> {
        match self.edge_ij(e) {
            (Axis::X, 0, _) => Some(Side::Left),
            (Axis::X, bi, _) if bi == self.nx => Some(Side::Right),
            (Axis::Y, _, 0) => Some(Side::Bottom),
            (Axis::Y, _, bj) if bj == self.ny => Some(Side::Top),
            _ => None,
        }
    }
    /// Fine faces making up an edge.
    pub fn edge_faces(&self, e: usize) -> Vec<usize> {
        match self.edge_ij(e) {
            (Axis::X, bi, bj) => {
                (bj * self.by..(bj + 1) * self.by).map(|j| self.fine.xface(bi * self.bx, j)).collect()
            }
            (Axis::Y, bi, bj) => {
                (bi * self.bx..(bi + 1) * self.bx).map(|i| self.fine.yface(i, bj * self.by)).collect()
            }
        }
    }
    /// Edges of a block with the outward sign relative to the edge orientation.
    pub fn block_edges(&self, b: usize) -> [(usize, f64); 4] {
        let (bi, bj) = self.block_ij(b);
        [
            (self.vedge(bi, bj), -1.0),
            (self.vedge(bi + 1, bj), 1.0),
            (self.hedge(bi, bj), -1.0),
            (self.hedge(bi, bj + 1), 1.0),
        ]
    }
}

/// How the computational domain extends the target domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extension {
    None,
    /// Margin added on both the left and the right.
    TwoSided(f64),
    /// Margin added on the right only.
    Right(f64),
}

/// The target domain (where averages are compared) embedded in the
/// computational domain (where the fine problem is solved).
#[derive(Debug, Clone, PartialEq)]
pub struct DomainLayout {
    pub target: FineGrid,
    pub comp: FineGrid,
    /// Column offset of the target inside the computational grid.
    pub offset: usize,
    pub extension: Extension,
}

impl DomainLayout {
    /// Builds the layout from the target extent and cell counts. The margin
    /// must be an integer number of target cells.
    pub fn new(l1: f64, l2: f64, nx: usize, ny: usize, extension: Extension) -> Result<Self> {
        let target = FineGrid::new(0.0, 0.0, l1, l2, nx, ny)?;
        let cells_for = |m: f64| -> Result<usize> {
            if m < 0.0 {
                return Err(Error::Config(format!("extension margin must be non-negative, got {m}")));
            }
            let r = m / target.hx;
            let n = r.round();
            if (r - n).abs() > 1e-9 * r.max(1.0) {
                return Err(Error::Config(format!(
                    "extension margin {m} is not a whole number of cells of width {}",
                    target.hx
                )));
            }
            Ok(n as usize)
        };
        let (left, right) = match extension {
            Extension::None => (0, 0),
            Extension::TwoSided(m) => {
                let n = cells_for(m)?;
                (n, n)
            }
            Extension::Right(m) => (0, cells_for(m)?),
        };
        let cnx = nx + left + right;
        let comp = FineGrid {
            x0: -(left as f64) * target.hx,
            y0: 0.0,
            lx: cnx as f64 * target.hx,
            ly: l2,
            nx: cnx,
            ny,
            hx: target.hx,
            hy: target.hy,
        };
        Ok(Self { target, comp, offset: left, extension })
    }

    /// Computational cell index of a target cell.
    pub fn comp_cell(&self, k: usize) -> usize {
        let (i, j) = self.target.ij(k);
        self.comp.cell(i + self.offset, j)
    }
    /// Computational face index of a target face.
    pub fn comp_face(&self, f: usize) -> usize {
        match self.target.face_ij(f) {
            (Axis::X, i, j) => self.comp.xface(i + self.offset, j),
            (Axis::Y, i, j) => self.comp.yface(i + self.offset, j),
        }
    }
    /// Restricts a cell field on the computational grid to the target.
    pub fn restrict(&self, field: &[f64]) -> Vec<f64> {
        (0..self.target.n_cells()).map(|k| field[self.comp_cell(k)]).collect()
    }
    /// Whether a target side coincides with the computational boundary.
    pub fn side_is_physical(&self, side: Side) -> bool {
        match side {
            Side::Left => self.offset == 0,
            Side::Right => self.offset + self.target.nx == self.comp.nx,
            Side::Bottom | Side::Top => true,
        }
    }
}

/// Treatment of a side of the oversampled region that leaves the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideRule {
    Truncate,
    Periodic,
    Reflect,
}

impl std::str::FromStr for SideRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truncate" | "none" => Ok(SideRule::Truncate),
            "periodic" => Ok(SideRule::Periodic),
            "reflect" => Ok(SideRule::Reflect),
            _ => Err(Error::Config(format!("unknown extension rule '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtensionRule {
    pub left: SideRule,
    pub right: SideRule,
}

impl ExtensionRule {
    pub const NONE: ExtensionRule = ExtensionRule { left: SideRule::Truncate, right: SideRule::Truncate };
}

/// Where the data of an oversampled cell comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceCell {
    Inside(usize),
    Periodic(usize),
    Mirror(usize),
}

impl SourceCell {
    pub fn index(self) -> usize {
        match self {
            SourceCell::Inside(k) | SourceCell::Periodic(k) | SourceCell::Mirror(k) => k,
        }
    }
}

/// A block enlarged by `layers` rings of blocks, clipped or extended at
/// the domain boundary. Each local cell belongs to one sub-block region.
#[derive(Debug, Clone)]
pub struct Oversample {
    pub block: usize,
    /// Local grid of the oversampled rectangle (in physical coordinates).
    pub grid: FineGrid,
    pub sources: Vec<SourceCell>,
    /// Region index per local cell.
    pub regions: Vec<usize>,
    pub n_regions: usize,
    pub central: usize,
    pub truncated: bool,
}

fn fold_index(i: isize, n: usize, rule_left: SideRule, rule_right: SideRule) -> Option<(usize, SourceCell)> {
    let n_i = n as isize;
    if (0..n_i).contains(&i) {
        return Some((i as usize, SourceCell::Inside(0)));
    }
    let rule = if i < 0 { rule_left } else { rule_right };
    match rule {
        SideRule::Truncate => None,
        SideRule::Periodic => Some((i.rem_euclid(n_i) as usize, SourceCell::Periodic(0))),
        SideRule::Reflect => {
            let m = i.rem_euclid(2 * n_i);
            let r = if m < n_i { m } else { 2 * n_i - 1 - m };
            Some((r as usize, SourceCell::Mirror(0)))
        }
    }
}

impl Oversample {
    /// Builds the oversampled region of block `b`. Vertical overhang is
    /// always truncated; horizontal overhang follows `rule`.
    pub fn new(coarse: &CoarseGrid, b: usize, layers: usize, rule: ExtensionRule) -> Self {
        let fine = &coarse.fine;
        let (bi, bj) = coarse.block_ij(b);
        let l = layers as isize;
        let bi0 = bi as isize - l;
        let bi1 = bi as isize + l + 1;
        let bj0 = (bj as isize - l).max(0);
        let bj1 = (bj as isize + l + 1).min(coarse.ny as isize);
        let mut truncated = bj0 != bj as isize - l || bj1 != bj as isize + l + 1;
        // Horizontal block range actually kept.
        let keep = |c: isize| -> bool {
            let i = c * coarse.bx as isize;
            fold_index(i, fine.nx, rule.left, rule.right).is_some()
        };
        let mut cbi0 = bi0;
        while !keep(cbi0) {
            cbi0 += 1;
            truncated = true;
        }
        let mut cbi1 = bi1;
        while !keep(cbi1 - 1) {
            cbi1 -= 1;
            truncated = true;
        }
        let nbx = (cbi1 - cbi0) as usize;
        let nby = (bj1 - bj0) as usize;
        let lnx = nbx * coarse.bx;
        let lny = nby * coarse.by;
        let i_start = cbi0 * coarse.bx as isize;
        let j_start = bj0 as usize * coarse.by;
        let grid = FineGrid {
            x0: fine.x0 + i_start as f64 * fine.hx,
            y0: fine.y0 + j_start as f64 * fine.hy,
            lx: lnx as f64 * fine.hx,
            ly: lny as f64 * fine.hy,
            nx: lnx,
            ny: lny,
            hx: fine.hx,
            hy: fine.hy,
        };
        let mut sources = Vec::with_capacity(lnx * lny);
        let mut regions = Vec::with_capacity(lnx * lny);
        for lj in 0..lny {
            for li in 0..lnx {
                let gi = i_start + li as isize;
                let gj = j_start + lj;
                let (si, kind) = fold_index(gi, fine.nx, rule.left, rule.right).expect("kept column");
                let k = fine.cell(si, gj);
                sources.push(match kind {
                    SourceCell::Inside(_) => SourceCell::Inside(k),
                    SourceCell::Periodic(_) => SourceCell::Periodic(k),
                    SourceCell::Mirror(_) => SourceCell::Mirror(k),
                });
                regions.push((lj / coarse.by) * nbx + li / coarse.bx);
            }
        }
        let central = (bj - bj0 as usize) * nbx + (bi as isize - cbi0) as usize;
        Self { block: b, grid, sources, regions, n_regions: nbx * nby, central, truncated }
    }
}
