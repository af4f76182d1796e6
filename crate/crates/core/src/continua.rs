//! Continua defined by concentration thresholds, and macroscopic averages
//! of fine fields over coarse blocks and edges.

use crate::error::{Error, Result};
use crate::fine::particles;
use crate::grid::{CoarseGrid, DomainLayout, FineGrid};

/// Concentration intervals defining the continua. Continuum 0 holds the
/// highest concentrations: `[t_0, inf)`, then `[t_1, t_0)`, ..., `(-inf, t_last)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumSpec {
    pub thresholds: Vec<f64>,
}

impl ContinuumSpec {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        for w in thresholds.windows(2) {
            if !(w[0] > w[1]) {
                return Err(Error::Config(format!("thresholds must be strictly decreasing, got {thresholds:?}")));
            }
        }
        if thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(Error::Config(format!("thresholds must lie in (0, 1), got {thresholds:?}")));
        }
        Ok(Self { thresholds })
    }
    pub fn n(&self) -> usize {
        self.thresholds.len() + 1
    }
    pub fn classify_value(&self, c: f64) -> usize {
        self.thresholds.iter().position(|&t| c >= t).unwrap_or(self.thresholds.len())
    }
}

/// Continuum label of every cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    pub n: usize,
    pub labels: Vec<u8>,
}

impl Partition {
    pub fn indicator(&self, i: usize, k: usize) -> f64 {
        if self.labels[k] as usize == i {
            1.0
        } else {
            0.0
        }
    }
    /// Per-continuum indicator vectors.
    pub fn indicators(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.labels.iter().map(|&l| if l as usize == i { 1.0 } else { 0.0 }).collect()).collect()
    }
}

pub fn classify(c: &[f64], spec: &ContinuumSpec) -> Partition {
    Partition { n: spec.n(), labels: c.iter().map(|&v| spec.classify_value(v) as u8).collect() }
}

/// Block and edge averages. Indexing is `[block * n + i]` and `[edge * n + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroAverages {
    pub n: usize,
    /// Continuum volume mean of the pressure; `None` where the continuum is absent.
    pub p: Vec<Option<f64>>,
    /// Integrated concentration of each continuum.
    pub c: Vec<f64>,
    /// Integrated flux carried by each continuum (donor-cell labels).
    pub v: Vec<f64>,
    /// Area occupied by each continuum in each block.
    pub volume: Vec<f64>,
}

/// Label of the cell that donates the flux through a face of the
/// computational grid. Inflow through the physical boundary takes the label
/// of the inflow concentration.
pub fn donor_label(
    comp: &FineGrid,
    labels: &Partition,
    spec: &ContinuumSpec,
    inflow_c: &[f64],
    f: usize,
    u: f64,
) -> usize {
    match comp.face_cells(f) {
        (Some(l), Some(r)) => labels.labels[if u >= 0.0 { l } else { r }] as usize,
        (None, Some(_)) if u > 0.0 => spec.classify_value(inflow_c[f]),
        (Some(_), None) if u < 0.0 => spec.classify_value(inflow_c[f]),
        (Some(k), None) | (None, Some(k)) => labels.labels[k] as usize,
        (None, None) => unreachable!(),
    }
}

/// Computes macroscopic averages of fine fields given on the computational
/// grid over the coarse blocks of the target domain.
#[allow(clippy::too_many_arguments)]
pub fn compute_averages(
    layout: &DomainLayout,
    coarse: &CoarseGrid,
    spec: &ContinuumSpec,
    labels: &Partition,
    p: &[f64],
    c: &[f64],
    flux: &[f64],
    inflow_c: &[f64],
) -> MacroAverages {
    let n = spec.n();
    let t = &layout.target;
    let area = t.cell_area();
    let mut psum = vec![0.0; coarse.n_blocks() * n];
    let mut vol = vec![0.0; coarse.n_blocks() * n];
    let mut cint = vec![0.0; coarse.n_blocks() * n];
    for b in 0..coarse.n_blocks() {
        for k in coarse.block_cells(b) {
            let kc = layout.comp_cell(k);
            let i = labels.labels[kc] as usize;
            psum[b * n + i] += p[kc] * area;
            vol[b * n + i] += area;
            cint[b * n + i] += c[kc] * area;
        }
    }
    let pav = psum.iter().zip(&vol).map(|(s, v)| (*v > 0.0).then(|| s / v)).collect();
    let mut v = vec![0.0; coarse.n_edges() * n];
    for e in 0..coarse.n_edges() {
        for f in coarse.edge_faces(e) {
            let fc = layout.comp_face(f);
            let u = flux[fc];
            let i = donor_label(&layout.comp, labels, spec, inflow_c, fc, u);
            v[e * n + i] += u;
        }
    }
    MacroAverages { n, p: pav, c: cint, v, volume: vol }
}

/// Traces cell centres backwards through the recorded velocity fields and
/// reads the initial labels at the foot points. `fluxes[m]` drives the step
/// from time level `m` to `m + 1`. Returns the advected partition at level
/// `steps`.
pub fn advect_labels(grid: &FineGrid, labels0: &Partition, fluxes: &[&[f64]], tau: f64) -> Partition {
    let labels = (0..grid.n_cells())
        .map(|k| {
            let (mut x, mut y) = grid.center(k);
            for flux in fluxes.iter().rev() {
                let (nx, ny) = particles::advance_point(grid, flux, x, y, -tau);
                x = nx.clamp(grid.x0, grid.x1());
                y = ny.clamp(grid.y0, grid.y1());
            }
            labels0.labels[grid.locate(x, y)]
        })
        .collect();
    Partition { n: labels0.n, labels }
}

/// Cells whose 4-neighbourhood contains a different label.
pub fn interface_band(grid: &FineGrid, part: &Partition) -> Vec<bool> {
    (0..grid.n_cells())
        .map(|k| {
            let (i, j) = grid.ij(k);
            let l = part.labels[k];
            let mut nb = Vec::with_capacity(4);
            if i > 0 {
                nb.push(grid.cell(i - 1, j));
            }
            if i + 1 < grid.nx {
                nb.push(grid.cell(i + 1, j));
            }
            if j > 0 {
                nb.push(grid.cell(i, j - 1));
            }
            if j + 1 < grid.ny {
                nb.push(grid.cell(i, j + 1));
            }
            nb.iter().any(|&m| part.labels[m] != l)
        })
        .collect()
}

/// Fraction of cells outside the interface band of `reference` where the two
/// partitions agree.
pub fn agreement_outside_band(grid: &FineGrid, reference: &Partition, other: &Partition) -> f64 {
    let band = interface_band(grid, reference);
    let (mut agree, mut total) = (0usize, 0usize);
    for k in 0..grid.n_cells() {
        if !band[k] {
            total += 1;
            if reference.labels[k] == other.labels[k] {
                agree += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        agree as f64 / total as f64
    }
}
