//! Galerkin multicontinuum flow model: block-centred finite volumes for the
//! continuum pressures `-div(alpha grad P) + beta P = 0` on a refined coarse
//! grid, and edge velocities on the base coarse grid.

use nalgebra::{DMatrix, DVector};

use crate::cells::GalerkinCoefficients;
use crate::error::{Error, Result};
use crate::grid::{Axis, CoarseGrid};
use crate::linalg::dense_solve;

/// Dirichlet pressures on the left and right sides of the domain (`None`
/// means no flow through that side). Top and bottom are always closed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SidePressures {
    pub left: Option<f64>,
    pub right: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GalerkinFlow {
    /// Continuum pressures per refined block `[block * n + i]`; `None` for
    /// continua without an equation.
    pub pressure: Vec<Option<f64>>,
    /// Continuum fluxes through refined edges `[edge * n + i]`.
    pub edge_flux: Vec<f64>,
    /// Mean of the two face fluxes along each axis, per refined block.
    pub block_velocity: Vec<(f64, f64)>,
}

fn dir_index(c: &GalerkinCoefficients, axis: Axis) -> Option<usize> {
    c.dirs.iter().position(|&a| a == axis)
}

/// Solves the Galerkin pressure equations on `grid` given the coefficients of
/// every block (indexed like the blocks of `grid`).
pub fn solve_galerkin_flow(grid: &CoarseGrid, n: usize, coefs: &[GalerkinCoefficients], bc: SidePressures) -> Result<GalerkinFlow> {
    if coefs.len() != grid.n_blocks() {
        return Err(Error::Input(format!("{} coefficient sets for {} blocks", coefs.len(), grid.n_blocks())));
    }
    if coefs.iter().any(|c| c.gamma.is_some()) {
        return Err(Error::Config("the Galerkin flow model does not support gravity".into()));
    }
    let mut index = vec![None; grid.n_blocks() * n];
    let mut count = 0;
    for b in 0..grid.n_blocks() {
        for i in 0..n {
            if coefs[b].present[i] {
                index[b * n + i] = Some(count);
                count += 1;
            }
        }
    }
    let (hx, hy) = grid.block_size();
    let area = grid.block_area();
    let mut a = DMatrix::<f64>::zeros(count, count);
    let mut rhs = DVector::<f64>::zeros(count);
    // Conductance matrix of an edge: alpha / distance * edge length.
    let cond = |b: usize, axis: Axis, dist_scale: f64| -> Option<DMatrix<f64>> {
        let d = dir_index(&coefs[b], axis)?;
        let (h, len) = match axis {
            Axis::X => (hx, hy),
            Axis::Y => (hy, hx),
        };
        Some(&coefs[b].alpha[d][d] * (len / (h * dist_scale)))
    };
    let mut edge_terms: Vec<Vec<(usize, usize, f64, Option<f64>)>> = vec![Vec::new(); grid.n_edges()];
    for e in 0..grid.n_edges() {
        let (axis, _, _) = grid.edge_ij(e);
        let (lo, hi) = grid.edge_blocks(e);
        // Flux_i along +axis = sum_j g_ij (P_lo,j - P_hi,j).
        let (g, lo, hi, bval) = match (lo, hi) {
            (Some(l), Some(h)) => match (cond(l, axis, 1.0), cond(h, axis, 1.0)) {
                (Some(gl), Some(gh)) => ((gl + gh) * 0.5, Some(l), Some(h), None),
                _ => continue,
            },
            (None, Some(h)) => match (axis, bc.left, cond(h, axis, 0.5)) {
                (Axis::X, Some(p), Some(g)) => (g, None, Some(h), Some(p)),
                _ => continue,
            },
            (Some(l), None) => match (axis, bc.right, cond(l, axis, 0.5)) {
                (Axis::X, Some(p), Some(g)) => (g, Some(l), None, Some(p)),
                _ => continue,
            },
            (None, None) => unreachable!(),
        };
        for i in 0..n {
            for j in 0..n {
                let gij = g[(i, j)];
                if gij == 0.0 {
                    continue;
                }
                let plo = lo.map(|b| index[b * n + j]);
                let phi = hi.map(|b| index[b * n + j]);
                // Skip couplings to continua that have no unknown on one side.
                if matches!(plo, Some(None)) || matches!(phi, Some(None)) {
                    continue;
                }
                for (side, row_block) in [(1.0, lo), (-1.0, hi)] {
                    let Some(rb) = row_block else { continue };
                    let Some(r) = index[rb * n + i] else { continue };
                    // Outward flux of block rb: side * flux.
                    if let Some(Some(c)) = plo {
                        a[(r, c)] += side * gij;
                    }
                    if let Some(Some(c)) = phi {
                        a[(r, c)] -= side * gij;
                    }
                    if let Some(p) = bval {
                        let s = if lo.is_none() { side } else { -side };
                        rhs[r] -= s * gij * p;
                    }
                }
                edge_terms[e].push((i, j, gij, bval));
            }
        }
    }
    for b in 0..grid.n_blocks() {
        for i in 0..n {
            let Some(r) = index[b * n + i] else { continue };
            for j in 0..n {
                if let Some(c) = index[b * n + j] {
                    a[(r, c)] += area * coefs[b].beta[(i, j)];
                }
            }
        }
    }
    if bc.left.is_none() && bc.right.is_none() && count > 0 {
        // Closed domain: fix the first pressure.
        a.row_mut(0).fill(0.0);
        a[(0, 0)] = 1.0;
        rhs[0] = 0.0;
    }
    let sol = if count > 0 { dense_solve(&a, &rhs)? } else { DVector::zeros(0) };
    let pressure: Vec<Option<f64>> = index.iter().map(|ix| ix.map(|c| sol[c])).collect();
    let mut edge_flux = vec![0.0; grid.n_edges() * n];
    for e in 0..grid.n_edges() {
        let (lo, hi) = grid.edge_blocks(e);
        for &(i, j, gij, bval) in &edge_terms[e] {
            let plo = lo.map_or_else(|| bval.unwrap(), |b| pressure[b * n + j].unwrap());
            let phi = hi.map_or_else(|| bval.unwrap(), |b| pressure[b * n + j].unwrap());
            edge_flux[e * n + i] += gij * (plo - phi);
        }
    }
    let mut block_velocity = vec![(0.0, 0.0); grid.n_blocks() * n];
    for b in 0..grid.n_blocks() {
        let (bi, bj) = grid.block_ij(b);
        for i in 0..n {
            let vx = 0.5 * (edge_flux[grid.vedge(bi, bj) * n + i] + edge_flux[grid.vedge(bi + 1, bj) * n + i]);
            let vy = 0.5 * (edge_flux[grid.hedge(bi, bj) * n + i] + edge_flux[grid.hedge(bi, bj + 1) * n + i]);
            block_velocity[b * n + i] = (vx, vy);
        }
    }
    Ok(GalerkinFlow { pressure, edge_flux, block_velocity })
}

/// Edge velocities on the base grid from a flow solved on a grid refined by
/// integer factors: an interior base edge takes the mean of the two adjacent
/// refined block velocities, a boundary edge takes the refined edge flux.
pub fn base_edge_velocity(base: &CoarseGrid, refined: &CoarseGrid, n: usize, flow: &GalerkinFlow) -> Result<Vec<f64>> {
    if !refined.nx.is_multiple_of(base.nx) || !refined.ny.is_multiple_of(base.ny) {
        return Err(Error::Config(format!(
            "flow grid {}x{} does not refine coarse grid {}x{}",
            refined.nx, refined.ny, base.nx, base.ny
        )));
    }
    let (rx, ry) = (refined.nx / base.nx, refined.ny / base.ny);
    let mut v = vec![0.0; base.n_edges() * n];
    for e in 0..base.n_edges() {
        let (axis, bi, bj) = base.edge_ij(e);
        // Refined edges that make up the base edge.
        let parts: Vec<usize> = match axis {
            Axis::X => (0..ry).map(|s| refined.vedge(bi * rx, bj * ry + s)).collect(),
            Axis::Y => (0..rx).map(|s| refined.hedge(bi * rx + s, bj * ry)).collect(),
        };
        for re in parts {
            let (lo, hi) = refined.edge_blocks(re);
            for i in 0..n {
                let val = match (lo, hi) {
                    (Some(l), Some(h)) => {
                        let comp = |b: usize| match axis {
                            Axis::X => flow.block_velocity[b * n + i].0,
                            Axis::Y => flow.block_velocity[b * n + i].1,
                        };
                        0.5 * (comp(l) + comp(h))
                    }
                    _ => flow.edge_flux[re * n + i],
                };
                v[e * n + i] += val;
            }
        }
    }
    Ok(v)
}
