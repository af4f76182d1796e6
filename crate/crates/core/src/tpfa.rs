//! Two-point flux approximation on a rectangular grid.
//!
//! Face flux `u_f = T_f (p_neg - p_pos + g_f)` with harmonic transmissibility
//! `T_f`, where `g_f` is an optional body-force term. The discrete divergence
//! of a face flux field is the net outflow of each cell.

use crate::grid::{Axis, FineGrid};
use crate::linalg::SymBuilder;

/// Per-face transmissibilities. Interior faces use the harmonic average of
/// the two cells; boundary faces hold the half-cell value (used by Dirichlet
/// conditions).
pub fn transmissibilities(grid: &FineGrid, lambda: &[f64]) -> Vec<f64> {
    (0..grid.n_faces())
        .map(|f| {
            let d = grid.spacing(grid.face_axis(f));
            let a = grid.face_area(f);
            match grid.face_cells(f) {
                (Some(l), Some(r)) => {
                    let (ll, lr) = (lambda[l], lambda[r]);
                    2.0 * a * ll * lr / (d * (ll + lr))
                }
                (Some(k), None) | (None, Some(k)) => 2.0 * a * lambda[k] / d,
                (None, None) => unreachable!(),
            }
        })
        .collect()
}

/// Neumann stiffness matrix `D diag(T) D^T` over interior faces.
pub fn neumann_stiffness(grid: &FineGrid, trans: &[f64]) -> SymBuilder {
    let mut b = SymBuilder::new(grid.n_cells());
    for f in 0..grid.n_faces() {
        if let (Some(l), Some(r)) = grid.face_cells(f) {
            b.add_pair(l, r, trans[f]);
        }
    }
    b
}

/// Net outflow of every cell.
pub fn divergence(grid: &FineGrid, flux: &[f64]) -> Vec<f64> {
    let mut d = vec![0.0; grid.n_cells()];
    for f in 0..grid.n_faces() {
        let (l, r) = grid.face_cells(f);
        if let Some(l) = l {
            d[l] += flux[f];
        }
        if let Some(r) = r {
            d[r] -= flux[f];
        }
    }
    d
}

/// Interior face fluxes of a cell potential (boundary faces get zero).
pub fn interior_flux(grid: &FineGrid, trans: &[f64], p: &[f64], g: Option<&[f64]>) -> Vec<f64> {
    (0..grid.n_faces())
        .map(|f| match grid.face_cells(f) {
            (Some(l), Some(r)) => trans[f] * (p[l] - p[r] + g.map_or(0.0, |g| g[f])),
            _ => 0.0,
        })
        .collect()
}

/// Arithmetic mean of a cell field across each face (the inside value on
/// boundary faces).
pub fn face_mean(grid: &FineGrid, field: &[f64], f: usize) -> f64 {
    match grid.face_cells(f) {
        (Some(l), Some(r)) => 0.5 * (field[l] + field[r]),
        (Some(k), None) | (None, Some(k)) => field[k],
        (None, None) => unreachable!(),
    }
}

/// Body-force term for a downward-x load `density * e1` on interior faces.
pub fn gravity_term(grid: &FineGrid, density: &[f64]) -> Vec<f64> {
    (0..grid.n_faces())
        .map(|f| match (grid.face_axis(f), grid.face_cells(f)) {
            (Axis::X, (Some(l), Some(r))) => 0.5 * (density[l] + density[r]) * grid.hx,
            _ => 0.0,
        })
        .collect()
}

/// Reconstructs cell-centred velocity components from face fluxes.
pub fn cell_velocity(grid: &FineGrid, flux: &[f64], k: usize) -> (f64, f64) {
    let (i, j) = grid.ij(k);
    let u = 0.5 * (flux[grid.xface(i, j)] + flux[grid.xface(i + 1, j)]) / grid.hy;
    let v = 0.5 * (flux[grid.yface(i, j)] + flux[grid.yface(i, j + 1)]) / grid.hx;
    (u, v)
}
