//! Explicit donor-cell transport of the concentration.

use crate::error::{Error, Result};
use crate::grid::FineGrid;
use crate::tpfa;

/// Courant number `tau / h * max |v|` with `h` the cell diagonal and `v`
/// the cell-reconstructed velocity.
pub fn cfl(grid: &FineGrid, flux: &[f64], tau: f64) -> f64 {
    let h = (grid.hx * grid.hx + grid.hy * grid.hy).sqrt();
    let vmax = (0..grid.n_cells())
        .map(|k| {
            let (u, v) = tpfa::cell_velocity(grid, flux, k);
            (u * u + v * v).sqrt()
        })
        .fold(0.0, f64::max);
    tau / h * vmax
}

/// Largest fraction of a cell emptied in one step; the donor-cell update
/// stays a convex combination while this is at most one.
pub fn donor_courant(grid: &FineGrid, flux: &[f64], tau: f64) -> f64 {
    let area = grid.cell_area();
    (0..grid.n_cells())
        .map(|k| {
            grid.cell_faces(k).iter().map(|&(f, s)| (s * flux[f]).max(0.0)).sum::<f64>() * tau / area
        })
        .fold(0.0, f64::max)
}

/// Checks the step size and returns the Courant number. Refuses steps that
/// would break monotonicity and warns close to the limit.
pub fn check_step(grid: &FineGrid, flux: &[f64], tau: f64) -> Result<f64> {
    let c = donor_courant(grid, flux, tau);
    if c > 1.0 + 1e-12 {
        return Err(Error::Cfl { courant: c, required_tau: tau / c });
    }
    if c > 0.9 {
        log::warn!("transport Courant number {c:.3} is close to the stability limit");
    }
    Ok(c)
}

/// One forward-Euler donor-cell step. `boundary_c` gives the concentration
/// carried by inflow through boundary faces (indexed by face).
pub fn upwind_step(
    grid: &FineGrid,
    c: &[f64],
    flux: &[f64],
    tau: f64,
    boundary_c: Option<&[f64]>,
) -> Result<Vec<f64>> {
    check_step(grid, flux, tau)?;
    let area = grid.cell_area();
    let mut out = c.to_vec();
    for f in 0..grid.n_faces() {
        let u = flux[f];
        if u == 0.0 {
            continue;
        }
        let (l, r) = grid.face_cells(f);
        let up = if u > 0.0 { l } else { r };
        let value = match up {
            Some(k) => c[k],
            None => match boundary_c {
                Some(b) => b[f],
                None => {
                    return Err(Error::Input(format!("inflow through boundary face {f} without an inflow concentration")))
                }
            },
        };
        let q = tau * u * value / area;
        if let Some(l) = l {
            out[l] -= q;
        }
        if let Some(r) = r {
            out[r] += q;
        }
    }
    Ok(out)
}

/// Advances by `tau` with as many equal donor-cell substeps as needed to
/// keep each one monotone. The flux is frozen over the step.
pub fn upwind_substeps(
    grid: &FineGrid,
    c: &[f64],
    flux: &[f64],
    tau: f64,
    boundary_c: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = donor_courant(grid, flux, tau).ceil().max(1.0) as usize;
    let dt = tau / n as f64;
    let mut out = upwind_step(grid, c, flux, dt, boundary_c)?;
    for _ in 1..n {
        out = upwind_step(grid, &out, flux, dt, boundary_c)?;
    }
    Ok(out)
}
