//! Explicit upwind update of the continuum concentrations on the coarse grid.

use crate::error::{Error, Result};
use crate::grid::CoarseGrid;

/// Diagnostics of one coarse concentration step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    /// Largest fraction of a continuum's content leaving a block in one step.
    pub courant: f64,
    /// Fluxes whose donor continuum is empty (their transport is skipped).
    pub skipped: Vec<(usize, usize)>,
}

/// One step `C_k <- C_k - tau * sum_E s(E) V_k(E) c_k(donor)` where the
/// donor concentration is the continuum mean `C_k / |continuum k|` of the
/// upstream block, or the prescribed value for inflow through the boundary.
///
/// Indexing: `c` and `volume` are `[block * n + k]`, `v` and `inflow` are
/// `[edge * n + k]` (integrated fluxes oriented along +x / +y).
pub fn step_concentration(
    coarse: &CoarseGrid,
    n: usize,
    c: &[f64],
    v: &[f64],
    volume: &[f64],
    inflow: &[f64],
    tau: f64,
) -> Result<(Vec<f64>, StepReport)> {
    let mut report = StepReport::default();
    // Stability: outflow fraction per block and continuum.
    for b in 0..coarse.n_blocks() {
        for k in 0..n {
            let vol = volume[b * n + k];
            let out: f64 = coarse.block_edges(b).iter().map(|&(e, s)| (s * v[e * n + k]).max(0.0)).sum();
            if out > 0.0 && vol > 0.0 {
                report.courant = report.courant.max(tau * out / vol);
            }
        }
    }
    if report.courant > 1.0 + 1e-12 {
        return Err(Error::Cfl { courant: report.courant, required_tau: tau / report.courant });
    }
    let mut next = c.to_vec();
    for e in 0..coarse.n_edges() {
        let (lo, hi) = coarse.edge_blocks(e);
        for k in 0..n {
            let u = v[e * n + k];
            if u == 0.0 {
                continue;
            }
            let donor = if u > 0.0 { lo } else { hi };
            let conc = match donor {
                Some(d) => {
                    let vol = volume[d * n + k];
                    if vol <= 0.0 {
                        report.skipped.push((e, k));
                        continue;
                    }
                    c[d * n + k] / vol
                }
                None => {
                    let ci = inflow[e * n + k];
                    if !ci.is_finite() {
                        return Err(Error::Input(format!("inflow through coarse edge {e} has no concentration for continuum {k}")));
                    }
                    ci
                }
            };
            let q = tau * u * conc;
            if let Some(l) = lo {
                next[l * n + k] -= q;
            }
            if let Some(h) = hi {
                next[h * n + k] += q;
            }
        }
    }
    Ok((next, report))
}

/// Zeroes the content of continua that are absent from a block and returns
/// the removed amount.
pub fn drop_empty(c: &mut [f64], volume: &[f64]) -> f64 {
    let mut removed = 0.0;
    for (ci, vol) in c.iter_mut().zip(volume) {
        if *vol <= 0.0 && *ci != 0.0 {
            removed += *ci;
            *ci = 0.0;
        }
    }
    removed
}
