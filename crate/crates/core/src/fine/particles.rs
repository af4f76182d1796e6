//! Lagrangian particle transport of the concentration.
//!
//! Particles carry a concentration value and move with the velocity
//! interpolated bilinearly from the staggered face fluxes. Cell values are
//! recovered as the mean of the particles inside each cell.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::FineGrid;
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

/// Seeds `per_cell` particles uniformly in every cell. Positions depend only
/// on `(seed, cell, slot)`, so they do not change with the execution order.
pub fn seed_particles(grid: &FineGrid, c: &[f64], per_cell: usize, seed: u64) -> Vec<Particle> {
    let mut out = Vec::with_capacity(grid.n_cells() * per_cell);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..grid.n_cells() {
        let (i, j) = grid.ij(k);
        rng.set_stream(k as u64);
        for slot in 0..per_cell {
            rng.set_word_pos(4 * slot as u128);
            let a: f64 = rng.gen();
            let b: f64 = rng.gen();
            out.push(Particle {
                x: grid.x0 + (i as f64 + a) * grid.hx,
                y: grid.y0 + (j as f64 + b) * grid.hy,
                value: c[k],
            });
        }
    }
    out
}

fn bilinear(values: impl Fn(usize, usize) -> f64, s: f64, t: f64, ni: usize, nj: usize) -> f64 {
    // `s` in [0, ni - 1], `t` in [0, nj - 1] lattice coordinates.
    let i = (s.floor() as usize).min(ni.saturating_sub(2));
    let j = (t.floor() as usize).min(nj.saturating_sub(2));
    let fx = if ni > 1 { s - i as f64 } else { 0.0 };
    let fy = if nj > 1 { t - j as f64 } else { 0.0 };
    let i1 = (i + 1).min(ni - 1);
    let j1 = (j + 1).min(nj - 1);
    (1.0 - fx) * (1.0 - fy) * values(i, j)
        + fx * (1.0 - fy) * values(i1, j)
        + (1.0 - fx) * fy * values(i, j1)
        + fx * fy * values(i1, j1)
}

/// Velocity at a point from staggered face fluxes.
pub fn interpolate_velocity(grid: &FineGrid, flux: &[f64], x: f64, y: f64) -> (f64, f64) {
    let s = ((x - grid.x0) / grid.hx).clamp(0.0, grid.nx as f64);
    let t = ((y - grid.y0) / grid.hy - 0.5).clamp(0.0, (grid.ny - 1) as f64);
    let u = bilinear(|i, j| flux[grid.xface(i, j)] / grid.hy, s, t, grid.nx + 1, grid.ny);
    let s = ((x - grid.x0) / grid.hx - 0.5).clamp(0.0, (grid.nx - 1) as f64);
    let t = ((y - grid.y0) / grid.hy).clamp(0.0, grid.ny as f64);
    let v = bilinear(|i, j| flux[grid.yface(i, j)] / grid.hx, s, t, grid.nx, grid.ny + 1);
    (u, v)
}

fn reflect(v: f64, lo: f64, hi: f64) -> f64 {
    if v < lo {
        2.0 * lo - v
    } else if v > hi {
        2.0 * hi - v
    } else {
        v
    }
}

/// Moves a point over one step of length `tau` with the strong-stability
/// preserving third-order Runge-Kutta scheme, reflecting at the walls.
pub fn advance_point(grid: &FineGrid, flux: &[f64], x: f64, y: f64, tau: f64) -> (f64, f64) {
    let vel = |x: f64, y: f64| interpolate_velocity(grid, flux, x, y);
    let (u0, v0) = vel(x, y);
    let (x1, y1) = (x + tau * u0, y + tau * v0);
    let (u1, v1) = vel(x1, y1);
    let (x2, y2) = (0.75 * x + 0.25 * (x1 + tau * u1), 0.75 * y + 0.25 * (y1 + tau * v1));
    let (u2, v2) = vel(x2, y2);
    let x3 = x / 3.0 + 2.0 / 3.0 * (x2 + tau * u2);
    let y3 = y / 3.0 + 2.0 / 3.0 * (y2 + tau * v2);
    (reflect(x3, grid.x0, grid.x1()), reflect(y3, grid.y0, grid.y1()))
}

/// Advances all particles by one step.
pub fn advect(grid: &FineGrid, flux: &[f64], particles: &mut [Particle], tau: f64, exec: Exec) -> Result<()> {
    exec.for_each_mut(particles, |_, p| {
        let (x, y) = advance_point(grid, flux, p.x, p.y, tau);
        p.x = x;
        p.y = y;
    });
    if let Some(p) = particles
        .iter()
        .find(|p| !(p.x >= grid.x0 && p.x <= grid.x1() && p.y >= grid.y0 && p.y <= grid.y1()))
    {
        return Err(Error::Invariant(format!(
            "particle left the domain through a wall: ({}, {})",
            p.x, p.y
        )));
    }
    Ok(())
}

/// Cell means of the particle values, clamped to the range of the values;
/// cells without particles take the value of the nearest populated cell.
pub fn deposit(grid: &FineGrid, particles: &[Particle]) -> Vec<f64> {
    let n = grid.n_cells();
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in particles {
        let k = grid.locate(p.x, p.y);
        sum[k] += p.value;
        count[k] += 1;
        lo = lo.min(p.value);
        hi = hi.max(p.value);
    }
    let mut out = vec![f64::NAN; n];
    let mut queue = VecDeque::new();
    for k in 0..n {
        if count[k] > 0 {
            out[k] = (sum[k] / count[k] as f64).clamp(lo, hi);
            queue.push_back(k);
        }
    }
    while let Some(k) = queue.pop_front() {
        let (i, j) = grid.ij(k);
        let mut nbrs = Vec::with_capacity(4);
        if i > 0 {
            nbrs.push(grid.cell(i - 1, j));
        }
        if i + 1 < grid.nx {
            nbrs.push(grid.cell(i + 1, j));
        }
        if j > 0 {
            nbrs.push(grid.cell(i, j - 1));
        }
        if j + 1 < grid.ny {
            nbrs.push(grid.cell(i, j + 1));
        }
        for m in nbrs {
            if out[m].is_nan() {
                out[m] = out[k];
                queue.push_back(m);
            }
        }
    }
    out
}
