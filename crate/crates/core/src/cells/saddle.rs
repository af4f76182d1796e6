//! Constrained minimization of a Neumann energy:
//!
//! `min 1/2 x^T A x - s^T x` subject to `E x = t`,
//!
//! where `A` is a singular Neumann stiffness whose kernel is the constants.
//! One unknown is eliminated to obtain an SPD matrix; the constraints and
//! the constant mode are handled by a small dense Schur complement.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{Factor, SolverKind, SymBuilder};

/// Sparse constraint row.
pub type Row = Vec<(usize, f64)>;

pub struct SaddleSolver {
    n: usize,
    factor: Factor,
    rows: Vec<Row>,
    /// `A_pp^{-1} E_p^T` column per constraint row (length `n - 1`).
    z: Vec<Vec<f64>>,
    e1: Vec<f64>,
    schur: nalgebra::linalg::FullPivLU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

/// Solution of one right-hand side.
#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub x: Vec<f64>,
    /// Lagrange multipliers, one per constraint row (`A x + E^T mu = s`).
    pub mu: Vec<f64>,
}

fn reduced(v: &[f64]) -> Vec<f64> {
    v[1..].to_vec()
}

impl SaddleSolver {
    /// `a` must be a connected Neumann stiffness (kernel = constants) and the
    /// rows must be linearly independent with at least one of them having a
    /// nonzero sum.
    pub fn new(a: &SymBuilder, rows: Vec<Row>, kind: SolverKind) -> Result<Self> {
        let n = a.n;
        if n < 2 {
            return Err(Error::Input("constrained problem needs at least two cells".into()));
        }
        let factor = a.build_without(Some(0))?.factor(kind)?;
        let m = rows.len();
        let rhs: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let mut v = vec![0.0; n - 1];
                for &(k, w) in r {
                    if k > 0 {
                        v[k - 1] += w;
                    }
                }
                v
            })
            .collect();
        let z = factor.solve_many(&rhs)?;
        let e1: Vec<f64> = rows.iter().map(|r| r.iter().map(|(_, w)| w).sum()).collect();
        let mut k = DMatrix::<f64>::zeros(m + 1, m + 1);
        for r in 0..m {
            for s in 0..m {
                let v: f64 = rows[r].iter().filter(|(c, _)| *c > 0).map(|&(c, w)| w * z[s][c - 1]).sum();
                k[(r, s)] = -v;
            }
            k[(r, m)] = e1[r];
            k[(m, r)] = e1[r];
        }
        let lu = k.clone().full_piv_lu();
        let scale = k.amax().max(1e-300);
        let min_pivot = (0..=m).map(|i| lu.u()[(i, i)].abs()).fold(f64::INFINITY, f64::min);
        if !(min_pivot > 1e-13 * scale) {
            return Err(Error::Solver(format!(
                "constraint set is rank-deficient ({m} rows, smallest pivot {min_pivot:e})"
            )));
        }
        Ok(Self { n, factor, rows, z, e1, schur: lu })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Solves for several (load, target) pairs.
    pub fn solve_many(&self, cases: &[(Option<&[f64]>, &[f64])]) -> Result<Vec<SaddleSolution>> {
        let m = self.rows.len();
        let loads: Vec<Vec<f64>> = cases
            .iter()
            .map(|(s, _)| s.map_or_else(|| vec![0.0; self.n - 1], reduced))
            .collect();
        let any_load = cases.iter().any(|(s, _)| s.is_some());
        let zs = if any_load { self.factor.solve_many(&loads)? } else { vec![vec![0.0; self.n - 1]; cases.len()] };
        let mut out = Vec::with_capacity(cases.len());
        for (c, (s, t)) in cases.iter().enumerate() {
            if t.len() != m {
                return Err(Error::Input(format!("expected {m} constraint targets, got {}", t.len())));
            }
            let zsc = &zs[c];
            let mut rhs = DVector::<f64>::zeros(m + 1);
            for r in 0..m {
                let ez: f64 = self.rows[r].iter().filter(|(k, _)| *k > 0).map(|&(k, w)| w * zsc[k - 1]).sum();
                rhs[r] = t[r] - ez;
            }
            rhs[m] = s.map_or(0.0, |s| s.iter().sum());
            let sol = self
                .schur
                .solve(&rhs)
                .ok_or_else(|| Error::Solver("constraint Schur complement is singular".into()))?;
            let a = sol[m];
            let mut x = vec![a; self.n];
            for k in 1..self.n {
                let mut w = zsc[k - 1];
                for r in 0..m {
                    w -= sol[r] * self.z[r][k - 1];
                }
                x[k] += w;
            }
            out.push(SaddleSolution { x, mu: (0..m).map(|r| sol[r]).collect() });
        }
        Ok(out)
    }

    /// Largest absolute constraint violation of a solution.
    pub fn constraint_residual(&self, x: &[f64], t: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(t)
            .map(|(r, t)| (r.iter().map(|&(k, w)| w * x[k]).sum::<f64>() - t).abs())
            .fold(0.0, f64::max)
    }

    pub fn row_sums(&self) -> &[f64] {
        &self.e1
    }
}

/// Dense reference: assembles the full KKT matrix and solves it with LU.
pub fn dense_kkt(a: &SymBuilder, rows: &[Row], load: Option<&[f64]>, targets: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = a.n;
    let m = rows.len();
    let mut k = DMatrix::<f64>::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(&a.to_dense());
    for (r, row) in rows.iter().enumerate() {
        for &(c, w) in row {
            k[(n + r, c)] += w;
            k[(c, n + r)] += w;
        }
    }
    let mut rhs = DVector::<f64>::zeros(n + m);
    if let Some(s) = load {
        for i in 0..n {
            rhs[i] = s[i];
        }
    }
    for r in 0..m {
        rhs[n + r] = targets[r];
    }
    let sol = crate::linalg::dense_solve(&k, &rhs)?;
    Ok(((0..n).map(|i| sol[i]).collect(), (0..m).map(|r| sol[n + r]).collect()))
}
