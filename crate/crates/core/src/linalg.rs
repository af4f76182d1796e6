//! Sparse symmetric positive definite systems: assembly, a direct sparse
//! Cholesky backend and a Jacobi-preconditioned conjugate gradient backend.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Which backend factorizes/solves SPD systems.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SolverKind {
    #[default]
    Direct,
    Pcg { tol: f64 },
}

/// Accumulates entries of a symmetric matrix (duplicates are summed).
#[derive(Debug, Clone, Default)]
pub struct SymBuilder {
    pub n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SymBuilder {
    pub fn new(n: usize) -> Self {
        Self { n, entries: Vec::new() }
    }
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.entries.push((i, j, v));
    }
    /// Adds the two-point coupling `t * (e_a - e_b)(e_a - e_b)^T`.
    pub fn add_pair(&mut self, a: usize, b: usize, t: f64) {
        self.entries.push((a, a, t));
        self.entries.push((b, b, t));
        self.entries.push((a, b, -t));
        self.entries.push((b, a, -t));
    }

    /// Sparse matrix with index `pin` removed (rows and columns), used to
    /// fix the gauge of a pure Neumann operator.
    pub fn build_without(&self, pin: Option<usize>) -> Result<SpdMatrix> {
        let map = |i: usize| -> Option<usize> {
            match pin {
                Some(p) if i == p => None,
                Some(p) if i > p => Some(i - 1),
                _ => Some(i),
            }
        };
        let n = if pin.is_some() { self.n - 1 } else { self.n };
        let trip: Vec<Triplet<usize, usize, f64>> = self
            .entries
            .iter()
            .filter_map(|&(i, j, v)| Some(Triplet::new(map(i)?, map(j)?, v)))
            .collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
            .map_err(|e| Error::Assembly(format!("sparse assembly failed: {e:?}")))?;
        Ok(SpdMatrix { n, mat })
    }
    pub fn build(&self) -> Result<SpdMatrix> {
        self.build_without(None)
    }

    /// Dense copy, for small problems and test oracles.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct SpdMatrix {
    pub n: usize,
    pub mat: SparseColMat<usize, f64>,
}

impl SpdMatrix {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let m = self.mat.as_ref();
        let cp = m.symbolic().col_ptr();
        let ri = m.symbolic().row_idx();
        let vals = m.val();
        for j in 0..self.n {
            let xj = x[j];
            for k in cp[j]..cp[j + 1] {
                y[ri[k]] += vals[k] * xj;
            }
        }
    }
    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        let m = self.mat.as_ref();
        let cp = m.symbolic().col_ptr();
        let ri = m.symbolic().row_idx();
        let vals = m.val();
        for j in 0..self.n {
            for k in cp[j]..cp[j + 1] {
                if ri[k] == j {
                    d[j] += vals[k];
                }
            }
        }
        d
    }

    pub fn factor(self, kind: SolverKind) -> Result<Factor> {
        match kind {
            SolverKind::Direct => {
                if self.n == 0 {
                    return Ok(Factor::Empty);
                }
                let llt = self
                    .mat
                    .sp_cholesky(Side::Lower)
                    .map_err(|e| Error::Solver(format!("sparse Cholesky failed: {e:?}")))?;
                Ok(Factor::Direct { n: self.n, llt })
            }
            SolverKind::Pcg { tol } => {
                let inv_diag = self
                    .diagonal()
                    .iter()
                    .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
                    .collect();
                Ok(Factor::Pcg { a: self, inv_diag, tol })
            }
        }
    }
}

pub enum Factor {
    Empty,
    Direct { n: usize, llt: Llt<usize, f64> },
    Pcg { a: SpdMatrix, inv_diag: Vec<f64>, tol: f64 },
}

impl Factor {
    pub fn n(&self) -> usize {
        match self {
            Factor::Empty => 0,
            Factor::Direct { n, .. } => *n,
            Factor::Pcg { a, .. } => a.n,
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_warm(b, None)
    }

    /// Solves with an optional initial guess (used by the iterative backend).
    pub fn solve_warm(&self, b: &[f64], x0: Option<&[f64]>) -> Result<Vec<f64>> {
        match self {
            Factor::Empty => Ok(Vec::new()),
            Factor::Direct { n, llt } => {
                let rhs = Mat::<f64>::from_fn(*n, 1, |i, _| b[i]);
                let x = llt.solve(&rhs);
                Ok((0..*n).map(|i| x[(i, 0)]).collect())
            }
            Factor::Pcg { a, inv_diag, tol } => pcg(a, inv_diag, b, x0, *tol, 20 * a.n.max(1)),
        }
    }

    pub fn solve_many(&self, bs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        match self {
            Factor::Direct { n, llt } if !bs.is_empty() => {
                let rhs = Mat::<f64>::from_fn(*n, bs.len(), |i, c| bs[c][i]);
                let x = llt.solve(&rhs);
                Ok((0..bs.len()).map(|c| (0..*n).map(|i| x[(i, c)]).collect()).collect())
            }
            _ => bs.iter().map(|b| self.solve(b)).collect(),
        }
    }
}

/// Jacobi-preconditioned conjugate gradients; convergence is declared when
/// the residual norm drops below `tol` times the right-hand-side norm.
pub fn pcg(
    a: &SpdMatrix,
    inv_diag: &[f64],
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = a.n;
    let bnorm = norm(b);
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        if norm(&r) <= tol * bnorm {
            return Ok(x);
        }
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Solver("conjugate gradients met a non-positive curvature".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if norm(&r) <= tol * bnorm {
        return Ok(x);
    }
    Err(Error::Solver(format!(
        "conjugate gradients did not reach relative residual {tol:e} in {max_iter} iterations (reached {:e})",
        norm(&r) / bnorm
    )))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves a small dense system with full-pivot LU, reporting singularity.
pub fn dense_solve(m: &nalgebra::DMatrix<f64>, b: &nalgebra::DVector<f64>) -> Result<nalgebra::DVector<f64>> {
    let lu = m.clone().full_piv_lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::Solver(format!("dense {}x{} system is singular", m.nrows(), m.ncols())))?;
    let scale = m.amax().max(1e-300) * x.amax().max(1.0);
    let res = (m * &x - b).amax();
    if !res.is_finite() || res > 1e-6 * scale.max(b.amax()) {
        return Err(Error::Solver(format!(
            "dense {}x{} system is numerically singular (residual {res:e})",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> SymBuilder {
        let mut b = SymBuilder::new(n);
        for i in 0..n - 1 {
            b.add_pair(i, i + 1, 1.0 + (i % 3) as f64);
        }
        b.add(0, 0, 1.0);
        b
    }

    #[test]
    fn direct_and_pcg_agree_with_dense() {
        let b = laplacian(40);
        let rhs: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).sin()).collect();
        let dense = b.to_dense();
        let xd = dense_solve(&dense, &nalgebra::DVector::from_vec(rhs.clone())).unwrap();
        let x1 = b.build().unwrap().factor(SolverKind::Direct).unwrap().solve(&rhs).unwrap();
        let x2 = b.build().unwrap().factor(SolverKind::Pcg { tol: 1e-12 }).unwrap().solve(&rhs).unwrap();
        for i in 0..40 {
            assert!((x1[i] - xd[i]).abs() < 1e-9);
            assert!((x2[i] - xd[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn pinned_neumann_solve() {
        let mut b = SymBuilder::new(5);
        for i in 0..4 {
            b.add_pair(i, i + 1, 2.0);
        }
        let f = b.build_without(Some(0)).unwrap().factor(SolverKind::Direct).unwrap();
        // Unit flux from cell 0 to cell 4.
        let x = f.solve(&[0.0, 0.0, 0.0, -1.0]).unwrap();
        assert!((x[3] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn pcg_reports_non_convergence() {
        let b = laplacian(50);
        let a = b.build().unwrap();
        let d: Vec<f64> = a.diagonal().iter().map(|v| 1.0 / v).collect();
        let rhs = vec![1.0; 50];
        assert!(matches!(pcg(&a, &d, &rhs, None, 1e-14, 2), Err(Error::Solver(_))));
    }
}
