//! Discrete L2 error metrics between reference averages and coarse results.

use crate::error::{Error, Result};

/// Time series of continuum contents `[block * n + k]` and edge velocities
/// `[edge * n + k]`.
#[derive(Debug, Clone, Copy)]
pub struct Series<'a> {
    pub times: &'a [f64],
    pub c: &'a [Vec<f64>],
    pub v: &'a [Vec<f64>],
}

/// Errors at one time level, in percent (absolute values where noted).
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub time: f64,
    /// Velocity error per continuum: relative, or absolute where the
    /// reference velocity of the continuum is negligible.
    pub e_v: Vec<f64>,
    pub e_v_is_absolute: Vec<bool>,
    /// Absolute L2 velocity error per continuum.
    pub e_v_abs: Vec<f64>,
    /// Relative velocity error over all continua together.
    pub e_v_global: f64,
    /// `|C(V_ref) - C_ref| / |C_ref|`.
    pub e_c_ref_velocity: Vec<f64>,
    /// `|C(V_mh) - C_ref| / |C_ref|`.
    pub e_c_mh_velocity: Vec<f64>,
    /// `|C(V_mh) - C(V_ref)| / |C(V_ref)|`.
    pub e_c_between: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub n: usize,
    pub series: Vec<ErrorRow>,
}

impl ErrorReport {
    pub fn final_row(&self) -> &ErrorRow {
        self.series.last().expect("report has at least one time level")
    }
}

/// Relative L2 error in percent; zero when both vectors vanish.
pub fn relative_l2(approx: &[f64], reference: &[f64]) -> f64 {
    let (d, r) = l2_pair(approx, reference);
    if r == 0.0 {
        if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        100.0 * d / r
    }
}

fn l2_pair(approx: &[f64], reference: &[f64]) -> (f64, f64) {
    let mut d = 0.0;
    let mut r = 0.0;
    for (a, b) in approx.iter().zip(reference) {
        d += (a - b) * (a - b);
        r += b * b;
    }
    (d.sqrt(), r.sqrt())
}

fn component(x: &[f64], n: usize, k: usize, items: &[usize]) -> Vec<f64> {
    items.iter().map(|&e| x[e * n + k]).collect()
}

fn check_aligned(reference: &[f64], other: &[f64]) -> Result<()> {
    let missing: Vec<f64> = reference
        .iter()
        .filter(|t| !other.iter().any(|o| (*o - **t).abs() <= 1e-9 * t.abs().max(1.0)))
        .copied()
        .collect();
    if missing.is_empty() && reference.len() == other.len() {
        Ok(())
    } else {
        Err(Error::Misaligned { missing })
    }
}

/// Velocity norms below this fraction of the all-continua norm switch the
/// continuum to the absolute error.
pub const NEGLIGIBLE_VELOCITY: f64 = 1e-8;

/// Computes all error variants at every time level. `edges` selects the
/// edges entering the velocity errors; `blocks` the blocks of the content
/// errors.
pub fn compute_errors(
    n: usize,
    reference: Series,
    with_ref_velocity: Series,
    with_mh_velocity: Series,
    edges: &[usize],
    blocks: &[usize],
) -> Result<ErrorReport> {
    check_aligned(reference.times, with_ref_velocity.times)?;
    check_aligned(reference.times, with_mh_velocity.times)?;
    let mut series = Vec::with_capacity(reference.times.len());
    for (m, &time) in reference.times.iter().enumerate() {
        let vr_all: Vec<f64> = (0..n).flat_map(|k| component(&reference.v[m], n, k, edges)).collect();
        let vm_all: Vec<f64> = (0..n).flat_map(|k| component(&with_mh_velocity.v[m], n, k, edges)).collect();
        let r_all = l2_pair(&vm_all, &vr_all).1;
        let mut row = ErrorRow {
            time,
            e_v: Vec::with_capacity(n),
            e_v_is_absolute: Vec::with_capacity(n),
            e_v_abs: Vec::with_capacity(n),
            e_v_global: relative_l2(&vm_all, &vr_all),
            e_c_ref_velocity: Vec::with_capacity(n),
            e_c_mh_velocity: Vec::with_capacity(n),
            e_c_between: Vec::with_capacity(n),
        };
        for k in 0..n {
            let vr = component(&reference.v[m], n, k, edges);
            let vm = component(&with_mh_velocity.v[m], n, k, edges);
            let (d, r) = l2_pair(&vm, &vr);
            let absolute = r < NEGLIGIBLE_VELOCITY * r_all || r == 0.0;
            row.e_v_abs.push(d);
            row.e_v_is_absolute.push(absolute);
            row.e_v.push(if absolute { d } else { 100.0 * d / r });
            let cr = component(&reference.c[m], n, k, blocks);
            let c1 = component(&with_ref_velocity.c[m], n, k, blocks);
            let c2 = component(&with_mh_velocity.c[m], n, k, blocks);
            row.e_c_ref_velocity.push(relative_l2(&c1, &cr));
            row.e_c_mh_velocity.push(relative_l2(&c2, &cr));
            row.e_c_between.push(relative_l2(&c2, &c1));
        }
        series.push(row);
    }
    Ok(ErrorReport { n, series })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_series_have_zero_error() {
        let times = vec![0.0, 0.5];
        let c = vec![vec![1.0, 0.2, 0.5, 0.0], vec![0.9, 0.3, 0.4, 0.1]];
        let v = vec![vec![0.0, 0.0, 1.0, -1.0, 0.0, 0.0]; 2];
        let s = Series { times: &times, c: &c, v: &v };
        let r = compute_errors(2, s, s, s, &[0, 1, 2], &[0, 1]).unwrap();
        for row in &r.series {
            assert!(row.e_v.iter().chain(&row.e_c_between).chain(&row.e_c_mh_velocity).all(|e| *e == 0.0));
        }
    }

    #[test]
    fn halved_values_give_fifty_percent() {
        let times = vec![1.0];
        let c_ref = vec![vec![2.0, 4.0, 6.0, 8.0]];
        let c_mh = vec![vec![1.0, 2.0, 3.0, 4.0]];
        let v_ref = vec![vec![2.0, 2.0]];
        let v_mh = vec![vec![1.0, 1.0]];
        let r = compute_errors(
            2,
            Series { times: &times, c: &c_ref, v: &v_ref },
            Series { times: &times, c: &c_mh, v: &v_mh },
            Series { times: &times, c: &c_mh, v: &v_mh },
            &[0],
            &[0, 1],
        )
        .unwrap();
        let row = r.final_row();
        assert!((row.e_c_ref_velocity[0] - 50.0).abs() < 1e-12);
        assert!((row.e_v[1] - 50.0).abs() < 1e-12);
        assert_eq!(row.e_c_between[0], 0.0);
    }

    #[test]
    fn negligible_reference_velocity_uses_absolute_error() {
        let times = vec![0.0];
        let c = vec![vec![1.0, 1.0]];
        let v_ref = vec![vec![1.0, 0.0]];
        let v_mh = vec![vec![1.0, 0.25]];
        let s = Series { times: &times, c: &c, v: &v_ref };
        let m = Series { times: &times, c: &c, v: &v_mh };
        let row = compute_errors(2, s, s, m, &[0], &[0]).unwrap().series.remove(0);
        assert!(row.e_v_is_absolute[1]);
        assert_eq!(row.e_v[1], 0.25);
        assert!(!row.e_v_is_absolute[0]);
    }

    #[test]
    fn misaligned_times_are_listed() {
        let c = vec![vec![1.0]; 2];
        let v = vec![vec![0.0]; 2];
        let t1 = vec![0.0, 1.0];
        let t2 = vec![0.0, 2.0];
        let err = compute_errors(
            1,
            Series { times: &t1, c: &c, v: &v },
            Series { times: &t2, c: &c, v: &v },
            Series { times: &t1, c: &c, v: &v },
            &[0],
            &[0],
        )
        .unwrap_err();
        match err {
            Error::Misaligned { missing } => assert_eq!(missing, vec![1.0]),
            e => panic!("unexpected {e:?}"),
        }
    }
}
