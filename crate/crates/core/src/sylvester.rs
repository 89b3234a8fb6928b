//! Sylvester equations `AX + BL = XS` via complex Schur back-substitution.
//!
//! Both `A` and `S` are reduced to upper-triangular Schur form, the
//! transformed equation is solved column by column, and the result is mapped
//! back. Existence and uniqueness require disjoint spectra, which is checked
//! up front.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, complex_schur, CMat};

/// Relative separation under which two spectra are treated as overlapping.
pub const SPECTRAL_SEPARATION: f64 = 1e-8;
/// Relative residual accepted for a Sylvester solution.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Condition estimate above which the Sylvester operator is rejected.
pub const CONDITION_MAX: f64 = 1e14;

#[derive(Debug, Clone)]
pub struct SylvesterSolution {
    pub x: DMatrix<f64>,
    /// `‖AX + BL − XS‖_F`
    pub residual_norm: f64,
}

fn separation(e1: &[Complex64], e2: &[Complex64]) -> (f64, f64) {
    let scale = linalg::spectral_radius(e1).max(linalg::spectral_radius(e2));
    (linalg::min_distance(e1, e2), SPECTRAL_SEPARATION * scale)
}

/// True iff the spectra of `m1` and `m2` are further apart than
/// `1e-8 · max(ρ(m1), ρ(m2))`.
pub fn spectra_disjoint(m1: &DMatrix<f64>, m2: &DMatrix<f64>) -> Result<bool> {
    let e1 = linalg::eigenvalues(m1)?;
    let e2 = linalg::eigenvalues(m2)?;
    let (d, thr) = separation(&e1, &e2);
    Ok(d > thr)
}

/// Solves `A X − X S = C` for upper-triangular Schur forms and returns `X`.
fn solve_triangular_sylvester(ta: &CMat, ts: &CMat, c: &CMat) -> CMat {
    let n = ta.nrows();
    let nu = ts.nrows();
    let mut y = CMat::zeros(n, nu);
    for j in 0..nu {
        let mut rhs = c.column(j).into_owned();
        for k in 0..j {
            let skj = ts[(k, j)];
            if skj != Complex64::new(0.0, 0.0) {
                rhs += y.column(k) * skj;
            }
        }
        let shift = ts[(j, j)];
        for i in (0..n).rev() {
            let mut acc = rhs[i];
            for l in (i + 1)..n {
                acc -= ta[(i, l)] * y[(l, j)];
            }
            y[(i, j)] = acc / (ta[(i, i)] - shift);
        }
    }
    y
}

/// Solves `AX − XS = C` for real data via Bartels–Stewart on complex Schur forms.
pub(crate) fn solve_general(a: &DMatrix<f64>, s: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let nu = s.nrows();
    if a.ncols() != n || s.ncols() != nu || c.nrows() != n || c.ncols() != nu {
        return Err(Error::DimensionMismatch(format!(
            "Sylvester data: A {}x{}, S {}x{}, rhs {}x{}",
            a.nrows(),
            a.ncols(),
            s.nrows(),
            s.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    let sa = complex_schur(a)?;
    let ss = complex_schur(s)?;
    let ea = sa.eigenvalues();
    let es = ss.eigenvalues();
    let (dist, thr) = separation(&ea, &es);
    if dist <= thr {
        return Err(Error::SpectraOverlap {
            distance: dist,
            threshold: thr,
        });
    }
    let cond = (a.norm() + s.norm()) / dist;
    if cond > CONDITION_MAX {
        return Err(Error::IllConditioned(format!(
            "Sylvester operator condition estimate {cond:.3e} exceeds {CONDITION_MAX:.0e}"
        )));
    }
    let ct = sa.q.adjoint() * linalg::complexify(c) * &ss.q;
    let y = solve_triangular_sylvester(&sa.t, &ss.t, &ct);
    let x = &sa.q * y * ss.q.adjoint();
    Ok(linalg::real_part(&x))
}

/// The unique `X` with `AX + BL = XS`.
pub fn solve_sylvester(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    l: &RowDVector<f64>,
    s: &DMatrix<f64>,
) -> Result<SylvesterSolution> {
    if b.len() != a.nrows() || l.len() != s.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "Sylvester data: B has {} rows for A of order {}, L has {} columns for S of order {}",
            b.len(),
            a.nrows(),
            l.len(),
            s.nrows()
        )));
    }
    let bl = b * l;
    let x = solve_general(a, s, &(-&bl))?;
    let residual_norm = (a * &x + &bl - &x * s).norm();
    let allowed = RESIDUAL_TOL * (a.norm() + s.norm()) * x.norm();
    if residual_norm > allowed {
        return Err(Error::IllConditioned(format!(
            "Sylvester residual {residual_norm:.3e} exceeds {allowed:.3e}"
        )));
    }
    Ok(SylvesterSolution { x, residual_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn row(v: &[f64]) -> RowDVector<f64> {
        RowDVector::from_row_slice(v)
    }

    #[test]
    fn disjointness_examples() {
        assert!(spectra_disjoint(&dmatrix![-1.0], &dmatrix![0.0]).unwrap());
        assert!(!spectra_disjoint(&dmatrix![-1.0], &dmatrix![-1.0]).unwrap());
        let r2a = dmatrix![0.0, 1.0; -2.0, -3.0];
        assert!(spectra_disjoint(&r2a, &dmatrix![0.0, 1.0; -1.0, 0.0]).unwrap());
    }

    #[test]
    fn scalar_examples() {
        let x = solve_sylvester(&dmatrix![-1.0], &dvector![1.0], &row(&[1.0]), &dmatrix![0.0]).unwrap();
        assert!((x.x[(0, 0)] - 1.0).abs() < 1e-15);
        let x = solve_sylvester(&dmatrix![-1.0], &dvector![1.0], &row(&[1.0]), &dmatrix![1.0]).unwrap();
        assert!((x.x[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn second_order_at_origin() {
        let a = dmatrix![0.0, 1.0; -2.0, -3.0];
        let b = dvector![0.0, 1.0];
        let sol = solve_sylvester(&a, &b, &row(&[1.0]), &dmatrix![0.0]).unwrap();
        // oracle: A X = -B solved by LU
        let oracle = a.clone().lu().solve(&(-&b)).unwrap();
        assert!((sol.x.column(0) - &oracle).norm() < 1e-14);
        assert!((sol.x[(0, 0)] - 0.5).abs() < 1e-14 && sol.x[(1, 0)].abs() < 1e-14);
    }

    #[test]
    fn overlapping_spectra_rejected() {
        let err = solve_sylvester(&dmatrix![-1.0], &dvector![1.0], &row(&[1.0]), &dmatrix![-1.0]).unwrap_err();
        assert!(matches!(err, Error::SpectraOverlap { .. }));
    }

    #[test]
    fn skew_generator_against_stable_system() {
        let a = dmatrix![-0.5, 2.0, 0.0; -2.0, -0.5, 1.0; 0.0, 0.0, -3.0];
        let b = dvector![1.0, 0.0, 2.0];
        let s = dmatrix![0.0, 1.0, 0.0, 0.0; -1.0, 0.0, 0.0, 0.0; 0.0, 0.0, 0.0, 5.0; 0.0, 0.0, -5.0, 0.0];
        let l = row(&[0.5, 0.5, 0.5, 0.5]);
        let sol = solve_sylvester(&a, &b, &l, &s).unwrap();
        assert!(sol.residual_norm < 1e-12 * sol.x.norm());
    }
}
