//! Dense linear-algebra helpers shared by the numerical modules.
//!
//! Real matrices are `DMatrix<f64>`; anything that needs eigenvectors or
//! resolvents at complex points is lifted to `DMatrix<Complex64>`.

use nalgebra::{DMatrix, DVector, Schur, LU, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

pub fn complexify(m: &Mat) -> CMat {
    m.map(|v| Complex64::new(v, 0.0))
}

pub fn real_part(m: &CMat) -> Mat {
    m.map(|v| v.re)
}

pub fn imag_norm(m: &CMat) -> f64 {
    m.iter().map(|v| v.im * v.im).sum::<f64>().sqrt()
}

fn ensure_finite(m: &Mat, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::EigenFailure(format!("{what} has non-finite entries")))
    }
}

/// Real Schur form `m = q t qᵀ` with `t` upper quasi-triangular.
pub fn real_schur(m: &Mat) -> Result<(Mat, Mat)> {
    ensure_finite(m, "matrix")?;
    let n = m.nrows();
    let max_iter = 100 * n.max(1) + 200;
    let schur = Schur::try_new(m.clone(), f64::EPSILON, max_iter)
        .ok_or_else(|| Error::EigenFailure(format!("Schur iteration did not converge (n = {n})")))?;
    Ok(schur.unpack())
}

/// Complex Schur factorisation `m = q t qᴴ` with `t` upper triangular.
#[derive(Debug, Clone)]
pub struct ComplexSchur {
    pub q: CMat,
    pub t: CMat,
}

impl ComplexSchur {
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        (0..self.t.nrows()).map(|i| self.t[(i, i)]).collect()
    }

    /// Right eigenvector for the eigenvalue sitting at diagonal position `k`.
    pub fn eigenvector(&self, k: usize) -> CVec {
        let y = triangular_eigenvector(&self.t, k);
        let mut x = &self.q * y;
        let nrm = x.norm();
        if nrm > 0.0 {
            x /= Complex64::new(nrm, 0.0);
        }
        x
    }
}

/// Complex Schur form of a real matrix, obtained from the real Schur form by
/// splitting every 2x2 diagonal block with a complex Givens rotation.
pub fn complex_schur(m: &Mat) -> Result<ComplexSchur> {
    let (q, t) = real_schur(m)?;
    let n = t.nrows();
    let mut q = complexify(&q);
    let mut t = complexify(&t);
    for k in (1..n).rev() {
        let sub = t[(k, k - 1)];
        if sub == C0 {
            continue;
        }
        let a = t[(k - 1, k - 1)];
        let b = t[(k - 1, k)];
        let c = t[(k, k - 1)];
        let d = t[(k, k)];
        let half = (a - d) * 0.5;
        let disc = (half * half + b * c).sqrt();
        let mu1 = (a + d) * 0.5 + disc - d;
        let mu2 = (a + d) * 0.5 - disc - d;
        let mu = if mu1.norm() >= mu2.norm() { mu1 } else { mu2 };
        let r = (mu.norm_sqr() + sub.norm_sqr()).sqrt();
        if r == 0.0 {
            continue;
        }
        let cs = mu / r;
        let sn = sub / r;
        // G = [conj(cs) conj(sn); -sn cs]
        for j in (k - 1)..n {
            let x = t[(k - 1, j)];
            let y = t[(k, j)];
            t[(k - 1, j)] = cs.conj() * x + sn.conj() * y;
            t[(k, j)] = -sn * x + cs * y;
        }
        for i in 0..=k {
            let x = t[(i, k - 1)];
            let y = t[(i, k)];
            t[(i, k - 1)] = x * cs + y * sn;
            t[(i, k)] = -x * sn.conj() + y * cs.conj();
        }
        for i in 0..n {
            let x = q[(i, k - 1)];
            let y = q[(i, k)];
            q[(i, k - 1)] = x * cs + y * sn;
            q[(i, k)] = -x * sn.conj() + y * cs.conj();
        }
        t[(k, k - 1)] = C0;
    }
    for j in 0..n {
        for i in (j + 1)..n {
            t[(i, j)] = C0;
        }
    }
    Ok(ComplexSchur { q, t })
}

/// Null vector of `t - t[k,k] I` for upper-triangular `t`, with unit entry at `k`.
pub fn triangular_eigenvector(t: &CMat, k: usize) -> CVec {
    let n = t.nrows();
    let lambda = t[(k, k)];
    let scale = t.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let smin = (f64::EPSILON * scale).max(f64::MIN_POSITIVE * 1e3);
    let mut y = CVec::zeros(n);
    y[k] = C1;
    for i in (0..k).rev() {
        let mut acc = C0;
        for j in (i + 1)..=k {
            acc += t[(i, j)] * y[j];
        }
        let mut denom = t[(i, i)] - lambda;
        if denom.norm() < smin {
            denom = Complex64::new(smin, 0.0);
        }
        y[i] = -acc / denom;
    }
    y
}

/// Diagonal similarity `D⁻¹ M D` with power-of-two entries that makes each
/// row and column of the off-diagonal part comparable in 1-norm
/// (Parlett–Reinsch). Eigenvalues are unchanged; their computed accuracy is
/// often much better for strongly non-normal matrices.
pub fn balance(m: &Mat) -> Mat {
    const RADIX: f64 = 2.0;
    let n = m.nrows();
    let mut b = m.clone();
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].abs();
                    r += b[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut cc = c;
            while cc < r / RADIX {
                f *= RADIX;
                cc *= RADIX * RADIX;
            }
            while cc >= r * RADIX {
                f /= RADIX;
                cc /= RADIX * RADIX;
            }
            // Column scaled by f, row by 1/f: new sum c·f + r/f.
            if (c * f + r / f) < 0.95 * s {
                converged = false;
                for j in 0..n {
                    b[(i, j)] /= f;
                    b[(j, i)] *= f;
                }
            }
        }
    }
    b
}

/// Eigenvalues of a real square matrix (complex pairs exactly conjugate).
/// The matrix is balanced first.
pub fn eigenvalues(m: &Mat) -> Result<Vec<Complex64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalues of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    ensure_finite(m, "matrix")?;
    let n = m.nrows();
    let schur = Schur::try_new(balance(m), f64::EPSILON, 100 * n + 200)
        .ok_or_else(|| Error::EigenFailure(format!("Schur iteration did not converge (n = {n})")))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn spectral_radius(eigs: &[Complex64]) -> f64 {
    eigs.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn min_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    let mut best = f64::INFINITY;
    for x in a {
        for y in b {
            best = best.min((x - y).norm());
        }
    }
    best
}

/// `σ_min / σ_max` of a complex matrix; 0 for an all-zero matrix.
pub fn singular_value_ratio(m: &CMat) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        0.0
    } else {
        min / max
    }
}

pub fn real_singular_value_ratio(m: &Mat) -> f64 {
    singular_value_ratio(&complexify(m))
}

fn norm1(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// LU factorisation paired with a Hager–Higham estimate of the reciprocal
/// 1-norm condition number.
pub struct FactoredResolvent {
    lu: LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    pub rcond: f64,
}

impl FactoredResolvent {
    pub fn new(m: &CMat) -> FactoredResolvent {
        let n = m.nrows();
        let lu = LU::new(m.clone());
        let anorm = norm1(m);
        if n == 0 {
            return FactoredResolvent { lu, rcond: 1.0 };
        }
        let lu_h = LU::new(m.adjoint());
        let inv_norm = estimate_inverse_norm1(n, |v| lu.solve(v), |v| lu_h.solve(v));
        let rcond = match inv_norm {
            Some(x) if x.is_finite() && anorm > 0.0 => 1.0 / (anorm * x),
            _ => 0.0,
        };
        FactoredResolvent { lu, rcond }
    }

    pub fn solve(&self, rhs: &CVec) -> Option<CVec> {
        self.lu.solve(rhs)
    }
}

fn estimate_inverse_norm1<F, G>(n: usize, solve: F, solve_adj: G) -> Option<f64>
where
    F: Fn(&CVec) -> Option<CVec>,
    G: Fn(&CVec) -> Option<CVec>,
{
    let mut x = CVec::from_element(n, Complex64::new(1.0 / n as f64, 0.0));
    let mut est = 0.0;
    for _ in 0..5 {
        let y = solve(&x)?;
        est = y.iter().map(|v| v.norm()).sum::<f64>();
        if !est.is_finite() {
            return None;
        }
        let xi = y.map(|v| if v.norm() > 0.0 { v / v.norm() } else { C1 });
        let z = solve_adj(&xi)?;
        let (jmax, zmax) = z
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.norm()))
            .fold((0, -1.0), |acc, it| if it.1 > acc.1 { it } else { acc });
        let ztx = z.dotc(&x).re;
        if zmax <= ztx {
            break;
        }
        x = CVec::zeros(n);
        x[jmax] = C1;
    }
    Some(est)
}

/// Minimum-cost perfect matching (Hungarian algorithm) on a square cost matrix.
/// Returns `assignment[i] = j`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Largest relative deviation `|a - b| / |b|` between two spectra after
/// pairing them optimally. Infinite if the lengths differ.
pub fn spectrum_deviation(achieved: &[Complex64], targets: &[Complex64]) -> f64 {
    if achieved.len() != targets.len() {
        return f64::INFINITY;
    }
    if achieved.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return f64::INFINITY;
    }
    let rel = |a: &Complex64, b: &Complex64| {
        let d = (a - b).norm();
        if b.norm() > 0.0 {
            d / b.norm()
        } else {
            d
        }
    };
    let cost: Vec<Vec<f64>> = achieved
        .iter()
        .map(|a| targets.iter().map(|b| rel(a, b)).collect())
        .collect();
    let assignment = hungarian(&cost);
    assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i][j])
        .fold(0.0, f64::max)
}
