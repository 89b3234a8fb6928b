//! Signal generators `ω̇ = Sω, θ = Lω` built from interpolation points, and
//! the canonical transform `T` with `ST = TJ`, `LT = Λ`.

use nalgebra::{DMatrix, DVector, RowDVector, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, Mat};
use crate::statespace::RANK_RATIO_MIN;

/// Two interpolation points closer than this are duplicates.
pub const DUPLICATE_TOL: f64 = 1e-10;
/// Relative residual accepted for `ST = TJ` and `LT = Λ`.
pub const TRANSFORM_TOL: f64 = 1e-9;

/// An interpolation point `s` together with the highest moment order matched there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationPoint {
    pub s: Complex64,
    pub order: usize,
}

impl InterpolationPoint {
    pub fn new(s: Complex64, order: usize) -> Self {
        InterpolationPoint { s, order }
    }

    pub fn is_real(&self) -> bool {
        self.s.im == 0.0
    }

    /// Number of interpolation conditions contributed by this point.
    pub fn multiplicity(&self) -> usize {
        self.order + 1
    }
}

/// Distinct, conjugate-closed interpolation points with their orders.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationSpec {
    points: Vec<InterpolationPoint>,
}

fn snap(p: InterpolationPoint) -> InterpolationPoint {
    if p.s.im.abs() <= DUPLICATE_TOL {
        InterpolationPoint::new(Complex64::new(p.s.re, 0.0), p.order)
    } else {
        p
    }
}

impl InterpolationSpec {
    pub fn new(points: Vec<InterpolationPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("at least one interpolation point is required".into()));
        }
        let points: Vec<_> = points.into_iter().map(snap).collect();
        for p in &points {
            if !p.s.re.is_finite() || !p.s.im.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite interpolation point {}", p.s)));
            }
        }
        for (i, p) in points.iter().enumerate() {
            if points[..i].iter().any(|q| (q.s - p.s).norm() <= DUPLICATE_TOL) {
                return Err(Error::DuplicatePoint(p.s));
            }
        }
        for p in points.iter().filter(|p| !p.is_real()) {
            match points.iter().find(|q| (q.s - p.s.conj()).norm() <= DUPLICATE_TOL) {
                None => {
                    return Err(Error::ConjugateClosureViolation(format!(
                        "{} has no conjugate partner",
                        p.s
                    )))
                }
                Some(q) if q.order != p.order => {
                    return Err(Error::ConjugateClosureViolation(format!(
                        "{} has order {} but its conjugate has order {}",
                        p.s, p.order, q.order
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(InterpolationSpec { points })
    }

    /// Adds any missing conjugates right after their partner. Returns the
    /// completed spec and the indices of the inserted points.
    pub fn with_conjugates(points: Vec<InterpolationPoint>) -> Result<(Self, Vec<usize>)> {
        let points: Vec<_> = points.into_iter().map(snap).collect();
        let mut out: Vec<InterpolationPoint> = Vec::with_capacity(2 * points.len());
        let mut added = Vec::new();
        for (i, p) in points.iter().enumerate() {
            out.push(*p);
            if p.is_real() {
                continue;
            }
            let present = points
                .iter()
                .enumerate()
                .any(|(j, q)| j != i && (q.s - p.s.conj()).norm() <= DUPLICATE_TOL);
            if !present {
                added.push(out.len());
                out.push(InterpolationPoint::new(p.s.conj(), p.order));
            }
        }
        Ok((InterpolationSpec::new(out)?, added))
    }

    /// Simple points `±iω` for each frequency (a zero frequency gives the origin).
    pub fn imaginary_axis(freqs: &[f64]) -> Result<Self> {
        let mut pts = Vec::new();
        for &w in freqs {
            if w == 0.0 {
                pts.push(InterpolationPoint::new(Complex64::new(0.0, 0.0), 0));
            } else {
                pts.push(InterpolationPoint::new(Complex64::new(0.0, w.abs()), 0));
                pts.push(InterpolationPoint::new(Complex64::new(0.0, -w.abs()), 0));
            }
        }
        InterpolationSpec::new(pts)
    }

    pub fn points(&self) -> &[InterpolationPoint] {
        &self.points
    }

    pub fn orders(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.order).collect()
    }

    /// Number of interpolation conditions `Σ (k_i + 1)`.
    pub fn nu(&self) -> usize {
        self.points.iter().map(|p| p.multiplicity()).sum()
    }

    pub fn all_simple_imaginary(&self) -> bool {
        self.points.iter().all(|p| p.order == 0 && p.s.re == 0.0)
    }

    /// Coefficients of `Π (s − s_i)^{k_i+1}`, lowest degree first, monic.
    pub fn characteristic_polynomial(&self) -> Vec<f64> {
        let roots: Vec<Complex64> = self
            .points
            .iter()
            .flat_map(|p| std::iter::repeat_n(p.s, p.multiplicity()))
            .collect();
        poly_from_roots(&roots)
    }
}

/// Real coefficients (lowest degree first) of the monic polynomial with the
/// given conjugate-closed roots. Conjugate pairs are multiplied in as real
/// quadratics.
pub fn poly_from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut coeffs = vec![1.0];
    let mut used = vec![false; roots.len()];
    let mul = |c: &[f64], f: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; c.len() + f.len() - 1];
        for (i, a) in c.iter().enumerate() {
            for (j, b) in f.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        out
    };
    for i in 0..roots.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let z = roots[i];
        if z.im == 0.0 {
            coeffs = mul(&coeffs, &[-z.re, 1.0]);
            continue;
        }
        let partner = (0..roots.len())
            .filter(|&j| !used[j])
            .min_by(|&a, &b| {
                (roots[a] - z.conj())
                    .norm()
                    .partial_cmp(&(roots[b] - z.conj()).norm())
                    .unwrap()
            });
        if let Some(j) = partner {
            used[j] = true;
        }
        coeffs = mul(&coeffs, &[z.norm_sqr(), -2.0 * z.re, 1.0]);
    }
    coeffs
}

/// How the output row `L` of the generator is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputScaling {
    /// Unit norm when every point is simple and on the imaginary axis.
    #[default]
    Auto,
    Unit,
    Raw,
}

/// `ω̇ = Sω, θ = Lω`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalGenerator {
    s: DMatrix<f64>,
    l: RowDVector<f64>,
    spec: Option<InterpolationSpec>,
}

impl SignalGenerator {
    /// Wraps an arbitrary pair `(S, L)` that did not come from a spec.
    pub fn from_matrices(s: DMatrix<f64>, l: RowDVector<f64>) -> Result<Self> {
        if s.nrows() != s.ncols() || s.nrows() != l.len() || s.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "generator S is {}x{}, L has {} columns",
                s.nrows(),
                s.ncols(),
                l.len()
            )));
        }
        Ok(SignalGenerator { s, l, spec: None })
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }
    pub fn l(&self) -> &RowDVector<f64> {
        &self.l
    }
    pub fn nu(&self) -> usize {
        self.s.nrows()
    }
    pub fn spec(&self) -> Option<&InterpolationSpec> {
        self.spec.as_ref()
    }

    /// `‖S + Sᵀ‖_F ≤ 1e-12 · max(1, ‖S‖_F)`
    pub fn is_skew(&self) -> bool {
        self.skew_defect() <= 1e-12 * self.s.norm().max(1.0)
    }

    pub fn skew_defect(&self) -> f64 {
        (&self.s + self.s.transpose()).norm()
    }

    /// PBH observability of `(S, L)`.
    pub fn is_observable(&self) -> Result<bool> {
        let n = self.nu();
        for lam in linalg::eigenvalues(&self.s)? {
            let m = CMat::from_fn(n + 1, n, |i, j| {
                if i == n {
                    Complex64::new(self.l[j], 0.0)
                } else {
                    let d = if i == j { lam } else { Complex64::new(0.0, 0.0) };
                    d - self.s[(i, j)]
                }
            });
            if linalg::singular_value_ratio(&m) < RANK_RATIO_MIN {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

pub fn build_generator(spec: &InterpolationSpec) -> Result<SignalGenerator> {
    build_generator_with(spec, OutputScaling::Auto)
}

/// Real block-diagonal `S` in spec order: Jordan blocks for real points,
/// `[[0, ω], [−ω, 0]]` for simple imaginary pairs and real Jordan blocks for
/// other conjugate pairs.
pub fn build_generator_with(spec: &InterpolationSpec, scaling: OutputScaling) -> Result<SignalGenerator> {
    let nu = spec.nu();
    let mut s = DMatrix::zeros(nu, nu);
    let mut l = RowDVector::zeros(nu);
    let mut at = 0;
    let pts = spec.points();
    for (i, p) in pts.iter().enumerate() {
        let m = p.multiplicity();
        if p.is_real() {
            for k in 0..m {
                s[(at + k, at + k)] = p.s.re;
                if k + 1 < m {
                    s[(at + k, at + k + 1)] = 1.0;
                }
            }
            l[at] = 1.0;
            at += m;
            continue;
        }
        if pts[..i].iter().any(|q| (q.s - p.s.conj()).norm() <= DUPLICATE_TOL) {
            continue;
        }
        let (sigma, omega) = (p.s.re, p.s.im.abs());
        for k in 0..m {
            let o = at + 2 * k;
            s[(o, o)] = sigma;
            s[(o + 1, o + 1)] = sigma;
            s[(o, o + 1)] = omega;
            s[(o + 1, o)] = -omega;
            if k + 1 < m {
                s[(o, o + 2)] = 1.0;
                s[(o + 1, o + 3)] = 1.0;
            }
        }
        l[at] = 1.0;
        if p.order == 0 && sigma == 0.0 {
            l[at + 1] = 1.0;
        }
        at += 2 * m;
    }
    debug_assert_eq!(at, nu);
    let normalize = match scaling {
        OutputScaling::Auto => spec.all_simple_imaginary(),
        OutputScaling::Unit => true,
        OutputScaling::Raw => false,
    };
    if normalize {
        let nrm = l.norm();
        l /= nrm;
    }
    Ok(SignalGenerator {
        s,
        l,
        spec: Some(spec.clone()),
    })
}

/// `T` with `ST = TJ`, `LT = Λ` and the weight `M = T Tᴴ`.
#[derive(Debug, Clone)]
pub struct CanonicalTransform {
    pub t: CMat,
    pub j: CMat,
    pub lambda: RowDVector<Complex64>,
    pub m: Mat,
    blocks: Vec<InterpolationPoint>,
}

impl CanonicalTransform {
    /// The interpolation points in the order their Jordan blocks appear in `J`.
    pub fn blocks(&self) -> &[InterpolationPoint] {
        &self.blocks
    }

    /// `c` such that `T = c·U` with `U` unitary, if one exists.
    pub fn unitary_scale(&self) -> Option<f64> {
        let nu = self.t.nrows();
        let g = self.t.adjoint() * &self.t;
        let c2 = g.trace().re / nu as f64;
        let dev = (g - CMat::identity(nu, nu) * Complex64::new(c2, 0.0)).norm();
        (dev <= 1e-9 * c2 * (nu as f64).sqrt()).then(|| c2.sqrt())
    }

    pub fn residuals(&self, gen: &SignalGenerator) -> (f64, f64) {
        let s = linalg::complexify(gen.s());
        let l = gen.l().map(|v| Complex64::new(v, 0.0));
        let st = (&s * &self.t - &self.t * &self.j).norm();
        let lt = (l * &self.t - &self.lambda).norm();
        (st, lt)
    }
}

/// Solves the Jordan chain `(S − sI)t₀ = 0, (S − sI)t_j = t_{j−1}` with
/// `L t₀ = 1`, `L t_j = 0` as one least-squares system.
fn jordan_chain(s: &Mat, l: &RowDVector<f64>, p: &InterpolationPoint) -> Result<CMat> {
    let nu = s.nrows();
    let m = p.multiplicity();
    let rows = m * (nu + 1);
    let cols = m * nu;
    let mut sys = CMat::zeros(rows, cols);
    let mut rhs = CVec::zeros(rows);
    let row_scale = 1.0 / s.norm().max(1.0);
    for j in 0..m {
        let r0 = j * nu;
        let c0 = j * nu;
        for a in 0..nu {
            for b in 0..nu {
                let d = if a == b { p.s } else { Complex64::new(0.0, 0.0) };
                sys[(r0 + a, c0 + b)] = (Complex64::new(s[(a, b)], 0.0) - d) * row_scale;
            }
            if j > 0 {
                sys[(r0 + a, c0 - nu + a)] = Complex64::new(-row_scale, 0.0);
            }
        }
        let lr = m * nu + j;
        for b in 0..nu {
            sys[(lr, c0 + b)] = Complex64::new(l[b], 0.0);
        }
        if j == 0 {
            rhs[lr] = Complex64::new(1.0, 0.0);
        }
    }
    let svd = SVD::new(sys, true, true);
    let z = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::TransformSingular(e.to_string()))?;
    Ok(CMat::from_fn(nu, m, |i, j| z[j * nu + i]))
}

pub fn build_transform(gen: &SignalGenerator, spec: &InterpolationSpec) -> Result<CanonicalTransform> {
    let nu = gen.nu();
    if spec.nu() != nu {
        return Err(Error::DimensionMismatch(format!(
            "spec describes {} conditions, generator has order {nu}",
            spec.nu()
        )));
    }
    let pts = spec.points();
    let mut t = CMat::zeros(nu, nu);
    let mut j = CMat::zeros(nu, nu);
    let mut lambda = RowDVector::<Complex64>::zeros(nu);
    let mut offsets = Vec::with_capacity(pts.len());
    let mut at = 0;
    for (i, p) in pts.iter().enumerate() {
        let m = p.multiplicity();
        offsets.push(at);
        let partner = (0..i).find(|&q| !p.is_real() && (pts[q].s - p.s.conj()).norm() <= DUPLICATE_TOL);
        let chain = match partner {
            Some(q) => t.columns(offsets[q], m).map(|v| v.conj()),
            None => jordan_chain(gen.s(), gen.l(), p)?,
        };
        t.columns_mut(at, m).copy_from(&chain);
        for k in 0..m {
            j[(at + k, at + k)] = p.s;
            if k + 1 < m {
                j[(at + k, at + k + 1)] = Complex64::new(1.0, 0.0);
            }
        }
        lambda[at] = Complex64::new(1.0, 0.0);
        at += m;
    }
    let ratio = linalg::singular_value_ratio(&t);
    if ratio < 1e-13 || !ratio.is_finite() {
        return Err(Error::TransformSingular(format!("sigma_min/sigma_max = {ratio:.3e}")));
    }
    let tth = &t * t.adjoint();
    let m = linalg::real_part(&tth);
    let m = (&m + m.transpose()) * 0.5;
    let xf = CanonicalTransform {
        t,
        j,
        lambda,
        m,
        blocks: pts.to_vec(),
    };
    let (st, lt) = xf.residuals(gen);
    let tn = xf.t.norm();
    if st > TRANSFORM_TOL * tn * gen.s().norm().max(1.0) || lt > TRANSFORM_TOL * tn {
        return Err(Error::TransformSingular(format!(
            "residuals ||ST - TJ|| = {st:.3e}, ||LT - Λ|| = {lt:.3e}"
        )));
    }
    Ok(xf)
}

/// PBH controllability of `(S, ω₀)`.
pub fn check_excitable(gen: &SignalGenerator, omega0: &DVector<f64>) -> Result<bool> {
    let n = gen.nu();
    if omega0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial condition has length {}, generator order is {n}",
            omega0.len()
        )));
    }
    for lam in linalg::eigenvalues(gen.s())? {
        let m = CMat::from_fn(n, n + 1, |i, j| {
            if j == n {
                Complex64::new(omega0[i], 0.0)
            } else {
                let d = if i == j { lam } else { Complex64::new(0.0, 0.0) };
                d - gen.s()[(i, j)]
            }
        });
        if linalg::singular_value_ratio(&m) < RANK_RATIO_MIN {
            return Ok(false);
        }
    }
    Ok(true)
}

/// JSON schema for interpolation specs: `{"points": [{"re", "im", "order"}]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SpecJson {
    pub points: Vec<PointJson>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PointJson {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
    #[serde(default)]
    pub order: usize,
}

impl SpecJson {
    /// Builds the spec, auto-completing conjugates; returns the indices of
    /// points that were added.
    pub fn to_spec(&self) -> Result<(InterpolationSpec, Vec<usize>)> {
        InterpolationSpec::with_conjugates(
            self.points
                .iter()
                .map(|p| InterpolationPoint::new(Complex64::new(p.re, p.im), p.order))
                .collect(),
        )
    }

    pub fn from_spec(spec: &InterpolationSpec) -> Self {
        SpecJson {
            points: spec
                .points()
                .iter()
                .map(|p| PointJson {
                    re: p.s.re,
                    im: p.s.im,
                    order: p.order,
                })
                .collect(),
        }
    }
}
