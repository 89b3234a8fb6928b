//! Full-order systems, reduced models and their frequency-domain evaluation.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, FactoredResolvent};

/// Eigenvalues with real part above `-HURWITZ_MARGIN` are not considered stable.
pub const HURWITZ_MARGIN: f64 = 1e-10;
/// Reciprocal condition number below which `sI - A` is treated as singular.
pub const RESOLVENT_RCOND_MIN: f64 = 1e-12;
/// Singular-value ratio below which a PBH matrix is declared rank deficient.
pub const RANK_RATIO_MIN: f64 = 1e-10;

/// Common read access to a single-input single-output realisation.
pub trait Siso {
    fn dynamics(&self) -> &DMatrix<f64>;
    fn input(&self) -> &DVector<f64>;
    fn output(&self) -> &RowDVector<f64>;

    fn order(&self) -> usize {
        self.dynamics().nrows()
    }
}

fn check_dims(a: &DMatrix<f64>, b: &DVector<f64>, c: &RowDVector<f64>) -> Result<()> {
    let n = a.nrows();
    if n == 0 {
        return Err(Error::DimensionMismatch("system order must be positive".into()));
    }
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "dynamics matrix is {}x{}, expected square",
            a.nrows(),
            a.ncols()
        )));
    }
    if b.len() != n || c.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "input has length {}, output has length {}, order is {n}",
            b.len(),
            c.len()
        )));
    }
    if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("realisation has non-finite entries".into()));
    }
    Ok(())
}

/// `ẋ = Ax + Bu, y = Cx` with scalar input and output.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: RowDVector<f64>,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: RowDVector<f64>) -> Result<Self> {
        check_dims(&a, &b, &c)?;
        Ok(StateSpace { a, b, c })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }
    pub fn c(&self) -> &RowDVector<f64> {
        &self.c
    }
}

impl Siso for StateSpace {
    fn dynamics(&self) -> &DMatrix<f64> {
        &self.a
    }
    fn input(&self) -> &DVector<f64> {
        &self.b
    }
    fn output(&self) -> &RowDVector<f64> {
        &self.c
    }
}

/// `ξ̇ = Fξ + Gv, ψ = Hξ`, a candidate reduced model of order `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    f: DMatrix<f64>,
    g: DVector<f64>,
    h: RowDVector<f64>,
}

impl ReducedModel {
    pub fn new(f: DMatrix<f64>, g: DVector<f64>, h: RowDVector<f64>) -> Result<Self> {
        check_dims(&f, &g, &h)?;
        Ok(ReducedModel { f, g, h })
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }
    pub fn g(&self) -> &DVector<f64> {
        &self.g
    }
    pub fn h(&self) -> &RowDVector<f64> {
        &self.h
    }
}

impl Siso for ReducedModel {
    fn dynamics(&self) -> &DMatrix<f64> {
        &self.f
    }
    fn input(&self) -> &DVector<f64> {
        &self.g
    }
    fn output(&self) -> &RowDVector<f64> {
        &self.h
    }
}

impl From<&StateSpace> for ReducedModel {
    fn from(sys: &StateSpace) -> Self {
        ReducedModel {
            f: sys.a.clone(),
            g: sys.b.clone(),
            h: sys.c.clone(),
        }
    }
}

/// Samples `W(iω)` on a strictly increasing grid of positive frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    pub grid: Vec<f64>,
    pub values: Vec<Complex64>,
}

pub(crate) fn resolvent<S: Siso + ?Sized>(sys: &S, s: Complex64) -> Result<FactoredResolvent> {
    let n = sys.order();
    let a = sys.dynamics();
    let m = CMat::from_fn(n, n, |i, j| {
        let diag = if i == j { s } else { Complex64::new(0.0, 0.0) };
        diag - a[(i, j)]
    });
    let f = FactoredResolvent::new(&m);
    if f.rcond < RESOLVENT_RCOND_MIN || !f.rcond.is_finite() {
        return Err(Error::SingularResolvent {
            s,
            rcond: f.rcond,
            role: None,
        });
    }
    Ok(f)
}

pub(crate) fn complex_input<S: Siso + ?Sized>(sys: &S) -> CVec {
    sys.input().map(|v| Complex64::new(v, 0.0))
}

pub(crate) fn apply_output<S: Siso + ?Sized>(sys: &S, x: &CVec) -> Complex64 {
    sys.output()
        .iter()
        .zip(x.iter())
        .map(|(c, v)| v * *c)
        .sum()
}

/// `W(s) = C (sI - A)⁻¹ B` through one LU solve.
pub fn transfer_eval<S: Siso + ?Sized>(sys: &S, s: Complex64) -> Result<Complex64> {
    let f = resolvent(sys, s)?;
    let x = f.solve(&complex_input(sys)).ok_or(Error::SingularResolvent {
        s,
        rcond: 0.0,
        role: None,
    })?;
    Ok(apply_output(sys, &x))
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidInput("frequency grid must be finite and non-negative".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("frequency grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Evaluates `W(iω)` on every grid point. Points are evaluated in parallel;
/// the output order follows the grid.
pub fn frequency_response<S: Siso + Sync + ?Sized>(sys: &S, grid: &[f64]) -> Result<FrequencyResponse> {
    validate_grid(grid)?;
    let values = grid
        .par_iter()
        .map(|&w| transfer_eval(sys, Complex64::new(0.0, w)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrequencyResponse {
        grid: grid.to_vec(),
        values,
    })
}

/// `n` logarithmically spaced points from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..n)
                .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Minimality {
    pub controllable: bool,
    pub observable: bool,
}

impl Minimality {
    pub fn is_minimal(&self) -> bool {
        self.controllable && self.observable
    }
}

/// PBH rank tests at every eigenvalue of A.
pub fn check_minimal<S: Siso + ?Sized>(sys: &S) -> Result<Minimality> {
    let n = sys.order();
    let a = sys.dynamics();
    let eigs = linalg::eigenvalues(a)?;
    let mut controllable = true;
    let mut observable = true;
    for lam in &eigs {
        let shifted = CMat::from_fn(n, n, |i, j| {
            let d = if i == j { *lam } else { Complex64::new(0.0, 0.0) };
            d - a[(i, j)]
        });
        if controllable {
            let mut ctrl = CMat::zeros(n, n + 1);
            ctrl.view_mut((0, 0), (n, n)).copy_from(&shifted);
            for i in 0..n {
                ctrl[(i, n)] = Complex64::new(sys.input()[i], 0.0);
            }
            controllable = linalg::singular_value_ratio(&ctrl) >= RANK_RATIO_MIN;
        }
        if observable {
            let mut obs = CMat::zeros(n + 1, n);
            obs.view_mut((0, 0), (n, n)).copy_from(&shifted);
            for j in 0..n {
                obs[(n, j)] = Complex64::new(sys.output()[j], 0.0);
            }
            observable = linalg::singular_value_ratio(&obs) >= RANK_RATIO_MIN;
        }
    }
    Ok(Minimality {
        controllable,
        observable,
    })
}

/// True iff every eigenvalue has real part below `-HURWITZ_MARGIN`.
pub fn is_hurwitz(m: &DMatrix<f64>) -> Result<bool> {
    Ok(linalg::eigenvalues(m)?.iter().all(|z| z.re < -HURWITZ_MARGIN))
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    Ok(linalg::eigenvalues(m)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// JSON model schema: `{"A": [[..],..], "B": [..], "C": [..]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelJson {
    #[serde(rename = "A", alias = "F")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B", alias = "G")]
    pub b: Vec<f64>,
    #[serde(rename = "C", alias = "H")]
    pub c: Vec<f64>,
}

impl ModelJson {
    pub fn from_siso<S: Siso + ?Sized>(sys: &S) -> Self {
        let a = sys.dynamics();
        ModelJson {
            a: (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect(),
            b: sys.input().iter().copied().collect(),
            c: sys.output().iter().copied().collect(),
        }
    }

    fn parts(&self) -> Result<(DMatrix<f64>, DVector<f64>, RowDVector<f64>)> {
        let n = self.a.len();
        if self.a.iter().any(|row| row.len() != n) {
            return Err(Error::DimensionMismatch("\"A\" must be a square array of rows".into()));
        }
        let a = DMatrix::from_fn(n, n, |i, j| self.a[i][j]);
        Ok((
            a,
            DVector::from_vec(self.b.clone()),
            RowDVector::from_vec(self.c.clone()),
        ))
    }

    pub fn to_state_space(&self) -> Result<StateSpace> {
        let (a, b, c) = self.parts()?;
        StateSpace::new(a, b, c)
    }

    pub fn to_reduced(&self) -> Result<ReducedModel> {
        let (a, b, c) = self.parts()?;
        ReducedModel::new(a, b, c)
    }
}
