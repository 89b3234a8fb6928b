//! Moments `η_k(s*) = C (s*I − A)^{−(k+1)} B`, computed directly and through
//! the Sylvester route `CΠTΨ`, plus the least-squares index built from them.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result, SystemRole};
use crate::generator::{CanonicalTransform, InterpolationPoint, InterpolationSpec, SignalGenerator};
use crate::statespace::{self, Siso};
use crate::sylvester::solve_sylvester;

/// Position of one moment inside a [`MomentVector`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentIndex {
    /// Index of the interpolation point in the spec.
    pub point: usize,
    pub s: Complex64,
    pub order: usize,
}

/// Moments ordered by spec point, then by order `0..=k_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    pub entries: Vec<Complex64>,
    pub layout: Vec<MomentIndex>,
}

impl MomentVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `Σ |η − η̂|²`
    pub fn distance_sqr(&self, other: &MomentVector) -> f64 {
        self.entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum()
    }
}

fn layout_for(points: &[InterpolationPoint]) -> Vec<MomentIndex> {
    points
        .iter()
        .enumerate()
        .flat_map(|(i, p)| {
            (0..=p.order).map(move |j| MomentIndex {
                point: i,
                s: p.s,
                order: j,
            })
        })
        .collect()
}

/// `η_0 … η_k` at one point from `k + 1` solves against a single factorisation.
fn moments_at<S: Siso + ?Sized>(sys: &S, s: Complex64, k: usize) -> Result<Vec<Complex64>> {
    let f = statespace::resolvent(sys, s)?;
    let mut x = statespace::complex_input(sys);
    let mut out = Vec::with_capacity(k + 1);
    for _ in 0..=k {
        x = f.solve(&x).ok_or(Error::SingularResolvent {
            s,
            rcond: 0.0,
            role: None,
        })?;
        out.push(statespace::apply_output(sys, &x));
    }
    Ok(out)
}

/// `C (s*I − A)^{−(k+1)} B`.
pub fn moment_oracle<S: Siso + ?Sized>(sys: &S, s: Complex64, k: usize) -> Result<Complex64> {
    Ok(*moments_at(sys, s, k)?.last().expect("at least one moment"))
}

/// All moments requested by `points`, by direct resolvent solves.
pub fn moment_list_oracle<S: Siso + Sync + ?Sized>(sys: &S, points: &[InterpolationPoint]) -> Result<MomentVector> {
    let per_point = points
        .par_iter()
        .map(|p| moments_at(sys, p.s, p.order))
        .collect::<Result<Vec<_>>>()?;
    Ok(MomentVector {
        entries: per_point.into_iter().flatten().collect(),
        layout: layout_for(points),
    })
}

/// Diagonal `±1` pattern relating the columns of `CΠT` to moments.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureMatrix {
    pub signs: Vec<f64>,
}

impl SignatureMatrix {
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.signs.clone()))
    }
}

/// `(−1)^j` for `j = 0..=k` within each block.
pub fn signature_for(orders: &[usize]) -> SignatureMatrix {
    SignatureMatrix {
        signs: orders
            .iter()
            .flat_map(|&k| (0..=k).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }))
            .collect(),
    }
}

fn block_orders(xf: &CanonicalTransform) -> Vec<usize> {
    xf.blocks().iter().map(|p| p.order).collect()
}

/// Moments read off `CΠTΨ`, where `AΠ + BL = ΠS`.
pub fn moments_via_sylvester<S: Siso + ?Sized>(
    sys: &S,
    gen: &SignalGenerator,
    xf: &CanonicalTransform,
) -> Result<MomentVector> {
    let pi = solve_sylvester(sys.dynamics(), sys.input(), gen.l(), gen.s())?.x;
    let cpi = sys.output() * pi;
    let row = cpi.map(|v| Complex64::new(v, 0.0)) * &xf.t;
    let psi = signature_for(&block_orders(xf));
    Ok(MomentVector {
        entries: row.iter().zip(psi.signs.iter()).map(|(z, s)| z * *s).collect(),
        layout: layout_for(xf.blocks()),
    })
}

/// `Σ_i Σ_j |η_j(s_i) − η̂_j(s_i)|²` with both lists from the oracle.
pub fn ls_index<S1, S2>(sys: &S1, model: &S2, spec: &InterpolationSpec) -> Result<f64>
where
    S1: Siso + Sync + ?Sized,
    S2: Siso + Sync + ?Sized,
{
    let eta = moment_list_oracle(sys, spec.points()).map_err(|e| e.with_role(SystemRole::Full))?;
    let eta_hat = moment_list_oracle(model, spec.points()).map_err(|e| e.with_role(SystemRole::Reduced))?;
    Ok(eta.distance_sqr(&eta_hat))
}

/// Both sides of `‖(CΠ − HP)T‖² = Σ |η − η̂|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormIdentity {
    pub lhs: f64,
    pub rhs: f64,
}

impl NormIdentity {
    pub fn holds(&self, tol: f64) -> bool {
        (self.lhs - self.rhs).abs() <= tol * self.rhs.max(1.0)
    }
}

/// `‖(CΠ − HP)T‖²` with `P` from `FP + GL = PS`.
pub fn projected_mismatch<S1: Siso + ?Sized, S2: Siso + ?Sized>(
    sys: &S1,
    model: &S2,
    gen: &SignalGenerator,
    xf: &CanonicalTransform,
) -> Result<f64> {
    let pi = solve_sylvester(sys.dynamics(), sys.input(), gen.l(), gen.s())
        .map_err(|e| e.with_role(SystemRole::Full))?
        .x;
    let p = solve_sylvester(model.dynamics(), model.input(), gen.l(), gen.s())
        .map_err(|e| e.with_role(SystemRole::Reduced))?
        .x;
    let r = sys.output() * pi - model.output() * p;
    let rt = r.map(|v| Complex64::new(v, 0.0)) * &xf.t;
    Ok(rt.iter().map(|z| z.norm_sqr()).sum())
}

pub fn verify_norm_identity<S1, S2>(
    sys: &S1,
    model: &S2,
    gen: &SignalGenerator,
    xf: &CanonicalTransform,
) -> Result<NormIdentity>
where
    S1: Siso + Sync + ?Sized,
    S2: Siso + Sync + ?Sized,
{
    let lhs = projected_mismatch(sys, model, gen, xf)?;
    let eta = moment_list_oracle(sys, xf.blocks()).map_err(|e| e.with_role(SystemRole::Full))?;
    let eta_hat = moment_list_oracle(model, xf.blocks()).map_err(|e| e.with_role(SystemRole::Reduced))?;
    Ok(NormIdentity {
        lhs,
        rhs: eta.distance_sqr(&eta_hat),
    })
}

/// Largest entrywise relative gap `|a − b| / max(|b|, floor)`.
pub fn max_relative_gap(a: &MomentVector, b: &MomentVector, floor: f64) -> f64 {
    a.entries
        .iter()
        .zip(b.entries.iter())
        .map(|(x, y)| (x - y).norm() / y.norm().max(floor))
        .fold(0.0, f64::max)
}
