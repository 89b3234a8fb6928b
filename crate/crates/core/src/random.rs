//! Random instances for property tests and the acceptance suite.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use rand::Rng;

use crate::generator::{InterpolationPoint, InterpolationSpec, SignalGenerator};
use crate::linalg;
use crate::statespace::StateSpace;

/// Dense stable system of order in `nmin..=nmax`. The entries of `A` are
/// uniform in `(−1, 1)`, shifted so the spectral abscissa lies in
/// `(−1, −0.2)`; `B` and `C` are uniform in `(−1, 1)`.
pub fn stable_system<R: Rng>(rng: &mut R, nmin: usize, nmax: usize) -> StateSpace {
    let n = rng.random_range(nmin..=nmax);
    loop {
        let mut a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let eigs = linalg::eigenvalues(&a).expect("random matrix has a Schur form");
        let abscissa = eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let shift = abscissa + rng.random_range(0.2..1.0);
        for i in 0..n {
            a[(i, i)] -= shift;
        }
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let c = RowDVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        if b.norm() > 0.1 && c.norm() > 0.1 {
            return StateSpace::new(a, b, c).expect("finite square data");
        }
    }
}

fn far_from(points: &[InterpolationPoint], s: Complex64, gap: f64) -> bool {
    points
        .iter()
        .all(|p| (p.s - s).norm() > gap && (p.s - s.conj()).norm() > gap)
}

/// Conjugate-closed spec in the closed right half-plane with `ν ≤ max_nu`
/// and orders `≤ max_order`. Real points have `Re ∈ [0, 3)`; complex points
/// have `Re ∈ [0, 1.5)` and `|Im| ∈ [0.3, 3)`.
pub fn spec<R: Rng>(rng: &mut R, max_nu: usize, max_order: usize) -> InterpolationSpec {
    let budget = rng.random_range(1..=max_nu);
    spec_exact(rng, budget, max_order)
}

/// Like [`spec`] with `ν` equal to `budget`.
pub fn spec_exact<R: Rng>(rng: &mut R, budget: usize, max_order: usize) -> InterpolationSpec {
    let mut points: Vec<InterpolationPoint> = Vec::new();
    let mut nu = 0;
    while nu < budget {
        let left = budget - nu;
        let pair = left >= 2 && rng.random_bool(0.6);
        let per = if pair { 2 } else { 1 };
        let order = rng.random_range(0..=max_order.min(left / per - 1));
        let s = if pair {
            Complex64::new(rng.random_range(0.0..1.5), rng.random_range(0.3..3.0))
        } else {
            Complex64::new(rng.random_range(0.0..3.0), 0.0)
        };
        if !far_from(&points, s, 0.1) {
            continue;
        }
        points.push(InterpolationPoint::new(s, order));
        if pair {
            points.push(InterpolationPoint::new(s.conj(), order));
        }
        nu += per * (order + 1);
    }
    InterpolationSpec::new(points).expect("construction keeps points distinct and closed")
}

/// `pairs` simple points `±iω` with distinct frequencies in `[0.1, 5)`.
pub fn imaginary_spec<R: Rng>(rng: &mut R, pairs: usize) -> InterpolationSpec {
    imaginary_spec_in(rng, pairs, 0.1, 5.0)
}

pub fn imaginary_spec_in<R: Rng>(rng: &mut R, pairs: usize, lo: f64, hi: f64) -> InterpolationSpec {
    let mut freqs: Vec<f64> = Vec::with_capacity(pairs);
    let gap = 0.2 * (hi - lo) / pairs.max(1) as f64;
    while freqs.len() < pairs {
        let w = rng.random_range(lo..hi);
        if freqs.iter().all(|f| (f - w).abs() > gap) {
            freqs.push(w);
        }
    }
    InterpolationSpec::imaginary_axis(&freqs).expect("distinct positive frequencies")
}

/// `ν` conjugate-closed values with real parts in `(−3, −0.1)` and
/// imaginary parts in `(0.1, 3)`, pairwise at least `0.05` apart.
pub fn stable_targets<R: Rng>(rng: &mut R, nu: usize) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = Vec::with_capacity(nu);
    while out.len() < nu {
        let left = nu - out.len();
        let z = if left >= 2 && rng.random_bool(0.6) {
            Complex64::new(rng.random_range(-3.0..-0.1), rng.random_range(0.1..3.0))
        } else {
            Complex64::new(rng.random_range(-3.0..-0.1), 0.0)
        };
        if out.iter().any(|w| (w - z).norm() < 0.05 || (w - z.conj()).norm() < 0.05) {
            continue;
        }
        out.push(z);
        if z.im != 0.0 {
            out.push(z.conj());
        }
    }
    out
}

/// Generator built from a random spec of exactly `ν` simple points.
pub fn observable_generator<R: Rng>(rng: &mut R, nu: usize) -> (SignalGenerator, InterpolationSpec) {
    let sp = spec_exact(rng, nu, 0);
    let gen = crate::generator::build_generator(&sp).expect("valid spec");
    (gen, sp)
}
