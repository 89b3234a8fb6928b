//! Steady-state error of the interconnection `ω̇ = Sω, u = Lω` driving both
//! the full system and the model, its r.m.s. value and time-domain
//! simulation.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result, SystemRole};
use crate::generator::{CanonicalTransform, SignalGenerator};
use crate::linalg::CMat;
use crate::statespace::{self, is_hurwitz, Siso};
use crate::sylvester::solve_sylvester;

/// Frequencies closer than this (relative to `max(1, ‖S‖)`) are merged.
pub const FREQUENCY_MERGE_TOL: f64 = 1e-9;
/// `|W(iω)|` below this makes the relative error undefined.
pub const NEAR_ZERO: f64 = 1e-14;
/// States larger than this abort a simulation.
const OVERFLOW_LIMIT: f64 = 1e150;

/// `Π` and `P` of the full system and the model for one generator.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub pi: DMatrix<f64>,
    pub p: DMatrix<f64>,
    /// `CΠ − HP`
    pub r: RowDVector<f64>,
}

pub fn steady_state<S1: Siso + ?Sized, S2: Siso + ?Sized>(sys: &S1, model: &S2, gen: &SignalGenerator) -> Result<SteadyState> {
    let pi = solve_sylvester(sys.dynamics(), sys.input(), gen.l(), gen.s())
        .map_err(|e| e.with_role(SystemRole::Full))?
        .x;
    let p = solve_sylvester(model.dynamics(), model.input(), gen.l(), gen.s())
        .map_err(|e| e.with_role(SystemRole::Reduced))?
        .x;
    let r = sys.output() * &pi - model.output() * &p;
    Ok(SteadyState { pi, p, r })
}

/// `R = CΠ − HP`
pub fn steady_state_row<S1: Siso + ?Sized, S2: Siso + ?Sized>(
    sys: &S1,
    model: &S2,
    gen: &SignalGenerator,
) -> Result<RowDVector<f64>> {
    Ok(steady_state(sys, model, gen)?.r)
}

fn require_skew(gen: &SignalGenerator) -> Result<()> {
    if gen.is_skew() {
        Ok(())
    } else {
        Err(Error::NotSkew(gen.skew_defect()))
    }
}

/// Spectral decomposition `S = U diag(iλ) Uᴴ` of a skew-symmetric `S`, with
/// eigenvalues grouped by frequency.
struct SkewSpectrum {
    u: CMat,
    groups: Vec<Vec<usize>>,
}

fn skew_spectrum(s: &DMatrix<f64>) -> SkewSpectrum {
    let n = s.nrows();
    // −iS is Hermitian.
    let h = CMat::from_fn(n, n, |i, j| Complex64::new(0.0, -s[(i, j)]));
    let eig = h.symmetric_eigen();
    let lam: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let tol = FREQUENCY_MERGE_TOL * s.norm().max(1.0);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lam[a].total_cmp(&lam[b]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if (lam[i] - lam[*g.last().unwrap()]).abs() <= tol => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    SkewSpectrum {
        u: eig.eigenvectors,
        groups,
    }
}

impl SkewSpectrum {
    /// `|R U_g U_gᴴ ω₀|²` per group.
    fn group_powers(&self, r: &RowDVector<f64>, omega0: &DVector<f64>) -> Vec<f64> {
        let rc = r.map(|v| Complex64::new(v, 0.0));
        let wc = omega0.map(|v| Complex64::new(v, 0.0));
        self.groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|&k| {
                        let uk = self.u.column(k);
                        (&rc * uk)[0] * uk.dotc(&wc)
                    })
                    .sum::<Complex64>()
                    .norm_sqr()
            })
            .collect()
    }
}

fn check_lengths(r: &RowDVector<f64>, gen: &SignalGenerator, omega0: &DVector<f64>) -> Result<()> {
    if r.len() != gen.nu() || omega0.len() != gen.nu() {
        return Err(Error::DimensionMismatch(format!(
            "row has {} entries and initial condition {}, generator order is {}",
            r.len(),
            omega0.len(),
            gen.nu()
        )));
    }
    Ok(())
}

/// r.m.s. value of `t ↦ R e^{St} ω₀` for skew `S`: the mean power is the sum
/// of the powers of the distinct frequency components.
pub fn rms_periodic(r: &RowDVector<f64>, gen: &SignalGenerator, omega0: &DVector<f64>) -> Result<f64> {
    check_lengths(r, gen, omega0)?;
    require_skew(gen)?;
    let spec = skew_spectrum(gen.s());
    Ok(spec.group_powers(r, omega0).iter().sum::<f64>().sqrt())
}

/// r.m.s. value of `t ↦ R e^{St} ω₀` estimated from samples on
/// `[0, horizon]`: a Hann-weighted time average of the squared signal,
/// integrated with the trapezoid rule. The weight suppresses the beat terms
/// between close frequencies like `1/T³` instead of `1/T`.
pub fn rms_by_quadrature(
    r: &RowDVector<f64>,
    gen: &SignalGenerator,
    omega0: &DVector<f64>,
    horizon: f64,
    samples: usize,
) -> Result<f64> {
    check_lengths(r, gen, omega0)?;
    if !(horizon > 0.0) || samples < 3 {
        return Err(Error::InvalidInput("quadrature needs a positive horizon and at least three samples".into()));
    }
    let h = horizon / (samples - 1) as f64;
    let phi = (gen.s() * h).exp();
    let mut w = omega0.clone();
    let (mut acc, mut mass) = (0.0, 0.0);
    for k in 0..samples {
        let v = (r * &w)[0];
        let x = k as f64 / (samples - 1) as f64;
        let weight = 1.0 - (2.0 * std::f64::consts::PI * x).cos();
        acc += weight * v * v;
        mass += weight;
        w = &phi * w;
    }
    Ok((acc / mass).sqrt())
}

/// Largest r.m.s. gain from `u = Lω` to `e_ss = Rω` over all initial
/// conditions: the largest ratio `|R x| / |L x|` on a frequency eigenspace.
/// Infinite when some component excites `R` without reaching `L`.
pub fn worst_case_gain(r: &RowDVector<f64>, gen: &SignalGenerator) -> Result<f64> {
    if r.len() != gen.nu() {
        return Err(Error::DimensionMismatch(format!(
            "row has {} entries, generator order is {}",
            r.len(),
            gen.nu()
        )));
    }
    require_skew(gen)?;
    let spec = skew_spectrum(gen.s());
    let rc = r.map(|v| Complex64::new(v, 0.0));
    let lc = gen.l().map(|v| Complex64::new(v, 0.0));
    let mut best: f64 = 0.0;
    for g in &spec.groups {
        let rg: Vec<Complex64> = g.iter().map(|&k| (&rc * spec.u.column(k))[0]).collect();
        let lg: Vec<Complex64> = g.iter().map(|&k| (&lc * spec.u.column(k))[0]).collect();
        let rn = rg.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let ln = lg.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if rn == 0.0 {
            continue;
        }
        if ln == 0.0 {
            return Ok(f64::INFINITY);
        }
        // sup |⟨r, x⟩| / |⟨l, x⟩| is finite only when r ∥ l on this eigenspace.
        let inner: Complex64 = rg.iter().zip(lg.iter()).map(|(a, b)| a * b.conj()).sum();
        if (inner.norm() - rn * ln).abs() > 1e-9 * rn * ln {
            return Ok(f64::INFINITY);
        }
        best = best.max(rn / ln);
    }
    Ok(best)
}

/// Steady-state error of the interconnection for one initial condition.
#[derive(Debug, Clone, Serialize)]
pub struct SteadyStateReport {
    /// `CΠ − HP`
    pub r: Vec<f64>,
    /// `‖CΠ − HP‖₂`
    pub bound: f64,
    pub rms_ess: f64,
    /// r.m.s. of `u = Lω`
    pub rms_input: f64,
    /// `rms_ess / rms_input`
    pub gain_ratio: f64,
    /// Largest ratio over all initial conditions.
    pub worst_case_gain: f64,
    /// `‖(CΠ − HP)T‖²`
    pub ls_objective: f64,
    pub omega0: Vec<f64>,
}

impl SteadyStateReport {
    pub fn bound_holds(&self, tol: f64) -> bool {
        self.gain_ratio <= self.bound + tol
    }
}

/// Evaluates the r.m.s. error for `ω₀` after checking that `A` and `F` are
/// Hurwitz, `S` is skew-symmetric and `‖L‖ = 1`.
pub fn rms_gain_bound<S1: Siso + ?Sized, S2: Siso + ?Sized>(
    sys: &S1,
    model: &S2,
    gen: &SignalGenerator,
    xf: &CanonicalTransform,
    omega0: &DVector<f64>,
) -> Result<SteadyStateReport> {
    if !is_hurwitz(sys.dynamics())? {
        return Err(Error::HypothesisViolated("A is not Hurwitz".into()));
    }
    if !is_hurwitz(model.dynamics())? {
        return Err(Error::HypothesisViolated("F is not Hurwitz".into()));
    }
    if !gen.is_skew() {
        return Err(Error::HypothesisViolated(format!(
            "S is not skew-symmetric (||S + S^T|| = {:.3e})",
            gen.skew_defect()
        )));
    }
    let lnorm = gen.l().norm();
    if (lnorm - 1.0).abs() > 1e-12 {
        return Err(Error::HypothesisViolated(format!("||L|| = {lnorm:.17} is not 1")));
    }
    let ss = steady_state(sys, model, gen)?;
    let rms_ess = rms_periodic(&ss.r, gen, omega0)?;
    let rms_input = rms_periodic(gen.l(), gen, omega0)?;
    let rt = ss.r.map(|v| Complex64::new(v, 0.0)) * &xf.t;
    Ok(SteadyStateReport {
        r: ss.r.iter().copied().collect(),
        bound: ss.r.norm(),
        rms_ess,
        rms_input,
        gain_ratio: if rms_input > 0.0 { rms_ess / rms_input } else { f64::NAN },
        worst_case_gain: worst_case_gain(&ss.r, gen)?,
        ls_objective: rt.iter().map(|z| z.norm_sqr()).sum(),
        omega0: omega0.iter().copied().collect(),
    })
}

/// `|W(iω) − Ŵ(iω)| / |W(iω)|` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeErrorResponse {
    pub grid: Vec<f64>,
    /// NaN where `|W(iω)|` is below [`NEAR_ZERO`].
    pub values: Vec<f64>,
    pub near_zero: Vec<usize>,
}

pub fn relative_error_response<S1, S2>(sys: &S1, model: &S2, grid: &[f64]) -> Result<RelativeErrorResponse>
where
    S1: Siso + Sync + ?Sized,
    S2: Siso + Sync + ?Sized,
{
    statespace::validate_grid(grid)?;
    let pairs = grid
        .par_iter()
        .map(|&w| {
            let s = Complex64::new(0.0, w);
            let a = statespace::transfer_eval(sys, s).map_err(|e| e.with_role(SystemRole::Full))?;
            let b = statespace::transfer_eval(model, s).map_err(|e| e.with_role(SystemRole::Reduced))?;
            Ok((a, b))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = Vec::with_capacity(grid.len());
    let mut near_zero = Vec::new();
    for (i, (a, b)) in pairs.iter().enumerate() {
        if a.norm() < NEAR_ZERO {
            near_zero.push(i);
            values.push(f64::NAN);
        } else {
            values.push((a - b).norm() / a.norm());
        }
    }
    Ok(RelativeErrorResponse {
        grid: grid.to_vec(),
        values,
        near_zero,
    })
}

/// Ten times the slowest time constant of `diag(A, F)`.
pub fn settling_time<S1: Siso + ?Sized, S2: Siso + ?Sized>(sys: &S1, model: &S2) -> Result<f64> {
    let alpha = statespace::spectral_abscissa(sys.dynamics())?.max(statespace::spectral_abscissa(model.dynamics())?);
    if alpha >= 0.0 {
        return Err(Error::HypothesisViolated("diag(A, F) is not Hurwitz".into()));
    }
    Ok(-10.0 / alpha)
}

/// Samples of the interconnection `ω̇ = Sω, ẋ = Ax + BLω, ξ̇ = Fξ + GLω`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub omega: Vec<DVector<f64>>,
    pub x: Vec<DVector<f64>>,
    pub xi: Vec<DVector<f64>>,
    /// `Cx − Hξ`
    pub e: Vec<f64>,
    /// `(CΠ − HP)ω(t)`, when both Sylvester equations are solvable.
    pub e_ss_pred: Option<Vec<f64>>,
    /// `‖x − Πω‖ + ‖ξ − Pω‖`, when both Sylvester equations are solvable.
    pub manifold_distance: Option<Vec<f64>>,
}

/// Exact sampling with `z_{k+1} = e^{Mh} z_k` for the block system `M`.
/// Without an explicit initial state, `x(0) = 0` and `ξ(0) = 0`.
pub fn simulate_interconnection<S1: Siso + ?Sized, S2: Siso + ?Sized>(
    sys: &S1,
    model: &S2,
    gen: &SignalGenerator,
    omega0: &DVector<f64>,
    horizon: f64,
    step: f64,
    initial: Option<(DVector<f64>, DVector<f64>)>,
) -> Result<Trajectory> {
    if !(step > 0.0) || !(horizon > 0.0) || !step.is_finite() || !horizon.is_finite() {
        return Err(Error::InvalidInput("step and horizon must be positive and finite".into()));
    }
    let (nu, n, r) = (gen.nu(), sys.order(), model.order());
    if omega0.len() != nu {
        return Err(Error::DimensionMismatch(format!(
            "initial condition has length {}, generator order is {nu}",
            omega0.len()
        )));
    }
    let (x0, xi0) = initial.unwrap_or_else(|| (DVector::zeros(n), DVector::zeros(r)));
    if x0.len() != n || xi0.len() != r {
        return Err(Error::DimensionMismatch(format!(
            "initial states have lengths {} and {}, expected {n} and {r}",
            x0.len(),
            xi0.len()
        )));
    }
    let dim = nu + n + r;
    let mut m = DMatrix::zeros(dim, dim);
    m.view_mut((0, 0), (nu, nu)).copy_from(gen.s());
    m.view_mut((nu, 0), (n, nu)).copy_from(&(sys.input() * gen.l()));
    m.view_mut((nu, nu), (n, n)).copy_from(sys.dynamics());
    m.view_mut((nu + n, 0), (r, nu)).copy_from(&(model.input() * gen.l()));
    m.view_mut((nu + n, nu + n), (r, r)).copy_from(model.dynamics());
    let phi = (m * step).exp();
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalOverflow("matrix exponential of the block system is not finite".into()));
    }
    let steps = (horizon / step).round() as usize;
    let mut z = DVector::zeros(dim);
    z.rows_mut(0, nu).copy_from(omega0);
    z.rows_mut(nu, n).copy_from(&x0);
    z.rows_mut(nu + n, r).copy_from(&xi0);
    let ss = steady_state(sys, model, gen).ok();
    let mut out = Trajectory {
        t: Vec::with_capacity(steps + 1),
        omega: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        xi: Vec::with_capacity(steps + 1),
        e: Vec::with_capacity(steps + 1),
        e_ss_pred: ss.as_ref().map(|_| Vec::with_capacity(steps + 1)),
        manifold_distance: ss.as_ref().map(|_| Vec::with_capacity(steps + 1)),
    };
    for k in 0..=steps {
        if k > 0 {
            z = &phi * z;
        }
        if z.iter().any(|v| !v.is_finite() || v.abs() > OVERFLOW_LIMIT) {
            return Err(Error::NumericalOverflow(format!("state left the representable range at t = {}", k as f64 * step)));
        }
        let w = z.rows(0, nu).into_owned();
        let x = z.rows(nu, n).into_owned();
        let xi = z.rows(nu + n, r).into_owned();
        out.e.push((sys.output() * &x)[0] - (model.output() * &xi)[0]);
        if let Some(ss) = &ss {
            out.e_ss_pred.as_mut().unwrap().push((&ss.r * &w)[0]);
            let dist = (&x - &ss.pi * &w).norm() + (&xi - &ss.p * &w).norm();
            out.manifold_distance.as_mut().unwrap().push(dist);
        }
        out.t.push(k as f64 * step);
        out.omega.push(w);
        out.x.push(x);
        out.xi.push(xi);
    }
    Ok(out)
}

/// Median of the finite entries; `None` if there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    Some(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{build_generator, build_transform, InterpolationSpec};
    use crate::random;
    use crate::reduction::{dominant_preserving_parameters, full_order_family, ls_family, place_output_injection, Dominance};
    use crate::statespace::{ReducedModel, StateSpace};
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_xoshiro::SplitMix64;

    fn row(v: &[f64]) -> RowDVector<f64> {
        RowDVector::from_row_slice(v)
    }

    fn r1() -> StateSpace {
        StateSpace::new(dmatrix![-1.0], dvector![1.0], row(&[1.0])).unwrap()
    }

    fn half_model() -> ReducedModel {
        ReducedModel::new(dmatrix![-2.0], dvector![1.0], row(&[1.0])).unwrap()
    }

    fn skew(freqs: &[f64]) -> (SignalGenerator, InterpolationSpec) {
        let sp = InterpolationSpec::imaginary_axis(freqs).unwrap();
        (build_generator(&sp).unwrap(), sp)
    }

    #[test]
    fn steady_state_row_examples() {
        let sp = InterpolationSpec::imaginary_axis(&[0.0]).unwrap();
        let gen = build_generator(&sp).unwrap();
        let r = steady_state_row(&r1(), &half_model(), &gen).unwrap();
        assert!((r[0] - 0.5).abs() < 1e-15);

        let (gen, _) = skew(&[1.0, 3.0]);
        let delta = place_output_injection(&gen, &[
            Complex64::new(-1.0, 1.0),
            Complex64::new(-1.0, -1.0),
            Complex64::new(-2.0, 0.0),
            Complex64::new(-3.0, 0.0),
        ])
        .unwrap();
        let sys = StateSpace::new(
            dmatrix![-1.0, 2.0, 0.0; -2.0, -1.0, 0.0; 0.0, 1.0, -4.0],
            dvector![1.0, 0.0, 1.0],
            row(&[1.0, 1.0, 0.0]),
        )
        .unwrap();
        let full = full_order_family(&sys, &gen, &delta).unwrap();
        let r = steady_state_row(&sys, &full, &gen).unwrap();
        assert!(r.norm() < 1e-10);
    }

    #[test]
    fn rms_examples() {
        let gen = SignalGenerator::from_matrices(dmatrix![0.0, 1.0; -1.0, 0.0], row(&[1.0, 0.0])).unwrap();
        let v = rms_periodic(&row(&[1.0, 0.0]), &gen, &dvector![1.0, 0.0]).unwrap();
        assert!((v - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(rms_periodic(&row(&[0.0, 0.0]), &gen, &dvector![1.0, 0.0]).unwrap(), 0.0);
        let gen = SignalGenerator::from_matrices(dmatrix![0.0], row(&[1.0])).unwrap();
        let v = rms_periodic(&row(&[2.0]), &gen, &dvector![3.0]).unwrap();
        assert!((v - 6.0).abs() < 1e-14);
        let gen = SignalGenerator::from_matrices(dmatrix![-1.0], row(&[1.0])).unwrap();
        assert!(matches!(rms_periodic(&row(&[1.0]), &gen, &dvector![1.0]), Err(Error::NotSkew(_))));
    }

    #[test]
    fn rms_matches_quadrature() {
        let mut rng = SplitMix64::seed_from_u64(5);
        for _ in 0..10 {
            let pairs = rng.random_range(1..=3);
            let sp = random::imaginary_spec(&mut rng, pairs);
            let gen = build_generator(&sp).unwrap();
            let r = RowDVector::from_fn(gen.nu(), |_, _| rng.random_range(-1.0..1.0));
            let w0 = DVector::from_fn(gen.nu(), |_, _| rng.random_range(-1.0..1.0));
            let wmin = sp.points().iter().map(|p| p.s.im.abs()).fold(f64::INFINITY, f64::min);
            let horizon = 200.0 * 2.0 * std::f64::consts::PI / wmin;
            let a = rms_periodic(&r, &gen, &w0).unwrap();
            let q = rms_by_quadrature(&r, &gen, &w0, horizon, 200_000).unwrap();
            assert!((a - q).abs() <= 1e-4 * a, "{a} vs {q}");
        }
    }

    #[test]
    fn excitation_along_l_reaches_row_norm() {
        // ω₀ = Lᵀ splits the power of u evenly across frequencies, so the
        // ratio equals ‖R‖ exactly.
        let (gen, _) = skew(&[1.0, 2.5, 4.0]);
        let mut rng = SplitMix64::seed_from_u64(3);
        let r = RowDVector::from_fn(gen.nu(), |_, _| rng.random_range(-1.0..1.0));
        let w0 = gen.l().transpose();
        let ratio = rms_periodic(&r, &gen, &w0).unwrap() / rms_periodic(gen.l(), &gen, &w0).unwrap();
        assert!((ratio - r.norm()).abs() < 1e-12);
        assert!(ratio <= worst_case_gain(&r, &gen).unwrap() + 1e-12);
    }

    #[test]
    fn gain_can_exceed_row_norm_when_excitation_concentrates() {
        let (gen, _) = skew(&[1.0, 2.0]);
        let r = row(&[1.0, 0.0, 0.0, 0.0]);
        let w0 = dvector![1.0, 0.0, 0.0, 0.0];
        let ratio = rms_periodic(&r, &gen, &w0).unwrap() / rms_periodic(gen.l(), &gen, &w0).unwrap();
        assert!((ratio - 2f64.sqrt()).abs() < 1e-12);
        assert!(ratio > r.norm());
        assert!((worst_case_gain(&r, &gen).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn report_for_exact_matching_is_zero() {
        let (gen, sp) = skew(&[1.0]);
        let xf = build_transform(&gen, &sp).unwrap();
        let sys = StateSpace::new(dmatrix![-1.0, 0.0; 1.0, -2.0], dvector![1.0, 0.0], row(&[0.0, 1.0])).unwrap();
        let delta = place_output_injection(&gen, &[Complex64::new(-1.0, 0.0), Complex64::new(-2.0, 0.0)]).unwrap();
        let full = full_order_family(&sys, &gen, &delta).unwrap();
        let rep = rms_gain_bound(&sys, &full, &gen, &xf, &gen.l().transpose()).unwrap();
        assert!(rep.bound < 1e-12 && rep.rms_ess < 1e-12);
    }

    #[test]
    fn report_checks_hypotheses() {
        let sp = InterpolationSpec::imaginary_axis(&[0.0]).unwrap();
        let gen = build_generator(&sp).unwrap();
        let xf = build_transform(&gen, &sp).unwrap();
        let unstable = ReducedModel::new(dmatrix![1.0], dvector![1.0], row(&[1.0])).unwrap();
        let err = rms_gain_bound(&r1(), &unstable, &gen, &xf, &dvector![1.0]).unwrap_err();
        assert!(matches!(err, Error::HypothesisViolated(ref m) if m.contains('F')));
    }

    #[test]
    fn relative_error_examples() {
        let copy = ReducedModel::from(&r1());
        let e = relative_error_response(&r1(), &copy, &[0.0, 1.0, 10.0]).unwrap();
        assert!(e.values.iter().all(|v| *v == 0.0));
        let e = relative_error_response(&r1(), &half_model(), &[0.0]).unwrap();
        assert!((e.values[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn simulation_on_center_manifold_has_no_transient() {
        let (gen, _) = skew(&[1.0, 3.0]);
        let sys = StateSpace::new(
            dmatrix![-1.0, 2.0, 0.0; -2.0, -1.0, 0.0; 0.0, 1.0, -4.0],
            dvector![1.0, 0.0, 1.0],
            row(&[1.0, 1.0, 0.0]),
        )
        .unwrap();
        let targets = [
            Complex64::new(-1.0, 1.0),
            Complex64::new(-1.0, -1.0),
            Complex64::new(-2.0, 0.0),
            Complex64::new(-3.0, 0.0),
        ];
        let delta = place_output_injection(&gen, &targets).unwrap();
        let full = full_order_family(&sys, &gen, &delta).unwrap();
        let ss = steady_state(&sys, &full, &gen).unwrap();
        let w0 = gen.l().transpose();
        let init = (&ss.pi * &w0, &ss.p * &w0);
        let tr = simulate_interconnection(&sys, &full, &gen, &w0, 20.0, 0.01, Some(init)).unwrap();
        assert!(tr.e.iter().all(|e| e.abs() < 1e-9));
    }

    #[test]
    fn simulation_from_rest_decays_to_zero() {
        let sp = InterpolationSpec::imaginary_axis(&[2.0]).unwrap();
        let gen = build_generator(&sp).unwrap();
        let tr = simulate_interconnection(&r1(), &half_model(), &gen, &dvector![0.0, 0.0], 10.0, 0.1, Some((dvector![1.0], dvector![-1.0]))).unwrap();
        assert!(tr.e.last().unwrap().abs() < 1e-4);
        assert!(tr.e[0].abs() > 1.0);
    }

    #[test]
    fn late_samples_follow_prediction() {
        let (sys, gen, xf, dp) = (21..)
            .find_map(|seed| {
                let mut rng = SplitMix64::seed_from_u64(seed);
                let sys = random::stable_system(&mut rng, 6, 6);
                let sp = random::imaginary_spec(&mut rng, 2);
                let gen = build_generator(&sp).unwrap();
                let xf = build_transform(&gen, &sp).unwrap();
                let dp = dominant_preserving_parameters(&sys, &gen, &xf, 2, Dominance::Real).ok()?;
                Some((sys, gen, xf, dp))
            })
            .unwrap();
        let model = ls_family(&sys, &gen, &xf, &dp.params).unwrap();
        let w0 = gen.l().transpose();
        let settle = settling_time(&sys, &model).unwrap();
        // From rest the transient starts at O(1), so an absolute 1e-6 needs
        // about twenty time constants; after ten the distance to the
        // manifold has shrunk by roughly e^{-10}.
        let tr = simulate_interconnection(&sys, &model, &gen, &w0, 2.0 * settle, 0.01, None).unwrap();
        let pred = tr.e_ss_pred.as_ref().unwrap();
        let late = tr
            .t
            .iter()
            .zip(tr.e.iter().zip(pred.iter()))
            .filter(|(t, _)| **t >= 2.0 * settle - 5.0)
            .map(|(_, (e, p))| (e - p).abs())
            .fold(0.0, f64::max);
        assert!(late <= 1e-6, "{late}");
        let md = tr.manifold_distance.as_ref().unwrap();
        let at_settle = tr.t.iter().position(|t| *t >= settle).unwrap();
        assert!(md[at_settle] <= 1e-3 * md[0], "{} vs {}", md[at_settle], md[0]);
    }

    #[test]
    fn median_examples() {
        assert_eq!(median([3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median([4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median([f64::NAN, 1.0]), Some(1.0));
        assert_eq!(median(std::iter::empty()), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn ratio_never_exceeds_worst_case_gain(seed in any::<u64>()) {
            let mut rng = SplitMix64::seed_from_u64(seed);
            let pairs = rng.random_range(1..=3);
            let sp = random::imaginary_spec(&mut rng, pairs);
            let gen = build_generator(&sp).unwrap();
            let r = RowDVector::from_fn(gen.nu(), |_, _| rng.random_range(-1.0..1.0));
            let w0 = DVector::from_fn(gen.nu(), |_, _| rng.random_range(-1.0..1.0));
            let ratio = rms_periodic(&r, &gen, &w0).unwrap() / rms_periodic(gen.l(), &gen, &w0).unwrap();
            prop_assert!(ratio <= worst_case_gain(&r, &gen).unwrap() * (1.0 + 1e-9));
        }
    }
}
