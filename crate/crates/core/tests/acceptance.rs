//! One test per acceptance criterion. Each prints a single line
//! `criterion N: PASS|FAIL ...` before asserting, so a plain
//! `cargo test` run doubles as the acceptance report.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use lsmm::analysis::{rms_by_quadrature, rms_gain_bound, steady_state_row};
use lsmm::bench::{run_paper_experiment, ExperimentConfig, DEFAULT_SEED};
use lsmm::generator::{build_generator, build_transform, check_excitable, CanonicalTransform, SignalGenerator};
use lsmm::linalg;
use lsmm::moments::{ls_index, moment_list_oracle, moments_via_sylvester, projected_mismatch, verify_norm_identity};
use lsmm::random;
use lsmm::reduction::{
    admissibility_residuals, dominant_preserving_parameters, full_order_family, ls_family, place, Dominance,
    DominantParameters,
};
use lsmm::statespace::{check_minimal, ReducedModel, StateSpace};
use lsmm::sylvester::solve_sylvester;
use lsmm::Error;

fn verdict(n: u32, ok: bool, elapsed: Duration, detail: String) {
    let tag = if ok { "PASS" } else { "FAIL" };
    // Written to the raw handle so the line survives libtest's capture of passing tests.
    let line = format!("criterion {n}: {tag} ({:.2} s) {detail}\n", elapsed.as_secs_f64());
    std::io::stdout().lock().write_all(line.as_bytes()).unwrap();
}

fn minimal_stable_system(rng: &mut SplitMix64, nmin: usize, nmax: usize) -> StateSpace {
    loop {
        let sys = random::stable_system(rng, nmin, nmax);
        if check_minimal(&sys).unwrap().is_minimal() {
            return sys;
        }
    }
}

fn random_model(rng: &mut SplitMix64, r: usize) -> ReducedModel {
    let sys = random::stable_system(rng, r, r);
    ReducedModel::from(&sys)
}

/// Dominant-pole-preserving reduction of a random stable system at random imaginary points.
/// Draws that split a conjugate pair or cannot be placed are redrawn.
fn dominant_instance(rng: &mut SplitMix64) -> (StateSpace, SignalGenerator, CanonicalTransform, DominantParameters) {
    loop {
        let sys = minimal_stable_system(rng, 6, 8);
        let pairs = rng.random_range(1..=3usize);
        let spec = random::imaginary_spec(rng, pairs);
        let gen = build_generator(&spec).unwrap();
        let xf = build_transform(&gen, &spec).unwrap();
        let r = 2 * rng.random_range(1..=pairs);
        match dominant_preserving_parameters(&sys, &gen, &xf, r, Dominance::Real) {
            Ok(dp) => return (sys, gen, xf, dp),
            Err(Error::PairSplit { .. }) | Err(Error::DefectiveEigenvalue(_)) => continue,
            Err(e) => panic!("dominant-preserving construction failed: {e}"),
        }
    }
}

#[test]
fn criterion_1_moment_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = SplitMix64::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let sys = minimal_stable_system(&mut rng, 2, 8);
        let spec = random::spec(&mut rng, 8, 2);
        let gen = build_generator(&spec).unwrap();
        let xf = build_transform(&gen, &spec).unwrap();
        let via = moments_via_sylvester(&sys, &gen, &xf).unwrap();
        let oracle = moment_list_oracle(&sys, spec.points()).unwrap();
        assert_eq!(via.layout, oracle.layout);
        for (a, b) in via.entries.iter().zip(oracle.entries.iter()) {
            worst = worst.max((a - b).norm() / b.norm());
        }
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-8 && elapsed < Duration::from_secs(10);
    verdict(1, ok, elapsed, format!("max entrywise relative gap {worst:.3e} over 100 instances"));
    assert!(ok);
}

#[test]
fn criterion_2_norm_identity() {
    let start = Instant::now();
    let mut rng = SplitMix64::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let sys = minimal_stable_system(&mut rng, 2, 8);
        let r = rng.random_range(1..=sys.a().nrows());
        let model = random_model(&mut rng, r);
        let spec = random::spec(&mut rng, 8, 2);
        let gen = build_generator(&spec).unwrap();
        let xf = build_transform(&gen, &spec).unwrap();
        let id = verify_norm_identity(&sys, &model, &gen, &xf).unwrap();
        worst = worst.max((id.lhs - id.rhs).abs() / id.rhs.max(1.0));
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-8 && elapsed < Duration::from_secs(10);
    verdict(2, ok, elapsed, format!("max |lhs - rhs| / max(1, rhs) = {worst:.3e} over 100 triples"));
    assert!(ok);
}

#[test]
fn criterion_3_exact_matching_subsumption() {
    let start = Instant::now();
    let mut rng = SplitMix64::seed_from_u64(303);
    let mut worst = 0.0f64;
    let mut instances = 0;
    while instances < 50 {
        let sys = minimal_stable_system(&mut rng, 2, 8);
        let spec = random::spec(&mut rng, 10, 2);
        let gen = build_generator(&spec).unwrap();
        // Δ is free in the full-order family; a random one is redrawn only
        // when spec(S − ΔL) meets spec(S).
        let delta = DVector::from_fn(gen.nu(), |_, _| rng.random_range(-1.0..1.0));
        let model = match full_order_family(&sys, &gen, &delta) {
            Ok(model) => model,
            Err(Error::SpectraOverlap { .. }) => continue,
            Err(e) => panic!("{e}"),
        };
        instances += 1;
        let eta = moment_list_oracle(&sys, spec.points()).unwrap();
        worst = worst.max(ls_index(&sys, &model, &spec).unwrap() / eta.norm_sqr());
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-6;
    verdict(3, ok, elapsed, format!("max ls_index / sum |eta|^2 = {worst:.3e} over 50 instances"));
    assert!(ok);
}

#[test]
fn criterion_4_ls_family_validity() {
    let start = Instant::now();
    let mut rng = SplitMix64::seed_from_u64(404);
    let mut worst_residual = 0.0f64;
    let mut all_pass = true;
    let mut worst_h = 0.0f64;
    let mut worst_drop = f64::NEG_INFINITY;
    for _ in 0..20 {
        let (sys, gen, xf, dp) = dominant_instance(&mut rng);
        for c in admissibility_residuals(&dp.params, &gen).unwrap() {
            all_pass &= c.passed();
            if !c.lower_bound {
                worst_residual = worst_residual.max(c.value);
            }
        }
        let model = ls_family(&sys, &gen, &xf, &dp.params).unwrap();

        // H = CΠ M Pᵀ (P M Pᵀ)⁻¹ is the minimiser of ‖(CΠ − HP)Lc‖ with
        // M = LcLcᵀ; evaluated here by an SVD least-squares solve, whose
        // error grows like cond(P Lc) rather than its square.
        let pi = kronecker_sylvester(sys.a(), sys.b(), gen.l(), gen.s());
        let cpi = sys.c() * &pi;
        let lc = dp.params.m.clone().cholesky().unwrap().l();
        let lhs = (&dp.params.p * &lc).transpose();
        let rhs = (&cpi * &lc).transpose();
        let h = lhs.svd(true, true).solve(&rhs, 0.0).unwrap().transpose();
        worst_h = worst_h.max((model.h() - &h).norm() / h.norm());

        let base = projected_mismatch(&sys, &model, &gen, &xf).unwrap();
        for _ in 0..200 {
            let mut d = RowDVector::from_fn(h.len(), |_, _| rng.random_range(-1.0..1.0));
            d *= rng.random_range(1e-6..1e-1) / d.norm();
            let perturbed = ReducedModel::new(model.f().clone(), model.g().clone(), model.h() + d).unwrap();
            let val = projected_mismatch(&sys, &perturbed, &gen, &xf).unwrap();
            worst_drop = worst_drop.max(base - val);
        }
    }
    let elapsed = start.elapsed();
    let ok = all_pass && worst_residual <= 1e-8 && worst_h <= 1e-9 && worst_drop <= 1e-12;
    verdict(
        4,
        ok,
        elapsed,
        format!(
            "20 instances: admissible {all_pass}, max scaled residual {worst_residual:.3e}, \
             H gap {worst_h:.3e}, largest objective decrease {worst_drop:.3e} over 4000 perturbations"
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_5_rms_bound() {
    let start = Instant::now();
    let mut rng = SplitMix64::seed_from_u64(505);
    let mut violations = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_quad = 0.0f64;
    let mut instances = 0;
    while instances < 50 {
        let (sys, gen, xf, dp) = dominant_instance(&mut rng);
        let model = ls_family(&sys, &gen, &xf, &dp.params).unwrap();
        let omega0 = DVector::from_fn(gen.nu(), |_, _| rng.random_range(-1.0..1.0));
        if !check_excitable(&gen, &omega0).unwrap() {
            continue;
        }
        let rep = match rms_gain_bound(&sys, &model, &gen, &xf, &omega0) {
            Ok(rep) => rep,
            Err(Error::HypothesisViolated(_)) => continue,
            Err(e) => panic!("{e}"),
        };
        instances += 1;
        let excess = rep.gain_ratio - rep.bound;
        worst_excess = worst_excess.max(excess);
        if excess > 1e-6 {
            violations += 1;
        }
        // 200 periods of the slowest generator frequency.
        let w_min = linalg::eigenvalues(gen.s())
            .unwrap()
            .iter()
            .map(|z| z.im.abs())
            .fold(f64::INFINITY, f64::min);
        let horizon = 200.0 * 2.0 * std::f64::consts::PI / w_min;
        let r = steady_state_row(&sys, &model, &gen).unwrap();
        let quad = rms_by_quadrature(&r, &gen, &omega0, horizon, 200_000).unwrap();
        worst_quad = worst_quad.max((quad - rep.rms_ess).abs() / rep.rms_ess);
    }
    let elapsed = start.elapsed();
    let ok = violations == 0 && worst_quad <= 1e-4 && elapsed < Duration::from_secs(60);
    verdict(
        5,
        ok,
        elapsed,
        format!(
            "{violations}/50 instances exceed the bound by more than 1e-6 \
             (largest ratio - bound {worst_excess:.3e}); quadrature gap {worst_quad:.3e}"
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_6_benchmark() {
    let start = Instant::now();
    let cfg = ExperimentConfig::benchmark(30, DEFAULT_SEED, 10);
    let exp = run_paper_experiment(&cfg).unwrap();
    let elapsed = start.elapsed();
    let rep = &exp.report;
    let a = rep.placement_deviation <= 1e-6;
    let b = rep.spectrum_f_deviation <= 1e-6;
    let c = rep.bound_holds;
    let (low, high) = (rep.median_rel_error_low.unwrap(), rep.median_rel_error_high.unwrap());
    let d = 10.0 * low <= high;
    let ok = a && b && c && d && elapsed < Duration::from_secs(30);
    verdict(
        6,
        ok,
        elapsed,
        format!(
            "(a) placement deviation {:.3e} [{a}] (b) spec(F) deviation {:.3e} [{b}] \
             (c) ratio {:.4} <= bound {:.4} [{c}] (d) median rel. error {low:.3e} below 20 rad/s, \
             {high:.3e} above 30 rad/s [{d}]",
            rep.placement_deviation, rep.spectrum_f_deviation, rep.gain_ratio, rep.bound
        ),
    );
    assert!(ok);
}

/// `(I ⊗ A − Sᵀ ⊗ I) vec X = −vec(BL)`, solved densely.
fn kronecker_sylvester(a: &DMatrix<f64>, b: &DVector<f64>, l: &RowDVector<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, nu) = (a.nrows(), s.nrows());
    let mut k = DMatrix::zeros(n * nu, n * nu);
    for j in 0..nu {
        for i in 0..nu {
            for p in 0..n {
                for q in 0..n {
                    let mut v = if i == j { a[(p, q)] } else { 0.0 };
                    if p == q {
                        v -= s[(i, j)];
                    }
                    k[(j * n + p, i * n + q)] = v;
                }
            }
        }
    }
    let rhs = -(b * l);
    let x = k.lu().solve(&DVector::from_column_slice(rhs.as_slice())).unwrap();
    DMatrix::from_column_slice(n, nu, x.as_slice())
}

#[test]
fn criterion_7_sylvester_oracle() {
    let start = Instant::now();
    let mut rng = SplitMix64::seed_from_u64(707);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let sys = random::stable_system(&mut rng, 1, 5);
        let spec = random::spec(&mut rng, 5, 1);
        let gen = build_generator(&spec).unwrap();
        let x = solve_sylvester(sys.a(), sys.b(), gen.l(), gen.s()).unwrap().x;
        let oracle = kronecker_sylvester(sys.a(), sys.b(), gen.l(), gen.s());
        worst = worst.max((&x - &oracle).norm() / oracle.norm().max(f64::MIN_POSITIVE));
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-10;
    verdict(7, ok, elapsed, format!("max relative gap to the Kronecker solve {worst:.3e} over 50 instances"));
    assert!(ok);
}

#[test]
fn criterion_8_pole_placement() {
    let start = Instant::now();
    let mut rng = SplitMix64::seed_from_u64(808);
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let nu = rng.random_range(1..=24);
        let (gen, _) = random::observable_generator(&mut rng, nu);
        let targets = random::stable_targets(&mut rng, nu);
        match place(&gen, &targets) {
            Ok(p) => worst = worst.max(p.deviation),
            Err(e) => failures.push(format!("nu={nu}: {e}")),
        }
    }
    let elapsed = start.elapsed();
    let ok = failures.is_empty() && worst <= 1e-6;
    verdict(
        8,
        ok,
        elapsed,
        format!("{} failures, max deviation of successes {worst:.3e}; {}", failures.len(), failures.join("; ")),
    );
    assert!(ok);
}
