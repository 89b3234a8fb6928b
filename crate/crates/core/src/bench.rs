//! Flexible-space-structure benchmark: `K` lightly damped modes with random
//! parameters, reduced by least-squares moment matching at twelve
//! frequency pairs.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::Serialize;

use crate::analysis::{self, RelativeErrorResponse, SteadyStateReport};
use crate::error::{Error, Result, StageExt};
use crate::format;
use crate::generator::{build_generator, build_transform, InterpolationSpec, SignalGenerator};
use crate::linalg;
use crate::moments::{ls_index, verify_norm_identity, NormIdentity};
use crate::reduction::{
    admissibility_residuals, dominant_eigenvalues_with, dominant_preserving_parameters_with, ls_family, Dominance, PlacementCheck,
    PlacementMethod, ReductionParameters, PLACEMENT_TOL, ResidualCheck,
};
use crate::statespace::{check_minimal, frequency_response, is_hurwitz, logspace, FrequencyResponse, ModelJson, ReducedModel, StateSpace};

/// Interpolation frequencies of the benchmark, in rad/s.
pub const BENCHMARK_FREQUENCIES: [f64; 12] = [0.01, 0.1, 1.0, 5.5, 10.0, 16.0, 20.0, 30.0, 50.0, 100.0, 1000.0, 10000.0];
pub const DEFAULT_MODES: usize = 30;
pub const DEFAULT_ORDER: usize = 10;
pub const DEFAULT_SEED: u64 = 1009;
/// Below this frequency the model is expected to be accurate.
pub const LOW_BAND: f64 = 20.0;
/// Above this frequency the model is not expected to be accurate.
pub const HIGH_BAND: f64 = 30.0;

/// Smallest accepted natural frequency; smaller draws are repeated.
const PHI_MIN: f64 = 1e-9;
const MAX_REDRAWS: usize = 64;

/// Open ranges `(lo, hi)` of the modal parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FssRanges {
    pub chi: (f64, f64),
    pub phi: (f64, f64),
    pub b: (f64, f64),
    pub c: (f64, f64),
}

impl Default for FssRanges {
    fn default() -> Self {
        FssRanges {
            chi: (0.0, 0.001),
            phi: (0.0, 100.0),
            b: (0.0, 1.0),
            c: (0.0, 10.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FssConfig {
    pub modes: usize,
    pub seed: u64,
    pub ranges: FssRanges,
}

impl FssConfig {
    pub fn new(modes: usize, seed: u64) -> Self {
        FssConfig {
            modes,
            seed,
            ranges: FssRanges::default(),
        }
    }
}

/// Parameters of one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mode {
    pub chi: f64,
    pub phi: f64,
    pub b: f64,
    pub c_r: f64,
    pub c_d: f64,
}

/// Uniform draw from the open interval `(lo, hi)`.
fn open_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    loop {
        let v = rng.random_range(lo..hi);
        if v > lo {
            return v;
        }
    }
}

/// Draws `χ, φ, b, c_r, c_d` per mode, in that order, from a SplitMix64
/// stream seeded with `cfg.seed`.
pub fn draw_modes(cfg: &FssConfig) -> Result<Vec<Mode>> {
    let mut rng = SplitMix64::seed_from_u64(cfg.seed);
    let r = cfg.ranges;
    (0..cfg.modes)
        .map(|k| {
            let chi = open_uniform(&mut rng, r.chi);
            let mut phi = open_uniform(&mut rng, r.phi);
            let mut redraws = 0;
            while phi < PHI_MIN {
                redraws += 1;
                if redraws > MAX_REDRAWS {
                    return Err(Error::DegenerateDraw(format!("mode {k}: natural frequency stays below {PHI_MIN:e}")));
                }
                phi = open_uniform(&mut rng, r.phi);
            }
            let b = open_uniform(&mut rng, r.b);
            let c_r = open_uniform(&mut rng, r.c);
            let c_d = open_uniform(&mut rng, r.c);
            Ok(Mode { chi, phi, b, c_r, c_d })
        })
        .collect()
}

/// `A_k = [[−2χφ, −φ], [φ, 0]]`, `B_k = [b; 0]`, `C_k = [c_r, c_d/φ]`.
pub fn assemble_fss(modes: &[Mode]) -> Result<StateSpace> {
    let n = 2 * modes.len();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    let mut c = RowDVector::zeros(n);
    for (k, m) in modes.iter().enumerate() {
        let o = 2 * k;
        a[(o, o)] = -2.0 * m.chi * m.phi;
        a[(o, o + 1)] = -m.phi;
        a[(o + 1, o)] = m.phi;
        b[o] = m.b;
        c[o] = m.c_r;
        c[o + 1] = m.c_d / m.phi;
    }
    StateSpace::new(a, b, c)
}

pub fn build_fss(cfg: &FssConfig) -> Result<StateSpace> {
    if cfg.modes == 0 {
        return Err(Error::InvalidInput("number of modes must be at least 1".into()));
    }
    let sys = assemble_fss(&draw_modes(cfg)?)?;
    if !is_hurwitz(sys.a())? {
        return Err(Error::DegenerateDraw("drawn system is not Hurwitz".into()));
    }
    if !check_minimal(&sys)?.is_minimal() {
        return Err(Error::DegenerateDraw("drawn system is not minimal".into()));
    }
    Ok(sys)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub fss: FssConfig,
    pub order: usize,
    pub frequencies: Vec<f64>,
    pub dominance: Dominance,
    pub grid: Vec<f64>,
}

impl ExperimentConfig {
    pub fn benchmark(modes: usize, seed: u64, order: usize) -> Self {
        ExperimentConfig {
            fss: FssConfig::new(modes, seed),
            order,
            frequencies: BENCHMARK_FREQUENCIES.to_vec(),
            dominance: Dominance::Real,
            grid: logspace(1e-2, 1e4, 500),
        }
    }
}

/// Summary of one benchmark run.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub modes: usize,
    pub seed: u64,
    pub order: usize,
    pub nu: usize,
    pub dominance: Dominance,
    pub ls_index: f64,
    pub bound: f64,
    pub rms_ess: f64,
    pub rms_input: f64,
    pub gain_ratio: f64,
    pub worst_case_gain: f64,
    pub bound_holds: bool,
    pub norm_identity: NormIdentity,
    pub placement_method: PlacementMethod,
    /// Largest relative deviation of `spec(S − ΔL)` from the targets.
    pub placement_deviation: f64,
    pub placement_within_tolerance: bool,
    /// Largest relative deviation of `spec(F)` from the dominant eigenvalues of `A`.
    pub spectrum_f_deviation: f64,
    pub spectrum_f: Vec<[f64; 2]>,
    pub dominant_eigenvalues: Vec<[f64; 2]>,
    pub admissibility: Vec<ResidualCheck>,
    pub median_rel_error_low: Option<f64>,
    pub median_rel_error_high: Option<f64>,
    pub files: Vec<String>,
}

/// Everything produced by [`run_paper_experiment`].
#[derive(Debug, Clone)]
pub struct Experiment {
    pub sys: StateSpace,
    pub model: ReducedModel,
    pub spec: InterpolationSpec,
    pub gen: SignalGenerator,
    pub params: ReductionParameters,
    pub steady: SteadyStateReport,
    pub sys_response: FrequencyResponse,
    pub rom_response: FrequencyResponse,
    pub rel_error: RelativeErrorResponse,
    pub report: ExperimentReport,
}

fn sorted_pairs(mut v: Vec<Complex64>) -> Vec<[f64; 2]> {
    v.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    v.into_iter().map(format::pair).collect()
}

/// Builds the system, reduces it with dominant-eigenvalue-preserving
/// parameters and evaluates the steady-state error for `ω₀ = Lᵀ`.
pub fn run_paper_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    let sys = build_fss(&cfg.fss).stage("fss")?;
    let spec = InterpolationSpec::imaginary_axis(&cfg.frequencies).stage("generator")?;
    let gen = build_generator(&spec).stage("generator")?;
    let xf = build_transform(&gen, &spec).stage("transform")?;
    // Placement at this scale is checked, not enforced: the achieved
    // deviation is reported and judged by the caller.
    let dp = dominant_preserving_parameters_with(&sys, &gen, &xf, cfg.order, cfg.dominance, PlacementCheck::Record)
        .stage("placement")?;
    let model = ls_family(&sys, &gen, &xf, &dp.params).stage("reduction")?;

    let omega0 = gen.l().transpose();
    let steady = analysis::rms_gain_bound(&sys, &model, &gen, &xf, &omega0).stage("analysis")?;
    let index = ls_index(&sys, &model, &spec).stage("moments")?;
    let identity = verify_norm_identity(&sys, &model, &gen, &xf).stage("moments")?;
    let admissibility = admissibility_residuals(&dp.params, &gen).stage("reduction")?;

    let want = dominant_eigenvalues_with(sys.a(), cfg.order, cfg.dominance).stage("reduction")?;
    let spectrum_f = linalg::eigenvalues(model.f()).stage("reduction")?;
    let spectrum_f_deviation = linalg::spectrum_deviation(&spectrum_f, &want);

    let sys_response = frequency_response(&sys, &cfg.grid).stage("response")?;
    let rom_response = frequency_response(&model, &cfg.grid).stage("response")?;
    let rel_error = analysis::relative_error_response(&sys, &model, &cfg.grid).stage("response")?;
    let band = |keep: &dyn Fn(f64) -> bool| {
        analysis::median(
            rel_error
                .grid
                .iter()
                .zip(rel_error.values.iter())
                .filter(|(w, _)| keep(**w))
                .map(|(_, v)| *v),
        )
    };

    let report = ExperimentReport {
        modes: cfg.fss.modes,
        seed: cfg.fss.seed,
        order: cfg.order,
        nu: gen.nu(),
        dominance: cfg.dominance,
        ls_index: index,
        bound: steady.bound,
        rms_ess: steady.rms_ess,
        rms_input: steady.rms_input,
        gain_ratio: steady.gain_ratio,
        worst_case_gain: steady.worst_case_gain,
        bound_holds: steady.bound_holds(1e-6),
        norm_identity: identity,
        placement_method: dp.placement.method,
        placement_deviation: dp.placement.deviation,
        placement_within_tolerance: dp.placement.deviation <= PLACEMENT_TOL,
        spectrum_f_deviation,
        spectrum_f: sorted_pairs(spectrum_f),
        dominant_eigenvalues: sorted_pairs(want),
        admissibility,
        median_rel_error_low: band(&|w| w < LOW_BAND),
        median_rel_error_high: band(&|w| w > HIGH_BAND),
        files: Vec::new(),
    };
    Ok(Experiment {
        sys,
        model,
        spec,
        gen,
        params: dp.params,
        steady,
        sys_response,
        rom_response,
        rel_error,
        report,
    })
}

/// Writes `model.json`, `reduced.json`, the three response CSVs and
/// `report.json` into `dir`, which is created if missing.
pub fn write_outputs(exp: &mut Experiment, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::InvalidInput(format!("{}: {e}", dir.display())))?;
    let names = [
        "model.json",
        "reduced.json",
        "sys_response.csv",
        "rom_response.csv",
        "rel_error.csv",
        "report.json",
    ];
    let paths: Vec<PathBuf> = names.iter().map(|n| dir.join(n)).collect();
    exp.report.files = names.iter().map(|s| s.to_string()).collect();
    format::write_file(&paths[0], &format::to_json(&ModelJson::from_siso(&exp.sys))?)?;
    format::write_file(&paths[1], &format::to_json(&ModelJson::from_siso(&exp.model))?)?;
    format::write_file(&paths[2], &format::response_csv(&exp.sys_response.grid, &exp.sys_response.values)?)?;
    format::write_file(&paths[3], &format::response_csv(&exp.rom_response.grid, &exp.rom_response.values)?)?;
    format::write_file(&paths[4], &format::relative_error_csv(&exp.rel_error.grid, &exp.rel_error.values)?)?;
    format::write_file(&paths[5], &format::to_json(&exp.report)?)?;
    Ok(paths)
}
