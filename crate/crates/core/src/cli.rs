//! `lsmm` command line: argument parsing, dispatch and the exit-code
//! contract (0 success, 1 invalid input, 2 numerical failure).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;

use crate::analysis::{self, SteadyStateReport};
use crate::bench::{self, ExperimentConfig, DEFAULT_MODES, DEFAULT_ORDER, DEFAULT_SEED};
use crate::error::{Error, Result, StageExt};
use crate::format;
use crate::generator::{build_generator, build_transform, InterpolationSpec, SignalGenerator, SpecJson};
use crate::linalg;
use crate::moments::{ls_index, moments_via_sylvester};
use crate::reduction::{
    admissibility_residuals, dominant_preserving_parameters_with, ls_family, Dominance, PlacementCheck, PlacementMethod,
    ResidualCheck,
};
use crate::statespace::{ModelJson, ReducedModel, StateSpace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "lsmm", version, about = "Least-squares moment matching model reduction")]
pub struct Cli {
    /// Report errors on stderr as one JSON object {"stage","reason","message"}.
    #[arg(long, global = true)]
    pub json_errors: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the moments of a model at the points of a spec as CSV.
    Moments(MomentsArgs),
    /// Reduce a model by least-squares moment matching; prints the reduced model JSON.
    Reduce(ReduceArgs),
    /// Steady-state error of a model/reduced-model pair; prints a JSON report.
    Analyze(AnalyzeArgs),
    /// Run the flexible-structure benchmark and write its outputs to a directory.
    Bench(BenchArgs),
    /// Simulate the interconnection with the signal generator; prints t,e,e_ss_pred CSV.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    /// Model JSON with keys A, B, C.
    #[arg(long)]
    pub model: PathBuf,
    /// Spec JSON: {"points": [{"re", "im", "order"}]}; conjugates are added.
    #[arg(long)]
    pub spec: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub spec: PathBuf,
    /// Order of the reduced model.
    #[arg(long, value_parser = parse_order)]
    pub order: usize,
    /// Ordering of eigenvalues: by real part or by magnitude.
    #[arg(long, default_value = "real")]
    pub dominance: Dominance,
    /// Keep the best output injection even if it misses the targets.
    #[arg(long)]
    pub allow_inexact_placement: bool,
    /// Also write a JSON report (index, bound, spectrum of F, admissibility).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    /// Full-order model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Reduced model JSON (keys A, B, C or F, G, H).
    #[arg(long)]
    pub reduced: PathBuf,
    /// Spec JSON of purely imaginary simple points.
    #[arg(long)]
    pub spec: PathBuf,
    /// Initial generator state, comma separated; defaults to Lᵀ.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub omega0: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Also simulate and write t,e,e_ss_pred to this CSV.
    #[arg(long)]
    pub timeseries: Option<PathBuf>,
    /// Simulation horizon; defaults to twice the settling time.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Sampling interval; defaults to a ten-thousandth of the horizon.
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Number of oscillator modes (model order 2K).
    #[arg(long, default_value_t = DEFAULT_MODES)]
    pub modes: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_ORDER, value_parser = parse_order)]
    pub order: usize,
    #[arg(long, default_value = "real")]
    pub dominance: Dominance,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Simulation horizon; defaults to twice the settling time.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Sampling interval; defaults to a ten-thousandth of the horizon.
    #[arg(long)]
    pub step: Option<f64>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_order(s: &str) -> std::result::Result<usize, String> {
    let r: i64 = s.parse().map_err(|_| format!("order must be an integer, got {s:?}"))?;
    if r < 1 {
        return Err("order must be ≥ 1".into());
    }
    Ok(r as usize)
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    stage: Option<&'a str>,
    reason: &'a str,
    message: String,
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code. Output goes to the process's stdout and stderr.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// As [`parse_and_dispatch`] with explicit output streams.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let json_errors = argv.iter().any(|a| a == "--json-errors");
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            if code == EXIT_OK {
                let _ = write!(out, "{e}");
            } else if json_errors {
                report_json(err, None, "InvalidArguments", e.to_string().trim().to_string());
            } else {
                let _ = write!(err, "{e}");
            }
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        return report(err, cli.json_errors, &e);
    }
    match dispatch(&cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => report(err, cli.json_errors, &e),
    }
}

fn report_json(err: &mut dyn Write, stage: Option<&str>, reason: &str, message: String) {
    let body = ErrorJson { stage, reason, message };
    let text = format::to_json(&body).unwrap_or_else(|_| "{}\n".into());
    let _ = err.write_all(text.as_bytes());
}

fn report(err: &mut dyn Write, json: bool, e: &Error) -> i32 {
    if json {
        report_json(err, e.stage(), e.reason(), e.root().to_string());
    } else {
        let _ = match e.stage() {
            Some(stage) => writeln!(err, "error [{stage}]: {}", e.root()),
            None => writeln!(err, "error: {e}"),
        };
    }
    if e.is_validation() {
        EXIT_INVALID
    } else {
        EXIT_NUMERICAL
    }
}

/// `LSMM_THREADS` caps the worker pool used for frequency sweeps.
fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("LSMM_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Error::InvalidInput(format!("LSMM_THREADS must be a positive integer, got {value:?}")))?;
    // A pool built earlier in the process wins; that is harmless.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{}: no such file", path.display())))
    }
}

fn require_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => {
            Err(Error::InvalidInput(format!("{}: directory does not exist", dir.display())))
        }
        _ => Ok(()),
    }
}

fn load_model(path: &Path) -> Result<StateSpace> {
    format::read_json::<ModelJson>(path)?.to_state_space()
}

fn load_reduced(path: &Path) -> Result<ReducedModel> {
    format::read_json::<ModelJson>(path)?.to_reduced()
}

fn load_spec(path: &Path) -> Result<InterpolationSpec> {
    Ok(format::read_json::<SpecJson>(path)?.to_spec()?.0)
}

fn dispatch(cmd: &Command, out: &mut dyn Write) -> Result<()> {
    let text = match cmd {
        Command::Moments(a) => moments(a)?,
        Command::Reduce(a) => reduce(a)?,
        Command::Analyze(a) => analyze(a)?,
        Command::Bench(a) => run_bench(a)?,
        Command::Simulate(a) => simulate(a)?,
    };
    out.write_all(text.as_bytes())
        .map_err(|e| Error::InvalidInput(format!("cannot write output: {e}")))
}

fn moments(a: &MomentsArgs) -> Result<String> {
    require_file(&a.model)?;
    require_file(&a.spec)?;
    let sys = load_model(&a.model)?;
    let spec = load_spec(&a.spec)?;
    let gen = build_generator(&spec).stage("generator")?;
    let xf = build_transform(&gen, &spec).stage("transform")?;
    let eta = moments_via_sylvester(&sys, &gen, &xf).stage("sylvester")?;
    format::csv_string(
        &["point_re", "point_im", "order", "re", "im"],
        eta.layout.iter().zip(eta.entries.iter()).map(|(ix, z)| {
            vec![
                format::float(ix.s.re),
                format::float(ix.s.im),
                ix.order.to_string(),
                format::float(z.re),
                format::float(z.im),
            ]
        }),
    )
}

#[derive(Serialize)]
struct ReduceReport {
    order: usize,
    nu: usize,
    dominance: Dominance,
    ls_index: f64,
    /// `‖CΠ − HP‖₂`; `null` when the generator is not skew with unit `L`.
    bound: Option<f64>,
    spectrum_f: Vec<[f64; 2]>,
    targets: Vec<[f64; 2]>,
    placement_method: PlacementMethod,
    placement_deviation: f64,
    admissibility: Vec<ResidualCheck>,
}

fn reduce(a: &ReduceArgs) -> Result<String> {
    require_file(&a.model)?;
    require_file(&a.spec)?;
    if let Some(p) = &a.report {
        require_parent(p)?;
    }
    let sys = load_model(&a.model)?;
    let spec = load_spec(&a.spec)?;
    let gen = build_generator(&spec).stage("generator")?;
    let xf = build_transform(&gen, &spec).stage("transform")?;
    let check = if a.allow_inexact_placement {
        PlacementCheck::Record
    } else {
        PlacementCheck::Enforce
    };
    let dp = dominant_preserving_parameters_with(&sys, &gen, &xf, a.order, a.dominance, check).stage("placement")?;
    let model = ls_family(&sys, &gen, &xf, &dp.params).stage("reduction")?;
    if let Some(path) = &a.report {
        let bound = (gen.is_skew() && (gen.l().norm() - 1.0).abs() <= 1e-12)
            .then(|| analysis::steady_state_row(&sys, &model, &gen).map(|r| r.norm()))
            .transpose()
            .stage("sylvester")?;
        let rep = ReduceReport {
            order: a.order,
            nu: gen.nu(),
            dominance: a.dominance,
            ls_index: ls_index(&sys, &model, &spec).stage("moments")?,
            bound,
            spectrum_f: linalg::eigenvalues(model.f())
                .stage("reduction")?
                .into_iter()
                .map(format::pair)
                .collect(),
            targets: dp.targets.iter().copied().map(format::pair).collect(),
            placement_method: dp.placement.method,
            placement_deviation: dp.placement.deviation,
            admissibility: admissibility_residuals(&dp.params, &gen).stage("reduction")?,
        };
        format::write_file(path, &format::to_json(&rep)?)?;
    }
    format::to_json(&ModelJson::from_siso(&model))
}

struct Pair {
    sys: StateSpace,
    model: ReducedModel,
    spec: InterpolationSpec,
    gen: SignalGenerator,
    omega0: DVector<f64>,
}

fn load_pair(a: &PairArgs) -> Result<Pair> {
    require_file(&a.model)?;
    require_file(&a.reduced)?;
    require_file(&a.spec)?;
    let sys = load_model(&a.model)?;
    let model = load_reduced(&a.reduced)?;
    let spec = load_spec(&a.spec)?;
    let gen = build_generator(&spec).stage("generator")?;
    let omega0 = match &a.omega0 {
        Some(v) if v.len() != gen.nu() => {
            return Err(Error::DimensionMismatch(format!(
                "--omega0 has {} entries, the generator has order {}",
                v.len(),
                gen.nu()
            )))
        }
        Some(v) => DVector::from_column_slice(v),
        None => gen.l().transpose(),
    };
    Ok(Pair {
        sys,
        model,
        spec,
        gen,
        omega0,
    })
}

fn timeseries_csv(p: &Pair, horizon: Option<f64>, step: Option<f64>) -> Result<String> {
    let horizon = match horizon {
        Some(h) => h,
        None => 2.0 * analysis::settling_time(&p.sys, &p.model).stage("simulation")?,
    };
    let step = step.unwrap_or(horizon / 1e4);
    let traj = analysis::simulate_interconnection(&p.sys, &p.model, &p.gen, &p.omega0, horizon, step, None)
        .stage("simulation")?;
    let pred = traj.e_ss_pred.clone().unwrap_or_else(|| vec![f64::NAN; traj.t.len()]);
    format::csv_string(
        &["t", "e", "e_ss_pred"],
        traj.t
            .iter()
            .zip(traj.e.iter())
            .zip(pred.iter())
            .map(|((t, e), q)| vec![format::float(*t), format::float(*e), format::float(*q)]),
    )
}

fn analyze(a: &AnalyzeArgs) -> Result<String> {
    if let Some(p) = &a.timeseries {
        require_parent(p)?;
    }
    let p = load_pair(&a.pair)?;
    // The Sylvester equations are solved up front so that overlapping
    // spectra are reported as such rather than as a failed hypothesis.
    analysis::steady_state(&p.sys, &p.model, &p.gen).stage("sylvester")?;
    let xf = build_transform(&p.gen, &p.spec).stage("transform")?;
    let rep: SteadyStateReport =
        analysis::rms_gain_bound(&p.sys, &p.model, &p.gen, &xf, &p.omega0).stage("analysis")?;
    if let Some(path) = &a.timeseries {
        format::write_file(path, &timeseries_csv(&p, a.horizon, a.step)?)?;
    }
    format::to_json(&rep)
}

fn simulate(a: &SimulateArgs) -> Result<String> {
    if let Some(p) = &a.out {
        require_parent(p)?;
    }
    let p = load_pair(&a.pair)?;
    let csv = timeseries_csv(&p, a.horizon, a.step)?;
    match &a.out {
        Some(path) => {
            format::write_file(path, &csv)?;
            Ok(String::new())
        }
        None => Ok(csv),
    }
}

fn run_bench(a: &BenchArgs) -> Result<String> {
    if a.modes == 0 {
        return Err(Error::InvalidInput("modes must be ≥ 1".into()));
    }
    require_parent(&a.out)?;
    let mut cfg = ExperimentConfig::benchmark(a.modes, a.seed, a.order);
    cfg.dominance = a.dominance;
    let mut exp = bench::run_paper_experiment(&cfg)?;
    bench::write_outputs(&mut exp, &a.out)?;
    format::to_json(&exp.report)
}
