//! `compamg` command-line driver.
//!
//! Exit codes: 0 success, 1 solver failure (error, non-convergence or a
//! failed check), 2 usage or I/O error.

mod args;
mod settings;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;

use compamg::checks::{composite_spd_check, level_checks, LevelCheck, SpdCheck};
use compamg::composite::{adaptive_build, AdaptiveConfig, BuildLog, CompositeSolver, BOUND_SLACK};
use compamg::probgen::{gen_anisotropic_2d, gen_anisotropic_3d, gen_laplace, AnisotropyParams};
use compamg::solve::{
    compute_metrics, pcg_solve, stationary_solve, ConvergenceReport, Metrics, SolveMode,
    DEFAULT_TOL,
};
use compamg::sparse::{load_matrix_market, write_matrix_market};
use compamg::SparseMatrix;

use args::{BuildArgs, BuildCmd, Cli, Command, GenCmd, ProblemArgs, SolveCmd};
use settings::Settings;

const DEFAULT_MAX_ITERS: usize = 10_000;
/// Random vector pairs used by the symmetry and positivity check.
const SPD_PAIRS: usize = 20;
const SPD_TOL: f64 = 1e-10;
const INVARIANT_TOL: f64 = 1e-12;

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<compamg::Error> for CliError {
    fn from(e: compamg::Error) -> Self {
        use compamg::Error as E;
        match e {
            E::Io { .. }
            | E::Parse { .. }
            | E::IndexOutOfBounds { .. }
            | E::InvalidParameter(_) => CliError::usage(e.to_string()),
            _ => CliError::failure(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Gen(cmd) => run_gen(cmd),
        Command::Build(cmd) => run_build(cmd),
        Command::Solve(cmd) => run_solve(cmd),
        Command::Check(cmd) => run_check(cmd),
    }
}

fn run_gen(cmd: GenCmd) -> Result<u8, CliError> {
    let settings = Settings::load(cmd.config.as_deref())?;
    let out: PathBuf = settings
        .get(cmd.out, "out")?
        .ok_or_else(|| CliError::usage("gen needs --out <path>"))?;
    let a = generate(&cmd.problem, &settings)?
        .ok_or_else(|| CliError::usage("gen needs --n <intervals>"))?;
    write_matrix_market(&a, &out, true)?;
    println!(
        "wrote {} ({} unknowns, {} nonzeros)",
        out.display(),
        a.n_rows(),
        a.nnz()
    );
    Ok(0)
}

fn run_build(cmd: BuildCmd) -> Result<u8, CliError> {
    let settings = Settings::load(cmd.config.as_deref())?;
    let a = load_problem(&cmd, &settings)?;
    let cfg = adaptive_config(&cmd.build, &settings)?;
    let (composite, log) = adaptive_build(&a, &cfg)?;
    dump_aggregates(&cmd, &settings, &composite)?;
    emit_json(&log, settings.get(cmd.report, "report")?.as_deref())?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct SolveOutput {
    build: BuildLog,
    reports: Vec<ConvergenceReport>,
    metrics: Vec<Metrics>,
}

fn run_solve(cmd: SolveCmd) -> Result<u8, CliError> {
    let common = &cmd.common;
    let settings = Settings::load(common.config.as_deref())?;
    let a = load_problem(common, &settings)?;
    let mode: SolveMode = settings
        .get_or(cmd.mode.clone(), "mode", "pcg".to_string())?
        .parse()?;
    let tol = settings.get_or(cmd.tol, "tol", DEFAULT_TOL)?;
    let max_iters = settings.get_or(cmd.max_iters, "max-iters", DEFAULT_MAX_ITERS)?;
    let rhs = settings.get_or(cmd.rhs.clone(), "rhs", "const1".to_string())?;
    let b = load_rhs(&rhs, a.n_rows())?;
    let sweep = settings
        .get(cmd.components_sweep.clone(), "components-sweep")?
        .map(|s| parse_sweep(&s))
        .transpose()?;

    let mut cfg = adaptive_config(&common.build, &settings)?;
    if let Some((_, last)) = sweep {
        if settings
            .get::<usize>(common.build.max_components, "max-components")?
            .is_none()
        {
            cfg.max_components = last;
        }
    }
    let (composite, log) = adaptive_build(&a, &cfg)?;
    dump_aggregates(common, &settings, &composite)?;

    let built = composite.n_components();
    let ks: Vec<usize> = match sweep {
        Some((first, last)) => {
            if last > built {
                log::warn!("only {built} components were built; sweep stops there");
            }
            (first..=last.min(built)).collect()
        }
        None => vec![built],
    };
    if ks.is_empty() {
        return Err(CliError::usage(format!(
            "components sweep selects nothing: {built} components were built"
        )));
    }

    let mut reports = Vec::new();
    let mut metrics = Vec::new();
    for &k in &ks {
        let c = composite.truncated(k);
        let (_, report) = match mode {
            SolveMode::Stationary => stationary_solve(&c, &b, tol, max_iters)?,
            SolveMode::Pcg => pcg_solve(&c, &b, tol, max_iters)?,
        };
        println!(
            "k={k} mode={} iterations={} converged={} rho={:.6} complexity={:.3} time={:.3}s",
            mode_name(mode),
            report.iterations,
            report.converged,
            report.asymptotic_rho,
            report.complexity,
            report.wall_time_s
        );
        metrics.push(compute_metrics(&c, std::slice::from_ref(&report)));
        reports.push(report);
    }

    if let Some(path) = settings.get::<PathBuf>(cmd.history, "history")? {
        write_history(&path, &reports)?;
    }
    let all_converged = reports.iter().all(|r| r.converged);
    let output = SolveOutput {
        build: log,
        reports,
        metrics,
    };
    if let Some(path) = settings.get::<PathBuf>(common.report.clone(), "report")? {
        emit_json(&output, Some(&path))?;
    }
    if all_converged {
        Ok(0)
    } else {
        eprintln!("error: tolerance {tol:e} not reached within {max_iters} iterations");
        Ok(1)
    }
}

#[derive(Debug, Serialize)]
struct CheckOutput {
    matrix_symmetry_defect: f64,
    composite: SpdCheck,
    levels: Vec<Vec<LevelCheck>>,
    bound_ratios: Vec<f64>,
    failures: Vec<String>,
}

fn run_check(cmd: BuildCmd) -> Result<u8, CliError> {
    let settings = Settings::load(cmd.config.as_deref())?;
    let a = load_problem(&cmd, &settings)?;
    let cfg = adaptive_config(&cmd.build, &settings)?;
    let mut failures = Vec::new();
    let mut line = |ok: bool, name: &str, detail: String| {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures.push(format!("{name}: {detail}"));
        }
    };

    let defect = a.symmetry_defect();
    line(
        defect <= INVARIANT_TOL * a.max_abs(),
        "matrix symmetry",
        format!("max |a_ij - a_ji| = {defect:.2e}"),
    );
    let (composite, log) = adaptive_build(&a, &cfg)?;
    let spd = composite_spd_check(&composite, SPD_PAIRS, cfg.seed);
    line(
        spd.passed(SPD_TOL),
        "composite s.p.d.",
        format!(
            "symmetry defect {:.2e}, min Rayleigh quotient {:.4}",
            spd.symmetry_defect, spd.min_rayleigh
        ),
    );

    let mut levels = Vec::new();
    for (ci, h) in composite.components().iter().enumerate() {
        let checks = level_checks(h)?;
        for c in &checks {
            let tag = format!("component {} level {}", ci + 1, c.level);
            match c.modularity_defect {
                Some(d) => line(
                    d <= INVARIANT_TOL,
                    &format!("{tag} modularity row sums"),
                    format!("{d:.2e}"),
                ),
                None => line(
                    true,
                    &format!("{tag} modularity row sums"),
                    format!("skipped, {} clamped", c.clamped),
                ),
            }
            line(
                c.reconstruction_error <= INVARIANT_TOL,
                &format!("{tag} candidate reconstruction"),
                format!("{:.2e}", c.reconstruction_error),
            );
            match c.coarse_cholesky {
                Some(ok) => line(
                    ok,
                    &format!("{tag} coarse Cholesky"),
                    if ok {
                        "factored"
                    } else {
                        "not positive definite"
                    }
                    .into(),
                ),
                None => line(
                    true,
                    &format!("{tag} coarse Cholesky"),
                    "skipped, too large".into(),
                ),
            }
        }
        levels.push(checks);
    }

    let bound_ratios: Vec<f64> = log
        .steps
        .iter()
        .filter(|s| !s.exact)
        .map(|s| s.bound_ratio)
        .collect();
    for (i, &m) in bound_ratios.iter().enumerate() {
        line(
            m <= 1.0 + BOUND_SLACK,
            &format!("step {} slow-error bound", i + 1),
            format!("ratio {m:.6}"),
        );
    }

    let output = CheckOutput {
        matrix_symmetry_defect: defect,
        composite: spd,
        levels,
        bound_ratios,
        failures,
    };
    if let Some(path) = settings.get::<PathBuf>(cmd.report.clone(), "report")? {
        emit_json(&output, Some(&path))?;
    }
    Ok(if output.failures.is_empty() { 0 } else { 1 })
}

fn load_problem(cmd: &BuildCmd, settings: &Settings) -> Result<SparseMatrix, CliError> {
    let path = cmd.matrix_file.clone().or_else(|| cmd.matrix.clone());
    if let Some(path) = settings.get::<PathBuf>(path, "matrix")? {
        return Ok(load_matrix_market(&path)?);
    }
    generate(&cmd.problem, settings)?
        .ok_or_else(|| CliError::usage("no matrix given: pass a Matrix Market path or --n"))
}

/// Generates the requested model problem, or `None` when no size is given.
fn generate(p: &ProblemArgs, settings: &Settings) -> Result<Option<SparseMatrix>, CliError> {
    let Some(n) = settings.get(p.n, "n")? else {
        return Ok(None);
    };
    let dim = settings.get_or(p.dim, "dim", 2)?;
    let params = AnisotropyParams {
        epsilon: settings.get_or(p.epsilon, "epsilon", 1.0)?,
        theta: settings.get_or(p.theta, "theta", 0.0)?,
        phi: settings.get_or(p.phi, "phi", 0.0)?,
        n,
    };
    let a = match dim {
        1 => gen_laplace(n, 1)?,
        2 => gen_anisotropic_2d(&params)?,
        3 => gen_anisotropic_3d(&params)?,
        _ => {
            return Err(CliError::usage(format!(
                "--dim must be 1, 2 or 3, got {dim}"
            )))
        }
    };
    Ok(Some(a))
}

fn adaptive_config(b: &BuildArgs, s: &Settings) -> Result<AdaptiveConfig, CliError> {
    let mut cfg = AdaptiveConfig::default();
    cfg.target_rho = s.get_or(b.target_rho, "target-rho", cfg.target_rho)?;
    cfg.tester.iters = s.get_or(b.tester_iters, "tester-iters", cfg.tester.iters)?;
    cfg.n_candidates = s.get_or(b.candidates, "candidates", cfg.n_candidates)?;
    cfg.max_components = s.get_or(b.max_components, "max-components", cfg.max_components)?;
    cfg.seed = s.get_or(b.seed, "seed", cfg.seed)?;
    let h = &mut cfg.hierarchy;
    h.gamma = s.get_or(b.gamma, "gamma", h.gamma)?;
    h.mu = s.get_or(b.mu, "mu", h.mu)?;
    h.nu = s.get_or(b.nu, "nu", h.nu)?;
    h.coarse_size = s.get_or(b.coarse_size, "coarse-size", h.coarse_size)?;
    cfg.validate()?;
    Ok(cfg)
}

fn dump_aggregates(
    cmd: &BuildCmd,
    settings: &Settings,
    c: &CompositeSolver,
) -> Result<(), CliError> {
    let Some(path) = settings.get::<PathBuf>(cmd.dump_aggregates.clone(), "dump-aggregates")?
    else {
        return Ok(());
    };
    let transfer = c
        .components()
        .first()
        .and_then(|h| h.levels()[0].transfer.as_ref());
    match transfer {
        Some(t) => t.aggregation.write_dump(&path)?,
        None => log::warn!(
            "no coarsened component was built; {} not written",
            path.display()
        ),
    }
    Ok(())
}

fn load_rhs(source: &str, n: usize) -> Result<Vec<f64>, CliError> {
    if source == "const1" {
        return Ok(vec![1.0; n]);
    }
    let text = std::fs::read_to_string(source)
        .map_err(|e| CliError::usage(format!("cannot open {source}: {e}")))?;
    let b = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('%'))
        .flat_map(str::split_whitespace)
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| CliError::usage(format!("{source}: bad number '{t}'")))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    if b.len() != n {
        return Err(CliError::usage(format!(
            "{source}: expected {n} values, found {}",
            b.len()
        )));
    }
    Ok(b)
}

/// `a:b` or a single `k`.
fn parse_sweep(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::usage(format!("components sweep must look like a:b, got '{s}'"));
    let (first, last) = match s.split_once(':') {
        Some((a, b)) => (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        ),
        None => {
            let k = s.trim().parse().map_err(|_| bad())?;
            (k, k)
        }
    };
    if first > last {
        return Err(bad());
    }
    Ok((first, last))
}

fn mode_name(mode: SolveMode) -> &'static str {
    match mode {
        SolveMode::Stationary => "stationary",
        SolveMode::Pcg => "pcg",
    }
}

fn write_history(path: &Path, reports: &[ConvergenceReport]) -> Result<(), CliError> {
    let mut csv = String::from("k,iter,relres\n");
    for r in reports {
        for (i, v) in r.residual_history.iter().enumerate() {
            writeln!(csv, "{},{i},{v:e}", r.components).expect("writing to a string");
        }
    }
    std::fs::write(path, csv)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::failure(e.to_string()))?;
    match path {
        Some(p) => std::fs::write(p, text + "\n")
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}
