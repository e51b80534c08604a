//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "compamg",
    version,
    about = "Adaptive composite algebraic multigrid driver"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write an anisotropic diffusion or Laplace matrix in Matrix Market format.
    Gen(GenCmd),
    /// Run the adaptive build and emit its log as JSON.
    Build(BuildCmd),
    /// Build, then solve with stationary iteration or PCG.
    Solve(SolveCmd),
    /// Build, then verify structural invariants of the result.
    Check(BuildCmd),
}

/// Problem generator parameters. Also accepted by the other subcommands
/// when no matrix file is given.
#[derive(Debug, Args, Default)]
pub struct ProblemArgs {
    /// Spatial dimension: 1 (Laplace), 2 or 3 (anisotropic diffusion).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Grid intervals per axis; the matrix has (n - 1)^dim unknowns.
    #[arg(long)]
    pub n: Option<usize>,
    /// Weak-direction diffusion.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Strong-direction angle in the x-y plane (radians).
    #[arg(long)]
    pub theta: Option<f64>,
    /// Strong-direction elevation for dim 3 (radians).
    #[arg(long)]
    pub phi: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenCmd {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Output .mtx path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value settings file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildCmd {
    /// Matrix Market file (same as --matrix).
    pub matrix_file: Option<PathBuf>,
    /// Matrix Market file of the system to solve.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub build: BuildArgs,
    /// JSON report path; printed to stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the finest aggregation of the first component ("vertex aggregate" lines).
    #[arg(long)]
    pub dump_aggregates: Option<PathBuf>,
    /// key=value settings file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct BuildArgs {
    /// Stop adding components once the tested factor is at most this.
    #[arg(long)]
    pub target_rho: Option<f64>,
    /// Tester iterations per build step.
    #[arg(long)]
    pub tester_iters: Option<usize>,
    /// Candidate vectors per component.
    #[arg(long)]
    pub candidates: Option<usize>,
    /// Target coarsening factor per level.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Coarse visits per level (1 = V-cycle, 2 = W-cycle).
    #[arg(long)]
    pub mu: Option<usize>,
    /// Smoothing sweeps per level visit, split between pre and post.
    #[arg(long)]
    pub nu: Option<usize>,
    /// Upper limit on the number of composite components.
    #[arg(long)]
    pub max_components: Option<usize>,
    /// Coarsest level size solved directly.
    #[arg(long)]
    pub coarse_size: Option<usize>,
    /// Seed for the random initial guesses of the tester.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SolveCmd {
    #[command(flatten)]
    pub common: BuildCmd,
    /// stationary or pcg (default pcg).
    #[arg(long)]
    pub mode: Option<String>,
    /// Relative residual tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Iteration limit per solve.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Right-hand side: a whitespace-separated vector file or `const1`.
    #[arg(long)]
    pub rhs: Option<String>,
    /// Solve with the first k components for every k in a:b.
    #[arg(long)]
    pub components_sweep: Option<String>,
    /// CSV residual history path (columns k, iter, relres).
    #[arg(long)]
    pub history: Option<PathBuf>,
}
