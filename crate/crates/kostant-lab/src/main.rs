//! Command-line driver: one problem document in, one report document out.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kostant_lab::io::{self, Kind, Mode, Problem, Report, Status};
use kostant_lab::verify::GridSpec;

#[derive(Parser)]
#[command(
    name = "kostant-lab",
    version,
    about = "Symbolic-numeric solvers for cohomological equations near hyperbolic singularities"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve (X - i h) g = f on the 2D hyperbolic model
    Solve2d(RunArgs),
    /// Solve a closed 1-form for a section coefficient (H^1 vanishing)
    H1(RunArgs),
    /// Solve a top-degree form for a primitive (H^n vanishing)
    Top(RunArgs),
    /// Solve a closed 2-form in dimension 6 for a primitive
    H2dim6(RunArgs),
    /// Assemble a flat section from quadrant data and verify its kernel equation
    FlatSection(RunArgs),
    /// Verify a solution against a right-hand side on a grid
    Verify(RunArgs),
    /// Emit the jet table: recursion vs closed-form coefficients side by side
    Expand(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Input problem document (JSON)
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Output report path; stdout when omitted
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Truncation order override
    #[arg(long)]
    order: Option<u32>,
    /// Coefficient representation override
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Tolerance override
    #[arg(long)]
    tol: Option<f64>,
    /// Grid override as inline JSON, e.g. '{"box":[[-1,1],[-1,1]],"points":21}'
    #[arg(long)]
    grid: Option<String>,
}

impl Cmd {
    fn kind(&self) -> Kind {
        match self {
            Cmd::Solve2d(_) => Kind::Solve2d,
            Cmd::H1(_) => Kind::SolveH1,
            Cmd::Top(_) => Kind::SolveTop,
            Cmd::H2dim6(_) => Kind::SolveH2Dim6,
            Cmd::FlatSection(_) => Kind::FlatSection,
            Cmd::Verify(_) => Kind::Verify,
            Cmd::Expand(_) => Kind::ExpandJets,
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Cmd::Solve2d(a)
            | Cmd::H1(a)
            | Cmd::Top(a)
            | Cmd::H2dim6(a)
            | Cmd::FlatSection(a)
            | Cmd::Verify(a)
            | Cmd::Expand(a) => a,
        }
    }
}

fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

fn emit(report: &Report, out: Option<&Path>) -> ExitCode {
    let text = io::render_report(report);
    match out {
        Some(path) => {
            if let Err(e) = write_atomic(path, &text) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(2);
            }
        }
        None => print!("{text}"),
    }
    match report.status {
        Status::Ok => ExitCode::SUCCESS,
        Status::Error => ExitCode::FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let kind = cli.cmd.kind();
    let args = cli.cmd.args();

    let text = match std::fs::read_to_string(&args.input) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.input.display());
            return ExitCode::from(2);
        }
    };

    let mut problem: Problem = match io::parse_problem(&text) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            return ExitCode::FAILURE;
        }
    };
    if problem.kind != kind {
        eprintln!(
            "error [SCHEMA_ERROR]: the problem kind does not match this subcommand"
        );
        return ExitCode::FAILURE;
    }

    // flag overrides
    if args.order.is_some() {
        problem.options.order = args.order;
    }
    if args.mode.is_some() {
        problem.options.mode = args.mode;
    }
    if args.tol.is_some() {
        problem.options.tolerance = args.tol;
    }
    if let Some(grid) = &args.grid {
        match serde_json::from_str::<GridSpec>(grid) {
            Ok(g) => problem.options.grid = Some(g),
            Err(e) => {
                eprintln!("error [SCHEMA_ERROR]: invalid --grid: {e}");
                return ExitCode::FAILURE;
            }
        }
    }

    let report = io::run(&problem);
    emit(&report, args.out.as_deref())
}
