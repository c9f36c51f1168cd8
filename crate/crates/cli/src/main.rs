//! Command-line front end: channel reduction, capacity solves, KKT checks,
//! regime-boundary curves, waterfilling, and Monte Carlo verification.
//!
//! Exit status: 0 on success, 1 on validation failure, 2 on numerical
//! non-convergence or evaluation failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use peakcap::curves::{self, fmt_sig12, CurveKind};
use peakcap::error::Error;
use peakcap::input::SymmetricBoundaryDistribution;
use peakcap::mc::mc_mutual_information;
use peakcap::quadrature::{QuadratureRule, DEFAULT_ORDER};
use peakcap::solver::{solve_capacity, SolverOptions};
use peakcap::{ChannelMatrix, EllipseConstraint};

#[derive(Parser)]
#[command(
    name = "peakcap",
    about = "Capacity tools for 2x2 Gaussian channels with a peak-power constraint",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce a 2x2 channel matrix to its elliptical input constraint.
    Reduce(ReduceArgs),
    /// Solve for capacity and the capacity-achieving distribution.
    Capacity(CapacityArgs),
    /// Verify a distribution JSON against the optimality conditions.
    KktCheck(KktArgs),
    /// Trace a regime-boundary curve to CSV.
    Boundary(BoundaryArgs),
    /// Closed-form waterfilling power split for gains (r_p, r_m).
    Waterfilling(WaterfillingArgs),
    /// Monte Carlo estimate of a distribution's mutual information.
    McVerify(McArgs),
    /// Emit both regime curves plus the diagonal reference as CSV files.
    Figure1(Figure1Args),
}

#[derive(Args)]
struct ReduceArgs {
    /// Channel matrix entries, row-major: h11 h12 h21 h22.
    #[arg(long = "h", num_args = 4, required = true, allow_negative_numbers = true)]
    entries: Vec<f64>,
}

#[derive(Args)]
struct CapacityArgs {
    #[arg(long)]
    rp: f64,
    #[arg(long)]
    rm: f64,
    /// Half-axis grid size for the solver.
    #[arg(long, default_value_t = 64)]
    grid: usize,
    /// KKT pass tolerance in nats.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Quadrature order for reported values.
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    quad_order: usize,
    /// Permit the boundary-support heuristic beyond r_p = sqrt(2).
    #[arg(long)]
    allow_large_rp: bool,
    /// Write the result JSON here instead of stdout.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Also write the expanded atoms as CSV (x1,x2,mass).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Report information quantities in bits instead of nats.
    #[arg(long)]
    bits: bool,
}

#[derive(Args)]
struct KktArgs {
    /// Distribution JSON file ({r_p, r_m, atoms: [{x1, mass}]}).
    #[arg(long)]
    dist: PathBuf,
    #[arg(long, default_value_t = 512)]
    grid: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    quad_order: usize,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    bits: bool,
}

#[derive(Args)]
struct BoundaryArgs {
    #[arg(long, value_enum)]
    kind: BoundaryKind,
    #[arg(long)]
    rp_min: f64,
    #[arg(long)]
    rp_max: f64,
    #[arg(long)]
    n: usize,
    /// Output CSV path (columns r_p,r_m).
    #[arg(long)]
    csv: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundaryKind {
    TwoPoint,
    Waterfilling,
}

#[derive(Args)]
struct WaterfillingArgs {
    #[arg(long)]
    rp: f64,
    #[arg(long)]
    rm: f64,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    #[arg(long)]
    dist: PathBuf,
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    bits: bool,
}

#[derive(Args)]
struct Figure1Args {
    /// Samples per curve.
    #[arg(long, default_value_t = 51)]
    n: usize,
    /// Directory for the emitted CSV files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // parse problems are validation failures; usage goes to stderr
            eprint!("{err}");
            return ExitCode::from(1);
        }
    };
    if let Ok(threads) = std::env::var("PEAKCAP_THREADS") {
        if let Ok(n) = threads.trim().parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_class(&err))
        }
    }
}

/// 1 for validation failures, 2 for numerical failures.
fn exit_class(err: &Error) -> u8 {
    match err {
        Error::NonConvergence { .. }
        | Error::NonFiniteIntegrand { .. }
        | Error::ThresholdIntegralNegative { .. } => 2,
        Error::CurveSample { source, .. } => exit_class(source),
        _ => 1,
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Reduce(args) => {
            let h = ChannelMatrix::new([
                [args.entries[0], args.entries[1]],
                [args.entries[2], args.entries[3]],
            ])?;
            let c = h.reduce();
            println!("r_p={} r_m={}", fmt_sig12(c.r_p()), fmt_sig12(c.r_m()));
            Ok(())
        }
        Command::Capacity(args) => {
            let constraint = EllipseConstraint::new(args.rp, args.rm)?;
            let opts = SolverOptions {
                grid_n: args.grid,
                quadrature_order: args.quad_order,
                allow_boundary_heuristic: args.allow_large_rp,
                ..SolverOptions::default()
            };
            let result = solve_capacity(&constraint, &opts)?;
            let _ = args.tol; // reported KKT tolerance is fixed by the report itself
            let mut json = serde_json::to_value(&result).expect("result serializes");
            if args.bits {
                rescale_to_bits(&mut json, &["capacity"]);
                if let Some(kkt) = json.get_mut("kkt") {
                    rescale_to_bits(
                        kkt,
                        &[
                            "capacity_estimate",
                            "max_violation",
                            "max_equalization_residual",
                            "constant_a",
                        ],
                    );
                }
            }
            let text = serde_json::to_string_pretty(&json).expect("value serializes");
            emit(args.json.as_deref(), &text)?;
            if let Some(path) = args.csv {
                let mut out = String::from("x1,x2,mass\n");
                for atom in result.distribution.expand() {
                    out.push_str(&format!(
                        "{},{},{}\n",
                        fmt_sig12(atom.point.0),
                        fmt_sig12(atom.point.1),
                        fmt_sig12(atom.mass)
                    ));
                }
                fs::write(path, out).map_err(io_error)?;
            }
            Ok(())
        }
        Command::KktCheck(args) => {
            let text = fs::read_to_string(&args.dist).map_err(io_error)?;
            let dist = SymmetricBoundaryDistribution::from_json(&text)?;
            let rule = QuadratureRule::cached(args.quad_order)?;
            let report = peakcap::kkt_report(&dist, args.grid, args.tol, &rule)?;
            let mut json = serde_json::to_value(&report).expect("report serializes");
            if args.bits {
                rescale_to_bits(
                    &mut json,
                    &[
                        "capacity_estimate",
                        "max_violation",
                        "max_equalization_residual",
                        "constant_a",
                    ],
                );
            }
            emit(
                args.json.as_deref(),
                &serde_json::to_string_pretty(&json).expect("value serializes"),
            )
        }
        Command::Boundary(args) => {
            let rule = QuadratureRule::cached(DEFAULT_ORDER)?;
            let kind = match args.kind {
                BoundaryKind::TwoPoint => CurveKind::TwoPointBoundary,
                BoundaryKind::Waterfilling => CurveKind::WaterfillingBoundary,
            };
            let curve = curves::trace_curve(kind, args.rp_min, args.rp_max, args.n, &rule)?;
            write_curve_csv(&args.csv, &curve)
        }
        Command::Waterfilling(args) => {
            let split = curves::waterfilling_split(args.rp, args.rm)?;
            emit(
                args.json.as_deref(),
                &serde_json::to_string_pretty(&split).expect("split serializes"),
            )
        }
        Command::McVerify(args) => {
            let text = fs::read_to_string(&args.dist).map_err(io_error)?;
            let dist = SymmetricBoundaryDistribution::from_json(&text)?;
            let estimate = mc_mutual_information(&dist, args.samples, args.seed);
            let mut json = serde_json::to_value(estimate).expect("estimate serializes");
            if args.bits {
                rescale_to_bits(&mut json, &["value", "stderr"]);
            }
            emit(
                args.json.as_deref(),
                &serde_json::to_string_pretty(&json).expect("value serializes"),
            )
        }
        Command::Figure1(args) => {
            let rule = QuadratureRule::cached(DEFAULT_ORDER)?;
            fs::create_dir_all(&args.out_dir).map_err(io_error)?;
            let two_point = curves::trace_curve(
                CurveKind::TwoPointBoundary,
                0.001,
                1.2011224087864,
                args.n,
                &rule,
            )?;
            write_curve_csv(&args.out_dir.join("two_point_boundary.csv"), &two_point)?;
            let waterfilling = curves::trace_curve(
                CurveKind::WaterfillingBoundary,
                0.01,
                std::f64::consts::SQRT_2,
                args.n,
                &rule,
            )?;
            write_curve_csv(
                &args.out_dir.join("waterfilling_boundary.csv"),
                &waterfilling,
            )?;
            // diagonal reference r_m = r_p over the same span as the
            // two-point curve
            let mut out = String::from("r_p,r_m\n");
            for &(r_p, _) in &two_point.samples {
                out.push_str(&format!("{},{}\n", fmt_sig12(r_p), fmt_sig12(r_p)));
            }
            fs::write(args.out_dir.join("diagonal.csv"), out).map_err(io_error)?;
            Ok(())
        }
    }
}

fn write_curve_csv(path: &Path, curve: &curves::RegimeCurve) -> Result<(), Error> {
    let mut buf = Vec::new();
    curve.write_csv(&mut buf).map_err(io_error)?;
    fs::write(path, buf).map_err(io_error)
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(path) => fs::write(path, format!("{text}\n")).map_err(io_error),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(io_error)
        }
    }
}

fn io_error(err: std::io::Error) -> Error {
    Error::InvalidOptions(format!("i/o: {err}"))
}

/// Rescales the named numeric fields from nats to bits in place.
fn rescale_to_bits(value: &mut serde_json::Value, fields: &[&str]) {
    if let serde_json::Value::Object(map) = value {
        for field in fields {
            if let Some(serde_json::Value::Number(n)) = map.get(*field) {
                if let Some(v) = n.as_f64() {
                    let bits = v / std::f64::consts::LN_2;
                    if let Some(num) = serde_json::Number::from_f64(bits) {
                        map.insert((*field).to_string(), serde_json::Value::Number(num));
                    }
                }
            }
        }
    }
}
