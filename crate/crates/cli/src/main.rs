//! Command-line driver.
//!
//! Five subcommands cover the workflows: `run` for a single simulation,
//! `sweep` for replicated parameter grids, `meanfield` for the analytic
//! bound reports, `validate` for the geometry/statistics suites, and
//! `map` for generating and inspecting street systems.
//!
//! Parameters come from a flat key=value config file plus repeatable
//! `--set key=value` overrides; every command is deterministic in the
//! resulting parameter set. Failures print a single `error: ...` line
//! on stderr and exit nonzero.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use streetspread::harness::{
    self, Axis, OverlayCurve, ParameterSet, RunArtifacts, Scaling, SweepSpec,
};
use streetspread::meanfield::{self, LengthPool, MeanFieldParams};
use streetspread::metrics::{write_events_csv, write_metrics_csv, CellSummary};
use streetspread::mobility::SpeedSpec;
use streetspread::rng::{mix, rng_from, tag};
use streetspread::stats::ks_two_sample;
use streetspread::streets::StreetSystem;
use streetspread::{Error, Result, SECS_PER_HOUR};

#[derive(Parser)]
#[command(name = "streetspread", version, about = "Malware propagation on random street systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its metrics row and event log.
    Run(RunCmd),
    /// Run a replicated two-axis parameter sweep.
    Sweep(SweepCmd),
    /// Compute mean-field bound reports for the simplified model.
    Meanfield(MeanfieldCmd),
    /// Check generated geometry against the theoretical statistics.
    Validate(ValidateCmd),
    /// Generate or inspect street-system map files.
    Map(MapCmd),
}

/// Parameter sources shared by the simulation commands.
#[derive(Args, Clone)]
struct ParamArgs {
    /// Flat key=value config file (defaults apply for missing keys).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set lambda=25 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ParamArgs {
    fn resolve(&self) -> Result<ParameterSet> {
        let mut p = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
                ParameterSet::parse_config(&text)?
            }
            None => ParameterSet::default(),
        };
        for kv in &self.set {
            let Some((key, value)) = kv.split_once('=') else {
                return Err(Error::ConfigParse(format!("--set {kv:?}: expected KEY=VALUE")));
            };
            p.apply_kv(key.trim(), value)?;
        }
        for w in p.validate()? {
            eprintln!("warning: {w}");
        }
        Ok(p)
    }
}

#[derive(Args)]
struct RunCmd {
    #[command(flatten)]
    params: ParamArgs,
    /// Metrics CSV (one aggregated row).
    #[arg(long, default_value = "run_metrics.csv")]
    out_metrics: PathBuf,
    /// Infection event log CSV.
    #[arg(long, default_value = "run_events.csv")]
    out_events: PathBuf,
    /// Also save the generated street system as a text map.
    #[arg(long, value_name = "FILE")]
    save_map: Option<PathBuf>,
    /// Dump the retained itinerary records for trace debugging.
    #[arg(long, value_name = "FILE")]
    dump_itineraries: Option<PathBuf>,
}

#[derive(Args)]
struct SweepCmd {
    #[command(flatten)]
    params: ParamArgs,
    /// Sweep axis as name=v1,v2,... (exactly two; names: lambda, theta,
    /// v, r, rho).
    #[arg(long = "axis", value_name = "NAME=V1,V2,...")]
    axes: Vec<String>,
    /// Scale the window per cell: H = 20 lambda^{-1/4}, u = 0.45 H.
    #[arg(long)]
    lambda_scaled: bool,
    /// Reuse the same per-rep maps in every cell (lambda must be fixed).
    #[arg(long)]
    shared_maps: bool,
    /// Stop after this many cells and emit a resume token.
    #[arg(long, value_name = "N")]
    max_cells: Option<u64>,
    /// Resume token from a previous invocation (K or cell=K).
    #[arg(long, default_value = "0", value_name = "CELL")]
    start_cell: String,
    /// Aggregated grid CSV, one row per cell.
    #[arg(long, default_value = "sweep_metrics.csv")]
    out: PathBuf,
    /// Threshold-overlay constants c for v(lambda) = c/(rho sqrt(lambda)).
    #[arg(long, value_name = "C1,C2,...", value_delimiter = ',')]
    overlay: Vec<f64>,
    /// Overlay CSV path (default: <out>_overlay.csv).
    #[arg(long, value_name = "FILE")]
    overlay_out: Option<PathBuf>,
}

#[derive(Args)]
struct MeanfieldCmd {
    #[command(flatten)]
    params: ParamArgs,
    /// Single-street episodes behind the p estimate.
    #[arg(long, default_value_t = 20_000)]
    n_p: u64,
    /// Simplified walks behind the tau mean.
    #[arg(long, default_value_t = 4_000)]
    n_tau: u64,
    /// Device intensities to report on, one row each (default: the
    /// configured theta).
    #[arg(long, value_name = "T1,T2,...", value_delimiter = ',')]
    theta_grid: Vec<f64>,
    #[arg(long, default_value = "meanfield_bounds.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateCmd {
    /// Seed intensity for the geometry suite, km^-2.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Window side, km. The default yields a few thousand interior edges.
    #[arg(long, default_value_t = 60.0)]
    window: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Skip the two-sample scaling suite (about twice as fast).
    #[arg(long)]
    quick: bool,
}

#[derive(Args)]
struct MapCmd {
    #[command(subcommand)]
    action: MapAction,
}

#[derive(Subcommand)]
enum MapAction {
    /// Generate a street system and save it in the text map format.
    Generate {
        #[arg(long, default_value_t = 50.0)]
        lambda: f64,
        #[arg(long, default_value_t = 10.0)]
        window: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print edge statistics of a saved map next to the theory values.
    Stats { input: PathBuf },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run(cmd) => cmd_run(cmd),
        Command::Sweep(cmd) => cmd_sweep(cmd),
        Command::Meanfield(cmd) => cmd_meanfield(cmd),
        Command::Validate(cmd) => cmd_validate(cmd),
        Command::Map(cmd) => match cmd.action {
            MapAction::Generate { lambda, window, seed, out } => cmd_map_generate(lambda, window, seed, &out),
            MapAction::Stats { input } => cmd_map_stats(&input),
        },
    }
}

fn cmd_run(cmd: RunCmd) -> Result<ExitCode> {
    let p = cmd.params.resolve()?;
    let RunArtifacts { result, model } = harness::run_simulation_full(&p, p.seed)?;

    let row = CellSummary::from_results(
        p.lambda,
        p.theta,
        p.v_report(),
        p.rho_s,
        p.r_km,
        p.u_km,
        p.h_km,
        std::slice::from_ref(&result),
    )?;
    write_metrics_csv(&cmd.out_metrics, &[row])?;
    write_events_csv(&cmd.out_events, &result.events)?;
    if let Some(path) = &cmd.save_map {
        model.streets().save(path)?;
    }
    if let Some(path) = &cmd.dump_itineraries {
        dump_itineraries(&model, path)?;
    }

    match result.tau {
        Some(tau) => println!(
            "tau_s={} infected_at_tau={} in_ball_at_tau={} agents={} events={}",
            tau * SECS_PER_HOUR,
            result.infected_at_tau,
            result.in_ball_at_tau,
            result.n_agents,
            result.events.len()
        ),
        None => println!(
            "tau_s=none infected_final={} agents={} events={} horizon_s={}",
            result.infected_at_tau,
            result.n_agents,
            result.events.len(),
            result.final_time * SECS_PER_HOUR
        ),
    }
    Ok(ExitCode::SUCCESS)
}

/// Retained itinerary records, one line per constant-velocity span.
/// Spans already pruned by the engine are gone; this is a debugging
/// trace of what the run still holds, not a full history.
fn dump_itineraries(model: &streetspread::infection::Model, path: &PathBuf) -> Result<()> {
    let mut out = String::from("agent,edge,t_in_s,t_out_s,d_in_km,d_out_km,nu_kmh\n");
    for agent in model.agents() {
        for rec in agent.records() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                agent.id(),
                rec.edge.0,
                rec.t_in * SECS_PER_HOUR,
                rec.t_out * SECS_PER_HOUR,
                rec.d_in,
                rec.d_out,
                rec.nu
            )
            .expect("string write");
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

fn parse_axis(spec: &str) -> Result<(Axis, Vec<f64>)> {
    let Some((name, values)) = spec.split_once('=') else {
        return Err(Error::InvalidParameter(format!(
            "--axis {spec:?}: expected name=v1,v2,..."
        )));
    };
    let axis: Axis = name.trim().parse()?;
    let values = values
        .split(',')
        .map(|v| {
            v.trim().parse::<f64>().map_err(|_| {
                Error::InvalidParameter(format!("--axis {name}: bad value {v:?}"))
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((axis, values))
}

fn cmd_sweep(cmd: SweepCmd) -> Result<ExitCode> {
    let p = cmd.params.resolve()?;
    let [a1, a2] = cmd.axes.as_slice() else {
        return Err(Error::InvalidParameter(format!(
            "sweep needs exactly two --axis arguments, got {}",
            cmd.axes.len()
        )));
    };
    let start_cell: u64 = {
        let token = cmd.start_cell.strip_prefix("cell=").unwrap_or(&cmd.start_cell);
        token.parse().map_err(|_| {
            Error::InvalidParameter(format!("--start-cell {:?}: expected K or cell=K", cmd.start_cell))
        })?
    };
    let spec = SweepSpec {
        axis1: parse_axis(a1)?,
        axis2: parse_axis(a2)?,
        scaling: if cmd.lambda_scaled { Scaling::LambdaScaled } else { Scaling::FixedH },
        shared_maps: cmd.shared_maps,
        max_cells: cmd.max_cells,
        start_cell,
    };

    let overlay: Option<Vec<OverlayCurve>> = if cmd.overlay.is_empty() {
        None
    } else {
        // Resolve before the sweep so an axis mismatch fails fast.
        Some(harness::threshold_overlay(&spec, &cmd.overlay, p.rho_s)?)
    };

    let outcome = harness::run_sweep(&p, &spec)?;
    write_metrics_csv(&cmd.out, &outcome.rows)?;
    println!("cells={} rows_written={}", spec.n_cells(), outcome.rows.len());

    if let Some(curves) = overlay {
        let path = cmd.overlay_out.unwrap_or_else(|| {
            let mut s = cmd.out.as_os_str().to_owned();
            s.push("_overlay.csv");
            PathBuf::from(s)
        });
        harness::write_overlay_csv(&path, &curves)?;
    }

    if let Some(token) = outcome.resume {
        println!("resume={token}");
        eprintln!("error: cell budget exhausted; partial results written, continue with --start-cell {token}");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_meanfield(cmd: MeanfieldCmd) -> Result<ExitCode> {
    let p = cmd.params.resolve()?;
    let SpeedSpec::Fixed(v) = p.speed else {
        return Err(Error::InvalidParameter(
            "mean-field bounds need a fixed speed (set v_kmh to a single value)".into(),
        ));
    };
    let thetas = if cmd.theta_grid.is_empty() { vec![p.theta] } else { cmd.theta_grid.clone() };

    let pool = LengthPool::reference();
    let mut rng = rng_from(mix(p.seed, &[tag::MEANFIELD]));
    let mut reports = Vec::with_capacity(thetas.len());
    for theta in thetas {
        let mf = MeanFieldParams { lambda: p.lambda, theta, v, rho: p.rho_h(), radius: p.r_km };
        let report = meanfield::bound_report(&mf, pool, cmd.n_p, cmd.n_tau, &mut rng)?;
        println!(
            "theta={} p_hat={} etau_mc_s={} sandwich_s=[{}, {}] in_sandwich_95={} censored={}/{}",
            theta,
            report.p.p_hat,
            report.etau_mc * SECS_PER_HOUR,
            report.etau_lb * SECS_PER_HOUR,
            report.etau_ub * SECS_PER_HOUR,
            report.sandwich_holds_95(),
            report.censored,
            report.n_tau
        );
        reports.push(report);
    }
    meanfield::write_bound_report_csv(&cmd.out, &reports)?;
    Ok(ExitCode::SUCCESS)
}

struct Check {
    name: &'static str,
    got: f64,
    want: f64,
    rel_tol: f64,
}

impl Check {
    fn passed(&self) -> bool {
        (self.got - self.want).abs() <= self.rel_tol * self.want.abs()
    }
}

fn cmd_validate(cmd: ValidateCmd) -> Result<ExitCode> {
    if cmd.lambda <= 0.0 || cmd.window <= 0.0 {
        return Err(Error::InvalidParameter("lambda and window must be positive".into()));
    }
    let sys = StreetSystem::generate(cmd.lambda, cmd.window, cmd.seed)?;
    let stats = sys.edge_length_statistics();
    let rl = cmd.lambda.sqrt();

    let checks = [
        Check { name: "mean interior edge length", got: stats.mean, want: 2.0 / (3.0 * rl), rel_tol: 0.02 },
        Check { name: "edge length variance", got: stats.variance, want: 0.1856 / cmd.lambda, rel_tol: 0.05 },
        Check { name: "street length per unit area", got: stats.length_intensity, want: 2.0 * rl, rel_tol: 0.03 },
    ];

    println!(
        "interior_edges={} clipped_edges={} components={}",
        stats.interior_count,
        stats.clipped_count,
        sys.n_components()
    );
    let mut failures = 0;
    let mut total = checks.len();
    for c in &checks {
        let ok = c.passed();
        failures += usize::from(!ok);
        println!(
            "[{}] {} got={:.6} want={:.6} rel_tol={}",
            if ok { "PASS" } else { "FAIL" },
            c.name,
            c.got,
            c.want,
            c.rel_tol
        );
    }

    if !cmd.quick {
        // Scale invariance: lengths at 4*lambda, stretched by 2, should be
        // indistinguishable from lengths at lambda (two-sample KS, 1%).
        let dense = StreetSystem::generate(4.0 * cmd.lambda, cmd.window / 2.0, cmd.seed + 1)?;
        let a = sys.interior_lengths();
        let b: Vec<f64> = dense.interior_lengths().iter().map(|l| 2.0 * l).collect();
        let (_, p_value) = ks_two_sample(&a, &b);
        let ok = p_value >= 0.01;
        total += 1;
        failures += usize::from(!ok);
        println!(
            "[{}] scaling KS p-value got={p_value:.6} threshold=0.01",
            if ok { "PASS" } else { "FAIL" }
        );
    }

    if !stats.reliable {
        eprintln!("warning: fewer interior edges than the statistics need; grow --window");
    }
    if failures > 0 {
        return Err(Error::InvalidParameter(format!(
            "validation failed ({failures} of {total} checks)"
        )));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_map_generate(lambda: f64, window: f64, seed: u64, out: &PathBuf) -> Result<ExitCode> {
    let sys = StreetSystem::generate(lambda, window, seed)?;
    sys.save(out)?;
    println!(
        "vertices={} edges={} total_length_km={} components={}",
        sys.n_vertices(),
        sys.n_edges(),
        sys.total_length(),
        sys.n_components()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_map_stats(input: &PathBuf) -> Result<ExitCode> {
    let sys = StreetSystem::load(input)?;
    let stats = sys.edge_length_statistics();
    let lambda = sys.intensity();
    println!("lambda={} window_km={} vertices={} edges={}", lambda, sys.window(), sys.n_vertices(), sys.n_edges());
    println!(
        "interior_edges={} clipped_edges={} mean_km={} (theory {}) variance={} (theory {})",
        stats.interior_count,
        stats.clipped_count,
        stats.mean,
        2.0 / (3.0 * lambda.sqrt()),
        stats.variance,
        0.1856 / lambda
    );
    println!(
        "length_intensity={} (theory {}) total_length_km={}",
        stats.length_intensity,
        2.0 * lambda.sqrt(),
        stats.total_length
    );
    Ok(ExitCode::SUCCESS)
}
