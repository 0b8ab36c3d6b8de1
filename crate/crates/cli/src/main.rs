mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use migp_core::cycle::{
    central_difference, cluster_scenarios, fmt_sig, guard_scenarios, load_cycle, load_fixture, to_wheel_loads,
    write_scenarios_csv, DrivingCycle, LoadScenario, VelocityUnit,
};
use migp_core::migp::{
    benders, brute_force, compare, generate_instances, heuristic, write_comparison_csv, write_comparison_markdown,
    Engine, MigpProblem,
};
use migp_core::powertrain::{
    build_design_model, efficiency_map, solve_design, variable_mass_extension, write_efficiency_csv, MapGrid, Topology,
};
use serde::Serialize;
use serde_json::Value;

use config::{parse_assignment, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "migp",
    version,
    about = "Electric powertrain design by geometric programming"
)]
struct Cli {
    /// JSON file of dotted `section.field` keys.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set motor.max_speed=12000`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Clustering seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Turn a driving cycle into weighted wheel-load scenarios.
    Preprocess {
        #[command(flatten)]
        input: CycleInput,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Size a single-speed or CVT powertrain.
    Optimize {
        #[command(flatten)]
        input: CycleInput,
        #[arg(long, value_enum, default_value_t = TopologyArg::Single)]
        topology: TopologyArg,
        /// kg per W of motor power; makes the vehicle mass a variable.
        #[arg(long)]
        specific_mass: Option<f64>,
        /// Design JSON.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Solver iteration CSV.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
    },
    /// Choose a two-speed gear assignment with one engine.
    Migp {
        #[command(flatten)]
        input: CycleInput,
        /// bruteforce, benders, benders+heuristic or heuristic.
        #[arg(long, default_value = "benders")]
        engine: Engine,
        /// Result JSON.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Cut log or heuristic trace CSV.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
    },
    /// Run engines over generated instances and tabulate them.
    Compare {
        #[arg(long, value_delimiter = ',', default_value = "wltc,ftp75,hwfet,us06")]
        cycles: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "6,8,10")]
        ks: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "bf,b,b+h,h")]
        engines: Vec<Engine>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Efficiency of the scaled motor over its torque-speed envelope.
    Effmap {
        #[arg(long, default_value_t = 1.0)]
        power_factor: f64,
        #[arg(long, default_value_t = MapGrid::default().torque_steps)]
        torque_steps: usize,
        #[arg(long, default_value_t = MapGrid::default().speed_steps)]
        speed_steps: usize,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct CycleInput {
    /// Built-in cycle name or a CSV path.
    #[arg(long, default_value = "wltc")]
    cycle: String,
    /// Velocity unit of a CSV cycle.
    #[arg(long, default_value = "m/s")]
    unit: VelocityUnit,
    /// Cluster to this many scenarios; every step when omitted.
    #[arg(long)]
    k: Option<usize>,
    /// Leave out the gradeability and top-speed scenarios.
    #[arg(long)]
    no_guards: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum TopologyArg {
    Single,
    Cvt,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Csv,
    Markdown,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let base = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let mut pairs = cli
        .set
        .iter()
        .map(|s| parse_assignment(s))
        .collect::<Result<Vec<_>>>()?;
    if let Some(seed) = cli.seed {
        pairs.push(("run.seed".into(), Value::from(seed)));
    }
    base.with_overrides(pairs.iter().map(|(k, v)| (k.as_str(), v.clone())))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    cfg.migp.validate()?;
    match cli.command {
        Command::Preprocess { input, out } => {
            let s = scenarios(&input, &cfg)?;
            let mut buf = Vec::new();
            write_scenarios_csv(&s, &mut buf)?;
            emit(out.as_deref(), &buf)
        }
        Command::Optimize {
            input,
            topology,
            specific_mass,
            out,
            trace,
        } => {
            let s = scenarios(&input, &cfg)?;
            let (lo, hi) = cfg.bounds();
            let topo = match topology {
                TopologyArg::Single => Topology::single_speed(),
                TopologyArg::Cvt => Topology::cvt(),
            }
            .with_bounds(lo, hi);
            let mut dm = build_design_model(&s, &cfg.vehicle, &cfg.motor, &topo)?;
            if let Some(rho) = specific_mass.or(cfg.run.specific_mass) {
                dm = variable_mass_extension(&dm, rho)?;
            }
            let mut opts = cfg.solver.clone();
            opts.trace |= trace.is_some();
            let d = solve_design(&dm, &opts)?;
            for w in &d.warnings {
                log::warn!("{w}");
            }
            let json = to_json(&d)?;
            if let Some(p) = &trace {
                let mut b = Vec::new();
                d.solution.write_trace_csv(&mut b)?;
                write_file(p, &b)?;
            }
            emit(out.as_deref(), &json)
        }
        Command::Migp {
            input,
            engine,
            out,
            trace,
        } => {
            let s = scenarios(&input, &cfg)?;
            let (lo, hi) = cfg.bounds();
            let p = MigpProblem::new(s, cfg.vehicle.clone(), cfg.motor.clone()).with_bounds(lo, hi);
            let r = match engine {
                Engine::BruteForce => brute_force(&p, &cfg.migp)?,
                Engine::Benders => benders(&p, &cfg.migp, None)?,
                Engine::Heuristic => heuristic(&p, &cfg.migp)?,
                Engine::BendersHeuristic => {
                    let h = heuristic(&p, &cfg.migp)?;
                    benders(&p, &cfg.migp, Some(&h.best_assignment))?
                }
            };
            log::info!(
                "{engine}: objective {} after {} iterations",
                fmt_sig(r.log_objective),
                r.iterations
            );
            let json = to_json(&r)?;
            if let Some(t) = &trace {
                let mut b = Vec::new();
                r.write_trace_csv(&mut b)?;
                write_file(t, &b)?;
            }
            emit(out.as_deref(), &json)
        }
        Command::Compare {
            cycles,
            ks,
            seeds,
            engines,
            format,
            out,
        } => {
            let names: Vec<&str> = cycles.iter().map(|c| c.trim_end_matches(".csv")).collect();
            let seeds = if cli.seed.is_some() { vec![cfg.run.seed] } else { seeds };
            let inst = generate_instances(&names, &ks, &seeds, &cfg.vehicle, cfg.guards)?;
            let (lo, hi) = cfg.bounds();
            let base = MigpProblem::new(Vec::new(), cfg.vehicle.clone(), cfg.motor.clone()).with_bounds(lo, hi);
            let rows = compare(&inst, &engines, &base, &cfg.migp)?;
            let mut buf = Vec::new();
            match format {
                Format::Csv => write_comparison_csv(&rows, &mut buf)?,
                Format::Markdown => write_comparison_markdown(&rows, &mut buf)?,
            }
            emit(out.as_deref(), &buf)
        }
        Command::Effmap {
            power_factor,
            torque_steps,
            speed_steps,
            out,
        } => {
            let grid = MapGrid {
                torque_steps,
                speed_steps,
            };
            let pts = efficiency_map(&cfg.motor, power_factor, grid)?;
            let mut buf = Vec::new();
            write_efficiency_csv(&pts, &mut buf)?;
            emit(out.as_deref(), &buf)
        }
    }
}

fn read_cycle(input: &CycleInput) -> Result<DrivingCycle> {
    let path = Path::new(&input.cycle);
    if path.is_file() {
        let c = load_cycle(path, input.unit)?;
        return Ok(central_difference(&c)?);
    }
    let name = input.cycle.strip_suffix(".csv").unwrap_or(&input.cycle);
    load_fixture(name).with_context(|| format!("`{}` is neither a file nor a built-in cycle", input.cycle))
}

fn scenarios(input: &CycleInput, cfg: &RunConfig) -> Result<Vec<LoadScenario>> {
    let cycle = read_cycle(input)?;
    let loads = to_wheel_loads(&cycle, &cfg.vehicle)?;
    let mut s = match input.k.or(cfg.run.k) {
        Some(k) => cluster_scenarios(&loads, k, cfg.run.seed, &cfg.vehicle)?,
        None => loads,
    };
    if !input.no_guards {
        s.extend(guard_scenarios(&cfg.vehicle, cfg.guards)?);
    }
    log::info!("{} scenarios from `{}`", s.len(), cycle.name);
    Ok(s)
}

/// Pretty JSON with every float cut to twelve significant digits.
fn to_json<T: Serialize>(x: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_value(x)?;
    round_floats(&mut v);
    let mut out = serde_json::to_vec_pretty(&v)?;
    out.push(b'\n');
    Ok(out)
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64().and_then(|x| fmt_sig(x).parse::<f64>().ok()) {
                *v = Value::from(x);
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_floats),
        Value::Object(m) => m.values_mut().for_each(round_floats),
        _ => {}
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_file(p, bytes),
        None => {
            use std::io::Write;
            let mut so = std::io::stdout().lock();
            so.write_all(bytes)?;
            so.flush()?;
            Ok(())
        }
    }
}

/// Write through a sibling temp file so a failed run leaves nothing half-written.
fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let Some(name) = path.file_name() else {
        bail!("output path `{}` has no file name", path.display());
    };
    let mut tmp_name = name.to_os_string();
    tmp_name.push(".partial");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("moving output into {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_are_rounded_recursively() {
        let mut v = serde_json::json!({"a": [0.1 + 0.2, 3], "b": {"c": 1234.56789012345}});
        round_floats(&mut v);
        assert_eq!(v, serde_json::json!({"a": [0.3, 3], "b": {"c": 1234.56789012}}));
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
