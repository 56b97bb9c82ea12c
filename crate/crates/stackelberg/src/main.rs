use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stackelberg::config::{parse_method_flag, RunConfig};
use stackelberg::report::{self, to_json_string};
use stackelberg::reproduce::{cost_report_value, fixture_config, reproduce};
use stackelberg::run::{self, Outputs, Overrides, RunError};
use stackelberg::verify::{all_passed, checks_value, run_checks, Fault};

#[derive(Debug, Parser)]
#[command(
    name = "stackelberg",
    version,
    about = "Feedback Stackelberg LQ games with private inputs and observers"
)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Simulation steps.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Riccati iteration tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Observer synthesis: lmi, dual-riccati or auto.
    #[arg(long, global = true)]
    method: Option<String>,
    /// First N of the decay analysis.
    #[arg(long, global = true, default_value_t = 0)]
    from: usize,
    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[arg(long, global = true, hide = true, value_enum)]
    inject_fault: Option<FaultArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FaultArg {
    K1,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the coupled Riccati equations; writes solution.json.
    Solve,
    /// Design observer gains; writes observer.json.
    Design,
    /// Simulate the observer-feedback loop; writes trajectory.csv.
    Simulate,
    /// Exact costs and decay profile; writes cost_report.json and decay.csv.
    Analyze,
    /// Run the invariant suite; writes verify.json and fails on any violation.
    Verify,
    /// Run the bundled two-state example and print the comparison table.
    ReproducePaper,
}

fn load(cli: &Cli, fallback_to_fixture: bool) -> Result<RunConfig, RunError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_path(path)?,
        None if fallback_to_fixture => fixture_config(),
        None => {
            return Err(RunError::Config(stackelberg::config::ConfigError::Validation {
                field: "--config".into(),
                reason: "required".into(),
            }))
        }
    };
    let method = cli.method.as_deref().map(parse_method_flag).transpose()?;
    Overrides {
        steps: cli.steps,
        tol: cli.tol,
        method,
    }
    .apply(&mut cfg)?;
    Ok(cfg)
}

fn finish(outputs: &Outputs, dir: &Path, quiet: bool) -> Result<(), RunError> {
    let written = outputs.write(dir)?;
    if !quiet {
        for p in written {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), RunError> {
    let mut outputs = Outputs::default();
    match cli.command {
        Command::Solve => {
            let cfg = load(cli, false)?;
            let sol = run::solve(&cfg)?;
            if !cli.quiet {
                println!("converged in {} iterations", sol.iterations);
                println!("K1 = {:?}", sol.k1);
                println!("K2 = {:?}", sol.k2);
            }
            outputs.add("solution.json", to_json_string(&report::solution_value(&sol)));
        }
        Command::Design => {
            let cfg = load(cli, false)?;
            let sol = run::solve(&cfg)?;
            let design = run::design(&cfg, &sol)?;
            if !cli.quiet {
                println!("{} via {}", design.verdict, design.method.as_str());
            }
            outputs.add("observer.json", to_json_string(&report::observer_value(&design)));
        }
        Command::Simulate => {
            let cfg = load(cli, false)?;
            let sol = run::solve(&cfg)?;
            let design = run::design(&cfg, &sol)?;
            let traj = run::trajectory(&cfg, &sol, &design)?;
            let m = cfg.observer_model();
            if !cli.quiet {
                println!("{} records", traj.len());
            }
            outputs.add(
                "trajectory.csv",
                report::trajectory_csv(&traj, m.n(), m.m1(), m.m2(), m.s1(), m.s2()),
            );
        }
        Command::Analyze => {
            let cfg = load(cli, false)?;
            let sol = run::solve(&cfg)?;
            let design = run::design(&cfg, &sol)?;
            let analysis = run::analyze(&cfg, &sol, &design, cli.from)?;
            if !cli.quiet {
                let c = &analysis.costs;
                println!("delta J = [{:e}, {:e}]", c.delta[0], c.delta[1]);
                println!(
                    "delta J at N={} = [{:e}, {:e}]",
                    analysis.from, analysis.tail_gap[0], analysis.tail_gap[1]
                );
            }
            outputs.add("cost_report.json", to_json_string(&cost_report_value(&analysis)));
            outputs.add("decay.csv", report::decay_csv(&analysis.profile));
        }
        Command::Verify => {
            let cfg = load(cli, true)?;
            let fault = cli.inject_fault.map(|FaultArg::K1| Fault::K1);
            let checks = run_checks(&cfg, fault)?;
            if !cli.quiet {
                for c in &checks {
                    println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
                }
            }
            outputs.add("verify.json", to_json_string(&checks_value(&checks)));
            finish(&outputs, &cli.out, cli.quiet)?;
            if !all_passed(&checks) {
                let failed = checks.iter().filter(|c| !c.passed).count();
                return Err(RunError::Verification(format!("{failed} check(s) failed")));
            }
            return Ok(());
        }
        Command::ReproducePaper => {
            let cfg = load(cli, true)?;
            let reproduction = reproduce(&cfg)?;
            if !cli.quiet {
                print!("{}", reproduction.table());
            }
            outputs = reproduction.outputs;
        }
    }
    finish(&outputs, &cli.out, cli.quiet)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
