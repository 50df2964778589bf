use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;

use dpp_core::document::{build_document, verify_document, SolutionDocument};
use dpp_core::double_oracle::{solve_game, DoubleOracleError, SolveOptions};
use dpp_core::environment::{generate_grid, NodeId, Scenario};
use dpp_core::exec::Execution;
use dpp_core::sweep::sweep;

/// Exact equilibria of the multi-goal deceptive path planning game.
#[derive(Debug, Parser)]
#[command(name = "dpp", version)]
struct Cli {
    /// Print per-round progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    /// Worker threads for parallel work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a scenario and write the solution document.
    Solve {
        scenario: PathBuf,
        /// Output file (default: stdout).
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Write the final primal and dual LPs as `<PREFIX>.primal.lp` and
        /// `<PREFIX>.dual.lp`.
        #[arg(long, value_name = "PREFIX")]
        dump_lp: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Solve once per start node and write a CSV table.
    Sweep {
        scenario: PathBuf,
        /// Comma-separated start nodes (default: every node).
        #[arg(long, value_delimiter = ',')]
        starts: Vec<String>,
        /// Output file (default: stdout).
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Re-check a solution document against its scenario.
    Verify { scenario: PathBuf, solution: PathBuf },
    /// Write a 4-connected grid scenario with uniform weights.
    GenGrid {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        /// Goal cell as `ROW,COL`; repeat for several goals.
        #[arg(long = "goal", value_parser = parse_cell, required = true)]
        goals: Vec<(usize, usize)>,
        /// Start cell as `ROW,COL`.
        #[arg(long, value_parser = parse_cell)]
        start: (usize, usize),
        #[arg(long, default_value_t = 1.0)]
        weight: f64,
        /// Output file (default: stdout).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Initial horizon (default: hops to the nearest goal).
    #[arg(long)]
    tau0: Option<usize>,
    /// LP, reach-probability and certification tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Cap on double-oracle rounds (default: 10 x node count).
    #[arg(long)]
    max_iter: Option<usize>,
    /// Charge free default-continuation edges; without a value, 1e-6 x the
    /// smallest edge weight.
    #[arg(long, num_args = 0..=1, value_name = "DELTA")]
    delta: Option<Option<f64>>,
}

impl SolverArgs {
    fn options(&self, s: &Scenario, jobs: Option<usize>) -> SolveOptions {
        SolveOptions {
            tau0: self.tau0,
            tol: self.tol,
            max_iter: self.max_iter,
            delta: self.delta.map(|d| d.unwrap_or(1e-6 * s.min_weight())),
            keep_models: false,
            exec: execution(jobs),
        }
    }
}

fn execution(jobs: Option<usize>) -> Execution {
    if jobs == Some(1) {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn parse_cell(text: &str) -> Result<(usize, usize), String> {
    let (r, c) = text.split_once(',').ok_or("expected ROW,COL")?;
    let parse = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("{x}: {e}"));
    Ok((parse(r)?, parse(c)?))
}

/// How a command failed; decides the exit status.
enum Failure {
    /// Unreadable or inconsistent input.
    Input(anyhow::Error),
    /// The run completed but the result is not a certified equilibrium.
    Uncertified(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

fn load_scenario(path: &Path) -> anyhow::Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Scenario::from_json(&text).with_context(|| format!("invalid scenario {}", path.display()))
}

fn write_output(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => io::stdout().write_all(text.as_bytes()).context("cannot write to stdout"),
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn cmd_solve(
    scenario: &Path,
    out: Option<&Path>,
    dump_lp: Option<&Path>,
    args: &SolverArgs,
    jobs: Option<usize>,
) -> Result<(), Failure> {
    let s = load_scenario(scenario)?;
    let mut opts = args.options(&s, jobs);
    opts.keep_models = dump_lp.is_some();
    let sol = match solve_game(&s, &opts) {
        Ok(sol) => sol,
        Err(DoubleOracleError::NonConvergence { iterations, last }) => {
            let detail = last.map_or(String::new(), |l| {
                format!(
                    "; last value {:.12}, {} reachable frontier histories",
                    l.value,
                    l.frontier.len()
                )
            });
            return Err(Failure::Uncertified(format!("no convergence after {iterations} rounds{detail}")));
        }
        Err(e) => return Err(Failure::Uncertified(format!("solver failure: {e}"))),
    };
    if let (Some(prefix), Some(models)) = (dump_lp, &sol.models) {
        for (suffix, model) in [(".primal.lp", &models.primal), (".dual.lp", &models.dual)] {
            let path = with_suffix(prefix, suffix);
            fs::write(&path, model.to_lp_format()).with_context(|| format!("cannot write {}", path.display()))?;
            info!("wrote {}", path.display());
        }
    }
    let doc = build_document(&sol, &opts);
    write_output(out, &doc.to_json())?;
    if doc.certified() {
        Ok(())
    } else {
        let v = &doc.verification;
        Err(Failure::Uncertified(format!(
            "equilibrium not certified: attacker gap {:.3e}, defender gap {:.3e}, duality gap {:.3e}",
            v.report.attacker_gap, v.report.defender_gap, v.duality_gap
        )))
    }
}

fn fmt_num(x: f64) -> String {
    format!("{}", dpp_core::document::round_significant(x))
}

fn cmd_sweep(
    scenario: &Path,
    starts: &[String],
    out: Option<&Path>,
    args: &SolverArgs,
    jobs: Option<usize>,
) -> Result<(), Failure> {
    let s = load_scenario(scenario)?;
    let opts = args.options(&s, jobs);
    let starts: Vec<NodeId> = if starts.is_empty() {
        s.nodes().collect()
    } else {
        starts
            .iter()
            .map(|name| s.node(name).with_context(|| format!("unknown start node {name}")))
            .collect::<anyhow::Result<_>>()?
    };
    let rows = sweep(&s, &starts, &opts, execution(jobs), jobs);

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["start", "value", "voi", "rod", "support", "iters", "ms"])
        .context("CSV output")?;
    let mut failed = 0;
    for row in &rows {
        let ms = format!("{:.1}", row.millis);
        let record = match &row.outcome {
            Ok(c) => {
                if !c.certified {
                    failed += 1;
                }
                [
                    row.start.clone(),
                    fmt_num(c.value),
                    fmt_num(c.voi),
                    fmt_num(c.rod),
                    c.support.join("|"),
                    c.iterations.to_string(),
                    ms,
                ]
            }
            Err(e) => {
                failed += 1;
                [row.start.clone(), String::new(), String::new(), String::new(), format!("error: {e}"), String::new(), ms]
            }
        };
        w.write_record(&record).context("CSV output")?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("CSV output: {e}"))?;
    write_output(out, &String::from_utf8(bytes).context("CSV output")?)?;
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Uncertified(format!("{failed} of {} cells failed or were not certified", rows.len())))
    }
}

fn cmd_verify(scenario: &Path, solution: &Path) -> Result<(), Failure> {
    let s = load_scenario(scenario)?;
    let text = fs::read_to_string(solution).with_context(|| format!("cannot read {}", solution.display()))?;
    let doc = SolutionDocument::from_json(&text).with_context(|| format!("invalid solution {}", solution.display()))?;
    let report = verify_document(&s, &doc).context("solution does not match the scenario")?;
    let json = serde_json::to_string_pretty(&report).context("report serialisation")?;
    write_output(None, &(json + "\n"))?;
    if report.certified {
        Ok(())
    } else {
        Err(Failure::Uncertified(format!(
            "not an equilibrium: attacker gap {:.3e}, defender gap {:.3e}",
            report.attacker_gap, report.defender_gap
        )))
    }
}

fn cmd_gen_grid(
    rows: usize,
    cols: usize,
    goals: &[(usize, usize)],
    start: (usize, usize),
    weight: f64,
    out: Option<&Path>,
) -> Result<(), Failure> {
    if !(weight > 0.0) {
        return Err(Failure::Input(anyhow::anyhow!("weight must be positive")));
    }
    let s = generate_grid(rows, cols, goals, start, weight).context("cannot build grid")?;
    let text = serde_json::to_string_pretty(&s.to_doc()).context("scenario serialisation")?;
    write_output(out, &(text + "\n"))?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Solve {
            scenario,
            out,
            dump_lp,
            solver,
        } => cmd_solve(scenario, out.as_deref(), dump_lp.as_deref(), solver, cli.jobs),
        Command::Sweep {
            scenario,
            starts,
            out,
            solver,
        } => cmd_sweep(scenario, starts, out.as_deref(), solver, cli.jobs),
        Command::Verify { scenario, solution } => cmd_verify(scenario, solution),
        Command::GenGrid {
            rows,
            cols,
            goals,
            start,
            weight,
            out,
        } => cmd_gen_grid(*rows, *cols, goals, *start, *weight, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if cli.jobs == Some(0) {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(1);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Uncertified(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
