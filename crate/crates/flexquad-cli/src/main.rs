//! Command-line front end: run scenarios, replay estimator traces, plan
//! collision-aware waypoint maneuvers, and summarize traces.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

use flexquad_core::cob::{choose_plan, CobProblem, PlanStep};
use flexquad_core::harness::{replay_estimate, report_from_trace, run};
use flexquad_core::scenario::{apply_key, load_scenario, Scenario};

#[derive(Parser)]
#[command(name = "flexquad", about = "Compliant-quadrotor simulation scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutputOpts {
    /// Output directory; falls back to $FLEXQUAD_OUT, then the working dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutputOpts {
    fn dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os("FLEXQUAD_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write trace, map, and report artifacts.
    Simulate {
        scenario: PathBuf,
        /// Override any scenario key, e.g. --set duration=5
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Shorthand for --set seed=N
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Re-run the estimator over a trace's logged raw inputs and verify the
    /// logged estimates reproduce bitwise.
    ReplayEstimate {
        trace: PathBuf,
        /// Scenario the trace came from (for estimator parameters).
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Plan a 1-D waypoint maneuver against an optional wall.
    PlanCob {
        #[arg(long)]
        goal: f64,
        #[arg(long)]
        wall: Option<f64>,
        #[arg(long, default_value_t = 3.0)]
        a_max: f64,
        #[arg(long, default_value_t = 2.0)]
        v_max: f64,
        #[arg(long, default_value_t = 0.09)]
        restitution: f64,
        #[arg(long, default_value_t = 0.0)]
        start: f64,
        /// Write a position/velocity phase-portrait CSV here.
        #[arg(long)]
        portrait: Option<PathBuf>,
    },
    /// Summarize a trace file.
    Report { trace: PathBuf },
    /// Run several scenario files, optionally in parallel.
    Sweep {
        scenarios: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        output: OutputOpts,
    },
}

fn load_with_overrides(path: &Path, sets: &[String], seed: Option<u64>) -> Result<Scenario> {
    let mut scenario =
        load_scenario(path).with_context(|| format!("loading {}", path.display()))?;
    for set in sets {
        let (key, value) = set
            .split_once('=')
            .with_context(|| format!("--set {set:?} is not KEY=VALUE"))?;
        apply_key(&mut scenario, key.trim(), value.trim(), 0)
            .with_context(|| format!("--set {set:?}"))?;
    }
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    scenario.validate()?;
    Ok(scenario)
}

fn simulate(scenario: &Scenario, out: &Path) -> Result<()> {
    let art = run(scenario, out)?;
    print!("{}", art.report);
    println!("trace: {}", art.trace_path.display());
    if let Some(ply) = &art.ply_path {
        println!("map: {}", ply.display());
    }
    println!("report: {}", art.report_path.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { scenario, sets, seed, output } => {
            let s = load_with_overrides(&scenario, &sets, seed)?;
            simulate(&s, &output.dir())
        }
        Command::ReplayEstimate { trace, scenario } => {
            let s = match scenario {
                Some(path) => load_scenario(&path)?,
                None => Scenario::default(),
            };
            let mismatches = replay_estimate(&trace, &s)?;
            if mismatches > 0 {
                bail!("{mismatches} estimator rows did not reproduce");
            }
            println!("replay ok: all estimator rows reproduced bitwise");
            Ok(())
        }
        Command::PlanCob { goal, wall, a_max, v_max, restitution, start, portrait } => {
            let problem = CobProblem {
                start_pos: start,
                start_vel: 0.0,
                goal,
                wall,
                a_max,
                v_max,
                restitution,
            };
            let plan = choose_plan(&problem)?;
            println!("kind: {:?}", plan.kind);
            println!("total: {:.6} s", plan.total_time);
            for step in &plan.steps {
                match step {
                    PlanStep::Accel { accel, duration } => {
                        println!("  accel {accel:+.3} m/s^2 for {duration:.6} s")
                    }
                    PlanStep::Jump { restitution } => println!("  jump v -> {restitution:-.3} v"),
                }
            }
            if let Some(path) = portrait {
                let mut csv = String::from("t,x,v\n");
                let mut t = 0.0;
                while t <= plan.total_time {
                    let (x, v) = plan.sample(t);
                    csv.push_str(&format!("{t},{x},{v}\n"));
                    t += 1e-3;
                }
                std::fs::write(&path, csv)
                    .with_context(|| format!("writing {}", path.display()))?;
                println!("portrait: {}", path.display());
            }
            Ok(())
        }
        Command::Report { trace } => {
            print!("{}", report_from_trace(&trace)?);
            Ok(())
        }
        Command::Sweep { scenarios, jobs, output } => {
            if scenarios.is_empty() {
                bail!("no scenario files given");
            }
            let out = output.dir();
            let jobs = jobs.max(1);
            let queue = std::sync::Mutex::new(scenarios.into_iter());
            let failures = std::sync::Mutex::new(Vec::new());
            std::thread::scope(|scope| {
                for _ in 0..jobs {
                    scope.spawn(|| loop {
                        let Some(path) = queue.lock().unwrap().next() else { break };
                        let outcome = load_scenario(&path)
                            .and_then(|s| run(&s, &out).map(|a| (s.name.clone(), a)));
                        match outcome {
                            Ok((name, art)) => {
                                println!("{name}: ok ({} rows)", art.report.rows)
                            }
                            Err(e) => failures
                                .lock()
                                .unwrap()
                                .push(format!("{}: {e}", path.display())),
                        }
                    });
                }
            });
            let failures = failures.into_inner().unwrap();
            if !failures.is_empty() {
                bail!("sweep failures:\n{}", failures.join("\n"));
            }
            Ok(())
        }
    }
}
