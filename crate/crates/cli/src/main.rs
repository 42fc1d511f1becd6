//! `trayctl`: run the tray inspection simulator and its planners from the
//! command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use tray_autonomy::contact::{plan_contacts, ContactSequenceProblem, PlanMethod, PlannerSettings};
use tray_autonomy::geometry::WorldConfig;
use tray_autonomy::mission::MissionConfig;
use tray_autonomy::qp::{QpProblemJson, QpSettings, QpSolver};
use tray_autonomy::sim::{check_invariants, run_mission, ExitStatus, Fault, SimConfig};

#[derive(Parser)]
#[command(name = "trayctl", version, about = "Tray inspection simulator and planners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a mission and write the trace directory.
    Run {
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long)]
        mission: Option<PathBuf>,
        #[arg(long)]
        sim: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the RNG seed of the sim file.
        #[arg(long)]
        seed: Option<u64>,
        /// Adds a fault, e.g. `transition-failure@2`. Repeatable.
        #[arg(long)]
        fault: Vec<Fault>,
    },
    /// Check a run directory; exits nonzero on any violation.
    CheckInvariants {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Solve a contact-sequence problem and print the plan.
    PlanContacts {
        #[arg(long)]
        problem: PathBuf,
        /// Use exhaustive enumeration instead of branch and bound.
        #[arg(long)]
        enumerate: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a QP from its JSON dump and print the solution.
    SolveQp {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}

fn run(
    world: Option<PathBuf>,
    mission: Option<PathBuf>,
    sim: Option<PathBuf>,
    out: PathBuf,
    seed: Option<u64>,
    faults: Vec<Fault>,
) -> Result<ExitCode> {
    let mut sim_cfg = match &sim {
        Some(p) => SimConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => SimConfig::default(),
    };
    let sim_dir = sim
        .as_deref()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let world = world.or_else(|| sim_cfg.world.as_deref().map(|w| resolve(&sim_dir, w)));
    let mission = mission.or_else(|| sim_cfg.mission.as_deref().map(|m| resolve(&sim_dir, m)));
    let (Some(world), Some(mission)) = (world, mission) else {
        bail!("both a world and a mission file are required (flags or sim file references)");
    };
    let world_cfg = WorldConfig::load(&world).with_context(|| format!("loading {}", world.display()))?;
    let mission_cfg = MissionConfig::load(&mission).with_context(|| format!("loading {}", mission.display()))?;
    if let Some(s) = seed {
        sim_cfg.seed = s;
    }
    sim_cfg.faults.extend(faults);
    let t0 = Instant::now();
    let outcome = run_mission(&world_cfg, &mission_cfg, &sim_cfg, &out)?;
    println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
    eprintln!("wall time {:.3} s", t0.elapsed().as_secs_f64());
    Ok(match outcome.status {
        ExitStatus::Done => ExitCode::SUCCESS,
        ExitStatus::Halted => ExitCode::from(3),
    })
}

fn check(trace: &Path) -> Result<ExitCode> {
    let rep = check_invariants(trace)?;
    println!("{}", serde_json::to_string_pretty(&rep)?);
    Ok(if rep.ok() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn plan(problem: &Path, enumerate: bool, out: Option<&Path>) -> Result<ExitCode> {
    let p = ContactSequenceProblem::load(problem)?;
    let settings = PlannerSettings {
        method: if enumerate {
            PlanMethod::Enumeration
        } else {
            PlanMethod::BranchAndBound
        },
        ..PlannerSettings::default()
    };
    let t0 = Instant::now();
    let report = plan_contacts(&p, &settings)?;
    report.plan.verify(&p)?;
    if let Some(path) = out {
        report.plan.save(path)?;
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "plan": report.plan,
            "nodes": report.nodes,
            "qp_solves": report.qp_solves,
            "seconds": t0.elapsed().as_secs_f64(),
        }))?
    );
    Ok(ExitCode::SUCCESS)
}

fn solve(problem: &Path, tol: f64) -> Result<ExitCode> {
    let p = QpProblemJson::load(problem)?;
    let mut solver = QpSolver::new(QpSettings {
        tol,
        ..QpSettings::default()
    });
    let sol = solver.solve(&p);
    let kkt = p.kkt_residuals(&sol);
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "status": sol.status,
            "x": sol.x.as_slice(),
            "objective": sol.objective,
            "iterations": sol.iterations,
            "polished": sol.polished,
            "kkt": kkt,
        }))?
    );
    Ok(if sol.is_optimal() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            world,
            mission,
            sim,
            out,
            seed,
            fault,
        } => run(world, mission, sim, out, seed, fault),
        Command::CheckInvariants { trace } => check(&trace),
        Command::PlanContacts {
            problem,
            enumerate,
            out,
        } => plan(&problem, enumerate, out.as_deref()),
        Command::SolveQp { problem, tol } => solve(&problem, tol),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(4)
        }
    }
}
