//! `viab`: solve viability kernels for lake scenarios, compare members,
//! check consensus, trace trajectories and serve the HTTP job API.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use viab_core::artifact::{self, PolicySpec, ProbeSpec};
use viab_core::consensus::{
    check_consensus, find_counterexample, kernel_intersection, member_kernels, MemberProblem, DEFAULT_HORIZON,
};
use viab_core::grid::CellSet;
use viab_core::oracle2d::{analytic_boundary, OracleOutcome};
use viab_core::par::{self, Execution};
use viab_core::scenario::{load_scenario, RunReport, Scenario};
use viab_core::solver::{guaranteed_kernel, intersect_regulation, Quiet};
use viab_core::trajectory::SelectorRule;
use viab_core::{Error, Result};

/// Exit status of a run whose kernel is empty under `--expect-nonempty`.
const EXIT_EMPTY: u8 = 2;

#[derive(Parser)]
#[command(name = "viab", version, about = "Viability kernels for multi-stakeholder lake management")]
struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run every sweep on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file, or the name of a packaged scenario.
    scenario: PathBuf,
    /// Grid override: `N` or `NLxNP` nodes.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<[usize; 2]>,
    /// Output directory.
    #[arg(long, default_value = "viab-out")]
    out: PathBuf,
    /// Exit with status 2 when the kernel is empty.
    #[arg(long)]
    expect_nonempty: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel of the group problem: raster, report, boundary and demo rollout.
    Solve(Common),
    /// Kernel of every member and their intersection.
    Members(Common),
    /// Whether the members' kernel intersection is a consensus, with a witness if not.
    Consensus {
        #[command(flatten)]
        common: Common,
        /// Witness rollout length in steps.
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: usize,
    },
    /// Analytic kernel boundary of a point sigmoid or logistic member.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Member id (defaults to the first member).
        #[arg(long)]
        member: Option<String>,
    },
    /// Roll out members' nominal models from a start state.
    Traj {
        #[command(flatten)]
        common: Common,
        /// Start state `L,P`.
        #[arg(long, value_parser = parse_pair)]
        start: Option<[f64; 2]>,
        /// `constant:U`, `selector[:first-viable|minimum|maximum]` or `demo`.
        #[arg(long, default_value = "demo")]
        policy: String,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long)]
        member: Option<String>,
    },
    /// Compare two kernel rasters.
    Diff { a: PathBuf, b: PathBuf },
    /// Run the HTTP job service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Solves running at once.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value = "viab-data")]
        data: PathBuf,
    },
}

fn parse_grid(s: &str) -> std::result::Result<[usize; 2], String> {
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
    match s.split_once(['x', 'X']) {
        Some((a, b)) => Ok([parse(a)?, parse(b)?]),
        None => {
            let n = parse(s)?;
            Ok([n, n])
        }
    }
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    let (a, b) = s.split_once(',').ok_or("expected `L,P`")?;
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    Ok([parse(a)?, parse(b)?])
}

fn parse_policy(s: &str) -> Result<Option<PolicySpec>> {
    let bad = || Error::ContractViolation(format!("unknown policy `{s}`"));
    let (kind, arg) = s.split_once(':').map_or((s, None), |(k, a)| (k, Some(a)));
    Ok(match (kind, arg) {
        ("demo", None) => None,
        ("constant", Some(u)) => Some(PolicySpec::Constant(u.parse().map_err(|_| bad())?)),
        ("selector", rule) => Some(PolicySpec::Selector(match rule {
            None | Some("first-viable") => SelectorRule::FirstViable,
            Some("minimum") => SelectorRule::Minimum,
            Some("maximum") => SelectorRule::Maximum,
            _ => return Err(bad()),
        })),
        _ => return Err(bad()),
    })
}

struct Ctx {
    exec: Execution,
}

impl Common {
    fn scenario(&self) -> Result<Scenario> {
        let s = load_scenario(&self.scenario).map_err(|e| match e {
            Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", self.scenario.display()))),
            e => e,
        })?;
        match self.grid {
            Some(nodes) => s.with_nodes(nodes),
            None => Ok(s),
        }
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        fs::write(self.out.join(name), contents)?;
        Ok(())
    }

    fn status(&self, empty: bool) -> ExitCode {
        if empty && self.expect_nonempty {
            ExitCode::from(EXIT_EMPTY)
        } else {
            ExitCode::SUCCESS
        }
    }
}

fn solve(ctx: &Ctx, c: &Common) -> Result<ExitCode> {
    let s = c.scenario()?;
    let (_, a) = artifact::solve(&s, ctx.exec, &Quiet)?;
    for (name, contents) in a.files() {
        c.write(name, &contents)?;
    }
    let r = &a.report;
    println!(
        "{}: {} kernel {} of {} cells, {} sweeps, {:.0} ms{}",
        r.scenario,
        r.kind,
        r.kernel_cells,
        s.grid.len(),
        r.iterations,
        r.wall_time_ms,
        if r.empty { ", EMPTY" } else { "" }
    );
    Ok(c.status(r.empty))
}

fn members(ctx: &Ctx, c: &Common) -> Result<ExitCode> {
    let s = c.scenario()?;
    let results = member_kernels(&s, ctx.exec)?;
    let mut reports = Vec::new();
    for (i, m) in results.iter().enumerate() {
        let problem = s.member_problem(i, ctx.exec);
        let kind = if m.guaranteed { "guaranteed" } else { "viability" };
        reports.push(RunReport::new(&s, &problem, &m.report, kind));
        c.write(&format!("member-{}.rst", m.id), &m.report.kernel.to_raster(&s.hash))?;
        println!("member {}: {} kernel {} cells", m.id, kind, m.report.kernel.count());
    }
    let h = kernel_intersection(&results)?;
    c.write("intersection.rst", &h.to_raster(&s.hash))?;
    c.write("members.json", &(serde_json::to_string_pretty(&reports)? + "\n"))?;
    println!("intersection: {} cells", h.count());
    Ok(c.status(h.is_empty()))
}

#[derive(Serialize)]
struct ConsensusFile<'a> {
    scenario: &'a str,
    scenario_hash: &'a str,
    verdict: &'a viab_core::consensus::ConsensusVerdict,
    witness: Option<&'a viab_core::consensus::Witness>,
}

fn consensus(ctx: &Ctx, c: &Common, horizon: usize) -> Result<ExitCode> {
    let s = c.scenario()?;
    let results = member_kernels(&s, ctx.exec)?;
    let h = kernel_intersection(&results)?;
    let maps: Vec<_> = results.iter().map(|r| &r.report.regulation).collect();
    let shared = intersect_regulation(&maps, &h)?;
    let problems: Vec<_> = (0..s.members.len()).map(|i| s.member_problem(i, ctx.exec)).collect();
    let named: Vec<_> = s.members.iter().zip(&problems).map(|(m, p)| MemberProblem { id: &m.id, problem: p }).collect();
    let verdict = check_consensus(&h, &named, &shared)?;
    let witness = if verdict.consensus { None } else { find_counterexample(&h, &named, &shared, horizon)? };
    let file = ConsensusFile { scenario: &s.file.name, scenario_hash: &s.hash, verdict: &verdict, witness: witness.as_ref() };
    c.write("consensus.json", &(serde_json::to_string_pretty(&file)? + "\n"))?;
    c.write("intersection.rst", &h.to_raster(&s.hash))?;
    println!(
        "intersection {} cells: {}",
        h.count(),
        if verdict.consensus { "consensus" } else { "not a consensus" }
    );
    for m in &verdict.members {
        println!("  member {}: {} failing cells", m.id, m.failing_cells);
    }
    if let Some(w) = &witness {
        c.write("witness.csv", &w.trajectory.to_csv())?;
        println!("  witness: member {} from {:?} with shared controls {:?}", w.member, w.state, w.controls);
    }
    Ok(c.status(h.is_empty()))
}

fn oracle(c: &Common, member: Option<&str>) -> Result<ExitCode> {
    let s = c.scenario()?;
    let m = match member {
        Some(id) => s
            .members
            .iter()
            .find(|m| m.id == id)
            .ok_or_else(|| Error::ContractViolation(format!("no member `{id}`")))?,
        None => &s.members[0],
    };
    if !m.is_point() {
        return Err(Error::ContractViolation(format!("member `{}` holds parameter ranges", m.id)));
    }
    match analytic_boundary(&m.nominal(), s.bounds, s.control_box.u_min)? {
        OracleOutcome::Boundary(b) => {
            c.write("oracle.csv", &b.to_csv())?;
            let region = b.region(s.grid.clone());
            c.write("oracle.rst", &region.to_raster(&s.hash))?;
            println!("member {}: {:?} boundary with {} vertices, {} cells", m.id, b.case, b.vertices.len(), region.count());
            Ok(ExitCode::SUCCESS)
        }
        OracleOutcome::Empty => {
            println!("member {}: empty kernel", m.id);
            Ok(c.status(true))
        }
        OracleOutcome::Unsupported { roots } => {
            Err(Error::ContractViolation(format!("{roots} equilibria at L_min; no analytic boundary")))
        }
    }
}

fn traj(
    ctx: &Ctx,
    c: &Common,
    start: Option<[f64; 2]>,
    policy: &str,
    steps: usize,
    member: Option<String>,
) -> Result<ExitCode> {
    let s = c.scenario()?;
    let policy = parse_policy(policy)?;
    let Some(policy) = policy else {
        let (report, _) = artifact::solve(&s, ctx.exec, &Quiet)?;
        let t = artifact::demo_trajectory(&s, &report.kernel)?
            .ok_or_else(|| Error::ContractViolation("the scenario has no demo".into()))?;
        c.write(artifact::TRAJECTORY_FILE, &t.to_csv())?;
        println!("demo: {} states{}", t.states.len(), if t.exited() { ", left the kernel" } else { "" });
        return Ok(ExitCode::SUCCESS);
    };
    let start = start.ok_or_else(|| Error::ContractViolation("--start is required for this policy".into()))?;
    let solved = match policy {
        PolicySpec::Selector(_) => Some(guaranteed_kernel(&s.group_problem(ctx.exec)?)?),
        _ => None,
    };
    let spec = ProbeSpec { start, policy, steps, member, snap: false };
    let runs = artifact::probe(&s, &spec, solved.as_ref().map(|r| (&r.kernel, &r.regulation)))?;
    for run in &runs {
        let t = &run.trajectory;
        c.write(&format!("trajectory-{}.csv", run.member), &t.to_csv())?;
        println!(
            "member {}: {} states{}",
            run.member,
            t.states.len(),
            match t.exit {
                Some(e) => format!(", exit {e:?}"),
                None => String::new(),
            }
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn read_raster(path: &Path) -> Result<(CellSet, String)> {
    CellSet::from_raster(&fs::read_to_string(path)?)
}

fn diff(a: &Path, b: &Path) -> Result<ExitCode> {
    let (ka, ha) = read_raster(a)?;
    let (kb, hb) = read_raster(b)?;
    let only_a = ka.difference(&kb)?.count();
    let only_b = kb.difference(&ka)?.count();
    if only_a == 0 && only_b == 0 {
        println!("identical: {} cells{}", ka.count(), if ha == hb { "" } else { " (scenario hashes differ)" });
    } else {
        println!(
            "differ: {} vs {} cells, {only_a} only in the first, {only_b} only in the second, hausdorff {}",
            ka.count(),
            kb.count(),
            ka.hausdorff(&kb)?.map_or("undefined".into(), |h| h.to_string())
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(bind: SocketAddr, workers: usize, threads: usize, data: PathBuf) -> Result<ExitCode> {
    let config = viab_service::Config { workers, threads, data_dir: data };
    let rt = tokio::runtime::Runtime::new()?;
    eprintln!("serving on http://{bind}");
    rt.block_on(viab_service::serve(bind, config))?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let ctx = Ctx { exec: if cli.sequential { Execution::Sequential } else { Execution::Parallel } };
    let threads = cli.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if let Command::Serve { bind, workers, data } = cli.command {
        return serve(bind, workers, threads, data);
    }
    par::with_threads(threads, || match cli.command {
        Command::Solve(c) => solve(&ctx, &c),
        Command::Members(c) => members(&ctx, &c),
        Command::Consensus { common, horizon } => consensus(&ctx, &common, horizon),
        Command::Oracle { common, member } => oracle(&common, member.as_deref()),
        Command::Traj { common, start, policy, steps, member } => traj(&ctx, &common, start, &policy, steps, member),
        Command::Diff { a, b } => diff(&a, &b),
        Command::Serve { .. } => unreachable!("handled above"),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
