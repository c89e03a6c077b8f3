//! `kprio`: graph generation, SSSP benchmarks, phase simulation, bound
//! evaluation and audits. Results go out as versioned CSV.
//!
//! Exit codes: 0 success, 1 validation or oracle failure, 2 bad arguments,
//! 3 liveness timeout.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kprio::audit::{
    concurrent_stress, frozen_worker_check, mutant_central_audit, sequential_audit, AuditConfig, Discipline,
    StressConfig,
};
use kprio::exec::split_seed;
use kprio::report::write_csv;
use kprio::sim::{mean_by_phase, simulate_seeds};
use kprio::sssp::{dijkstra_oracle, generate_graph, read_graph, run_sssp, source_for_seed, write_graph, Graph};
use kprio::theory::{simple_bound, useless_work_bound, BoundInput};
use kprio::{BackendKind, Error, Execution, RunOptions, SchedulerConfig};
use serde::Serialize;

const K_SWEEP: [usize; 6] = [1, 8, 32, 128, 512, 2048];

#[derive(Parser)]
#[command(name = "kprio", version, about = "Relaxed priority scheduling benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an Erdős-Rényi graph with uniform (0, 1] weights.
    GenGraph(GenGraphArgs),
    /// Run parallel SSSP on a graph file and check it against Dijkstra.
    Sssp(SsspArgs),
    /// Run the phase-model simulator and evaluate the useless-work bound.
    Simulate(SimulateArgs),
    /// Evaluate the useless-work bound for given candidate distances.
    Bound(BoundArgs),
    /// Audit a backend: sequential relaxation check or concurrent stress.
    Audit(AuditArgs),
}

#[derive(Args)]
struct GenGraphArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendChoice {
    Ws,
    Central,
    Hybrid,
    All,
}

impl BackendChoice {
    fn kinds(self) -> Vec<BackendKind> {
        match self {
            BackendChoice::Ws => vec![BackendKind::WorkStealing],
            BackendChoice::Central => vec![BackendKind::Central],
            BackendChoice::Hybrid => vec![BackendKind::Hybrid],
            BackendChoice::All => BackendKind::ALL.to_vec(),
        }
    }
}

#[derive(Args)]
struct SsspArgs {
    /// Graph file written by `gen-graph`.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    backend: BackendChoice,
    /// Thread counts to run, comma separated.
    #[arg(long, env = "KPRIO_THREADS", value_delimiter = ',', default_values_t = [default_threads()])]
    threads: Vec<usize>,
    /// Relaxation values, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [512])]
    k: Vec<usize>,
    /// Replace --k by the sweep 1,8,32,128,512,2048.
    #[arg(long)]
    k_sweep: bool,
    /// Picks the source node and seeds the schedulers.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 600)]
    timeout_secs: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of places relaxing nodes per phase.
    #[arg(long, default_value_t = 80)]
    places: usize,
    #[arg(long, default_value_t = 0)]
    rho: usize,
    /// Graphs to simulate (seeds seed, seed+1, ...); rows are per-phase means.
    #[arg(long, default_value_t = 1)]
    graphs: usize,
    /// Fail unless the bound covers the observed useless work in 99% of phases.
    #[arg(long)]
    check_bound: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: f64,
    /// Candidate tentative distances in ascending order, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    distances: Vec<f64>,
    /// Relaxed candidate indices (0-based); the first --places when omitted.
    #[arg(long, value_delimiter = ',')]
    relaxed: Option<Vec<usize>>,
    #[arg(long, default_value_t = 80)]
    places: usize,
    /// Also evaluate the simple form with this spread.
    #[arg(long)]
    h_star: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long, value_enum)]
    backend: BackendChoice,
    #[arg(long, default_value_t = 100_000)]
    ops: usize,
    #[arg(long, env = "KPRIO_THREADS", default_value_t = default_threads())]
    threads: usize,
    /// Relaxation values drawn per push, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [8])]
    k: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run the concurrent exactly-once and frozen-worker checks instead.
    #[arg(long)]
    stress: bool,
    #[arg(long, default_value_t = 1_000_000)]
    tasks: u64,
    /// Audit a centralized backend with an insertion window this much too wide.
    #[arg(long)]
    mutant_slack: Option<usize>,
    /// Where to write a counterexample trace.
    #[arg(long)]
    counterexample: Option<PathBuf>,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => 2,
            Error::Timeout { .. } => 3,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::validation(e.to_string())
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenGraph(a) => gen_graph(a),
        Command::Sssp(a) => sssp(a),
        Command::Simulate(a) => simulate(a),
        Command::Bound(a) => bound(a),
        Command::Audit(a) => audit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("kprio: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn gen_graph(a: GenGraphArgs) -> Result<(), Failure> {
    let graph = generate_graph(a.n, a.p, a.seed, Execution::default())?;
    write_graph(&graph, output(&a.out)?)?;
    Ok(())
}

fn load_graph(path: &Path) -> Result<Graph, Failure> {
    let file = File::open(path).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    Ok(read_graph(BufReader::new(file))?)
}

#[derive(Serialize)]
struct SsspRow {
    backend: &'static str,
    n: usize,
    p: f64,
    threads: usize,
    k: usize,
    seed: u64,
    rep: usize,
    time_ms: f64,
    relaxations: u64,
    dead_tasks: u64,
    pushes: u64,
}

fn sssp(a: SsspArgs) -> Result<(), Failure> {
    let graph = load_graph(&a.graph)?;
    let n = graph.node_count();
    let density = if n > 1 { 2.0 * graph.edge_count() as f64 / (n as f64 * (n - 1) as f64) } else { 0.0 };
    let source = source_for_seed(n, a.seed);
    let oracle = dijkstra_oracle(&graph, source);
    let ks = if a.k_sweep { K_SWEEP.to_vec() } else { a.k.clone() };
    let options = RunOptions { timeout: Duration::from_secs(a.timeout_secs), freeze: None };

    let mut rows = Vec::new();
    for kind in a.backend.kinds() {
        for &threads in &a.threads {
            for &k in &ks {
                for rep in 0..a.reps {
                    let config = SchedulerConfig::new(threads).with_k(k).with_seed(split_seed(a.seed, rep as u64));
                    let result = run_sssp(&graph, source, kind, &config, options)?;
                    if let Some(node) = (0..n).find(|&v| result.distances[v] != oracle[v]) {
                        return Err(Error::OracleMismatch { node, got: result.distances[node], expected: oracle[node] }.into());
                    }
                    rows.push(SsspRow {
                        backend: kind.name(),
                        n,
                        p: density,
                        threads,
                        k,
                        seed: a.seed,
                        rep,
                        time_ms: result.wall_time.as_secs_f64() * 1e3,
                        relaxations: result.relaxations,
                        dead_tasks: result.dead_tasks,
                        pushes: result.stats.pushes,
                    });
                }
            }
        }
    }
    write_csv(output(&a.out)?, rows)?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    if a.graphs == 0 {
        return Err(Failure { code: 2, message: "--graphs must be at least 1".into() });
    }
    let seeds: Vec<u64> = (0..a.graphs as u64).map(|i| a.seed + i).collect();
    let runs = simulate_seeds(a.n, a.p, a.places, a.rho, &seeds, Execution::default())?;
    let rows = if runs.len() == 1 { runs[0].phases.clone() } else { mean_by_phase(&runs) };
    write_csv(output(&a.out)?, &rows)?;
    if a.check_bound {
        let phases: Vec<_> = runs.iter().flat_map(|r| &r.phases).collect();
        let covered = phases.iter().filter(|m| m.bound_useless.unwrap_or(f64::NAN) >= m.useless as f64).count();
        let fraction = covered as f64 / phases.len() as f64;
        if fraction < 0.99 {
            return Err(Failure::validation(format!(
                "bound covers observed useless work in {covered} of {} phases ({:.1}%)",
                phases.len(),
                100.0 * fraction
            )));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct BoundRow {
    form: &'static str,
    w_upper: f64,
    max_l: usize,
}

fn bound(a: BoundArgs) -> Result<(), Failure> {
    let input = match a.relaxed {
        Some(relaxed) => BoundInput { n: a.n, p: a.p, d: a.distances, relaxed },
        None => BoundInput::ideal(a.n, a.p, a.distances, a.places),
    };
    let full = useless_work_bound(&input, Execution::default())?;
    let mut rows = vec![BoundRow { form: "full", w_upper: full.w_upper, max_l: full.max_l }];
    if let Some(h) = a.h_star {
        let simple = simple_bound(&input, h)?;
        rows.push(BoundRow { form: "simple", w_upper: simple.w_upper, max_l: simple.max_l });
    }
    write_csv(output(&a.out)?, rows)?;
    Ok(())
}

fn audit(a: AuditArgs) -> Result<(), Failure> {
    if a.stress {
        return stress(&a);
    }
    let mut failures = Vec::new();
    let config = AuditConfig::new(a.ops, a.threads, a.k.clone(), a.seed);
    if let Some(slack) = a.mutant_slack {
        let discipline = Discipline::for_backend(BackendKind::Central, &a.k).expect("central is audited");
        let report = mutant_central_audit(slack, discipline, &config)?;
        println!("central+{slack}: {}", if report.passed() { "pass" } else { "FAIL" });
        if let Some(cx) = report.counterexample {
            failures.push(cx);
        }
    } else {
        for kind in a.backend.kinds() {
            let Some(discipline) = Discipline::for_backend(kind, &a.k) else {
                println!("{kind}: skipped (no relaxation guarantee)");
                continue;
            };
            let report = sequential_audit(kind, discipline, &config)?;
            println!(
                "{kind}: {} ({} pushes, {} pops, {} empty pops)",
                if report.passed() { "pass" } else { "FAIL" },
                report.pushes,
                report.pops,
                report.empty_pops
            );
            if let Some(cx) = report.counterexample {
                failures.push(cx);
            }
        }
    }
    match failures.into_iter().next() {
        None => Ok(()),
        Some(cx) => {
            if let Some(path) = &a.counterexample {
                cx.write_csv(BufWriter::new(File::create(path)?))?;
            }
            Err(Failure::validation(format!("relaxation violated: {} (trace of {} events)", cx.message, cx.trace.len())))
        }
    }
}

fn stress(a: &AuditArgs) -> Result<(), Failure> {
    let k = a.k.iter().copied().max().unwrap_or(1);
    let mut failed = false;
    for kind in a.backend.kinds() {
        let config = StressConfig::new(a.threads, a.tasks, k, a.seed);
        let report = concurrent_stress(kind, &config)?;
        println!(
            "{kind}: {} executed, {} duplicates, {} lost, {:.1} ms",
            report.executed,
            report.duplicates,
            report.losses,
            report.elapsed.as_secs_f64() * 1e3
        );
        failed |= !report.passed();
        if kind == BackendKind::WorkStealing {
            continue;
        }
        let frozen = frozen_worker_check(kind, &config, report.elapsed, 10);
        match &frozen.outcome {
            Ok(r) => println!(
                "{kind} with {} frozen after {} tasks: {:.1} ms of {:.1} ms budget",
                frozen.freeze.place,
                frozen.freeze.after_tasks,
                r.elapsed.as_secs_f64() * 1e3,
                frozen.budget.as_secs_f64() * 1e3
            ),
            Err(e) => println!("{kind} with {} frozen: {e}", frozen.freeze.place),
        }
        if !frozen.passed() {
            if frozen.outcome.is_err() {
                return Err(Failure { code: 3, message: format!("{kind}: no progress with a frozen worker") });
            }
            failed = true;
        }
    }
    if failed {
        return Err(Failure::validation("exactly-once or progress check failed"));
    }
    Ok(())
}
