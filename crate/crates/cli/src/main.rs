//! `rotsync`: synthesize, solve and evaluate rotation synchronization problems.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rotsync::bench::{bench_run, parse_f64_list, parse_seeds, BenchSpec, SolverId};
use rotsync::io::{read_graph, read_rotations, write_graph, write_rotations};
use rotsync::metrics::error_report;
use rotsync::synth::{generate, CorruptionModel, ModelParams};

#[derive(Parser)]
#[command(name = "rotsync", version, about = "Robust rotation synchronization on SO(3)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic problem: a graph file and a ground-truth rotations file.
    Synth(SynthArgs),
    /// Estimate absolute rotations from a graph file.
    Solve(SolveArgs),
    /// Compare estimated rotations to ground truth after optimal alignment.
    Eval(EvalArgs),
    /// Sweep solvers over synthetic problems and write a CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "uniform", value_parser = parse_model)]
    model: CorruptionModel,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    q: f64,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "graph.txt")]
    graph: PathBuf,
    #[arg(long, default_value = "truth.txt")]
    truth: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, default_value = "graph.txt")]
    graph: PathBuf,
    #[arg(long, default_value = "mpls", value_parser = parse_solver)]
    solver: SolverId,
    /// Seed for cycle sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "estimate.txt")]
    out: PathBuf,
    /// Ground-truth rotations; adds aligned errors to the report.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, default_value = "estimate.txt")]
    estimate: PathBuf,
    #[arg(long, default_value = "truth.txt")]
    truth: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "uniform", value_parser = parse_model)]
    model: CorruptionModel,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Comma list or inclusive range `a:step:b`.
    #[arg(long, value_parser = parse_list)]
    q: FloatList,
    #[arg(long, default_value = "0", value_parser = parse_list)]
    sigma: FloatList,
    /// A count `N` (seeds 0..N), a comma list, or a range `a:step:b`.
    #[arg(long, default_value = "10", value_parser = parse_seed_list)]
    seeds: SeedList,
    #[arg(long, default_value = "mpls,irls-gm,irls-l12,cemp-mst", value_delimiter = ',', value_parser = parse_solver)]
    solvers: Vec<SolverId>,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock runtimes (the CSV is then no longer reproducible).
    #[arg(long)]
    timing: bool,
}

// Aliases keep clap from treating these as repeated arguments.
type FloatList = Vec<f64>;
type SeedList = Vec<u64>;

fn parse_model(s: &str) -> Result<CorruptionModel, String> {
    s.parse().map_err(|e: rotsync::Error| e.to_string())
}

fn parse_solver(s: &str) -> Result<SolverId, String> {
    s.parse().map_err(|e: rotsync::Error| e.to_string())
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    parse_f64_list(s).map_err(|e| e.to_string())
}

fn parse_seed_list(s: &str) -> Result<Vec<u64>, String> {
    parse_seeds(s).map_err(|e| e.to_string())
}

type AnyResult<T = ()> = Result<T, Box<dyn std::error::Error>>;

fn synth(args: SynthArgs) -> AnyResult {
    let params = ModelParams {
        n: args.n,
        p: args.p,
        q: args.q,
        sigma: args.sigma,
    };
    let inst = generate(args.model, params, args.seed)?;
    write_graph(&args.graph, &inst.graph)?;
    write_rotations(&args.truth, &inst.ground_truth)?;
    println!(
        "nodes {} edges {} bad_fraction {:.4} graph_resamples {}",
        inst.graph.node_count(),
        inst.graph.edge_count(),
        inst.bad_fraction(),
        inst.graph_resamples
    );
    Ok(())
}

fn solve(args: SolveArgs) -> AnyResult {
    let g = read_graph(&args.graph).map_err(|e| format!("{}: {e}", args.graph.display()))?;
    let truth = match &args.truth {
        Some(path) => Some(read_rotations(path).map_err(|e| format!("{}: {e}", path.display()))?),
        None => None,
    };
    let start = Instant::now();
    let res = args.solver.run(&g, args.seed)?;
    let runtime = start.elapsed().as_secs_f64();
    write_rotations(&args.out, &res.rotations)?;

    let mut out = io::stdout().lock();
    writeln!(out, "solver {}", args.solver)?;
    writeln!(out, "iterations {}+{}", res.init_iterations, res.main_iterations)?;
    writeln!(out, "converged {}", res.converged)?;
    writeln!(out, "runtime_s {runtime:.3}")?;
    if let Some(truth) = truth {
        let report = error_report(&res.rotations, &truth)?;
        writeln!(out, "mean_err_deg {}", report.mean_deg)?;
        writeln!(out, "median_err_deg {}", report.median_deg)?;
    }
    Ok(())
}

fn eval(args: EvalArgs) -> AnyResult {
    let est = read_rotations(&args.estimate).map_err(|e| format!("{}: {e}", args.estimate.display()))?;
    let truth = read_rotations(&args.truth).map_err(|e| format!("{}: {e}", args.truth.display()))?;
    let report = error_report(&est, &truth)?;
    println!("mean_err_deg {}", report.mean_deg);
    println!("median_err_deg {}", report.median_deg);
    Ok(())
}

fn bench(args: BenchArgs) -> AnyResult {
    let spec = BenchSpec {
        model: args.model,
        n: args.n,
        p: args.p,
        qs: args.q,
        sigmas: args.sigma,
        seeds: args.seeds,
        solvers: args.solvers,
        record_runtime: args.timing,
    };
    let output = bench_run(&spec)?;
    match &args.out {
        Some(path) => output.write_csv(BufWriter::new(File::create(path)?))?,
        None => output.write_csv(io::stdout().lock())?,
    }
    if !output.failures.is_empty() {
        for f in &output.failures {
            eprintln!("failed: {f}");
        }
        return Err(format!("{} benchmark cells failed", output.failures.len()).into());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Solve(a) => solve(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
