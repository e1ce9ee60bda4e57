//! Benchmark sweeps over synthetic problems, written as CSV.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::cemp::CempConfig;
use crate::graph::ViewGraph;
use crate::irls::{irls_solve, IrlsConfig, Loss};
use crate::metrics::{error_report, ErrorReport};
use crate::mpls::{cemp_mst_solve, mpls_solve, prepare_cycles, MplsConfig, SolveResult, CYCLES_PER_EDGE};
use crate::synth::{generate, CorruptionModel, ModelParams};
use crate::{Error, Result};

pub const CSV_HEADER: &str =
    "solver,model,n,p,q,sigma,seed,mean_err_deg,median_err_deg,init_iters,main_iters,runtime_s";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SolverId {
    Mpls,
    IrlsGm,
    IrlsL12,
    CempMst,
}

impl SolverId {
    pub const ALL: [SolverId; 4] = [SolverId::Mpls, SolverId::IrlsGm, SolverId::IrlsL12, SolverId::CempMst];

    /// Runs the solver with default settings. `seed` drives cycle sampling.
    pub fn run(self, g: &ViewGraph, seed: u64) -> Result<SolveResult> {
        match self {
            SolverId::Mpls => mpls_solve(g, &prepare_cycles(g, CYCLES_PER_EDGE, seed), &MplsConfig::default()),
            SolverId::CempMst => cemp_mst_solve(g, &prepare_cycles(g, CYCLES_PER_EDGE, seed), &CempConfig::default()),
            SolverId::IrlsGm => irls_solve(g, &IrlsConfig::new(Loss::GemanMcClure)),
            SolverId::IrlsL12 => irls_solve(g, &IrlsConfig::new(Loss::L12)),
        }
    }
}

impl fmt::Display for SolverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverId::Mpls => "mpls",
            SolverId::IrlsGm => "irls-gm",
            SolverId::IrlsL12 => "irls-l12",
            SolverId::CempMst => "cemp-mst",
        })
    }
}

impl FromStr for SolverId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.to_string() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown solver `{s}`")))
    }
}

/// Parses `a,b,c` or an inclusive range `a:step:b`.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    let bad = |what: &str| Error::InvalidInput(format!("bad {what} in `{s}`"));
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| bad("number"))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [single] => single.split(',').map(num).collect(),
        [a, step, b] => {
            let (a, step, b) = (num(a)?, num(step)?, num(b)?);
            if step <= 0.0 || b < a {
                return Err(bad("range"));
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            // Rounding keeps 0.1·3 printing as 0.3.
            Ok((0..count)
                .map(|k| ((a + k as f64 * step) * 1e12).round() / 1e12)
                .collect())
        }
        _ => Err(bad("range")),
    }
}

/// A bare count `N` means seeds `0..N`; lists and `a:step:b` ranges are explicit.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidInput(format!("bad seed list `{s}`"));
    let int = |t: &str| t.trim().parse::<u64>().map_err(|_| bad());
    if s.contains(',') {
        return s.split(',').map(int).collect();
    }
    match s.split(':').collect::<Vec<_>>().as_slice() {
        [count] => Ok((0..int(count)?).collect()),
        [a, step, b] => {
            let (a, step, b) = (int(a)?, int(step)?, int(b)?);
            if step == 0 || b < a {
                return Err(bad());
            }
            Ok((a..=b).step_by(step as usize).collect())
        }
        _ => Err(bad()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub model: CorruptionModel,
    pub n: usize,
    pub p: f64,
    pub qs: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub solvers: Vec<SolverId>,
    /// Wall-clock runtimes make the CSV nondeterministic, so they are opt-in.
    pub record_runtime: bool,
}

impl BenchSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidInput(msg.to_string()));
        if self.qs.is_empty() || self.sigmas.is_empty() || self.seeds.is_empty() || self.solvers.is_empty() {
            return fail("q, sigma, seed and solver lists must be nonempty");
        }
        if self.n < 2 || !(0.0..=1.0).contains(&self.p) {
            return fail("need n >= 2 and p in [0, 1]");
        }
        if self.qs.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return fail("q values must lie in [0, 1]");
        }
        if self.sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return fail("sigma values must be finite and nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub solver: SolverId,
    pub q: f64,
    pub sigma: f64,
    /// `None` marks the per-group average.
    pub seed: Option<u64>,
    pub mean_err_deg: f64,
    pub median_err_deg: f64,
    pub init_iters: f64,
    pub main_iters: f64,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutput {
    pub spec: BenchSpec,
    /// Raw rows followed by their average, grouped by solver, then q, then σ.
    pub rows: Vec<BenchRow>,
    pub failures: Vec<String>,
}

impl BenchOutput {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        let s = &self.spec;
        for r in &self.rows {
            let seed = r.seed.map_or_else(|| "avg".to_string(), |v| v.to_string());
            let iters = |v: f64| {
                if r.seed.is_some() && v.is_finite() {
                    format!("{}", v as u64)
                } else {
                    format!("{v}")
                }
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.solver,
                s.model,
                s.n,
                s.p,
                r.q,
                r.sigma,
                seed,
                r.mean_err_deg,
                r.median_err_deg,
                iters(r.init_iters),
                iters(r.main_iters),
                r.runtime_s
            )?;
        }
        out.flush()?;
        Ok(())
    }

    /// Average rows only.
    pub fn averages(&self) -> impl Iterator<Item = &BenchRow> {
        self.rows.iter().filter(|r| r.seed.is_none())
    }
}

type CellResult = std::result::Result<ErrorReport, String>;

fn run_cell(spec: &BenchSpec, q: f64, sigma: f64, seed: u64) -> Vec<CellResult> {
    let params = ModelParams {
        n: spec.n,
        p: spec.p,
        q,
        sigma,
    };
    let inst = match generate(spec.model, params, seed) {
        Ok(inst) => inst,
        Err(e) => return spec.solvers.iter().map(|_| Err(e.to_string())).collect(),
    };
    let solve = |solver: SolverId| -> Result<ErrorReport> {
        let start = Instant::now();
        let res = solver.run(&inst.graph, seed)?;
        let elapsed = start.elapsed().as_secs_f64();
        let mut report = error_report(&res.rotations, &inst.ground_truth)?;
        report.runtime_s = if spec.record_runtime { elapsed } else { 0.0 };
        report.init_iterations = res.init_iterations;
        report.main_iterations = res.main_iterations;
        Ok(report)
    };
    spec.solvers
        .iter()
        .map(|&s| solve(s).map_err(|e| e.to_string()))
        .collect()
}

/// Runs every (q, σ, seed) instance in parallel; each instance is shared by all solvers.
pub fn bench_run(spec: &BenchSpec) -> Result<BenchOutput> {
    spec.validate()?;
    let cells: Vec<(usize, usize, usize)> = (0..spec.qs.len())
        .flat_map(|a| (0..spec.sigmas.len()).flat_map(move |b| (0..spec.seeds.len()).map(move |c| (a, b, c))))
        .collect();
    let results: Vec<Vec<CellResult>> = cells
        .par_iter()
        .map(|&(a, b, c)| run_cell(spec, spec.qs[a], spec.sigmas[b], spec.seeds[c]))
        .collect();
    let at = |a: usize, b: usize, c: usize| &results[(a * spec.sigmas.len() + b) * spec.seeds.len() + c];

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (k, &solver) in spec.solvers.iter().enumerate() {
        for (a, &q) in spec.qs.iter().enumerate() {
            for (b, &sigma) in spec.sigmas.iter().enumerate() {
                let start = rows.len();
                for (c, &seed) in spec.seeds.iter().enumerate() {
                    let row = match &at(a, b, c)[k] {
                        Ok(r) => BenchRow {
                            solver,
                            q,
                            sigma,
                            seed: Some(seed),
                            mean_err_deg: r.mean_deg,
                            median_err_deg: r.median_deg,
                            init_iters: r.init_iterations as f64,
                            main_iters: r.main_iterations as f64,
                            runtime_s: r.runtime_s,
                        },
                        Err(e) => {
                            failures.push(format!("{solver} q={q} sigma={sigma} seed={seed}: {e}"));
                            BenchRow {
                                solver,
                                q,
                                sigma,
                                seed: Some(seed),
                                mean_err_deg: f64::NAN,
                                median_err_deg: f64::NAN,
                                init_iters: f64::NAN,
                                main_iters: f64::NAN,
                                runtime_s: f64::NAN,
                            }
                        }
                    };
                    rows.push(row);
                }
                let group = &rows[start..];
                let mean = |f: fn(&BenchRow) -> f64| group.iter().map(f).sum::<f64>() / group.len() as f64;
                let avg = BenchRow {
                    solver,
                    q,
                    sigma,
                    seed: None,
                    mean_err_deg: mean(|r| r.mean_err_deg),
                    median_err_deg: mean(|r| r.median_err_deg),
                    init_iters: mean(|r| r.init_iters),
                    main_iters: mean(|r| r.main_iters),
                    runtime_s: mean(|r| r.runtime_s),
                };
                rows.push(avg);
            }
        }
    }
    Ok(BenchOutput {
        spec: spec.clone(),
        rows,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> BenchSpec {
        BenchSpec {
            model: CorruptionModel::Uniform,
            n: 20,
            p: 0.6,
            qs: vec![0.2],
            sigmas: vec![0.0],
            seeds: vec![3],
            solvers: vec![SolverId::Mpls],
            record_runtime: false,
        }
    }

    fn csv(out: &BenchOutput) -> String {
        let mut buf = Vec::new();
        out.write_csv(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn one_cell_gives_raw_and_avg_rows() {
        let out = bench_run(&small_spec()).unwrap();
        let text = csv(&out);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("mpls,uniform,20,0.6,0.2,0,3,"));
        assert!(lines[2].starts_with("mpls,uniform,20,0.6,0.2,0,avg,"));
        assert!(out.failures.is_empty());
        assert_eq!(lines[1].split(',').count(), 12);
    }

    #[test]
    fn canonical_order_and_averages() {
        let spec = BenchSpec {
            qs: vec![0.1, 0.3],
            sigmas: vec![0.0, 0.1],
            seeds: vec![0, 1, 2],
            solvers: vec![SolverId::CempMst, SolverId::Mpls],
            ..small_spec()
        };
        let out = bench_run(&spec).unwrap();
        assert_eq!(out.rows.len(), 2 * 2 * 2 * 4);
        let keys: Vec<_> = out
            .rows
            .iter()
            .map(|r| (r.solver, r.q.to_bits(), r.sigma.to_bits()))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort_by_key(|k| (spec.solvers.iter().position(|s| *s == k.0), k.1, k.2));
        assert_eq!(keys, sorted);
        for chunk in out.rows.chunks(4) {
            let avg = chunk[0..3].iter().map(|r| r.mean_err_deg).sum::<f64>() / 3.0;
            assert_eq!(chunk[3].seed, None);
            assert!((chunk[3].mean_err_deg - avg).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_is_deterministic() {
        let spec = BenchSpec {
            seeds: vec![0, 1],
            solvers: SolverId::ALL.to_vec(),
            ..small_spec()
        };
        assert_eq!(csv(&bench_run(&spec).unwrap()), csv(&bench_run(&spec).unwrap()));
    }

    #[test]
    fn failures_become_nan_rows() {
        // p = 0 never yields a connected graph.
        let spec = BenchSpec {
            n: 5,
            p: 0.0,
            ..small_spec()
        };
        let out = bench_run(&spec).unwrap();
        assert_eq!(out.failures.len(), 1);
        assert!(out.rows.iter().all(|r| r.mean_err_deg.is_nan()));
        assert!(csv(&out).lines().nth(1).unwrap().contains(",NaN,NaN,NaN,NaN,NaN"));
    }

    #[test]
    fn list_parsing() {
        assert_eq!(parse_f64_list("0,0.1,0.5,1").unwrap(), vec![0.0, 0.1, 0.5, 1.0]);
        let grid = parse_f64_list("0.0:0.1:0.8").unwrap();
        assert_eq!(grid.len(), 9);
        assert_eq!(grid[3], 0.3);
        assert_eq!(grid[8], 0.8);
        assert_eq!(parse_f64_list("0.48").unwrap(), vec![0.48]);
        for bad in ["", "a", "0:0:1", "1:0.1:0", "0:1", "nan"] {
            assert!(parse_f64_list(bad).is_err(), "{bad}");
        }
        assert_eq!(parse_seeds("3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("5,7").unwrap(), vec![5, 7]);
        assert_eq!(parse_seeds("10:5:20").unwrap(), vec![10, 15, 20]);
        assert!(parse_seeds("-1").is_err());
    }

    #[test]
    fn solver_names_round_trip() {
        for id in SolverId::ALL {
            assert_eq!(id.to_string().parse::<SolverId>().unwrap(), id);
        }
        assert!("irls".parse::<SolverId>().is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(bench_run(&BenchSpec {
            qs: vec![],
            ..small_spec()
        })
        .is_err());
        assert!(bench_run(&BenchSpec {
            qs: vec![1.5],
            ..small_spec()
        })
        .is_err());
        assert!(bench_run(&BenchSpec {
            sigmas: vec![-0.1],
            ..small_spec()
        })
        .is_err());
    }
}
