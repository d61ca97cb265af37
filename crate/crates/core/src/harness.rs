//! Monte Carlo comparison of the two estimators.
//!
//! Each `(N, replication)` pair gets its own simulated dataset and draw set,
//! derived from the root seed, and every requested estimator runs on the
//! same pair. Bias, RMSE and mean time are aggregated over the runs whose
//! optimiser reported convergence.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{estimate, EstimationResult, Method, OptimizerConfig};
use crate::likelihood::{DrawSet, Smoothing};
use crate::model::{simulate_dataset_with, Parameters};
use crate::par::{self, Execution};
use crate::reservation::{build_lookup, LookupTable};
use crate::stats::RngStream;

const DATA_STREAM: u64 = 0;
const DRAW_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TableConfig {
    pub c_min: f64,
    pub c_max: f64,
    pub fineness: f64,
}

impl Default for TableConfig {
    fn default() -> Self {
        // Must reach c = e^0 = 1 because estimation starts at log c = 0.
        Self {
            c_min: 0.001,
            c_max: 10.0,
            fineness: 0.001,
        }
    }
}

impl TableConfig {
    pub fn build(&self) -> Result<LookupTable> {
        build_lookup(self.c_min, self.c_max, self.fineness)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarloConfig {
    pub replications: usize,
    pub sample_sizes: Vec<usize>,
    pub true_params: Parameters,
    pub draws: usize,
    /// Kernel scale per sample size.
    pub rho_by_n: BTreeMap<usize, f64>,
    pub methods: Vec<Method>,
    pub root_seed: u64,
    /// Concurrent replications; `None` uses every available core.
    pub workers: Option<usize>,
    pub optimizer: OptimizerConfig,
    pub table: TableConfig,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            replications: 50,
            sample_sizes: vec![500, 1000],
            true_params: Parameters::reference(),
            draws: 100,
            rho_by_n: BTreeMap::from([(500, 10.0), (1000, 20.0)]),
            methods: vec![Method::Mpec, Method::Benchmark],
            root_seed: 20_240_601,
            workers: None,
            optimizer: OptimizerConfig::default(),
            table: TableConfig::default(),
        }
    }
}

impl MonteCarloConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidInput("replications must be at least 1".into()));
        }
        if self.draws == 0 {
            return Err(Error::InvalidInput("draw count must be at least 1".into()));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(Error::InvalidInput("sample sizes must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidInput("no estimator requested".into()));
        }
        for n in &self.sample_sizes {
            match self.rho_by_n.get(n) {
                Some(r) if *r > 0.0 => {}
                _ => return Err(Error::InvalidInput(format!("no positive kernel scale for N = {n}"))),
            }
        }
        self.optimizer.validate()
    }

    pub fn data_stream(&self, replication: usize, n: usize) -> RngStream {
        RngStream::new(self.root_seed)
            .substream(replication as u64)
            .substream(n as u64)
            .substream(DATA_STREAM)
    }

    pub fn draw_stream(&self, replication: usize, n: usize) -> RngStream {
        RngStream::new(self.root_seed)
            .substream(replication as u64)
            .substream(n as u64)
            .substream(DRAW_STREAM)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: usize,
    pub n: usize,
    pub results: Vec<EstimationResult>,
}

/// Simulate replication `r` at sample size `n` and run every configured
/// estimator on the same dataset and draws.
pub fn run_replication(r: usize, n: usize, cfg: &MonteCarloConfig, table: &LookupTable) -> Result<ReplicationResult> {
    if r >= cfg.replications {
        return Err(Error::InvalidInput(format!(
            "replication {r} out of range (have {})",
            cfg.replications
        )));
    }
    let rho = *cfg
        .rho_by_n
        .get(&n)
        .ok_or_else(|| Error::InvalidInput(format!("no kernel scale for N = {n}")))?;
    let exec = cfg.optimizer.execution;
    let dataset = simulate_dataset_with(&cfg.true_params, n, &cfg.data_stream(r, n), exec)?;
    let draws = DrawSet::generate_with(&cfg.draw_stream(r, n), n, dataset.num_products, cfg.draws, exec);
    let results = cfg
        .methods
        .iter()
        .map(|&method| estimate(method, &dataset, &draws, table, &cfg.optimizer, Smoothing::kernel(rho)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicationResult {
        replication: r,
        n,
        results,
    })
}

/// Summary of one `(N, method)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub method: Method,
    /// Mean of `θ̂ − θ₀`, in `Parameters::to_vec` order.
    pub bias: Vec<f64>,
    /// Root mean squared deviation, same order.
    pub rmse: Vec<f64>,
    pub mean_time: f64,
    pub mean_evals: f64,
    pub converged_count: usize,
    pub replications: usize,
}

/// Sum independent of input order: terms are sorted first.
fn order_free_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    par::ordered_sum(&values) / n
}

/// Bias, RMSE and mean time over the converged entries of `results`.
pub fn aggregate(results: &[EstimationResult], truth: &Parameters) -> Result<CellSummary> {
    let method = results
        .first()
        .map(|r| r.method)
        .ok_or_else(|| Error::InvalidInput("no results to aggregate".into()))?;
    let ok: Vec<&EstimationResult> = results.iter().filter(|r| r.converged).collect();
    if ok.is_empty() {
        return Err(Error::AllDiverged {
            n: 0,
            method: method.to_string(),
        });
    }
    let truth = truth.to_vec();
    let mut bias = Vec::with_capacity(truth.len());
    let mut rmse = Vec::with_capacity(truth.len());
    for (p, t) in truth.iter().enumerate() {
        let dev: Vec<f64> = ok.iter().map(|r| r.theta_hat.to_vec()[p] - t).collect();
        bias.push(order_free_mean(dev.clone()));
        rmse.push(order_free_mean(dev.iter().map(|d| d * d).collect()).sqrt());
    }
    Ok(CellSummary {
        n: 0,
        method,
        bias,
        rmse,
        mean_time: order_free_mean(ok.iter().map(|r| r.wall_time).collect()),
        mean_evals: order_free_mean(ok.iter().map(|r| r.evals as f64).collect()),
        converged_count: ok.len(),
        replications: results.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub parameter_names: Vec<String>,
    pub cells: Vec<CellSummary>,
    /// `(N, method)` cells in which no run converged.
    pub diverged: Vec<(usize, Method)>,
}

impl MonteCarloReport {
    pub fn cell(&self, n: usize, method: Method) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.n == n && c.method == method)
    }

    fn sample_sizes(&self) -> Vec<usize> {
        let mut ns: Vec<usize> = self.cells.iter().map(|c| c.n).chain(self.diverged.iter().map(|d| d.0)).collect();
        ns.sort_unstable();
        ns.dedup();
        ns
    }

    /// One Markdown panel per sample size; methods as column pairs.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# MPEC vs look-up table (benchmark)\n");
        for n in self.sample_sizes() {
            let cells: Vec<&CellSummary> = Method::ALL.iter().filter_map(|&m| self.cell(n, m)).collect();
            let _ = write!(out, "\n## N = {n}\n\n|");
            for c in &cells {
                let _ = write!(out, " | {} |", method_label(c.method));
            }
            out.push_str(" |\n|---|");
            for _ in &cells {
                out.push_str("---:|---:|");
            }
            out.push_str("\n|");
            for _ in &cells {
                out.push_str(" | Bias | RMSE");
            }
            out.push_str(" |\n");
            for (p, name) in self.parameter_names.iter().enumerate() {
                let _ = write!(out, "| {}", display_name(name));
                for c in &cells {
                    let _ = write!(out, " | {:.3} | {:.3}", c.bias[p], c.rmse[p]);
                }
                out.push_str(" |\n");
            }
            out.push_str("| Time");
            for c in &cells {
                let _ = write!(out, " |  | {:.3}", c.mean_time);
            }
            out.push_str(" |\n| Converged");
            for c in &cells {
                let _ = write!(out, " |  | {}/{}", c.converged_count, c.replications);
            }
            out.push_str(" |\n");
            for (dn, m) in self.diverged.iter().filter(|d| d.0 == n) {
                let _ = writeln!(out, "\nNo converged runs for {} at N = {dn}.", method_label(*m));
            }
        }
        out
    }

    /// `n,method,parameter,bias,rmse,converged,replications`, one row per
    /// parameter. Timing is left out so the file depends only on the
    /// configuration.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,method,parameter,bias,rmse,converged,replications\n");
        for c in &self.cells {
            for (p, name) in self.parameter_names.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{:.16e},{:.16e},{},{}",
                    c.n, c.method, name, c.bias[p], c.rmse[p], c.converged_count, c.replications
                );
            }
        }
        out
    }
}

fn method_label(m: Method) -> &'static str {
    match m {
        Method::Mpec => "MPEC",
        Method::Benchmark => "Look-up table",
    }
}

fn display_name(name: &str) -> String {
    const SUBSCRIPTS: [char; 10] = ['₀', '₁', '₂', '₃', '₄', '₅', '₆', '₇', '₈', '₉'];
    match name.strip_prefix("beta") {
        Some(idx) => {
            let sub: String = idx
                .chars()
                .map(|d| d.to_digit(10).map_or(d, |k| SUBSCRIPTS[k as usize]))
                .collect();
            format!("β{sub}")
        }
        None if name == "log_c" => "log c".to_string(),
        None => name.to_string(),
    }
}

/// Parse a report CSV back into `(n, method, parameter) -> (bias, rmse)`.
pub fn read_report_csv(text: &str) -> Result<BTreeMap<(usize, Method, String), (f64, f64)>> {
    let mut out = BTreeMap::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(Error::InvalidInput(format!("report line {}: expected 7 columns", k + 1)));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::InvalidInput(e.to_string()));
        let n = f[0].parse::<usize>().map_err(|e| Error::InvalidInput(e.to_string()))?;
        out.insert((n, f[1].parse()?, f[2].to_string()), (num(f[3])?, num(f[4])?));
    }
    Ok(out)
}

/// Aggregate replication results into the report, in configuration order.
pub fn build_report(runs: &[ReplicationResult], cfg: &MonteCarloConfig) -> MonteCarloReport {
    let mut cells = Vec::new();
    let mut diverged = Vec::new();
    for &n in &cfg.sample_sizes {
        for &method in &cfg.methods {
            let mut results: Vec<(usize, &EstimationResult)> = runs
                .iter()
                .filter(|r| r.n == n)
                .flat_map(|r| r.results.iter().map(move |e| (r.replication, e)))
                .filter(|(_, e)| e.method == method)
                .collect();
            results.sort_by_key(|(r, _)| *r);
            let results: Vec<EstimationResult> = results.into_iter().map(|(_, e)| e.clone()).collect();
            match aggregate(&results, &cfg.true_params) {
                Ok(mut cell) => {
                    cell.n = n;
                    cells.push(cell);
                }
                Err(_) => diverged.push((n, method)),
            }
        }
    }
    MonteCarloReport {
        parameter_names: Parameters::names(cfg.true_params.num_products()),
        cells,
        diverged,
    }
}

#[derive(Clone, Debug)]
pub struct MonteCarloOutcome {
    pub runs: Vec<ReplicationResult>,
    pub report: MonteCarloReport,
}

/// Run every `(N, replication)` pair, `workers` at a time.
pub fn run_monte_carlo(cfg: &MonteCarloConfig) -> Result<MonteCarloOutcome> {
    cfg.validate()?;
    let table = cfg.table.build()?;
    let jobs: Vec<(usize, usize)> = cfg
        .sample_sizes
        .iter()
        .flat_map(|&n| (0..cfg.replications).map(move |r| (n, r)))
        .collect();
    let workers = cfg
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |w| w.get()));
    let exec = if workers > 1 {
        Execution::Parallel
    } else {
        Execution::Sequential
    };
    let runs = par::with_workers(workers, || {
        par::map_indexed(exec, &jobs, |_, &(n, r)| run_replication(r, n, cfg, &table))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let report = build_report(&runs, cfg);
    Ok(MonteCarloOutcome { runs, report })
}

/// Writes `report.md`, `report.csv` and `runs/N{n}/rep{r}/{method}.json`.
pub fn write_outputs(outcome: &MonteCarloOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.md"), outcome.report.to_markdown())?;
    fs::write(dir.join("report.csv"), outcome.report.to_csv())?;
    for run in &outcome.runs {
        let rep_dir = dir.join("runs").join(format!("N{}", run.n)).join(format!("rep{}", run.replication));
        fs::create_dir_all(&rep_dir)?;
        for result in &run.results {
            let json = serde_json::to_string_pretty(result)?;
            fs::write(rep_dir.join(format!("{}.json", result.method)), json + "\n")?;
        }
    }
    Ok(())
}
