use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use seqsearch::estimation::{estimate, Method, OptimizerConfig};
use seqsearch::harness::{run_monte_carlo, write_outputs, MonteCarloConfig, TableConfig};
use seqsearch::likelihood::consumer_likelihoods;
use seqsearch::model::simulate_dataset;
use seqsearch::reservation::{
    build_lookup, cost_of_m, lookup_m, solve_m_contraction, solve_m_newton, SolveMethod,
};
use seqsearch::{Dataset, DrawSet, Parameters, RngStream, Smoothing};

const WORKERS_ENV: &str = "SEQSEARCH_WORKERS";

#[derive(Parser)]
#[command(name = "seqsearch", version, about = "Sequential search simulation and estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the reservation-margin equation for one search cost.
    SolveM {
        #[arg(long, allow_hyphen_values = true)]
        c: f64,
        #[arg(long, default_value = "newton")]
        method: SolveMethod,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        /// Grid step of the look-up table (table method only).
        #[arg(long, default_value_t = 0.001)]
        fineness: f64,
        #[arg(long, default_value_t = TableConfig::default().c_min)]
        c_min: f64,
        #[arg(long, default_value_t = TableConfig::default().c_max)]
        c_max: f64,
    },
    /// Simulate a dataset and write it as CSV.
    Simulate {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1.0,0.7,0.5,0.3")]
        beta: Vec<f64>,
        #[arg(long, allow_hyphen_values = true, default_value_t = -3.0)]
        logc: f64,
    },
    /// Estimate parameters from a dataset CSV.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(long, default_value_t = 10.0)]
        rho: f64,
        #[arg(long, default_value_t = 100)]
        d: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Optimizer settings as JSON (missing fields take defaults).
        #[arg(long)]
        optimizer: Option<PathBuf>,
        /// Write per-consumer likelihoods at the estimate to this CSV.
        #[arg(long)]
        dump_likelihood: Option<PathBuf>,
    },
    /// Run the Monte Carlo comparison and write report files.
    Montecarlo {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Effective configuration of a Monte Carlo run, echoed next to its output.
#[derive(Serialize, Deserialize)]
struct RunConfig {
    #[serde(flatten)]
    montecarlo: MonteCarloConfig,
    out: PathBuf,
}

enum Failure {
    Usage(anyhow::Error),
    NotConverged,
    Experiment(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

impl From<seqsearch::Error> for Failure {
    fn from(e: seqsearch::Error) -> Self {
        Failure::Usage(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::NotConverged) => {
            eprintln!("estimator did not converge; result written anyway");
            ExitCode::from(3)
        }
        Err(Failure::Experiment(msg)) => {
            eprintln!("experiment failed: {msg}");
            ExitCode::from(4)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::SolveM {
            c,
            method,
            tol,
            fineness,
            c_min,
            c_max,
        } => {
            let m = match method {
                SolveMethod::Newton => solve_m_newton(c, tol)?,
                SolveMethod::Contraction => solve_m_contraction(c, tol)?,
                SolveMethod::Table => {
                    if c <= 0.0 {
                        return Err(seqsearch::Error::NonPositiveCost(c).into());
                    }
                    lookup_m(&build_lookup(c_min, c_max, fineness)?, c)?
                }
            };
            println!("m = {m:.14e}");
            println!("residual = {:.14e}", (cost_of_m(m) - c).abs());
            Ok(())
        }
        Command::Simulate {
            n,
            seed,
            out,
            beta,
            logc,
        } => {
            if n == 0 {
                return Err(anyhow!("--n must be at least 1").into());
            }
            if beta.is_empty() {
                return Err(anyhow!("--beta needs at least one value").into());
            }
            let params = Parameters::new(beta, logc);
            let data = simulate_dataset(&params, n, &RngStream::new(seed).substream(0))?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut w = BufWriter::new(file);
            data.write_csv(&mut w)?;
            w.flush().context("writing dataset")?;
            Ok(())
        }
        Command::Estimate {
            data,
            method,
            rho,
            d,
            seed,
            out,
            optimizer,
            dump_likelihood,
        } => {
            if d == 0 {
                return Err(anyhow!("--d must be at least 1").into());
            }
            let file = File::open(&data).with_context(|| format!("opening {}", data.display()))?;
            let dataset = Dataset::read_csv(BufReader::new(file))?;
            let config: OptimizerConfig = match optimizer {
                Some(path) => serde_json::from_str(
                    &fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?,
                )
                .context("parsing optimizer config")?,
                None => OptimizerConfig::default(),
            };
            let draws = DrawSet::generate(&RngStream::new(seed).substream(1), dataset.len(), dataset.num_products, d);
            let table = TableConfig::default().build()?;
            let smoothing = Smoothing::kernel(rho);
            let result = estimate(method, &dataset, &draws, &table, &config, smoothing)?;
            fs::write(&out, serde_json::to_string_pretty(&result).context("serializing result")? + "\n")
                .with_context(|| format!("writing {}", out.display()))?;
            if let Some(path) = dump_likelihood {
                let ls = consumer_likelihoods(&dataset, &result.theta_hat, &draws, result.m_hat, smoothing, config.execution)?;
                let mut text = String::from("consumer_id,likelihood\n");
                for (i, l) in ls.iter().enumerate() {
                    text.push_str(&format!("{i},{l:.16e}\n"));
                }
                fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            }
            if result.converged {
                Ok(())
            } else {
                Err(Failure::NotConverged)
            }
        }
        Command::Montecarlo {
            config,
            reps,
            workers,
            seed,
            sizes,
            methods,
            draws,
            out,
        } => {
            let mut mc: MonteCarloConfig = match &config {
                Some(path) => serde_json::from_str(
                    &fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
                )
                .context("parsing Monte Carlo config")?,
                None => MonteCarloConfig::default(),
            };
            if let Some(r) = reps {
                mc.replications = r;
            }
            if let Some(s) = seed {
                mc.root_seed = s;
            }
            if let Some(s) = sizes {
                mc.sample_sizes = s;
            }
            if let Some(m) = methods {
                mc.methods = m;
            }
            if let Some(d) = draws {
                mc.draws = d;
            }
            mc.workers = workers.or(mc.workers).or_else(workers_from_env);
            mc.validate()?;

            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let resolved = RunConfig {
                montecarlo: mc.clone(),
                out: out.clone(),
            };
            fs::write(
                out.join("config.resolved.json"),
                serde_json::to_string_pretty(&resolved).context("serializing config")? + "\n",
            )
            .context("writing config.resolved.json")?;

            let outcome = run_monte_carlo(&mc).map_err(|e| Failure::Experiment(e.to_string()))?;
            write_outputs(&outcome, &out).map_err(|e| Failure::Experiment(e.to_string()))?;
            print!("{}", outcome.report.to_markdown());
            if !outcome.report.diverged.is_empty() {
                let cells: Vec<String> = outcome
                    .report
                    .diverged
                    .iter()
                    .map(|(n, m)| format!("{m} at N = {n}"))
                    .collect();
                return Err(Failure::Experiment(format!("no converged runs for {}", cells.join(", "))));
            }
            Ok(())
        }
    }
}

fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok())
}
