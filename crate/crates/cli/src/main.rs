//! `pbpe`: experiment harness for PAC-Bayesian policy evaluation.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pbpe_core::experiment::{self, ExperimentManifest};
use pbpe_core::mixing::{gamma_matrix, uniform_ergodicity_norm_bound, verify_concentration};
use pbpe_core::{Error, FiniteChain};
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(name = "pbpe", version, about = "PAC-Bayesian policy evaluation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit θ₀ by LSTD on a large dataset from the original task.
    TrainPrior(ManifestArgs),
    /// Run the transfer study; writes results.csv, runs.csv and certificates/.
    TransferExperiment(ManifestArgs),
    /// Valley-floor value estimates per method across runs.
    Histogram {
        #[command(flatten)]
        manifest: ManifestArgs,
        /// Also write histogram.svg with normal-fit curves.
        #[arg(long)]
        svg: bool,
    },
    /// Dependence matrix, operator norm and forgetting time of a chain.
    MixingAnalysis {
        /// Chain JSON: {"P": [[..]], "r": [..], "gamma": g}.
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        n: usize,
        /// Minorization mass ρ for the uniform-ergodicity bound.
        #[arg(long)]
        minorization_mass: Option<f64>,
        /// Steps r at which the minorization holds.
        #[arg(long, default_value_t = 1)]
        minorization_steps: usize,
        /// Include the full n×n matrix in the report.
        #[arg(long)]
        full_matrix: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Empirical tail frequencies of a chain average against the Bernstein bounds.
    VerifyConcentration {
        #[arg(long)]
        chain: PathBuf,
        /// Per-state values of f, comma separated; defaults to the chain rewards.
        #[arg(long, value_delimiter = ',')]
        f: Option<Vec<f64>>,
        /// Upper end B of the range of f.
        #[arg(long)]
        range_bound: Option<f64>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// A manifest file plus per-field overrides named after its keys.
#[derive(Args)]
struct ManifestArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    /// `bang_bang`, or a JSON object such as {"q_learning":{"episodes":300,"seed":1}}.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    trajectory_length: Option<usize>,
    #[arg(long)]
    prior_path: Option<PathBuf>,
    #[arg(long)]
    prior_samples: Option<usize>,
    #[arg(long)]
    prior_variance: Option<f64>,
    #[arg(long)]
    empirical_variance: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda_step: Option<f64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    eval_states: Option<usize>,
    #[arg(long)]
    truth_tolerance: Option<f64>,
    /// `auto` or a nonnegative number.
    #[arg(long)]
    ridge: Option<String>,
    /// Explicit V_max²·c1.
    #[arg(long)]
    sample_size_threshold: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn config<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Config(format!("{context}: {e}"))
}

impl ManifestArgs {
    fn resolve(&self, fill: &[(&str, Value)]) -> CliResult<ExperimentManifest> {
        let mut map = match &self.manifest {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(config(&path.display().to_string()))?;
                match serde_json::from_str::<Value>(&text).map_err(config(&path.display().to_string()))? {
                    Value::Object(m) => m,
                    _ => return Err(Failure::Config(format!("{}: manifest must be a JSON object", path.display()))),
                }
            }
            None => Map::new(),
        };
        let mut set = |key: &str, v: Option<Value>| {
            if let Some(v) = v {
                map.insert(key.to_string(), v);
            }
        };
        set("variant", self.variant.clone().map(Value::from));
        set("policy", self.policy.as_deref().map(parse_policy).transpose()?);
        set("trajectories", self.trajectories.map(Value::from));
        set("trajectory_length", self.trajectory_length.map(Value::from));
        set("prior_path", self.prior_path.as_ref().map(|p| Value::from(p.display().to_string())));
        set("prior_samples", self.prior_samples.map(Value::from));
        set("prior_variance", self.prior_variance.map(Value::from));
        set("empirical_variance", self.empirical_variance.map(Value::from));
        set("delta", self.delta.map(Value::from));
        set("gamma", self.gamma.map(Value::from));
        set("lambda_step", self.lambda_step.map(Value::from));
        set("runs", self.runs.map(Value::from));
        set("seed", self.seed.map(Value::from));
        set("output_dir", self.output_dir.as_ref().map(|p| Value::from(p.display().to_string())));
        set("eval_states", self.eval_states.map(Value::from));
        set("truth_tolerance", self.truth_tolerance.map(Value::from));
        set("ridge", self.ridge.as_deref().map(parse_ridge).transpose()?);
        set("sample_size_threshold", self.sample_size_threshold.map(Value::from));
        set("workers", self.workers.map(Value::from));
        for (key, value) in fill {
            map.entry(key.to_string()).or_insert_with(|| value.clone());
        }
        let manifest: ExperimentManifest =
            serde_json::from_value(Value::Object(map)).map_err(config("manifest"))?;
        manifest.validate()?;
        Ok(manifest)
    }
}

fn parse_policy(s: &str) -> CliResult<Value> {
    if s.trim_start().starts_with('{') {
        serde_json::from_str(s).map_err(config("--policy"))
    } else {
        Ok(Value::from(s))
    }
}

fn parse_ridge(s: &str) -> CliResult<Value> {
    if s == "auto" {
        return Ok(Value::from("auto"));
    }
    let v: f64 = s.parse().map_err(config("--ridge"))?;
    Ok(json!({ "fixed": v }))
}

fn read_chain(path: &Path) -> CliResult<FiniteChain> {
    let text = fs::read_to_string(path).map_err(config(&path.display().to_string()))?;
    serde_json::from_str(&text).map_err(config(&path.display().to_string()))
}

fn emit(report: &Value, output: Option<&Path>) -> CliResult<()> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    match output {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(config(&parent.display().to_string()))?;
            }
            fs::write(path, text + "\n").map_err(config(&path.display().to_string()))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::TrainPrior(args) => {
            let manifest = args.resolve(&[("variant", json!("original")), ("output_dir", json!("."))])?;
            let prior = experiment::train_prior(&manifest)?;
            println!(
                "wrote {} ({} samples, ridge {:e})",
                manifest.prior_path.display(),
                prior.samples,
                prior.ridge
            );
        }
        Command::TransferExperiment(args) => {
            let manifest = args.resolve(&[])?;
            let (records, outputs) = experiment::transfer_experiment(&manifest)?;
            for row in experiment::summarize(&records, &manifest) {
                println!(
                    "{:<10} error {:.4} ± {:.4}  λ {:.3} ± {:.3}",
                    row.method, row.mean_error, row.std_error, row.mean_lambda, row.std_lambda
                );
            }
            println!("wrote {}", outputs.results_csv.display());
        }
        Command::Histogram { manifest, svg } => {
            let manifest = manifest.resolve(&[])?;
            let summary = experiment::histogram(&manifest, svg)?;
            for d in &summary.methods {
                println!("{:<10} mean {:.4} std {:.4}", d.method.name(), d.mean, d.std);
            }
            println!("true value {:.4}", summary.true_value);
        }
        Command::MixingAnalysis {
            chain,
            n,
            minorization_mass,
            minorization_steps,
            full_matrix,
            output,
        } => {
            let chain = read_chain(&chain)?;
            let profile = gamma_matrix(&chain, n)?;
            let bound = minorization_mass
                .map(|m| uniform_ergodicity_norm_bound(m, minorization_steps))
                .transpose()?;
            let mut report = json!({
                "n": profile.n,
                "lag_coefficients": profile.lag_coefficients,
                "operator_norm": profile.operator_norm,
                "tau": profile.tau,
                "stationary_distribution": chain.stationary_distribution().ok(),
            });
            if let Some(b) = bound {
                report["minorization"] = json!({
                    "mass": minorization_mass,
                    "steps": minorization_steps,
                    "operator_norm_bound": b,
                });
            }
            if full_matrix {
                let g = profile.gamma_matrix();
                let rows: Vec<Vec<f64>> = (0..n).map(|i| g.row(i).iter().copied().collect()).collect();
                report["gamma_matrix"] = json!(rows);
            }
            emit(&report, output.as_deref())?;
        }
        Command::VerifyConcentration {
            chain,
            f,
            range_bound,
            n,
            epsilon,
            trials,
            seed,
            output,
        } => {
            let chain = read_chain(&chain)?;
            let f = f.unwrap_or_else(|| chain.rewards().to_vec());
            let range_bound = range_bound.unwrap_or_else(|| f.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE));
            let report = verify_concentration(&chain, &f, range_bound, n, epsilon, trials, seed)?;
            let mut value = serde_json::to_value(&report).expect("report serializes");
            value["holds"] = json!(report.holds());
            emit(&value, output.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}
