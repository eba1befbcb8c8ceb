//! The transfer study: train a prior on the original task, then on each run
//! collect a small dataset in a new variant, fit LSTD, and compare the
//! empirical, Bayesian and bound-selected posteriors against ground truth.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bellman::{build_residuals, lstd_solve, NoiseModel, Ridge};
use crate::envs::{bottom_of_hill, collect_trajectories, learn_policy_q, MountainCarVariant, Policy, VariantTag};
use crate::error::{Error, Result};
use crate::features::{FeatureMap, TileCodingConfig};
use crate::measure::{posterior_lambda, GaussianProductMeasure, PosteriorFamilyConfig};
use crate::mixing::{trajectory_block_tau, trajectory_tau_bound};
use crate::oracle::{horizon_for_tolerance, true_error_under_mu, GroundTruth};
use crate::pacbayes::{select_lambda, BoundCertificate, BoundConstants};
use crate::rng::derive_seed;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyChoice {
    #[default]
    BangBang,
    QLearning { episodes: usize, seed: u64 },
}


impl PolicyChoice {
    pub fn build(&self, gamma: f64) -> Result<Policy> {
        match self {
            PolicyChoice::BangBang => Ok(Policy::BangBang),
            PolicyChoice::QLearning { episodes, seed } => {
                learn_policy_q(&MountainCarVariant::new(VariantTag::Original, gamma)?, *episodes, *seed)
            }
        }
    }
}

fn default_trajectories() -> usize {
    100
}
fn default_length() -> usize {
    5
}
fn default_prior_samples() -> usize {
    200_000
}
fn default_variance() -> f64 {
    0.01
}
fn default_delta() -> f64 {
    0.05
}
fn default_gamma() -> f64 {
    0.9
}
fn default_lambda_step() -> f64 {
    0.01
}
fn default_runs() -> usize {
    100
}
fn default_eval_states() -> usize {
    5000
}
fn default_truth_tolerance() -> f64 {
    1e-4
}

/// Configuration of one study. Missing keys default to 100 trajectories of
/// length 5, γ = 0.9, σ₀² = σ̂² = 0.01, δ = 0.05 and 100 runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub variant: VariantTag,
    #[serde(default)]
    pub policy: PolicyChoice,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default = "default_length")]
    pub trajectory_length: usize,
    pub prior_path: PathBuf,
    #[serde(default = "default_prior_samples")]
    pub prior_samples: usize,
    #[serde(default = "default_variance")]
    pub prior_variance: f64,
    #[serde(default = "default_variance")]
    pub empirical_variance: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_lambda_step")]
    pub lambda_step: f64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_eval_states")]
    pub eval_states: usize,
    #[serde(default = "default_truth_tolerance")]
    pub truth_tolerance: f64,
    #[serde(default)]
    pub ridge: Ridge,
    /// Explicit V_max²·c1 replacing the derived value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_size_threshold: Option<f64>,
    /// Worker threads; `None` uses all cores. Does not affect results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl ExperimentManifest {
    pub fn new(variant: VariantTag, prior_path: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            variant,
            policy: PolicyChoice::default(),
            trajectories: default_trajectories(),
            trajectory_length: default_length(),
            prior_path: prior_path.into(),
            prior_samples: default_prior_samples(),
            prior_variance: default_variance(),
            empirical_variance: default_variance(),
            delta: default_delta(),
            gamma: default_gamma(),
            lambda_step: default_lambda_step(),
            runs: default_runs(),
            seed: 0,
            output_dir: output_dir.into(),
            eval_states: default_eval_states(),
            truth_tolerance: default_truth_tolerance(),
            ridge: Ridge::Auto,
            sample_size_threshold: None,
            workers: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let m: Self = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::param("runs", "must be at least 1"));
        }
        if self.trajectories == 0 || self.trajectory_length == 0 {
            return Err(Error::param("trajectories", "count and length must be at least 1"));
        }
        if self.prior_samples == 0 {
            return Err(Error::param("prior_samples", "must be at least 1"));
        }
        if !(self.prior_variance > 0.0) || !(self.empirical_variance > 0.0) {
            return Err(Error::param("prior_variance", "variances must be strictly positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param("delta", "must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::param("gamma", "must lie in [0, 1)"));
        }
        if !(self.lambda_step > 0.0 && self.lambda_step <= 1.0) {
            return Err(Error::param("lambda_step", "must lie in (0, 1]"));
        }
        if self.eval_states < self.trajectory_length {
            return Err(Error::param("eval_states", "must be at least one trajectory long"));
        }
        if let Some(t) = self.sample_size_threshold {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::param("sample_size_threshold", "must be strictly positive"));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::param("workers", "must be at least 1"));
        }
        Ok(())
    }

    /// Hash of the result-relevant fields (output location and worker count
    /// excluded).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.workers = None;
        let bytes = serde_json::to_vec(&canonical).expect("manifest serializes");
        sha256_hex(&bytes)[..16].to_string()
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed.wrapping_add(run as u64)
    }

    /// Bound constants for one run's dataset, with τ from the trajectory
    /// length.
    pub fn bound_constants(&self, variant: &MountainCarVariant) -> Result<BoundConstants> {
        let n = self.trajectories * self.trajectory_length;
        let tau = trajectory_tau_bound(self.trajectory_length)?;
        let constants = BoundConstants::derive(n, self.delta, self.gamma, variant.reward_max, tau)?;
        match self.sample_size_threshold {
            Some(t) => constants.with_sample_size_threshold(t),
            None => Ok(constants),
        }
    }

    pub fn variant(&self) -> Result<MountainCarVariant> {
        MountainCarVariant::new(self.variant, self.gamma)
    }
}

/// θ₀ with the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorFile {
    pub theta: Vec<f64>,
    pub ridge: f64,
    pub samples: usize,
    pub trajectory_length: usize,
    pub gamma: f64,
    pub seed: u64,
    pub policy: PolicyChoice,
    pub features: TileCodingConfig,
}

impl PriorFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// LSTD on a large Original-variant dataset, written to `prior_path`.
pub fn train_prior(manifest: &ExperimentManifest) -> Result<PriorFile> {
    manifest.validate()?;
    let variant = MountainCarVariant::new(VariantTag::Original, manifest.gamma)?;
    let policy = manifest.policy.build(manifest.gamma)?;
    let features = TileCodingConfig::mountain_car();
    let length = manifest.trajectory_length;
    let count = manifest.prior_samples.div_ceil(length);
    let seed = derive_seed(manifest.seed, "prior");
    let data = collect_trajectories(&variant, &policy, count, length, seed)?;
    let solution = lstd_solve(&data, &features, manifest.gamma, manifest.ridge)?;
    let prior = PriorFile {
        theta: solution.theta,
        ridge: solution.ridge,
        samples: data.len(),
        trajectory_length: length,
        gamma: manifest.gamma,
        seed,
        policy: manifest.policy.clone(),
        features,
    };
    if let Some(parent) = manifest.prior_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(&manifest.prior_path, serde_json::to_string_pretty(&prior)?)?;
    Ok(prior)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Empirical,
    Bayes,
    Pacbayes,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Empirical, Method::Bayes, Method::Pacbayes];

    pub fn name(self) -> &'static str {
        match self {
            Method::Empirical => "empirical",
            Method::Bayes => "bayes",
            Method::Pacbayes => "pacbayes",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(Method::Empirical),
            "bayes" => Ok(Method::Bayes),
            "pacbayes" => Ok(Method::Pacbayes),
            other => Err(Error::param("method", format!("unknown method `{other}`"))),
        }
    }
}

/// Outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub lambda: f64,
    /// True μ-averaged error per method, in [`Method::ALL`] order.
    pub errors: [f64; 3],
    /// Mean-parameter value at the valley floor per method.
    pub bottom_values: [f64; 3],
    pub certificate: BoundCertificate,
}

impl RunRecord {
    pub fn error(&self, m: Method) -> f64 {
        self.errors[m as usize]
    }

    pub fn bottom_value(&self, m: Method) -> f64 {
        self.bottom_values[m as usize]
    }
}

/// On-disk form of one run's certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub run: usize,
    pub seed: u64,
    pub manifest_hash: String,
    pub lambda: f64,
    pub certificate: BoundCertificate,
}

/// Everything shared by the runs of one study.
pub struct TransferStudy {
    pub manifest: ExperimentManifest,
    pub variant: MountainCarVariant,
    pub policy: Policy,
    pub features: TileCodingConfig,
    pub prior: PriorFile,
    pub truth: GroundTruth,
    pub bottom_truth: f64,
    pub tau_crude: f64,
    pub tau_block: f64,
}

impl TransferStudy {
    pub fn prepare(manifest: &ExperimentManifest) -> Result<Self> {
        manifest.validate()?;
        let prior = PriorFile::load(&manifest.prior_path)?;
        let features = prior.features.clone();
        if prior.theta.len() != features.dim() {
            return Err(Error::DimensionMismatch {
                expected: features.dim(),
                got: prior.theta.len(),
            });
        }
        let variant = manifest.variant()?;
        // Fail before any simulation when the bound is undefined at this n.
        manifest.bound_constants(&variant)?.check_sample_size()?;
        let policy = manifest.policy.build(manifest.gamma)?;
        let horizon = horizon_for_tolerance(variant.gamma, variant.reward_max, manifest.truth_tolerance);
        let length = manifest.trajectory_length;
        let truth = GroundTruth::load_or_build(
            &manifest.output_dir.join("cache"),
            &variant,
            &policy,
            manifest.eval_states.div_ceil(length),
            length,
            horizon,
            derive_seed(manifest.seed, "ground-truth"),
        )?;
        let bottom_truth =
            crate::oracle::estimate_v_pi(&variant, &policy, [bottom_of_hill(), 0.0], horizon, 1, 0)?;
        Ok(Self {
            manifest: manifest.clone(),
            variant,
            policy,
            features,
            prior,
            truth,
            bottom_truth,
            tau_crude: trajectory_tau_bound(length)?,
            tau_block: trajectory_block_tau(length)?,
        })
    }

    pub fn run(&self, run: usize) -> Result<RunRecord> {
        let m = &self.manifest;
        let seed = m.run_seed(run);
        let data = collect_trajectories(&self.variant, &self.policy, m.trajectories, m.trajectory_length, seed)?;
        let lstd = lstd_solve(&data, &self.features, m.gamma, m.ridge)?;
        let residuals = build_residuals(&data, &self.features, m.gamma)?;
        let cfg = PosteriorFamilyConfig::new(
            self.prior.theta.clone(),
            m.prior_variance,
            lstd.theta,
            m.empirical_variance,
        )?;
        let mu0 = cfg.prior()?;
        // Mountain Car rewards and dynamics are deterministic.
        let noise = NoiseModel::zero(self.features.dim());
        let constants = m.bound_constants(&self.variant)?;
        let selection = select_lambda(&cfg, &mu0, &residuals, &noise, &constants, m.lambda_step)?;
        let mut certificate = selection.certificate;
        certificate.notes.lstd_ridge = Some(lstd.ridge);
        certificate.notes.tau_crude = Some(self.tau_crude);
        certificate.notes.tau_block = Some(self.tau_block);
        certificate.notes.explicit_threshold = m.sample_size_threshold;

        let measures: [GaussianProductMeasure; 3] = [
            posterior_lambda(&cfg, 0.0)?,
            posterior_lambda(&cfg, 1.0)?,
            selection.posterior,
        ];
        let bottom = self.features.features(&[bottom_of_hill(), 0.0]);
        let mut errors = [0.0; 3];
        let mut bottom_values = [0.0; 3];
        for (k, mu) in measures.iter().enumerate() {
            errors[k] = true_error_under_mu(mu, &self.truth, &self.features)?;
            bottom_values[k] = bottom.dot(mu.mean());
        }
        Ok(RunRecord {
            run,
            seed,
            lambda: selection.lambda,
            errors,
            bottom_values,
            certificate,
        })
    }

    /// All runs, in run order, on up to `workers` threads. With a directory,
    /// each run's certificate is written as soon as the run finishes.
    pub fn run_all(&self, certificates_dir: Option<&Path>) -> Result<Vec<RunRecord>> {
        if let Some(dir) = certificates_dir {
            fs::create_dir_all(dir)?;
        }
        let hash = self.manifest.hash();
        let one = |r: usize| -> Result<RunRecord> {
            let record = self.run(r)?;
            if let Some(dir) = certificates_dir {
                let file = CertificateFile {
                    run: record.run,
                    seed: record.seed,
                    manifest_hash: hash.clone(),
                    lambda: record.lambda,
                    certificate: record.certificate.clone(),
                };
                let path = dir.join(format!("run_{r:04}.json"));
                fs::write(path, serde_json::to_string_pretty(&file)?)?;
            }
            Ok(record)
        };
        let go = || (0..self.manifest.runs).into_par_iter().map(one).collect::<Result<Vec<_>>>();
        match self.manifest.workers {
            Some(w) => rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::param("workers", e.to_string()))?
                .install(go),
            None => go(),
        }
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub mean_error: f64,
    pub std_error: f64,
    pub mean_lambda: f64,
    pub std_lambda: f64,
    pub runs: usize,
    pub seed: u64,
    pub manifest_hash: String,
}

pub fn summarize(records: &[RunRecord], manifest: &ExperimentManifest) -> Vec<SummaryRow> {
    let hash = manifest.hash();
    let lambdas: Vec<f64> = records.iter().map(|r| r.lambda).collect();
    Method::ALL
        .iter()
        .map(|&m| {
            let errs: Vec<f64> = records.iter().map(|r| r.error(m)).collect();
            let (mean_error, std_error) = mean_std(&errs);
            let (mean_lambda, std_lambda) = match m {
                Method::Empirical => (0.0, 0.0),
                Method::Bayes => (1.0, 0.0),
                Method::Pacbayes => mean_std(&lambdas),
            };
            SummaryRow {
                method: m.name().to_string(),
                mean_error,
                std_error,
                mean_lambda,
                std_lambda,
                runs: records.len(),
                seed: manifest.seed,
                manifest_hash: hash.clone(),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct RunRow<'a> {
    run: usize,
    seed: u64,
    manifest_hash: &'a str,
    lambda: f64,
    empirical_error: f64,
    bayes_error: f64,
    pacbayes_error: f64,
    bound_value: f64,
    raw_bound: f64,
    kl: f64,
}

#[derive(Serialize)]
struct HistogramRow<'a> {
    method: &'a str,
    run: usize,
    value: f64,
    seed: u64,
    manifest_hash: &'a str,
}

/// Files written by [`write_transfer_outputs`].
#[derive(Debug, Clone)]
pub struct TransferOutputs {
    pub results_csv: PathBuf,
    pub runs_csv: PathBuf,
    pub certificates_dir: PathBuf,
}

pub fn certificates_dir(manifest: &ExperimentManifest) -> PathBuf {
    manifest.output_dir.join("certificates")
}

/// Runs the study, writing certificates per run, then `results.csv` and
/// `runs.csv`.
pub fn transfer_experiment(manifest: &ExperimentManifest) -> Result<(Vec<RunRecord>, TransferOutputs)> {
    let study = TransferStudy::prepare(manifest)?;
    let records = study.run_all(Some(&certificates_dir(manifest)))?;
    let outputs = write_transfer_outputs(&records, manifest)?;
    Ok((records, outputs))
}

/// Summary and per-run CSVs for finished runs.
pub fn write_transfer_outputs(records: &[RunRecord], manifest: &ExperimentManifest) -> Result<TransferOutputs> {
    let out = &manifest.output_dir;
    fs::create_dir_all(out)?;
    let certificates_dir = certificates_dir(manifest);

    let results_csv = out.join("results.csv");
    let mut w = csv::Writer::from_path(&results_csv)?;
    for row in summarize(records, manifest) {
        w.serialize(row)?;
    }
    w.flush()?;

    let hash = manifest.hash();
    let runs_csv = out.join("runs.csv");
    let mut w = csv::Writer::from_path(&runs_csv)?;
    for r in records {
        w.serialize(RunRow {
            run: r.run,
            seed: r.seed,
            manifest_hash: &hash,
            lambda: r.lambda,
            empirical_error: r.error(Method::Empirical),
            bayes_error: r.error(Method::Bayes),
            pacbayes_error: r.error(Method::Pacbayes),
            bound_value: r.certificate.bound_value,
            raw_bound: r.certificate.raw_bound,
            kl: r.certificate.kl,
        })?;
    }
    w.flush()?;
    Ok(TransferOutputs {
        results_csv,
        runs_csv,
        certificates_dir,
    })
}

/// Valley-floor value estimates of one method across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDistribution {
    pub method: Method,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

pub fn point_distributions(records: &[RunRecord]) -> Vec<PointDistribution> {
    Method::ALL
        .iter()
        .map(|&method| {
            let values: Vec<f64> = records.iter().map(|r| r.bottom_value(method)).collect();
            let (mean, std) = mean_std(&values);
            PointDistribution { method, values, mean, std }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSummary {
    pub manifest_hash: String,
    pub seed: u64,
    pub true_value: f64,
    pub methods: Vec<PointDistribution>,
}

/// Runs the study and writes its valley-floor distributions.
pub fn histogram(manifest: &ExperimentManifest, svg: bool) -> Result<HistogramSummary> {
    let study = TransferStudy::prepare(manifest)?;
    let records = study.run_all(None)?;
    write_histogram_outputs(&records, &study, svg)
}

/// Writes `histogram.csv`, `histogram_summary.json` and, when asked,
/// `histogram.svg` with one normal-fit curve per method.
pub fn write_histogram_outputs(
    records: &[RunRecord],
    study: &TransferStudy,
    svg: bool,
) -> Result<HistogramSummary> {
    let manifest = &study.manifest;
    fs::create_dir_all(&manifest.output_dir)?;
    let hash = manifest.hash();
    let dists = point_distributions(records);
    let mut w = csv::Writer::from_path(manifest.output_dir.join("histogram.csv"))?;
    for d in &dists {
        for (r, &value) in records.iter().zip(&d.values) {
            w.serialize(HistogramRow {
                method: d.method.name(),
                run: r.run,
                value,
                seed: r.seed,
                manifest_hash: &hash,
            })?;
        }
    }
    w.flush()?;
    let summary = HistogramSummary {
        manifest_hash: hash,
        seed: manifest.seed,
        true_value: study.bottom_truth,
        methods: dists,
    };
    fs::write(
        manifest.output_dir.join("histogram_summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    if svg {
        let mut f = fs::File::create(manifest.output_dir.join("histogram.svg"))?;
        f.write_all(normal_fit_svg(&summary).as_bytes())?;
    }
    Ok(summary)
}

fn normal_fit_svg(summary: &HistogramSummary) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const PAD: f64 = 40.0;
    let fits: Vec<(&str, f64, f64)> = summary
        .methods
        .iter()
        .map(|d| (d.method.name(), d.mean, d.std.max(1e-6)))
        .collect();
    let lo = fits.iter().map(|(_, m, s)| m - 4.0 * s).fold(f64::INFINITY, f64::min);
    let hi = fits.iter().map(|(_, m, s)| m + 4.0 * s).fold(f64::NEG_INFINITY, f64::max);
    let pdf = |x: f64, m: f64, s: f64| (-(x - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    let peak = fits.iter().map(|(_, m, s)| pdf(*m, *m, *s)).fold(0.0, f64::max);
    let colors = ["#1f77b4", "#d62728", "#2ca02c"];
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{PAD}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"black\"/>\n",
        y = H - PAD,
        x2 = W - PAD
    );
    for (k, (name, m, s)) in fits.iter().enumerate() {
        let pts: Vec<String> = (0..=200)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / 200.0;
                let px = PAD + (W - 2.0 * PAD) * (x - lo) / (hi - lo);
                let py = H - PAD - (H - 2.0 * PAD) * pdf(x, *m, *s) / peak;
                format!("{px:.2},{py:.2}")
            })
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{c}\" stroke-width=\"2\" points=\"{p}\"/>\n\
             <text x=\"{tx}\" y=\"{ty}\" fill=\"{c}\" font-size=\"12\">{name} (mean {m:.3}, sd {s:.3})</text>\n",
            c = colors[k % colors.len()],
            p = pts.join(" "),
            tx = W - PAD - 220.0,
            ty = PAD + 16.0 * k as f64,
        ));
    }
    let tx = PAD + (W - 2.0 * PAD) * (summary.true_value - lo) / (hi - lo);
    if tx.is_finite() && (PAD..=W - PAD).contains(&tx) {
        out.push_str(&format!(
            "<line x1=\"{tx:.2}\" y1=\"{PAD}\" x2=\"{tx:.2}\" y2=\"{y}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n",
            y = H - PAD
        ));
    }
    out.push_str(&format!(
        "<text x=\"{PAD}\" y=\"{y}\" font-size=\"11\">{lo:.3}</text>\n<text x=\"{x}\" y=\"{y}\" font-size=\"11\">{hi:.3}</text>\n</svg>\n",
        y = H - PAD + 16.0,
        x = W - PAD - 40.0
    ));
    out
}
