//! Config-driven experiments: split, train the target with FedAvg, attack it
//! for each ρ, measure heterogeneity, aggregate over repeats.
//!
//! Seeding: repeat `r` uses `run_seed = derive(master, [REPEAT, r])`, and
//! every stage seed is derived from `run_seed` alone, so a repeat's results do
//! not depend on the repeat count. One challenge seed per run is shared by
//! all ρ values, so members and same-pool draws are common across ρ.

mod table;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{run_attack, train_shadow_attack, AttackConfig, AttackResult};
use crate::dataset::{
    load_csv, load_csv_aligned, preprocess, PreprocessOptions, RawDataset, Schema, TabularDataset,
};
use crate::error::{Error, Result};
use crate::fedavg::{run_rounds, FlConfig, RoundSnapshot};
use crate::metric::{heterogeneity, HeterogeneityReport};
use crate::model::{accuracy, init_model};
use crate::rng::{derive_seed, tags};
use crate::splitting::{build_challenge, split, third_share, SplitOutput, SplitPlan};

pub use table::{emit_table, write_table, TableFormat, TableRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Standardize numeric columns of the features the models see.
    pub standardize_model: bool,
    /// Standardize numeric columns of the features the metric sees.
    pub standardize_metric: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            standardize_model: true,
            standardize_metric: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    /// Dataset label used in tables; defaults to the data file stem.
    #[serde(default)]
    pub dataset_name: Option<String>,
    /// CSV path, relative to the config file.
    pub data: PathBuf,
    /// Schema path, relative to the config file.
    pub schema: PathBuf,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    pub split: SplitPlan,
    #[serde(default)]
    pub fl: FlConfig,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default = "default_rhos")]
    pub rhos: Vec<f64>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    /// Members per challenge; absent means the largest size feasible for
    /// every ρ.
    #[serde(default)]
    pub challenge_per_side: Option<usize>,
    /// Attack an untrained (freshly initialized) target instead.
    #[serde(default)]
    pub null_target: bool,
    /// Artifact directory, relative to the config file. Absent means no
    /// artifacts are written.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_rhos() -> Vec<f64> {
    vec![0.0]
}

fn default_repeats() -> usize {
    10
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, base_dir: impl AsRef<Path>) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text)
            .map_err(|e| Error::Config(format!("invalid experiment config: {e}")))?;
        cfg.base_dir = base_dir.as_ref().to_path_buf();
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn data_path(&self) -> PathBuf {
        self.resolve(&self.data)
    }

    pub fn schema_path(&self) -> PathBuf {
        self.resolve(&self.schema)
    }

    pub fn output_path(&self) -> Option<PathBuf> {
        self.output_dir.as_ref().map(|p| self.resolve(p))
    }

    pub fn dataset_label(&self) -> String {
        self.dataset_name.clone().unwrap_or_else(|| {
            self.data
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be ≥ 1".into()));
        }
        if self.rhos.is_empty() {
            return Err(Error::Config("rho list is empty".into()));
        }
        for &rho in &self.rhos {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::Config(format!("rho {rho} outside [0, 1]")));
            }
        }
        if self.challenge_per_side == Some(0) {
            return Err(Error::Config("challenge_per_side must be ≥ 1".into()));
        }
        for (what, p) in [("data", self.data_path()), ("schema", self.schema_path())] {
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "{what} file {} does not exist",
                    p.display()
                )));
            }
        }
        self.fl.validate()?;
        self.attack.validate()
    }
}

/// Stage seeds of one repeat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub run: u64,
    pub split: u64,
    pub target_init: u64,
    pub target_fl: u64,
    pub attack: u64,
    pub challenge: u64,
}

impl RunSeeds {
    pub fn derive(master: u64, repeat: usize) -> Self {
        let run = derive_seed(master, &[tags::REPEAT, repeat as u64]);
        RunSeeds {
            run,
            split: derive_seed(run, &[tags::SPLIT]),
            target_init: derive_seed(run, &[tags::TARGET_INIT]),
            target_fl: derive_seed(run, &[tags::TARGET_FL]),
            attack: derive_seed(run, &[tags::ATTACK]),
            challenge: derive_seed(run, &[tags::CHALLENGE]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoOutcome {
    pub rho: f64,
    pub result: Option<AttackResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub attacker: usize,
    pub target: usize,
    pub nonmember_same: usize,
    pub nonmember_third: usize,
}

/// Everything one repeat produced. `error` is set when a stage before the
/// per-ρ attacks failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub repeat: usize,
    pub seeds: RunSeeds,
    pub error: Option<String>,
    pub split_sizes: Option<SplitSizes>,
    pub heterogeneity: Option<HeterogeneityReport>,
    pub challenge_per_side: Option<usize>,
    /// Target accuracy on its training members and on held-out rows.
    pub target_train_accuracy: Option<f64>,
    pub target_holdout_accuracy: Option<f64>,
    pub attack_train_accuracy: Option<f64>,
    pub outcomes: Vec<RhoOutcome>,
}

impl RunRecord {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoAggregate {
    pub rho: f64,
    pub mean_accuracy: f64,
    /// Sample standard deviation (n − 1); 0 for a single run.
    pub std_accuracy: f64,
    pub n_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub dataset: String,
    pub splitting: String,
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<RhoAggregate>,
    /// Mean and sample std of the per-run heterogeneity value.
    pub heterogeneity_mean: Option<f64>,
    pub heterogeneity_std: Option<f64>,
    pub failed_runs: Vec<usize>,
}

/// Wall-clock timings, kept apart from the report so that the report is
/// reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub load_seconds: f64,
    pub per_run_seconds: Vec<f64>,
}

/// Artifacts of one run that are written under `runs/<index>/`.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub split: Option<SplitOutput>,
    pub snapshots: Vec<RoundSnapshot>,
    pub attack_model: Option<crate::attack::AttackModel>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub timings: Timings,
    pub artifacts: Vec<RunArtifacts>,
}

/// Model-side and metric-side views of the same rows.
pub struct PreparedData {
    pub model: TabularDataset,
    pub metric: TabularDataset,
}

pub fn load_prepared(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let schema = Schema::from_file(cfg.schema_path())?;
    let raw = load_csv(cfg.data_path(), &schema)?;
    let model = preprocess(
        &raw,
        PreprocessOptions {
            standardize: cfg.preprocess.standardize_model,
        },
    )?;
    let metric = preprocess(
        &raw,
        PreprocessOptions {
            standardize: cfg.preprocess.standardize_metric,
        },
    )?;
    Ok(PreparedData { model, metric })
}

/// Heterogeneity between two CSV files under one schema. Vocabularies are
/// shared and standardization, when asked for, uses the pooled rows.
pub fn heterogeneity_between_files(
    a: &Path,
    b: &Path,
    schema: &Schema,
    standardize: bool,
) -> Result<HeterogeneityReport> {
    let parts = load_csv_aligned(&[a, b], schema)?;
    let n_a = parts[0].len();
    let pooled = preprocess(
        &RawDataset::concat(&parts)?,
        PreprocessOptions { standardize },
    )?;
    let rows_a: Vec<usize> = (0..n_a).collect();
    let rows_b: Vec<usize> = (n_a..pooled.len()).collect();
    heterogeneity(&pooled.subset(&rows_a)?, &pooled.subset(&rows_b)?)
}

/// Largest members-per-side count that every ρ in `rhos` can supply.
pub fn max_challenge_per_side(split: &SplitOutput, rhos: &[f64]) -> usize {
    let feasible = |p: usize| {
        rhos.iter().all(|&rho| {
            let third = third_share(p, rho);
            split.target.len() >= p
                && split.nonmember_third.len() >= third
                && split.nonmember_same.len() >= p - third
        })
    };
    (1..=split.target.len())
        .rev()
        .find(|&p| feasible(p))
        .unwrap_or(0)
}

fn untrained_snapshot(
    cfg: &ExperimentConfig,
    ds: &TabularDataset,
    seed: u64,
) -> Result<Vec<RoundSnapshot>> {
    let arch = cfg.fl.architecture(ds.dim(), ds.num_classes())?;
    Ok(vec![RoundSnapshot {
        round: 1,
        params: init_model(&arch, seed)?,
        client_sizes: Vec::new(),
    }])
}

/// One repeat. Stage failures are recorded, not propagated.
/// The split of one repeat, checked for disjointness.
pub fn repeat_split(
    cfg: &ExperimentConfig,
    ds: &TabularDataset,
    seeds: &RunSeeds,
) -> Result<SplitOutput> {
    let plan = SplitPlan {
        seed: seeds.split,
        ..cfg.split.clone()
    };
    let parts = split(ds, &plan)?;
    parts.check_disjoint()?;
    Ok(parts)
}

/// Heterogeneity between the attacker and target subsets on the metric view.
pub fn split_heterogeneity(
    data: &PreparedData,
    parts: &SplitOutput,
) -> Result<HeterogeneityReport> {
    let attacker_view = data.metric.subset(&parts.attacker)?;
    let target_view = data.metric.subset(&parts.target)?;
    heterogeneity(&attacker_view, &target_view)
}

pub fn run_one(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    repeat: usize,
) -> (RunRecord, RunArtifacts) {
    let seeds = RunSeeds::derive(cfg.seed, repeat);
    let mut record = RunRecord {
        repeat,
        seeds,
        error: None,
        split_sizes: None,
        heterogeneity: None,
        challenge_per_side: None,
        target_train_accuracy: None,
        target_holdout_accuracy: None,
        attack_train_accuracy: None,
        outcomes: Vec::new(),
    };
    let mut artifacts = RunArtifacts {
        split: None,
        snapshots: Vec::new(),
        attack_model: None,
    };
    if let Err(e) = run_stages(cfg, data, &seeds, &mut record, &mut artifacts) {
        record.error = Some(e.to_string());
    }
    (record, artifacts)
}

fn run_stages(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    seeds: &RunSeeds,
    record: &mut RunRecord,
    artifacts: &mut RunArtifacts,
) -> Result<()> {
    let ds = &data.model;
    let parts = repeat_split(cfg, ds, seeds)?;
    record.split_sizes = Some(SplitSizes {
        attacker: parts.attacker.len(),
        target: parts.target.len(),
        nonmember_same: parts.nonmember_same.len(),
        nonmember_third: parts.nonmember_third.len(),
    });
    artifacts.split = Some(parts.clone());

    record.heterogeneity = Some(split_heterogeneity(data, &parts)?);

    let fl = FlConfig {
        seed: seeds.target_fl,
        ..cfg.fl.clone()
    };
    let snapshots = if cfg.null_target {
        untrained_snapshot(cfg, ds, seeds.target_init)?
    } else {
        run_rounds(ds, &parts.target, &fl, seeds.target_init)?
    };
    let final_params = &snapshots.last().expect("at least one round").params;
    record.target_train_accuracy = Some(accuracy(final_params, ds, &parts.target)?);
    let holdout: Vec<usize> = parts
        .nonmember_same
        .iter()
        .chain(&parts.nonmember_third)
        .copied()
        .collect();
    if !holdout.is_empty() {
        record.target_holdout_accuracy = Some(accuracy(final_params, ds, &holdout)?);
    }

    let attack_cfg = AttackConfig {
        seed: seeds.attack,
        ..cfg.attack.clone()
    };
    let model = train_shadow_attack(ds, &parts.attacker, &fl, &attack_cfg)?;
    record.attack_train_accuracy = Some(model.train_accuracy);

    let per_side = match cfg.challenge_per_side {
        Some(p) => p,
        None => match max_challenge_per_side(&parts, &cfg.rhos) {
            0 => {
                return Err(Error::Split(
                    "no challenge size is feasible for every rho".into(),
                ))
            }
            p => p,
        },
    };
    record.challenge_per_side = Some(per_side);

    for &rho in &cfg.rhos {
        let outcome = build_challenge(&parts, ds, per_side, rho, seeds.challenge)
            .and_then(|challenge| run_attack(&model, &snapshots, &challenge, &attack_cfg));
        record.outcomes.push(match outcome {
            Ok(result) => RhoOutcome {
                rho,
                result: Some(result),
                error: None,
            },
            Err(e) => RhoOutcome {
                rho,
                result: None,
                error: Some(e.to_string()),
            },
        });
    }
    artifacts.snapshots = snapshots;
    artifacts.attack_model = Some(model);
    Ok(())
}

/// Mean and sample standard deviation, summed in slice order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Per-ρ aggregates over successful outcomes, in config ρ order.
pub fn aggregate_runs(runs: &[RunRecord], rhos: &[f64]) -> Vec<RhoAggregate> {
    rhos.iter()
        .enumerate()
        .map(|(k, &rho)| {
            let accs: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.outcomes.get(k))
                .filter_map(|o| o.result.as_ref().map(|res| res.accuracy))
                .collect();
            let (mean, std) = mean_std(&accs);
            RhoAggregate {
                rho,
                mean_accuracy: mean,
                std_accuracy: std,
                n_runs: accs.len(),
            }
        })
        .collect()
}

/// Runs every repeat (in parallel) and aggregates. Artifacts are written
/// when the config names an output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let start = Instant::now();
    cfg.validate()?;
    let data = load_prepared(cfg)?;
    let load_seconds = start.elapsed().as_secs_f64();

    let results: Vec<(RunRecord, RunArtifacts, f64)> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| {
            let t = Instant::now();
            let (record, artifacts) = run_one(cfg, &data, r);
            (record, artifacts, t.elapsed().as_secs_f64())
        })
        .collect();

    let mut runs = Vec::with_capacity(cfg.repeats);
    let mut artifacts = Vec::with_capacity(cfg.repeats);
    let mut per_run_seconds = Vec::with_capacity(cfg.repeats);
    for (record, art, secs) in results {
        if let Some(e) = &record.error {
            log::warn!("run {} failed: {e}", record.repeat);
        }
        runs.push(record);
        artifacts.push(art);
        per_run_seconds.push(secs);
    }

    let failed_runs: Vec<usize> = runs
        .iter()
        .filter(|r| !r.succeeded())
        .map(|r| r.repeat)
        .collect();
    let any_attack = runs
        .iter()
        .flat_map(|r| &r.outcomes)
        .any(|o| o.result.is_some());
    if !any_attack {
        let first = runs
            .iter()
            .find_map(|r| {
                r.error
                    .clone()
                    .or_else(|| r.outcomes.iter().find_map(|o| o.error.clone()))
            })
            .unwrap_or_default();
        return Err(Error::Data(format!(
            "every run failed; first error: {first}"
        )));
    }

    let hets: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.heterogeneity.as_ref().map(|h| h.average))
        .collect();
    let (het_mean, het_std) = mean_std(&hets);
    let report = ExperimentReport {
        name: cfg.name.clone(),
        dataset: cfg.dataset_label(),
        splitting: format!("{:?}", cfg.split.strategy).to_lowercase(),
        config: cfg.clone(),
        aggregates: aggregate_runs(&runs, &cfg.rhos),
        runs,
        heterogeneity_mean: (!hets.is_empty()).then_some(het_mean),
        heterogeneity_std: (!hets.is_empty()).then_some(het_std),
        failed_runs,
    };
    let output = ExperimentOutput {
        report,
        timings: Timings {
            total_seconds: start.elapsed().as_secs_f64(),
            load_seconds,
            per_run_seconds,
        },
        artifacts,
    };
    if let Some(dir) = cfg.output_path() {
        write_outputs(&output, &dir)?;
    }
    Ok(output)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct Manifest<'a> {
    repeat: usize,
    seeds: &'a RunSeeds,
    fl: &'a FlConfig,
    rounds: Vec<usize>,
    client_sizes: Vec<Vec<usize>>,
}

/// Writes `report.json`, `timings.json`, `table.csv`, `table.md` and
/// `runs/<index>/` artifacts, in run order.
pub fn write_outputs(output: &ExperimentOutput, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let report = &output.report;
    write_file(
        &dir.join("report.json"),
        &serde_json::to_string_pretty(report)?,
    )?;
    write_file(
        &dir.join("timings.json"),
        &serde_json::to_string_pretty(&output.timings)?,
    )?;
    let reports = std::slice::from_ref(report);
    write_file(
        &dir.join("table.csv"),
        &emit_table(reports, TableFormat::Csv)?,
    )?;
    write_file(
        &dir.join("table.md"),
        &emit_table(reports, TableFormat::Markdown)?,
    )?;

    for (record, art) in report.runs.iter().zip(&output.artifacts) {
        let run_dir = dir.join("runs").join(record.repeat.to_string());
        create_dir(&run_dir)?;
        write_file(
            &run_dir.join("run.json"),
            &serde_json::to_string_pretty(record)?,
        )?;
        if let Some(split) = &art.split {
            write_file(
                &run_dir.join("split.json"),
                &serde_json::to_string_pretty(split)?,
            )?;
        }
        if let Some(h) = &record.heterogeneity {
            write_file(
                &run_dir.join("heterogeneity.json"),
                &serde_json::to_string_pretty(h)?,
            )?;
        }
        if !art.snapshots.is_empty() {
            let manifest = Manifest {
                repeat: record.repeat,
                seeds: &record.seeds,
                fl: &report.config.fl,
                rounds: art.snapshots.iter().map(|s| s.round).collect(),
                client_sizes: art
                    .snapshots
                    .iter()
                    .map(|s| s.client_sizes.clone())
                    .collect(),
            };
            write_file(
                &run_dir.join("manifest.json"),
                &serde_json::to_string_pretty(&manifest)?,
            )?;
            for s in &art.snapshots {
                write_file(
                    &run_dir.join(format!("round_{}.json", s.round)),
                    &s.params.to_json()?,
                )?;
            }
        }
        if let Some(m) = &art.attack_model {
            write_file(
                &run_dir.join("attack_model.json"),
                &serde_json::to_string_pretty(m)?,
            )?;
        }
        for (k, o) in record.outcomes.iter().enumerate() {
            if let Some(res) = &o.result {
                res.write_scores_csv(run_dir.join(format!("scores_rho{k}.csv")))?;
            }
        }
    }
    Ok(())
}
