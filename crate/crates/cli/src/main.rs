use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hetero_mia::attack::AttackResult;
use hetero_mia::dataset::{
    gen_synthetic, load_csv, preprocess, surrogate, PreprocessOptions, Schema, SyntheticSpec,
};
use hetero_mia::experiment::{
    emit_table, heterogeneity_between_files, load_prepared, run_experiment, run_one,
    ExperimentConfig, TableFormat,
};
use hetero_mia::splitting::{split, SplitPlan};
use hetero_mia::{Error, Result};

#[derive(Parser)]
#[command(
    name = "hetero-mia",
    version,
    about = "Data heterogeneity metric and membership inference experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Heterogeneity between two CSV files under one schema.
    Metric {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// Standardize numeric columns over the pooled rows first.
        #[arg(long)]
        standardize: bool,
    },
    /// Attacker / target / non-member index lists for a dataset.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// Plan file: a bare plan or a config with a [split] table.
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// One repeat of an experiment config; prints the attack result per rho.
    Attack {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Repeat index whose seeds are used.
        #[arg(long, default_value_t = 0)]
        repeat: usize,
        /// Directory for per-point score CSVs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every repeat of an experiment config, with tables and artifacts.
    RunExperiment {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Table printed to stdout.
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
    },
    /// Writes a synthetic or surrogate dataset as CSV.
    Synth {
        /// Synthetic spec (TOML) of Gaussian blocks.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Heart,
    Students,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => std::fs::create_dir_all(dir).map_err(io_err(dir)),
        None => Ok(()),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

fn write(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    std::fs::write(path, text).map_err(io_err(path))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn metric(a: &Path, b: &Path, schema: &Path, standardize: bool) -> Result<()> {
    let schema = Schema::from_file(schema)?;
    let report = heterogeneity_between_files(a, b, &schema, standardize)?;
    eprintln!("{}", report.summary());
    for w in &report.warnings {
        log::warn!("{w}");
    }
    print_json(&report)
}

fn split_cmd(data: &Path, schema: &Path, plan: &Path, seed: Option<u64>) -> Result<()> {
    let schema = Schema::from_file(schema)?;
    let ds = preprocess(&load_csv(data, &schema)?, PreprocessOptions::default())?;
    let mut plan = SplitPlan::from_toml_str(&read(plan)?)?;
    if let Some(seed) = seed {
        plan.seed = seed;
    }
    let out = split(&ds, &plan)?;
    eprintln!(
        "attacker {} / target {} / non-member {} same + {} third",
        out.attacker.len(),
        out.target.len(),
        out.nonmember_same.len(),
        out.nonmember_third.len()
    );
    print_json(&out)
}

fn attack(config: &Path, seed: Option<u64>, repeat: usize, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(config, seed)?;
    cfg.validate()?;
    let data = load_prepared(&cfg)?;
    let (record, _) = run_one(&cfg, &data, repeat);
    if let Some(e) = record.error {
        return Err(Error::Data(e));
    }
    let mut results: Vec<&AttackResult> = Vec::new();
    for (k, o) in record.outcomes.iter().enumerate() {
        if let Some(e) = &o.error {
            log::warn!("rho {}: {e}", o.rho);
        }
        let Some(res) = &o.result else { continue };
        eprintln!("rho {}: accuracy {:.2}%", o.rho, 100.0 * res.accuracy);
        if let Some(dir) = out {
            let path = dir.join(format!("scores_rho{k}.csv"));
            create_parent(&path)?;
            res.write_scores_csv(path)?;
        }
        results.push(res);
    }
    if results.is_empty() {
        return Err(Error::Data("no rho value produced a result".into()));
    }
    print_json(&results)
}

fn run_experiment_cmd(
    config: &Path,
    out: Option<&Path>,
    seed: Option<u64>,
    format: Format,
) -> Result<()> {
    let mut cfg = load_config(config, seed)?;
    if let Some(out) = out {
        cfg.output_dir = Some(std::path::absolute(out).map_err(io_err(out))?);
    }
    let output = run_experiment(&cfg)?;
    let report = &output.report;
    if !report.failed_runs.is_empty() {
        log::warn!("failed runs: {:?}", report.failed_runs);
    }
    if let Some(dir) = cfg.output_path() {
        eprintln!(
            "wrote {} ({:.1} s)",
            dir.display(),
            output.timings.total_seconds
        );
    }
    let format = match format {
        Format::Csv => TableFormat::Csv,
        Format::Markdown => TableFormat::Markdown,
        Format::Json => TableFormat::Json,
    };
    print!("{}", emit_table(std::slice::from_ref(report), format)?);
    Ok(())
}

fn synth(
    config: Option<&Path>,
    preset: Option<Preset>,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let text = match (preset, config) {
        (Some(Preset::Heart), _) => surrogate::heart_csv(seed),
        (Some(Preset::Students), _) => surrogate::students_csv(seed),
        (None, Some(path)) => {
            let ds = gen_synthetic(&SyntheticSpec::from_toml_str(&read(path)?)?, seed)?;
            if let Some(path) = out {
                create_parent(path)?;
                ds.write_csv(path)?;
                eprintln!("wrote {} rows to {}", ds.len(), path.display());
                return Ok(());
            }
            ds.to_csv_string()?
        }
        (None, None) => return Err(Error::Config("give --config or --preset".into())),
    };
    match out {
        Some(path) => {
            write(path, &text)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Metric {
            a,
            b,
            schema,
            standardize,
        } => metric(&a, &b, &schema, standardize),
        Command::Split {
            data,
            schema,
            plan,
            seed,
        } => split_cmd(&data, &schema, &plan, seed),
        Command::Attack {
            config,
            seed,
            repeat,
            out,
        } => attack(&config, seed, repeat, out.as_deref()),
        Command::RunExperiment {
            config,
            out,
            seed,
            format,
        } => run_experiment_cmd(&config, out.as_deref(), seed, format),
        Command::Synth {
            config,
            preset,
            seed,
            out,
        } => synth(config.as_deref(), preset, seed, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // usage errors are config errors; clap's default code would read as a data error
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
