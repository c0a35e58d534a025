//! Acceptance harness: one PASS / FAIL / SKIP line per criterion.
//!
//! Criteria that need the UCI files run on `data/raw` when present and SKIP
//! otherwise; the same checks then run on the shipped surrogates, labelled as
//! such. The process exits 0 regardless unless `ACCEPTANCE_STRICT=1` is set.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use hetero_mia::dataset::{
    gen_synthetic, load_csv, preprocess, PreprocessOptions, Schema, SyntheticComponent,
    SyntheticSpec, TabularDataset,
};
use hetero_mia::experiment::{
    load_prepared, repeat_split, run_experiment, split_heterogeneity, ExperimentConfig,
    ExperimentReport, RunSeeds,
};
use hetero_mia::fedavg::{aggregate, run_rounds, FlConfig};
use hetero_mia::metric::heterogeneity;
use hetero_mia::model::{init_model, loss_and_grad, train, Architecture, ModelParams};
use hetero_mia::rng::rng_from_seed;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Pass,
    Fail,
    Skip,
}

impl Status {
    fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        }
    }
}

struct Verdict {
    status: Status,
    detail: String,
}

fn verdict(ok: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        status: if ok { Status::Pass } else { Status::Fail },
        detail: detail.into(),
    }
}

fn skip(detail: impl Into<String>) -> Verdict {
    Verdict {
        status: Status::Skip,
        detail: detail.into(),
    }
}

type Check = Result<Verdict, String>;

struct Harness {
    failures: usize,
}

impl Harness {
    fn run(&mut self, id: &str, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Check) {
        self.run_after(id, name, limit, Duration::ZERO, f);
    }

    /// Like `run`, with `prior` already spent on shared work.
    fn run_after(
        &mut self,
        id: &str,
        name: &str,
        limit: Option<Duration>,
        prior: Duration,
        f: impl FnOnce() -> Check,
    ) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f));
        let elapsed = prior + start.elapsed();
        let mut v = match outcome {
            Ok(Ok(v)) => v,
            Ok(Err(e)) => verdict(false, format!("error: {e}")),
            Err(_) => verdict(false, "panicked"),
        };
        let budget = match limit {
            Some(limit) => {
                if v.status == Status::Pass && elapsed > limit {
                    v.status = Status::Fail;
                    v.detail.push_str("; over runtime budget");
                }
                format!("{:.2}s / {}s", elapsed.as_secs_f64(), limit.as_secs())
            }
            None => format!("{:.2}s", elapsed.as_secs_f64()),
        };
        if v.status == Status::Fail {
            self.failures += 1;
        }
        println!(
            "{} criterion {id:<14} {name}: {} [{budget}]",
            v.status.label(),
            v.detail
        );
    }
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Config and whether its data file exists.
fn config(source: Source, name: &str) -> Result<Option<ExperimentConfig>, String> {
    let path = match source {
        Source::Real => data_dir().join("configs").join(format!("{name}.toml")),
        Source::Surrogate => data_dir()
            .join("configs/surrogate")
            .join(format!("{name}.toml")),
    };
    let mut cfg = ExperimentConfig::from_file(&path).map_err(err)?;
    cfg.output_dir = None;
    Ok(cfg.data_path().is_file().then_some(cfg))
}

#[derive(Clone, Copy)]
enum Source {
    Real,
    Surrogate,
}

impl Source {
    fn tag(self) -> &'static str {
        match self {
            Source::Real => "",
            Source::Surrogate => "/surrogate",
        }
    }
}

const MISSING: &str = "UCI files absent from data/raw (scripts/fetch_data.sh)";

fn experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, String> {
    Ok(run_experiment(cfg).map_err(err)?.report)
}

fn accuracy_at(report: &ExperimentReport, rho: f64) -> Result<f64, String> {
    report
        .aggregates
        .iter()
        .find(|a| a.rho == rho)
        .map(|a| 100.0 * a.mean_accuracy)
        .ok_or_else(|| format!("no aggregate for rho {rho}"))
}

fn min_runs(report: &ExperimentReport) -> usize {
    report
        .aggregates
        .iter()
        .map(|a| a.n_runs)
        .min()
        .unwrap_or(0)
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

fn component(
    group: &str,
    class: usize,
    mean: &[f64],
    var: &[f64],
    count: usize,
) -> SyntheticComponent {
    let d = mean.len();
    SyntheticComponent {
        group: group.into(),
        class,
        mean: mean.to_vec(),
        covariance: (0..d)
            .map(|i| (0..d).map(|j| if i == j { var[i] } else { 0.0 }).collect())
            .collect(),
        count,
    }
}

fn sample(components: Vec<SyntheticComponent>, seed: u64) -> Result<TabularDataset, String> {
    let spec = SyntheticSpec {
        dim: components[0].mean.len(),
        num_classes: 2,
        components,
    };
    gen_synthetic(&spec, seed).map_err(err)
}

/// W2 between Gaussians with diagonal covariances.
fn w2_diag(m1: &[f64], v1: &[f64], m2: &[f64], v2: &[f64]) -> f64 {
    let mean: f64 = m1.iter().zip(m2).map(|(a, b)| (a - b).powi(2)).sum();
    let bures: f64 = v1
        .iter()
        .zip(v2)
        .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
        .sum();
    (mean + bures).sqrt()
}

fn metric_view(name: &str) -> Result<TabularDataset, String> {
    let schema = Schema::from_file(data_dir().join(format!("schemas/{name}.toml"))).map_err(err)?;
    let raw = load_csv(data_dir().join(format!("surrogate/{name}.csv")), &schema).map_err(err)?;
    preprocess(&raw, PreprocessOptions::default()).map_err(err)
}

fn zero_case() -> Check {
    let mut cases = vec![
        ("heart", metric_view("heart")?),
        ("students", metric_view("students")?),
        (
            "gauss-3d",
            sample(
                vec![
                    component("g", 0, &[0.0, 1.0, -2.0], &[1.0, 4.0, 0.25], 300),
                    component("g", 1, &[5.0, 0.0, 3.0], &[2.0, 1.0, 9.0], 200),
                ],
                3,
            )?,
        ),
        (
            "tiny",
            sample(
                vec![
                    component("g", 0, &[0.0, 0.0], &[1.0, 1.0], 3),
                    component("g", 1, &[1.0, 1.0], &[1.0, 1.0], 3),
                ],
                4,
            )?,
        ),
    ];
    let scaled = cases[2].1.translated(&[1e6, -1e6, 1e3]).map_err(err)?;
    cases.push(("offset", scaled));
    let mut worst: f64 = 0.0;
    for (_, ds) in &cases {
        worst = worst.max(heterogeneity(ds, ds).map_err(err)?.average);
    }
    Ok(verdict(
        worst <= 1e-9,
        format!(
            "max D(A,A) = {worst:.1e} over {} datasets (≤ 1e-9)",
            cases.len()
        ),
    ))
}

fn oracle() -> Check {
    let n = 5000;
    let mut parts = Vec::new();
    let mut ok = true;
    // (means and variances of A then B, per class)
    let setups: [(&str, [[Vec<f64>; 4]; 2]); 2] = [
        (
            "1-D",
            [
                [vec![0.0], vec![1.0], vec![1.0], vec![4.0]],
                [vec![3.0], vec![1.0], vec![3.0], vec![0.25]],
            ],
        ),
        (
            "5-D",
            [
                [
                    vec![0.0; 5],
                    vec![1.0; 5],
                    vec![0.5; 5],
                    vec![2.0, 1.0, 1.0, 0.5, 1.0],
                ],
                [
                    vec![1.0; 5],
                    vec![1.0, 2.0, 3.0, 1.0, 0.5],
                    vec![1.5, 1.0, 1.0, 1.0, 0.2],
                    vec![1.0, 1.0, 3.0, 2.0, 0.5],
                ],
            ],
        ),
    ];
    for (i, (label, classes)) in setups.iter().enumerate() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut population = 0.0;
        for (k, [ma, va, mb, vb]) in classes.iter().enumerate() {
            a.push(component("a", k, ma, va, n));
            b.push(component("b", k, mb, vb, n));
            population += w2_diag(ma, va, mb, vb) / classes.len() as f64;
        }
        let d = heterogeneity(&sample(a, 10 + i as u64)?, &sample(b, 20 + i as u64)?)
            .map_err(err)?
            .average;
        let rel = (d - population).abs() / population;
        ok &= rel <= 0.10;
        parts.push(format!(
            "{label} D = {d:.4} vs {population:.4} ({:.1}%)",
            100.0 * rel
        ));
    }
    Ok(verdict(ok, parts.join(", ")))
}

fn monotone() -> Check {
    let blocks = |seed| {
        sample(
            vec![
                component("g", 0, &[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], 2000),
                component("g", 1, &[2.0, 2.0, 2.0], &[1.0, 1.0, 1.0], 2000),
            ],
            seed,
        )
    };
    let (a, b) = (blocks(31)?, blocks(32)?);
    let mut values = Vec::new();
    for delta in [0.0, 0.5, 1.0, 2.0] {
        let shifted = b.translated(&[delta, 0.0, 0.0]).map_err(err)?;
        values.push(heterogeneity(&a, &shifted).map_err(err)?.average);
    }
    let ok = values.windows(2).all(|w| w[1] > w[0]);
    let shown: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
    Ok(verdict(
        ok,
        format!("D over δ ∈ {{0, 0.5, 1, 2}} = [{}]", shown.join(", ")),
    ))
}

fn mean_split_heterogeneity(cfg: &ExperimentConfig) -> Result<f64, String> {
    let data = load_prepared(cfg).map_err(err)?;
    let mut total = 0.0;
    for r in 0..cfg.repeats {
        let parts = repeat_split(cfg, &data.model, &RunSeeds::derive(cfg.seed, r)).map_err(err)?;
        total += split_heterogeneity(&data, &parts).map_err(err)?.average;
    }
    Ok(total / cfg.repeats as f64)
}

fn ordering(source: Source) -> Check {
    let pairs = [
        ("students", "students_natural", "students_uniform"),
        ("heart", "heart_natural_rho_sweep", "heart_uniform"),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, natural, uniform) in pairs {
        let (Some(n), Some(u)) = (config(source, natural)?, config(source, uniform)?) else {
            return Ok(skip(MISSING));
        };
        let (dn, du) = (mean_split_heterogeneity(&n)?, mean_split_heterogeneity(&u)?);
        let ratio = dn / du;
        ok &= ratio >= 10.0;
        parts.push(format!("{label} {dn:.2e} vs {du:.2e} ({ratio:.1}x)"));
    }
    Ok(verdict(ok, format!("{} (need ≥ 10x)", parts.join(", "))))
}

fn heart_sweep(source: Source) -> Result<Option<ExperimentReport>, String> {
    match config(source, "heart_natural_rho_sweep")? {
        Some(cfg) => experiment(&cfg).map(Some),
        None => Ok(None),
    }
}

fn gap(report: &ExperimentReport) -> Check {
    let (lo, hi) = (accuracy_at(report, 0.0)?, accuracy_at(report, 1.0)?);
    let runs = min_runs(report);
    let ok = runs >= 10 && hi - lo >= 20.0 && (40.0..=60.0).contains(&lo) && hi >= 75.0;
    Ok(verdict(
        ok,
        format!(
            "acc(ρ=0) = {lo:.2}%, acc(ρ=1) = {hi:.2}%, gap {:.2} pp over {runs} runs \
             (need gap ≥ 20, ρ=0 in [40, 60], ρ=1 ≥ 75)",
            hi - lo
        ),
    ))
}

fn trend(report: &ExperimentReport) -> Check {
    let rhos: Vec<f64> = report.aggregates.iter().map(|a| a.rho).collect();
    let accs: Vec<f64> = report
        .aggregates
        .iter()
        .map(|a| 100.0 * a.mean_accuracy)
        .collect();
    let want = [0.0, 0.25, 0.5, 0.75, 1.0];
    if rhos != want {
        return Ok(verdict(false, format!("rho grid {rhos:?} is not {want:?}")));
    }
    let rs = spearman(&rhos, &accs);
    let ends = accs[accs.len() - 1] > accs[0];
    let shown: Vec<String> = accs.iter().map(|a| format!("{a:.2}")).collect();
    Ok(verdict(
        rs > 0.0 && ends,
        format!("accuracy [{}], spearman {rs:.2}", shown.join(", ")),
    ))
}

fn students(source: Source) -> Check {
    let (Some(u), Some(n)) = (
        config(source, "students_uniform")?,
        config(source, "students_natural")?,
    ) else {
        return Ok(skip(MISSING));
    };
    let (ru, rn) = (experiment(&u)?, experiment(&n)?);
    let (au, an) = (accuracy_at(&ru, 0.0)?, accuracy_at(&rn, 0.0)?);
    let runs = min_runs(&ru).min(min_runs(&rn));
    let ok = runs >= 10 && (50.0..=70.0).contains(&au) && (45.0..=55.0).contains(&an);
    Ok(verdict(
        ok,
        format!(
            "uniform {au:.2}% (need [50, 70]), natural {an:.2}% (need [45, 55]) over {runs} runs"
        ),
    ))
}

fn gradient() -> Check {
    let arch = Architecture::new(5, &[7, 6], 3).map_err(err)?;
    let mut rng = rng_from_seed(11);
    let mut params = init_model(&arch, 4).map_err(err)?;
    for v in params.values_mut() {
        *v += rng.random_range(-0.1..0.1);
    }
    let xs: Vec<Vec<f64>> = (0..8)
        .map(|_| (0..5).map(|_| rng.random_range(-1.5..1.5)).collect())
        .collect();
    let batch: Vec<(&[f64], usize)> = xs
        .iter()
        .enumerate()
        .map(|(i, x)| (x.as_slice(), i % 3))
        .collect();
    let l2 = 0.01;
    let (_, grad) = loss_and_grad(&params, &batch, l2).map_err(err)?;
    let analytic: Vec<f64> = grad.values().copied().collect();
    let shifted = |k: usize, d: f64| {
        let mut p = params.clone();
        *p.values_mut().nth(k).expect("coordinate in range") += d;
        loss_and_grad(&p, &batch, l2).map(|r| r.0)
    };
    let h = 1e-5;
    let coords = 150;
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    for _ in 0..coords {
        let k = rng.random_range(0..params.num_params());
        let numeric = (shifted(k, h).map_err(err)? - shifted(k, -h).map_err(err)?) / (2.0 * h);
        let scale = analytic[k].abs().max(numeric.abs());
        let diff = (analytic[k] - numeric).abs();
        if diff > 1e-4 * scale + 1e-8 {
            bad += 1;
        }
        if scale > 1e-8 {
            worst = worst.max(diff / scale);
        }
    }
    Ok(verdict(
        bad == 0,
        format!("{coords} coordinates, max relative error {worst:.1e}, {bad} outside 1e-4"),
    ))
}

fn fedavg() -> Check {
    let arch = Architecture::new(2, &[], 2).map_err(err)?;
    let params = |v: &[f64]| -> Result<ModelParams, String> {
        let mut p = ModelParams::zeros(&arch).map_err(err)?;
        for (dst, x) in p.values_mut().zip(v) {
            *dst = *x;
        }
        Ok(p)
    };
    let values = |p: &ModelParams| p.values().copied().collect::<Vec<f64>>();
    let pv = [1.0, 2.0, -3.0, 0.5, 4.0, 6.0];
    let qv = [3.0, -2.0, 7.0, 0.25, 1.0, 10.0];
    let (p, q) = (params(&pv)?, params(&qv)?);
    let same = aggregate(&[p.clone(), p.clone(), p.clone()], &[3, 1, 7]).map_err(err)?;
    let half = aggregate(&[p.clone(), q.clone()], &[5, 5]).map_err(err)?;
    let quarter = aggregate(&[p.clone(), q.clone()], &[1, 3]).map_err(err)?;
    let mid: Vec<f64> = pv.iter().zip(&qv).map(|(a, b)| (a + b) / 2.0).collect();
    let weighted: Vec<f64> = pv
        .iter()
        .zip(&qv)
        .map(|(a, b)| (a + 3.0 * b) / 4.0)
        .collect();
    let exact = values(&same) == pv && values(&half) == mid && values(&quarter) == weighted;

    let spec = SyntheticSpec::isotropic(
        3,
        2,
        &[
            ("a", 0, vec![0.0, 0.0, 0.0], 1.0, 40),
            ("b", 1, vec![1.0, 1.0, 0.0], 1.0, 41),
        ],
    );
    let ds = gen_synthetic(&spec, 17).map_err(err)?;
    let rows: Vec<usize> = (0..ds.len()).collect();
    let cfg = FlConfig {
        clients: 1,
        rounds: 4,
        local_epochs: 3,
        hidden: vec![8],
        learning_rate: 0.1,
        batch_size: 5,
        seed: 99,
        ..FlConfig::default()
    };
    let snaps = run_rounds(&ds, &rows, &cfg, 7).map_err(err)?;
    let net = cfg.architecture(ds.dim(), ds.num_classes()).map_err(err)?;
    let mut central_cfg = cfg.client_train_config(0);
    central_cfg.epochs = cfg.rounds * cfg.local_epochs;
    let (central, _) =
        train(init_model(&net, 7).map_err(err)?, &ds, &rows, &central_cfg).map_err(err)?;
    let bits = |p: &ModelParams| p.values().map(|v| v.to_bits()).collect::<Vec<_>>();
    let fl = &snaps.last().ok_or("no snapshots")?.params;
    let identical = bits(fl) == bits(&central);
    Ok(verdict(
        exact && identical,
        format!("aggregation exact: {exact}, single-client bit-identical: {identical}"),
    ))
}

fn null_attack(source: Source) -> Check {
    let Some(mut cfg) = config(source, "heart_uniform")? else {
        return Ok(skip(MISSING));
    };
    cfg.null_target = true;
    cfg.repeats = 30;
    cfg.rhos = vec![0.0];
    let report = experiment(&cfg)?;
    let acc = accuracy_at(&report, 0.0)?;
    let runs = min_runs(&report);
    Ok(verdict(
        runs >= 30 && (40.0..=60.0).contains(&acc),
        format!("untrained target, {runs} seeds: mean accuracy {acc:.2}% (need [40, 60])"),
    ))
}

fn determinism(source: Source) -> Check {
    let Some(mut cfg) = config(source, "heart_natural_rho_sweep")? else {
        return Ok(skip(MISSING));
    };
    let dir = tempfile::tempdir().map_err(err)?;
    cfg.output_dir = Some(dir.path().to_path_buf());
    let read = |p: &Path| std::fs::read(p.join("report.json")).map_err(err);
    run_experiment(&cfg).map_err(err)?;
    let first = read(dir.path())?;
    run_experiment(&cfg).map_err(err)?;
    let second = read(dir.path())?;
    Ok(verdict(
        first == second,
        format!(
            "report.json {} bytes, identical: {}",
            first.len(),
            first == second
        ),
    ))
}

fn main() {
    let mut h = Harness { failures: 0 };
    h.run("1", "metric zero case", secs(1), zero_case);
    h.run("2", "metric oracle", secs(10), oracle);
    h.run("3", "metric monotonicity", secs(10), monotone);
    for source in [Source::Real, Source::Surrogate] {
        let tag = source.tag();
        h.run(
            &format!("4{tag}"),
            "heterogeneity ordering",
            secs(30),
            || ordering(source),
        );

        let start = Instant::now();
        let sweep = catch_unwind(AssertUnwindSafe(|| heart_sweep(source)))
            .unwrap_or_else(|_| Err("panicked".into()));
        let sweep_time = start.elapsed();
        let with_sweep = |f: fn(&ExperimentReport) -> Check| {
            let sweep = &sweep;
            move || match sweep {
                Ok(Some(r)) => f(r),
                Ok(None) => Ok(skip(MISSING)),
                Err(e) => Err(e.clone()),
            }
        };
        // both criteria read the same sweep; its runtime is charged to each
        h.run_after(
            &format!("5{tag}"),
            "two vs three distribution gap",
            secs(600),
            sweep_time,
            with_sweep(gap),
        );
        h.run_after(
            &format!("6{tag}"),
            "accuracy trend over rho",
            secs(1200),
            sweep_time,
            with_sweep(trend),
        );

        h.run(
            &format!("7{tag}"),
            "students accuracy ranges",
            secs(600),
            || students(source),
        );
    }
    h.run("8", "gradient check", secs(5), gradient);
    h.run("9", "fedavg oracles", secs(10), fedavg);
    h.run("10/surrogate", "null-attack calibration", secs(300), || {
        null_attack(Source::Surrogate)
    });
    if config(Source::Real, "heart_uniform")
        .ok()
        .flatten()
        .is_some()
    {
        h.run("10", "null-attack calibration", secs(300), || {
            null_attack(Source::Real)
        });
    }
    h.run("11/surrogate", "report determinism", None, || {
        determinism(Source::Surrogate)
    });
    if config(Source::Real, "heart_natural_rho_sweep")
        .ok()
        .flatten()
        .is_some()
    {
        h.run("11", "report determinism", None, || {
            determinism(Source::Real)
        });
    }

    println!("{} criteria failed", h.failures);
    if h.failures > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
