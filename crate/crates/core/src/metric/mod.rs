//! Data-heterogeneity metric between two labeled datasets.
//!
//! Each class of each dataset is replaced by a Gaussian with the same mean and
//! covariance. Per class, the 2-Wasserstein distance between the two Gaussians
//! has the closed form
//!
//! ```text
//! W2² = ‖m_a − m_b‖² + tr(C_a + C_b − 2 (C_a^½ C_b C_a^½)^½)
//! ```
//!
//! and the metric is the arithmetic mean of W2 over the classes present in
//! both datasets. Classes are always paired with themselves (class k of one
//! dataset against class k of the other).

pub mod linalg;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};

pub use linalg::sqrt_spd;

/// Relative size of the ridge added to class covariances.
pub const RIDGE_FACTOR: f64 = 1e-6;
/// Lower bound on the diagonal scale used for the ridge.
pub const RIDGE_SCALE_FLOOR: f64 = 1e-12;

/// Relative size below which the Bures term is treated as round-off.
pub const BURES_ROUNDOFF: f64 = 1e-12;
pub const BASE_DISTANCE_NAME: &str = "wasserstein-2 (gaussian proxy)";

/// Moment-matched Gaussian standing in for one class of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianProxy {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    sample_count: usize,
}

impl GaussianProxy {
    /// Symmetrizes `covariance` on construction.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>, sample_count: usize) -> Result<Self> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(Error::Dimension {
                expected: mean.len(),
                actual: covariance.nrows(),
            });
        }
        Ok(GaussianProxy {
            covariance: linalg::symmetrize(&covariance),
            mean,
            sample_count,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn total_cmp(&self, other: &Self) -> Ordering {
        self.mean
            .iter()
            .chain(self.covariance.iter())
            .zip(other.mean.iter().chain(other.covariance.iter()))
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

/// Sample mean and (n−1) covariance of one class, plus a ridge
/// ε·I with ε = 1e−6 · max(mean diagonal, 1e−12).
pub fn estimate_proxy(ds: &TabularDataset, class: usize) -> Result<GaussianProxy> {
    let d = ds.dim();
    if d == 0 {
        return Err(Error::Data(
            "cannot estimate a proxy in 0 dimensions".into(),
        ));
    }
    let rows: Vec<usize> = (0..ds.len()).filter(|&i| ds.label(i) == class).collect();
    let n = rows.len();
    if n < 2 {
        return Err(Error::Class {
            class,
            message: format!("needs at least 2 samples to estimate a covariance, has {n}"),
        });
    }

    let mut mean = DVector::<f64>::zeros(d);
    for &i in &rows {
        for (m, x) in mean.iter_mut().zip(ds.row(i)) {
            *m += x;
        }
    }
    mean /= n as f64;

    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for &i in &rows {
        for ((c, x), m) in centered.iter_mut().zip(ds.row(i)).zip(mean.iter()) {
            *c = x - m;
        }
        for a in 0..d {
            let ca = centered[a];
            if ca == 0.0 {
                continue;
            }
            for b in a..d {
                cov[(a, b)] += ca * centered[b];
            }
        }
    }
    cov /= (n - 1) as f64;
    for a in 0..d {
        for b in 0..a {
            cov[(a, b)] = cov[(b, a)];
        }
    }

    let diag_scale = cov.diagonal().iter().map(|v| v.abs()).sum::<f64>() / d as f64;
    let eps = RIDGE_FACTOR * diag_scale.max(RIDGE_SCALE_FLOOR);
    for a in 0..d {
        cov[(a, a)] += eps;
    }
    GaussianProxy::new(mean, cov, n)
}

/// Squared closed-form 2-Wasserstein distance between two Gaussians.
///
/// The arguments are put in a canonical order first, so the result is
/// bit-identical under swapping. A covariance term at or below
/// [`BURES_ROUNDOFF`] times the summed traces is round-off and becomes 0.
pub fn w2_squared_gaussian(p: &GaussianProxy, q: &GaussianProxy) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::Dimension {
            expected: p.dim(),
            actual: q.dim(),
        });
    }
    let (p, q) = if p.total_cmp(q).is_gt() {
        (q, p)
    } else {
        (p, q)
    };

    let mean_term: f64 = p
        .mean
        .iter()
        .zip(q.mean.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();

    // tr (√P Q √P)^½ is the nuclear norm of √P √Q; this avoids squaring the condition number
    let root_p = sqrt_spd(&p.covariance)?;
    let root_q = sqrt_spd(&q.covariance)?;
    let fidelity: f64 = (&root_p * &root_q).singular_values().iter().sum();
    let bures = p.covariance.trace() + q.covariance.trace() - 2.0 * fidelity;

    let floor = BURES_ROUNDOFF * (p.covariance.trace() + q.covariance.trace());
    Ok(mean_term + if bures > floor { bures } else { 0.0 })
}

/// Closed-form 2-Wasserstein distance between two Gaussians.
pub fn w2_gaussian(p: &GaussianProxy, q: &GaussianProxy) -> Result<f64> {
    Ok(w2_squared_gaussian(p, q)?.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedClass {
    pub class: usize,
    pub count_a: usize,
    pub count_b: usize,
    pub reason: String,
}

/// Per-class distances and their average (the heterogeneity value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityReport {
    pub per_class_distance: BTreeMap<usize, f64>,
    /// W2² per class, for diagnostics.
    pub per_class_squared: BTreeMap<usize, f64>,
    /// Mean W2 over included classes.
    pub average: f64,
    /// Mean W2² over included classes.
    pub average_squared: f64,
    /// (count in A, count in B) for every class of either dataset.
    pub per_class_counts: BTreeMap<usize, (usize, usize)>,
    pub skipped_classes: Vec<SkippedClass>,
    pub warnings: Vec<String>,
    pub base_distance_name: String,
}

impl HeterogeneityReport {
    pub fn summary(&self) -> String {
        let classes: Vec<String> = self
            .per_class_distance
            .iter()
            .map(|(k, v)| format!("class {k}: {v:.4e}"))
            .collect();
        format!(
            "heterogeneity D = {:.4e} over {} class(es) [{}]{}",
            self.average,
            self.per_class_distance.len(),
            classes.join(", "),
            if self.skipped_classes.is_empty() {
                String::new()
            } else {
                format!("; {} class(es) skipped", self.skipped_classes.len())
            }
        )
    }
}

/// Minimum per-side sample count for a class to be included: max(2, ⌈d/10⌉).
pub fn min_class_samples(dim: usize) -> usize {
    2usize.max(dim.div_ceil(10))
}

/// Heterogeneity between two datasets over a shared feature space.
///
/// Classes are visited in ascending order. A class is included when both
/// datasets hold at least [`min_class_samples`] rows of it; others are
/// reported in `skipped_classes`. A warning is attached when a class has
/// fewer rows than dimensions (rank-deficient covariance).
pub fn heterogeneity(a: &TabularDataset, b: &TabularDataset) -> Result<HeterogeneityReport> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let d = a.dim();
    let min_samples = min_class_samples(d);
    let k = a.num_classes().max(b.num_classes());

    let mut report = HeterogeneityReport {
        per_class_distance: BTreeMap::new(),
        per_class_squared: BTreeMap::new(),
        average: 0.0,
        average_squared: 0.0,
        per_class_counts: BTreeMap::new(),
        skipped_classes: Vec::new(),
        warnings: Vec::new(),
        base_distance_name: BASE_DISTANCE_NAME.to_string(),
    };

    for class in 0..k {
        let (na, nb) = (a.class_count(class), b.class_count(class));
        if na == 0 && nb == 0 {
            continue;
        }
        report.per_class_counts.insert(class, (na, nb));
        if na < min_samples || nb < min_samples {
            let reason = if na == 0 || nb == 0 {
                "class present in only one dataset".to_string()
            } else {
                format!("fewer than {min_samples} samples on one side")
            };
            log::warn!("skipping class {class}: {reason} ({na} vs {nb})");
            report.skipped_classes.push(SkippedClass {
                class,
                count_a: na,
                count_b: nb,
                reason,
            });
            continue;
        }
        if na < d || nb < d {
            report.warnings.push(format!(
                "class {class}: {} samples for {d} dimensions, covariance is rank-deficient",
                na.min(nb)
            ));
        }
        let sq = w2_squared_gaussian(&estimate_proxy(a, class)?, &estimate_proxy(b, class)?)?;
        report.per_class_squared.insert(class, sq);
        report.per_class_distance.insert(class, sq.sqrt());
    }

    let m = report.per_class_distance.len();
    if m == 0 {
        return Err(Error::Data(
            "no class has enough samples in both datasets".into(),
        ));
    }
    report.average = report.per_class_distance.values().sum::<f64>() / m as f64;
    report.average_squared = report.per_class_squared.values().sum::<f64>() / m as f64;
    Ok(report)
}
