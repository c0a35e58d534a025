use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::TabularDataset;
use crate::error::{Error, Result};
use crate::metric::linalg;
use crate::rng::rng_from_seed;

/// One (group, class) Gaussian block of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticComponent {
    #[serde(default = "default_group")]
    pub group: String,
    pub class: usize,
    pub mean: Vec<f64>,
    /// Row-major covariance rows.
    pub covariance: Vec<Vec<f64>>,
    pub count: usize,
}

fn default_group() -> String {
    "g0".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub num_classes: usize,
    pub components: Vec<SyntheticComponent>,
}

impl SyntheticSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SyntheticSpec = toml::from_str(text)
            .map_err(|e| Error::Config(format!("invalid synthetic spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Spec with isotropic blocks `N(mean, var·I)`, one per (group, class, mean, var, count).
    pub fn isotropic(
        dim: usize,
        num_classes: usize,
        blocks: &[(&str, usize, Vec<f64>, f64, usize)],
    ) -> Self {
        let components = blocks
            .iter()
            .map(|(group, class, mean, var, count)| SyntheticComponent {
                group: group.to_string(),
                class: *class,
                mean: mean.clone(),
                covariance: (0..dim)
                    .map(|i| (0..dim).map(|j| if i == j { *var } else { 0.0 }).collect())
                    .collect(),
                count: *count,
            })
            .collect();
        SyntheticSpec {
            dim,
            num_classes,
            components,
        }
    }

    fn covariance_matrix(&self, c: &SyntheticComponent) -> Result<DMatrix<f64>> {
        if c.covariance.len() != self.dim || c.covariance.iter().any(|r| r.len() != self.dim) {
            return Err(Error::Config(format!(
                "component (group {}, class {}) covariance is not {}x{}",
                c.group, c.class, self.dim, self.dim
            )));
        }
        Ok(DMatrix::from_fn(self.dim, self.dim, |i, j| {
            c.covariance[i][j]
        }))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("synthetic dimension must be ≥ 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("synthetic spec needs ≥ 2 classes".into()));
        }
        for c in &self.components {
            if c.count == 0 {
                return Err(Error::Config(format!(
                    "component (group {}, class {}) has count 0",
                    c.group, c.class
                )));
            }
            if c.class >= self.num_classes {
                return Err(Error::Config(format!("class {} out of range", c.class)));
            }
            if c.mean.len() != self.dim {
                return Err(Error::Dimension {
                    expected: self.dim,
                    actual: c.mean.len(),
                });
            }
            let cov = self.covariance_matrix(c)?;
            if !linalg::is_psd(&cov)? {
                return Err(Error::Numerical(format!(
                    "component (group {}, class {}) covariance is not positive semi-definite",
                    c.group, c.class
                )));
            }
        }
        Ok(())
    }
}

/// Draws every component's rows from its Gaussian, in spec order.
///
/// Sampling uses x = m + S·z with S the symmetric square root of the
/// covariance and z standard normal, so zero-variance directions are exact.
pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<TabularDataset> {
    spec.validate()?;
    let d = spec.dim;
    let group_names: Vec<String> = spec
        .components
        .iter()
        .map(|c| c.group.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut rng = rng_from_seed(seed);
    let total: usize = spec.components.iter().map(|c| c.count).sum();
    let mut features = Vec::with_capacity(total * d);
    let mut labels = Vec::with_capacity(total);
    let mut groups = Vec::with_capacity(total);

    for c in &spec.components {
        let root = linalg::sqrt_spd(&spec.covariance_matrix(c)?)?;
        let mean = DVector::from_row_slice(&c.mean);
        let g = group_names.iter().position(|g| *g == c.group).unwrap();
        for _ in 0..c.count {
            let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let x = &mean + &root * z;
            features.extend(x.iter());
            labels.push(c.class);
            groups.push(g);
        }
    }

    TabularDataset::new(
        features,
        d,
        labels,
        Some(groups),
        group_names,
        (0..d).map(|j| format!("x{j}")).collect(),
        (0..spec.num_classes).map(|k| format!("class{k}")).collect(),
    )
}
