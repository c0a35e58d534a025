//! Labeled tabular datasets: CSV ingestion under a schema, preprocessing,
//! and synthetic generators.

mod load;
mod preprocess;
mod schema;
pub mod surrogate;
mod synthetic;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use load::{load_csv, load_csv_aligned, load_csv_str, RawColumn, RawDataset, RawValues};
pub use preprocess::{preprocess, PreprocessOptions};
pub use schema::{ColumnKind, ColumnSpec, LabelRule, Schema, ThresholdOp};
pub use synthetic::{gen_synthetic, SyntheticComponent, SyntheticSpec};

/// Preprocessed feature matrix with integer labels and optional groups.
///
/// Features are stored row-major. Group identifiers are indices into
/// `group_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    features: Vec<f64>,
    n: usize,
    d: usize,
    labels: Vec<usize>,
    groups: Option<Vec<usize>>,
    group_names: Vec<String>,
    feature_names: Vec<String>,
    class_names: Vec<String>,
    /// Column ranges `[start, end)` that hold one-hot blocks.
    onehot_blocks: Vec<(usize, usize)>,
}

/// Sidecar metadata written next to an exported dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub rows: usize,
    pub feature_names: Vec<String>,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub group_names: Vec<String>,
    pub onehot_blocks: Vec<(usize, usize)>,
    pub class_counts: BTreeMap<usize, usize>,
}

impl TabularDataset {
    /// Builds a dataset from row-major features and validates every invariant.
    pub fn new(
        features: Vec<f64>,
        d: usize,
        labels: Vec<usize>,
        groups: Option<Vec<usize>>,
        group_names: Vec<String>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        Self::with_blocks(
            features,
            d,
            labels,
            groups,
            group_names,
            feature_names,
            class_names,
            Vec::new(),
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn with_blocks(
        features: Vec<f64>,
        d: usize,
        labels: Vec<usize>,
        groups: Option<Vec<usize>>,
        group_names: Vec<String>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
        onehot_blocks: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let n = labels.len();
        let ds = TabularDataset {
            features,
            n,
            d,
            labels,
            groups,
            group_names,
            feature_names,
            class_names,
            onehot_blocks,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Checks all dataset invariants.
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Data("dataset has no feature columns".into()));
        }
        if self.features.len() != self.n * self.d {
            return Err(Error::Dimension {
                expected: self.n * self.d,
                actual: self.features.len(),
            });
        }
        if self.feature_names.len() != self.d {
            return Err(Error::Dimension {
                expected: self.d,
                actual: self.feature_names.len(),
            });
        }
        if self.class_names.len() < 2 {
            return Err(Error::Data(format!(
                "need at least 2 classes, got {}",
                self.class_names.len()
            )));
        }
        if let Some(i) = self.features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Row {
                row: i / self.d,
                message: format!(
                    "non-finite value in feature '{}'",
                    self.feature_names[i % self.d]
                ),
            });
        }
        let k = self.class_names.len();
        if let Some(row) = self.labels.iter().position(|&y| y >= k) {
            return Err(Error::Row {
                row,
                message: format!("label {} outside [0, {k})", self.labels[row]),
            });
        }
        if let Some(groups) = &self.groups {
            if groups.len() != self.n {
                return Err(Error::Dimension {
                    expected: self.n,
                    actual: groups.len(),
                });
            }
            if let Some(row) = groups.iter().position(|&g| g >= self.group_names.len()) {
                return Err(Error::Row {
                    row,
                    message: "group id outside the group vocabulary".into(),
                });
            }
        }
        for &(start, end) in &self.onehot_blocks {
            if start >= end || end > self.d {
                return Err(Error::Data(format!("bad one-hot block [{start}, {end})")));
            }
            for i in 0..self.n {
                let s: f64 = self.row(i)[start..end].iter().sum();
                if s != 1.0 {
                    return Err(Error::Row {
                        row: i,
                        message: format!(
                            "one-hot block '{}' sums to {s}",
                            self.feature_names[start]
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn groups(&self) -> Option<&[usize]> {
        self.groups.as_deref()
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn onehot_blocks(&self) -> &[(usize, usize)] {
        &self.onehot_blocks
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.group_names.iter().position(|g| g == name)
    }

    /// Row indices whose group is one of `group_ids`, ascending.
    pub fn rows_in_groups(&self, group_ids: &[usize]) -> Vec<usize> {
        match &self.groups {
            Some(groups) => (0..self.n)
                .filter(|&i| group_ids.contains(&groups[i]))
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn class_count(&self, class: usize) -> usize {
        self.labels.iter().filter(|&&y| y == class).count()
    }

    /// New dataset holding `rows` in the given order. Vocabularies and
    /// feature layout are preserved.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(rows.len() * self.d);
        for &i in rows {
            if i >= self.n {
                return Err(Error::Data(format!(
                    "row index {i} out of range ({})",
                    self.n
                )));
            }
            features.extend_from_slice(self.row(i));
        }
        Ok(TabularDataset {
            features,
            n: rows.len(),
            d: self.d,
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            groups: self
                .groups
                .as_ref()
                .map(|g| rows.iter().map(|&i| g[i]).collect()),
            group_names: self.group_names.clone(),
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            onehot_blocks: self.onehot_blocks.clone(),
        })
    }

    /// Returns a copy with `shift` added to every row.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.d {
            return Err(Error::Dimension {
                expected: self.d,
                actual: shift.len(),
            });
        }
        let mut out = self.clone();
        for row in out.features.chunks_mut(self.d) {
            for (v, s) in row.iter_mut().zip(shift) {
                *v += s;
            }
        }
        // a shifted one-hot block no longer sums to 1
        out.onehot_blocks.clear();
        Ok(out)
    }

    pub fn metadata(&self) -> DatasetMetadata {
        let mut class_counts = BTreeMap::new();
        for k in 0..self.num_classes() {
            class_counts.insert(k, self.class_count(k));
        }
        DatasetMetadata {
            rows: self.n,
            feature_names: self.feature_names.clone(),
            num_classes: self.num_classes(),
            class_names: self.class_names.clone(),
            group_names: self.group_names.clone(),
            onehot_blocks: self.onehot_blocks.clone(),
            class_counts,
        }
    }

    /// Columnar CSV text: `label`, optional `group`, then features.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["label".to_string()];
        if self.groups.is_some() {
            header.push("group".to_string());
        }
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n {
            let mut rec = vec![self.labels[i].to_string()];
            if let Some(groups) = &self.groups {
                rec.push(self.group_names[groups[i]].clone());
            }
            rec.extend(self.row(i).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Data(format!("csv buffer: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes [`Self::to_csv_string`] to `path` and a `<stem>.meta.json`
    /// sidecar.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()?).map_err(|e| Error::io(path, e))?;
        let meta_path = path.with_extension("meta.json");
        let meta = serde_json::to_string_pretty(&self.metadata())?;
        std::fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TabularDataset {
        TabularDataset::with_blocks(
            vec![1.0, 0.0, 0.5, 0.0, 1.0, 1.5, 1.0, 0.0, 2.5],
            3,
            vec![0, 1, 1],
            Some(vec![0, 1, 0]),
            vec!["a".into(), "b".into()],
            vec!["c=x".into(), "c=y".into(), "v".into()],
            vec!["neg".into(), "pos".into()],
            vec![(0, 2)],
        )
        .unwrap()
    }

    #[test]
    fn subset_preserves_layout() {
        let ds = tiny();
        let sub = ds.subset(&[2, 0]).unwrap();
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.row(0), &[1.0, 0.0, 2.5]);
        assert_eq!(sub.labels(), &[1, 0]);
        assert_eq!(sub.groups().unwrap(), &[0, 0]);
        assert_eq!(sub.dim(), ds.dim());
        assert!(ds.subset(&[3]).is_err());
    }

    #[test]
    fn rejects_broken_invariants() {
        let bad_label = TabularDataset::new(
            vec![0.0, 1.0],
            1,
            vec![0, 2],
            None,
            vec![],
            vec!["x".into()],
            vec!["a".into(), "b".into()],
        );
        assert!(matches!(bad_label, Err(Error::Row { row: 1, .. })));

        let nan = TabularDataset::new(
            vec![0.0, f64::NAN],
            1,
            vec![0, 1],
            None,
            vec![],
            vec!["x".into()],
            vec!["a".into(), "b".into()],
        );
        assert!(nan.is_err());

        let one_class = TabularDataset::new(
            vec![0.0],
            1,
            vec![0],
            None,
            vec![],
            vec!["x".into()],
            vec!["a".into()],
        );
        assert!(one_class.is_err());
    }

    #[test]
    fn groups_and_counts() {
        let ds = tiny();
        assert_eq!(ds.rows_in_groups(&[0]), vec![0, 2]);
        assert_eq!(ds.group_index("b"), Some(1));
        assert_eq!(ds.class_count(1), 2);
        assert_eq!(ds.metadata().class_counts[&0], 1);
    }

    #[test]
    fn csv_export_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        tiny().write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("label,group,c=x,c=y,v"));
        let meta: DatasetMetadata = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("out.meta.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(meta.rows, 3);
        assert_eq!(meta.group_names, vec!["a", "b"]);
    }
}
