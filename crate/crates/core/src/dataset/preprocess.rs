use serde::{Deserialize, Serialize};

use super::load::{RawDataset, RawValues};
use super::TabularDataset;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PreprocessOptions {
    /// Shift/scale numeric columns to mean 0, variance 1.
    #[serde(default)]
    pub standardize: bool,
}

/// Encodes a raw dataset into a numeric feature matrix.
///
/// Categorical columns are one-hot expanded in vocabulary order; columns keep
/// schema order. Standardization uses the population convention (divide by
/// n) over the rows given; a constant column is centered and left unscaled.
pub fn preprocess(raw: &RawDataset, options: PreprocessOptions) -> Result<TabularDataset> {
    let n = raw.len();
    let mut names = Vec::new();
    let mut blocks = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();

    for col in &raw.columns {
        match &col.values {
            RawValues::Numeric(values) => {
                let mut values = values.clone();
                if options.standardize && n > 0 {
                    standardize(&mut values);
                }
                names.push(col.name.clone());
                columns.push(values);
            }
            RawValues::Categorical { vocab, codes } => {
                let start = columns.len();
                for (c, value) in vocab.iter().enumerate() {
                    names.push(format!("{}={}", col.name, value));
                    columns.push(
                        codes
                            .iter()
                            .map(|&k| if k == c { 1.0 } else { 0.0 })
                            .collect(),
                    );
                }
                blocks.push((start, columns.len()));
            }
        }
    }

    let d = columns.len();
    let mut features = Vec::with_capacity(n * d);
    for i in 0..n {
        features.extend(columns.iter().map(|c| c[i]));
    }
    TabularDataset::with_blocks(
        features,
        d,
        raw.labels.clone(),
        raw.groups.clone(),
        raw.group_names.clone(),
        names,
        raw.class_names.clone(),
        blocks,
    )
}

fn standardize(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
    for v in values.iter_mut() {
        *v = (*v - mean) * scale;
    }
}

#[cfg(test)]
mod tests {
    use super::super::{load_csv_str, Schema};
    use super::*;

    fn schema() -> Schema {
        Schema::from_toml_str(
            r#"
label_column = "y"
positive_label_name = "one"
[label_rule]
kind = "threshold"
op = ">"
threshold = 0.0
[[columns]]
name = "sex"
kind = "categorical"
[[columns]]
name = "v"
kind = "numeric"
"#,
        )
        .unwrap()
    }

    const CSV: &str = "sex,v,y\nF,0,0\nM,2,1\nF,2,1\nM,0,0\n";

    #[test]
    fn one_hot_rows_sum_to_one() {
        let raw = load_csv_str(CSV, &schema()).unwrap();
        let ds = preprocess(&raw, PreprocessOptions::default()).unwrap();
        assert_eq!(ds.feature_names(), &["sex=F", "sex=M", "v"]);
        for i in 0..ds.len() {
            assert_eq!(ds.row(i)[0] + ds.row(i)[1], 1.0);
        }
        assert_eq!(ds.onehot_blocks(), &[(0, 2)]);
    }

    #[test]
    fn standardize_zero_two_gives_minus_plus_one() {
        let raw = load_csv_str(CSV, &schema()).unwrap();
        let ds = preprocess(&raw, PreprocessOptions { standardize: true }).unwrap();
        let v: Vec<f64> = (0..ds.len()).map(|i| ds.row(i)[2]).collect();
        assert_eq!(v, vec![-1.0, 1.0, 1.0, -1.0]);
        // one-hot columns are never scaled
        assert_eq!(ds.row(0)[0], 1.0);
    }

    #[test]
    fn raw_magnitudes_kept_without_standardize() {
        let raw = load_csv_str("sex,v,y\nF,233,0\nM,354,1\n", &schema()).unwrap();
        let ds = preprocess(&raw, PreprocessOptions::default()).unwrap();
        assert_eq!(ds.row(1)[2], 354.0);
    }

    #[test]
    fn dimension_independent_of_row_subset() {
        let raw = load_csv_str(CSV, &schema()).unwrap();
        let full = preprocess(&raw, PreprocessOptions::default()).unwrap();
        // only 'F' rows: 'sex=M' column still present
        let part = preprocess(&raw.select(&[0, 2]), PreprocessOptions::default()).unwrap();
        assert_eq!(part.dim(), full.dim());
        assert_eq!(part.row(0), full.row(0));
    }

    #[test]
    fn idempotent_without_standardize() {
        let raw = load_csv_str(CSV, &schema()).unwrap();
        let once = preprocess(&raw, PreprocessOptions::default()).unwrap();
        let twice = preprocess(
            &RawDataset::from_tabular(&once),
            PreprocessOptions::default(),
        )
        .unwrap();
        assert_eq!(once.features(), twice.features());
        assert_eq!(once.feature_names(), twice.feature_names());
    }
}
