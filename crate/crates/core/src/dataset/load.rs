use std::collections::{BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use super::schema::{ColumnKind, LabelRule, Schema, ThresholdOp};
use super::TabularDataset;
use crate::error::{Error, Result};

/// Column values before encoding.
#[derive(Debug, Clone, PartialEq)]
pub enum RawValues {
    Numeric(Vec<f64>),
    /// Category codes index into `vocab`, which is in encoding order.
    Categorical {
        vocab: Vec<String>,
        codes: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawColumn {
    pub name: String,
    pub values: RawValues,
}

/// A loaded but not yet encoded dataset. Feature columns keep schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub columns: Vec<RawColumn>,
    pub labels: Vec<usize>,
    pub groups: Option<Vec<usize>>,
    pub group_names: Vec<String>,
    pub class_names: Vec<String>,
    /// Rows skipped because a used cell was missing.
    pub dropped_rows: usize,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Keeps only `rows`, preserving vocabularies.
    pub fn select(&self, rows: &[usize]) -> RawDataset {
        let columns = self
            .columns
            .iter()
            .map(|c| RawColumn {
                name: c.name.clone(),
                values: match &c.values {
                    RawValues::Numeric(v) => {
                        RawValues::Numeric(rows.iter().map(|&i| v[i]).collect())
                    }
                    RawValues::Categorical { vocab, codes } => RawValues::Categorical {
                        vocab: vocab.clone(),
                        codes: rows.iter().map(|&i| codes[i]).collect(),
                    },
                },
            })
            .collect();
        RawDataset {
            columns,
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            groups: self
                .groups
                .as_ref()
                .map(|g| rows.iter().map(|&i| g[i]).collect()),
            group_names: self.group_names.clone(),
            class_names: self.class_names.clone(),
            dropped_rows: 0,
        }
    }

    /// Stacks datasets loaded against one schema with shared vocabularies
    /// (as returned by [`load_csv_aligned`]).
    pub fn concat(parts: &[RawDataset]) -> Result<RawDataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Data("nothing to concatenate".into()))?;
        let mut out = first.clone();
        for part in &parts[1..] {
            if part.columns.len() != out.columns.len()
                || part.group_names != out.group_names
                || part.class_names != out.class_names
            {
                return Err(Error::Data("datasets do not share a layout".into()));
            }
            for (dst, src) in out.columns.iter_mut().zip(&part.columns) {
                match (&mut dst.values, &src.values) {
                    (RawValues::Numeric(a), RawValues::Numeric(b)) => a.extend_from_slice(b),
                    (
                        RawValues::Categorical {
                            vocab: va,
                            codes: a,
                        },
                        RawValues::Categorical {
                            vocab: vb,
                            codes: b,
                        },
                    ) if va == vb => a.extend_from_slice(b),
                    _ => {
                        return Err(Error::Data(format!(
                            "column '{}' differs between datasets",
                            dst.name
                        )))
                    }
                }
            }
            out.labels.extend_from_slice(&part.labels);
            out.groups = match (out.groups.take(), &part.groups) {
                (Some(mut a), Some(b)) => {
                    a.extend_from_slice(b);
                    Some(a)
                }
                _ => None,
            };
            out.dropped_rows += part.dropped_rows;
        }
        Ok(out)
    }

    /// Views an encoded dataset as all-numeric raw columns.
    pub fn from_tabular(ds: &TabularDataset) -> RawDataset {
        let columns = (0..ds.dim())
            .map(|j| RawColumn {
                name: ds.feature_names()[j].clone(),
                values: RawValues::Numeric((0..ds.len()).map(|i| ds.row(i)[j]).collect()),
            })
            .collect();
        RawDataset {
            columns,
            labels: ds.labels().to_vec(),
            groups: ds.groups().map(|g| g.to_vec()),
            group_names: ds.group_names().to_vec(),
            class_names: ds.class_names().to_vec(),
            dropped_rows: 0,
        }
    }
}

enum Cell {
    Num(f64),
    Cat(String),
}

struct ParsedTable {
    cells: Vec<Vec<Cell>>,
    labels: Vec<usize>,
    groups: Option<Vec<String>>,
    dropped: usize,
}

fn parse_table<R: Read>(reader: R, schema: &Schema, source: &str) -> Result<ParsedTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter.as_bytes()[0])
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let find = |name: &str| {
        position
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in {source}")))
    };

    let features: Vec<(usize, ColumnKind)> = schema
        .feature_columns()
        .map(|c| find(&c.name).map(|i| (i, c.kind)))
        .collect::<Result<_>>()?;
    for c in schema.columns.iter().filter(|c| c.kind == ColumnKind::Drop) {
        find(&c.name)?;
    }
    let label_idx = find(&schema.label_column)?;
    let group_idx = schema.group_column.as_deref().map(find).transpose()?;

    let mut table = ParsedTable {
        cells: Vec::new(),
        labels: Vec::new(),
        groups: group_idx.map(|_| Vec::new()),
        dropped: 0,
    };

    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record?;
        let used = features
            .iter()
            .map(|&(i, _)| i)
            .chain(std::iter::once(label_idx))
            .chain(group_idx);
        if used
            .into_iter()
            .any(|i| schema.is_missing(record.get(i).unwrap_or("")))
        {
            table.dropped += 1;
            continue;
        }

        let mut cells = Vec::with_capacity(features.len());
        for (&(i, kind), spec) in features.iter().zip(schema.feature_columns()) {
            let raw = &record[i];
            cells.push(match kind {
                ColumnKind::Numeric => Cell::Num(parse_number(raw).ok_or_else(|| Error::Row {
                    row,
                    message: format!("column '{}': cannot parse {raw:?} as a number", spec.name),
                })?),
                _ => Cell::Cat(raw.to_string()),
            });
        }
        let label =
            apply_label_rule(&schema.label_rule, &record[label_idx]).ok_or_else(|| Error::Row {
                row,
                message: format!(
                    "label column '{}': value {:?} not covered by the label rule",
                    schema.label_column, &record[label_idx]
                ),
            })?;
        table.cells.push(cells);
        table.labels.push(label);
        if let (Some(groups), Some(g)) = (table.groups.as_mut(), group_idx) {
            groups.push(record[g].to_string());
        }
    }
    Ok(table)
}

fn parse_number(raw: &str) -> Option<f64> {
    raw.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn apply_label_rule(rule: &LabelRule, raw: &str) -> Option<usize> {
    match rule {
        LabelRule::Threshold { op, threshold, .. } => {
            let v = parse_number(raw)?;
            let positive = match op {
                ThresholdOp::Gt => v > *threshold,
                ThresholdOp::Ge => v >= *threshold,
            };
            Some(positive as usize)
        }
        LabelRule::CategoryMap { map, .. } => map.get(raw).copied(),
    }
}

/// Encodes several parsed tables against one shared vocabulary per column.
fn assemble(tables: Vec<ParsedTable>, schema: &Schema) -> Result<Vec<RawDataset>> {
    let specs: Vec<_> = schema.feature_columns().collect();

    let mut vocabs: Vec<Option<Vec<String>>> = Vec::with_capacity(specs.len());
    for (j, spec) in specs.iter().enumerate() {
        if spec.kind != ColumnKind::Categorical {
            vocabs.push(None);
            continue;
        }
        let vocab = match &spec.categories {
            Some(declared) => declared.clone(),
            None => {
                let seen: BTreeSet<&str> = tables
                    .iter()
                    .flat_map(|t| t.cells.iter())
                    .map(|row| match &row[j] {
                        Cell::Cat(s) => s.as_str(),
                        Cell::Num(_) => unreachable!(),
                    })
                    .collect();
                seen.into_iter().map(str::to_string).collect()
            }
        };
        vocabs.push(Some(vocab));
    }

    let group_names: Vec<String> = tables
        .iter()
        .filter_map(|t| t.groups.as_ref())
        .flatten()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .cloned()
        .collect();

    let class_names = schema.class_names();
    let mut out = Vec::with_capacity(tables.len());
    for table in tables {
        if table.labels.is_empty() {
            return Err(Error::Data(format!(
                "no rows left after dropping {} rows with missing values",
                table.dropped
            )));
        }
        let mut columns = Vec::with_capacity(specs.len());
        for (j, spec) in specs.iter().enumerate() {
            let values = match &vocabs[j] {
                None => RawValues::Numeric(
                    table
                        .cells
                        .iter()
                        .map(|row| match row[j] {
                            Cell::Num(v) => v,
                            Cell::Cat(_) => unreachable!(),
                        })
                        .collect(),
                ),
                Some(vocab) => {
                    let index: HashMap<&str, usize> = vocab
                        .iter()
                        .enumerate()
                        .map(|(i, v)| (v.as_str(), i))
                        .collect();
                    let codes = table
                        .cells
                        .iter()
                        .enumerate()
                        .map(|(r, row)| match &row[j] {
                            Cell::Cat(s) => {
                                index.get(s.as_str()).copied().ok_or_else(|| Error::Row {
                                    row: r + 1,
                                    message: format!(
                                        "column '{}': value {s:?} not in declared vocabulary",
                                        spec.name
                                    ),
                                })
                            }
                            Cell::Num(_) => unreachable!(),
                        })
                        .collect::<Result<Vec<_>>>()?;
                    RawValues::Categorical {
                        vocab: vocab.clone(),
                        codes,
                    }
                }
            };
            columns.push(RawColumn {
                name: spec.name.clone(),
                values,
            });
        }
        let groups = table.groups.map(|g| {
            g.iter()
                .map(|name| group_names.iter().position(|x| x == name).unwrap())
                .collect()
        });
        out.push(RawDataset {
            columns,
            labels: table.labels,
            groups,
            group_names: group_names.clone(),
            class_names: class_names.clone(),
            dropped_rows: table.dropped,
        });
    }
    Ok(out)
}

/// Loads one CSV file under `schema`.
///
/// Rows with a missing value in any used column are dropped and counted.
/// Categorical vocabularies come from the schema or, when not declared,
/// from the whole file. Row numbers in errors count data rows from 1.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<RawDataset> {
    Ok(load_csv_aligned(&[path.as_ref()], schema)?.remove(0))
}

/// Loads several CSV files that share one schema, computing categorical and
/// group vocabularies over all of them so feature spaces line up.
pub fn load_csv_aligned(paths: &[&Path], schema: &Schema) -> Result<Vec<RawDataset>> {
    let tables = paths
        .iter()
        .map(|p| {
            let file = std::fs::File::open(p).map_err(|e| Error::io(*p, e))?;
            parse_table(file, schema, &p.display().to_string())
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(tables, schema)
}

/// Loads CSV text held in memory.
pub fn load_csv_str(text: &str, schema: &Schema) -> Result<RawDataset> {
    let table = parse_table(text.as_bytes(), schema, "<memory>")?;
    Ok(assemble(vec![table], schema)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::from_toml_str(
            r#"
label_column = "G3"
group_column = "school"
positive_label_name = "pass"
[label_rule]
kind = "threshold"
op = ">="
threshold = 10.0
negative_name = "fail"
[[columns]]
name = "sex"
kind = "categorical"
[[columns]]
name = "age"
kind = "numeric"
[[columns]]
name = "G1"
kind = "drop"
"#,
        )
        .unwrap()
    }

    #[test]
    fn drops_rows_with_missing_values() {
        let csv = "school,sex,age,G1,G3\nGP,F,17,5,12\nMS,M,,9,8\nGP,M,16,?,9\n";
        let raw = load_csv_str(csv, &schema()).unwrap();
        // G1 is dropped, so its missing cell does not remove the third row
        assert_eq!(raw.len(), 2);
        assert_eq!(raw.dropped_rows, 1);
        assert_eq!(raw.labels, vec![1, 0]);
        assert_eq!(raw.group_names, vec!["GP"]);
        assert_eq!(raw.class_names, vec!["fail", "pass"]);
    }

    #[test]
    fn missing_column_is_named() {
        let csv = "school,sex,G1,G3\nGP,F,5,12\n";
        let err = load_csv_str(csv, &schema()).unwrap_err();
        assert!(
            matches!(&err, Error::Schema(m) if m.contains("'age'")),
            "{err}"
        );
    }

    #[test]
    fn bad_number_reports_row() {
        let csv = "school,sex,age,G1,G3\nGP,F,17,5,12\nGP,F,old,5,12\n";
        let err = load_csv_str(csv, &schema()).unwrap_err();
        assert!(matches!(err, Error::Row { row: 2, .. }), "{err}");
    }

    #[test]
    fn empty_result_is_fatal() {
        let csv = "school,sex,age,G1,G3\nGP,F,?,5,12\n";
        assert!(matches!(load_csv_str(csv, &schema()), Err(Error::Data(_))));
    }

    #[test]
    fn unseen_declared_category_errors() {
        let mut s = schema();
        s.columns[0].categories = Some(vec!["F".into(), "M".into()]);
        let csv = "school,sex,age,G1,G3\nGP,X,17,5,12\n";
        assert!(matches!(
            load_csv_str(csv, &s),
            Err(Error::Row { row: 1, .. })
        ));
    }

    #[test]
    fn semicolon_and_quotes() {
        let mut s = schema();
        s.delimiter = ";".into();
        let csv = "\"school\";\"sex\";\"age\";\"G1\";\"G3\"\n\"GP\";\"F\";18;\"5\";\"11\"\n";
        let raw = load_csv_str(csv, &s).unwrap();
        assert_eq!(raw.len(), 1);
        assert_eq!(raw.labels, vec![1]);
    }

    #[test]
    fn aligned_loading_shares_vocabulary() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        std::fs::write(&a, "school,sex,age,G1,G3\nGP,F,17,5,12\n").unwrap();
        std::fs::write(&b, "school,sex,age,G1,G3\nMS,M,17,5,12\n").unwrap();
        let both = load_csv_aligned(&[&a, &b], &schema()).unwrap();
        for raw in &both {
            match &raw.columns[0].values {
                RawValues::Categorical { vocab, .. } => assert_eq!(vocab, &["F", "M"]),
                _ => panic!("sex should be categorical"),
            }
            assert_eq!(raw.group_names, vec!["GP", "MS"]);
        }
    }
}
