//! CSV and JSON persistence.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back yields bit-identical values. CSV outputs may start with `#` comment
//! lines carrying provenance; the loader skips them.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Group, Individual, Label};

use super::config::Provenance;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Shortest representation that parses back to the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn provenance_line(p: &Provenance) -> String {
    format!("# {} {} config_digest={}\n", p.tool, p.version, p.config_digest)
}

/// Write a CSV table, optionally preceded by a provenance comment.
pub fn write_table(
    path: &Path,
    header: &[String],
    rows: &[Vec<String>],
    provenance: Option<&Provenance>,
) -> Result<()> {
    let mut out = String::new();
    if let Some(p) = provenance {
        out.push_str(&provenance_line(p));
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| io_err(path, std::io::Error::other(e));
    writer.write_record(header).map_err(csv_err)?;
    for row in rows {
        writer.write_record(row).map_err(csv_err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| io_err(path, std::io::Error::other(e.to_string())))?;
    out.push_str(&String::from_utf8_lossy(&bytes));
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Columns `f1..fd, income, group, label`.
pub fn save_csv(dataset: &Dataset, path: &Path, provenance: Option<&Provenance>) -> Result<()> {
    let mut header: Vec<String> = (1..=dataset.dim()).map(|j| format!("f{j}")).collect();
    header.extend(["income", "group", "label"].map(String::from));
    let rows: Vec<Vec<String>> = dataset
        .individuals()
        .iter()
        .map(|ind| {
            let mut row: Vec<String> = ind.features.iter().map(|&v| fmt_f64(v)).collect();
            row.push(fmt_f64(ind.income));
            row.push(ind.group.to_string());
            row.push(if ind.label.is_positive() { "1" } else { "-1" }.to_string());
            row
        })
        .collect();
    write_table(path, &header, &rows, provenance)
}

fn parse_real(raw: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Csv {
        row,
        column: column.to_string(),
        reason: format!("`{raw}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Csv {
            row,
            column: column.to_string(),
            reason: format!("non-finite value `{raw}`"),
        });
    }
    Ok(v)
}

/// Read a dataset. Labels may be `-1/+1` or `0/1` (0 becomes -1). Rows are
/// numbered from 1, not counting the header or comment lines.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header_err = |reason: String| Error::Csv {
        row: 0,
        column: "header".into(),
        reason,
    };
    let headers = reader.headers().map_err(|e| header_err(e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);

    let dim = headers
        .iter()
        .filter(|h| {
            h.strip_prefix('f')
                .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
        })
        .count();
    let mut feature_cols = Vec::with_capacity(dim);
    for j in 1..=dim {
        let name = format!("f{j}");
        feature_cols.push(find(&name).ok_or_else(|| header_err(format!("missing column `{name}`")))?);
    }
    if dim == 0 {
        return Err(header_err("no feature columns `f1..fd`".into()));
    }
    let income_col = find("income").ok_or_else(|| header_err("missing column `income`".into()))?;
    let group_col = find("group").ok_or_else(|| header_err("missing column `group`".into()))?;
    let label_col = find("label").ok_or_else(|| header_err("missing column `label`".into()))?;

    let mut individuals = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Csv {
            row,
            column: "*".into(),
            reason: e.to_string(),
        })?;
        let field = |col: usize, name: &str| -> Result<&str> {
            record.get(col).ok_or_else(|| Error::Csv {
                row,
                column: name.to_string(),
                reason: "missing value".into(),
            })
        };
        let mut features = Vec::with_capacity(dim);
        for (j, &col) in feature_cols.iter().enumerate() {
            let name = format!("f{}", j + 1);
            features.push(parse_real(field(col, &name)?, row, &name)?);
        }
        let income = parse_real(field(income_col, "income")?, row, "income")?;
        if income <= 0.0 {
            return Err(Error::Csv {
                row,
                column: "income".into(),
                reason: format!("income must be positive, got {income}"),
            });
        }
        let raw_group = field(group_col, "group")?;
        let group = raw_group
            .parse::<i64>()
            .map_err(|_| ())
            .and_then(|g| Group::try_from(g).map_err(|_| ()))
            .map_err(|_| Error::Csv {
                row,
                column: "group".into(),
                reason: format!("unknown group `{raw_group}`"),
            })?;
        let raw_label = field(label_col, "label")?;
        let label = match raw_label {
            "1" | "+1" => Label::Positive,
            "0" | "-1" => Label::Negative,
            other => {
                return Err(Error::Csv {
                    row,
                    column: "label".into(),
                    reason: format!("label must be -1/+1 or 0/1, got `{other}`"),
                })
            }
        };
        individuals.push(Individual::new(features, income, group, label)?);
    }
    Dataset::new(individuals)
}

pub fn save_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// A serialized artifact with its provenance stamp alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<T> {
    #[serde(flatten)]
    pub value: T,
    pub provenance: Provenance,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_population, GeneratorConfig};
    use crate::model::LinearClassifier;

    #[test]
    fn dataset_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let ds = generate_population(&GeneratorConfig::default()).unwrap();
        let prov = Provenance {
            tool: "t".into(),
            version: "0".into(),
            config_digest: "abc".into(),
        };
        save_csv(&ds, &path, Some(&prov)).unwrap();
        assert_eq!(load_csv(&path).unwrap(), ds);
    }

    #[test]
    fn small_file_and_label_mapping() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(
            &path,
            "f1,f2,income,group,label\n0.5,1,100,0,1\n-1,2.25,35.5,1,0\n3,0,10,1,1\n",
        )
        .unwrap();
        let ds = load_csv(&path).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 2);
        let second = &ds.individuals()[1];
        assert_eq!(second.features, vec![-1.0, 2.25]);
        assert_eq!(second.income, 35.5);
        assert_eq!(second.group, Group::One);
        assert_eq!(second.label, Label::Negative);
        assert_eq!(ds.individuals()[0].label, Label::Positive);
    }

    #[test]
    fn bad_income_cites_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "f1,income,group,label\n1,100,0,1\n2,-5,0,-1\n").unwrap();
        match load_csv(&path) {
            Err(Error::Csv { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "income");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "f1,group,label\n1,0,1\n").unwrap();
        assert!(load_csv(&path).unwrap_err().to_string().contains("income"));
        fs::write(&path, "f1,income,group,label\n1,10,3,1\n").unwrap();
        assert!(load_csv(&path).unwrap_err().to_string().contains("group"));
        fs::write(&path, "f1,income,group,label\nnan,10,0,1\n").unwrap();
        assert!(load_csv(&path).unwrap_err().to_string().contains("f1"));
        fs::write(&path, "f1,income,group,label\n1,10,0,2\n").unwrap();
        assert!(load_csv(&path).unwrap_err().to_string().contains("label"));
        assert!(matches!(
            load_csv(&dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn classifier_json_preserves_margins_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let c = LinearClassifier::new(vec![0.1 + 0.2, -1.0 / 3.0, 2.0f64.sqrt(), 1e-300], std::f64::consts::PI);
        save_json(&c, &path).unwrap();
        let back: LinearClassifier = load_json(&path).unwrap();
        let probes = [[1.0, 2.0, 3.0, 4.0], [-0.7, 0.003, 1e5, 2.5]];
        for p in probes {
            assert_eq!(c.margin(&p).unwrap().to_bits(), back.margin(&p).unwrap().to_bits());
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn arbitrary_dataset_round_trips(
                rows in proptest::collection::vec(
                    (proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 3),
                     1e-300f64..1e300, any::<bool>(), any::<bool>()),
                    1..20),
            ) {
                let inds: Vec<Individual> = rows
                    .into_iter()
                    .map(|(x, m, g, l)| {
                        Individual::new(x, m, if g { Group::One } else { Group::Zero },
                                        if l { Label::Positive } else { Label::Negative }).unwrap()
                    })
                    .collect();
                let ds = Dataset::new(inds).unwrap();
                let dir = tempfile::tempdir().unwrap();
                let path = dir.path().join("d.csv");
                save_csv(&ds, &path, None).unwrap();
                prop_assert_eq!(load_csv(&path).unwrap(), ds);
            }
        }
    }
}
