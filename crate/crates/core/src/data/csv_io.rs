use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    /// Zero-based column position.
    Index(usize),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// All-digit strings are positions, anything else is a header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub label: LabelColumn,
    pub delimiter: u8,
    /// Columns dropped before parsing (e.g. metadata such as `quadrant`).
    pub ignore: Vec<String>,
}

impl CsvOptions {
    pub fn new(label: LabelColumn) -> Self {
        CsvOptions {
            label,
            delimiter: b',',
            ignore: Vec::new(),
        }
    }
}

/// Loads a numeric CSV with a header row and a binary label column.
///
/// Categorical columns are rejected; encode them before loading.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .from_reader(file);

    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::Data(format!("{}: file is empty", path.display())));
    }
    let label_idx = match &opts.label {
        LabelColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("{}: no label column `{name}`", path.display())))?,
        LabelColumn::Index(i) if *i < headers.len() => *i,
        LabelColumn::Index(i) => {
            return Err(Error::Data(format!(
                "{}: label column index {i} out of range ({} columns)",
                path.display(),
                headers.len()
            )))
        }
    };
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != label_idx && !opts.ignore.contains(&headers[c]))
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::Data(format!(
            "{}: no feature columns",
            path.display()
        )));
    }

    let mut records = Vec::new();
    let mut lines = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        lines.push(rec.position().map_or(0, |p| p.line() as usize));
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }

    let mut labels = Vec::with_capacity(records.len());
    let mut data = Vec::with_capacity(records.len() * feature_cols.len());
    for (rec, &line) in records.iter().zip(&lines) {
        let raw_label = rec.get(label_idx).unwrap_or("").trim();
        let label = match raw_label.parse::<f64>() {
            Ok(v) if v == 0.0 => 0,
            Ok(v) if v == 1.0 => 1,
            _ => {
                return Err(Error::Data(format!(
                    "{}: line {line}: label `{raw_label}` is not binary (expected 0 or 1)",
                    path.display()
                )))
            }
        };
        labels.push(label);
        for &c in &feature_cols {
            let raw = rec.get(c).unwrap_or("").trim();
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => data.push(v),
                _ => {
                    let categorical = records
                        .iter()
                        .all(|r| r.get(c).unwrap_or("").trim().parse::<f64>().is_err());
                    if categorical {
                        return Err(Error::Data(format!(
                            "{}: column `{}` is categorical; only numeric features are supported",
                            path.display(),
                            headers[c]
                        )));
                    }
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        row: line,
                        column: headers[c].clone(),
                        value: raw.to_string(),
                    });
                }
            }
        }
    }

    let name = path.file_stem().map_or_else(
        || "dataset".to_string(),
        |s| s.to_string_lossy().into_owned(),
    );
    let features = Matrix::from_vec(labels.len(), feature_cols.len(), data)?;
    let feature_names = feature_cols.iter().map(|&c| headers[c].clone()).collect();
    Dataset::new(name, features, labels, feature_names)
}

/// Writes features, then the label column, then `quadrant` when present.
/// Numbers use the shortest representation that parses back exactly.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>, label_name: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.push(label_name);
    if ds.quadrants.is_some() {
        header.push("quadrant");
    }
    w.write_record(&header)?;
    for r in 0..ds.len() {
        let mut rec: Vec<String> = ds.features.row(r).iter().map(|v| v.to_string()).collect();
        rec.push(ds.labels[r].to_string());
        if let Some(q) = &ds.quadrants {
            rec.push(q[r].to_string());
        }
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    write_atomic(path.as_ref(), &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn fixture(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn opts(label: &str) -> CsvOptions {
        CsvOptions::new(label.parse().unwrap())
    }

    #[test]
    fn loads_three_rows() {
        let f = fixture("a,b,y\n1,2,0\n3.5,-1,1\n0,0,1\n");
        let ds = load_csv(f.path(), &opts("y")).unwrap();
        assert_eq!((ds.len(), ds.width()), (3, 2));
        assert_eq!(ds.labels, vec![0, 1, 1]);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.features.row(1), &[3.5, -1.0]);
    }

    #[test]
    fn label_by_index_and_delimiter() {
        let f = fixture("y;a\n1;2\n0;3\n");
        let mut o = opts("0");
        o.delimiter = b';';
        let ds = load_csv(f.path(), &o).unwrap();
        assert_eq!(ds.labels, vec![1, 0]);
        assert_eq!(ds.features.column(0), vec![2.0, 3.0]);
    }

    #[test]
    fn rejects_non_binary_label() {
        let f = fixture("a,b,y\n1,2,0\n3,4,2\n");
        let err = load_csv(f.path(), &opts("y")).unwrap_err();
        assert!(err.to_string().contains("not binary"), "{err}");
    }

    #[test]
    fn reports_row_of_bad_number() {
        let f = fixture("a,b,y\n1,2,0\n3,oops,1\n");
        match load_csv(f.path(), &opts("y")).unwrap_err() {
            Error::Parse {
                row, column, value, ..
            } => {
                assert_eq!((row, column.as_str(), value.as_str()), (3, "b", "oops"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_categorical_column() {
        let f = fixture("a,color,y\n1,red,0\n2,blue,1\n");
        let err = load_csv(f.path(), &opts("y")).unwrap_err();
        assert!(err.to_string().contains("categorical"), "{err}");
    }

    #[test]
    fn missing_inputs() {
        let f = fixture("a,b,y\n1,2,0\n");
        assert!(load_csv(f.path(), &opts("label")).is_err());
        assert!(load_csv("/nonexistent/x.csv", &opts("y"))
            .unwrap_err()
            .is_data_error());
        assert!(load_csv(fixture("").path(), &opts("y")).is_err());
        assert!(load_csv(fixture("a,y\n").path(), &opts("y")).is_err());
    }

    #[test]
    fn ignored_columns_are_dropped() {
        let f = fixture("x1,x2,y,quadrant\n1,2,0,0\n-1,2,1,1\n");
        let mut o = opts("y");
        o.ignore = vec!["quadrant".into()];
        assert_eq!(load_csv(f.path(), &o).unwrap().width(), 2);
    }

    #[test]
    fn eleven_feature_file() {
        let header: Vec<String> = (0..11)
            .map(|i| format!("f{i}"))
            .chain(["class".into()])
            .collect();
        let mut text = header.join(",") + "\n";
        for r in 0..5 {
            let row: Vec<String> = (0..11)
                .map(|c| format!("{}", r * c))
                .chain([format!("{}", r % 2)])
                .collect();
            text += &(row.join(",") + "\n");
        }
        let ds = load_csv(fixture(&text).path(), &opts("class")).unwrap();
        assert_eq!(ds.width(), 11);
    }

    #[test]
    fn write_then_load() {
        let f = fixture("a,b,y\n0.1,2,0\n3.5,-1e-300,1\n");
        let ds = load_csv(f.path(), &opts("y")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("copy.csv");
        write_csv(&ds, &out, "y").unwrap();
        let back = load_csv(&out, &opts("y")).unwrap();
        assert_eq!(back.features, ds.features);
        assert_eq!(back.labels, ds.labels);
    }
}
