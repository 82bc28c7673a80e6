use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::run::{CurveMetadata, CurvePoint, ExperimentConfig, LearningCurve};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const CSV_HEADER: &str = "strategy,seed,labeled_fraction,test_auc";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    JsonLines,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "jsonl" | "json-lines" => Ok(ExportFormat::JsonLines),
            other => Err(Error::Config(format!(
                "unknown format `{other}` (csv or jsonl)"
            ))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record<'a> {
    Config {
        config: Option<std::borrow::Cow<'a, ExperimentConfig>>,
    },
    Point {
        strategy: std::borrow::Cow<'a, str>,
        seed: u64,
        labeled_fraction: f64,
        test_auc: f64,
    },
}

/// 17 significant digits, enough to round-trip any `f64`.
fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn render(
    curves: &[LearningCurve],
    format: ExportFormat,
    config: Option<&ExperimentConfig>,
) -> Result<Vec<u8>> {
    let mut out = String::new();
    match format {
        ExportFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for c in curves {
                for p in &c.points {
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        c.strategy,
                        c.seed,
                        fmt_real(p.labeled_fraction),
                        fmt_real(p.test_auc)
                    ));
                }
            }
        }
        ExportFormat::JsonLines => {
            let head = Record::Config {
                config: config.map(std::borrow::Cow::Borrowed),
            };
            out.push_str(&serde_json::to_string(&head)?);
            out.push('\n');
            for c in curves {
                for p in &c.points {
                    let rec = Record::Point {
                        strategy: c.strategy.as_str().into(),
                        seed: c.seed,
                        labeled_fraction: p.labeled_fraction,
                        test_auc: p.test_auc,
                    };
                    out.push_str(&serde_json::to_string(&rec)?);
                    out.push('\n');
                }
            }
        }
    }
    Ok(out.into_bytes())
}

/// Writes curves atomically. CSV has one row per curve point under
/// [`CSV_HEADER`]; JSON lines start with a config record followed by one
/// record per point.
pub fn export_results(
    curves: &[LearningCurve],
    path: impl AsRef<Path>,
    format: ExportFormat,
    config: Option<&ExperimentConfig>,
) -> Result<()> {
    write_atomic(path.as_ref(), &render(curves, format, config)?)
}

fn push_point(curves: &mut Vec<LearningCurve>, strategy: &str, seed: u64, point: CurvePoint) {
    match curves.last_mut() {
        Some(c) if c.strategy == strategy && c.seed == seed => c.points.push(point),
        _ => curves.push(LearningCurve {
            strategy: strategy.to_string(),
            seed,
            points: vec![point],
            metadata: CurveMetadata::default(),
        }),
    }
}

/// Reads curves back; consecutive points with the same strategy and seed
/// form one curve. Metadata is not stored in the files and comes back empty.
pub fn import_results(path: impl AsRef<Path>, format: ExportFormat) -> Result<Vec<LearningCurve>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut curves = Vec::new();
    let bad =
        |line: usize, what: &str| Error::Data(format!("{}: line {line}: {what}", path.display()));
    match format {
        ExportFormat::Csv => {
            let mut lines = text.lines().enumerate();
            match lines.next() {
                Some((_, h)) if h == CSV_HEADER => {}
                _ => return Err(bad(1, "unexpected header")),
            }
            for (i, line) in lines {
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != 4 {
                    return Err(bad(i + 1, "expected 4 fields"));
                }
                let seed = fields[1].parse().map_err(|_| bad(i + 1, "bad seed"))?;
                let labeled_fraction = fields[2].parse().map_err(|_| bad(i + 1, "bad fraction"))?;
                let test_auc = fields[3].parse().map_err(|_| bad(i + 1, "bad auc"))?;
                push_point(
                    &mut curves,
                    fields[0],
                    seed,
                    CurvePoint {
                        labeled_fraction,
                        test_auc,
                    },
                );
            }
        }
        ExportFormat::JsonLines => {
            for (i, line) in text.lines().enumerate() {
                match serde_json::from_str::<Record>(line)? {
                    Record::Config { .. } if i == 0 => {}
                    Record::Config { .. } => {
                        return Err(bad(i + 1, "config record after the first line"))
                    }
                    Record::Point {
                        strategy,
                        seed,
                        labeled_fraction,
                        test_auc,
                    } => push_point(
                        &mut curves,
                        &strategy,
                        seed,
                        CurvePoint {
                            labeled_fraction,
                            test_auc,
                        },
                    ),
                }
            }
        }
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(strategy: &str, seed: u64, pts: &[(f64, f64)]) -> LearningCurve {
        LearningCurve {
            strategy: strategy.into(),
            seed,
            points: pts
                .iter()
                .map(|&(labeled_fraction, test_auc)| CurvePoint {
                    labeled_fraction,
                    test_auc,
                })
                .collect(),
            metadata: CurveMetadata::default(),
        }
    }

    #[test]
    fn csv_header_and_empty_export() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        export_results(&[], &path, ExportFormat::Csv, None).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            format!("{CSV_HEADER}\n")
        );
        assert!(import_results(&path, ExportFormat::Csv).unwrap().is_empty());
    }

    #[test]
    fn jsonl_leads_with_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let cfg = ExperimentConfig::default();
        export_results(
            &[curve("dami", 1, &[(0.02, 0.5)])],
            &path,
            ExportFormat::JsonLines,
            Some(&cfg),
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["record"], "config");
        assert_eq!(first["config"]["init_fraction"], 0.02);
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn unwritable_path() {
        let err =
            export_results(&[], "/nonexistent-dir/x.csv", ExportFormat::Csv, None).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    proptest! {
        #[test]
        fn round_trips_losslessly(
            raw in proptest::collection::vec(
                (0usize..3, any::<u64>(), proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..6)),
                0..5,
            ),
            jsonl: bool,
        ) {
            let names = ["rnd", "bald", "dami"];
            let mut curves: Vec<LearningCurve> = raw
                .iter()
                .map(|(s, seed, pts)| curve(names[*s], *seed, pts))
                .collect();
            // adjacent curves with equal keys would merge on import
            curves.dedup_by(|a, b| a.strategy == b.strategy && a.seed == b.seed);
            let format = if jsonl { ExportFormat::JsonLines } else { ExportFormat::Csv };
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("curves");
            export_results(&curves, &path, format, None).unwrap();
            prop_assert_eq!(import_results(&path, format).unwrap(), curves);
        }
    }
}
