//! LIBSVM text loader: `label index:value ...` per line, 1-based indices,
//! densified into the declared feature dimension.

use std::path::Path;

use ndarray::Array2;

use super::{one_hot, DataError, Dataset};

/// A parsed LIBSVM file plus any non-fatal diagnostics (currently only
/// duplicate-index warnings).
#[derive(Debug)]
pub struct LibsvmLoad {
    pub dataset: Dataset,
    pub warnings: Vec<String>,
}

/// Parses a LIBSVM file into a dense dataset. Binary label sets map to
/// one-hot over two classes; multiclass labels map by ascending label value.
/// A duplicate feature index within one line keeps the last value and emits
/// a warning.
pub fn load_libsvm(path: impl AsRef<Path>, feature_dim: usize) -> Result<LibsvmLoad, DataError> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path_str.clone(),
        source,
    })?;

    let mut rows: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut warnings = Vec::new();

    for (line_index, line) in text.lines().enumerate() {
        let line_no = line_index + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let label_token = tokens.next().expect("non-empty line has a first token");
        let label: f64 = label_token.parse().map_err(|_| DataError::MalformedLine {
            path: path_str.clone(),
            line: line_no,
            message: format!("cannot parse label {label_token:?}"),
        })?;
        if !label.is_finite() {
            return Err(DataError::MalformedLine {
                path: path_str.clone(),
                line: line_no,
                message: format!("non-finite label {label}"),
            });
        }

        let mut features = vec![0.0; feature_dim];
        let mut seen = vec![false; feature_dim];
        for token in tokens {
            let (index_str, value_str) =
                token
                    .split_once(':')
                    .ok_or_else(|| DataError::MalformedLine {
                        path: path_str.clone(),
                        line: line_no,
                        message: format!("expected index:value, got {token:?}"),
                    })?;
            let index: usize = index_str.parse().map_err(|_| DataError::MalformedLine {
                path: path_str.clone(),
                line: line_no,
                message: format!("cannot parse feature index {index_str:?}"),
            })?;
            if index == 0 {
                return Err(DataError::MalformedLine {
                    path: path_str.clone(),
                    line: line_no,
                    message: "feature indices are 1-based".to_string(),
                });
            }
            if index > feature_dim {
                return Err(DataError::FeatureIndexOutOfRange {
                    path: path_str.clone(),
                    line: line_no,
                    index,
                    dim: feature_dim,
                });
            }
            let value: f64 = value_str.parse().map_err(|_| DataError::MalformedLine {
                path: path_str.clone(),
                line: line_no,
                message: format!("cannot parse feature value {value_str:?}"),
            })?;
            if seen[index - 1] {
                warnings.push(format!(
                    "{path_str}:{line_no}: duplicate feature index {index}, keeping the last value"
                ));
            }
            seen[index - 1] = true;
            features[index - 1] = value; // last write wins
        }
        rows.push((label, features));
    }

    if rows.is_empty() {
        return Err(DataError::Empty { path: path_str });
    }

    // Map distinct labels to classes by ascending value; binary stays C = 2.
    let mut distinct: Vec<f64> = rows.iter().map(|(l, _)| *l).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("labels are finite"));
    distinct.dedup();
    let classes = distinct.len().max(2);
    let class_of = |label: f64| -> usize {
        distinct
            .iter()
            .position(|&l| l == label)
            .expect("every row label is in the distinct set")
    };

    let n = rows.len();
    let mut features = Array2::zeros((n, feature_dim));
    let mut class_rows = Vec::with_capacity(n);
    for (i, (label, row)) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            features[(i, j)] = v;
        }
        class_rows.push(class_of(label));
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "libsvm".to_string());
    Ok(LibsvmLoad {
        dataset: Dataset {
            features,
            labels: one_hot(&class_rows, classes),
            name,
            classes,
        },
        warnings,
    })
}
