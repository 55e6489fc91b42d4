//! Tabular CSV ingestion into [`GroupedDataset`].
//!
//! The loader expects an RFC-4180-style file with a header row. A
//! [`CsvSchema`] names the target and group columns; remaining columns (or
//! an explicit list) become features. Feature columns are numeric unless
//! declared categorical, in which case they are one-hot encoded with
//! lexicographic category order so the resulting column layout is
//! deterministic. Numeric columns can be standardized to zero mean and unit
//! variance; a column whose variance falls below [`VARIANCE_FLOOR`] is
//! mapped to all zeros instead of amplifying noise.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;

use crate::data::GroupedDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Columns whose variance is at or below this floor standardize to zero.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Column roles and encoding options for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    /// Name of the class-label column (categorical).
    pub target: String,
    /// Name of the group-membership column (categorical).
    pub group: String,
    /// Feature columns in desired order; `None` uses every remaining column
    /// in header order.
    pub features: Option<Vec<String>>,
    /// Feature columns to one-hot encode; all others must be numeric.
    pub categorical: Vec<String>,
    /// Standardize numeric feature columns to mean 0, variance 1.
    pub standardize: bool,
    /// Pinned category lists per column name (applies to target, group and
    /// categorical features). A value outside its pinned list is an error;
    /// without a pin, the observed distinct values are used.
    pub categories: Option<BTreeMap<String, Vec<String>>>,
}

impl CsvSchema {
    /// Schema with target/group columns, auto-detected features, no
    /// categorical features and standardization enabled.
    pub fn new(target: impl Into<String>, group: impl Into<String>) -> Self {
        CsvSchema {
            target: target.into(),
            group: group.into(),
            features: None,
            categorical: Vec::new(),
            standardize: true,
            categories: None,
        }
    }
}

/// Maps the distinct values of a column to indices.
///
/// With a pinned list the indices follow that list and unseen values are
/// rejected; otherwise the observed values are sorted lexicographically.
fn category_mapping(
    column_name: &str,
    cells: &[String],
    pinned: Option<&Vec<String>>,
) -> Result<BTreeMap<String, usize>> {
    let mut mapping = BTreeMap::new();
    match pinned {
        Some(list) => {
            for (i, value) in list.iter().enumerate() {
                if mapping.insert(value.clone(), i).is_some() {
                    return Err(Error::Schema(format!(
                        "pinned categories for column {column_name:?} repeat value {value:?}"
                    )));
                }
            }
            for cell in cells {
                if !mapping.contains_key(cell) {
                    return Err(Error::Schema(format!(
                        "column {column_name:?} contains value {cell:?} outside its pinned categories"
                    )));
                }
            }
        }
        None => {
            let mut distinct: Vec<&String> = cells.iter().collect();
            distinct.sort();
            distinct.dedup();
            for (i, value) in distinct.into_iter().enumerate() {
                mapping.insert(value.clone(), i);
            }
        }
    }
    Ok(mapping)
}

/// Loads a CSV file into a grouped dataset according to `schema`.
pub fn load_csv<S: Scalar>(path: &Path, schema: &CsvSchema) -> Result<GroupedDataset<S>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header row: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();

    let column_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column {name:?} not found in header")))
    };
    let target_idx = column_index(&schema.target)?;
    let group_idx = column_index(&schema.group)?;
    if target_idx == group_idx {
        return Err(Error::Schema(
            "target and group must be different columns".into(),
        ));
    }

    let feature_names: Vec<String> = match &schema.features {
        Some(list) => {
            for name in list {
                let idx = column_index(name)?;
                if idx == target_idx || idx == group_idx {
                    return Err(Error::Schema(format!(
                        "column {name:?} cannot be both a feature and target/group"
                    )));
                }
            }
            list.clone()
        }
        None => headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != target_idx && i != group_idx)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    if feature_names.is_empty() {
        return Err(Error::Schema("no feature columns remain".into()));
    }
    for name in &schema.categorical {
        if !feature_names.contains(name) {
            return Err(Error::Schema(format!(
                "categorical column {name:?} is not a feature column"
            )));
        }
    }
    let feature_indices: Vec<usize> = feature_names
        .iter()
        .map(|n| column_index(n))
        .collect::<Result<_>>()?;

    // Pull all needed cells into memory, column-major.
    let mut target_cells = Vec::new();
    let mut group_cells = Vec::new();
    let mut feature_cells: Vec<Vec<String>> = vec![Vec::new(); feature_names.len()];
    for (row_number, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            Error::Schema(format!("malformed record on data row {row_number}: {e}"))
        })?;
        let cell = |idx: usize| -> Result<&str> {
            record.get(idx).ok_or_else(|| {
                Error::Schema(format!("data row {row_number} is missing column {idx}"))
            })
        };
        target_cells.push(cell(target_idx)?.to_owned());
        group_cells.push(cell(group_idx)?.to_owned());
        for (slot, &idx) in feature_cells.iter_mut().zip(&feature_indices) {
            slot.push(cell(idx)?.to_owned());
        }
    }
    let n = target_cells.len();
    if n == 0 {
        return Err(Error::Schema("file contains no data rows".into()));
    }

    let pinned = |name: &str| -> Option<&Vec<String>> {
        schema.categories.as_ref().and_then(|m| m.get(name))
    };
    let target_map = category_mapping(&schema.target, &target_cells, pinned(&schema.target))?;
    if target_map.len() < 2 {
        return Err(Error::Schema(format!(
            "target column {:?} needs at least 2 distinct values",
            schema.target
        )));
    }
    let group_map = category_mapping(&schema.group, &group_cells, pinned(&schema.group))?;
    let targets: Vec<usize> = target_cells.iter().map(|c| target_map[c]).collect();
    let groups: Vec<usize> = group_cells.iter().map(|c| group_map[c]).collect();

    // Encode features column by column, keeping schema order.
    let mut encoded: Vec<Vec<f64>> = Vec::new();
    for (name, cells) in feature_names.iter().zip(&feature_cells) {
        if schema.categorical.contains(name) {
            let mapping = category_mapping(name, cells, pinned(name))?;
            let width = mapping.len();
            let mut columns = vec![vec![0.0; n]; width];
            for (row, cell) in cells.iter().enumerate() {
                columns[mapping[cell]][row] = 1.0;
            }
            encoded.extend(columns);
        } else {
            let mut column = Vec::with_capacity(n);
            for (row, cell) in cells.iter().enumerate() {
                let value: f64 = cell.trim().parse().map_err(|_| {
                    Error::Schema(format!(
                        "non-numeric value {cell:?} in column {name:?}, data row {row}"
                    ))
                })?;
                if !value.is_finite() {
                    return Err(Error::Schema(format!(
                        "non-finite value {cell:?} in column {name:?}, data row {row}"
                    )));
                }
                column.push(value);
            }
            if schema.standardize {
                let mean = column.iter().sum::<f64>() / n as f64;
                let var = column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                if var <= VARIANCE_FLOOR {
                    column.iter_mut().for_each(|v| *v = 0.0);
                } else {
                    let sd = var.sqrt();
                    column.iter_mut().for_each(|v| *v = (*v - mean) / sd);
                }
            }
            encoded.push(column);
        }
    }

    let width = encoded.len();
    let mut flat = Vec::with_capacity(n * width);
    for row in 0..n {
        for column in &encoded {
            flat.push(S::c(column[row]));
        }
    }
    let features = Array2::from_shape_vec((n, width), flat).expect("rectangular encoding");
    GroupedDataset::from_columns(features, targets, groups, group_map.len(), target_map.len())
}
