//! Tabular classification datasets: CSV ingest, label encoding, stratified
//! splitting and simple minority oversampling.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{self, Domain};
use crate::{Error, Result};

/// Row-major feature matrix plus encoded labels.
///
/// `class_names` is the label vocabulary of the file the data came from.
/// Subsets produced by [`stratified_split`] keep the parent vocabulary so
/// class indices stay stable, even if a class is absent from a subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    feature_names: Vec<String>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let n_features = feature_names.len();
        let mut features = Vec::with_capacity(rows.len() * n_features);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_features {
                return Err(Error::Data(format!(
                    "row {i} has {} values, expected {n_features}",
                    row.len()
                )));
            }
            features.extend_from_slice(row);
        }
        Self::from_flat(features, labels, feature_names, class_names)
    }

    pub fn from_flat(
        features: Vec<f64>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let n_features = feature_names.len();
        if n_features == 0 {
            return Err(Error::Data("dataset has no feature columns".into()));
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::Data(format!(
                "feature matrix has {} cells, expected {} rows x {n_features}",
                features.len(),
                labels.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Data(format!("duplicate feature name '{name}'")));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::Data(format!(
                "label index {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, column '{}'",
                pos / n_features,
                feature_names[pos % n_features]
            )));
        }
        Ok(Dataset {
            features,
            labels,
            feature_names,
            class_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_features();
        &self.features[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.n_features())
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.features[row * self.n_features() + feature]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, in the given order, sharing this dataset's vocabulary.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let p = self.n_features();
        let mut features = Vec::with_capacity(indices.len() * p);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            labels,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Drops the named feature columns.
    pub fn drop_columns(&self, names: &[String]) -> Result<Dataset> {
        for n in names {
            if !self.feature_names.contains(n) {
                return Err(Error::Data(format!("cannot drop unknown column '{n}'")));
            }
        }
        let keep: Vec<usize> = (0..self.n_features())
            .filter(|&j| !names.contains(&self.feature_names[j]))
            .collect();
        self.select_columns(&keep)
    }

    /// Reorders/selects feature columns by index.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Dataset> {
        if columns.is_empty() {
            return Err(Error::Data("no feature columns left".into()));
        }
        let mut features = Vec::with_capacity(self.n_rows() * columns.len());
        for row in self.rows() {
            features.extend(columns.iter().map(|&j| row[j]));
        }
        Ok(Dataset {
            features,
            labels: self.labels.clone(),
            feature_names: columns
                .iter()
                .map(|&j| self.feature_names[j].clone())
                .collect(),
            class_names: self.class_names.clone(),
        })
    }

    /// Selects feature columns by name, in the order given.
    pub fn select_named(&self, names: &[String]) -> Result<Dataset> {
        let columns = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| Error::Data(format!("column '{n}' not found")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.select_columns(&columns)
    }
}

/// Reads a CSV with a mandatory header row. `label_column` defaults to the
/// last column. Labels are encoded in order of first appearance.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_column)
}

/// Trimmed header names of a CSV file.
pub fn csv_header(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    Ok(rdr
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header: {e}")))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect())
}

pub fn read_csv<R: std::io::Read>(reader: R, label_column: Option<&str>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header: {e}")))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if header.len() < 2 {
        return Err(Error::Data(
            "need at least one feature column and a label column".into(),
        ));
    }
    let label_idx = match label_column {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("label column '{name}' not found in header")))?,
        None => header.len() - 1,
    };
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut class_index: HashMap<String, usize> = HashMap::new();

    for (r, record) in rdr.records().enumerate() {
        // data rows are numbered from 1, matching a spreadsheet view below the header
        let row_no = r + 1;
        let record = record.map_err(|e| Error::Data(format!("row {row_no}: {e}")))?;
        if record.len() != header.len() {
            return Err(Error::Data(format!(
                "row {row_no}: expected {} fields, found {}",
                header.len(),
                record.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                let label = cell.trim().to_string();
                if label.is_empty() {
                    return Err(Error::Data(format!(
                        "row {row_no}, column '{}': missing label",
                        header[j]
                    )));
                }
                let next = class_names.len();
                let idx = *class_index.entry(label.clone()).or_insert_with(|| {
                    class_names.push(label);
                    next
                });
                labels.push(idx);
            } else {
                features.push(parse_cell(cell, row_no, &header[j])?);
            }
        }
    }
    if class_names.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 classes, found {}",
            class_names.len()
        )));
    }
    Dataset::from_flat(features, labels, feature_names, class_names)
}

/// Feature rows of a CSV whose header names every column in `names`. Columns
/// are matched by name; any other column (a label, an id) is ignored.
pub fn load_feature_rows(path: impl AsRef<Path>, names: &[String]) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_feature_rows(file, names)
}

pub fn read_feature_rows<R: std::io::Read>(reader: R, names: &[String]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header: {e}")))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let columns: Vec<usize> = names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| Error::Data(format!("feature column '{n}' not found in header")))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row_no = r + 1;
        let record = record.map_err(|e| Error::Data(format!("row {row_no}: {e}")))?;
        if record.len() != header.len() {
            return Err(Error::Data(format!(
                "row {row_no}: expected {} fields, found {}",
                header.len(),
                record.len()
            )));
        }
        let row = columns
            .iter()
            .map(|&j| parse_cell(&record[j], row_no, &header[j]))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    Ok(rows)
}

fn parse_cell(cell: &str, row_no: usize, column: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| {
        Error::Data(format!(
            "row {row_no}, column '{column}': cannot parse '{cell}' as a number"
        ))
    })?;
    if !v.is_finite() {
        return Err(Error::Data(format!(
            "row {row_no}, column '{column}': non-finite value '{cell}'"
        )));
    }
    Ok(v)
}

/// Writes the dataset back as CSV with the label in the last column.
/// Floats use the shortest round-trip representation.
pub fn write_csv<W: std::io::Write>(d: &Dataset, writer: W, label_name: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let wrap = |e: csv::Error| Error::Data(format!("csv write failed: {e}"));
    let mut header = d.feature_names.clone();
    header.push(label_name.to_string());
    w.write_record(&header).map_err(wrap)?;
    for (row, &label) in d.rows().zip(&d.labels) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(d.class_names[label].clone());
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush()
        .map_err(|e| Error::Data(format!("csv flush failed: {e}")))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl SplitSpec {
    pub fn new(test_fraction: f64, seed: u64, stratified: bool) -> Result<Self> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::Data(format!(
                "test fraction must lie strictly between 0 and 1, got {test_fraction}"
            )));
        }
        Ok(SplitSpec {
            test_fraction,
            seed,
            stratified,
        })
    }
}

/// Train/test row indices, each ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-group test count: `round(count * fraction)`, halves rounding up.
fn test_count(count: usize, fraction: f64) -> usize {
    (count as f64 * fraction).round() as usize
}

pub fn split_indices(d: &Dataset, spec: &SplitSpec) -> Result<SplitIndices> {
    SplitSpec::new(spec.test_fraction, spec.seed, spec.stratified)?;
    let mut rng = rng::stream(spec.seed, Domain::Split, 0);
    let groups: Vec<Vec<usize>> = if spec.stratified {
        let mut by_class = vec![Vec::new(); d.n_classes()];
        for (i, &l) in d.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        for (c, members) in by_class.iter().enumerate() {
            if members.len() == 1 {
                return Err(Error::Data(format!(
                    "class '{}' has a single member; cannot stratify",
                    d.class_names[c]
                )));
            }
        }
        by_class
    } else {
        vec![(0..d.n_rows()).collect()]
    };

    let mut test = Vec::new();
    let mut train = Vec::new();
    for mut members in groups {
        let t = test_count(members.len(), spec.test_fraction);
        members.shuffle(&mut rng);
        test.extend_from_slice(&members[..t]);
        train.extend_from_slice(&members[t..]);
    }
    test.sort_unstable();
    train.sort_unstable();
    if test.is_empty() || train.is_empty() {
        return Err(Error::Data(format!(
            "split leaves an empty partition ({} train, {} test rows)",
            train.len(),
            test.len()
        )));
    }
    Ok(SplitIndices { train, test })
}

/// Returns `(train, test)`.
pub fn stratified_split(d: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let idx = split_indices(d, spec)?;
    Ok((d.subset(&idx.train), d.subset(&idx.test)))
}

/// Duplicates uniformly chosen minority-class rows until every present class
/// matches the majority count. Original rows come first, in order.
pub fn oversample_simple(d: &Dataset, seed: u64) -> Dataset {
    let counts = d.class_counts();
    let target = counts.iter().copied().max().unwrap_or(0);
    let mut rng = rng::stream(seed, Domain::Oversample, 0);
    let mut indices: Vec<usize> = (0..d.n_rows()).collect();
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 || count == target {
            continue;
        }
        let members: Vec<usize> = (0..d.n_rows()).filter(|&i| d.labels[i] == c).collect();
        for _ in count..target {
            indices.push(members[rng.random_range(0..members.len())]);
        }
    }
    d.subset(&indices)
}
