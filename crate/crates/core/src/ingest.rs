//! Building datasets from CSV matrices and raw review text.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::serial::Versioned;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixFormat {
    /// Header row of column names, one row per sample; one column is the target.
    DenseCsv,
    /// `row,col,value` records; `col` is a feature index or the literal `y`.
    SparseTriplet,
}

impl std::str::FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense-csv" | "dense" => Ok(MatrixFormat::DenseCsv),
            "sparse-triplet" | "triplet" => Ok(MatrixFormat::SparseTriplet),
            other => Err(Error::InvalidConfig {
                field: "format",
                reason: format!("unknown matrix format {other:?}"),
            }),
        }
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        message: message.into(),
    }
}

fn csv_line(e: &csv::Error) -> u64 {
    e.position().map(|p| p.line()).unwrap_or(0)
}

/// Reads a dataset. For dense files, `target` names the response column.
pub fn load_matrix(path: &Path, format: MatrixFormat, target: &str) -> Result<Dataset> {
    match format {
        MatrixFormat::DenseCsv => load_dense(path, target),
        MatrixFormat::SparseTriplet => load_triplet(path),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path)?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn load_dense(path: &Path, target: &str) -> Result<Dataset> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, csv_line(&e), e.to_string()))?
        .clone();
    let mut seen = HashSet::new();
    for name in headers.iter() {
        if !seen.insert(name) {
            return Err(parse_err(path, 1, format!("duplicate column name {name:?}")));
        }
    }
    let target_col = headers
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| parse_err(path, 1, format!("no target column {target:?}")))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target_col)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut values = Vec::new();
    let mut y = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, csv_line(&e), e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != headers.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", headers.len(), rec.len()),
            ));
        }
        for (i, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(path, line, format!("non-numeric cell {cell:?} in column {:?}", &headers[i])))?;
            if i == target_col {
                y.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let n = y.len();
    let x = DMatrix::from_row_slice(n, names.len(), &values);
    Dataset::new(x, DVector::from_vec(y), names)
}

fn load_triplet(path: &Path) -> Result<Dataset> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, csv_line(&e), e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["row", "col", "value"] {
        return Err(parse_err(path, 1, "header must be row,col,value"));
    }
    let mut cells: HashMap<(usize, usize), f64> = HashMap::new();
    let mut targets: BTreeMap<usize, f64> = BTreeMap::new();
    let (mut max_row, mut max_col) = (None::<usize>, None::<usize>);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, csv_line(&e), e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row: usize = rec[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad row index {:?}", &rec[0])))?;
        let value: f64 = rec[2]
            .parse()
            .map_err(|_| parse_err(path, line, format!("non-numeric value {:?}", &rec[2])))?;
        max_row = max_row.max(Some(row));
        if &rec[1] == "y" {
            if targets.insert(row, value).is_some() {
                return Err(parse_err(path, line, format!("second target for row {row}")));
            }
            continue;
        }
        let col: usize = rec[1]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad column index {:?}", &rec[1])))?;
        max_col = max_col.max(Some(col));
        if cells.insert((row, col), value).is_some() {
            return Err(parse_err(path, line, format!("duplicate entry ({row}, {col})")));
        }
    }
    let n = max_row.map_or(0, |r| r + 1);
    let m = max_col.map_or(0, |c| c + 1);
    if let Some(missing) = (0..n).find(|r| !targets.contains_key(r)) {
        return Err(parse_err(path, 0, format!("row {missing} has no target (col y) entry")));
    }
    let mut x = DMatrix::zeros(n, m);
    for ((r, c), v) in cells {
        x[(r, c)] = v;
    }
    let y = DVector::from_iterator(n, targets.into_values());
    let names = (0..m).map(|c| format!("x{c}")).collect();
    Dataset::new(x, y, names)
}

/// How the vocabulary threshold counts a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountRule {
    /// Number of documents containing the token.
    #[default]
    DocumentFrequency,
    /// Number of occurrences over the whole corpus.
    TotalCount,
}

/// Lowercased runs of alphanumeric characters.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Bag-of-words counts over tokens meeting `min_count` under `rule`.
/// Features are sorted alphabetically; `y` holds the ratings.
pub fn vectorize_corpus(documents: &[(String, f64)], min_count: usize, rule: CountRule) -> Result<Dataset> {
    if documents.is_empty() {
        return Err(Error::InvalidDataset("corpus is empty".into()));
    }
    let bags: Vec<HashMap<String, usize>> = documents
        .iter()
        .map(|(text, _)| {
            let mut bag = HashMap::new();
            for tok in tokenize(text) {
                *bag.entry(tok).or_insert(0) += 1;
            }
            bag
        })
        .collect();
    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    for bag in &bags {
        for (tok, &c) in bag {
            *totals.entry(tok.as_str()).or_insert(0) += match rule {
                CountRule::DocumentFrequency => 1,
                CountRule::TotalCount => c,
            };
        }
    }
    let vocab: Vec<String> = totals
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .map(|(t, _)| t.to_string())
        .collect();
    if vocab.is_empty() {
        return Err(Error::InvalidDataset(format!(
            "no token reaches the minimum count {min_count}"
        )));
    }
    let x = DMatrix::from_fn(documents.len(), vocab.len(), |i, j| {
        bags[i].get(&vocab[j]).copied().unwrap_or(0) as f64
    });
    let y = DVector::from_iterator(documents.len(), documents.iter().map(|d| d.1));
    Dataset::new(x, y, vocab)
}

/// Reads a `text,rating` CSV.
pub fn read_corpus(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, csv_line(&e), e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(path, 1, format!("no {name:?} column")))
    };
    let (text, rating) = (col("text")?, col("rating")?);
    let mut docs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, csv_line(&e), e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let r: f64 = rec
            .get(rating)
            .ok_or_else(|| parse_err(path, line, "missing rating"))?
            .parse()
            .map_err(|_| parse_err(path, line, "non-numeric rating"))?;
        let t = rec.get(text).ok_or_else(|| parse_err(path, line, "missing text"))?;
        docs.push((t.to_string(), r));
    }
    Ok(docs)
}

/// Per-feature centring and scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1 for constant columns.
    pub std: Vec<f64>,
}

impl Versioned for NormStats {
    const FORMAT: &'static str = "elicit.norm_stats";
    const VERSION: u32 = 1;
}

impl NormStats {
    pub fn fit(data: &Dataset) -> Result<Self> {
        let n = data.n();
        if n == 0 {
            return Err(Error::InvalidDataset("cannot normalise an empty dataset".into()));
        }
        let x = data.x();
        let mut mean = Vec::with_capacity(data.m());
        let mut std = Vec::with_capacity(data.m());
        for col in x.column_iter() {
            let mu = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64;
            mean.push(mu);
            std.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Ok(Self { mean, std })
    }

    /// Applies the stored transform to the covariates; `y` is unchanged.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.m() != self.mean.len() {
            return Err(Error::Shape(format!(
                "normalisation for {} features applied to {}",
                self.mean.len(),
                data.m()
            )));
        }
        let mut x = data.x().clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col.apply(|v| *v = (*v - self.mean[j]) / self.std[j]);
        }
        Dataset::new(x, data.y().clone(), data.feature_names().to_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partitions {
    pub train: Dataset,
    pub test: Dataset,
    pub user_pool: Dataset,
    pub norm: NormStats,
    /// Source rows of each partition.
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub user_rows: Vec<usize>,
}

/// Seeded split into training, test and user-data partitions. Covariates are
/// normalised with statistics of the training and user-data rows together.
pub fn partition_and_normalize(data: &Dataset, n_train: usize, n_test: usize, seed: u64) -> Result<Partitions> {
    if n_train + n_test > data.n() {
        return Err(Error::InvalidConfig {
            field: "n_train + n_test",
            reason: format!("{} exceeds the {} available rows", n_train + n_test, data.n()),
        });
    }
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train_rows = order[..n_train].to_vec();
    let test_rows = order[n_train..n_train + n_test].to_vec();
    let user_rows = order[n_train + n_test..].to_vec();
    let fit_rows: Vec<usize> = train_rows.iter().chain(&user_rows).copied().collect();
    let norm = NormStats::fit(&data.select_rows(&fit_rows))?;
    Ok(Partitions {
        train: norm.apply(&data.select_rows(&train_rows))?,
        test: norm.apply(&data.select_rows(&test_rows))?,
        user_pool: norm.apply(&data.select_rows(&user_rows))?,
        norm,
        train_rows,
        test_rows,
        user_rows,
    })
}

