//! Count and covariate tables: loading, writing, validation and alignment.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::AnalysisConfig;
use crate::error::{IfaaError, Result};

/// Nonnegative abundances, samples in rows and taxa in columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    sample_ids: Vec<String>,
    taxon_ids: Vec<String>,
    counts: DMatrix<f64>,
}

fn check_unique(ids: &[String], kind: &'static str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(IfaaError::DuplicateId { kind, id: id.clone() });
        }
    }
    Ok(())
}

impl CountMatrix {
    pub fn new(sample_ids: Vec<String>, taxon_ids: Vec<String>, counts: DMatrix<f64>) -> Result<Self> {
        if counts.nrows() != sample_ids.len() || counts.ncols() != taxon_ids.len() {
            return Err(IfaaError::InvalidData(format!(
                "count matrix is {}x{} but there are {} sample ids and {} taxon ids",
                counts.nrows(),
                counts.ncols(),
                sample_ids.len(),
                taxon_ids.len()
            )));
        }
        check_unique(&sample_ids, "sample")?;
        check_unique(&taxon_ids, "taxon")?;
        for j in 0..counts.ncols() {
            for i in 0..counts.nrows() {
                let v = counts[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(IfaaError::InvalidData(format!(
                        "count for sample '{}', taxon '{}' is {v}; counts must be finite and nonnegative",
                        sample_ids[i], taxon_ids[j]
                    )));
                }
            }
        }
        Ok(CountMatrix { sample_ids, taxon_ids, counts })
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn taxon_ids(&self) -> &[String] {
        &self.taxon_ids
    }

    pub fn counts(&self) -> &DMatrix<f64> {
        &self.counts
    }

    pub fn n_samples(&self) -> usize {
        self.counts.nrows()
    }

    pub fn n_taxa(&self) -> usize {
        self.counts.ncols()
    }

    pub fn taxon_index(&self, id: &str) -> Option<usize> {
        self.taxon_ids.iter().position(|t| t == id)
    }

    pub fn get(&self, sample: usize, taxon: usize) -> f64 {
        self.counts[(sample, taxon)]
    }

    pub fn nonzero_in_sample(&self, sample: usize) -> usize {
        self.counts.row(sample).iter().filter(|&&v| v > 0.0).count()
    }

    pub fn nonzero_in_taxon(&self, taxon: usize) -> usize {
        self.counts.column(taxon).iter().filter(|&&v| v > 0.0).count()
    }

    /// Keep the given rows and columns, in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> CountMatrix {
        let counts = DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.counts[(rows[i], cols[j])]);
        CountMatrix {
            sample_ids: rows.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            taxon_ids: cols.iter().map(|&j| self.taxon_ids[j].clone()).collect(),
            counts,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut header = Vec::with_capacity(self.n_taxa() + 1);
        header.push("sample_id".to_string());
        header.extend(self.taxon_ids.iter().cloned());
        let rows = (0..self.n_samples()).map(|i| {
            let mut row = Vec::with_capacity(self.n_taxa() + 1);
            row.push(self.sample_ids[i].clone());
            row.extend(self.counts.row(i).iter().map(|v| format!("{v}")));
            row
        });
        write_table(path, &header, rows)
    }
}

/// Per-sample covariates split into tested (X) and adjustment (W) blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub sample_ids: Vec<String>,
    pub x: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub x_names: Vec<String>,
    pub w_names: Vec<String>,
}

impl CovariateTable {
    pub fn new(
        sample_ids: Vec<String>,
        x_names: Vec<String>,
        x: DMatrix<f64>,
        w_names: Vec<String>,
        w: DMatrix<f64>,
    ) -> Result<Self> {
        let n = sample_ids.len();
        if x.nrows() != n || w.nrows() != n || x.ncols() != x_names.len() || w.ncols() != w_names.len() {
            return Err(IfaaError::InvalidData("covariate dimensions do not match their names".into()));
        }
        if x_names.is_empty() {
            return Err(IfaaError::InvalidData("at least one tested covariate is required".into()));
        }
        check_unique(&sample_ids, "sample")?;
        let mut all: Vec<String> = x_names.clone();
        all.extend(w_names.iter().cloned());
        check_unique(&all, "covariate")?;
        Ok(CovariateTable { sample_ids, x, w, x_names, w_names })
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn q(&self) -> usize {
        self.x.ncols()
    }

    pub fn s(&self) -> usize {
        self.w.ncols()
    }

    fn select_rows(&self, rows: &[usize]) -> CovariateTable {
        CovariateTable {
            sample_ids: rows.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            x: DMatrix::from_fn(rows.len(), self.q(), |i, j| self.x[(rows[i], j)]),
            w: DMatrix::from_fn(rows.len(), self.s(), |i, j| self.w[(rows[i], j)]),
            x_names: self.x_names.clone(),
            w_names: self.w_names.clone(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut header = vec!["sample_id".to_string()];
        header.extend(self.x_names.iter().cloned());
        header.extend(self.w_names.iter().cloned());
        let rows = (0..self.n_samples()).map(|i| {
            let mut row = vec![self.sample_ids[i].clone()];
            row.extend(self.x.row(i).iter().map(|v| format!("{v}")));
            row.extend(self.w.row(i).iter().map(|v| format!("{v}")));
            row
        });
        write_table(path, &header, rows)
    }
}

pub(crate) fn write_table<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let file = File::create(path).map_err(|e| IfaaError::io(path, e))?;
    let mut w = csv::WriterBuilder::new().from_writer(file);
    let csv_err = |e: csv::Error| IfaaError::Serialization(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| IfaaError::io(path, e))?;
    Ok(())
}

struct RawTable {
    header: Vec<String>,
    ids: Vec<String>,
    cells: Vec<Vec<String>>,
}

fn read_raw(path: &Path) -> Result<RawTable> {
    let file = File::open(path).map_err(|e| IfaaError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let parse_err = |row: usize, message: String| IfaaError::Parse {
        path: path.to_path_buf(),
        row,
        column: String::new(),
        message,
    };
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 2 {
        return Err(parse_err(1, "header needs an id column and at least one data column".into()));
    }
    let mut ids = Vec::new();
    let mut cells = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(line + 2, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(parse_err(
                line + 2,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        ids.push(rec[0].to_string());
        cells.push(rec.iter().skip(1).map(str::to_string).collect());
    }
    Ok(RawTable { header, ids, cells })
}

/// Load a samples-by-taxa count CSV. Row numbers in errors are 1-based file lines.
pub fn load_count_table(path: &Path) -> Result<CountMatrix> {
    let raw = read_raw(path)?;
    let taxa: Vec<String> = raw.header[1..].to_vec();
    let n = raw.ids.len();
    let mut counts = DMatrix::zeros(n, taxa.len());
    for (i, row) in raw.cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            let err = |message: String| IfaaError::Parse {
                path: path.to_path_buf(),
                row: i + 2,
                column: taxa[j].clone(),
                message,
            };
            let v: f64 = cell.parse().map_err(|_| err(format!("'{cell}' is not a number")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(err(format!("{cell} is not a finite nonnegative count")));
            }
            counts[(i, j)] = v;
        }
    }
    CountMatrix::new(raw.ids, taxa, counts)
}

fn parse_covariate(cell: &str) -> Option<f64> {
    if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
        return Some(f64::NAN);
    }
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Load a covariate CSV and partition the requested columns into X and W.
///
/// Empty cells and `NA` load as NaN; validation drops those samples.
pub fn load_covariates(path: &Path, x_names: &[String], w_names: &[String]) -> Result<CovariateTable> {
    if let Some(dup) = x_names.iter().find(|n| w_names.contains(n)) {
        return Err(IfaaError::InvalidData(format!(
            "covariate '{dup}' is listed as both tested (X) and adjustment (W)"
        )));
    }
    let raw = read_raw(path)?;
    let col_of = |name: &String| -> Result<usize> {
        raw.header[1..]
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IfaaError::MissingColumn(name.clone()))
    };
    let x_cols = x_names.iter().map(col_of).collect::<Result<Vec<_>>>()?;
    let w_cols = w_names.iter().map(col_of).collect::<Result<Vec<_>>>()?;
    let n = raw.ids.len();
    let fill = |cols: &[usize]| -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(n, cols.len());
        for i in 0..n {
            for (j, &c) in cols.iter().enumerate() {
                let cell = &raw.cells[i][c];
                m[(i, j)] = parse_covariate(cell).ok_or_else(|| IfaaError::Parse {
                    path: path.to_path_buf(),
                    row: i + 2,
                    column: raw.header[c + 1].clone(),
                    message: format!("'{cell}' is not a number"),
                })?;
            }
        }
        Ok(m)
    };
    let x = fill(&x_cols)?;
    let w = fill(&w_cols)?;
    CovariateTable::new(raw.ids, x_names.to_vec(), x, w_names.to_vec(), w)
}

/// Why a sample or taxon was removed during validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Dropped {
    pub id: String,
    pub reason: String,
}

pub const REASON_FEW_NONZERO: &str = "fewer than 2 nonzero taxa";
pub const REASON_ALL_ZERO: &str = "all-zero taxon";
pub const REASON_NO_COVARIATES: &str = "no covariate row";
pub const REASON_MISSING_COVARIATE: &str = "missing covariate value";

/// Counts and covariates with identical sample order, cleaned for ratio analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedDataset {
    pub counts: CountMatrix,
    pub covariates: CovariateTable,
    pub dropped_samples: Vec<Dropped>,
    pub dropped_taxa: Vec<Dropped>,
}

impl ValidatedDataset {
    pub fn n_samples(&self) -> usize {
        self.counts.n_samples()
    }

    pub fn n_taxa(&self) -> usize {
        self.counts.n_taxa()
    }

    pub fn taxon_ids(&self) -> &[String] {
        self.counts.taxon_ids()
    }
}

/// Align counts with covariates and drop samples and taxa that cannot enter
/// any log-ratio. Output order follows the count table.
pub fn validate_dataset(
    counts: &CountMatrix,
    covariates: &CovariateTable,
    config: &AnalysisConfig,
) -> Result<ValidatedDataset> {
    config.validate()?;
    let cov_index: HashMap<&str, usize> =
        covariates.sample_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    let mut dropped_samples = Vec::new();
    let mut rows = Vec::new();
    let mut cov_rows = Vec::new();
    let mut matched = 0usize;
    for (i, id) in counts.sample_ids().iter().enumerate() {
        let Some(&c) = cov_index.get(id.as_str()) else {
            dropped_samples.push(Dropped { id: id.clone(), reason: REASON_NO_COVARIATES.into() });
            continue;
        };
        matched += 1;
        let missing = covariates.x.row(c).iter().chain(covariates.w.row(c).iter()).any(|v| v.is_nan());
        if missing {
            dropped_samples.push(Dropped { id: id.clone(), reason: REASON_MISSING_COVARIATE.into() });
            continue;
        }
        if counts.nonzero_in_sample(i) < 2 {
            dropped_samples.push(Dropped { id: id.clone(), reason: REASON_FEW_NONZERO.into() });
            continue;
        }
        rows.push(i);
        cov_rows.push(c);
    }
    if matched == 0 {
        return Err(IfaaError::InvalidData(
            "count and covariate tables share no sample ids".into(),
        ));
    }
    if rows.is_empty() {
        return Err(IfaaError::InvalidData("no sample has at least 2 nonzero taxa".into()));
    }

    // Dropping samples can zero out a taxon; dropping all-zero taxa never changes
    // a sample's nonzero count, so this order reaches a fixed point in one pass.
    let mut dropped_taxa = Vec::new();
    let mut cols = Vec::new();
    for j in 0..counts.n_taxa() {
        if rows.iter().any(|&i| counts.get(i, j) > 0.0) {
            cols.push(j);
        } else {
            dropped_taxa.push(Dropped { id: counts.taxon_ids()[j].clone(), reason: REASON_ALL_ZERO.into() });
        }
    }
    for d in &dropped_samples {
        log::info!("dropping sample '{}': {}", d.id, d.reason);
    }
    for d in &dropped_taxa {
        log::info!("dropping taxon '{}': {}", d.id, d.reason);
    }

    let kept_counts = counts.select(&rows, &cols);
    let kept_cov = covariates.select_rows(&cov_rows);
    for (j, name) in kept_cov.x_names.iter().enumerate() {
        let col = kept_cov.x.column(j);
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            return Err(IfaaError::InvalidData(format!(
                "tested covariate '{name}' is constant across retained samples"
            )));
        }
    }
    if config.r_refs > kept_counts.n_taxa() {
        return Err(IfaaError::config(
            "r_refs",
            format!("{} reference taxa requested but only {} taxa remain", config.r_refs, kept_counts.n_taxa()),
        ));
    }
    Ok(ValidatedDataset { counts: kept_counts, covariates: kept_cov, dropped_samples, dropped_taxa })
}
