//! Observation set: confounders `W`, binary exposure `A`, and the biomarker
//! expression matrix `Y`, aligned on subject IDs.
//!
//! Canonical on-disk format is tab-separated with a header row. The
//! expression file has one row per biomarker (first column is the biomarker
//! ID, remaining columns are subjects); the phenotype file has one row per
//! subject.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::column_moments;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Continuous,
    Binary,
}

/// `n × p` confounder matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfounderMatrix<T> {
    values: Array2<T>,
    column_names: Vec<String>,
    column_kinds: Vec<ColumnKind>,
}

impl<T: Scalar> ConfounderMatrix<T> {
    pub fn new(
        values: Array2<T>,
        column_names: Vec<String>,
        column_kinds: Vec<ColumnKind>,
    ) -> Result<Self> {
        let p = values.ncols();
        if column_names.len() != p || column_kinds.len() != p {
            return Err(Error::LengthMismatch(format!(
                "{p} confounder columns but {} names and {} kinds",
                column_names.len(),
                column_kinds.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::MissingValue("non-finite confounder value".into()));
        }
        for (j, kind) in column_kinds.iter().enumerate() {
            if *kind == ColumnKind::Binary
                && values
                    .column(j)
                    .iter()
                    .any(|&v| v != T::zero() && v != T::one())
            {
                return Err(Error::config(
                    &column_names[j],
                    "binary confounder contains values other than 0 and 1",
                ));
            }
        }
        Ok(Self {
            values,
            column_names,
            column_kinds,
        })
    }

    /// Builds the matrix, calling a column binary when every entry is 0 or 1.
    pub fn infer(values: Array2<T>, column_names: Vec<String>) -> Result<Self> {
        let kinds = values
            .axis_iter(Axis(1))
            .map(|c| {
                if c.iter().all(|&v| v == T::zero() || v == T::one()) {
                    ColumnKind::Binary
                } else {
                    ColumnKind::Continuous
                }
            })
            .collect();
        Self::new(values, column_names, kinds)
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column_kinds(&self) -> &[ColumnKind] {
        &self.column_kinds
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Continuous columns shifted to mean 0 and scaled to sd 1; binary and
    /// constant columns are left as they are.
    pub fn standardized(&self) -> Array2<T> {
        let (means, sds) = column_moments(self.values.view());
        let mut out = self.values.clone();
        for (j, kind) in self.column_kinds.iter().enumerate() {
            if *kind == ColumnKind::Continuous && sds[j] > T::zero() {
                out.column_mut(j)
                    .mapv_inplace(|v| (v - means[j]) / sds[j]);
            }
        }
        out
    }
}

/// Binary exposure indicator, one entry per subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExposureVector(Vec<u8>);

impl ExposureVector {
    pub fn new(values: Vec<u8>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|&&a| a > 1) {
            return Err(Error::InvalidExposure(bad.to_string()));
        }
        if values.iter().all(|&a| a == 1) {
            return Err(Error::ConstantExposure(1));
        }
        if values.iter().all(|&a| a == 0) {
            return Err(Error::ConstantExposure(0));
        }
        Ok(Self(values))
    }

    /// Skips the both-levels check; for evaluating per-subject formulas.
    #[cfg(test)]
    pub(crate) fn unchecked(values: Vec<u8>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_exposed(&self) -> usize {
        self.0.iter().filter(|&&a| a == 1).count()
    }

    pub fn mean<T: Scalar>(&self) -> T {
        T::of_usize(self.count_exposed()) / T::of_usize(self.0.len())
    }

    pub fn is_exposed(&self, i: usize) -> bool {
        self.0[i] == 1
    }
}

/// `B × n` expression matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix<T> {
    values: Array2<T>,
    biomarker_ids: Vec<String>,
}

impl<T: Scalar> ExpressionMatrix<T> {
    pub fn new(values: Array2<T>, biomarker_ids: Vec<String>) -> Result<Self> {
        if biomarker_ids.len() != values.nrows() {
            return Err(Error::LengthMismatch(format!(
                "{} expression rows but {} biomarker ids",
                values.nrows(),
                biomarker_ids.len()
            )));
        }
        if let Some(dup) = first_duplicate(&biomarker_ids) {
            return Err(Error::Alignment(format!("duplicate biomarker id {dup:?}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::MissingValue("non-finite expression value".into()));
        }
        Ok(Self {
            values,
            biomarker_ids,
        })
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn biomarker_ids(&self) -> &[String] {
        &self.biomarker_ids
    }

    pub fn n_biomarkers(&self) -> usize {
        self.values.nrows()
    }

    pub fn row(&self, b: usize) -> ArrayView1<'_, T> {
        self.values.row(b)
    }
}

/// Aligned `(W, A, Y)` for `n` subjects. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet<T> {
    w: ConfounderMatrix<T>,
    a: ExposureVector,
    y: ExpressionMatrix<T>,
    subject_ids: Vec<String>,
    exposure_name: String,
}

impl<T: Scalar> ObservationSet<T> {
    pub fn new(
        w: ConfounderMatrix<T>,
        a: ExposureVector,
        y: ExpressionMatrix<T>,
        subject_ids: Vec<String>,
    ) -> Result<Self> {
        let n = a.len();
        if n < 2 {
            return Err(Error::LengthMismatch(format!("need at least 2 subjects, got {n}")));
        }
        if w.nrows() != n || y.values().ncols() != n || subject_ids.len() != n {
            return Err(Error::LengthMismatch(format!(
                "exposure has {n} subjects, confounders {}, expression {}, ids {}",
                w.nrows(),
                y.values().ncols(),
                subject_ids.len()
            )));
        }
        if let Some(dup) = first_duplicate(&subject_ids) {
            return Err(Error::Alignment(format!("duplicate subject id {dup:?}")));
        }
        Ok(Self {
            w,
            a,
            y,
            subject_ids,
            exposure_name: "exposure".into(),
        })
    }

    pub fn with_exposure_name(mut self, name: impl Into<String>) -> Self {
        self.exposure_name = name.into();
        self
    }

    pub fn w(&self) -> &ConfounderMatrix<T> {
        &self.w
    }

    pub fn a(&self) -> &ExposureVector {
        &self.a
    }

    pub fn y(&self) -> &ExpressionMatrix<T> {
        &self.y
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn exposure_name(&self) -> &str {
        &self.exposure_name
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn n_biomarkers(&self) -> usize {
        self.y.n_biomarkers()
    }

    /// Subject-permuted copy: subject `k` of the result is subject `perm[k]` here.
    pub fn permute_subjects(&self, perm: &[usize]) -> Result<Self> {
        let w = self.w.values().select(Axis(0), perm);
        let y = self.y.values().select(Axis(1), perm);
        let a = perm.iter().map(|&i| self.a.values()[i]).collect();
        let ids = perm.iter().map(|&i| self.subject_ids[i].clone()).collect();
        Ok(ObservationSet::new(
            ConfounderMatrix::new(w, self.w.column_names.clone(), self.w.column_kinds.clone())?,
            ExposureVector::new(a)?,
            ExpressionMatrix::new(y, self.y.biomarker_ids.clone())?,
            ids,
        )?
        .with_exposure_name(self.exposure_name.clone()))
    }
}

fn first_duplicate(ids: &[String]) -> Option<&str> {
    let mut seen = HashSet::with_capacity(ids.len());
    ids.iter().find(|id| !seen.insert(id.as_str())).map(|s| s.as_str())
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub exposure_column: String,
    pub confounder_columns: Vec<String>,
    pub id_column: String,
}

impl LoadOptions {
    pub fn new(exposure_column: impl Into<String>, confounder_columns: Vec<String>) -> Self {
        Self {
            exposure_column: exposure_column.into(),
            confounder_columns,
            id_column: "id".into(),
        }
    }
}

const MISSING_TOKENS: [&str; 6] = ["", "NA", "na", "NaN", "nan", "."];

fn parse_number<T: Scalar>(raw: &str, path: &Path, what: &str) -> Result<T> {
    let s = raw.trim();
    if MISSING_TOKENS.contains(&s) {
        return Err(Error::MissingValue(format!("{what} in {}", path.display())));
    }
    let v: f64 = s.parse().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        message: format!("{what}: cannot parse {s:?} as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            message: format!("{what}: non-finite value {s:?}"),
        });
    }
    Ok(T::of(v))
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let parse_err = |e: csv::Error| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(std::io::Error::other(format!(
                "{}: {e}",
                path.display()
            ))),
            _ => parse_err(e),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(parse_err)?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(parse_err)?;
        rows.push(rec.iter().map(|s| s.to_string()).collect());
    }
    if header.len() < 2 {
        return Err(Error::Parse {
            path: path.display().to_string(),
            message: "expected at least two tab-separated columns".into(),
        });
    }
    Ok((header, rows))
}

/// Reads and aligns the expression and phenotype tables.
///
/// Subjects keep the order of the expression header. A subject present in
/// only one of the two files is an error.
pub fn load_observation_set<T: Scalar>(
    expression_path: &Path,
    phenotype_path: &Path,
    opts: &LoadOptions,
) -> Result<ObservationSet<T>> {
    let (expr_header, expr_rows) = read_table(expression_path)?;
    let subject_ids: Vec<String> = expr_header[1..].to_vec();
    if let Some(dup) = first_duplicate(&subject_ids) {
        return Err(Error::Alignment(format!(
            "duplicate subject {dup:?} in expression header"
        )));
    }
    let n = subject_ids.len();
    let mut biomarker_ids = Vec::with_capacity(expr_rows.len());
    let mut values = Vec::with_capacity(expr_rows.len() * n);
    for row in &expr_rows {
        biomarker_ids.push(row[0].trim().to_string());
        for (cell, sid) in row[1..].iter().zip(&subject_ids) {
            values.push(parse_number::<T>(
                cell,
                expression_path,
                &format!("biomarker {} subject {sid}", row[0]),
            )?);
        }
    }
    let y = Array2::from_shape_vec((expr_rows.len(), n), values)
        .map_err(|e| Error::LengthMismatch(e.to_string()))?;

    let (ph_header, ph_rows) = read_table(phenotype_path)?;
    let col = |name: &str| -> Result<usize> {
        ph_header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                path: phenotype_path.display().to_string(),
                message: format!("missing column {name:?}"),
            })
    };
    let id_col = col(&opts.id_column)?;
    let a_col = col(&opts.exposure_column)?;
    let w_cols: Vec<usize> = opts
        .confounder_columns
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;

    let mut by_id: HashMap<&str, &Vec<String>> = HashMap::with_capacity(ph_rows.len());
    for row in &ph_rows {
        let id = row[id_col].trim();
        if by_id.insert(id, row).is_some() {
            return Err(Error::Alignment(format!(
                "duplicate subject {id:?} in phenotype table"
            )));
        }
    }
    let expr_set: HashSet<&str> = subject_ids.iter().map(|s| s.as_str()).collect();
    let mut only_pheno: Vec<&str> = by_id
        .keys()
        .copied()
        .filter(|k| !expr_set.contains(k))
        .collect();
    let only_expr: Vec<&str> = subject_ids
        .iter()
        .map(|s| s.as_str())
        .filter(|s| !by_id.contains_key(s))
        .collect();
    if !only_pheno.is_empty() || !only_expr.is_empty() {
        only_pheno.sort_unstable();
        return Err(Error::Alignment(format!(
            "subjects only in expression: {only_expr:?}; only in phenotype: {only_pheno:?}"
        )));
    }

    let p = w_cols.len();
    let mut w = Array2::<T>::zeros((n, p));
    let mut a = Vec::with_capacity(n);
    for (i, sid) in subject_ids.iter().enumerate() {
        let row = by_id[sid.as_str()];
        let raw = row[a_col].trim();
        if MISSING_TOKENS.contains(&raw) {
            return Err(Error::MissingValue(format!("exposure for subject {sid}")));
        }
        let av: f64 = raw
            .parse()
            .map_err(|_| Error::InvalidExposure(raw.to_string()))?;
        a.push(match av {
            x if x == 0.0 => 0,
            x if x == 1.0 => 1,
            _ => return Err(Error::InvalidExposure(raw.to_string())),
        });
        for (j, &c) in w_cols.iter().enumerate() {
            w[[i, j]] = parse_number(
                &row[c],
                phenotype_path,
                &format!("{} for subject {sid}", opts.confounder_columns[j]),
            )?;
        }
    }

    ObservationSet::new(
        ConfounderMatrix::infer(w, opts.confounder_columns.clone())?,
        ExposureVector::new(a)?,
        ExpressionMatrix::new(y, biomarker_ids)?,
        subject_ids,
    )
    .map(|o| o.with_exposure_name(opts.exposure_column.clone()))
}

/// Writes the canonical TSV pair. Reloading with the confounder and exposure
/// names of `obs` and `id_column = "id"` reproduces `obs` exactly.
pub fn write_observation_set<T: Scalar>(
    obs: &ObservationSet<T>,
    expression_path: &Path,
    phenotype_path: &Path,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(expression_path)?);
    write!(out, "biomarker_id")?;
    for sid in obs.subject_ids() {
        write!(out, "\t{sid}")?;
    }
    writeln!(out)?;
    for (b, id) in obs.y().biomarker_ids().iter().enumerate() {
        write!(out, "{id}")?;
        for v in obs.y().row(b) {
            write!(out, "\t{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;

    let mut out = BufWriter::new(File::create(phenotype_path)?);
    write!(out, "id\t{}", obs.exposure_name())?;
    for name in obs.w().column_names() {
        write!(out, "\t{name}")?;
    }
    writeln!(out)?;
    for (i, sid) in obs.subject_ids().iter().enumerate() {
        write!(out, "{sid}\t{}", obs.a().values()[i])?;
        for v in obs.w().values().row(i) {
            write!(out, "\t{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Cross-validation fold labels (1-based) for each subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of_subject: Vec<usize>,
    v: usize,
    seed: u64,
}

impl FoldAssignment {
    pub fn fold_of_subject(&self) -> &[usize] {
        &self.fold_of_subject
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.fold_of_subject.len()
    }

    /// (training indices, validation indices) for fold `fold` in `1..=v`.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::with_capacity(self.n());
        let mut valid = Vec::with_capacity(self.n() / self.v + 1);
        for (i, &f) in self.fold_of_subject.iter().enumerate() {
            if f == fold {
                valid.push(i);
            } else {
                train.push(i);
            }
        }
        (train, valid)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.v];
        for &f in &self.fold_of_subject {
            sizes[f - 1] += 1;
        }
        sizes
    }
}

/// 10 folds, or 5 when `n < 50`; never more than `n`.
pub fn default_fold_count(n: usize) -> usize {
    let v = if n < 50 { 5 } else { 10 };
    v.min(n)
}

/// Exposure-stratified fold assignment.
///
/// Exposed and unexposed subjects are shuffled separately, concatenated, and
/// dealt round-robin into the folds, so fold sizes differ by at most one and
/// every fold sees both exposure levels whenever each level has at least `v`
/// subjects.
pub fn assign_folds(n: usize, v: usize, exposure: &ExposureVector, seed: u64) -> Result<FoldAssignment> {
    if v < 2 || v > n {
        return Err(Error::InvalidFoldCount { v, n });
    }
    if exposure.len() != n {
        return Err(Error::LengthMismatch(format!(
            "fold assignment for {n} subjects but exposure has {}",
            exposure.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exposed: Vec<usize> = (0..n).filter(|&i| exposure.is_exposed(i)).collect();
    let mut unexposed: Vec<usize> = (0..n).filter(|&i| !exposure.is_exposed(i)).collect();
    exposed.shuffle(&mut rng);
    unexposed.shuffle(&mut rng);
    let mut fold_of_subject = vec![0; n];
    for (pos, &i) in exposed.iter().chain(unexposed.iter()).enumerate() {
        fold_of_subject[i] = pos % v + 1;
    }
    Ok(FoldAssignment {
        fold_of_subject,
        v,
        seed,
    })
}
