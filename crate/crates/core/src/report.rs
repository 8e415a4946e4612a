//! Tabular outputs of an analysis and re-thresholding of stored results.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::ObservationSet;
use crate::error::{Error, Result};
use crate::moderation::{bh_adjust, rank_rows};
use crate::pipeline::AnalysisResult;
use crate::scalar::Scalar;

pub const REPORT_COLUMNS: [&str; 12] = [
    "biomarker_id",
    "ate",
    "se_ic",
    "se_moderated",
    "t_moderated",
    "p_raw",
    "p_adj",
    "wald_p",
    "ci_lo",
    "ci_hi",
    "rank",
    "flags",
];

pub const FLAG_SIGNIFICANT: &str = "significant";
pub const FLAG_ZERO_VARIANCE: &str = "zero_variance";
pub const FLAG_LEARNER_DROPPED: &str = "learner_dropped";
pub const FLAG_PROPENSITY_FALLBACK: &str = "propensity_fallback";

/// Six significant digits.
pub fn fmt_short(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // rounding can carry into a new digit (9.999995 -> 10.00000)
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

/// Enough digits to round-trip an `f64`.
pub fn fmt_full(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub biomarker_id: String,
    pub ate: f64,
    pub se_ic: f64,
    pub se_moderated: f64,
    pub t_moderated: f64,
    pub p_raw: f64,
    pub p_adj: f64,
    pub wald_p: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub rank: usize,
    pub flags: Vec<String>,
}

impl ReportRow {
    fn numbers(&self) -> [f64; 9] {
        [
            self.ate,
            self.se_ic,
            self.se_moderated,
            self.t_moderated,
            self.p_raw,
            self.p_adj,
            self.wald_p,
            self.ci_lo,
            self.ci_hi,
        ]
    }

    pub fn is_significant(&self) -> bool {
        self.flags.iter().any(|f| f == FLAG_SIGNIFICANT)
    }
}

/// Sets or clears the significance flag from `p_adj < fdr_q`.
fn set_significance(row: &mut ReportRow, fdr_q: f64) {
    row.flags.retain(|f| f != FLAG_SIGNIFICANT);
    if row.p_adj < fdr_q {
        row.flags.insert(0, FLAG_SIGNIFICANT.into());
    }
}

/// One row per biomarker, sorted by rank.
pub fn build_report<T: Scalar>(result: &AnalysisResult<T>, fdr_q: f64) -> Vec<ReportRow> {
    let n = result.ic.n();
    let root_n = (n as f64).sqrt();
    let mut rows: Vec<ReportRow> = result
        .moderated
        .rows
        .iter()
        .enumerate()
        .map(|(b, m)| {
            let mut flags = Vec::new();
            if m.zero_variance {
                flags.push(FLAG_ZERO_VARIANCE.to_string());
            }
            if result.learners[b].cv_risks.iter().any(Option::is_none) {
                flags.push(FLAG_LEARNER_DROPPED.to_string());
            }
            if result.propensity.fallback_used {
                flags.push(FLAG_PROPENSITY_FALLBACK.to_string());
            }
            let mut row = ReportRow {
                biomarker_id: result.biomarker_ids[b].clone(),
                ate: result.fits[b].psi.as_f64(),
                se_ic: result.fits[b].sigma.as_f64() / root_n,
                se_moderated: m.se_moderated.as_f64(),
                t_moderated: m.t_tilde.as_f64(),
                p_raw: m.p_raw.as_f64(),
                p_adj: m.p_adj.as_f64(),
                wald_p: m.wald_p.as_f64(),
                ci_lo: m.wald_ci_lo.as_f64(),
                ci_hi: m.wald_ci_hi.as_f64(),
                rank: m.rank,
                flags,
            };
            set_significance(&mut row, fdr_q);
            row
        })
        .collect();
    rows.sort_by_key(|r| r.rank);
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Short,
    Full,
}

pub fn render_report(rows: &[ReportRow], precision: Precision) -> String {
    let fmt = match precision {
        Precision::Short => fmt_short,
        Precision::Full => fmt_full,
    };
    let mut out = REPORT_COLUMNS.join("\t");
    out.push('\n');
    for r in rows {
        out.push_str(&r.biomarker_id);
        for v in r.numbers() {
            out.push('\t');
            out.push_str(&fmt(v));
        }
        let flags = if r.flags.is_empty() { "-".to_string() } else { r.flags.join(",") };
        let _ = writeln!(out, "\t{}\t{flags}", r.rank);
    }
    out
}

fn parse_number(s: &str, line: usize, col: &str) -> Result<f64> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s
            .parse::<f64>()
            .map_err(|_| Error::SchemaMismatch(format!("line {line}: {col} is not a number: {s:?}"))),
    }
}

/// Parses a `report.tsv` or `full.tsv` written by [`render_report`].
pub fn parse_report(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::SchemaMismatch("empty file".into()))?;
    let cols: Vec<&str> = header.split('\t').collect();
    if cols != REPORT_COLUMNS {
        return Err(Error::SchemaMismatch(format!("unexpected header {header:?}")));
    }
    if !text.ends_with('\n') {
        return Err(Error::SchemaMismatch("file is truncated (no final newline)".into()));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let lineno = k + 2;
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != REPORT_COLUMNS.len() {
            return Err(Error::SchemaMismatch(format!(
                "line {lineno}: {} fields, expected {}",
                cells.len(),
                REPORT_COLUMNS.len()
            )));
        }
        let mut nums = [0.0; 9];
        for (j, v) in nums.iter_mut().enumerate() {
            *v = parse_number(cells[j + 1], lineno, REPORT_COLUMNS[j + 1])?;
        }
        let rank = cells[10]
            .parse::<usize>()
            .map_err(|_| Error::SchemaMismatch(format!("line {lineno}: bad rank {:?}", cells[10])))?;
        let flags = match cells[11] {
            "-" => Vec::new(),
            "" => return Err(Error::SchemaMismatch(format!("line {lineno}: empty flags"))),
            f => f.split(',').map(str::to_string).collect(),
        };
        for (name, p) in [("p_raw", nums[4]), ("p_adj", nums[5]), ("wald_p", nums[6])] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::SchemaMismatch(format!("line {lineno}: {name} = {p} outside [0, 1]")));
            }
        }
        rows.push(ReportRow {
            biomarker_id: cells[0].to_string(),
            ate: nums[0],
            se_ic: nums[1],
            se_moderated: nums[2],
            t_moderated: nums[3],
            p_raw: nums[4],
            p_adj: nums[5],
            wald_p: nums[6],
            ci_lo: nums[7],
            ci_hi: nums[8],
            rank,
            flags,
        });
    }
    if rows.is_empty() {
        return Err(Error::SchemaMismatch("no data rows".into()));
    }
    Ok(rows)
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let text = fs::read_to_string(path)?;
    parse_report(&text)
}

/// Recomputes adjusted p-values, ranks and significance flags from the
/// stored raw p-values.
pub fn rerank(mut rows: Vec<ReportRow>, fdr_q: f64) -> Result<Vec<ReportRow>> {
    if !(fdr_q > 0.0 && fdr_q < 1.0) {
        return Err(Error::config("fdr", format!("must lie in (0, 1), got {fdr_q}")));
    }
    let p_raw: Vec<f64> = rows.iter().map(|r| r.p_raw).collect();
    let p_adj = bh_adjust(&p_raw)?;
    let ids: Vec<String> = rows.iter().map(|r| r.biomarker_id.clone()).collect();
    let rank = rank_rows(&p_adj, &p_raw, &ids);
    for (i, row) in rows.iter_mut().enumerate() {
        row.p_adj = p_adj[i];
        row.rank = rank[i];
        set_significance(row, fdr_q);
    }
    rows.sort_by_key(|r| r.rank);
    Ok(rows)
}

/// Top-`k` rows of the influence matrix by rank. Subjects are ordered by
/// exposure, then ID; the second line carries the exposure of each column.
pub fn render_topk<T: Scalar>(result: &AnalysisResult<T>, obs: &ObservationSet<T>, k: usize) -> String {
    let ids = obs.subject_ids();
    let a = obs.a().values();
    let mut cols: Vec<usize> = (0..ids.len()).collect();
    cols.sort_by(|&i, &j| a[i].cmp(&a[j]).then_with(|| ids[i].cmp(&ids[j])));
    let mut out = String::from("biomarker_id");
    for &c in &cols {
        out.push('\t');
        out.push_str(&ids[c]);
    }
    out.push_str("\nexposure");
    for &c in &cols {
        let _ = write!(out, "\t{}", a[c]);
    }
    out.push('\n');
    for b in result.moderated.ranked().into_iter().take(k) {
        out.push_str(&result.biomarker_ids[b]);
        for &c in &cols {
            out.push('\t');
            out.push_str(&fmt_short(result.ic.values[[b, c]].as_f64()));
        }
        out.push('\n');
    }
    out
}

/// `key = value` lines describing the variance prior.
pub fn render_hyperparameters<T: Scalar>(result: &AnalysisResult<T>) -> String {
    let m = &result.moderated;
    let mut out = String::new();
    let _ = writeln!(out, "mode = {}", m.mode);
    let _ = writeln!(out, "n = {}", result.ic.n());
    let _ = writeln!(out, "biomarkers = {}", result.ic.n_biomarkers());
    let _ = writeln!(out, "d_b = {}", m.d_b);
    let zero = m.rows.iter().filter(|r| r.zero_variance).count();
    let _ = writeln!(out, "zero_variance_rows = {zero}");
    match &m.hyper {
        Some(h) => {
            let d_b = T::of_usize(m.d_b);
            let _ = writeln!(out, "d0 = {}", fmt_full(h.d0.as_f64()));
            let _ = writeln!(out, "d0_capped = {}", h.d0_capped());
            let _ = writeln!(out, "s0_sq = {}", fmt_full(h.s0_sq.as_f64()));
            let _ = writeln!(out, "rows_used = {}", h.n_used);
            let _ = writeln!(out, "wt = {}", fmt_full(h.row_weight(d_b).as_f64()));
            let _ = writeln!(out, "df_total = {}", fmt_full(m.rows[0].df_total.as_f64()));
        }
        None => {
            let _ = writeln!(out, "d0 = none");
            let _ = writeln!(out, "s0_sq = none");
        }
    }
    out
}
