//! Synthetic data with known per-biomarker effects and a replicate runner.
//!
//! The generating model is
//!
//! ```text
//! W   ~ N(0, I_p)
//! A   ~ Bernoulli(expit(γ₀ + Wγ))
//! Y_b = ψ_b A + Wβ_b + ε,   ε ~ N(0, noise_sd²)
//! ```
//!
//! so the adjusted mean difference for biomarker `b` is exactly `ψ_b`.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ConfounderMatrix, ExposureVector, ExpressionMatrix, ObservationSet};
use crate::error::{Error, Result};
use crate::moderation::bh_adjust;
use crate::pipeline::{analyze_observations, AnalysisConfig};
use crate::report::fmt_short;
use crate::scalar::{expit, Scalar};
use crate::tmle::naive_difference;

fn default_p() -> usize {
    3
}
fn default_gamma() -> Vec<f64> {
    vec![0.3, -0.2, 0.1]
}
fn default_beta_sd() -> f64 {
    0.5
}
fn default_beta_seed() -> u64 {
    20_070_101
}
fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub n: usize,
    /// Number of biomarkers.
    pub biomarkers: usize,
    #[serde(default = "default_p")]
    pub p: usize,
    /// Explicit effects, one per biomarker. Overrides `n_signals`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_psi: Option<Vec<f64>>,
    /// The first `n_signals` biomarkers get effect `signal_effect`.
    #[serde(default)]
    pub n_signals: usize,
    #[serde(default = "default_one")]
    pub signal_effect: f64,
    #[serde(default)]
    pub gamma0: f64,
    #[serde(default = "default_gamma")]
    pub gamma: Vec<f64>,
    /// Standard deviation of the outcome coefficients on `W`.
    #[serde(default = "default_beta_sd")]
    pub beta_sd: f64,
    #[serde(default = "default_beta_seed")]
    pub beta_seed: u64,
    #[serde(default = "default_one")]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

impl DgpSpec {
    /// Defaults for everything but the sizes.
    pub fn new(n: usize, biomarkers: usize) -> Self {
        Self {
            n,
            biomarkers,
            p: default_p(),
            true_psi: None,
            n_signals: 0,
            signal_effect: 1.0,
            gamma0: 0.0,
            gamma: default_gamma(),
            beta_sd: default_beta_sd(),
            beta_seed: default_beta_seed(),
            noise_sd: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::config("dgp.n", format!("need at least 4 subjects, got {}", self.n)));
        }
        if self.biomarkers == 0 {
            return Err(Error::config("dgp.biomarkers", "must be positive"));
        }
        if self.gamma.len() != self.p {
            return Err(Error::config(
                "dgp.gamma",
                format!("has {} entries for p = {}", self.gamma.len(), self.p),
            ));
        }
        if let Some(psi) = &self.true_psi {
            if psi.len() != self.biomarkers {
                return Err(Error::config(
                    "dgp.true_psi",
                    format!("has {} entries for {} biomarkers", psi.len(), self.biomarkers),
                ));
            }
        } else if self.n_signals > self.biomarkers {
            return Err(Error::config("dgp.n_signals", "exceeds the number of biomarkers"));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::config("dgp.noise_sd", "must be positive"));
        }
        if !(self.beta_sd >= 0.0 && self.beta_sd.is_finite()) {
            return Err(Error::config("dgp.beta_sd", "must be non-negative"));
        }
        let all_finite = self.gamma.iter().chain(std::iter::once(&self.gamma0)).all(|g| g.is_finite());
        if !all_finite {
            return Err(Error::config("dgp.gamma", "must be finite"));
        }
        Ok(())
    }

    pub fn psi(&self) -> Vec<f64> {
        match &self.true_psi {
            Some(v) => v.clone(),
            None => (0..self.biomarkers)
                .map(|b| if b < self.n_signals { self.signal_effect } else { 0.0 })
                .collect(),
        }
    }

    /// Outcome coefficients, `biomarkers × p`, fixed by `beta_seed`.
    pub fn beta(&self) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.beta_seed);
        let mut beta = Array2::zeros((self.biomarkers, self.p));
        if self.beta_sd > 0.0 {
            let dist = Normal::new(0.0, self.beta_sd).expect("validated sd");
            beta.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
        }
        beta
    }
}

/// Draws replicate `replicate_index` from the generating model. The stream
/// is seeded with `seed ^ replicate_index`.
pub fn generate<T: Scalar>(spec: &DgpSpec, replicate_index: u64) -> Result<ObservationSet<T>> {
    spec.validate()?;
    let (n, p, nb) = (spec.n, spec.p, spec.biomarkers);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ replicate_index);
    let mut w = Array2::<f64>::zeros((n, p));
    w.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
    let g: Vec<f64> = w
        .rows()
        .into_iter()
        .map(|row| expit(spec.gamma0 + row.iter().zip(&spec.gamma).map(|(x, c)| x * c).sum::<f64>()))
        .collect();
    // redraw in the (rare) event that every subject lands in one arm
    let a = loop {
        let a: Vec<u8> = g.iter().map(|&gi| (rng.random::<f64>() < gi) as u8).collect();
        let k = a.iter().filter(|&&v| v == 1).count();
        if k > 0 && k < n {
            break a;
        }
    };
    let psi = spec.psi();
    let beta = spec.beta();
    let mut y = Array2::<T>::zeros((nb, n));
    for b in 0..nb {
        for i in 0..n {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let lin: f64 = (0..p).map(|j| w[[i, j]] * beta[[b, j]]).sum();
            y[[b, i]] = T::of(psi[b] * a[i] as f64 + lin + spec.noise_sd * noise);
        }
    }
    let width = n.to_string().len();
    let bwidth = nb.to_string().len();
    let w_names = (1..=p).map(|j| format!("W{j}")).collect();
    let obs = ObservationSet::new(
        ConfounderMatrix::new(
            w.mapv(T::of),
            w_names,
            vec![crate::data::ColumnKind::Continuous; p],
        )?,
        ExposureVector::new(a)?,
        ExpressionMatrix::new(y, (1..=nb).map(|b| format!("bm{b:0bwidth$}")).collect())?,
        (1..=n).map(|i| format!("s{i:0width$}")).collect(),
    )?;
    Ok(obs.with_exposure_name("A"))
}

/// Per-replicate quantities used by the summaries.
#[derive(Debug, Clone)]
pub struct ReplicateRecord {
    pub index: usize,
    pub psi: Vec<f64>,
    pub se: Vec<f64>,
    pub ci: Vec<(f64, f64)>,
    pub p_moderated: Vec<f64>,
    pub p_adj_moderated: Vec<f64>,
    pub wald_p: Vec<f64>,
    pub wald_p_adj: Vec<f64>,
    pub naive: Vec<f64>,
    /// `max_b |mean(IC_b)|`.
    pub max_abs_ic_mean: f64,
    /// `max_b` of ensemble CV risk minus the best candidate CV risk.
    pub max_ensemble_excess: f64,
    /// Per-row IC variances and their moderated counterparts.
    pub sigma_sq: Vec<f64>,
    pub sigma_tilde_sq: Vec<f64>,
    pub s0_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiomarkerSummary {
    pub biomarker_id: String,
    pub true_psi: f64,
    pub bias: f64,
    pub sd_psi: f64,
    pub mean_se: f64,
    pub coverage: f64,
    pub rej_mod: f64,
    pub rej_unmod: f64,
    pub disc_mod: f64,
    pub disc_unmod: f64,
    /// Share of replicates in which this null biomarker was a moderated discovery.
    pub false_disc_mod: f64,
    pub naive_bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub replicates: usize,
    pub alpha: f64,
    pub fdr_q: f64,
    pub mean_disc_mod: f64,
    pub mean_disc_unmod: f64,
    /// Mean false discovery proportion under BH at `fdr_q`.
    pub fdr_mod: f64,
    pub fdr_unmod: f64,
    /// Share of replicates with at least one false discovery.
    pub any_false_mod: f64,
    pub any_false_unmod: f64,
    pub mean_abs_bias: f64,
    pub mean_abs_naive_bias: f64,
    pub max_abs_ic_mean: f64,
    pub max_ensemble_excess: f64,
}

#[derive(Debug, Clone)]
pub struct ReplicateSummary {
    pub biomarkers: Vec<BiomarkerSummary>,
    pub run: RunSummary,
    pub records: Vec<ReplicateRecord>,
}

/// Runs one replicate through the full pipeline.
pub fn run_one<T: Scalar>(spec: &DgpSpec, index: usize, cfg: &AnalysisConfig) -> Result<ReplicateRecord> {
    let wrap = |e: Error| Error::Replicate {
        index,
        source: Box::new(e),
    };
    let obs = generate::<T>(spec, index as u64).map_err(wrap)?;
    let res = analyze_observations(&obs, cfg).map_err(wrap)?;
    let n = obs.n();
    let root_n = (n as f64).sqrt();
    let rows = &res.moderated.rows;
    let wald_p: Vec<f64> = rows.iter().map(|r| r.wald_p.as_f64()).collect();
    let wald_p_adj = bh_adjust(&wald_p).map_err(wrap)?;
    let naive = (0..obs.n_biomarkers())
        .map(|b| naive_difference(obs.y().row(b), obs.a()).as_f64())
        .collect();
    let max_abs_ic_mean = res
        .fits
        .iter()
        .map(|f| (f.ic.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64).abs())
        .fold(0.0, f64::max);
    let max_ensemble_excess = res
        .learners
        .iter()
        .map(|s| (s.ensemble_risk - s.min_candidate_risk()).as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ReplicateRecord {
        index,
        psi: res.fits.iter().map(|f| f.psi.as_f64()).collect(),
        se: res.fits.iter().map(|f| f.sigma.as_f64() / root_n).collect(),
        ci: rows
            .iter()
            .map(|r| (r.wald_ci_lo.as_f64(), r.wald_ci_hi.as_f64()))
            .collect(),
        p_moderated: rows.iter().map(|r| r.p_raw.as_f64()).collect(),
        p_adj_moderated: rows.iter().map(|r| r.p_adj.as_f64()).collect(),
        wald_p,
        wald_p_adj,
        naive,
        max_abs_ic_mean,
        max_ensemble_excess,
        sigma_sq: res.ic.row_variances().iter().map(|v| v.as_f64()).collect(),
        sigma_tilde_sq: rows.iter().map(|r| r.sigma_tilde_sq.as_f64()).collect(),
        s0_sq: res.moderated.hyper.map(|h| h.s0_sq.as_f64()),
    })
}

/// Runs `r` replicates in parallel on the current rayon pool and aggregates
/// them in replicate order.
pub fn run_replicates<T: Scalar>(
    spec: &DgpSpec,
    r: usize,
    cfg: &AnalysisConfig,
    fdr_q: f64,
) -> Result<ReplicateSummary> {
    if r == 0 {
        return Err(Error::config("replicates", "need at least one replicate"));
    }
    if !(fdr_q > 0.0 && fdr_q < 1.0) {
        return Err(Error::config("fdr", format!("must lie in (0, 1), got {fdr_q}")));
    }
    spec.validate()?;
    cfg.validate()?;
    cfg.fold_count(spec.n)?;
    let results: Vec<Result<ReplicateRecord>> = (0..r)
        .into_par_iter()
        .map(|i| run_one::<T>(spec, i, cfg))
        .collect();
    let records = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(summarize(spec, records, cfg.alpha, fdr_q))
}

fn summarize(spec: &DgpSpec, records: Vec<ReplicateRecord>, alpha: f64, fdr_q: f64) -> ReplicateSummary {
    let psi = spec.psi();
    let r = records.len() as f64;
    let prop = |f: &dyn Fn(&ReplicateRecord) -> bool| records.iter().filter(|x| f(x)).count() as f64 / r;
    let width = spec.biomarkers.to_string().len();
    let biomarkers: Vec<BiomarkerSummary> = (0..spec.biomarkers)
        .map(|b| {
            let est: Vec<f64> = records.iter().map(|x| x.psi[b]).collect();
            let m = est.iter().sum::<f64>() / r;
            let sd = if records.len() > 1 {
                (est.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (r - 1.0)).sqrt()
            } else {
                0.0
            };
            let null = psi[b] == 0.0;
            BiomarkerSummary {
                biomarker_id: format!("bm{:0width$}", b + 1),
                true_psi: psi[b],
                bias: m - psi[b],
                sd_psi: sd,
                mean_se: records.iter().map(|x| x.se[b]).sum::<f64>() / r,
                coverage: prop(&|x| x.ci[b].0 <= psi[b] && psi[b] <= x.ci[b].1),
                rej_mod: prop(&|x| x.p_moderated[b] < alpha),
                rej_unmod: prop(&|x| x.wald_p[b] < alpha),
                disc_mod: prop(&|x| x.p_adj_moderated[b] < fdr_q),
                disc_unmod: prop(&|x| x.wald_p_adj[b] < fdr_q),
                false_disc_mod: if null { prop(&|x| x.p_adj_moderated[b] < fdr_q) } else { 0.0 },
                naive_bias: records.iter().map(|x| x.naive[b]).sum::<f64>() / r - psi[b],
            }
        })
        .collect();

    // (discoveries, false discoveries) per replicate
    let counts = |adj: &dyn Fn(&ReplicateRecord) -> &Vec<f64>| -> Vec<(usize, usize)> {
        records
            .iter()
            .map(|x| {
                let disc: Vec<usize> = (0..psi.len()).filter(|&b| adj(x)[b] < fdr_q).collect();
                let false_d = disc.iter().filter(|&&b| psi[b] == 0.0).count();
                (disc.len(), false_d)
            })
            .collect()
    };
    let fdp = |c: &[(usize, usize)]| c.iter().map(|&(d, f)| if d == 0 { 0.0 } else { f as f64 / d as f64 }).sum::<f64>() / r;
    let mean_d = |c: &[(usize, usize)]| c.iter().map(|&(d, _)| d as f64).sum::<f64>() / r;
    let any_f = |c: &[(usize, usize)]| c.iter().filter(|&&(_, f)| f > 0).count() as f64 / r;
    let cm = counts(&|x| &x.p_adj_moderated);
    let cu = counts(&|x| &x.wald_p_adj);
    let nb = biomarkers.len() as f64;
    let run = RunSummary {
        replicates: records.len(),
        alpha,
        fdr_q,
        mean_disc_mod: mean_d(&cm),
        mean_disc_unmod: mean_d(&cu),
        fdr_mod: fdp(&cm),
        fdr_unmod: fdp(&cu),
        any_false_mod: any_f(&cm),
        any_false_unmod: any_f(&cu),
        mean_abs_bias: biomarkers.iter().map(|s| s.bias.abs()).sum::<f64>() / nb,
        mean_abs_naive_bias: biomarkers.iter().map(|s| s.naive_bias.abs()).sum::<f64>() / nb,
        max_abs_ic_mean: records.iter().map(|x| x.max_abs_ic_mean).fold(0.0, f64::max),
        max_ensemble_excess: records
            .iter()
            .map(|x| x.max_ensemble_excess)
            .fold(f64::NEG_INFINITY, f64::max),
    };
    ReplicateSummary {
        biomarkers,
        run,
        records,
    }
}

pub const SUMMARY_COLUMNS: [&str; 13] = [
    "biomarker_id",
    "true_psi",
    "bias",
    "sd_psi",
    "mean_se",
    "coverage",
    "rej_mod",
    "rej_unmod",
    "disc_mod",
    "disc_unmod",
    "false_disc_mod",
    "naive_bias",
    "abs_bias_ratio",
];

/// One row per biomarker.
pub fn render_summary_tsv(summary: &ReplicateSummary) -> String {
    let mut out = SUMMARY_COLUMNS.join("\t");
    out.push('\n');
    for s in &summary.biomarkers {
        let ratio = if s.naive_bias == 0.0 { f64::NAN } else { s.bias.abs() / s.naive_bias.abs() };
        let vals = [
            s.true_psi,
            s.bias,
            s.sd_psi,
            s.mean_se,
            s.coverage,
            s.rej_mod,
            s.rej_unmod,
            s.disc_mod,
            s.disc_unmod,
            s.false_disc_mod,
            s.naive_bias,
            ratio,
        ];
        let cells: Vec<String> = vals.iter().map(|&v| fmt_short(v)).collect();
        let _ = writeln!(out, "{}\t{}", s.biomarker_id, cells.join("\t"));
    }
    out
}

/// Run-level aggregates as `metric<TAB>value` lines.
pub fn render_run_tsv(summary: &ReplicateSummary) -> String {
    let r = &summary.run;
    let mut out = String::from("metric\tvalue\n");
    let _ = writeln!(out, "replicates\t{}", r.replicates);
    for (k, v) in [
        ("alpha", r.alpha),
        ("fdr_q", r.fdr_q),
        ("mean_discoveries_moderated", r.mean_disc_mod),
        ("mean_discoveries_unmoderated", r.mean_disc_unmod),
        ("fdr_moderated", r.fdr_mod),
        ("fdr_unmoderated", r.fdr_unmod),
        ("any_false_discovery_moderated", r.any_false_mod),
        ("any_false_discovery_unmoderated", r.any_false_unmod),
        ("mean_abs_bias", r.mean_abs_bias),
        ("mean_abs_naive_bias", r.mean_abs_naive_bias),
        ("max_abs_ic_mean", r.max_abs_ic_mean),
        ("max_ensemble_risk_excess", r.max_ensemble_excess),
    ] {
        let _ = writeln!(out, "{k}\t{}", fmt_short(v));
    }
    out
}
