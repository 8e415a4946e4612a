//! Empirical-Bayes moderation of influence-curve variances across
//! biomarkers, moderated t-statistics, Wald comparison statistics and
//! Benjamini–Hochberg adjustment.
//!
//! Each biomarker contributes a row `IC_b(O_i) + ψ_b` to a `B × n` matrix.
//! Row variances are pooled toward a common prior value `S₀²` with weight
//! `d₀`, estimated by the method of moments on the log scale:
//!
//! ```text
//! e_b       = log σ_b² − ψ(d_b/2) + log(d_b/2)
//! ψ'(d₀/2)  = var(e) − ψ'(d_b/2)
//! S₀²       = exp(mean(e) + ψ(d₀/2) − log(d₀/2))
//! σ̃_b²     = (d₀ S₀² + d_b σ_b²) / (d₀ + d_b)
//! ```

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::data::ExposureVector;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::special::{
    digamma, normal_quantile, normal_two_sided_p, student_t_two_sided_p, trigamma,
    trigamma_inverse, DF_NORMAL_CAP,
};
use crate::tmle::TmleFit;

/// Cap on the prior degrees of freedom (no detectable spread in variances).
pub const D0_MAX: f64 = 1e6;

/// `B × n` matrix of `IC_b(O_i) + ψ_b`.
#[derive(Debug, Clone)]
pub struct InfluenceMatrix<T> {
    pub values: Array2<T>,
    pub psi: Vec<T>,
    pub biomarker_ids: Vec<String>,
    /// Residual degrees of freedom per row, `n − 1`.
    pub d_b: usize,
}

impl<T: Scalar> InfluenceMatrix<T> {
    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_biomarkers(&self) -> usize {
        self.values.nrows()
    }

    /// Sample variance of each row (denominator `n − 1`).
    pub fn row_variances(&self) -> Vec<T> {
        self.values
            .rows()
            .into_iter()
            .map(|r| {
                let v = r.to_vec();
                let m = compensated_mean(&v);
                let ss = compensated_sum(v.iter().map(|&x| (x - m) * (x - m)));
                ss / T::of_usize(v.len().saturating_sub(1).max(1))
            })
            .collect()
    }
}

/// Stacks `ic_b + ψ_b` row by row in the given biomarker order.
pub fn assemble_ic_matrix<T: Scalar>(fits: &[TmleFit<T>], ids: &[String]) -> Result<InfluenceMatrix<T>> {
    if fits.len() != ids.len() {
        return Err(Error::LengthMismatch(format!(
            "{} fits for {} biomarker ids",
            fits.len(),
            ids.len()
        )));
    }
    let n = fits.first().map(|f| f.ic.len()).unwrap_or(0);
    if let Some(bad) = fits.iter().position(|f| f.ic.len() != n) {
        return Err(Error::LengthMismatch(format!(
            "biomarker {} has {} IC values, expected {n}",
            ids[bad],
            fits[bad].ic.len()
        )));
    }
    let mut values = Array2::<T>::zeros((fits.len(), n));
    for (b, fit) in fits.iter().enumerate() {
        for (i, &v) in fit.ic.iter().enumerate() {
            values[[b, i]] = v + fit.psi;
        }
    }
    Ok(InfluenceMatrix {
        values,
        psi: fits.iter().map(|f| f.psi).collect(),
        biomarker_ids: ids.to_vec(),
        d_b: n.saturating_sub(1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EbHyperparameters<T> {
    pub d0: T,
    pub s0_sq: T,
    /// Rows with positive variance that entered the estimate.
    pub n_used: usize,
}

impl<T: Scalar> EbHyperparameters<T> {
    pub fn d0_capped(&self) -> bool {
        self.d0 >= T::of(D0_MAX)
    }

    /// Weight `d_b / (d₀ + d_b)` kept by the per-row variance.
    pub fn row_weight(&self, d_b: T) -> T {
        d_b / (self.d0 + d_b)
    }
}

fn compensated_sum<T: Scalar>(xs: impl Iterator<Item = T>) -> T {
    // Neumaier summation
    let mut sum = T::zero();
    let mut c = T::zero();
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

fn compensated_mean<T: Scalar>(xs: &[T]) -> T {
    compensated_sum(xs.iter().copied()) / T::of_usize(xs.len().max(1))
}

/// Method-of-moments estimate of `(d₀, S₀²)` from per-row variances with
/// `d_b` residual degrees of freedom each. Zero variances are ignored.
pub fn estimate_hyperparameters<T: Scalar>(row_variances: &[T], d_b: usize) -> Result<EbHyperparameters<T>> {
    if d_b == 0 {
        return Err(Error::DegenerateVariances("need at least one residual degree of freedom".into()));
    }
    if row_variances.len() < 2 {
        return Err(Error::DegenerateVariances(format!(
            "need at least 2 biomarkers, got {}",
            row_variances.len()
        )));
    }
    let positive: Vec<T> = row_variances
        .iter()
        .copied()
        .filter(|&v| v > T::zero() && v.is_finite())
        .collect();
    if positive.len() < 2 {
        return Err(Error::DegenerateVariances(format!(
            "only {} of {} rows have positive variance",
            positive.len(),
            row_variances.len()
        )));
    }
    let half = T::of_usize(d_b) / T::of(2.0);
    let offset = half.ln() - digamma(half);
    let e: Vec<T> = positive.iter().map(|&s2| s2.ln() + offset).collect();
    let e_mean = compensated_mean(&e);
    let e_var = compensated_sum(e.iter().map(|&x| (x - e_mean) * (x - e_mean)))
        / T::of_usize(e.len() - 1);
    let excess = e_var - trigamma(half);
    let cap = T::of(D0_MAX);
    let d0 = if excess > T::zero() {
        (T::of(2.0) * trigamma_inverse(excess)).min(cap)
    } else {
        cap
    };
    let half0 = d0 / T::of(2.0);
    let s0_sq = (e_mean + digamma(half0) - half0.ln()).exp();
    Ok(EbHyperparameters {
        d0,
        s0_sq,
        n_used: positive.len(),
    })
}

/// `(d₀ S₀² + d_b σ²) / (d₀ + d_b)`; rows with zero variance get `S₀²`.
pub fn moderate_variances<T: Scalar>(sigma_sq: &[T], hp: &EbHyperparameters<T>, d_b: usize) -> Vec<T> {
    let db = T::of_usize(d_b);
    sigma_sq
        .iter()
        .map(|&s2| {
            if s2 == T::zero() {
                hp.s0_sq
            } else {
                // the clamp only absorbs rounding at the ends of the interval
                let pooled = (hp.d0 * hp.s0_sq + db * s2) / (hp.d0 + db);
                pooled.max(s2.min(hp.s0_sq)).min(s2.max(hp.s0_sq))
            }
        })
        .collect()
}

/// `√n ψ / σ̃`.
pub fn moderated_t<T: Scalar>(psi: &[T], sigma_tilde_sq: &[T], n: usize) -> Vec<T> {
    let root_n = T::of_usize(n).sqrt();
    psi.iter()
        .zip(sigma_tilde_sq)
        .map(|(&p, &s2)| root_n * p / s2.sqrt())
        .collect()
}

/// Two-sided p-values against Student's t with `df_total` degrees of
/// freedom (normal once `df_total` reaches the cap).
pub fn p_values<T: Scalar>(t_tilde: &[T], df_total: T) -> Vec<T> {
    t_tilde
        .iter()
        .map(|&t| student_t_two_sided_p(t, df_total))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldResult<T> {
    pub z: T,
    pub p: T,
    pub ci: (T, T),
}

/// Normal-theory test of `ψ = 0` with standard error `σ/√n` and a two-sided
/// `(1 − α)` interval using the `1 − α/2` quantile.
pub fn wald_inference<T: Scalar>(psi: T, sigma: T, n: usize, alpha: T) -> Result<WaldResult<T>> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::config("alpha", "must lie in (0, 1)"));
    }
    if sigma < T::zero() || sigma.is_nan() {
        return Err(Error::config("sigma", "must be non-negative"));
    }
    let se = sigma / T::of_usize(n).sqrt();
    if se == T::zero() {
        let (z, p) = if psi == T::zero() {
            (T::zero(), T::one())
        } else {
            (psi.signum() * T::infinity(), T::zero())
        };
        return Ok(WaldResult { z, p, ci: (psi, psi) });
    }
    let z = psi / se;
    let q = normal_quantile(T::one() - alpha / T::of(2.0));
    Ok(WaldResult {
        z,
        p: normal_two_sided_p(z),
        ci: (psi - q * se, psi + q * se),
    })
}

/// Benjamini–Hochberg step-up adjusted p-values, in input order.
pub fn bh_adjust<T: Scalar>(p_raw: &[T]) -> Result<Vec<T>> {
    if let Some(&bad) = p_raw.iter().find(|&&p| !(p >= T::zero() && p <= T::one())) {
        return Err(Error::OutOfRangeP(bad.as_f64()));
    }
    let m = p_raw.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_raw[a].partial_cmp(&p_raw[b]).unwrap_or(Ordering::Equal));
    let mf = T::of_usize(m);
    let mut adjusted = vec![T::zero(); m];
    let mut running = T::one();
    for (pos, &i) in order.iter().enumerate().rev() {
        // m/k >= 1, so the max only undoes rounding in m*p/m
        let candidate = (mf * p_raw[i] / T::of_usize(pos + 1)).max(p_raw[i]);
        running = running.min(candidate);
        adjusted[i] = running;
    }
    Ok(adjusted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModerationMode {
    /// Row mean of the IC matrix tested against zero, `d_b = n − 1`.
    #[default]
    OneSample,
    /// Exposed vs unexposed means of each IC-matrix row, `d_b = n − 2`.
    TwoGroup,
    /// Unmoderated Wald inference only.
    Off,
}

impl fmt::Display for ModerationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModerationMode::OneSample => "one-sample",
            ModerationMode::TwoGroup => "two-group",
            ModerationMode::Off => "off",
        })
    }
}

impl FromStr for ModerationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-sample" => Ok(Self::OneSample),
            "two-group" => Ok(Self::TwoGroup),
            "off" => Ok(Self::Off),
            other => Err(Error::config(
                "moderation",
                format!("expected one-sample, two-group or off, got {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeratedRow<T> {
    pub psi: T,
    /// Per-row standard deviation entering moderation.
    pub sigma: T,
    pub sigma_tilde_sq: T,
    /// Standard error of the tested contrast after moderation.
    pub se_moderated: T,
    pub t_tilde: T,
    pub df_total: T,
    pub p_raw: T,
    pub p_adj: T,
    pub wald_p: T,
    pub wald_ci_lo: T,
    pub wald_ci_hi: T,
    pub rank: usize,
    pub zero_variance: bool,
}

#[derive(Debug, Clone)]
pub struct ModeratedResult<T> {
    pub mode: ModerationMode,
    pub hyper: Option<EbHyperparameters<T>>,
    pub d_b: usize,
    pub biomarker_ids: Vec<String>,
    pub rows: Vec<ModeratedRow<T>>,
}

impl<T: Scalar> ModeratedResult<T> {
    /// Row indices in rank order.
    pub fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.rows.len()).collect();
        idx.sort_by_key(|&i| self.rows[i].rank);
        idx
    }
}

/// Ranks `1..=B` by adjusted p, then raw p, then biomarker ID.
pub fn rank_rows<T: Scalar>(p_adj: &[T], p_raw: &[T], ids: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        p_adj[a]
            .partial_cmp(&p_adj[b])
            .unwrap_or(Ordering::Equal)
            .then(p_raw[a].partial_cmp(&p_raw[b]).unwrap_or(Ordering::Equal))
            .then_with(|| ids[a].cmp(&ids[b]))
    });
    let mut rank = vec![0; ids.len()];
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos + 1;
    }
    rank
}

/// Full inference pass over an influence matrix.
pub fn moderate<T: Scalar>(
    matrix: &InfluenceMatrix<T>,
    exposure: &ExposureVector,
    mode: ModerationMode,
    alpha: T,
) -> Result<ModeratedResult<T>> {
    let n = matrix.n();
    let b_count = matrix.n_biomarkers();
    if exposure.len() != n {
        return Err(Error::LengthMismatch(format!(
            "exposure has {} subjects, IC matrix {n}",
            exposure.len()
        )));
    }
    let row_var = matrix.row_variances();
    let sigma_ic: Vec<T> = row_var.iter().map(|v| v.sqrt()).collect();
    let wald: Vec<WaldResult<T>> = matrix
        .psi
        .iter()
        .zip(&sigma_ic)
        .map(|(&p, &s)| wald_inference(p, s, n, alpha))
        .collect::<Result<_>>()?;

    let root_n = T::of_usize(n).sqrt();
    let (hyper, d_b, sigma, sigma_tilde_sq, se_mod, t_tilde, df_total, p_raw) = match mode {
        ModerationMode::Off => {
            let se: Vec<T> = sigma_ic.iter().map(|&s| s / root_n).collect();
            let t: Vec<T> = wald.iter().map(|w| w.z).collect();
            let p: Vec<T> = wald.iter().map(|w| w.p).collect();
            (
                None,
                matrix.d_b,
                sigma_ic.clone(),
                row_var.clone(),
                se,
                t,
                T::infinity(),
                p,
            )
        }
        ModerationMode::OneSample => {
            let d_b = matrix.d_b;
            let hp = estimate_hyperparameters(&row_var, d_b)?;
            let s_tilde = moderate_variances(&row_var, &hp, d_b);
            let t = moderated_t(&matrix.psi, &s_tilde, n);
            let df = (hp.d0 + T::of_usize(d_b)).min(T::of(DF_NORMAL_CAP));
            let p = p_values(&t, df);
            let se = s_tilde.iter().map(|&s2| s2.sqrt() / root_n).collect();
            (Some(hp), d_b, sigma_ic.clone(), s_tilde, se, t, df, p)
        }
        ModerationMode::TwoGroup => {
            let n1 = exposure.count_exposed();
            let n0 = n - n1;
            if n < 3 || n1 == 0 || n0 == 0 {
                return Err(Error::DegenerateVariances(
                    "two-group moderation needs both exposure groups and n >= 3".into(),
                ));
            }
            let d_b = n - 2;
            let mut coef = Vec::with_capacity(b_count);
            let mut pooled = Vec::with_capacity(b_count);
            for row in matrix.values.rows() {
                let (mut g1, mut g0) = (Vec::with_capacity(n1), Vec::with_capacity(n0));
                for (i, &v) in row.iter().enumerate() {
                    if exposure.is_exposed(i) {
                        g1.push(v);
                    } else {
                        g0.push(v);
                    }
                }
                let (m1, m0) = (compensated_mean(&g1), compensated_mean(&g0));
                let ss = compensated_sum(
                    g1.iter()
                        .map(|&x| (x - m1) * (x - m1))
                        .chain(g0.iter().map(|&x| (x - m0) * (x - m0))),
                );
                coef.push(m1 - m0);
                pooled.push(ss / T::of_usize(d_b));
            }
            let hp = estimate_hyperparameters(&pooled, d_b)?;
            let s_tilde = moderate_variances(&pooled, &hp, d_b);
            let unscaled = (T::one() / T::of_usize(n1) + T::one() / T::of_usize(n0)).sqrt();
            let se: Vec<T> = s_tilde.iter().map(|&s2| s2.sqrt() * unscaled).collect();
            let t: Vec<T> = coef.iter().zip(&se).map(|(&c, &s)| c / s).collect();
            let df = (hp.d0 + T::of_usize(d_b)).min(T::of(DF_NORMAL_CAP));
            let p = p_values(&t, df);
            let sig = pooled.iter().map(|v| v.sqrt()).collect();
            (Some(hp), d_b, sig, s_tilde, se, t, df, p)
        }
    };

    let p_adj = bh_adjust(&p_raw)?;
    let rank = rank_rows(&p_adj, &p_raw, &matrix.biomarker_ids);
    let rows = (0..b_count)
        .map(|b| ModeratedRow {
            psi: matrix.psi[b],
            sigma: sigma[b],
            sigma_tilde_sq: sigma_tilde_sq[b],
            se_moderated: se_mod[b],
            t_tilde: t_tilde[b],
            df_total,
            p_raw: p_raw[b],
            p_adj: p_adj[b],
            wald_p: wald[b].p,
            wald_ci_lo: wald[b].ci.0,
            wald_ci_hi: wald[b].ci.1,
            rank: rank[b],
            zero_variance: sigma[b] == T::zero(),
        })
        .collect();
    Ok(ModeratedResult {
        mode,
        hyper,
        d_b,
        biomarker_ids: matrix.biomarker_ids.clone(),
        rows,
    })
}
