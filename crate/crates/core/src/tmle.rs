//! Targeting step for the average treatment effect of a binary exposure.
//!
//! Given an initial outcome regression `Q⁰(a, W)` and a bounded propensity
//! score `g(W) = P(A = 1 | W)`, the fit is moved along the clever covariate
//! `h(A, W) = A/g(W) − (1 − A)/(1 − g(W))` by a no-intercept least-squares
//! regression of the residual on `h`. One step solves the efficient score
//! equation exactly, so the influence curve has empirical mean zero.

use ndarray::{Array1, ArrayView1};

use crate::data::{ExposureVector, ObservationSet};
use crate::error::{Error, Result};
use crate::learners::{fit_logistic_with, Design, FittedLearner, LogisticOptions};
use crate::scalar::{mean, sample_variance, Scalar};
use crate::super_learner::{predict_ensemble, OutcomeDesign, SuperLearnerFit};

/// Default truncation bounds for the propensity score.
pub const DEFAULT_G_BOUNDS: (f64, f64) = (0.025, 0.975);

#[derive(Debug, Clone)]
pub struct PropensityFit<T> {
    /// `g(1 | W_i)` after truncation.
    pub g1: Vec<T>,
    pub bounds: (T, T),
    /// True when the logistic fit failed and `mean(A)` was used instead.
    pub fallback_used: bool,
    pub model: Option<FittedLearner<T>>,
}

pub fn validate_bounds<T: Scalar>(bounds: (T, T)) -> Result<()> {
    let (lo, hi) = bounds;
    if !(T::zero() < lo && lo < hi && hi < T::one()) {
        return Err(Error::config(
            "g-bounds",
            format!("need 0 < lower < upper < 1, got ({lo}, {hi})"),
        ));
    }
    Ok(())
}

/// Main-terms logistic regression of `A` on `W`, truncated to `bounds`.
/// Falls back to the constant `mean(A)` when the fit does not converge.
pub fn estimate_propensity<T: Scalar>(
    obs: &ObservationSet<T>,
    bounds: (T, T),
    opts: LogisticOptions,
) -> Result<PropensityFit<T>> {
    validate_bounds(bounds)?;
    let a = obs.a();
    if a.count_exposed() == 0 || a.count_exposed() == a.len() {
        return Err(Error::ConstantExposure(a.values()[0]));
    }
    let response: Array1<T> = a.values().iter().map(|&v| T::of_usize(v as usize)).collect();
    let design = Design::new(obs.w().values().view(), response.view())?;
    let (raw, model, fallback_used) = match fit_logistic_with(design, opts) {
        Ok(m) => (m.predict(obs.w().values().view())?.to_vec(), Some(m), false),
        Err(Error::Separation(msg)) => {
            log::warn!("propensity fit failed ({msg}); using the marginal exposure rate");
            (vec![a.mean::<T>(); a.len()], None, true)
        }
        Err(e) => return Err(e),
    };
    let (lo, hi) = bounds;
    Ok(PropensityFit {
        g1: raw.into_iter().map(|g| g.max(lo).min(hi)).collect(),
        bounds,
        fallback_used,
        model,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleverCovariate<T> {
    pub h: Vec<T>,
}

/// `h_i = 1/g1_i` for exposed subjects and `−1/(1 − g1_i)` otherwise.
pub fn clever_covariate<T: Scalar>(a: &ExposureVector, g: &PropensityFit<T>) -> CleverCovariate<T> {
    CleverCovariate {
        h: a
            .values()
            .iter()
            .zip(&g.g1)
            .map(|(&ai, &gi)| h_at(ai, gi))
            .collect(),
    }
}

#[inline]
fn h_at<T: Scalar>(a: u8, g1: T) -> T {
    if a == 1 {
        T::one() / g1
    } else {
        -T::one() / (T::one() - g1)
    }
}

/// `ε = Σ h (y − q0) / Σ h²`: least squares of `y` on `h` with offset `q0`
/// and no intercept.
pub fn fluctuate<T: Scalar>(y: ArrayView1<'_, T>, q0_a: &[T], h: &CleverCovariate<T>) -> Result<T> {
    if y.len() != q0_a.len() || y.len() != h.h.len() {
        return Err(Error::LengthMismatch(format!(
            "outcome {}, initial fit {}, covariate {}",
            y.len(),
            q0_a.len(),
            h.h.len()
        )));
    }
    let denom: T = h.h.iter().map(|&v| v * v).sum();
    if denom == T::zero() {
        return Err(Error::DegenerateCovariate);
    }
    let num: T = y
        .iter()
        .zip(q0_a)
        .zip(&h.h)
        .map(|((&yi, &qi), &hi)| hi * (yi - qi))
        .sum();
    Ok(num / denom)
}

#[derive(Debug, Clone)]
pub struct TmleFit<T> {
    /// Targeted estimate `mean(Q¹(1, W) − Q¹(0, W))`.
    pub psi: T,
    /// Untargeted substitution estimate `mean(Q⁰(1, W) − Q⁰(0, W))`.
    pub psi_initial: T,
    pub epsilon: T,
    pub q0_a: Vec<T>,
    pub q1_at0: Vec<T>,
    pub q1_at1: Vec<T>,
    pub ic: Vec<T>,
    /// Sample standard deviation of `ic` (denominator `n − 1`).
    pub sigma: T,
}

/// Targets an initial fit given its counterfactual predictions.
pub fn target_initial_fit<T: Scalar>(
    y: ArrayView1<'_, T>,
    a: &ExposureVector,
    g: &PropensityFit<T>,
    q0_at0: &[T],
    q0_at1: &[T],
) -> Result<TmleFit<T>> {
    let n = y.len();
    if a.len() != n || g.g1.len() != n || q0_at0.len() != n || q0_at1.len() != n {
        return Err(Error::LengthMismatch("targeting inputs differ in length".into()));
    }
    let q0_a: Vec<T> = (0..n)
        .map(|i| if a.is_exposed(i) { q0_at1[i] } else { q0_at0[i] })
        .collect();
    let h = clever_covariate(a, g);
    let epsilon = fluctuate(y, &q0_a, &h)?;
    let q1_at0: Vec<T> = (0..n).map(|i| q0_at0[i] + epsilon * h_at(0, g.g1[i])).collect();
    let q1_at1: Vec<T> = (0..n).map(|i| q0_at1[i] + epsilon * h_at(1, g.g1[i])).collect();
    let nf = T::of_usize(n);
    let psi = (0..n).map(|i| q1_at1[i] - q1_at0[i]).sum::<T>() / nf;
    let psi_initial = (0..n).map(|i| q0_at1[i] - q0_at0[i]).sum::<T>() / nf;
    let ic = influence_curve(y, a, g, &q1_at0, &q1_at1, psi)?;
    let sigma = sample_variance(&ic).sqrt();
    Ok(TmleFit {
        psi,
        psi_initial,
        epsilon,
        q0_a,
        q1_at0,
        q1_at1,
        ic,
        sigma,
    })
}

/// Targeted estimate for one biomarker from its super-learner fit.
pub fn tmle_ate<T: Scalar>(
    y: ArrayView1<'_, T>,
    a: &ExposureVector,
    design: &OutcomeDesign<T>,
    sl: &SuperLearnerFit<T>,
    g: &PropensityFit<T>,
) -> Result<TmleFit<T>> {
    let q0_at0 = predict_ensemble(sl, design, Some(0))?;
    let q0_at1 = predict_ensemble(sl, design, Some(1))?;
    target_initial_fit(
        y,
        a,
        g,
        q0_at0.as_slice().expect("contiguous"),
        q0_at1.as_slice().expect("contiguous"),
    )
}

/// Plug-in influence curve of the ATE:
/// `h(A, W)(Y − Q¹(A, W)) + Q¹(1, W) − Q¹(0, W) − ψ`.
pub fn influence_curve<T: Scalar>(
    y: ArrayView1<'_, T>,
    a: &ExposureVector,
    g: &PropensityFit<T>,
    q1_at0: &[T],
    q1_at1: &[T],
    psi: T,
) -> Result<Vec<T>> {
    let n = y.len();
    if a.len() != n || g.g1.len() != n || q1_at0.len() != n || q1_at1.len() != n {
        return Err(Error::LengthMismatch("influence curve inputs differ in length".into()));
    }
    Ok((0..n)
        .map(|i| {
            let ai = a.values()[i];
            let q_obs = if ai == 1 { q1_at1[i] } else { q1_at0[i] };
            h_at(ai, g.g1[i]) * (y[i] - q_obs) + q1_at1[i] - q1_at0[i] - psi
        })
        .collect())
}

/// Difference in exposed and unexposed sample means.
pub fn naive_difference<T: Scalar>(y: ArrayView1<'_, T>, a: &ExposureVector) -> T {
    let (mut exposed, mut unexposed) = (Vec::new(), Vec::new());
    for (i, &v) in y.iter().enumerate() {
        if a.is_exposed(i) {
            exposed.push(v);
        } else {
            unexposed.push(v);
        }
    }
    mean(&exposed) - mean(&unexposed)
}
