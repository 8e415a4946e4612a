//! Base learners behind a common fit/predict interface.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::{column_moments, least_squares, with_intercept, RankPolicy};
use crate::scalar::{expit, Scalar};

/// Features and response for a single fit.
#[derive(Debug, Clone, Copy)]
pub struct Design<'a, T> {
    pub features: ArrayView2<'a, T>,
    pub response: ArrayView1<'a, T>,
}

impl<'a, T: Scalar> Design<'a, T> {
    pub fn new(features: ArrayView2<'a, T>, response: ArrayView1<'a, T>) -> Result<Self> {
        if features.nrows() != response.len() {
            return Err(Error::LengthMismatch(format!(
                "{} feature rows, {} responses",
                features.nrows(),
                response.len()
            )));
        }
        if features.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return Err(Error::MissingValue("non-finite value in design".into()));
        }
        Ok(Self { features, response })
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }
}

/// Entry in the outcome-regression library.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearnerSpec {
    Intercept,
    Ols,
    Ridge(f64),
    Knn(usize),
}

impl LearnerSpec {
    /// Ridge and k-NN see standardized continuous confounders.
    pub fn uses_standardized(&self) -> bool {
        matches!(self, LearnerSpec::Ridge(_) | LearnerSpec::Knn(_))
    }

    pub fn fit<T: Scalar>(&self, design: Design<'_, T>) -> Result<FittedLearner<T>> {
        match *self {
            LearnerSpec::Intercept => fit_intercept(design),
            LearnerSpec::Ols => fit_ols(design),
            LearnerSpec::Ridge(lambda) => fit_ridge(design, T::of(lambda)),
            LearnerSpec::Knn(k) => fit_knn(design, k),
        }
    }
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerSpec::Intercept => write!(f, "intercept"),
            LearnerSpec::Ols => write!(f, "ols"),
            LearnerSpec::Ridge(l) => write!(f, "ridge{l}"),
            LearnerSpec::Knn(k) => write!(f, "knn{k}"),
        }
    }
}

impl FromStr for LearnerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::config("learners", format!("unknown learner {s:?}"));
        match s {
            "intercept" | "mean" => Ok(LearnerSpec::Intercept),
            "ols" | "glm" => Ok(LearnerSpec::Ols),
            _ => {
                if let Some(rest) = s.strip_prefix("ridge") {
                    let l: f64 = rest.parse().map_err(|_| bad())?;
                    if !(l >= 0.0 && l.is_finite()) {
                        return Err(bad());
                    }
                    Ok(LearnerSpec::Ridge(l))
                } else if let Some(rest) = s.strip_prefix("knn") {
                    let k: usize = rest.parse().map_err(|_| bad())?;
                    if k == 0 {
                        return Err(bad());
                    }
                    Ok(LearnerSpec::Knn(k))
                } else {
                    Err(bad())
                }
            }
        }
    }
}

/// `{intercept, ols, ridge λ ∈ {0.01, 0.1, 1, 10}, knn k ∈ {5, 10}}`
pub fn default_library() -> Vec<LearnerSpec> {
    vec![
        LearnerSpec::Intercept,
        LearnerSpec::Ols,
        LearnerSpec::Ridge(0.01),
        LearnerSpec::Ridge(0.1),
        LearnerSpec::Ridge(1.0),
        LearnerSpec::Ridge(10.0),
        LearnerSpec::Knn(5),
        LearnerSpec::Knn(10),
    ]
}

pub fn parse_library(list: &str) -> Result<Vec<LearnerSpec>> {
    let lib: Vec<LearnerSpec> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if lib.is_empty() {
        return Err(Error::config("learners", "library is empty"));
    }
    Ok(lib)
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedLearner<T> {
    Intercept {
        value: T,
        d: usize,
    },
    /// OLS or ridge: `intercept + x·coef`.
    Linear {
        lambda: Option<T>,
        intercept: T,
        coef: Array1<T>,
    },
    Knn {
        k: usize,
        train_x: Array2<T>,
        train_y: Array1<T>,
    },
    /// Coefficients live on the internally standardized feature scale.
    Logistic {
        intercept: T,
        coef: Array1<T>,
        center: Vec<T>,
        scale: Vec<T>,
        iterations: usize,
    },
}

impl<T: Scalar> FittedLearner<T> {
    pub fn dim(&self) -> usize {
        match self {
            FittedLearner::Intercept { d, .. } => *d,
            FittedLearner::Linear { coef, .. } => coef.len(),
            FittedLearner::Knn { train_x, .. } => train_x.ncols(),
            FittedLearner::Logistic { coef, .. } => coef.len(),
        }
    }

    pub fn kind(&self) -> String {
        match self {
            FittedLearner::Intercept { .. } => "intercept".into(),
            FittedLearner::Linear { lambda: None, .. } => "ols".into(),
            FittedLearner::Linear {
                lambda: Some(l), ..
            } => format!("ridge{l}"),
            FittedLearner::Knn { k, .. } => format!("knn{k}"),
            FittedLearner::Logistic { .. } => "logistic".into(),
        }
    }

    /// Logistic coefficients mapped back to the raw feature scale,
    /// `(intercept, slopes)`. `None` for other learners.
    pub fn logistic_coefficients(&self) -> Option<(T, Array1<T>)> {
        match self {
            FittedLearner::Logistic {
                intercept,
                coef,
                center,
                scale,
                ..
            } => {
                let slopes: Array1<T> = coef
                    .iter()
                    .zip(scale)
                    .map(|(&b, &s)| b / s)
                    .collect();
                let shift: T = slopes.iter().zip(center).map(|(&b, &m)| b * m).sum();
                Some((*intercept - shift, slopes))
            }
            _ => None,
        }
    }

    pub fn predict(&self, features: ArrayView2<'_, T>) -> Result<Array1<T>> {
        let d = self.dim();
        if features.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: features.ncols(),
            });
        }
        let m = features.nrows();
        Ok(match self {
            FittedLearner::Intercept { value, .. } => Array1::from_elem(m, *value),
            FittedLearner::Linear {
                intercept, coef, ..
            } => features.dot(coef).mapv(|v| v + *intercept),
            FittedLearner::Knn {
                k,
                train_x,
                train_y,
            } => knn_predict(*k, train_x.view(), train_y.view(), features),
            FittedLearner::Logistic {
                intercept,
                coef,
                center,
                scale,
                ..
            } => {
                let lo = T::of(1e-12);
                let hi = T::one() - lo;
                features
                    .axis_iter(Axis(0))
                    .map(|row| {
                        let eta = *intercept
                            + row
                                .iter()
                                .zip(coef)
                                .zip(center.iter().zip(scale))
                                .map(|((&x, &b), (&c, &s))| b * (x - c) / s)
                                .sum::<T>();
                        expit(eta).max(lo).min(hi)
                    })
                    .collect()
            }
        })
    }
}

pub fn fit_intercept<T: Scalar>(design: Design<'_, T>) -> Result<FittedLearner<T>> {
    let n = design.n();
    if n == 0 {
        return Err(Error::LengthMismatch("empty design".into()));
    }
    Ok(FittedLearner::Intercept {
        value: design.response.sum() / T::of_usize(n),
        d: design.d(),
    })
}

/// Ordinary least squares with an intercept. Rank deficiency is an error.
pub fn fit_ols<T: Scalar>(design: Design<'_, T>) -> Result<FittedLearner<T>> {
    fit_ols_with(design, RankPolicy::Error)
}

pub fn fit_ols_with<T: Scalar>(design: Design<'_, T>, policy: RankPolicy) -> Result<FittedLearner<T>> {
    let x = with_intercept(design.features);
    let fit = least_squares(x.view(), design.response, policy).map_err(|e| match e {
        // report the aliased feature, not the augmented column
        Error::RankDeficient(j) => Error::RankDeficient(j.saturating_sub(1)),
        other => other,
    })?;
    Ok(FittedLearner::Linear {
        lambda: None,
        intercept: fit.coef[0],
        coef: fit.coef.slice(ndarray::s![1..]).to_owned(),
    })
}

/// Ridge regression with an unpenalized intercept: minimizes
/// `RSS + λ‖β‖²` over the slopes.
pub fn fit_ridge<T: Scalar>(design: Design<'_, T>, lambda: T) -> Result<FittedLearner<T>> {
    if !(lambda >= T::zero()) || !lambda.is_finite() {
        return Err(Error::config("lambda", "ridge penalty must be finite and >= 0"));
    }
    let (n, d) = (design.n(), design.d());
    if n == 0 {
        return Err(Error::LengthMismatch("empty design".into()));
    }
    let nf = T::of_usize(n);
    let (means, _) = column_moments(design.features);
    let y_mean = design.response.sum() / nf;

    // [Xc; sqrt(λ) I] β ≈ [yc; 0]
    let mut aug = Array2::<T>::zeros((n + d, d));
    let mut rhs = Array1::<T>::zeros(n + d);
    for i in 0..n {
        for j in 0..d {
            aug[[i, j]] = design.features[[i, j]] - means[j];
        }
        rhs[i] = design.response[i] - y_mean;
    }
    let root = lambda.sqrt();
    for j in 0..d {
        aug[[n + j, j]] = root;
    }
    let policy = if lambda > T::zero() {
        RankPolicy::DropAliased
    } else {
        RankPolicy::Error
    };
    let fit = least_squares(aug.view(), rhs.view(), policy)?;
    let shift: T = fit.coef.iter().zip(&means).map(|(&b, &m)| b * m).sum();
    Ok(FittedLearner::Linear {
        lambda: Some(lambda),
        intercept: y_mean - shift,
        coef: fit.coef,
    })
}

/// k-nearest-neighbour regression (Euclidean distance, ties to the lowest
/// training index). Callers pass standardized features.
pub fn fit_knn<T: Scalar>(design: Design<'_, T>, k: usize) -> Result<FittedLearner<T>> {
    let n = design.n();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    Ok(FittedLearner::Knn {
        k,
        train_x: design.features.to_owned(),
        train_y: design.response.to_owned(),
    })
}

fn knn_predict<T: Scalar>(
    k: usize,
    train_x: ArrayView2<'_, T>,
    train_y: ArrayView1<'_, T>,
    query: ArrayView2<'_, T>,
) -> Array1<T> {
    let n = train_x.nrows();
    let kf = T::of_usize(k);
    let mut dist: Vec<(T, usize)> = Vec::with_capacity(n);
    let by_dist_then_index = |a: &(T, usize), b: &(T, usize)| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
    };
    query
        .axis_iter(Axis(0))
        .map(|q| {
            dist.clear();
            for (i, row) in train_x.axis_iter(Axis(0)).enumerate() {
                let d2: T = row
                    .iter()
                    .zip(q.iter())
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum();
                dist.push((d2, i));
            }
            if k < n {
                dist.select_nth_unstable_by(k - 1, by_dist_then_index);
            }
            let nearest = &mut dist[..k];
            nearest.sort_unstable_by(by_dist_then_index);
            nearest.iter().map(|&(_, i)| train_y[i]).sum::<T>() / kf
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Divergence threshold on the standardized coefficient scale.
    pub max_abs_coef: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-8,
            max_abs_coef: 15.0,
        }
    }
}

/// Main-terms logistic regression by iteratively reweighted least squares.
///
/// Features are centered and scaled internally; columns with zero variance
/// are aliased with the intercept and get a zero coefficient.
pub fn fit_logistic<T: Scalar>(design: Design<'_, T>, max_iter: usize, tol: T) -> Result<FittedLearner<T>> {
    fit_logistic_with(
        design,
        LogisticOptions {
            max_iter,
            tol: tol.as_f64(),
            ..LogisticOptions::default()
        },
    )
}

pub fn fit_logistic_with<T: Scalar>(design: Design<'_, T>, opts: LogisticOptions) -> Result<FittedLearner<T>> {
    let (n, d) = (design.n(), design.d());
    if n == 0 {
        return Err(Error::LengthMismatch("empty design".into()));
    }
    if design
        .response
        .iter()
        .any(|&v| v != T::zero() && v != T::one())
    {
        return Err(Error::config("response", "logistic response must be 0/1"));
    }
    let (center, mut scale) = column_moments(design.features);
    for s in scale.iter_mut() {
        if *s == T::zero() {
            *s = T::one();
        }
    }
    let mut x = Array2::<T>::ones((n, d + 1));
    for i in 0..n {
        for j in 0..d {
            x[[i, j + 1]] = (design.features[[i, j]] - center[j]) / scale[j];
        }
    }
    let y = design.response;
    let tol = T::of(opts.tol);
    let limit = T::of(opts.max_abs_coef);
    let mut beta = Array1::<T>::zeros(d + 1);

    for iter in 1..=opts.max_iter {
        let eta = x.dot(&beta);
        let p = eta.mapv(expit);
        let resid = &y - &p;
        let score = x.t().dot(&resid);
        if score.iter().all(|s| s.abs() < tol) {
            return Ok(logistic_model(beta, center, scale, iter - 1));
        }
        let mut wx = x.clone();
        let mut z = Array1::<T>::zeros(n);
        for i in 0..n {
            let w = (p[i] * (T::one() - p[i])).max(T::min_positive_value().sqrt());
            let sw = w.sqrt();
            wx.row_mut(i).mapv_inplace(|v| v * sw);
            z[i] = sw * (eta[i] + resid[i] / w);
        }
        let next = least_squares(wx.view(), z.view(), RankPolicy::DropAliased)?.coef;
        if next.iter().any(|b| !b.is_finite() || b.abs() > limit) {
            return Err(Error::Separation(format!(
                "coefficient exceeded {} on the standardized scale at iteration {iter}",
                opts.max_abs_coef
            )));
        }
        let change = next
            .iter()
            .zip(beta.iter())
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        beta = next;
        if change < tol {
            return Ok(logistic_model(beta, center, scale, iter));
        }
    }
    Err(Error::Separation(format!(
        "no convergence after {} iterations",
        opts.max_iter
    )))
}

fn logistic_model<T: Scalar>(beta: Array1<T>, center: Vec<T>, scale: Vec<T>, iterations: usize) -> FittedLearner<T> {
    FittedLearner::Logistic {
        intercept: beta[0],
        coef: beta.slice(ndarray::s![1..]).to_owned(),
        center,
        scale,
        iterations,
    }
}

/// Free-function form of [`FittedLearner::predict`].
pub fn predict<T: Scalar>(model: &FittedLearner<T>, features: ArrayView2<'_, T>) -> Result<Array1<T>> {
    model.predict(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn four_points() -> (Array2<f64>, Array1<f64>) {
        (array![[0.0], [1.0], [2.0], [3.0]], array![1.0, 3.0, 5.0, 8.0])
    }

    /// Solves the 2×2 system `(X'X + λ diag(0,1)) b = X'y` by Cramer's rule.
    fn normal_equations_oracle(x: &Array2<f64>, y: &Array1<f64>, lambda: f64) -> (f64, f64) {
        let n = x.nrows() as f64;
        let sx: f64 = x.column(0).sum();
        let sxx: f64 = x.column(0).iter().map(|v| v * v).sum();
        let sy: f64 = y.sum();
        let sxy: f64 = x.column(0).iter().zip(y).map(|(a, b)| a * b).sum();
        let (a11, a12, a22) = (n, sx, sxx + lambda);
        let det = a11 * a22 - a12 * a12;
        ((a22 * sy - a12 * sxy) / det, (a11 * sxy - a12 * sy) / det)
    }

    #[test]
    fn ols_exact_line() {
        let x = array![[0.0_f64], [1.0], [2.0], [5.0]];
        let y = x.column(0).mapv(|v| 2.0 * v);
        let m = fit_ols(Design::new(x.view(), y.view()).unwrap()).unwrap();
        let FittedLearner::Linear { intercept, coef, .. } = &m else { panic!() };
        assert!(intercept.abs() < 1e-12);
        assert!((coef[0] - 2.0).abs() < 1e-12);
        let pred = m.predict(array![[3.0]].view()).unwrap();
        assert!((pred[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn ols_constant_response() {
        let x = array![[0.0_f64, 1.0], [1.0, 0.5], [2.0, 3.0], [5.0, -1.0]];
        let y = Array1::from_elem(4, 4.5);
        let FittedLearner::Linear { intercept, coef, .. } =
            fit_ols(Design::new(x.view(), y.view()).unwrap()).unwrap()
        else {
            panic!()
        };
        assert!((intercept - 4.5).abs() < 1e-12);
        assert!(coef.iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn ols_matches_normal_equations() {
        let (x, y) = four_points();
        let (b0, b1) = normal_equations_oracle(&x, &y, 0.0);
        let FittedLearner::Linear { intercept, coef, .. } =
            fit_ols(Design::new(x.view(), y.view()).unwrap()).unwrap()
        else {
            panic!()
        };
        assert!((intercept - b0).abs() < 1e-10);
        assert!((coef[0] - b1).abs() < 1e-10);
    }

    #[test]
    fn ols_rank_deficiency_is_an_error() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let y = array![1.0, 2.0, 2.5];
        let err = fit_ols(Design::new(x.view(), y.view()).unwrap()).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(1)));
        assert!(fit_ols_with(Design::new(x.view(), y.view()).unwrap(), RankPolicy::DropAliased).is_ok());
    }

    #[test]
    fn ridge_limits_and_closed_form() {
        let (x, y) = four_points();
        let design = Design::new(x.view(), y.view()).unwrap();
        let ols = fit_ols(design).unwrap();
        let r0 = fit_ridge(design, 0.0).unwrap();
        let q = array![[0.5], [7.0]];
        let (a, b) = (ols.predict(q.view()).unwrap(), r0.predict(q.view()).unwrap());
        assert!((&a - &b).iter().all(|v| v.abs() < 1e-10));

        let FittedLearner::Linear { intercept, coef, .. } = fit_ridge(design, 1.0).unwrap() else {
            panic!()
        };
        let (b0, b1) = normal_equations_oracle(&x, &y, 1.0);
        assert!((intercept - b0).abs() < 1e-10, "{intercept} vs {b0}");
        assert!((coef[0] - b1).abs() < 1e-10);

        let FittedLearner::Linear { intercept, coef, .. } = fit_ridge(design, 1e12).unwrap() else {
            panic!()
        };
        assert!(coef[0].abs() < 1e-9);
        assert!((intercept - y.mean().unwrap()).abs() < 1e-8);
    }

    #[test]
    fn ridge_rejects_negative_penalty() {
        let (x, y) = four_points();
        assert!(fit_ridge(Design::new(x.view(), y.view()).unwrap(), -1.0).is_err());
    }

    #[test]
    fn knn_edge_cases() {
        let x = array![[0.0_f64], [1.0], [3.0]];
        let y = array![1.0_f64, 2.0, 6.0];
        let d = Design::new(x.view(), y.view()).unwrap();
        let all = fit_knn(d, 3).unwrap().predict(array![[10.0], [-4.0]].view()).unwrap();
        assert!(all.iter().all(|&v| (v - 3.0).abs() < 1e-15));
        let one = fit_knn(d, 1).unwrap().predict(array![[1.0]].view()).unwrap();
        assert_eq!(one[0], 2.0);
        assert!(matches!(fit_knn(d, 4), Err(Error::InvalidK { k: 4, n: 3 })));
        assert!(matches!(fit_knn(d, 0), Err(Error::InvalidK { .. })));
    }

    #[test]
    fn knn_matches_brute_force() {
        let x = array![[0.0_f64], [1.0], [3.0]];
        let y = array![1.0_f64, 2.0, 6.0];
        let m = fit_knn(Design::new(x.view(), y.view()).unwrap(), 2).unwrap();
        for q in [-1.0, 0.5, 1.9, 2.0, 2.5, 10.0] {
            // exhaustive: sort all (distance, index) pairs
            let mut all: Vec<(f64, usize)> =
                (0..3).map(|i| ((x[[i, 0]] - q as f64).abs(), i)).collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let want = (y[all[0].1] + y[all[1].1]) / 2.0;
            let got = m.predict(array![[q]].view()).unwrap()[0];
            assert_eq!(got, want, "query {q}");
        }
        // q = 0.5 is equidistant from indices 0 and 1; q = 2.0 from 1 and 3
    }

    #[test]
    fn knn_ties_take_lowest_index() {
        let x = array![[1.0], [-1.0], [1.0]];
        let y = array![10.0, 20.0, 30.0];
        let m = fit_knn(Design::new(x.view(), y.view()).unwrap(), 1).unwrap();
        assert_eq!(m.predict(array![[0.0]].view()).unwrap()[0], 10.0);
    }

    #[test]
    fn logistic_intercept_only_is_bernoulli_mean() {
        let x = Array2::<f64>::zeros((10, 0));
        let y = array![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let m = fit_logistic(Design::new(x.view(), y.view()).unwrap(), 50, 1e-8).unwrap();
        let p = m.predict(x.view()).unwrap();
        assert!(p.iter().all(|&v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn logistic_detects_separation() {
        let x = array![[0.0], [0.0], [1.0], [1.0], [0.0], [1.0]];
        let y = x.column(0).to_owned();
        let err = fit_logistic(Design::new(x.view(), y.view()).unwrap(), 50, 1e-8).unwrap_err();
        assert!(matches!(err, Error::Separation(_)), "{err}");
    }

    fn loglik(x: &[f64], y: &[f64], b0: f64, b1: f64) -> f64 {
        x.iter()
            .zip(y)
            .map(|(&xi, &yi)| {
                let eta = b0 + b1 * xi;
                yi * eta - (1.0 + eta.exp()).ln()
            })
            .sum()
    }

    /// Zooming grid search over (b0, b1); independent of IRLS.
    fn grid_oracle(x: &[f64], y: &[f64]) -> (f64, f64) {
        let (mut c0, mut c1, mut half) = (0.0, 0.0, 8.0);
        while half > 1e-10 {
            let step = half / 10.0;
            let mut best = (f64::NEG_INFINITY, c0, c1);
            for i in -10..=10 {
                for j in -10..=10 {
                    let (b0, b1) = (c0 + i as f64 * step, c1 + j as f64 * step);
                    let ll = loglik(x, y, b0, b1);
                    if ll > best.0 {
                        best = (ll, b0, b1);
                    }
                }
            }
            c0 = best.1;
            c1 = best.2;
            half = step * 2.0;
        }
        (c0, c1)
    }

    #[test]
    fn logistic_matches_likelihood_grid() {
        let xs = [-2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
        let ys = [0.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let x = Array2::from_shape_vec((6, 1), xs.to_vec()).unwrap();
        let y = Array1::from(ys.to_vec());
        let m = fit_logistic(Design::new(x.view(), y.view()).unwrap(), 50, 1e-8).unwrap();
        let (b0, b1) = m.logistic_coefficients().unwrap();
        let (o0, o1) = grid_oracle(&xs, &ys);
        assert!((b0 - o0).abs() < 1e-6, "{b0} vs {o0}");
        assert!((b1[0] - o1).abs() < 1e-6, "{} vs {o1}", b1[0]);
    }

    #[test]
    fn logistic_score_equation_holds() {
        let x = array![[0.2, 1.0], [1.5, 0.0], [-0.3, 1.0], [2.2, 1.0], [0.9, 0.0], [-1.4, 0.0], [0.1, 1.0], [1.1, 0.0]];
        let y = array![0.0_f64, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        let m = fit_logistic(Design::new(x.view(), y.view()).unwrap(), 50, 1e-8).unwrap();
        let p = m.predict(x.view()).unwrap();
        let r = &y - &p;
        assert!(r.sum().abs() < 1e-6);
        for j in 0..2 {
            let s: f64 = x.column(j).iter().zip(&r).map(|(a, b)| a * b).sum();
            assert!(s.abs() < 1e-6);
        }
    }

    #[test]
    fn predict_contracts() {
        let m = FittedLearner::Intercept { value: 2.5, d: 2 };
        assert_eq!(m.predict(array![[1.0, 9.0], [3.0, 4.0]].view()).unwrap().to_vec(), vec![2.5, 2.5]);
        assert!(matches!(
            m.predict(array![[1.0]].view()),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        let logit = FittedLearner::Logistic {
            intercept: 0.0,
            coef: array![0.0],
            center: vec![0.0],
            scale: vec![1.0],
            iterations: 0,
        };
        assert_eq!(logit.predict(array![[3.0], [-7.0]].view()).unwrap().to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn library_names_round_trip() {
        for spec in default_library() {
            assert_eq!(spec.to_string().parse::<LearnerSpec>().unwrap(), spec);
        }
        assert!("forest".parse::<LearnerSpec>().is_err());
        assert!(parse_library("").is_err());
    }
}
