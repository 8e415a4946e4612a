//! Cross-validated convex stacking of the base learners.
//!
//! Held-out predictions from every learner are combined with weights on the
//! probability simplex chosen to minimize held-out squared error. The weight
//! problem is solved exactly: for each support set the equality-constrained
//! least-squares solution is computed, and the best feasible one is kept.
//! Ties go to the earlier (smaller, then lexicographically lower) support.

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::data::{FoldAssignment, ObservationSet};
use crate::error::{Error, Result};
use crate::learners::{Design, FittedLearner, LearnerSpec};
use crate::linalg::{least_squares, RankPolicy};
use crate::scalar::Scalar;

/// Largest library for which the exact weight solve is attempted.
pub const MAX_LIBRARY_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selection {
    /// Convex combination of all learners.
    #[default]
    Weighted,
    /// Single learner with the smallest CV risk.
    Discrete,
}

/// Outcome-regression features `(A, W)` with `A` in column 0, in raw and
/// standardized form, observed and with `A` set to 0 or 1 for every subject.
#[derive(Debug, Clone)]
pub struct OutcomeDesign<T> {
    raw: [Array2<T>; 3],
    standardized: [Array2<T>; 3],
}

impl<T: Scalar> OutcomeDesign<T> {
    pub fn new(obs: &ObservationSet<T>) -> Self {
        let build = |w: &Array2<T>| {
            let (n, p) = w.dim();
            let mut observed = Array2::<T>::zeros((n, p + 1));
            observed.slice_mut(ndarray::s![.., 1..]).assign(w);
            for i in 0..n {
                observed[[i, 0]] = T::of_usize(obs.a().values()[i] as usize);
            }
            let mut at0 = observed.clone();
            at0.column_mut(0).fill(T::zero());
            let mut at1 = observed.clone();
            at1.column_mut(0).fill(T::one());
            [observed, at0, at1]
        };
        Self {
            raw: build(obs.w().values()),
            standardized: build(&obs.w().standardized()),
        }
    }

    /// `exposure = None` gives the observed design.
    pub fn features(&self, standardized: bool, exposure: Option<u8>) -> ArrayView2<'_, T> {
        let set = if standardized {
            &self.standardized
        } else {
            &self.raw
        };
        let k = match exposure {
            None => 0,
            Some(0) => 1,
            Some(_) => 2,
        };
        set[k].view()
    }

    pub fn n(&self) -> usize {
        self.raw[0].nrows()
    }

    pub fn d(&self) -> usize {
        self.raw[0].ncols()
    }
}

struct FoldSplit<T> {
    train: Vec<usize>,
    valid: Vec<usize>,
    /// [raw, standardized] training and validation features
    train_x: [Array2<T>; 2],
    valid_x: [Array2<T>; 2],
}

/// Fold splits with their feature blocks precomputed; shared by every
/// biomarker in a run.
pub struct CvPlan<T> {
    splits: Vec<FoldSplit<T>>,
    n: usize,
}

impl<T: Scalar> CvPlan<T> {
    pub fn new(design: &OutcomeDesign<T>, folds: &FoldAssignment) -> Result<Self> {
        if folds.n() != design.n() {
            return Err(Error::LengthMismatch(format!(
                "{} fold labels for {} subjects",
                folds.n(),
                design.n()
            )));
        }
        let splits = (1..=folds.v())
            .map(|f| {
                let (train, valid) = folds.split(f);
                let pick = |std: bool, idx: &[usize]| {
                    design.features(std, None).select(Axis(0), idx)
                };
                FoldSplit {
                    train_x: [pick(false, &train), pick(true, &train)],
                    valid_x: [pick(false, &valid), pick(true, &valid)],
                    train,
                    valid,
                }
            })
            .collect();
        Ok(Self {
            splits,
            n: design.n(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn v(&self) -> usize {
        self.splits.len()
    }
}

/// Held-out predictions and risks of the learners that fit on every fold.
#[derive(Debug, Clone)]
pub struct CvRiskTable<T> {
    /// `n × L_active`
    pub cv_predictions: Array2<T>,
    /// Library index of each column of `cv_predictions`.
    pub learner_index: Vec<usize>,
    pub cv_risks: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct SuperLearnerFit<T> {
    pub library: Vec<LearnerSpec>,
    /// One weight per library entry; dropped learners carry zero.
    pub weights: Vec<T>,
    pub refit_learners: Vec<Option<FittedLearner<T>>>,
    pub cv: CvRiskTable<T>,
    pub cv_risk_of_ensemble: T,
    /// `(library index, reason)` for learners excluded before weighting.
    pub dropped: Vec<(usize, String)>,
}

impl<T: Scalar> SuperLearnerFit<T> {
    /// CV risk of library entry `l`, if it survived.
    pub fn cv_risk(&self, l: usize) -> Option<T> {
        self.cv
            .learner_index
            .iter()
            .position(|&i| i == l)
            .map(|c| self.cv.cv_risks[c])
    }
}

fn mse<T: Scalar>(y: ArrayView1<'_, T>, pred: ArrayView1<'_, T>) -> T {
    let n = T::of_usize(y.len());
    y.iter()
        .zip(pred.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        / n
}

/// Cross-validated stacking for one outcome vector.
pub fn cv_stack<T: Scalar>(
    y: ArrayView1<'_, T>,
    design: &OutcomeDesign<T>,
    plan: &CvPlan<T>,
    library: &[LearnerSpec],
    selection: Selection,
) -> Result<SuperLearnerFit<T>> {
    if library.is_empty() {
        return Err(Error::config("learners", "library is empty"));
    }
    if library.len() > MAX_LIBRARY_SIZE {
        return Err(Error::config(
            "learners",
            format!("at most {MAX_LIBRARY_SIZE} learners are supported"),
        ));
    }
    let n = plan.n();
    if y.len() != n {
        return Err(Error::LengthMismatch(format!(
            "outcome has {} entries, design {n}",
            y.len()
        )));
    }

    let mut columns: Vec<Array1<T>> = Vec::with_capacity(library.len());
    let mut learner_index = Vec::with_capacity(library.len());
    let mut dropped = Vec::new();
    'learners: for (l, spec) in library.iter().enumerate() {
        let s = spec.uses_standardized() as usize;
        let mut col = Array1::<T>::zeros(n);
        for split in &plan.splits {
            let y_train = y.select(Axis(0), &split.train);
            let fitted = Design::new(split.train_x[s].view(), y_train.view())
                .and_then(|d| spec.fit(d))
                .and_then(|m| m.predict(split.valid_x[s].view()));
            match fitted {
                Ok(pred) => {
                    for (&i, &p) in split.valid.iter().zip(pred.iter()) {
                        col[i] = p;
                    }
                }
                Err(e) => {
                    warn!("dropping learner {spec}: {e}");
                    dropped.push((l, e.to_string()));
                    continue 'learners;
                }
            }
        }
        columns.push(col);
        learner_index.push(l);
    }
    if columns.is_empty() {
        return Err(Error::AllLearnersFailed);
    }

    let mut z = Array2::<T>::zeros((n, columns.len()));
    for (c, col) in columns.iter().enumerate() {
        z.column_mut(c).assign(col);
    }
    let cv_risks: Vec<T> = columns.iter().map(|c| mse(y, c.view())).collect();

    let active_weights = match selection {
        Selection::Weighted => simplex_least_squares(z.view(), y)?.0,
        Selection::Discrete => {
            let best = argmin_first(&cv_risks);
            let mut w = vec![T::zero(); cv_risks.len()];
            w[best] = T::one();
            w
        }
    };
    let ensemble = z.dot(&Array1::from(active_weights.clone()));
    let cv_risk_of_ensemble = mse(y, ensemble.view());

    let mut weights = vec![T::zero(); library.len()];
    let mut refit_learners = vec![None; library.len()];
    for (c, &l) in learner_index.iter().enumerate() {
        weights[l] = active_weights[c];
        let spec = library[l];
        let x = design.features(spec.uses_standardized(), None);
        match spec.fit(Design::new(x, y)?) {
            Ok(m) => refit_learners[l] = Some(m),
            Err(e) if active_weights[c] == T::zero() => {
                dropped.push((l, format!("full-data refit failed: {e}")));
            }
            Err(e) => return Err(e),
        }
    }

    Ok(SuperLearnerFit {
        library: library.to_vec(),
        weights,
        refit_learners,
        cv: CvRiskTable {
            cv_predictions: z,
            learner_index,
            cv_risks,
        },
        cv_risk_of_ensemble,
        dropped,
    })
}

fn argmin_first<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

/// Minimizes `mean((y - Z w)²)` over the probability simplex.
///
/// Returns the weights and the attained risk. Each support set is tried in
/// order of size; its affine-hull minimizer is kept when all weights are
/// non-negative and the risk improves on the incumbent.
pub fn simplex_least_squares<T: Scalar>(z: ArrayView2<'_, T>, y: ArrayView1<'_, T>) -> Result<(Vec<T>, T)> {
    let (n, l) = z.dim();
    if l == 0 || l > MAX_LIBRARY_SIZE {
        return Err(Error::config("learners", format!("cannot weight {l} learners")));
    }
    if y.len() != n {
        return Err(Error::LengthMismatch("prediction rows vs outcome".into()));
    }
    let rel_tie = T::of(1e-12);
    let mut best_w = vec![T::zero(); l];
    let mut best_risk = T::infinity();
    let mut pred = Array1::<T>::zeros(n);

    let mut subsets: Vec<u32> = (1u32..(1u32 << l)).collect();
    subsets.sort_by_key(|&m| (m.count_ones(), subset_order_key(m, l)));

    for mask in subsets {
        let support: Vec<usize> = (0..l).filter(|&j| mask & (1 << j) != 0).collect();
        let w_support: Vec<T> = if support.len() == 1 {
            vec![T::one()]
        } else {
            let base = support[0];
            let rest = &support[1..];
            let mut diff = Array2::<T>::zeros((n, rest.len()));
            let mut target = Array1::<T>::zeros(n);
            for i in 0..n {
                target[i] = y[i] - z[[i, base]];
                for (c, &j) in rest.iter().enumerate() {
                    diff[[i, c]] = z[[i, j]] - z[[i, base]];
                }
            }
            let Ok(fit) = least_squares(diff.view(), target.view(), RankPolicy::Error) else {
                continue;
            };
            let mut w = Vec::with_capacity(support.len());
            w.push(T::one() - fit.coef.sum());
            w.extend(fit.coef.iter().copied());
            if w.iter().any(|&v| !(v > T::zero())) {
                continue;
            }
            w
        };
        pred.fill(T::zero());
        for (&j, &wj) in support.iter().zip(&w_support) {
            pred.scaled_add(wj, &z.column(j));
        }
        let risk = mse(y, pred.view());
        if best_risk.is_infinite() || risk < best_risk * (T::one() - rel_tie) {
            best_risk = risk;
            best_w.iter_mut().for_each(|v| *v = T::zero());
            for (&j, &wj) in support.iter().zip(&w_support) {
                best_w[j] = wj;
            }
        }
    }
    Ok((best_w, best_risk))
}

/// Lexicographic order of the index list of a subset.
fn subset_order_key(mask: u32, l: usize) -> Vec<usize> {
    (0..l).filter(|&j| mask & (1 << j) != 0).collect()
}

/// `Σ_ℓ w_ℓ · predict(learner_ℓ, (a, W))`, or at the observed exposure when
/// `a_value` is `None`.
pub fn predict_ensemble<T: Scalar>(
    fit: &SuperLearnerFit<T>,
    design: &OutcomeDesign<T>,
    a_value: Option<u8>,
) -> Result<Array1<T>> {
    let mut out = Array1::<T>::zeros(design.n());
    for (l, &w) in fit.weights.iter().enumerate() {
        if w == T::zero() {
            continue;
        }
        let model = fit.refit_learners[l]
            .as_ref()
            .ok_or(Error::AllLearnersFailed)?;
        let x = design.features(fit.library[l].uses_standardized(), a_value);
        let pred = model.predict(x)?;
        out.scaled_add(w, &pred);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{assign_folds, ConfounderMatrix, ExposureVector, ExpressionMatrix};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_obs(n: usize, seed: u64, noise: f64) -> ObservationSet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Array2::zeros((n, 2));
        let mut a = Vec::with_capacity(n);
        let mut y = Array2::zeros((1, n));
        for i in 0..n {
            w[[i, 0]] = rng.random_range(-2.0..2.0);
            w[[i, 1]] = rng.random_range(-1.0..3.0);
            a.push((i % 3 == 0) as u8);
            y[[0, i]] = 1.0 + 0.7 * a[i] as f64 + 0.5 * w[[i, 0]] - 1.2 * w[[i, 1]]
                + noise * rng.random_range(-1.0..1.0);
        }
        ObservationSet::new(
            ConfounderMatrix::infer(w, vec!["w1".into(), "w2".into()]).unwrap(),
            ExposureVector::new(a).unwrap(),
            ExpressionMatrix::new(y, vec!["g".into()]).unwrap(),
            (0..n).map(|i| format!("s{i}")).collect(),
        )
        .unwrap()
    }

    fn setup(obs: &ObservationSet<f64>, v: usize) -> (OutcomeDesign<f64>, CvPlan<f64>) {
        let design = OutcomeDesign::new(obs);
        let folds = assign_folds(obs.n(), v, obs.a(), 1).unwrap();
        let plan = CvPlan::new(&design, &folds).unwrap();
        (design, plan)
    }

    #[test]
    fn single_learner_gets_full_weight() {
        let obs = linear_obs(40, 1, 0.3);
        let (design, plan) = setup(&obs, 5);
        let fit = cv_stack(obs.y().row(0), &design, &plan, &[LearnerSpec::Ols], Selection::Weighted).unwrap();
        assert_eq!(fit.weights, vec![1.0]);
    }

    #[test]
    fn duplicate_learner_gets_zero_weight() {
        let obs = linear_obs(40, 2, 0.3);
        let (design, plan) = setup(&obs, 5);
        let single = cv_stack(obs.y().row(0), &design, &plan, &[LearnerSpec::Ols], Selection::Weighted).unwrap();
        let dup = cv_stack(
            obs.y().row(0),
            &design,
            &plan,
            &[LearnerSpec::Ols, LearnerSpec::Ols],
            Selection::Weighted,
        )
        .unwrap();
        assert_eq!(dup.weights, vec![1.0, 0.0]);
        assert_eq!(dup.cv_risk_of_ensemble, single.cv_risk_of_ensemble);
    }

    /// Exhaustive search over a 0.01 grid on the simplex of two weights.
    fn grid_risk_two(z: ArrayView2<f64>, y: ArrayView1<f64>) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=100 {
            let w = k as f64 / 100.0;
            let r: f64 = (0..y.len())
                .map(|i| (y[i] - w * z[[i, 0]] - (1.0 - w) * z[[i, 1]]).powi(2))
                .sum::<f64>()
                / y.len() as f64;
            if r < best.0 {
                best = (r, w);
            }
        }
        best
    }

    #[test]
    fn exact_linear_outcome_puts_weight_on_ols() {
        let obs = linear_obs(60, 3, 0.0);
        let (design, plan) = setup(&obs, 5);
        let fit = cv_stack(
            obs.y().row(0),
            &design,
            &plan,
            &[LearnerSpec::Intercept, LearnerSpec::Ols],
            Selection::Weighted,
        )
        .unwrap();
        assert!((fit.weights[1] - 1.0).abs() < 1e-6, "{:?}", fit.weights);
        assert!(fit.cv_risk_of_ensemble <= fit.cv_risk(0).unwrap());
        let (grid_risk, grid_w) = grid_risk_two(fit.cv.cv_predictions.view(), obs.y().row(0));
        assert_eq!(grid_w, 0.0);
        assert!((fit.cv_risk_of_ensemble - grid_risk).abs() < 1e-4);
    }

    #[test]
    fn ensemble_never_worse_than_best_learner() {
        for seed in 0..5 {
            let obs = linear_obs(50, 10 + seed, 1.5);
            let (design, plan) = setup(&obs, 5);
            let fit = cv_stack(
                obs.y().row(0),
                &design,
                &plan,
                &crate::learners::default_library(),
                Selection::Weighted,
            )
            .unwrap();
            let best = fit.cv.cv_risks.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(fit.cv_risk_of_ensemble <= best + 1e-10);
            let s: f64 = fit.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(fit.weights.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn discrete_selection_picks_a_vertex() {
        let obs = linear_obs(50, 4, 0.5);
        let (design, plan) = setup(&obs, 5);
        let fit = cv_stack(
            obs.y().row(0),
            &design,
            &plan,
            &[LearnerSpec::Intercept, LearnerSpec::Ols, LearnerSpec::Knn(5)],
            Selection::Discrete,
        )
        .unwrap();
        assert_eq!(fit.weights, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn failing_learners_are_dropped() {
        let obs = linear_obs(20, 5, 0.5);
        let (design, plan) = setup(&obs, 5);
        // 16 training points per fold: k = 18 cannot fit
        let fit = cv_stack(
            obs.y().row(0),
            &design,
            &plan,
            &[LearnerSpec::Knn(18), LearnerSpec::Ols],
            Selection::Weighted,
        )
        .unwrap();
        assert_eq!(fit.weights, vec![0.0, 1.0]);
        assert_eq!(fit.dropped.len(), 1);
        assert!(fit.refit_learners[0].is_none());
        let err = cv_stack(obs.y().row(0), &design, &plan, &[LearnerSpec::Knn(18)], Selection::Weighted).unwrap_err();
        assert!(matches!(err, Error::AllLearnersFailed));
    }

    #[test]
    fn predict_ensemble_combinations() {
        let obs = linear_obs(12, 6, 0.5);
        let design = OutcomeDesign::new(&obs);
        let constant = |c: f64| FittedLearner::Intercept { value: c, d: 3 };
        let mut fit = SuperLearnerFit {
            library: vec![LearnerSpec::Intercept, LearnerSpec::Intercept],
            weights: vec![1.0, 0.0],
            refit_learners: vec![Some(constant(2.0)), Some(constant(4.0))],
            cv: CvRiskTable {
                cv_predictions: Array2::zeros((12, 2)),
                learner_index: vec![0, 1],
                cv_risks: vec![0.0, 0.0],
            },
            cv_risk_of_ensemble: 0.0,
            dropped: vec![],
        };
        let p = predict_ensemble(&fit, &design, Some(1)).unwrap();
        assert!(p.iter().all(|&v| v == 2.0));
        fit.weights = vec![0.5, 0.5];
        let p = predict_ensemble(&fit, &design, Some(0)).unwrap();
        assert!(p.iter().all(|&v| v == 3.0));

        let ols = FittedLearner::Linear {
            lambda: None,
            intercept: 0.3,
            coef: array![1.7, 0.2, -0.4],
        };
        fit.library = vec![LearnerSpec::Ols];
        fit.weights = vec![1.0];
        fit.refit_learners = vec![Some(ols)];
        let p0 = predict_ensemble(&fit, &design, Some(0)).unwrap();
        let p1 = predict_ensemble(&fit, &design, Some(1)).unwrap();
        assert!((&p1 - &p0).iter().all(|&d| (d - 1.7).abs() < 1e-12));
    }

    #[test]
    fn simplex_solve_interior_optimum() {
        // y is exactly the midpoint of two prediction columns
        let z = array![[0.0_f64, 2.0], [1.0, 3.0], [4.0, 0.0], [2.0, 2.0]];
        let y = array![1.0, 2.0, 2.0, 2.0];
        let (w, risk) = simplex_least_squares(z.view(), y.view()).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
        assert!(risk < 1e-20);
    }
}
