//! Per-biomarker estimation followed by moderated inference.

use rayon::prelude::*;

use crate::data::{assign_folds, default_fold_count, FoldAssignment, ObservationSet};
use crate::error::{Error, Result};
use crate::learners::{default_library, LearnerSpec, LogisticOptions};
use crate::moderation::{assemble_ic_matrix, moderate, InfluenceMatrix, ModeratedResult, ModerationMode};
use crate::scalar::Scalar;
use crate::super_learner::{cv_stack, CvPlan, OutcomeDesign, Selection, MAX_LIBRARY_SIZE};
use crate::tmle::{estimate_propensity, tmle_ate, validate_bounds, PropensityFit, TmleFit, DEFAULT_G_BOUNDS};

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    /// Number of CV folds; `None` picks 10, or 5 below 50 subjects.
    pub folds: Option<usize>,
    pub seed: u64,
    pub g_bounds: (f64, f64),
    pub library: Vec<LearnerSpec>,
    pub selection: Selection,
    pub moderation: ModerationMode,
    pub alpha: f64,
    pub logistic: LogisticOptions,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            folds: None,
            seed: 1,
            g_bounds: DEFAULT_G_BOUNDS,
            library: default_library(),
            selection: Selection::Weighted,
            moderation: ModerationMode::OneSample,
            alpha: 0.05,
            logistic: LogisticOptions::default(),
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        validate_bounds(self.g_bounds)?;
        if self.library.is_empty() {
            return Err(Error::config("learners", "library is empty"));
        }
        if self.library.len() > MAX_LIBRARY_SIZE {
            return Err(Error::config(
                "learners",
                format!("at most {MAX_LIBRARY_SIZE} learners are supported"),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if let Some(v) = self.folds {
            if v < 2 {
                return Err(Error::config("folds", format!("need at least 2 folds, got {v}")));
            }
        }
        Ok(())
    }

    /// Fold count for `n` subjects; errors name the `folds` field.
    pub fn fold_count(&self, n: usize) -> Result<usize> {
        match self.folds {
            None => Ok(default_fold_count(n)),
            Some(v) if v > n => Err(Error::config(
                "folds",
                format!("{v} folds requested for {n} subjects"),
            )),
            Some(v) => Ok(v),
        }
    }
}

/// Super-learner diagnostics kept per biomarker.
#[derive(Debug, Clone)]
pub struct LearnerSummary<T> {
    pub weights: Vec<T>,
    /// CV risk per library entry; `None` for dropped learners.
    pub cv_risks: Vec<Option<T>>,
    pub ensemble_risk: T,
}

impl<T: Scalar> LearnerSummary<T> {
    pub fn min_candidate_risk(&self) -> T {
        self.cv_risks
            .iter()
            .flatten()
            .fold(T::infinity(), |m, &r| m.min(r))
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisResult<T> {
    pub biomarker_ids: Vec<String>,
    pub fits: Vec<TmleFit<T>>,
    pub learners: Vec<LearnerSummary<T>>,
    pub propensity: PropensityFit<T>,
    pub folds: FoldAssignment,
    pub ic: InfluenceMatrix<T>,
    pub moderated: ModeratedResult<T>,
    /// Warnings worth keeping in the run log.
    pub notes: Vec<String>,
}

/// Runs propensity estimation, the per-biomarker super learner and
/// targeting step, then moderation. Biomarkers are processed in parallel on
/// the current rayon pool; results keep the input order.
pub fn analyze_observations<T: Scalar>(obs: &ObservationSet<T>, cfg: &AnalysisConfig) -> Result<AnalysisResult<T>> {
    cfg.validate()?;
    let n = obs.n();
    let v = cfg.fold_count(n)?;
    let folds = assign_folds(n, v, obs.a(), cfg.seed)?;
    let bounds = (T::of(cfg.g_bounds.0), T::of(cfg.g_bounds.1));
    let propensity = estimate_propensity(obs, bounds, cfg.logistic)?;
    let mut notes = Vec::new();
    if propensity.fallback_used {
        notes.push("propensity: logistic fit failed, marginal exposure rate used".to_string());
    }
    let design = OutcomeDesign::new(obs);
    let plan = CvPlan::new(&design, &folds)?;
    let ids = obs.y().biomarker_ids();

    let per_biomarker: Vec<Result<(TmleFit<T>, LearnerSummary<T>, Vec<String>)>> = (0..obs.n_biomarkers())
        .into_par_iter()
        .map(|b| {
            let y = obs.y().row(b);
            let sl = cv_stack(y, &design, &plan, &cfg.library, cfg.selection)?;
            let fit = tmle_ate(y, obs.a(), &design, &sl, &propensity)?;
            let dropped = sl
                .dropped
                .iter()
                .map(|(l, why)| format!("{}: dropped learner {} ({why})", ids[b], sl.library[*l]))
                .collect();
            let summary = LearnerSummary {
                cv_risks: (0..sl.library.len()).map(|l| sl.cv_risk(l)).collect(),
                weights: sl.weights,
                ensemble_risk: sl.cv_risk_of_ensemble,
            };
            Ok((fit, summary, dropped))
        })
        .collect();

    let mut fits = Vec::with_capacity(per_biomarker.len());
    let mut learners = Vec::with_capacity(per_biomarker.len());
    for item in per_biomarker {
        let (fit, summary, dropped) = item?;
        fits.push(fit);
        learners.push(summary);
        notes.extend(dropped);
    }
    let ic = assemble_ic_matrix(&fits, ids)?;
    let moderated = moderate(&ic, obs.a(), cfg.moderation, T::of(cfg.alpha))?;
    Ok(AnalysisResult {
        biomarker_ids: ids.to_vec(),
        fits,
        learners,
        propensity,
        folds,
        ic,
        moderated,
        notes,
    })
}
