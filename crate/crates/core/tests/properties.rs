use ndarray::{Array1, Array2};
use proptest::prelude::*;

use modtmle::data::{load_observation_set, write_observation_set, LoadOptions};
use modtmle::learners::{fit_ridge, Design, FittedLearner, LearnerSpec};
use modtmle::moderation::{bh_adjust, ModerationMode, estimate_hyperparameters, moderate_variances};
use modtmle::super_learner::{cv_stack, simplex_least_squares, CvPlan, OutcomeDesign, Selection};
use modtmle::tmle::{target_initial_fit, PropensityFit};
use modtmle::{
    analyze_observations, assign_folds, generate, AnalysisConfig, DgpSpec, ExposureVector, ObservationSet,
};

fn exposure_strategy(max_n: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..2, 4..max_n).prop_map(|mut a| {
        a[0] = 1;
        a[1] = 0;
        a
    })
}

fn propensity(g1: Vec<f64>) -> PropensityFit<f64> {
    PropensityFit {
        g1,
        bounds: (0.025, 0.975),
        fallback_used: false,
        model: None,
    }
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

/// Random targeting instance: exposure, propensity, initial fits, outcome.
fn targeting_instance() -> impl Strategy<Value = (Vec<u8>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    exposure_strategy(25).prop_flat_map(|a| {
        let n = a.len();
        (
            Just(a),
            prop::collection::vec(0.05f64..0.95, n),
            prop::collection::vec(-3.0f64..3.0, n),
            prop::collection::vec(-3.0f64..3.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn folds_partition_subjects(a in exposure_strategy(200), v in 2usize..12, seed in any::<u64>()) {
        let n = a.len();
        let v = v.min(n);
        let e = ExposureVector::new(a).unwrap();
        let f = assign_folds(n, v, &e, seed).unwrap();
        let sizes = f.sizes();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut seen = vec![0; n];
        for k in 1..=v {
            let (train, valid) = f.split(k);
            prop_assert_eq!(train.len() + valid.len(), n);
            for i in valid {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn ridge_coefficient_norm_shrinks(
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 6..30),
        noise in prop::collection::vec(-1.0f64..1.0, 30),
        lambdas in (0.0f64..5.0, 0.0f64..5.0),
    ) {
        let n = rows.len();
        let x = Array2::from_shape_fn((n, 3), |(i, j)| rows[i][j]);
        let y: Array1<f64> = (0..n).map(|i| x[[i, 0]] - 2.0 * x[[i, 2]] + noise[i]).collect();
        let (lo, hi) = if lambdas.0 <= lambdas.1 { lambdas } else { (lambdas.1, lambdas.0) };
        let norm = |l: f64| {
            match fit_ridge(Design::new(x.view(), y.view()).unwrap(), l) {
                Ok(FittedLearner::Linear { coef, .. }) => Some(coef.dot(&coef)),
                _ => None,
            }
        };
        if let (Some(a), Some(b)) = (norm(lo.max(1e-6)), norm(hi.max(1e-6))) {
            prop_assert!(b <= a * (1.0 + 1e-9) + 1e-12, "{} > {}", b, a);
        }
    }

    #[test]
    fn bh_is_monotone_and_bounded(p in prop::collection::vec(0.0f64..=1.0, 1..40)) {
        let adj = bh_adjust(&p).unwrap();
        for i in 0..p.len() {
            prop_assert!(adj[i] >= p[i] && adj[i] <= 1.0);
            for j in 0..p.len() {
                if p[i] <= p[j] {
                    prop_assert!(adj[i] <= adj[j]);
                }
            }
        }
    }

    #[test]
    fn moderated_variances_are_convex_and_less_spread(
        s2 in prop::collection::vec(0.01f64..50.0, 3..60),
        d_b in 1usize..200,
    ) {
        let hp = estimate_hyperparameters(&s2, d_b).unwrap();
        let t2 = moderate_variances(&s2, &hp, d_b);
        for (a, b) in s2.iter().zip(&t2) {
            prop_assert!(a.min(hp.s0_sq) <= *b && *b <= a.max(hp.s0_sq));
        }
        let log_raw: Vec<f64> = s2.iter().map(|v| v.ln()).collect();
        let log_mod: Vec<f64> = t2.iter().map(|v| v.ln()).collect();
        prop_assert!(variance(&log_mod) <= variance(&log_raw) * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn weights_lie_on_simplex_and_beat_candidates(
        cols in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 12), 1..5),
        y in prop::collection::vec(-2.0f64..2.0, 12),
    ) {
        let l = cols.len();
        let z = Array2::from_shape_fn((12, l), |(i, j)| cols[j][i]);
        let y = Array1::from(y);
        let (w, risk) = simplex_least_squares(z.view(), y.view()).unwrap();
        prop_assert!(w.iter().all(|&v| v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for j in 0..l {
            let single = (0..12).map(|i| (y[i] - z[[i, j]]).powi(2)).sum::<f64>() / 12.0;
            prop_assert!(risk <= single + 1e-10);
        }
    }

    #[test]
    fn influence_curve_has_mean_zero((a, g, q0, q1, y) in targeting_instance()) {
        let e = ExposureVector::new(a).unwrap();
        let fit = target_initial_fit(Array1::from(y).view(), &e, &propensity(g), &q0, &q1).unwrap();
        let m = fit.ic.iter().sum::<f64>() / fit.ic.len() as f64;
        prop_assert!(m.abs() <= 1e-10, "{}", m);
    }

    #[test]
    fn second_fluctuation_is_a_no_op((a, g, q0, q1, y) in targeting_instance()) {
        let e = ExposureVector::new(a).unwrap();
        let g = propensity(g);
        let y = Array1::from(y);
        let first = target_initial_fit(y.view(), &e, &g, &q0, &q1).unwrap();
        let second = target_initial_fit(y.view(), &e, &g, &first.q1_at0, &first.q1_at1).unwrap();
        prop_assert!(second.epsilon.abs() <= 1e-10);
        prop_assert!((second.psi - first.psi).abs() <= 1e-10);
    }

    #[test]
    fn targeted_estimate_equals_aipw_at_updated_fit((a, g, q0, q1, y) in targeting_instance()) {
        let e = ExposureVector::new(a.clone()).unwrap();
        let fit = target_initial_fit(Array1::from(y.clone()).view(), &e, &propensity(g.clone()), &q0, &q1).unwrap();
        let n = a.len();
        let aipw = (0..n)
            .map(|i| {
                let (h, qobs) = if a[i] == 1 {
                    (1.0 / g[i], fit.q1_at1[i])
                } else {
                    (-1.0 / (1.0 - g[i]), fit.q1_at0[i])
                };
                h * (y[i] - qobs) + fit.q1_at1[i] - fit.q1_at0[i]
            })
            .sum::<f64>()
            / n as f64;
        prop_assert!((fit.psi - aipw).abs() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn observation_set_round_trips_through_tsv(seed in any::<u64>(), n in 6usize..30, b in 1usize..5) {
        let spec = DgpSpec { seed, n_signals: 1.min(b), ..DgpSpec::new(n, b) };
        let obs = generate::<f64>(&spec, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (e, p) = (dir.path().join("e.tsv"), dir.path().join("p.tsv"));
        write_observation_set(&obs, &e, &p).unwrap();
        let opts = LoadOptions::new("A", vec!["W1".into(), "W2".into(), "W3".into()]);
        let back = load_observation_set::<f64>(&e, &p, &opts).unwrap();
        prop_assert_eq!(back.y().values(), obs.y().values());
        prop_assert_eq!(back.w().values(), obs.w().values());
        prop_assert_eq!(back.a().values(), obs.a().values());
        prop_assert_eq!(back.subject_ids(), obs.subject_ids());
    }

    #[test]
    fn subject_order_does_not_matter_without_cv_randomness(seed in any::<u64>(), shift in 1usize..20) {
        let spec = DgpSpec { seed, n_signals: 1, ..DgpSpec::new(40, 2) };
        let obs = generate::<f64>(&spec, 0).unwrap();
        let perm: Vec<usize> = (0..obs.n()).map(|i| (i + shift) % obs.n()).collect();
        let moved = obs.permute_subjects(&perm).unwrap();
        let cfg = AnalysisConfig { library: vec![LearnerSpec::Ols], ..AnalysisConfig::default() };
        let a = analyze_observations(&obs, &cfg).unwrap();
        let b = analyze_observations(&moved, &cfg).unwrap();
        for (x, y) in a.fits.iter().zip(&b.fits) {
            prop_assert!((x.psi - y.psi).abs() <= 1e-10);
            prop_assert!((x.sigma - y.sigma).abs() <= 1e-10);
        }
    }

    #[test]
    fn estimates_follow_affine_outcome_changes(seed in any::<u64>(), scale in 0.1f64..10.0, shift in -50.0f64..50.0) {
        let spec = DgpSpec { seed, n_signals: 1, ..DgpSpec::new(50, 1) };
        let obs = generate::<f64>(&spec, 0).unwrap();
        let y2 = obs.y().values().mapv(|v| scale * v + shift);
        let moved = ObservationSet::new(
            obs.w().clone(),
            obs.a().clone(),
            modtmle::ExpressionMatrix::new(y2, obs.y().biomarker_ids().to_vec()).unwrap(),
            obs.subject_ids().to_vec(),
        )
        .unwrap();
        // a single biomarker cannot be moderated
        let cfg = AnalysisConfig { moderation: ModerationMode::Off, ..AnalysisConfig::default() };
        let a = analyze_observations(&obs, &cfg).unwrap();
        let b = analyze_observations(&moved, &cfg).unwrap();
        let (x, y) = (&a.fits[0], &b.fits[0]);
        let tol = 1e-8 * (1.0 + scale * x.psi.abs() + shift.abs());
        prop_assert!((y.psi - scale * x.psi).abs() <= tol, "{} vs {}", y.psi, scale * x.psi);
        prop_assert!((y.sigma - scale * x.sigma).abs() <= 1e-8 * (1.0 + scale * x.sigma) + tol);
    }

    #[test]
    fn ensemble_never_loses_to_its_best_candidate(seed in any::<u64>()) {
        let spec = DgpSpec { seed, n_signals: 1, ..DgpSpec::new(60, 1) };
        let obs = generate::<f64>(&spec, 0).unwrap();
        let design = OutcomeDesign::new(&obs);
        let folds = assign_folds(obs.n(), 5, obs.a(), seed).unwrap();
        let plan = CvPlan::new(&design, &folds).unwrap();
        let fit = cv_stack(obs.y().row(0), &design, &plan, &modtmle::learners::default_library(), Selection::Weighted).unwrap();
        let best = fit.cv.cv_risks.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(fit.cv_risk_of_ensemble <= best + 1e-10);
    }
}

#[test]
fn shrinkage_vanishes_as_residual_df_grow() {
    let s2: Vec<f64> = (0..100).map(|i| (0.03 * i as f64 - 1.5).exp()).collect();
    let gap = |d_b: usize| {
        let hp = estimate_hyperparameters(&s2, d_b).unwrap();
        let t2 = moderate_variances(&s2, &hp, d_b);
        s2.iter()
            .zip(&t2)
            .map(|(a, b)| (a - b).abs() / a)
            .fold(0.0, f64::max)
    };
    let gaps: Vec<f64> = [5, 50, 500, 5000, 50_000].iter().map(|&d| gap(d)).collect();
    assert!(gaps.windows(2).all(|w| w[1] <= w[0]), "{gaps:?}");
    assert!(gaps[4] < 1e-2, "{gaps:?}");
}
