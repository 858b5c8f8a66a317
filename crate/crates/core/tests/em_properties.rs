mod common;

use gagfit::em::{convergence_metric, run_fit};
use gagfit::{
    collapse, e_step, fit_em, fit_emb, fixtures, m_step, FitConfig, ObservedTable, OmegaMode,
    PriorSpec,
};
use proptest::prelude::*;

use common::{any_params, interior_params, observed_table};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn e_step_conserves_observed_counts(x in observed_table(), p in any_params()) {
        let e = e_step(&x, &p);
        let back = collapse(&e.complete);
        for ((_, a), (_, b)) in back.cells().zip(x.cells()) {
            prop_assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{} vs {}", a, b);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn em_loglik_never_decreases(x in observed_table(), saturated in any::<bool>()) {
        let config = FitConfig {
            tolerance: 1e-10,
            max_iterations: 2000,
            omega_mode: if saturated { OmegaMode::Saturated } else { OmegaMode::Independence },
            ..FitConfig::default()
        };
        let fit = run_fit(&x, None, &config).unwrap();
        for w in fit.loglik_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn pi_is_fixed_by_mode_totals(x in observed_table(), p in interior_params()) {
        let e = e_step(&x, &p);
        let m = m_step(&e.complete, OmegaMode::Independence, &p).unwrap();
        let expected = x.telephone_total() / x.total();
        prop_assert!((m.params.pi - expected).abs() <= 1e-12);
    }
}

fn fixture_tables() -> Vec<(&'static str, ObservedTable)> {
    vec![
        ("late", fixtures::late()),
        ("late_weighted", fixtures::late_weighted()),
        ("early", fixtures::early()),
        ("early_weighted", fixtures::early_weighted()),
    ]
}

#[test]
fn converged_fit_is_a_fixed_point() {
    let config = FitConfig::precise();
    for (name, x) in fixture_tables() {
        let fit = fit_em(&x, &config).unwrap();
        let e = e_step(&x, &fit.params);
        let m = m_step(&e.complete, config.omega_mode, &fit.params).unwrap();
        let metric = convergence_metric(&fit.params, &m.params);
        assert!(metric < config.tolerance, "{name}: {metric}");
    }
}

#[test]
fn emb_with_own_prior_matches_em() {
    let config = FitConfig::precise();
    for (name, x) in fixture_tables() {
        let em = fit_em(&x, &config).unwrap();
        let prior = PriorSpec {
            lambda_tau: em.params.tau,
            lambda_rho: em.params.rho,
            lambda_delta: em.params.delta,
            provenance: "self".into(),
        };
        let emb = fit_emb(&x, &prior, &config).unwrap();
        let a = gagfit::em::monitored_values(&em.params);
        let b = gagfit::em::monitored_values(&emb.params);
        for (u, v) in a.iter().zip(b) {
            assert!((u - v).abs() <= 1e-6, "{name}: {u} vs {v}");
        }
    }
}

#[test]
fn emb_keeps_em_pi_and_comparable_iteration_count() {
    let config = FitConfig::precise();
    for (data, prior_data) in [
        (fixtures::late(), fixtures::early()),
        (fixtures::late_weighted(), fixtures::early_weighted()),
    ] {
        let prior = gagfit::fit_prior(&prior_data, &config).unwrap();
        let em = fit_em(&data, &config).unwrap();
        let emb = fit_emb(&data, &prior, &config).unwrap();
        assert!((em.params.pi - emb.params.pi).abs() <= 1e-14);
        let ratio = emb.iterations as f64 / em.iterations as f64;
        assert!(
            (0.8..=1.2).contains(&ratio),
            "EM {} vs EMB {}",
            em.iterations,
            emb.iterations
        );
    }
}

#[test]
fn scaling_counts_leaves_estimates_unchanged() {
    let config = FitConfig::precise();
    let x = fixtures::late();
    let a = fit_em(&x, &config).unwrap();
    let b = fit_em(&x.map(|v| v * 3.7), &config).unwrap();
    let (u, v) = (
        gagfit::em::monitored_values(&a.params),
        gagfit::em::monitored_values(&b.params),
    );
    for (p, q) in u.iter().zip(v) {
        assert!((p - q).abs() <= 1e-9, "{p} vs {q}");
    }
}
