//! Cross-module flows through the public API: model builders feeding the
//! bound machinery, the cumulant-matching construction feeding the model
//! builders, and exact versus Monte Carlo moment routes agreeing on the
//! same model.

use locdep::bounds::{bound_terms, wp_functional};
use locdep::distances::{wp_vs_normal, EmpiricalSample};
use locdep::exact::{rat, to_f64};
use locdep::matching::{four_point_law, law_cumulants};
use locdep::models::graphs::{erg_model, GraphSpec, Motif};
use locdep::models::{mdep_model, BaseLaw};
use locdep::moments::Mode;
use locdep::rng::Purpose;

#[test]
fn bound_terms_dominate_the_empirical_distance_on_a_moving_average() {
    let base = BaseLaw::rademacher();
    let model = mdep_model(64, 1, &base, &[rat(1, 1), rat(1, 1)]).unwrap();
    let report = bound_terms(&model, Mode::Exact).unwrap();
    assert_eq!(report.beta.value, 0.0); // symmetric innovations

    let sums = model.sample_sums(31, Purpose::Model, 0, 4000);
    let sample = EmpiricalSample::new(sums).unwrap();
    let measured = wp_vs_normal(&sample, 2.0).unwrap();

    // The certified bound is far from tight but must sit above the
    // measured distance with room to spare.
    let bound = report.w2();
    assert!(bound > 0.0 && measured < bound, "measured {measured} vs bound {bound}");
}

#[test]
fn matching_law_feeds_the_model_builders_with_exact_cumulants() {
    // β = 1/10 picks n = 25, a perfect square, so every probability is
    // rational: (5/48, 9/16, 1/16, 13/48) on (−3/2, −1/2, 1/2, 3/2).
    let beta = rat(1, 10);
    let law = four_point_law(&beta).unwrap();
    assert_eq!(law.n_selected(), 25);
    let probs = [rat(5, 48), rat(9, 16), rat(1, 16), rat(13, 48)];
    for (expected, actual) in probs.iter().zip(law.probs()) {
        assert!(
            (to_f64(expected) - actual.to_f64()).abs() < 1e-15,
            "law probabilities moved"
        );
    }

    // Feed the law into the generic i.i.d. machinery and read the third
    // cumulant back off the signed bound term: κ₃ of the normalized sum
    // is exactly β again.
    let atoms: Vec<_> = law.atoms().iter().cloned().zip(probs).collect();
    let base = BaseLaw::finite("four-point", atoms).unwrap();
    let model = locdep::models::iid_model(25, &base).unwrap();
    let report = bound_terms(&model, Mode::Exact).unwrap();
    let exact = report.beta.exact.as_ref().expect("exact mode");
    assert_eq!(exact.unscaled, rat(25, 2)); // 25 summands × κ₃(ξ) = 1/2
    assert!((report.beta.value - 0.1).abs() < 1e-15);

    // And the law's own cumulant accounting agrees.
    let c = law_cumulants(&law);
    assert!((c.k3.to_f64() - 0.5).abs() < 1e-15);
}

#[test]
fn exact_and_monte_carlo_routes_agree_on_a_small_graph_model() {
    let model = erg_model(&GraphSpec {
        motif: Motif::triangle(),
        n: 6,
        p: rat(2, 5),
        seed: 13,
    })
    .unwrap();
    let exact = wp_functional(&model, 2, Mode::Exact).unwrap();
    let mc = wp_functional(&model, 2, Mode::Mc { seed: 99, replicates: 50_000 }).unwrap();
    assert!(exact.total.is_finite() && exact.total > 0.0);
    for (e, m) in exact.terms.iter().zip(&mc.terms) {
        let tol = 5.0 * m.std_error + 1e-12;
        assert!(
            (e.value - m.value).abs() <= tol,
            "exact {} vs mc {} ± {}",
            e.value,
            m.value,
            m.std_error
        );
    }
}

#[test]
fn neighborhood_validation_passes_on_every_builder() {
    let base = BaseLaw::rademacher();
    let models = vec![
        mdep_model(40, 2, &base, &[rat(1, 2), rat(1, 1), rat(1, 2)]).unwrap(),
        locdep::models::iid_model(30, &base).unwrap(),
        erg_model(&GraphSpec { motif: Motif::path3(), n: 9, p: rat(1, 3), seed: 5 }).unwrap(),
    ];
    for model in &models {
        let report = model.validate_neighborhoods(2_000, 17);
        assert!(
            report.violations.is_empty(),
            "{}: {:?}",
            model.name,
            report.violations
        );
    }
}
