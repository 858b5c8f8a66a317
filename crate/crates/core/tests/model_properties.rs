mod common;

use approx::assert_relative_eq;
use gagfit::{
    collapse, complete_probabilities, observed_probabilities, CrimeCategory, ModelParams,
    ObservedCellId, OmegaModel, SpouseState,
};
use proptest::prelude::*;
use proptest::strategy::ValueTree;

use common::{any_params, independence_params};

/// The fifteen observed-cell probabilities written out term by term.
fn observed_probabilities_by_hand(p: &ModelParams) -> [f64; 15] {
    let w = |c: usize, s: usize| p.omega.matrix()[c][s];
    let (pi, tau, rho, delta) = (p.pi, p.tau, p.rho, p.delta);
    let q = 1.0 - pi;
    [
        q * rho * w(0, 0),
        q * w(0, 1),
        q * delta * w(1, 0),
        q * w(1, 1),
        q * w(2, 0),
        q * w(2, 1),
        q * w(3, 0),
        q * w(3, 1),
        q * (1.0 - rho) * w(0, 0) + q * (1.0 - delta) * w(1, 0) + q * w(4, 0),
        q * w(4, 1),
        pi * tau * rho * w(0, 0) + pi * tau * w(0, 1),
        pi * tau * delta * w(1, 0) + pi * tau * w(1, 1),
        pi * tau * w(2, 0) + pi * tau * w(2, 1),
        pi * w(3, 0) + pi * w(3, 1),
        pi * (1.0 - rho) * w(0, 0)
            + pi * rho * (1.0 - tau) * w(0, 0)
            + pi * (1.0 - tau) * w(0, 1)
            + pi * (1.0 - delta) * w(1, 0)
            + pi * delta * (1.0 - tau) * w(1, 0)
            + pi * (1.0 - tau) * w(1, 1)
            + pi * (1.0 - tau) * w(2, 0)
            + pi * (1.0 - tau) * w(2, 1)
            + pi * w(4, 0)
            + pi * w(4, 1),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn probability_maps_are_normalised(p in any_params()) {
        let complete = complete_probabilities(&p).total();
        let observed = observed_probabilities(&p).total();
        prop_assert!((complete - 1.0).abs() <= 1e-12, "complete sums to {}", complete);
        prop_assert!((observed - 1.0).abs() <= 1e-12, "observed sums to {}", observed);
    }

    #[test]
    fn observed_matches_hand_written_cells(p in any_params()) {
        let by_hand = observed_probabilities_by_hand(&p);
        let obs = observed_probabilities(&p).to_array();
        for (a, b) in obs.iter().zip(by_hand) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn collapse_preserves_totals(cells in prop::collection::vec(0.0f64..1e6, 30)) {
        let t = gagfit::CompleteTable::from_array(cells.try_into().unwrap());
        let obs = collapse(&t);
        prop_assert!((obs.total() - t.total()).abs() <= 1e-9 * t.total().max(1.0));
    }

    #[test]
    fn no_gag_gives_proportional_observations(mut p in independence_params()) {
        p.rho = 1.0;
        p.delta = 1.0;
        p.tau = 1.0;
        let obs = observed_probabilities(&p);
        let w = p.omega.matrix();
        for c in CrimeCategory::ALL {
            for s in SpouseState::ALL {
                let x = obs.get(ObservedCellId::Personal(c, s));
                prop_assert!((x - (1.0 - p.pi) * w[c.index()][s.index()]).abs() <= 1e-15);
            }
            let phone = obs.get(ObservedCellId::Telephone(c));
            let expected = p.pi * (w[c.index()][0] + w[c.index()][1]);
            prop_assert!((phone - expected).abs() <= 1e-15);
        }
    }
}

#[test]
fn observed_equals_collapsed_complete_on_random_params() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    for _ in 0..100 {
        let p = any_params().new_tree(&mut runner).unwrap().current();
        let a = observed_probabilities(&p);
        let b = collapse(&complete_probabilities(&p));
        assert_eq!(a, b);
    }
}

#[test]
fn independence_column_ratio_is_constant() {
    let emb_omega: [[f64; 2]; 5] = [
        [0.000326, 0.001024],
        [0.000702, 0.002205],
        [0.001363, 0.004281],
        [0.000144, 0.000453],
        [0.238954, 0.750549],
    ];
    for row in emb_omega {
        assert!((row[0] / row[1] - 0.3184).abs() < 0.003, "{row:?}");
    }
    let omega = OmegaModel::Independence {
        crime: [0.1, 0.2, 0.3, 0.15, 0.25],
        spouse: [0.3, 0.7],
    };
    let m = omega.matrix();
    for row in m {
        assert_relative_eq!(row[0] / row[1], 0.3 / 0.7, max_relative = 1e-14);
    }
}
