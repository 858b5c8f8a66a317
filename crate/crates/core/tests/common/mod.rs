#![allow(dead_code)]

use gagfit::{ModelParams, ObservedTable, OmegaModel};
use proptest::prelude::*;

fn simplex<const N: usize>(raw: Vec<f64>) -> [f64; N] {
    let s: f64 = raw.iter().sum();
    std::array::from_fn(|i| raw[i] / s)
}

pub fn independence_params() -> impl Strategy<Value = ModelParams> {
    (
        0.0f64..=1.0,
        0.0f64..=1.0,
        0.0f64..=1.0,
        0.0f64..=1.0,
        prop::collection::vec(0.001f64..1.0, 5),
        prop::collection::vec(0.001f64..1.0, 2),
    )
        .prop_map(|(pi, tau, rho, delta, c, s)| ModelParams {
            pi,
            tau,
            rho,
            delta,
            omega: OmegaModel::Independence {
                crime: simplex::<5>(c),
                spouse: simplex::<2>(s),
            },
        })
}

pub fn saturated_params() -> impl Strategy<Value = ModelParams> {
    (
        0.0f64..=1.0,
        0.0f64..=1.0,
        0.0f64..=1.0,
        0.0f64..=1.0,
        prop::collection::vec(0.001f64..1.0, 10),
    )
        .prop_map(|(pi, tau, rho, delta, w)| {
            let flat = simplex::<10>(w);
            ModelParams {
                pi,
                tau,
                rho,
                delta,
                omega: OmegaModel::Saturated {
                    omega: std::array::from_fn(|i| [flat[2 * i], flat[2 * i + 1]]),
                },
            }
        })
}

pub fn any_params() -> impl Strategy<Value = ModelParams> {
    prop_oneof![independence_params(), saturated_params()]
}

/// Interior parameters (no probability at 0 or 1).
pub fn interior_params() -> impl Strategy<Value = ModelParams> {
    independence_params().prop_map(|mut p| {
        p.pi = 0.05 + 0.9 * p.pi;
        p.tau = 0.05 + 0.9 * p.tau;
        p.rho = 0.05 + 0.9 * p.rho;
        p.delta = 0.05 + 0.9 * p.delta;
        p
    })
}

pub fn observed_table() -> impl Strategy<Value = ObservedTable> {
    prop::collection::vec(0.0f64..1e5, 15).prop_map(|v| {
        let mut t = ObservedTable::zeros();
        for i in 0..5 {
            t.personal[i] = [v[2 * i], v[2 * i + 1]];
            t.telephone[i] = v[10 + i];
        }
        t.personal[4][1] += 1.0;
        t
    })
}
