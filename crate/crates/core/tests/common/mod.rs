#![allow(dead_code)]

use finrep_core::rng::{self, Purpose, StreamRng};
use finrep_core::MarketParams64;
use proptest::prelude::*;
use rand::Rng;

pub fn table2(d: f64) -> MarketParams64 {
    MarketParams64 {
        w: 100.0,
        alpha: 0.1,
        r_s: 0.17,
        r_b: 0.19,
        u: 0.2,
        d,
        delta: 0.95,
        v: 40.0,
        p_ss: 0.1,
        c_bar: 100.0,
    }
}

/// Valid parameter sets spanning every clearing regime.
pub fn arb_params() -> impl Strategy<Value = MarketParams64> {
    (
        50.0..150.0f64,
        0.05..0.9f64,
        0.0..0.2f64,
        0.0..0.05f64,
        0.01..0.3f64,
        0.01..0.6f64,
        0.3..=1.0f64,
        0.0..150.0f64,
        0.02..=1.0f64,
    )
        .prop_map(|(w, alpha, r_s, spread, up, down, delta, v, p_ss)| MarketParams64 {
            w,
            alpha,
            r_s,
            r_b: r_s + spread,
            u: r_s + spread + up,
            d: r_s - down,
            delta,
            v,
            p_ss,
            c_bar: 100.0,
        })
}

fn uniform(rng: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Deterministic random `(params, eps)` points varying `ε, δ, d, v, α`.
pub fn random_points(seed: u64, count: usize) -> Vec<(MarketParams64, f64)> {
    let mut rng = rng::stream(seed, Purpose::Replication, &[]);
    (0..count)
        .map(|_| {
            let p = MarketParams64 {
                alpha: uniform(&mut rng, 0.02, 0.95),
                delta: uniform(&mut rng, 0.05, 1.0),
                d: uniform(&mut rng, -0.9, 0.16),
                v: uniform(&mut rng, 0.0, 200.0),
                ..table2(-0.1)
            };
            let eps = uniform(&mut rng, 0.0, 0.999);
            (p, eps)
        })
        .collect()
}
