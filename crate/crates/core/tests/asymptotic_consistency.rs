mod common;

use common::{random_points, table2};
use finrep_core::clearing::{self, Regime};
use finrep_core::rng::replication_seed;
use finrep_core::{derive, sample_network, sample_shocks, solve_clearing_finite, solve_xbar_closed_form};

#[test]
fn closed_form_matches_iterative_oracle() {
    for (p, eps) in random_points(11, 200) {
        let out = solve_xbar_closed_form(&p, eps).unwrap();
        let it = clearing::solve_xbar_iterative(&p, eps, Some(1e-13 * out.y)).unwrap();
        assert!(
            (out.x_bar - it).abs() <= 1e-6 * out.y,
            "eps={eps} params={p:?}: closed {} vs iterative {it}",
            out.x_bar
        );
        assert!((0.0..=out.y).contains(&out.x_bar));
    }
}

#[test]
fn regime_and_default_probability_agree() {
    let mut seen = [false; 3];
    for (p, eps) in random_points(12, 400) {
        let out = solve_xbar_closed_form(&p, eps).unwrap();
        let idx = match out.regime {
            Regime::NoDefault => {
                assert_eq!(out.p_d, 0.0);
                0
            }
            Regime::ShockDefault => {
                assert_eq!(out.p_d, 1.0 - p.delta);
                1
            }
            Regime::AllDefault => {
                assert_eq!(out.p_d, 1.0);
                2
            }
        };
        seen[idx] = true;
        let r = out.returns;
        assert!(r.r1 >= 0.0 && r.r2_u >= 0.0 && r.r2_d >= 0.0);
        let dq = derive(&p, eps).unwrap();
        assert!((out.claims_g1 - dq.c_free * out.x_bar).abs() < 1e-9 * out.y);
        assert!((out.claims_g2 - dq.c_eps * out.x_bar).abs() < 1e-9 * out.y);
    }
    assert_eq!(seen, [true; 3]);
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn finite_network_claims_approach_limits() {
    let p = table2(-0.1);
    let (n1, n2) = (2500, 2500);
    let limit = solve_xbar_closed_form(&p, 0.5).unwrap();
    let mut errs = Vec::new();
    let mut x_errs = Vec::new();
    for s in 0..20 {
        let seed = replication_seed(3, s);
        let net = sample_network(&p, n1, n2, seed).unwrap();
        let shocks = sample_shocks(&p, net.eps_realized, n2, seed).unwrap();
        let out = solve_clearing_finite(&net, &shocks, &p, None).unwrap();
        let g1 = out.claims[..n1].iter().sum::<f64>() / n1 as f64;
        let g2 = out.claims[n1..].iter().sum::<f64>() / n2 as f64;
        errs.push(rel(g1, limit.claims_g1).max(rel(g2, limit.claims_g2)));
        x_errs.push(rel(out.mean_x().unwrap(), limit.x_bar));
    }
    errs.sort_by(f64::total_cmp);
    assert!(errs[10] <= 0.02, "median relative claim error {}", errs[10]);
    assert!(x_errs.iter().all(|e| *e <= 0.02));
}

#[test]
fn owed_principal_approaches_liability() {
    let p = table2(-0.1);
    let (n1, n2) = (2500, 2500);
    let y = derive(&p, 0.5).unwrap().y;
    let mut within = 0;
    for s in 0..100 {
        let net = sample_network(&p, n1, n2, replication_seed(5, s)).unwrap();
        let owed = net.owed_principal();
        let mean = owed.iter().sum::<f64>() / n2 as f64;
        if rel(mean * (1.0 + p.r_b), y) <= 0.05 {
            within += 1;
        }
    }
    assert!(within >= 99, "{within}/100 seeds within 5%");
}
