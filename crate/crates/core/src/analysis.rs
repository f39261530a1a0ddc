//! Mean-ODE side of the dynamics: drifts, equilibria, stability and limit
//! prediction.

use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

use crate::clearing::{self, ClearingError, Piece};
use crate::dynamics::{expected_g_random, g_average, DynamicsKind};
use crate::model::MarketParams;
use crate::scalar::{format_sig, Scalar};

/// Points of the uniform grid on which "for all ε" conditions are checked.
pub const GRID_POINTS: usize = 1001;
/// Width in ε to which interior roots are resolved.
pub const ROOT_TOL: f64 = 1e-6;
/// Payoff gaps within `GAP_TOL·w` count as equal.
pub const GAP_TOL: f64 = 1e-6;

/// Offset from the boundary used to read the drift sign next to it.
const EDGE_PROBE: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Clearing(#[from] ClearingError),
    #[error("no limit rule applies: {0}")]
    NoClauseApplies(String),
    #[error("invalid setting `{field}`: {message}")]
    InvalidSetting { field: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EquilibriumKind {
    /// `ε* = 1`.
    PureAllRiskFree,
    /// `ε* = 0`.
    PureAllRisky,
    Mixed,
}

impl EquilibriumKind {
    pub fn label(self) -> &'static str {
        match self {
            EquilibriumKind::PureAllRiskFree => "pure_all_risk_free",
            EquilibriumKind::PureAllRisky => "pure_all_risky",
            EquilibriumKind::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stability {
    Stable,
    Unstable,
}

impl Stability {
    pub fn label(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium<T> {
    pub eps_star: T,
    pub kind: EquilibriumKind,
    pub stability: Stability,
    pub phi1: T,
    /// `None` at `ε* = 1`.
    pub phi2: Option<T>,
    /// `φ₁ − φ₂` at `ε*` when `φ₂` is defined.
    pub phi_gap_at: Option<T>,
}

/// Equilibria of the mean ODE, sorted by `ε*`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSet<T> {
    pub kind: DynamicsKind,
    pub equilibria: Vec<Equilibrium<T>>,
    /// `false` when the payoff gap keeps one sign on `(0, 1)`, so only the
    /// boundary points are equilibria.
    pub sign_change: bool,
}

impl<T: Scalar> EquilibriumSet<T> {
    pub fn stable(&self) -> impl Iterator<Item = &Equilibrium<T>> {
        self.equilibria.iter().filter(|e| e.stability == Stability::Stable)
    }

    pub fn interior(&self) -> impl Iterator<Item = &Equilibrium<T>> {
        self.equilibria.iter().filter(|e| e.kind == EquilibriumKind::Mixed)
    }

    /// The equilibrium nearest to `eps`.
    pub fn nearest(&self, eps: T) -> &Equilibrium<T> {
        self.equilibria
            .iter()
            .min_by(|a, b| {
                let da = (a.eps_star - eps).abs();
                let db = (b.eps_star - eps).abs();
                da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("boundary equilibria are always present")
    }

    /// The stable equilibrium nearest to `eps`, falling back to
    /// [`nearest`](Self::nearest) when none is stable.
    pub fn nearest_stable(&self, eps: T) -> &Equilibrium<T> {
        self.stable()
            .min_by(|a, b| {
                let da = (a.eps_star - eps).abs();
                let db = (b.eps_star - eps).abs();
                da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or_else(|| self.nearest(eps))
    }
}

/// Limit rule whose hypotheses were verified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Clause {
    /// Average dynamics, risky expected rate above the borrowing rate:
    /// `φ₂ > φ₁` everywhere, `ε → 0`.
    Avg1a,
    /// Average dynamics, `φ₁ > φ₂` everywhere, `ε → 1`.
    Avg1b,
    /// Average dynamics, `r_b > r̄_r > r_s`: unique interior zero of `φ₁ − φ₂`.
    Avg1c,
    /// Random dynamics, `E[G] ∈ {0, 1−δ}` everywhere, `ε → 0`.
    Rnd2a,
    /// Random dynamics, `E[G] = 1` everywhere, `ε → 1`.
    Rnd2b,
    /// Random dynamics under no-arbitrage and solvency conditions:
    /// `E[G] = 1−δ` everywhere, `ε → 0`.
    Rnd2c,
}

impl Clause {
    pub fn label(self) -> &'static str {
        match self {
            Clause::Avg1a => "1a",
            Clause::Avg1b => "1b",
            Clause::Avg1c => "1c",
            Clause::Rnd2a => "2a",
            Clause::Rnd2b => "2b",
            Clause::Rnd2c => "2c",
        }
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitPrediction<T> {
    pub predicted: Equilibrium<T>,
    pub rule_fired: Clause,
    /// `(r_b − r̄_r)/(r̄_r − r_s)`, only for [`Clause::Avg1c`].
    pub approx_eps_star: Option<T>,
}

/// `h(ε) = ε(1−ε)(2g(ε) − 1)`; exactly zero at the boundary.
pub fn drift_average<T: Scalar>(params: &MarketParams<T>, eps: T) -> Result<T, ClearingError> {
    if eps <= T::zero() || eps >= T::one() {
        return Ok(T::zero());
    }
    let g = g_average(params, eps)?;
    Ok(eps * (T::one() - eps) * (T::lit(2.0) * g - T::one()))
}

/// `h_R(ε) = ε(1−ε)(2E[G(ε)] − 1)`; exactly zero at the boundary.
pub fn drift_random<T: Scalar>(params: &MarketParams<T>, eps: T) -> Result<T, ClearingError> {
    if eps <= T::zero() || eps >= T::one() {
        return Ok(T::zero());
    }
    let eg = expected_g_random(params, eps)?;
    Ok(eps * (T::one() - eps) * (T::lit(2.0) * eg - T::one()))
}

pub fn drift<T: Scalar>(params: &MarketParams<T>, kind: DynamicsKind, eps: T) -> Result<T, ClearingError> {
    match kind {
        DynamicsKind::Average => drift_average(params, eps),
        DynamicsKind::Random => drift_random(params, eps),
    }
}

/// Sign-carrying part of the drift: `φ₁ − φ₂` or `E[G] − 1/2`.
fn drift_factor<T: Scalar>(params: &MarketParams<T>, kind: DynamicsKind, eps: T) -> Result<T, ClearingError> {
    match kind {
        DynamicsKind::Average => {
            let (phi1, phi2) = clearing::expected_surplus(params, eps)?;
            Ok(phi1 - phi2.unwrap_or(phi1))
        }
        DynamicsKind::Random => Ok(expected_g_random(params, eps)? - T::lit(0.5)),
    }
}

fn signum<T: Scalar>(x: T, tol: T) -> i8 {
    if x > tol {
        1
    } else if x < -tol {
        -1
    } else {
        0
    }
}

type Signature = (Piece, bool, bool, bool);

fn signature<T: Scalar>(params: &MarketParams<T>, eps: T) -> Result<Signature, ClearingError> {
    let out = clearing::solve_xbar_closed_form(params, eps)?;
    let r = out.returns;
    Ok((out.piece, r.r1 > T::zero(), r.r2_u > T::zero(), r.r2_d > T::zero()))
}

/// Grid on `[0, 1)` refined by the points where the clearing piece or the
/// clipping pattern of the returns changes. Both sides of every breakpoint
/// are included.
pub fn check_grid<T: Scalar>(params: &MarketParams<T>) -> Result<Vec<T>, ClearingError> {
    let n = GRID_POINTS - 1;
    let mut pts: Vec<T> = (0..n).map(|i| T::lit(i as f64 / n as f64)).collect();
    let last = T::one() - T::lit(EDGE_PROBE).max(T::epsilon() * T::lit(4.0));
    let mut sigs = Vec::with_capacity(n + 1);
    for &e in &pts {
        sigs.push(signature(params, e)?);
    }
    pts.push(last);
    sigs.push(signature(params, last)?);

    let mut extra = Vec::new();
    for i in 0..pts.len() - 1 {
        if sigs[i] == sigs[i + 1] {
            continue;
        }
        let (mut lo, mut hi) = (pts[i], pts[i + 1]);
        let s_lo = sigs[i];
        for _ in 0..60 {
            let mid = (lo + hi) * T::lit(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            if signature(params, mid)? == s_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        extra.push(lo);
        extra.push(hi);
    }
    pts.extend(extra);
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    pts.dedup();
    Ok(pts)
}

fn point<T: Scalar>(params: &MarketParams<T>, eps: T, kind: EquilibriumKind, stability: Stability) -> Result<Equilibrium<T>, ClearingError> {
    let (phi1, phi2) = clearing::expected_surplus(params, eps)?;
    Ok(Equilibrium {
        eps_star: eps,
        kind,
        stability,
        phi1,
        phi2,
        phi_gap_at: phi2.map(|p| phi1 - p),
    })
}

/// Equilibria of the mean ODE of `kind`.
///
/// The boundary points are always listed. For average dynamics, interior
/// zeros of `φ₁ − φ₂` are bracketed on [`check_grid`] and bisected to
/// [`ROOT_TOL`]. Stability follows from the drift sign on either side.
pub fn find_equilibria<T: Scalar>(params: &MarketParams<T>, kind: DynamicsKind) -> Result<EquilibriumSet<T>, AnalysisError> {
    params.validate().map_err(ClearingError::from)?;
    let tol = match kind {
        DynamicsKind::Average => T::lit(GAP_TOL) * params.w,
        DynamicsKind::Random => T::zero(),
    };
    let grid = check_grid(params)?;
    let mut signs = Vec::with_capacity(grid.len());
    for &e in &grid {
        signs.push(signum(drift_factor(params, kind, e)?, tol));
    }
    let probe = T::lit(EDGE_PROBE);
    let left = signum(drift_factor(params, kind, probe)?, tol);
    let right = signum(drift_factor(params, kind, T::one() - probe)?, tol);

    let stable_if = |b: bool| if b { Stability::Stable } else { Stability::Unstable };
    let mut equilibria = vec![point(params, T::zero(), EquilibriumKind::PureAllRisky, stable_if(left < 0))?];

    let nonzero: Vec<(T, i8)> = grid.iter().zip(&signs).filter(|(_, s)| **s != 0).map(|(e, s)| (*e, *s)).collect();
    let sign_change = nonzero.windows(2).any(|w| w[0].1 != w[1].1);

    if kind == DynamicsKind::Average {
        for w in nonzero.windows(2) {
            let ((a, sa), (b, sb)) = (w[0], w[1]);
            if sa == sb {
                continue;
            }
            let (mut lo, mut hi) = (a, b);
            let width = T::lit(ROOT_TOL) * T::lit(1e-3);
            while hi - lo > width {
                let mid = (lo + hi) * T::lit(0.5);
                if mid <= lo || mid >= hi {
                    break;
                }
                match signum(drift_factor(params, kind, mid)?, T::zero()) {
                    0 => {
                        lo = mid;
                        hi = mid;
                    }
                    s if s == sa => lo = mid,
                    _ => hi = mid,
                }
            }
            let root = (lo + hi) * T::lit(0.5);
            if root > T::zero() && root < T::one() {
                equilibria.push(point(params, root, EquilibriumKind::Mixed, stable_if(sa > 0 && sb < 0))?);
            }
        }
    }

    equilibria.push(point(params, T::one(), EquilibriumKind::PureAllRiskFree, stable_if(right > 0))?);
    Ok(EquilibriumSet {
        kind,
        equilibria,
        sign_change,
    })
}

/// `(r_b − r̄_r)/(r̄_r − r_s)`.
pub fn approx_mixed_eps<T: Scalar>(params: &MarketParams<T>) -> T {
    let rr = params.rr_bar();
    (params.r_b - rr) / (rr - params.r_s)
}

/// Checks the limit-rule hypotheses at the given parameters and returns the
/// limit they imply.
pub fn predict_limit<T: Scalar>(params: &MarketParams<T>, kind: DynamicsKind) -> Result<LimitPrediction<T>, AnalysisError> {
    let set = find_equilibria(params, kind)?;
    let boundary = |eps_one: bool| {
        let e = if eps_one { set.equilibria.last() } else { set.equilibria.first() };
        *e.expect("boundary equilibria are always present")
    };
    let grid = check_grid(params)?;
    let solvent = params.w * (T::one() + params.d) > params.v;
    let ordered = params.u > params.r_b && params.r_b >= params.r_s && params.r_s > params.d;
    let rr = params.rr_bar();

    match kind {
        DynamicsKind::Average => {
            if !(solvent && ordered) {
                return Err(AnalysisError::NoClauseApplies(
                    "requires w(1+d) > v and u > r_b >= r_s > d".into(),
                ));
            }
            let mut gaps = Vec::with_capacity(grid.len());
            for &e in &grid {
                gaps.push(drift_factor(params, kind, e)?);
            }
            if rr > params.r_b && params.r_b > params.r_s {
                if gaps.iter().all(|g| *g < T::zero()) {
                    return Ok(LimitPrediction {
                        predicted: boundary(false),
                        rule_fired: Clause::Avg1a,
                        approx_eps_star: None,
                    });
                }
                return Err(AnalysisError::NoClauseApplies(
                    "r̄_r > r_b but φ₂ > φ₁ fails somewhere; δ too small".into(),
                ));
            }
            if gaps.iter().all(|g| *g > T::zero()) {
                return Ok(LimitPrediction {
                    predicted: boundary(true),
                    rule_fired: Clause::Avg1b,
                    approx_eps_star: None,
                });
            }
            if params.r_b > rr && rr > params.r_s {
                let mut interior = set.interior();
                if let (Some(root), None) = (interior.next(), interior.next()) {
                    if root.stability == Stability::Stable {
                        return Ok(LimitPrediction {
                            predicted: *root,
                            rule_fired: Clause::Avg1c,
                            approx_eps_star: Some(approx_mixed_eps(params)),
                        });
                    }
                }
                return Err(AnalysisError::NoClauseApplies(
                    "r_b > r̄_r > r_s but φ₁ − φ₂ has no unique stable zero".into(),
                ));
            }
            Err(AnalysisError::NoClauseApplies("rate orderings match no clause".into()))
        }
        DynamicsKind::Random => {
            let mut values = Vec::with_capacity(grid.len());
            for &e in &grid {
                values.push(expected_g_random(params, e)?);
            }
            let one_minus = T::one() - params.delta;
            let all = |target: T| values.iter().all(|v| *v == target);
            if all(T::one()) {
                return Ok(LimitPrediction {
                    predicted: boundary(true),
                    rule_fired: Clause::Rnd2b,
                    approx_eps_star: None,
                });
            }
            let shock_only = params.delta > T::lit(0.5) && all(one_minus);
            if shock_only && solvent && ordered {
                return Ok(LimitPrediction {
                    predicted: boundary(false),
                    rule_fired: Clause::Rnd2c,
                    approx_eps_star: None,
                });
            }
            if all(T::zero()) || shock_only {
                return Ok(LimitPrediction {
                    predicted: boundary(false),
                    rule_fired: Clause::Rnd2a,
                    approx_eps_star: None,
                });
            }
            Err(AnalysisError::NoClauseApplies("E[G] is not constant in {0, 1−δ, 1}".into()))
        }
    }
}

/// Deterministic ODE solution on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OdePath<T> {
    pub times: Vec<T>,
    pub eps: Vec<T>,
    /// Steps after which the state had to be clamped back into `[0, 1]`.
    pub clamp_events: Vec<usize>,
}

impl<T: Scalar> OdePath<T> {
    pub fn final_eps(&self) -> T {
        *self.eps.last().expect("path has its initial point")
    }
}

/// Classical fourth-order Runge-Kutta integration of `ε̇ = h(ε)` (or
/// `h_R`) from `eps0` up to `horizon`; the last step is shortened to land on
/// the horizon.
pub fn integrate_ode<T: Scalar>(
    params: &MarketParams<T>,
    kind: DynamicsKind,
    eps0: T,
    horizon: T,
    dt: T,
) -> Result<OdePath<T>, AnalysisError> {
    let bad = |field, message: &str| AnalysisError::InvalidSetting {
        field,
        message: message.into(),
    };
    if !(eps0 >= T::zero() && eps0 <= T::one()) {
        return Err(bad("eps0", "must lie in [0, 1]"));
    }
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(bad("dt", "must be positive"));
    }
    if !(horizon >= T::zero()) || !horizon.is_finite() {
        return Err(bad("horizon", "must be non-negative"));
    }
    let f = |e: T| drift(params, kind, e.max(T::zero()).min(T::one()));
    let half = T::lit(0.5);
    let mut t = T::zero();
    let mut x = eps0;
    let mut path = OdePath {
        times: vec![t],
        eps: vec![x],
        clamp_events: Vec::new(),
    };
    while t < horizon {
        let h = dt.min(horizon - t);
        let k1 = f(x)?;
        let k2 = f(x + half * h * k1)?;
        let k3 = f(x + half * h * k2)?;
        let k4 = f(x + h * k3)?;
        let mut next = x + h / T::lit(6.0) * (k1 + T::lit(2.0) * (k2 + k3) + k4);
        if next < T::zero() || next > T::one() {
            next = next.max(T::zero()).min(T::one());
            path.clamp_events.push(path.times.len());
        }
        x = next;
        t = if horizon - t <= dt { horizon } else { t + h };
        path.times.push(t);
        path.eps.push(x);
    }
    Ok(path)
}

/// Writes `eps_star,kind,stability,phi1,phi2,clause`; the clause column is
/// filled on the row matching the prediction.
pub fn write_equilibrium_csv<T: Scalar, W: Write>(
    set: &EquilibriumSet<T>,
    prediction: Option<&LimitPrediction<T>>,
    mut out: W,
) -> io::Result<()> {
    writeln!(out, "eps_star,kind,stability,phi1,phi2,clause")?;
    for e in &set.equilibria {
        let clause = prediction
            .filter(|p| p.predicted.kind == e.kind && p.predicted.eps_star == e.eps_star)
            .map(|p| p.rule_fired.label())
            .unwrap_or("");
        writeln!(
            out,
            "{},{},{},{},{},{}",
            format_sig(e.eps_star.as_f64(), 6),
            e.kind.label(),
            e.stability.label(),
            format_sig(e.phi1.as_f64(), 6),
            e.phi2.map(|p| format_sig(p.as_f64(), 6)).unwrap_or_default(),
            clause
        )?;
    }
    Ok(())
}
