//! Debt settlement: exact clearing vectors on sampled networks and the
//! one-dimensional asymptotic clearing value with the resulting payoffs.
//!
//! A risky agent `j` that clears `X_j` pays creditor `i` the pro-rata share
//! `X_j · L_ji (1 + r_b) / y`, so that a borrower's shares sum to one when its
//! realised liabilities equal `y`.

use std::io::{self, Write};

use thiserror::Error;

use crate::model::{derive, DerivedQuantities, Group, LiabilityNetwork, MarketParams, ModelError, ShockVector};
use crate::scalar::{positive_part, Scalar};

/// Iteration cap shared by the monotone solvers.
pub const MAX_ITERATIONS: usize = 1_000_000;

/// Default solver tolerance, relative to `y`.
pub const DEFAULT_RELATIVE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClearingError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("shock vector has {shocks} entries but network has {risky} risky agents")]
    DimensionMismatch { shocks: usize, risky: usize },
    #[error("start vector has {got} entries, expected {expected}")]
    BadStart { got: usize, expected: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("clearing value {x_bar} outside [0, y = {y}]")]
    ClearingOutOfRange { x_bar: f64, y: f64 },
}

/// Result of settling one sampled network.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteClearingOutcome<T> {
    /// Total liability of each risky agent.
    pub y: T,
    /// Cleared amount per risky agent (indexed by risky position).
    pub x: Vec<T>,
    /// `x[j] < y`.
    pub defaults: Vec<bool>,
    /// Fraction of risky agents in default.
    pub p_d: T,
    /// Claims received by every agent (indexed by agent id).
    pub claims: Vec<T>,
    /// Surplus of every risk-free agent (indexed by agent id `0..n1`).
    pub r1: Vec<T>,
    /// Surplus of every risky agent (indexed by risky position).
    pub r2: Vec<T>,
    pub iterations: usize,
    /// `max_j |F(X)_j − X_j|` at the returned vector.
    pub residual: T,
}

impl<T: Scalar> FiniteClearingOutcome<T> {
    pub fn mean_r1(&self) -> Option<T> {
        mean(&self.r1)
    }

    pub fn mean_r2(&self) -> Option<T> {
        mean(&self.r2)
    }

    pub fn mean_x(&self) -> Option<T> {
        mean(&self.x)
    }
}

fn mean<T: Scalar>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    let s = xs.iter().fold(T::zero(), |a, &b| a + b);
    Some(s / T::lit(xs.len() as f64))
}

/// Precomputed pay-out structure of a network.
struct Payouts<T> {
    /// `(lender, risky position of borrower, share of the borrower's payment)`
    shares: Vec<(usize, usize, T)>,
    n1: usize,
    n: usize,
}

impl<T: Scalar> Payouts<T> {
    fn new(net: &LiabilityNetwork<T>, params: &MarketParams<T>, y: T) -> Self {
        let gross = T::one() + params.r_b;
        let shares = net
            .edges
            .iter()
            .map(|e| (e.lender, net.risky_index(e.borrower), e.principal * gross / y))
            .collect();
        Payouts {
            shares,
            n1: net.n1,
            n: net.n,
        }
    }

    fn claims(&self, x: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|c| *c = T::zero());
        for &(lender, j, share) in &self.shares {
            out[lender] = out[lender] + x[j] * share;
        }
    }

    /// One application of the clearing map; returns the sup-norm change.
    fn apply(&self, k: &[T], v: T, y: T, x: &[T], claims: &mut [T], next: &mut [T]) -> T {
        self.claims(x, claims);
        let mut change = T::zero();
        for (j, out) in next.iter_mut().enumerate() {
            let raw = k[j] + claims[self.n1 + j] - v;
            let cleared = positive_part(raw).min(y);
            change = change.max((cleared - x[j]).abs());
            *out = cleared;
        }
        change
    }
}

/// Maximal clearing vector by monotone iteration from `X = y`.
///
/// `tol` is the sup-norm stopping threshold; `None` uses `1e-9 · y`.
pub fn solve_clearing_finite<T: Scalar>(
    net: &LiabilityNetwork<T>,
    shocks: &ShockVector<T>,
    params: &MarketParams<T>,
    tol: Option<T>,
) -> Result<FiniteClearingOutcome<T>, ClearingError> {
    solve_clearing_finite_from(net, shocks, params, tol, None)
}

/// As [`solve_clearing_finite`], starting from `start` (clamped to `[0, y]`).
/// Any start above the maximal fixed point converges to it.
pub fn solve_clearing_finite_from<T: Scalar>(
    net: &LiabilityNetwork<T>,
    shocks: &ShockVector<T>,
    params: &MarketParams<T>,
    tol: Option<T>,
    start: Option<&[T]>,
) -> Result<FiniteClearingOutcome<T>, ClearingError> {
    let n2 = net.n2();
    if shocks.len() != n2 {
        return Err(ClearingError::DimensionMismatch {
            shocks: shocks.len(),
            risky: n2,
        });
    }
    let dq = derive(params, net.eps_realized)?;
    let y = dq.y;
    let tol = tol.unwrap_or_else(|| T::lit(DEFAULT_RELATIVE_TOL) * y);
    let payouts = Payouts::new(net, params, y);

    let mut x: Vec<T> = match start {
        Some(s) if s.len() != n2 => {
            return Err(ClearingError::BadStart {
                got: s.len(),
                expected: n2,
            })
        }
        Some(s) => s.iter().map(|&xi| positive_part(xi).min(y)).collect(),
        None => vec![y; n2],
    };
    let mut next = vec![T::zero(); n2];
    let mut claims = vec![T::zero(); payouts.n];
    let k = &shocks.returns;

    let mut iterations = 0;
    loop {
        let change = payouts.apply(k, params.v, y, &x, &mut claims, &mut next);
        iterations += 1;
        std::mem::swap(&mut x, &mut next);
        if change <= tol {
            break;
        }
        if iterations >= MAX_ITERATIONS {
            return Err(ClearingError::NonConvergence {
                iterations,
                residual: change.as_f64(),
            });
        }
    }
    let residual = payouts.apply(k, params.v, y, &x, &mut claims, &mut next);
    // claims now correspond to the returned x
    Ok(settle(net, params, &dq, shocks, x, claims, iterations, residual))
}

#[allow(clippy::too_many_arguments)]
fn settle<T: Scalar>(
    net: &LiabilityNetwork<T>,
    params: &MarketParams<T>,
    dq: &DerivedQuantities<T>,
    shocks: &ShockVector<T>,
    x: Vec<T>,
    claims: Vec<T>,
    iterations: usize,
    residual: T,
) -> FiniteClearingOutcome<T> {
    let y = dq.y;
    let defaults: Vec<bool> = x.iter().map(|&xi| xi < y).collect();
    let n_def = defaults.iter().filter(|&&d| d).count();
    let p_d = T::lit(n_def as f64) / T::lit(x.len().max(1) as f64);
    let free_return = params.w * net.eps_realized * (T::one() + params.r_s);
    let r1 = (0..net.n1)
        .map(|i| positive_part(free_return + claims[i] - params.v))
        .collect();
    let r2 = (0..net.n2())
        .map(|j| positive_part(shocks.returns[j] + claims[net.n1 + j] - params.v - y))
        .collect();
    FiniteClearingOutcome {
        y,
        x,
        defaults,
        p_d,
        claims,
        r1,
        r2,
        iterations,
        residual,
    }
}

/// Writes one row per agent: `agent_id,group,K,X,default,surplus`.
/// Risk-free agents leave `K`, `X` and `default` empty.
pub fn write_outcome_csv<T: Scalar, W: Write>(
    net: &LiabilityNetwork<T>,
    shocks: &ShockVector<T>,
    outcome: &FiniteClearingOutcome<T>,
    mut out: W,
) -> io::Result<()> {
    writeln!(out, "agent_id,group,K,X,default,surplus")?;
    for agent in 0..net.n {
        match net.group[agent] {
            Group::RiskFree => writeln!(out, "{agent},{},,,,{}", Group::RiskFree.label(), outcome.r1[agent])?,
            Group::Risky => {
                let j = net.risky_index(agent);
                writeln!(
                    out,
                    "{agent},{},{},{},{},{}",
                    Group::Risky.label(),
                    shocks.returns[j],
                    outcome.x[j],
                    outcome.defaults[j],
                    outcome.r2[j]
                )?
            }
        }
    }
    Ok(())
}

/// Default class of the asymptotic clearing solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// Every risky agent pays in full.
    NoDefault,
    /// Exactly the shocked agents default.
    ShockDefault,
    /// Every risky agent defaults.
    AllDefault,
}

impl Regime {
    pub fn default_probability<T: Scalar>(self, delta: T) -> T {
        match self {
            Regime::NoDefault => T::zero(),
            Regime::ShockDefault => T::one() - delta,
            Regime::AllDefault => T::one(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Regime::NoDefault => "no_default",
            Regime::ShockDefault => "shock_default",
            Regime::AllDefault => "all_default",
        }
    }
}

/// How much an agent in a given shock state clears.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tranche {
    /// Pays `y`.
    Full,
    /// Pays `K + c_ε·x̄ − v ∈ (0, y)`.
    Partial,
    /// Pays nothing.
    Nothing,
}

/// Clearing behaviour of up-shocked and down-shocked agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Piece {
    pub up: Tranche,
    pub down: Tranche,
}

impl Piece {
    pub fn regime(self) -> Regime {
        match (self.up, self.down) {
            (Tranche::Full, Tranche::Full) => Regime::NoDefault,
            (Tranche::Full, _) => Regime::ShockDefault,
            _ => Regime::AllDefault,
        }
    }
}

/// Limiting per-agent returns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitingReturns<T> {
    pub r1: T,
    pub r2_u: T,
    pub r2_d: T,
}

/// Asymptotic clearing solution at a given risk-free fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticOutcome<T> {
    pub eps: T,
    pub y: T,
    pub x_bar: T,
    pub p_d: T,
    pub regime: Regime,
    pub piece: Piece,
    pub returns: LimitingReturns<T>,
    pub phi1: T,
    /// Absent when no risky agents remain (`ε = 1`).
    pub phi2: Option<T>,
    /// Limiting aggregate claims of a risk-free creditor.
    pub claims_g1: T,
    /// Limiting aggregate claims of a risky creditor.
    pub claims_g2: T,
}

impl<T: Scalar> AsymptoticOutcome<T> {
    /// `φ₂` extended by continuity to `ε = 1`.
    pub fn phi2_extended(&self, delta: T) -> T {
        self.phi2
            .unwrap_or_else(|| delta * self.returns.r2_u + (T::one() - delta) * self.returns.r2_d)
    }
}

#[inline]
fn clamp_clear<T: Scalar>(raw: T, y: T) -> T {
    positive_part(raw).min(y)
}

/// The one-dimensional clearing map `x ↦ E[(min{K + c_ε x − v, y})⁺]`.
pub fn xbar_map<T: Scalar>(dq: &DerivedQuantities<T>, delta: T, x: T) -> T {
    delta * clamp_clear(dq.w_hi + dq.c_eps * x, dq.y)
        + (T::one() - delta) * clamp_clear(dq.w_lo + dq.c_eps * x, dq.y)
}

/// Largest fixed point of [`xbar_map`] by monotone iteration from `x = y`.
pub fn solve_xbar_iterative<T: Scalar>(params: &MarketParams<T>, eps: T, tol: Option<T>) -> Result<T, ClearingError> {
    let dq = derive(params, eps)?;
    let tol = tol.unwrap_or_else(|| T::lit(DEFAULT_RELATIVE_TOL) * dq.y);
    let mut x = dq.y;
    for _ in 0..MAX_ITERATIONS {
        let next = xbar_map(&dq, params.delta, x);
        if (next - x).abs() <= tol {
            return Ok(next);
        }
        x = next;
    }
    Err(ClearingError::NonConvergence {
        iterations: MAX_ITERATIONS,
        residual: (xbar_map(&dq, params.delta, x) - x).abs().as_f64(),
    })
}

/// Thresholds on `c_ε` separating the three unclipped regimes:
/// `(y − w_lo)/y` above which nobody defaults, and
/// `(y − w_hi)/(y − (1−δ)(w_hi − w_lo))` below which everybody defaults.
pub fn regime_thresholds<T: Scalar>(dq: &DerivedQuantities<T>, delta: T) -> (T, T) {
    let no_default = (dq.y - dq.w_lo) / dq.y;
    let all_default = (dq.y - dq.w_hi) / (dq.y - (T::one() - delta) * (dq.w_hi - dq.w_lo));
    (no_default, all_default)
}

/// Candidate clearing value on one linear piece of the map, if that piece
/// is self-consistent.
fn piece_candidate<T: Scalar>(dq: &DerivedQuantities<T>, delta: T, piece: Piece, slack: T) -> Option<T> {
    let one = T::one();
    let zero = T::zero();
    let c = dq.c_eps;
    let y = dq.y;
    let q = one - delta;
    // fixed point of x = δ·a_u(x) + (1−δ)·a_d(x) on the piece
    let (num, den) = [(piece.up, dq.w_hi, delta), (piece.down, dq.w_lo, q)].iter().fold(
        (zero, one),
        |(num, den), &(tranche, wealth, weight)| match tranche {
            Tranche::Full => (num + weight * y, den),
            Tranche::Partial => (num + weight * wealth, den - weight * c),
            Tranche::Nothing => (num, den),
        },
    );
    if den <= T::lit(64.0) * T::epsilon() {
        return None;
    }
    let x = num / den;
    let fits = |tranche: Tranche, wealth: T| {
        let raw = wealth + c * x;
        match tranche {
            Tranche::Full => raw >= y - slack,
            Tranche::Partial => raw > -slack && raw < y + slack,
            Tranche::Nothing => raw <= slack,
        }
    };
    (fits(piece.up, dq.w_hi) && fits(piece.down, dq.w_lo)).then_some(x)
}

const PIECES: [Piece; 6] = [
    Piece { up: Tranche::Full, down: Tranche::Full },
    Piece { up: Tranche::Full, down: Tranche::Partial },
    Piece { up: Tranche::Full, down: Tranche::Nothing },
    Piece { up: Tranche::Partial, down: Tranche::Partial },
    Piece { up: Tranche::Partial, down: Tranche::Nothing },
    Piece { up: Tranche::Nothing, down: Tranche::Nothing },
];

/// Limiting clearing value in closed form.
///
/// The map is piecewise linear with at most six pieces; the three unclipped
/// ones give
///
/// * `x̄ = y` (no default) when `c_ε ≥ (y − w_lo)/y`,
/// * `x̄ = (δy + (1−δ)w_lo)/(1 − (1−δ)c_ε)` (shocked agents default),
/// * `x̄ = (E W − v)/(1 − c_ε)` (everyone defaults),
///
/// and the remaining three arise when shocked or all agents clear nothing.
/// The largest self-consistent candidate is returned; at a boundary the
/// higher regime wins.
pub fn solve_xbar_closed_form<T: Scalar>(params: &MarketParams<T>, eps: T) -> Result<AsymptoticOutcome<T>, ClearingError> {
    let dq = derive(params, eps)?;
    let scale = dq.y.max(dq.w_hi.abs()).max(dq.w_lo.abs()).max(T::one());
    let slack = T::lit(64.0) * T::epsilon() * scale;
    let mut best: Option<(T, Piece)> = None;
    for piece in PIECES {
        if let Some(x) = piece_candidate(&dq, params.delta, piece, slack) {
            if best.is_none_or(|(bx, _)| x > bx + slack) {
                best = Some((x, piece));
            }
        }
    }
    // x = 0 is always a fixed point when nothing else is; the (0,0) piece
    // covers it, so `best` is only empty through rounding at a boundary.
    let (x_bar, piece) = best.unwrap_or((
        solve_xbar_iterative(params, eps, None)?,
        Piece {
            up: Tranche::Partial,
            down: Tranche::Partial,
        },
    ));
    let x_bar = x_bar.max(T::zero()).min(dq.y);
    Ok(assemble(params, &dq, x_bar, piece))
}

fn assemble<T: Scalar>(params: &MarketParams<T>, dq: &DerivedQuantities<T>, x_bar: T, piece: Piece) -> AsymptoticOutcome<T> {
    let returns = returns_from(params, dq, x_bar);
    let regime = piece.regime();
    let phi2 = (dq.eps < T::one())
        .then(|| params.delta * returns.r2_u + (T::one() - params.delta) * returns.r2_d);
    AsymptoticOutcome {
        eps: dq.eps,
        y: dq.y,
        x_bar,
        p_d: regime.default_probability(params.delta),
        regime,
        piece,
        returns,
        phi1: returns.r1,
        phi2,
        claims_g1: dq.c_free * x_bar,
        claims_g2: dq.c_eps * x_bar,
    }
}

fn returns_from<T: Scalar>(params: &MarketParams<T>, dq: &DerivedQuantities<T>, x_bar: T) -> LimitingReturns<T> {
    let free = params.w * dq.eps * (T::one() + params.r_s);
    LimitingReturns {
        r1: positive_part(free + dq.c_free * x_bar - params.v),
        r2_u: positive_part(dq.k_u + dq.c_eps * x_bar - params.v - dq.y),
        r2_d: positive_part(dq.k_d + dq.c_eps * x_bar - params.v - dq.y),
    }
}

/// Limiting returns for an arbitrary clearing value `x_bar ∈ [0, y]`.
pub fn limiting_returns<T: Scalar>(params: &MarketParams<T>, eps: T, x_bar: T) -> Result<LimitingReturns<T>, ClearingError> {
    let dq = derive(params, eps)?;
    let slack = T::lit(1e-9) * dq.y;
    if !(x_bar >= -slack && x_bar <= dq.y + slack) {
        return Err(ClearingError::ClearingOutOfRange {
            x_bar: x_bar.as_f64(),
            y: dq.y.as_f64(),
        });
    }
    Ok(returns_from(params, &dq, x_bar))
}

/// Expected surpluses `(φ₁, φ₂)`; `φ₂` is absent at `ε = 1`.
pub fn expected_surplus<T: Scalar>(params: &MarketParams<T>, eps: T) -> Result<(T, Option<T>), ClearingError> {
    let out = solve_xbar_closed_form(params, eps)?;
    Ok((out.phi1, out.phi2))
}
