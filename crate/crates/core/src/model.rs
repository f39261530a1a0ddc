//! Exogenous market parameters, per-fraction analytic constants, and the
//! random liability network / shock samplers.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use thiserror::Error;

use crate::rng::{self, Purpose};
use crate::scalar::Scalar;

/// Largest network for which a dense liability matrix is materialised.
pub const DENSE_LIMIT: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: &'static str, message: String },
    #[error("risk-free fraction {0} outside [0, 1]")]
    FractionOutOfRange(f64),
    #[error("network has no risky agents to borrow")]
    NoBorrowers,
    #[error("edge {lender} -> {borrower} is not admissible: {reason}")]
    InadmissibleEdge {
        lender: usize,
        borrower: usize,
        reason: &'static str,
    },
    #[error("dense liability matrix refused for {0} agents (limit {DENSE_LIMIT})")]
    DenseTooLarge(usize),
}

/// Exogenous constants of the market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams<T> {
    /// Wealth each agent reserves for investment.
    pub w: T,
    /// Fraction of accumulated risky-agent wealth lent on to other risky agents.
    pub alpha: T,
    /// Risk-free rate.
    pub r_s: T,
    /// Borrowing rate.
    pub r_b: T,
    /// Upward return rate of the risky venture.
    pub u: T,
    /// Downward (shock) return rate.
    pub d: T,
    /// Probability of the upward move.
    pub delta: T,
    /// Taxes per agent.
    pub v: T,
    /// Edge probability of the random liability graph.
    pub p_ss: T,
    /// Observation precision of the average dynamics.
    pub c_bar: T,
}

/// Default observation precision.
pub const DEFAULT_C_BAR: f64 = 100.0;

impl<T: Scalar> MarketParams<T> {
    /// Checks the parameter invariants, naming the first offending field.
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |field: &'static str, message: &str| {
            Err(ModelError::InvalidParameter {
                field,
                message: message.to_string(),
            })
        };
        let fields = [
            ("w", self.w),
            ("alpha", self.alpha),
            ("r_s", self.r_s),
            ("r_b", self.r_b),
            ("u", self.u),
            ("d", self.d),
            ("delta", self.delta),
            ("v", self.v),
            ("p_ss", self.p_ss),
            ("c_bar", self.c_bar),
        ];
        for (field, value) in fields {
            if !value.is_finite() {
                return bad(field, "must be finite");
            }
        }
        let zero = T::zero();
        let one = T::one();
        if self.w <= zero {
            return bad("w", "must be positive");
        }
        if self.alpha <= zero || self.alpha >= one {
            return bad("alpha", "must lie in (0, 1)");
        }
        if self.p_ss <= zero || self.p_ss > one {
            return bad("p_ss", "must lie in (0, 1]");
        }
        if self.delta <= zero || self.delta > one {
            return bad("delta", "must lie in (0, 1]");
        }
        if self.c_bar <= zero {
            return bad("c_bar", "must be positive");
        }
        if self.v < zero {
            return bad("v", "must be non-negative");
        }
        if self.d <= -one {
            return bad("d", "must exceed -1");
        }
        if self.d >= self.r_s {
            return bad("d", "must be below r_s");
        }
        if self.r_s > self.r_b {
            return bad("r_s", "must not exceed r_b");
        }
        if self.r_b >= self.u {
            return bad("r_b", "must be below u");
        }
        Ok(())
    }

    /// Expected risky rate of return `u·δ + d·(1−δ)`.
    pub fn rr_bar(&self) -> T {
        self.u * self.delta + self.d * (T::one() - self.delta)
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> MarketParams<U> {
        let c = |x: T| U::lit(x.as_f64());
        MarketParams {
            w: c(self.w),
            alpha: c(self.alpha),
            r_s: c(self.r_s),
            r_b: c(self.r_b),
            u: c(self.u),
            d: c(self.d),
            delta: c(self.delta),
            v: c(self.v),
            p_ss: c(self.p_ss),
            c_bar: c(self.c_bar),
        }
    }
}

/// Analytic constants that depend on the risk-free fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedQuantities<T> {
    pub eps: T,
    /// Accumulated wealth of a risky agent, `w(1+ε)/(1−α)`.
    pub w_tilde: T,
    /// Total liability of a risky agent.
    pub y: T,
    /// Claims coefficient `α(1+ε)/(α+ε)` of a risky creditor.
    pub c_eps: T,
    /// Claims coefficient `(1−α)(1−ε)/(α+ε)` of a risk-free creditor.
    pub c_free: T,
    pub k_u: T,
    pub k_d: T,
    /// `k_d − v`.
    pub w_lo: T,
    /// `k_u − v`.
    pub w_hi: T,
    /// Expected risky return `δ·k_u + (1−δ)·k_d`.
    pub ew: T,
    pub rr_bar: T,
}

/// Evaluates the per-fraction constants.
pub fn derive<T: Scalar>(params: &MarketParams<T>, eps: T) -> Result<DerivedQuantities<T>, ModelError> {
    if !(eps >= T::zero() && eps <= T::one()) {
        return Err(ModelError::FractionOutOfRange(eps.as_f64()));
    }
    let one = T::one();
    let MarketParams {
        w,
        alpha,
        r_b,
        u,
        d,
        delta,
        v,
        ..
    } = *params;
    let k_u = w * (one + eps) * (one + u);
    let k_d = w * (one + eps) * (one + d);
    Ok(DerivedQuantities {
        eps,
        w_tilde: w * (one + eps) / (one - alpha),
        y: w * (eps + alpha) * (one + r_b) / (one - alpha),
        c_eps: alpha * (one + eps) / (alpha + eps),
        c_free: (one - alpha) * (one - eps) / (alpha + eps),
        k_u,
        k_d,
        w_lo: k_d - v,
        w_hi: k_u - v,
        ew: delta * k_u + (one - delta) * k_d,
        rr_bar: params.rr_bar(),
    })
}

/// Investment strategy of an agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    /// Lends to risky agents, invests the rest risk-free.
    RiskFree,
    /// Borrows, lends to other risky agents, invests in the risky venture.
    Risky,
}

impl Group {
    pub fn label(self) -> &'static str {
        match self {
            Group::RiskFree => "risk_free",
            Group::Risky => "risky",
        }
    }
}

/// A loan: `borrower` owes `principal` (before interest) to `lender`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<T> {
    pub lender: usize,
    pub borrower: usize,
    pub principal: T,
}

/// One round's sampled liability structure.
///
/// Agents `0..n1` are risk-free, agents `n1..n` risky.
#[derive(Debug, Clone, PartialEq)]
pub struct LiabilityNetwork<T> {
    pub n: usize,
    pub n1: usize,
    pub group: Vec<Group>,
    /// Sorted by lender, then borrower.
    pub edges: Vec<Edge<T>>,
    pub eps_realized: T,
}

impl<T: Scalar> LiabilityNetwork<T> {
    pub fn n2(&self) -> usize {
        self.n - self.n1
    }

    /// Position of a risky agent within the risky group.
    pub fn risky_index(&self, agent: usize) -> usize {
        debug_assert!(agent >= self.n1);
        agent - self.n1
    }

    /// Principal lent along every edge leaving an agent of `group`.
    pub fn principal_for(params: &MarketParams<T>, n: usize, eps: T, group: Group) -> T {
        let one = T::one();
        let np = T::lit(n as f64) * params.p_ss;
        match group {
            Group::RiskFree => params.w / np,
            Group::Risky => {
                params.alpha * params.w * (one + eps) / (np * (one - params.alpha) * (one - eps))
            }
        }
    }

    /// Builds a network from an explicit list of `(lender, borrower)` pairs,
    /// weighting each edge by the lender group's principal.
    pub fn from_pairs(
        params: &MarketParams<T>,
        n1: usize,
        n2: usize,
        pairs: &[(usize, usize)],
    ) -> Result<Self, ModelError> {
        if n2 == 0 {
            return Err(ModelError::NoBorrowers);
        }
        let n = n1 + n2;
        let eps = T::lit(n1 as f64) / T::lit(n as f64);
        let p1 = Self::principal_for(params, n, eps, Group::RiskFree);
        let p2 = Self::principal_for(params, n, eps, Group::Risky);
        let mut edges = Vec::with_capacity(pairs.len());
        for &(lender, borrower) in pairs {
            let reason = if lender >= n || borrower >= n {
                Some("agent index out of range")
            } else if borrower < n1 {
                Some("only risky agents borrow")
            } else if lender == borrower {
                Some("self-loan")
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(ModelError::InadmissibleEdge {
                    lender,
                    borrower,
                    reason,
                });
            }
            let principal = if lender < n1 { p1 } else { p2 };
            edges.push(Edge {
                lender,
                borrower,
                principal,
            });
        }
        edges.sort_by_key(|e| (e.lender, e.borrower));
        edges.dedup_by_key(|e| (e.lender, e.borrower));
        Ok(Self::assemble(n1, n2, edges, eps))
    }

    fn assemble(n1: usize, n2: usize, edges: Vec<Edge<T>>, eps_realized: T) -> Self {
        let n = n1 + n2;
        let group = (0..n)
            .map(|i| if i < n1 { Group::RiskFree } else { Group::Risky })
            .collect();
        LiabilityNetwork {
            n,
            n1,
            group,
            edges,
            eps_realized,
        }
    }

    /// Total principal owed by each risky agent, indexed by risky position.
    pub fn owed_principal(&self) -> Vec<T> {
        let mut owed = vec![T::zero(); self.n2()];
        for e in &self.edges {
            let j = self.risky_index(e.borrower);
            owed[j] = owed[j] + e.principal;
        }
        owed
    }

    /// Dense matrix `m[borrower][lender]` of principals. Refused for large networks.
    pub fn dense_liabilities(&self) -> Result<Vec<Vec<T>>, ModelError> {
        if self.n > DENSE_LIMIT {
            return Err(ModelError::DenseTooLarge(self.n));
        }
        let mut m = vec![vec![T::zero(); self.n]; self.n];
        for e in &self.edges {
            m[e.borrower][e.lender] = e.principal;
        }
        Ok(m)
    }
}

/// Samples a liability network: every lender -> risky-borrower pair is an
/// edge independently with probability `p_ss`.
pub fn sample_network<T: Scalar>(
    params: &MarketParams<T>,
    n1: usize,
    n2: usize,
    seed: u64,
) -> Result<LiabilityNetwork<T>, ModelError> {
    if n2 == 0 {
        return Err(ModelError::NoBorrowers);
    }
    let n = n1 + n2;
    let eps = T::lit(n1 as f64) / T::lit(n as f64);
    let p1 = LiabilityNetwork::principal_for(params, n, eps, Group::RiskFree);
    let p2 = LiabilityNetwork::principal_for(params, n, eps, Group::Risky);
    let p = params.p_ss.as_f64();
    let skip = Geometric::new(p).map_err(|_| ModelError::InvalidParameter {
        field: "p_ss",
        message: "must lie in (0, 1]".into(),
    })?;
    let mut rng = rng::stream(seed, Purpose::Network, &[n1 as u64, n2 as u64]);
    let expected = p * (n1 as f64 * n2 as f64 + n2 as f64 * (n2 as f64 - 1.0));
    let mut edges = Vec::with_capacity((expected * 1.05) as usize + 16);

    for lender in 0..n {
        let (principal, own) = if lender < n1 {
            (p1, None)
        } else {
            (p2, Some(lender - n1))
        };
        let candidates = if own.is_some() { n2 - 1 } else { n2 } as u64;
        let mut pos = 0u64;
        loop {
            pos = pos.saturating_add(skip.sample(&mut rng));
            if pos >= candidates {
                break;
            }
            // candidate slots skip the lender's own risky position
            let mut j = pos as usize;
            if let Some(own) = own {
                if j >= own {
                    j += 1;
                }
            }
            edges.push(Edge {
                lender,
                borrower: n1 + j,
                principal,
            });
            pos += 1;
        }
    }
    Ok(LiabilityNetwork::assemble(n1, n2, edges, eps))
}

/// Realised risky returns, one per risky agent.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockVector<T> {
    pub returns: Vec<T>,
    pub up: Vec<bool>,
}

impl<T> ShockVector<T> {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn up_fraction(&self) -> f64 {
        self.up.iter().filter(|&&u| u).count() as f64 / self.up.len().max(1) as f64
    }
}

/// Draws i.i.d. binomial returns: `k_u` with probability `δ`, else `k_d`.
pub fn sample_shocks<T: Scalar>(
    params: &MarketParams<T>,
    eps: T,
    n2: usize,
    seed: u64,
) -> Result<ShockVector<T>, ModelError> {
    if n2 == 0 {
        return Err(ModelError::NoBorrowers);
    }
    let dq = derive(params, eps)?;
    let delta = params.delta.as_f64();
    let mut rng = rng::stream(seed, Purpose::Shocks, &[n2 as u64]);
    let up: Vec<bool> = (0..n2).map(|_| rng.random::<f64>() < delta).collect();
    let returns = up.iter().map(|&u| if u { dq.k_u } else { dq.k_d }).collect();
    Ok(ShockVector { returns, up })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn table2() -> MarketParams<f64> {
        MarketParams {
            w: 100.0,
            alpha: 0.1,
            r_s: 0.17,
            r_b: 0.19,
            u: 0.2,
            d: -0.1,
            delta: 0.95,
            v: 40.0,
            p_ss: 0.5,
            c_bar: DEFAULT_C_BAR,
        }
    }

    #[test]
    fn derive_hand_values() {
        let dq = derive(&table2(), 0.3326).unwrap();
        // y = 100 * 0.4326 * 1.19 / 0.9
        assert!((dq.y - 57.199_333_333).abs() < 1e-6);
        assert_eq!(derive(&table2(), 0.0).unwrap().c_eps, 1.0);
        assert!((table2().rr_bar() - 0.185).abs() < 1e-15);
        assert!(dq.k_d < dq.k_u && dq.w_lo < dq.w_hi);
    }

    #[test]
    fn derive_rejects_bad_fraction() {
        assert!(matches!(derive(&table2(), 1.2), Err(ModelError::FractionOutOfRange(_))));
        assert!(derive(&table2(), -0.01).is_err());
        assert!(derive(&table2(), f64::NAN).is_err());
    }

    #[test]
    fn derive_is_pure() {
        let a = derive(&table2(), 0.417).unwrap();
        let b = derive(&table2(), 0.417).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn c_eps_strictly_decreasing() {
        let p = table2();
        let mut prev = derive(&p, 1e-6).unwrap().c_eps;
        for i in 1..=1000 {
            let c = derive(&p, i as f64 / 1000.0).unwrap().c_eps;
            assert!(c < prev);
            assert!(c > 0.0 && c <= 1.0);
            prev = c;
        }
    }

    #[test]
    fn validation_names_field() {
        let mut p = table2();
        p.delta = 1.5;
        match p.validate() {
            Err(ModelError::InvalidParameter { field, .. }) => assert_eq!(field, "delta"),
            other => panic!("unexpected {other:?}"),
        }
        p = table2();
        p.d = 0.18;
        assert!(p.validate().is_err());
        p = table2();
        p.delta = 1.0;
        assert!(p.validate().is_ok());
    }

    #[test]
    fn full_connectivity_when_p_is_one() {
        let mut p = table2();
        p.p_ss = 1.0;
        let net = sample_network(&p, 2, 2, 11).unwrap();
        let pairs: Vec<_> = net.edges.iter().map(|e| (e.lender, e.borrower)).collect();
        assert_eq!(pairs, vec![(0, 2), (0, 3), (1, 2), (1, 3), (2, 3), (3, 2)]);
        assert!(net.edges.iter().all(|e| net.group[e.borrower] == Group::Risky));
    }

    #[test]
    fn edge_weights_match_lender_group() {
        let p = table2();
        let net = sample_network(&p, 30, 70, 5).unwrap();
        let n = 100.0;
        let eps = 0.3;
        let w1 = 100.0 / (n * 0.5);
        let w2 = 0.1 * 100.0 * (1.0 + eps) / (n * 0.5 * 0.9 * 0.7);
        for e in &net.edges {
            let want = if e.lender < 30 { w1 } else { w2 };
            assert!((e.principal - want).abs() < 1e-12);
            assert_ne!(e.lender, e.borrower);
        }
    }

    #[test]
    fn edge_count_within_three_sigma() {
        let p = table2();
        let net = sample_network(&p, 1000, 1000, 2024).unwrap();
        let trials = 1000.0 * 1000.0 + 1000.0 * 999.0;
        let mean = trials * 0.5;
        let sd = (trials * 0.25_f64).sqrt();
        assert!((net.edges.len() as f64 - mean).abs() < 3.0 * sd);
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = table2();
        let a = sample_network(&p, 40, 60, 99).unwrap();
        let b = sample_network(&p, 40, 60, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_network(&p, 40, 60, 100).unwrap();
        assert_ne!(a.edges, c.edges);
        assert_eq!(
            sample_shocks(&p, 0.4, 60, 3).unwrap(),
            sample_shocks(&p, 0.4, 60, 3).unwrap()
        );
    }

    #[test]
    fn refuses_empty_risky_group() {
        assert_eq!(sample_network(&table2(), 5, 0, 1), Err(ModelError::NoBorrowers));
        assert!(sample_shocks(&table2(), 1.0, 0, 1).is_err());
    }

    #[test]
    fn shocks_degenerate_and_binomial() {
        let mut p = table2();
        p.delta = 1.0;
        let s = sample_shocks(&p, 0.2, 500, 8).unwrap();
        let ku = derive(&p, 0.2).unwrap().k_u;
        assert!(s.returns.iter().all(|&k| k == ku));

        let p = table2();
        let s = sample_shocks(&p, 0.2, 100_000, 8).unwrap();
        let dq = derive(&p, 0.2).unwrap();
        assert!(s.returns.iter().all(|&k| k == dq.k_u || k == dq.k_d));
        assert!((s.up_fraction() - 0.95).abs() <= 0.005);
    }

    #[test]
    fn from_pairs_rejects_inadmissible() {
        let p = table2();
        assert!(LiabilityNetwork::from_pairs(&p, 1, 2, &[(1, 0)]).is_err());
        assert!(LiabilityNetwork::from_pairs(&p, 1, 2, &[(1, 1)]).is_err());
        let net = LiabilityNetwork::from_pairs(&p, 1, 2, &[(0, 1), (2, 1), (1, 2)]).unwrap();
        assert_eq!(net.edges.len(), 3);
        assert!(net.dense_liabilities().is_ok());
    }
}
