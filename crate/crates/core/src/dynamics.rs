//! Replicator dynamics of the growing population.
//!
//! One agent joins per round. It contacts two agents of the previous round;
//! if both follow the same strategy it copies them, otherwise:
//!
//! * **average dynamics**: it compares noisy estimates of the two group
//!   payoffs and picks strategy 1 with probability
//!   `g(ε) = Φ((φ₁ − φ₂)·√(c̄ ε (1−ε)))`;
//! * **random dynamics**: it compares the realised returns of its two
//!   contacts and picks strategy 1 iff `R¹ ≥ R²`.
//!
//! Both are stochastic-approximation recursions
//! `ε_{t+1} = ε_t + (Z_{t+1} − ε_t)/(t + n₀ + 1)`.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::clearing::{self, ClearingError};
use crate::model::{self, MarketParams, ModelError};
use crate::rng::{self, Purpose, StreamRng};
use crate::scalar::{format_sig, normal_cdf, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Clearing(#[from] ClearingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid simulation setting `{field}`: {message}")]
    InvalidSetting { field: &'static str, message: String },
}

/// Decision rule of a newcomer facing a mixed contact pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DynamicsKind {
    Average,
    Random,
}

impl DynamicsKind {
    pub fn label(self) -> &'static str {
        match self {
            DynamicsKind::Average => "average",
            DynamicsKind::Random => "random",
        }
    }
}

/// How the average-dynamics newcomer's payoff estimates are realised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ObservationModel {
    /// Decide with probability `g(ε)` directly.
    #[default]
    Analytic,
    /// Draw the two Gaussian estimation errors and compare.
    Sampled,
}

/// What produced a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrajectoryKind {
    Average,
    Random,
    /// Returns computed by clearing a freshly sampled network each round.
    FiniteMc(DynamicsKind),
}

impl TrajectoryKind {
    pub fn rule(self) -> DynamicsKind {
        match self {
            TrajectoryKind::Average => DynamicsKind::Average,
            TrajectoryKind::Random => DynamicsKind::Random,
            TrajectoryKind::FiniteMc(kind) => kind,
        }
    }

    pub fn label(self) -> String {
        match self {
            TrajectoryKind::Average => "average".into(),
            TrajectoryKind::Random => "random".into(),
            TrajectoryKind::FiniteMc(kind) => format!("finite_{}", kind.label()),
        }
    }
}

/// Group sizes after round `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PopulationState {
    pub t: u64,
    pub n1: u64,
    pub n2: u64,
}

impl PopulationState {
    pub fn new(n1: u64, n2: u64) -> Self {
        PopulationState { t: 0, n1, n2 }
    }

    pub fn n(&self) -> u64 {
        self.n1 + self.n2
    }

    /// Risk-free fraction `n₁/(n₁+n₂)`.
    pub fn eps<T: Scalar>(&self) -> T {
        T::lit(self.n1 as f64) / T::lit(self.n() as f64)
    }

    /// State after a newcomer joins group 1 (`true`) or group 2.
    pub fn join(self, risk_free: bool) -> Self {
        PopulationState {
            t: self.t + 1,
            n1: self.n1 + risk_free as u64,
            n2: self.n2 + !risk_free as u64,
        }
    }
}

/// Probability that an average-dynamics newcomer facing a mixed pair picks
/// strategy 1. Returns 1/2 at `ε ∈ {0, 1}` where the drift factor vanishes.
pub fn g_average<T: Scalar>(params: &MarketParams<T>, eps: T) -> Result<T, ClearingError> {
    if eps <= T::zero() || eps >= T::one() {
        model::derive(params, eps)?;
        return Ok(T::lit(0.5));
    }
    let (phi1, phi2) = clearing::expected_surplus(params, eps)?;
    let gap = phi1 - phi2.unwrap_or_else(T::zero);
    Ok(normal_cdf(gap * (params.c_bar * eps * (T::one() - eps)).sqrt()))
}

/// `E[G(ε)] = δ·1{R¹ ≥ R²_u} + (1−δ)·1{R¹ ≥ R²_d}`; ties favour strategy 1.
pub fn expected_g_random<T: Scalar>(params: &MarketParams<T>, eps: T) -> Result<T, ClearingError> {
    let out = clearing::solve_xbar_closed_form(params, eps)?;
    let r = out.returns;
    let up = if r.r1 >= r.r2_u { params.delta } else { T::zero() };
    let down = if r.r1 >= r.r2_d { T::one() - params.delta } else { T::zero() };
    Ok(up + down)
}

/// One realisation of `G` for a mixed pair: draws the risky contact's shock.
pub fn draw_g_random<T: Scalar, R: Rng + ?Sized>(params: &MarketParams<T>, eps: T, rng: &mut R) -> Result<bool, ClearingError> {
    let r = clearing::solve_xbar_closed_form(params, eps)?.returns;
    let shocked_up = rng.random::<f64>() < params.delta.as_f64();
    Ok(r.r1 >= if shocked_up { r.r2_u } else { r.r2_d })
}

/// Draws the groups of two contacts sampled with replacement:
/// `Some(g)` when both follow `g` (`true` = risk-free), `None` when mixed.
fn contact_pair<R: Rng + ?Sized>(eps: f64, rng: &mut R) -> Option<bool> {
    let a = rng.random::<f64>() < eps;
    let b = rng.random::<f64>() < eps;
    (a == b).then_some(a)
}

fn average_choice<T: Scalar, R: Rng + ?Sized>(
    phi_gap: T,
    eps: T,
    c_bar: T,
    observation: ObservationModel,
    rng: &mut R,
) -> bool {
    match observation {
        ObservationModel::Analytic => {
            let g = normal_cdf(phi_gap * (c_bar * eps * (T::one() - eps)).sqrt());
            rng.random::<f64>() < g.as_f64()
        }
        ObservationModel::Sampled => {
            let eps = eps.as_f64();
            let c_bar = c_bar.as_f64();
            let n1 = Normal::new(0.0, (1.0 / (c_bar * eps)).sqrt()).expect("finite sd");
            let n2 = Normal::new(0.0, (1.0 / (c_bar * (1.0 - eps))).sqrt()).expect("finite sd");
            phi_gap.as_f64() + n1.sample(rng) - n2.sample(rng) > 0.0
        }
    }
}

/// One round of average dynamics: strategy 1 with probability
/// `ε² + 2ε(1−ε)g(ε)`.
pub fn step_average<T: Scalar, R: Rng + ?Sized>(
    state: PopulationState,
    params: &MarketParams<T>,
    observation: ObservationModel,
    rng: &mut R,
) -> Result<PopulationState, ClearingError> {
    let eps: T = state.eps();
    let choice = match contact_pair(eps.as_f64(), rng) {
        Some(group) => group,
        None => {
            let (phi1, phi2) = clearing::expected_surplus(params, eps)?;
            let gap = phi1 - phi2.unwrap_or_else(T::zero);
            average_choice(gap, eps, params.c_bar, observation, rng)
        }
    };
    Ok(state.join(choice))
}

/// One round of random dynamics with limiting returns and a freshly drawn
/// shock for the risky contact.
pub fn step_random<T: Scalar, R: Rng + ?Sized>(
    state: PopulationState,
    params: &MarketParams<T>,
    rng: &mut R,
) -> Result<PopulationState, ClearingError> {
    let eps: T = state.eps();
    let choice = match contact_pair(eps.as_f64(), rng) {
        Some(group) => group,
        None => draw_g_random(params, eps, rng)?,
    };
    Ok(state.join(choice))
}

/// Settings of one simulated trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationSpec<T> {
    pub kind: DynamicsKind,
    pub eps0: T,
    pub n0: u64,
    pub rounds: u64,
    pub seed: u64,
    /// Record every `stride` rounds (plus the first and last state).
    pub stride: u64,
    pub observation: ObservationModel,
}

impl<T: Scalar> SimulationSpec<T> {
    fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |field, message: &str| {
            Err(DynamicsError::InvalidSetting {
                field,
                message: message.into(),
            })
        };
        if !(self.eps0 > T::zero() && self.eps0 < T::one()) {
            return bad("eps0", "must lie in (0, 1)");
        }
        if self.n0 == 0 {
            return bad("n0", "must be positive");
        }
        if self.stride == 0 {
            return bad("stride", "must be positive");
        }
        Ok(())
    }

    /// Initial state with `n₁ = round(ε₀·n₀)`.
    pub fn initial_state(&self) -> PopulationState {
        let n1 = (self.eps0.as_f64() * self.n0 as f64).round() as u64;
        let n1 = n1.min(self.n0);
        PopulationState::new(n1, self.n0 - n1)
    }
}

/// A recorded point of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<T> {
    pub t: u64,
    pub n1: u64,
    pub n2: u64,
    pub eps: T,
}

impl<T: Scalar> Sample<T> {
    fn of(state: &PopulationState) -> Self {
        Sample {
            t: state.t,
            n1: state.n1,
            n2: state.n2,
            eps: state.eps(),
        }
    }
}

/// Why a finite-network run stopped early.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Truncation {
    pub at_round: u64,
    pub edges_used: u64,
    pub edge_budget: u64,
}

/// Time series of the population state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub kind: TrajectoryKind,
    pub seed: u64,
    pub params: MarketParams<T>,
    pub eps0: T,
    pub n0: u64,
    /// `round(ε₀ n₀)`.
    pub initial_n1: u64,
    pub samples: Vec<Sample<T>>,
    pub final_state: PopulationState,
    pub truncated: Option<Truncation>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn final_eps(&self) -> T {
        self.final_state.eps()
    }
}

struct Recorder<T> {
    stride: u64,
    samples: Vec<Sample<T>>,
}

impl<T: Scalar> Recorder<T> {
    fn new(stride: u64, first: &PopulationState) -> Self {
        Recorder {
            stride,
            samples: vec![Sample::of(first)],
        }
    }

    fn observe(&mut self, state: &PopulationState) {
        if state.t % self.stride == 0 {
            self.samples.push(Sample::of(state));
        }
    }

    fn finish(mut self, last: &PopulationState) -> Vec<Sample<T>> {
        if self.samples.last().map(|s| s.t) != Some(last.t) {
            self.samples.push(Sample::of(last));
        }
        self.samples
    }
}

/// Runs `rounds` steps of the chosen dynamics with limiting returns.
pub fn simulate<T: Scalar>(params: &MarketParams<T>, spec: &SimulationSpec<T>) -> Result<Trajectory<T>, DynamicsError> {
    spec.validate()?;
    params.validate()?;
    let mut rng: StreamRng = rng::stream(spec.seed, Purpose::Dynamics, &[]);
    let mut state = spec.initial_state();
    let initial_n1 = state.n1;
    let mut rec = Recorder::new(spec.stride, &state);
    for _ in 0..spec.rounds {
        state = match spec.kind {
            DynamicsKind::Average => step_average(state, params, spec.observation, &mut rng)?,
            DynamicsKind::Random => step_random(state, params, &mut rng)?,
        };
        rec.observe(&state);
    }
    Ok(Trajectory {
        kind: match spec.kind {
            DynamicsKind::Average => TrajectoryKind::Average,
            DynamicsKind::Random => TrajectoryKind::Random,
        },
        seed: spec.seed,
        params: *params,
        eps0: spec.eps0,
        n0: spec.n0,
        initial_n1,
        samples: rec.finish(&state),
        final_state: state,
        truncated: None,
    })
}

/// Limits of the finite-network Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FiniteOptions {
    /// Largest network cleared per round; larger populations are represented
    /// by a network of this size with the same group proportions.
    pub network_cap: usize,
    /// Total edges that may be sampled before the run is truncated.
    pub edge_budget: Option<u64>,
}

impl Default for FiniteOptions {
    fn default() -> Self {
        FiniteOptions {
            network_cap: 5_000,
            edge_budget: None,
        }
    }
}

/// Group sizes of the network cleared for a population `(n1, n2)`, both
/// groups non-empty.
pub fn capped_composition(n1: u64, n2: u64, cap: usize) -> (usize, usize) {
    let n = n1 + n2;
    let cap = cap.max(2) as u64;
    if n <= cap {
        return (n1 as usize, n2 as usize);
    }
    let c1 = ((cap as f64) * (n1 as f64) / (n as f64)).round() as u64;
    let c1 = c1.clamp(1, cap - 1);
    (c1 as usize, (cap - c1) as usize)
}

/// As [`simulate`], but every mixed-pair decision uses returns obtained by
/// clearing a freshly sampled network with realised shocks. Contacts are
/// drawn uniformly without replacement from the current population.
pub fn simulate_finite<T: Scalar>(
    params: &MarketParams<T>,
    spec: &SimulationSpec<T>,
    options: &FiniteOptions,
) -> Result<Trajectory<T>, DynamicsError> {
    spec.validate()?;
    params.validate()?;
    if spec.n0 < 2 {
        return Err(DynamicsError::InvalidSetting {
            field: "n0",
            message: "finite-network dynamics need at least two agents".into(),
        });
    }
    let mut rng: StreamRng = rng::stream(spec.seed, Purpose::Dynamics, &[1]);
    let mut state = spec.initial_state();
    let initial_n1 = state.n1;
    let mut rec = Recorder::new(spec.stride, &state);
    let mut edges_used = 0u64;
    let mut truncated = None;

    for round in 0..spec.rounds {
        let n = state.n();
        let first = rng.random_range(0..n);
        let mut second = rng.random_range(0..n - 1);
        if second >= first {
            second += 1;
        }
        let a = first < state.n1;
        let b = second < state.n1;
        let choice = if a == b {
            a
        } else {
            let (c1, c2) = capped_composition(state.n1, state.n2, options.network_cap);
            let net_seed = rng::derive_seed(spec.seed, Purpose::Network, &[round]);
            let net = model::sample_network(params, c1, c2, net_seed)?;
            edges_used += net.edges.len() as u64;
            if let Some(budget) = options.edge_budget {
                if edges_used > budget {
                    truncated = Some(Truncation {
                        at_round: state.t,
                        edges_used,
                        edge_budget: budget,
                    });
                    break;
                }
            }
            let shock_seed = rng::derive_seed(spec.seed, Purpose::Shocks, &[round]);
            let shocks = model::sample_shocks(params, net.eps_realized, c2, shock_seed)?;
            let out = clearing::solve_clearing_finite(&net, &shocks, params, None)?;
            match spec.kind {
                DynamicsKind::Average => {
                    let gap = out.mean_r1().unwrap_or_else(T::zero) - out.mean_r2().unwrap_or_else(T::zero);
                    average_choice(gap, state.eps(), params.c_bar, spec.observation, &mut rng)
                }
                DynamicsKind::Random => {
                    let i = rng.random_range(0..c1);
                    let j = rng.random_range(0..c2);
                    out.r1[i] >= out.r2[j]
                }
            }
        };
        state = state.join(choice);
        rec.observe(&state);
    }
    Ok(Trajectory {
        kind: TrajectoryKind::FiniteMc(spec.kind),
        seed: spec.seed,
        params: *params,
        eps0: spec.eps0,
        n0: spec.n0,
        initial_n1,
        samples: rec.finish(&state),
        final_state: state,
        truncated,
    })
}

/// One-line `key=value` rendering of the parameters.
pub fn params_snapshot<T: Scalar>(p: &MarketParams<T>) -> String {
    let fields = [
        ("w", p.w),
        ("alpha", p.alpha),
        ("r_s", p.r_s),
        ("r_b", p.r_b),
        ("u", p.u),
        ("d", p.d),
        ("delta", p.delta),
        ("v", p.v),
        ("p_ss", p.p_ss),
        ("c_bar", p.c_bar),
    ];
    fields
        .iter()
        .map(|(k, v)| format!("{k}={}", format_sig(v.as_f64(), 6)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Writes `t,n1,n2,eps` rows preceded by `#` comment lines carrying the
/// kind, seed and parameter snapshot.
pub fn write_trajectory_csv<T: Scalar, W: Write>(traj: &Trajectory<T>, mut out: W) -> io::Result<()> {
    writeln!(out, "# kind={}", traj.kind.label())?;
    writeln!(out, "# seed={}", traj.seed)?;
    writeln!(
        out,
        "# n0={} eps0={} initial_n1={}",
        traj.n0,
        format_sig(traj.eps0.as_f64(), 6),
        traj.initial_n1
    )?;
    writeln!(out, "# params {}", params_snapshot(&traj.params))?;
    if let Some(t) = traj.truncated {
        writeln!(
            out,
            "# truncated at_round={} edges_used={} edge_budget={}",
            t.at_round, t.edges_used, t.edge_budget
        )?;
    }
    writeln!(out, "t,n1,n2,eps")?;
    for s in &traj.samples {
        writeln!(out, "{},{},{},{}", s.t, s.n1, s.n2, format_sig(s.eps.as_f64(), 6))?;
    }
    Ok(())
}
