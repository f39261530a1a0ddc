//! Debt clearing, replicator dynamics and evolutionary-equilibrium analysis
//! for a growing financial network of risk-free lenders and risky borrowers.
//!
//! The analytic routines are generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the common double-precision case.

pub mod analysis;
pub mod clearing;
pub mod dynamics;
pub mod model;
pub mod rng;
pub mod scalar;

pub use clearing::{
    expected_surplus, limiting_returns, solve_clearing_finite, solve_xbar_closed_form, solve_xbar_iterative,
    AsymptoticOutcome, ClearingError, FiniteClearingOutcome, LimitingReturns, Regime,
};
pub use analysis::{
    drift_average, drift_random, find_equilibria, integrate_ode, predict_limit, AnalysisError, Clause, Equilibrium,
    EquilibriumKind, EquilibriumSet, LimitPrediction, OdePath, Stability,
};
pub use dynamics::{
    simulate, simulate_finite, DynamicsError, DynamicsKind, FiniteOptions, ObservationModel, PopulationState,
    SimulationSpec, Trajectory, TrajectoryKind,
};
pub use model::{derive, sample_network, sample_shocks, DerivedQuantities, Group, LiabilityNetwork, MarketParams, ModelError, ShockVector};
pub use scalar::Scalar;

pub type MarketParams64 = MarketParams<f64>;
pub type MarketParams32 = MarketParams<f32>;
pub type DerivedQuantities64 = DerivedQuantities<f64>;
pub type LiabilityNetwork64 = LiabilityNetwork<f64>;
pub type ShockVector64 = ShockVector<f64>;
pub type FiniteClearingOutcome64 = FiniteClearingOutcome<f64>;
pub type AsymptoticOutcome64 = AsymptoticOutcome<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type SimulationSpec64 = SimulationSpec<f64>;
pub type Equilibrium64 = Equilibrium<f64>;
pub type EquilibriumSet64 = EquilibriumSet<f64>;
pub type LimitPrediction64 = LimitPrediction<f64>;
