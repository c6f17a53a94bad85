//! Join-the-shortest-queue networks with weighted routing.
//!
//! The crate covers four views of the same model:
//!
//! * [`sim`]: exact event-driven simulation of the n-th system and its
//!   scaled paths;
//! * [`rate`]: the local rate function `L(x, y)`, computed as a convex
//!   program over arrival, service, routing and departure rates, plus the
//!   piecewise representation over constant-dynamics domains;
//! * [`fluid`]: the deterministic fluid model and the `Σ|q − q'|`
//!   contraction check;
//! * [`ldp`]: path action of piecewise-linear queue trajectories, its
//!   minimisation over terminal-threshold events and direct Monte Carlo
//!   estimates of the matching rare-event probabilities.
//!
//! Indices are 0-based throughout the library. The CLI and the topology
//! file format are 1-based.

pub mod cost;
pub mod fluid;
pub mod ldp;
pub mod path;
pub mod rate;
pub mod sim;
pub mod topology;

mod linalg;

pub use cost::{pi, psi_poisson, CostError, CostModel, PoissonCost, SeparableCost};
pub use fluid::{fluid_route_step, fluid_solve, lyapunov_check, nominal_inputs, FluidError, FluidSolution, RouteStep};
pub use sim::{
    audit, scale_path, simulate, simulate_extremes, simulate_replication, QueueExtremes, SamplePath,
    SimConfig, SimError, SimEvent, TieRule,
};
pub use ldp::{
    check_replications, estimate_rare_event, event_occurs, extrapolate_rate, minimize_action,
    path_action, ActionOptimum, ActionPiece, ActionReport, CostFn, EventTarget, InitialCost, LdpError,
    RareEventSpec, RateFit, ScaleEstimate,
};
pub use path::{PathError, PiecewisePath};
pub use rate::{
    classify_domain, local_rate, local_rate_bruteforce, psi_ij, DomainLabel, FeasibleSetSpec,
    RateError, RateOptions, RateStatus, RateWitness,
};
pub use topology::{Topology, TopologyConfig, TopologyError, Weight};
