//! Logit route-choice dynamics for heterogeneous routing games on directed
//! multigraphs.
//!
//! Several populations share one origin-destination network but perceive
//! different delay functions on its edges. Each population continuously
//! shifts flow toward low-cost routes through a softmax with sharpness `eta`.
//! The crate provides:
//!
//! - [`graph`]: multigraphs with parallel edges, route enumeration,
//!   simple / series-of-simple classification, series decomposition and the
//!   parallel collapse of simple graphs;
//! - [`game`]: populations, polynomial delays, flow aggregation, route costs
//!   and the Wardrop equilibrium condition;
//! - [`dynamics`]: the route-choice ODE, fixed-step RK4 integration,
//!   aggregate Jacobians, and the Metzler / column-sum contraction
//!   certificate with its trajectory-pair test;
//! - [`equilibrium`]: fixed-point solves, a brute-force Wardrop oracle,
//!   vanishing-noise sweeps and series composition of equilibria;
//! - [`scenario`]: the JSON scenario format and built-in scenarios.

pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod game;
pub mod graph;
pub mod scenario;

pub use dynamics::{LogitParams, Trajectory};
pub use error::{Error, Result};
pub use game::{DelayPolynomial, FlowState, Population, RoutingGame};
pub use graph::{Edge, IncidenceMatrix, Route, RouteSet, RoutingMultigraph};
pub use scenario::Scenario;
