//! Fixed points of the logit dynamics, a brute-force Wardrop oracle on small
//! instances, vanishing-noise sweeps, and composition of equilibria across
//! series components.

use serde_json::json;

use crate::dynamics::{self, LogitParams, StopRule};
use crate::error::{Error, Result};
use crate::game::{self, FlowState, RoutingGame, DEFAULT_WARDROP_TOL};

/// Outcome of one fixed-point solve.
#[derive(Debug, Clone)]
pub struct EquilibriumReport {
    pub fixed_point: FlowState,
    pub eta: f64,
    /// Worst used-route cost excess at the fixed point.
    pub residual: f64,
    /// l1 distance of the aggregate edge flows to the nearest oracle
    /// equilibrium; only filled in when an oracle set was computed.
    pub wardrop_distance: Option<f64>,
    pub converged: bool,
    pub steps: usize,
}

impl EquilibriumReport {
    /// JSON document with flows keyed by population id, routes labelled by
    /// their edge sequence.
    pub fn to_json(&self, game: &RoutingGame) -> serde_json::Value {
        let routes: Vec<String> = game
            .routes()
            .routes()
            .iter()
            .map(|r| r.label())
            .collect();
        let flows: serde_json::Map<String, serde_json::Value> = game
            .populations()
            .iter()
            .enumerate()
            .map(|(p, pop)| (pop.id.clone(), json!(self.fixed_point.row(p))))
            .collect();
        let aggregate = game::aggregate_flows(game, &self.fixed_point)
            .map(|f| f.total)
            .unwrap_or_default();
        let edge_flows: serde_json::Map<String, serde_json::Value> = game
            .graph()
            .edges()
            .iter()
            .zip(aggregate)
            .map(|(e, f)| (e.id.clone(), json!(f)))
            .collect();
        json!({
            "eta": self.eta,
            "converged": self.converged,
            "steps": self.steps,
            "residual": self.residual,
            "wardrop_distance": self.wardrop_distance,
            "routes": routes,
            "flows": flows,
            "aggregate_edge_flows": edge_flows,
        })
    }
}

/// Integrates the route dynamics until stationarity (or the horizon) and
/// reports the terminal state. On series-of-simple topologies the result is
/// independent of the initial state; elsewhere distinct starts may land on
/// distinct fixed points.
pub fn solve_fixed_point(
    game: &RoutingGame,
    params: &LogitParams,
    initial: &FlowState,
) -> Result<EquilibriumReport> {
    initial.ensure_admissible(game, DEFAULT_WARDROP_TOL)?;
    let outcome = dynamics::run_dynamics(game, initial, params, false, Some(StopRule::default()))?;
    let residual =
        game::wardrop_residual(game, &outcome.final_state, DEFAULT_WARDROP_TOL)?.residual;
    Ok(EquilibriumReport {
        fixed_point: outcome.final_state,
        eta: params.eta,
        residual,
        wardrop_distance: None,
        converged: outcome.stationary,
        steps: outcome.steps,
    })
}

/// Settings for the grid-enumeration oracle.
#[derive(Debug, Clone, Copy)]
pub struct OracleParams {
    /// Grid spacing of per-population route flows; `None` picks
    /// `throughput / 20` per population.
    pub grid_step: Option<f64>,
    /// Hard cap on the number of enumerated states.
    pub cap: u64,
    /// Residual acceptance threshold; `None` picks the largest per-population
    /// grid spacing, which scales the threshold with grid resolution. With
    /// steep delays and an equilibrium that falls between grid points this
    /// can be too strict to accept anything; pass an explicit value then.
    pub residual_tol: Option<f64>,
}

pub const DEFAULT_ORACLE_CAP: u64 = 10_000_000;

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            grid_step: None,
            cap: DEFAULT_ORACLE_CAP,
            residual_tol: None,
        }
    }
}

/// All weak compositions of `total` into `parts` buckets, lexicographic.
fn compositions(total: u64, parts: usize) -> Vec<Vec<u64>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for head in 0..=total {
        for mut tail in compositions(total - head, parts - 1) {
            let mut v = Vec::with_capacity(parts);
            v.push(head);
            v.append(&mut tail);
            out.push(v);
        }
    }
    out
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k.min(n));
    let mut result: u128 = 1;
    for i in 0..k {
        result = result * (n - i) as u128 / (i + 1) as u128;
    }
    result
}

/// Exhaustively searches per-population route-flow grids on the admissibility
/// simplex and returns every state whose Wardrop residual is within the
/// acceptance threshold. Deliberately naive: this is the independent yardstick
/// the dynamics is measured against.
pub fn wardrop_bruteforce(game: &RoutingGame, oracle: &OracleParams) -> Result<Vec<FlowState>> {
    let routes = game.num_routes();
    let mut per_population: Vec<Vec<Vec<f64>>> = Vec::with_capacity(game.num_populations());
    let mut total_states: u128 = 1;
    let mut max_spacing = 0.0f64;

    for pop in game.populations() {
        if pop.throughput <= 0.0 {
            per_population.push(vec![vec![0.0; routes]]);
            continue;
        }
        let increments = match oracle.grid_step {
            Some(step) => {
                if step <= 0.0 || !step.is_finite() {
                    return Err(Error::InvalidParams(format!(
                        "oracle grid step must be positive, got {step}"
                    )));
                }
                ((pop.throughput / step).round() as u64).max(1)
            }
            None => 20,
        };
        max_spacing = max_spacing.max(pop.throughput / increments as f64);
        total_states = total_states.saturating_mul(binomial(increments + routes as u64 - 1, routes as u64 - 1));
        if total_states > oracle.cap as u128 {
            return Err(Error::TooLarge {
                points: total_states,
                cap: oracle.cap,
            });
        }
        let states = compositions(increments, routes)
            .into_iter()
            .map(|counts| {
                counts
                    .iter()
                    .map(|&k| pop.throughput * k as f64 / increments as f64)
                    .collect()
            })
            .collect();
        per_population.push(states);
    }

    let accept_tol = oracle.residual_tol.unwrap_or(max_spacing);

    let mut found = Vec::new();
    let mut indices = vec![0usize; per_population.len()];
    loop {
        let z: Vec<Vec<f64>> = indices
            .iter()
            .enumerate()
            .map(|(p, &i)| per_population[p][i].clone())
            .collect();
        let state = FlowState::new(z)?;
        let report = game::wardrop_residual(game, &state, DEFAULT_WARDROP_TOL)?;
        if report.residual <= accept_tol {
            found.push(state);
        }

        // odometer increment
        let mut pos = indices.len();
        loop {
            if pos == 0 {
                return Ok(found);
            }
            pos -= 1;
            indices[pos] += 1;
            if indices[pos] < per_population[pos].len() {
                break;
            }
            indices[pos] = 0;
        }
    }
}

/// Minimum l1 distance between `flows` and the aggregate edge flows of the
/// oracle states. `None` when the set is empty.
pub fn distance_to_set(flows: &[f64], aggregates: &[Vec<f64>]) -> Option<f64> {
    aggregates
        .iter()
        .map(|a| {
            a.iter()
                .zip(flows)
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>()
        })
        .min_by(|a, b| a.partial_cmp(b).expect("distances are finite"))
}

pub fn oracle_aggregates(game: &RoutingGame, states: &[FlowState]) -> Result<Vec<Vec<f64>>> {
    states
        .iter()
        .map(|s| game::aggregate_flows(game, s).map(|f| f.total))
        .collect()
}

/// Default sweep used when no noise schedule is given.
pub const DEFAULT_ETA_SEQUENCE: [f64; 7] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0];

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub eta: f64,
    pub wardrop_distance: f64,
    pub residual: f64,
    pub converged: bool,
}

/// Fixed points along an increasing noise-sharpness schedule, each measured
/// against the oracle's equilibrium set.
#[derive(Debug, Clone)]
pub struct SweepDiagnostics {
    pub entries: Vec<SweepEntry>,
    pub final_report: EquilibriumReport,
    pub oracle_size: usize,
}

impl SweepDiagnostics {
    /// Distances never rise by more than `slack` from one eta to the next.
    pub fn distances_non_increasing(&self, slack: f64) -> bool {
        self.entries
            .windows(2)
            .all(|w| w[1].wardrop_distance <= w[0].wardrop_distance + slack)
    }
}

/// Solves the fixed point at each eta (from the uniform start) and reports
/// the l1 distance of its aggregate edge flows to the oracle's Wardrop set.
pub fn limit_equilibrium(
    game: &RoutingGame,
    etas: &[f64],
    base: &LogitParams,
    oracle: &OracleParams,
) -> Result<SweepDiagnostics> {
    if etas.is_empty() {
        return Err(Error::InvalidParams("eta sequence is empty".into()));
    }
    if etas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams(
            "eta sequence must be strictly increasing".into(),
        ));
    }
    let oracle_states = wardrop_bruteforce(game, oracle)?;
    if oracle_states.is_empty() {
        return Err(Error::Validation(
            "oracle found no equilibria on its grid; refine grid_step or residual_tol".into(),
        ));
    }
    let aggregates = oracle_aggregates(game, &oracle_states)?;

    let initial = FlowState::uniform(game);
    let mut entries = Vec::with_capacity(etas.len());
    let mut last_report = None;
    for &eta in etas {
        let params = LogitParams::with(eta, base.step, base.horizon)?;
        let mut report = solve_fixed_point(game, &params, &initial)?;
        let flows = game::aggregate_flows(game, &report.fixed_point)?.total;
        let distance = distance_to_set(&flows, &aggregates).expect("oracle set is non-empty");
        report.wardrop_distance = Some(distance);
        entries.push(SweepEntry {
            eta,
            wardrop_distance: distance,
            residual: report.residual,
            converged: report.converged,
        });
        last_report = Some(report);
    }
    Ok(SweepDiagnostics {
        entries,
        final_report: last_report.expect("at least one eta"),
        oracle_size: oracle_states.len(),
    })
}

/// Product composition of two component fixed points into a state on the
/// series graph: `z[i*R2 + j] = z1[i] * z2[j] / tau_p`. Component route
/// order is preserved, matching the lexicographic route order of the
/// composed graph.
pub fn compose_series_equilibrium(
    first: &EquilibriumReport,
    second: &EquilibriumReport,
) -> Result<FlowState> {
    compose_series_states(&first.fixed_point, &second.fixed_point)
}

pub fn compose_series_states(first: &FlowState, second: &FlowState) -> Result<FlowState> {
    if first.num_populations() != second.num_populations() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} populations", first.num_populations()),
            actual: format!("{}", second.num_populations()),
        });
    }
    let r2 = second.num_routes();
    let mut rows = Vec::with_capacity(first.num_populations());
    for p in 0..first.num_populations() {
        let tau_first: f64 = first.row(p).iter().sum();
        let tau_second: f64 = second.row(p).iter().sum();
        if (tau_first - tau_second).abs() > 1e-6 * tau_first.abs().max(1.0) {
            return Err(Error::ThroughputMismatch {
                population: p,
                first: tau_first,
                second: tau_second,
            });
        }
        let tau = 0.5 * (tau_first + tau_second);
        let mut row = vec![0.0; first.num_routes() * r2];
        if tau > 0.0 {
            for (i, &zi) in first.row(p).iter().enumerate() {
                for (j, &zj) in second.row(p).iter().enumerate() {
                    row[i * r2 + j] = zi * zj / tau;
                }
            }
        }
        rows.push(row);
    }
    FlowState::new(rows)
}

/// Marginal route flows of a series-graph state on its two components:
/// `z1[i] = sum_j z[i*R2+j]`, `z2[j] = sum_i z[i*R2+j]`.
pub fn split_series_state(state: &FlowState, r2: usize) -> Result<(FlowState, FlowState)> {
    let total = state.num_routes();
    if r2 == 0 || !total.is_multiple_of(r2) {
        return Err(Error::DimensionMismatch {
            expected: format!("a route count divisible by {r2}"),
            actual: format!("{total}"),
        });
    }
    let r1 = total / r2;
    let mut first = Vec::with_capacity(state.num_populations());
    let mut second = Vec::with_capacity(state.num_populations());
    for p in 0..state.num_populations() {
        let row = state.row(p);
        let mut zi = vec![0.0; r1];
        let mut zj = vec![0.0; r2];
        for i in 0..r1 {
            for j in 0..r2 {
                zi[i] += row[i * r2 + j];
                zj[j] += row[i * r2 + j];
            }
        }
        first.push(zi);
        second.push(zj);
    }
    Ok((FlowState::new(first)?, FlowState::new(second)?))
}
