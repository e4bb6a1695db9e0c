//! The logit route-choice dynamics and its numerical machinery.
//!
//! Each population continuously reallocates flow toward routes according to a
//! softmax of negative route costs with sharpness `eta`, while existing flow
//! decays at unit rate:
//!
//! ```text
//! dz[p][r]/dt = tau[p] * exp(-eta * c[p][r]) / sum_s exp(-eta * c[p][s]) - z[p][r]
//! ```
//!
//! The general form runs on any multigraph. On parallel-route (collapsed)
//! games the aggregate edge flows evolve autonomously; their Jacobian is
//! Metzler and every column sums to -1, which yields an l1 contraction at
//! rate `exp(-t)`. Both facts are checked numerically by
//! [`contraction_certificate`] and [`contraction_pair_test`].

use std::io::Write;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::game::{self, clamp_flow, FlowState, RoutingGame};

/// Shifted softmax exponents below this threshold get exactly zero weight,
/// mirroring the sharp best-response limit as `eta` grows.
pub const UNDERFLOW_EXPONENT: f64 = -700.0;
pub const DEFAULT_STEP: f64 = 0.01;
pub const DEFAULT_HORIZON: f64 = 50.0;
/// Multiplicative slack on the `exp(-t)` contraction bound, absorbing
/// integrator discretization error.
pub const CONTRACTION_SLACK: f64 = 1.0 + 1e-3;
/// Off-diagonal Jacobian entries above this (tiny, negative) threshold still
/// count as Metzler.
pub const METZLER_TOL: f64 = 1e-10;
/// Step for the finite-difference Jacobian cross-check.
pub const FD_STEP: f64 = 1e-6;

/// Inverse noise level, integrator step and end time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogitParams {
    pub eta: f64,
    pub step: f64,
    pub horizon: f64,
}

impl LogitParams {
    pub fn new(eta: f64) -> Result<Self> {
        let params = Self {
            eta,
            step: DEFAULT_STEP,
            horizon: DEFAULT_HORIZON,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with(eta: f64, step: f64, horizon: f64) -> Result<Self> {
        let params = Self { eta, step, horizon };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.eta.is_finite() || self.eta < 0.0 {
            return Err(Error::InvalidParams(format!(
                "eta must be finite and non-negative, got {}",
                self.eta
            )));
        }
        if !self.step.is_finite() || self.step <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if !self.horizon.is_finite() || self.horizon < self.step {
            return Err(Error::InvalidParams(format!(
                "horizon must be at least one step, got {}",
                self.horizon
            )));
        }
        Ok(())
    }

    fn num_steps(&self) -> usize {
        ((self.horizon / self.step).round() as usize).max(1)
    }
}

/// Early-stop rule: halt once `||dz/dt||_1` stays below `max_rhs_l1` for
/// `consecutive` checks in a row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub max_rhs_l1: f64,
    pub consecutive: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_rhs_l1: 1e-9,
            consecutive: 10,
        }
    }
}

/// Softmax reallocation target: `tau_p * exp(-eta c_r) / sum_s exp(-eta c_s)`.
///
/// The minimum cost is subtracted before exponentiation so the computation
/// never overflows; the output sums to `tau_p` up to rounding.
pub fn logit_choice(costs: &[f64], eta: f64, tau_p: f64) -> Result<Vec<f64>> {
    if costs.is_empty() {
        return Ok(Vec::new());
    }
    if costs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("route cost".into()));
    }
    if !eta.is_finite() || eta < 0.0 {
        return Err(Error::InvalidParams(format!(
            "eta must be finite and non-negative, got {eta}"
        )));
    }
    if !tau_p.is_finite() || tau_p < 0.0 {
        return Err(Error::InvalidParams(format!(
            "throughput must be finite and non-negative, got {tau_p}"
        )));
    }
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = costs
        .iter()
        .map(|&c| {
            let exponent = -eta * (c - min);
            if exponent < UNDERFLOW_EXPONENT {
                0.0
            } else {
                exponent.exp()
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| tau_p * w / total).collect())
}

/// Right-hand side of the route dynamics on an arbitrary multigraph.
pub fn rhs_route(game: &RoutingGame, state: &FlowState, eta: f64) -> Result<Vec<Vec<f64>>> {
    let costs = game::route_costs(game, state)?;
    let mut out = Vec::with_capacity(game.num_populations());
    for (p, pop) in game.populations().iter().enumerate() {
        let choice = logit_choice(&costs[p], eta, pop.throughput)?;
        out.push(
            choice
                .iter()
                .zip(state.row(p))
                .map(|(c, z)| c - z)
                .collect(),
        );
    }
    Ok(out)
}

fn require_parallel_form(game: &RoutingGame) -> Result<()> {
    if !game.is_parallel_form() {
        return Err(Error::NotSimple(
            "aggregate dynamics needs a two-node parallel-route game; collapse it first".into(),
        ));
    }
    Ok(())
}

/// Right-hand side of the autonomous aggregate dynamics on a parallel-route
/// game: `df_e/dt = sum_p tau_p softmax_e(-eta d^p(f)) - f_e`.
pub fn rhs_aggregate_simple(game: &RoutingGame, flows: &[f64], eta: f64) -> Result<Vec<f64>> {
    require_parallel_form(game)?;
    if flows.len() != game.num_edges() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} edge flows", game.num_edges()),
            actual: format!("{}", flows.len()),
        });
    }
    let clamped: Vec<f64> = flows.iter().map(|&f| clamp_flow(f)).collect::<Result<_>>()?;
    let mut out: Vec<f64> = flows.iter().map(|f| -f).collect();
    for (p, pop) in game.populations().iter().enumerate() {
        let delays: Vec<f64> = clamped
            .iter()
            .enumerate()
            .map(|(e, &f)| game.delay(p, e).eval(f))
            .collect();
        let choice = logit_choice(&delays, eta, pop.throughput)?;
        for (o, c) in out.iter_mut().zip(choice) {
            *o += c;
        }
    }
    Ok(out)
}

/// Time-stamped states of one integration run, sampled every step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<FlowState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &FlowState {
        self.states.last().expect("trajectory has at least the initial state")
    }
}

/// Result of driving the dynamics, with or without trajectory recording.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub final_state: FlowState,
    pub steps: usize,
    /// True when the stop rule fired before the horizon (or, without a stop
    /// rule, when the final right-hand side satisfies the default rule's
    /// threshold).
    pub stationary: bool,
    pub trajectory: Option<Trajectory>,
}

struct FlatSystem<'a> {
    game: &'a RoutingGame,
    eta: f64,
    num_populations: usize,
    num_routes: usize,
}

impl<'a> FlatSystem<'a> {
    fn new(game: &'a RoutingGame, eta: f64) -> Self {
        Self {
            game,
            eta,
            num_populations: game.num_populations(),
            num_routes: game.num_routes(),
        }
    }

    fn len(&self) -> usize {
        self.num_populations * self.num_routes
    }

    fn rhs(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        let game = self.game;
        let r = self.num_routes;
        // aggregate edge flows straight from the flat state
        let mut edge_flows = vec![0.0; game.num_edges()];
        for p in 0..self.num_populations {
            for (route_idx, route) in game.routes().routes().iter().enumerate() {
                let flow = z[p * r + route_idx];
                for &e in route.edge_indices() {
                    edge_flows[e] += flow;
                }
            }
        }
        let costs = game::route_costs_at_edge_flows(game, &edge_flows)?;
        for (p, pop) in game.populations().iter().enumerate() {
            let choice = logit_choice(&costs[p], self.eta, pop.throughput)?;
            for (route_idx, c) in choice.into_iter().enumerate() {
                out[p * r + route_idx] = c - z[p * r + route_idx];
            }
        }
        Ok(())
    }

    fn to_state(&self, z: &[f64]) -> FlowState {
        let matrix = (0..self.num_populations)
            .map(|p| z[p * self.num_routes..(p + 1) * self.num_routes].to_vec())
            .collect();
        FlowState::new(matrix).expect("integrator states stay finite and near non-negative")
    }
}

/// Classical fixed-step fourth-order Runge-Kutta driver.
///
/// Throughput is conserved along the flow because each population's summed
/// right-hand side is `tau_p - sum_r z[p][r]`; starting admissible keeps the
/// sums at `tau_p` up to rounding.
pub fn run_dynamics(
    game: &RoutingGame,
    initial: &FlowState,
    params: &LogitParams,
    record: bool,
    stop: Option<StopRule>,
) -> Result<RunOutcome> {
    params.validate()?;
    initial.matches_game(game)?;
    let system = FlatSystem::new(game, params.eta);
    let n = system.len();
    let h = params.step;

    let mut y: Vec<f64> = initial.matrix().iter().flatten().copied().collect();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut stage = vec![0.0; n];

    let mut times = vec![0.0];
    let mut states = vec![initial.clone()];

    let mut quiet_checks = 0usize;
    let mut stationary = false;
    let mut steps = 0usize;

    for step_index in 0..params.num_steps() {
        system.rhs(&y, &mut k1)?;
        let rhs_l1: f64 = k1.iter().map(|v| v.abs()).sum();
        if let Some(rule) = stop {
            if rhs_l1 < rule.max_rhs_l1 {
                quiet_checks += 1;
                if quiet_checks >= rule.consecutive {
                    stationary = true;
                    break;
                }
            } else {
                quiet_checks = 0;
            }
        }

        for i in 0..n {
            stage[i] = y[i] + 0.5 * h * k1[i];
        }
        system.rhs(&stage, &mut k2)?;
        for i in 0..n {
            stage[i] = y[i] + 0.5 * h * k2[i];
        }
        system.rhs(&stage, &mut k3)?;
        for i in 0..n {
            stage[i] = y[i] + h * k3[i];
        }
        system.rhs(&stage, &mut k4)?;

        let t = (step_index + 1) as f64 * h;
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if !y[i].is_finite() {
                return Err(Error::StepRejected { time: t });
            }
        }
        steps += 1;
        if record {
            times.push(t);
            states.push(system.to_state(&y));
        }
    }

    if stop.is_none() {
        system.rhs(&y, &mut k1)?;
        let rhs_l1: f64 = k1.iter().map(|v| v.abs()).sum();
        stationary = rhs_l1 < StopRule::default().max_rhs_l1;
    }

    Ok(RunOutcome {
        final_state: system.to_state(&y),
        steps,
        stationary,
        trajectory: record.then_some(Trajectory { times, states }),
    })
}

/// Integrates the route dynamics over the full horizon, recording every step.
pub fn integrate(
    game: &RoutingGame,
    initial: &FlowState,
    params: &LogitParams,
) -> Result<Trajectory> {
    let outcome = run_dynamics(game, initial, params, true, None)?;
    Ok(outcome.trajectory.expect("recording was requested"))
}

/// Aggregate edge-flow trajectory of a parallel-route game.
#[derive(Debug, Clone)]
pub struct AggregateTrajectory {
    pub times: Vec<f64>,
    pub flows: Vec<Vec<f64>>,
}

/// Integrates the autonomous aggregate dynamics directly.
pub fn integrate_aggregate(
    game: &RoutingGame,
    initial: &[f64],
    params: &LogitParams,
) -> Result<AggregateTrajectory> {
    params.validate()?;
    require_parallel_form(game)?;
    if initial.len() != game.num_edges() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} edge flows", game.num_edges()),
            actual: format!("{}", initial.len()),
        });
    }
    let h = params.step;
    let n = initial.len();
    let mut y = initial.to_vec();
    let mut times = vec![0.0];
    let mut flows = vec![y.clone()];
    for step_index in 0..params.num_steps() {
        let k1 = rhs_aggregate_simple(game, &y, params.eta)?;
        let s1: Vec<f64> = (0..n).map(|i| y[i] + 0.5 * h * k1[i]).collect();
        let k2 = rhs_aggregate_simple(game, &s1, params.eta)?;
        let s2: Vec<f64> = (0..n).map(|i| y[i] + 0.5 * h * k2[i]).collect();
        let k3 = rhs_aggregate_simple(game, &s2, params.eta)?;
        let s3: Vec<f64> = (0..n).map(|i| y[i] + h * k3[i]).collect();
        let k4 = rhs_aggregate_simple(game, &s3, params.eta)?;
        let t = (step_index + 1) as f64 * h;
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if !y[i].is_finite() {
                return Err(Error::StepRejected { time: t });
            }
        }
        times.push(t);
        flows.push(y.clone());
    }
    Ok(AggregateTrajectory { times, flows })
}

/// Writes a trajectory as CSV with header
/// `t,z[p=<pid>][r=<ridx>]...,f[e=<eid>]...`, one row per step.
pub fn write_trajectory_csv<W: Write>(
    game: &RoutingGame,
    trajectory: &Trajectory,
    writer: &mut W,
) -> Result<()> {
    let mut header = String::from("t");
    for pop in game.populations() {
        for r in 0..game.num_routes() {
            header.push_str(&format!(",z[p={}][r={r}]", pop.id));
        }
    }
    for edge in game.graph().edges() {
        header.push_str(&format!(",f[e={}]", edge.id));
    }
    writeln!(writer, "{header}")?;

    for (t, state) in trajectory.times.iter().zip(&trajectory.states) {
        let mut row = format!("{t}");
        for p in 0..game.num_populations() {
            for &z in state.row(p) {
                row.push_str(&format!(",{z}"));
            }
        }
        let flows = game::aggregate_flows(game, state)?;
        for f in flows.total {
            row.push_str(&format!(",{f}"));
        }
        writeln!(writer, "{row}")?;
    }
    Ok(())
}

/// Analytic Jacobian of [`rhs_aggregate_simple`] at `flows`.
pub fn jacobian_aggregate(game: &RoutingGame, flows: &[f64], eta: f64) -> Result<Vec<Vec<f64>>> {
    require_parallel_form(game)?;
    if flows.len() != game.num_edges() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} edge flows", game.num_edges()),
            actual: format!("{}", flows.len()),
        });
    }
    let clamped: Vec<f64> = flows.iter().map(|&f| clamp_flow(f)).collect::<Result<_>>()?;
    let e = clamped.len();
    let mut jac = vec![vec![0.0; e]; e];
    for (i, row) in jac.iter_mut().enumerate() {
        row[i] = -1.0;
    }
    for (p, pop) in game.populations().iter().enumerate() {
        let delays: Vec<f64> = clamped
            .iter()
            .enumerate()
            .map(|(edge, &f)| game.delay(p, edge).eval(f))
            .collect();
        let shares = logit_choice(&delays, eta, 1.0)?;
        let slopes: Vec<f64> = clamped
            .iter()
            .enumerate()
            .map(|(edge, &f)| eta * game.delay(p, edge).eval_derivative(f))
            .collect();
        for j in 0..e {
            let factor = pop.throughput * slopes[j] * shares[j];
            for i in 0..e {
                if i == j {
                    jac[j][j] -= factor * (1.0 - shares[j]);
                } else {
                    jac[i][j] += factor * shares[i];
                }
            }
        }
    }
    Ok(jac)
}

/// Central finite-difference Jacobian, used to cross-check the analytic one.
/// Needs `flows[j] >= FD_STEP` so the backward sample stays non-negative.
pub fn jacobian_aggregate_fd(game: &RoutingGame, flows: &[f64], eta: f64) -> Result<Vec<Vec<f64>>> {
    require_parallel_form(game)?;
    let e = flows.len();
    let mut jac = vec![vec![0.0; e]; e];
    for j in 0..e {
        let mut forward = flows.to_vec();
        let mut backward = flows.to_vec();
        forward[j] += FD_STEP;
        backward[j] -= FD_STEP;
        let plus = rhs_aggregate_simple(game, &forward, eta)?;
        let minus = rhs_aggregate_simple(game, &backward, eta)?;
        for i in 0..e {
            jac[i][j] = (plus[i] - minus[i]) / (2.0 * FD_STEP);
        }
    }
    Ok(jac)
}

/// Numerical evidence for the contraction structure of the aggregate
/// dynamics, evaluated on a sample of states in the box `[0, tau]^E`.
#[derive(Debug, Clone)]
pub struct ContractionCertificate {
    /// All off-diagonal Jacobian entries stayed above `-METZLER_TOL`.
    pub metzler_ok: bool,
    pub min_offdiag: f64,
    /// Column sums at the worst sampled state (they should all be -1).
    pub column_sums: Vec<f64>,
    pub max_column_sum_error: f64,
    pub samples: usize,
}

pub fn contraction_certificate(
    game: &RoutingGame,
    eta: f64,
    sample_points: usize,
) -> Result<ContractionCertificate> {
    require_parallel_form(game)?;
    let e = game.num_edges();
    let tau = game.total_throughput();

    let mut samples: Vec<Vec<f64>> = Vec::new();
    // coarse corner/midpoint grid, skipped when it would blow up
    if 3f64.powi(e as i32) <= 729.0 {
        let levels = [0.0, 0.5 * tau, tau];
        let mut grid = vec![vec![]];
        for _ in 0..e {
            grid = grid
                .into_iter()
                .flat_map(|prefix: Vec<f64>| {
                    levels.iter().map(move |&l| {
                        let mut next = prefix.clone();
                        next.push(l);
                        next
                    })
                })
                .collect();
        }
        samples.extend(grid);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x00C0_FFEE);
    let dist = Uniform::new_inclusive(0.0, tau.max(f64::MIN_POSITIVE));
    for _ in 0..sample_points {
        samples.push((0..e).map(|_| dist.sample(&mut rng)).collect());
    }

    let mut min_offdiag = f64::INFINITY;
    let mut max_column_sum_error = 0.0f64;
    let mut worst_column_sums = vec![-1.0; e];
    for flows in &samples {
        let jac = jacobian_aggregate(game, flows, eta)?;
        let mut column_sums = vec![0.0; e];
        for (i, row) in jac.iter().enumerate() {
            for (j, &value) in row.iter().enumerate() {
                column_sums[j] += value;
                if i != j {
                    min_offdiag = min_offdiag.min(value);
                }
            }
        }
        let worst = column_sums
            .iter()
            .map(|s| (s + 1.0).abs())
            .fold(0.0, f64::max);
        if worst >= max_column_sum_error {
            max_column_sum_error = worst;
            worst_column_sums = column_sums;
        }
    }

    Ok(ContractionCertificate {
        metzler_ok: min_offdiag >= -METZLER_TOL,
        min_offdiag,
        column_sums: worst_column_sums,
        max_column_sum_error,
        samples: samples.len(),
    })
}

/// Two trajectories' aggregate route flows against the `exp(-t)` envelope.
#[derive(Debug, Clone)]
pub struct ContractionReport {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub bounds: Vec<f64>,
    /// Worst `distance / (d0 * exp(-t))` over the run (no slack applied).
    pub max_ratio: f64,
}

/// Integrates both initial states and asserts the l1 distance between their
/// aggregate route flows stays below `CONTRACTION_SLACK * d0 * exp(-t)`.
pub fn contraction_pair_test(
    game: &RoutingGame,
    first: &FlowState,
    second: &FlowState,
    params: &LogitParams,
) -> Result<ContractionReport> {
    if let crate::graph::Simplicity::SharedEdge(w) = game.simplicity() {
        return Err(Error::NotSimple(format!(
            "edge `{}` belongs to routes {} and {}",
            w.edge, w.route_a, w.route_b
        )));
    }
    first.ensure_admissible(game, game::DEFAULT_WARDROP_TOL)?;
    second.ensure_admissible(game, game::DEFAULT_WARDROP_TOL)?;

    let run_a = run_dynamics(game, first, params, true, None)?;
    let run_b = run_dynamics(game, second, params, true, None)?;
    let traj_a = run_a.trajectory.expect("recorded");
    let traj_b = run_b.trajectory.expect("recorded");

    let l1 = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    };
    let d0 = l1(
        &traj_a.states[0].aggregate_route_flows(),
        &traj_b.states[0].aggregate_route_flows(),
    );

    let mut times = Vec::with_capacity(traj_a.len());
    let mut distances = Vec::with_capacity(traj_a.len());
    let mut bounds = Vec::with_capacity(traj_a.len());
    let mut max_ratio = 0.0f64;
    for ((t, sa), sb) in traj_a
        .times
        .iter()
        .zip(&traj_a.states)
        .zip(&traj_b.states)
    {
        let distance = l1(&sa.aggregate_route_flows(), &sb.aggregate_route_flows());
        let envelope = d0 * (-t).exp();
        let bound = CONTRACTION_SLACK * envelope;
        if distance > bound {
            return Err(Error::ContractionViolated {
                time: *t,
                distance,
                bound,
            });
        }
        if envelope > 0.0 {
            max_ratio = max_ratio.max(distance / envelope);
        }
        times.push(*t);
        distances.push(distance);
        bounds.push(bound);
    }
    Ok(ContractionReport {
        times,
        distances,
        bounds,
        max_ratio,
    })
}
