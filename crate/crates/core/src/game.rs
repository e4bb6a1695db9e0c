//! Populations, delay functions, flow aggregation, route costs and the
//! Wardrop condition.
//!
//! Delay functions are polynomials with non-negative coefficients, which
//! keeps them continuous, non-negative and non-decreasing on `x >= 0` by
//! inspection. Costs always evaluate delays at aggregate edge flows: the
//! populations perceive different delay functions, but congestion itself is
//! shared.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    self, collapsed_edge_id, Edge, EdgeId, IncidenceMatrix, RouteSet, RoutingMultigraph,
    SharedEdgeWitness, Simplicity,
};

/// Default absolute tolerance for admissibility and equilibrium checks.
pub const DEFAULT_WARDROP_TOL: f64 = 1e-6;
/// Default absolute tolerance when collecting cost-minimal routes.
pub const DEFAULT_TIE_TOL: f64 = 1e-6;
/// Flows above this (tiny, negative) threshold are treated as integration
/// noise and clamped to zero before delay evaluation; anything lower is an
/// error.
pub const NEGATIVE_FLOW_TOL: f64 = -1e-9;

/// Polynomial delay `d(x) = sum_k coeffs[k] * x^k` with non-negative
/// coefficients, stored lowest degree first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DelayPolynomial {
    coeffs: Vec<f64>,
}

impl DelayPolynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Result<Self> {
        for (k, c) in coeffs.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::Validation(format!(
                    "delay coefficient of degree {k} is not finite"
                )));
            }
            if *c < 0.0 {
                return Err(Error::Validation(format!(
                    "delay coefficient of degree {k} is negative ({c})"
                )));
            }
        }
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Ok(Self { coeffs })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(vec![c])
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// Derivative value at `x`.
    pub fn eval_derivative(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c)
    }

    /// A positive coefficient of degree >= 1 makes the delay strictly
    /// increasing on `x >= 0`.
    pub fn is_strictly_increasing(&self) -> bool {
        self.coeffs.iter().skip(1).any(|&c| c > 0.0)
    }

    /// Coefficient-wise sum, used when chaining edges of a route into one.
    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..n)
            .map(|k| {
                self.coeffs.get(k).copied().unwrap_or(0.0)
                    + other.coeffs.get(k).copied().unwrap_or(0.0)
            })
            .collect();
        Self { coeffs }
    }
}

impl TryFrom<Vec<f64>> for DelayPolynomial {
    type Error = Error;

    fn try_from(coeffs: Vec<f64>) -> Result<Self> {
        Self::new(coeffs)
    }
}

impl From<DelayPolynomial> for Vec<f64> {
    fn from(p: DelayPolynomial) -> Self {
        p.coeffs
    }
}

/// One user population: a throughput it must route and a delay function per
/// edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub id: String,
    pub throughput: f64,
    pub delays: BTreeMap<EdgeId, DelayPolynomial>,
}

impl Population {
    pub fn new(
        id: impl Into<String>,
        throughput: f64,
        delays: BTreeMap<EdgeId, DelayPolynomial>,
    ) -> Self {
        Self {
            id: id.into(),
            throughput,
            delays,
        }
    }
}

/// A routing game: graph, enumerated routes, incidence matrix and populations.
#[derive(Debug, Clone)]
pub struct RoutingGame {
    graph: RoutingMultigraph,
    routes: RouteSet,
    incidence: IncidenceMatrix,
    populations: Vec<Population>,
    // delays_by_index[p][e] mirrors populations[p].delays keyed by edge index
    delays_by_index: Vec<Vec<DelayPolynomial>>,
}

impl RoutingGame {
    pub fn new(graph: RoutingMultigraph, populations: Vec<Population>) -> Result<Self> {
        if populations.is_empty() {
            return Err(Error::Validation("at least one population is required".into()));
        }
        let mut delays_by_index = Vec::with_capacity(populations.len());
        for pop in &populations {
            if !pop.throughput.is_finite() || pop.throughput < 0.0 {
                return Err(Error::Validation(format!(
                    "population `{}` has invalid throughput {}",
                    pop.id, pop.throughput
                )));
            }
            for edge_id in pop.delays.keys() {
                if graph.edge_position(edge_id).is_none() {
                    return Err(Error::Validation(format!(
                        "population `{}` defines a delay for unknown edge `{edge_id}`",
                        pop.id
                    )));
                }
            }
            let mut dense = Vec::with_capacity(graph.num_edges());
            for edge in graph.edges() {
                let poly = pop.delays.get(&edge.id).ok_or_else(|| {
                    Error::Validation(format!(
                        "population `{}` is missing a delay for edge `{}`",
                        pop.id, edge.id
                    ))
                })?;
                dense.push(poly.clone());
            }
            delays_by_index.push(dense);
        }
        let routes = graph::enumerate_routes(&graph)?;
        let incidence = IncidenceMatrix::build(&graph, &routes);
        Ok(Self {
            graph,
            routes,
            incidence,
            populations,
            delays_by_index,
        })
    }

    pub fn graph(&self) -> &RoutingMultigraph {
        &self.graph
    }

    pub fn routes(&self) -> &RouteSet {
        &self.routes
    }

    pub fn incidence(&self) -> &IncidenceMatrix {
        &self.incidence
    }

    pub fn populations(&self) -> &[Population] {
        &self.populations
    }

    pub fn num_populations(&self) -> usize {
        self.populations.len()
    }

    pub fn num_routes(&self) -> usize {
        self.routes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.graph.num_edges()
    }

    pub fn throughputs(&self) -> Vec<f64> {
        self.populations.iter().map(|p| p.throughput).collect()
    }

    pub fn total_throughput(&self) -> f64 {
        self.populations.iter().map(|p| p.throughput).sum()
    }

    pub fn delay(&self, population: usize, edge: usize) -> &DelayPolynomial {
        &self.delays_by_index[population][edge]
    }

    pub fn is_parallel_form(&self) -> bool {
        self.graph.is_parallel_form()
    }

    /// True when every delay of every population is strictly increasing.
    pub fn all_delays_strictly_increasing(&self) -> bool {
        self.delays_by_index
            .iter()
            .flatten()
            .all(DelayPolynomial::is_strictly_increasing)
    }

    pub fn simplicity(&self) -> Simplicity {
        graph::simplicity(&self.graph, &self.routes)
    }

    fn not_simple_error(w: &SharedEdgeWitness) -> Error {
        Error::NotSimple(format!(
            "edge `{}` belongs to routes {} and {}",
            w.edge, w.route_a, w.route_b
        ))
    }

    /// Same populations on a subgraph, keeping only the delays its edges need.
    pub fn restrict_to(&self, subgraph: RoutingMultigraph) -> Result<RoutingGame> {
        let populations = self
            .populations
            .iter()
            .map(|pop| {
                let delays = pop
                    .delays
                    .iter()
                    .filter(|(id, _)| subgraph.edge_position(id).is_some())
                    .map(|(id, d)| (id.clone(), d.clone()))
                    .collect();
                Population::new(pop.id.clone(), pop.throughput, delays)
            })
            .collect();
        RoutingGame::new(subgraph, populations)
    }
}

/// Rewrites a simple game as an equivalent two-node game with one parallel
/// edge per route. The delay of the replacement edge is the coefficient-wise
/// sum of the delays along the route, so route costs are unchanged. Replacement
/// edge ids are zero-padded route indices, which keeps the collapsed route
/// order equal to the original route order.
pub fn collapse_to_parallel(game: &RoutingGame) -> Result<RoutingGame> {
    if let Simplicity::SharedEdge(w) = game.simplicity() {
        return Err(RoutingGame::not_simple_error(&w));
    }
    let total = game.num_routes();
    let origin = game.graph().origin().clone();
    let destination = game.graph().destination().clone();
    let edges: Vec<Edge> = (0..total)
        .map(|r| Edge {
            id: collapsed_edge_id(r, total),
            tail: origin.clone(),
            head: destination.clone(),
        })
        .collect();
    let graph = RoutingMultigraph::new(
        vec![origin, destination],
        edges,
        game.graph().origin().clone(),
        game.graph().destination().clone(),
    )?;

    let populations = game
        .populations()
        .iter()
        .enumerate()
        .map(|(p, pop)| {
            let mut delays = BTreeMap::new();
            for (r, route) in game.routes().routes().iter().enumerate() {
                let sum = route
                    .edge_indices()
                    .iter()
                    .fold(DelayPolynomial::constant(0.0).unwrap(), |acc, &e| {
                        acc.add(game.delay(p, e))
                    });
                delays.insert(collapsed_edge_id(r, total), sum);
            }
            Population::new(pop.id.clone(), pop.throughput, delays)
        })
        .collect();
    let collapsed = RoutingGame::new(graph, populations)?;
    debug_assert_eq!(collapsed.num_routes(), total);
    Ok(collapsed)
}

/// Per-population route flows, `z[p][r] >= 0`. A state is admissible when each
/// population's flows sum to its throughput.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    z: Vec<Vec<f64>>,
}

impl FlowState {
    pub fn new(z: Vec<Vec<f64>>) -> Result<Self> {
        if z.is_empty() || z[0].is_empty() {
            return Err(Error::DimensionMismatch {
                expected: "a non-empty population x route matrix".into(),
                actual: "an empty matrix".into(),
            });
        }
        let width = z[0].len();
        for row in &z {
            if row.len() != width {
                return Err(Error::DimensionMismatch {
                    expected: format!("{width} route flows per population"),
                    actual: format!("{}", row.len()),
                });
            }
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::NonFinite("route flow".into()));
                }
                if v < NEGATIVE_FLOW_TOL {
                    return Err(Error::NegativeFlow { value: v });
                }
            }
        }
        Ok(Self { z })
    }

    /// Each population spread evenly over all routes.
    pub fn uniform(game: &RoutingGame) -> Self {
        let r = game.num_routes();
        let z = game
            .populations()
            .iter()
            .map(|p| vec![p.throughput / r as f64; r])
            .collect();
        Self { z }
    }

    /// Random admissible state: per-population uniform weights drawn from a
    /// seeded generator, normalized to the throughput. Reproducible across
    /// runs and platforms.
    pub fn seeded(game: &RoutingGame, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new(0.0f64, 1.0);
        let r = game.num_routes();
        let z = game
            .populations()
            .iter()
            .map(|p| {
                let weights: Vec<f64> = (0..r).map(|_| dist.sample(&mut rng)).collect();
                let total: f64 = weights.iter().sum();
                if total <= 0.0 {
                    vec![p.throughput / r as f64; r]
                } else {
                    weights.iter().map(|w| p.throughput * w / total).collect()
                }
            })
            .collect();
        Self { z }
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.z
    }

    pub fn row(&self, population: usize) -> &[f64] {
        &self.z[population]
    }

    pub fn num_populations(&self) -> usize {
        self.z.len()
    }

    pub fn num_routes(&self) -> usize {
        self.z[0].len()
    }

    /// Route flows summed over populations.
    pub fn aggregate_route_flows(&self) -> Vec<f64> {
        let mut agg = vec![0.0; self.num_routes()];
        for row in &self.z {
            for (a, v) in agg.iter_mut().zip(row) {
                *a += v;
            }
        }
        agg
    }

    pub fn matches_game(&self, game: &RoutingGame) -> Result<()> {
        if self.num_populations() != game.num_populations()
            || self.num_routes() != game.num_routes()
        {
            return Err(Error::DimensionMismatch {
                expected: format!(
                    "{} populations x {} routes",
                    game.num_populations(),
                    game.num_routes()
                ),
                actual: format!("{} x {}", self.num_populations(), self.num_routes()),
            });
        }
        Ok(())
    }

    /// Checks the throughput constraints to absolute tolerance `tol`.
    pub fn ensure_admissible(&self, game: &RoutingGame, tol: f64) -> Result<()> {
        self.matches_game(game)?;
        for (pop, row) in game.populations().iter().zip(&self.z) {
            let total: f64 = row.iter().sum();
            if (total - pop.throughput).abs() > tol {
                return Err(Error::NotAdmissible {
                    population: pop.id.clone(),
                    expected: pop.throughput,
                    actual: total,
                });
            }
        }
        Ok(())
    }
}

/// Clamps integration noise in `[NEGATIVE_FLOW_TOL, 0)` to zero; anything
/// more negative is a hard error.
pub(crate) fn clamp_flow(value: f64) -> Result<f64> {
    if value < NEGATIVE_FLOW_TOL {
        Err(Error::NegativeFlow { value })
    } else {
        Ok(value.max(0.0))
    }
}

/// Edge flows per population and in aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateFlows {
    pub per_population: Vec<Vec<f64>>,
    pub total: Vec<f64>,
}

/// `per_population[p] = A z^p`, `total = sum_p A z^p`.
pub fn aggregate_flows(game: &RoutingGame, state: &FlowState) -> Result<AggregateFlows> {
    state.matches_game(game)?;
    let per_population: Vec<Vec<f64>> = state
        .matrix()
        .iter()
        .map(|row| game.incidence().edge_flows(row))
        .collect();
    let mut total = vec![0.0; game.num_edges()];
    for flows in &per_population {
        for (t, f) in total.iter_mut().zip(flows) {
            *t += f;
        }
    }
    Ok(AggregateFlows {
        per_population,
        total,
    })
}

/// Route costs per population: the sum of that population's edge delays along
/// the route, each evaluated at the aggregate flow on the edge.
pub fn route_costs(game: &RoutingGame, state: &FlowState) -> Result<Vec<Vec<f64>>> {
    let flows = aggregate_flows(game, state)?;
    route_costs_at_edge_flows(game, &flows.total)
}

/// Same as [`route_costs`] but starting from aggregate edge flows directly.
pub fn route_costs_at_edge_flows(game: &RoutingGame, edge_flows: &[f64]) -> Result<Vec<Vec<f64>>> {
    if edge_flows.len() != game.num_edges() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} edge flows", game.num_edges()),
            actual: format!("{}", edge_flows.len()),
        });
    }
    let clamped: Vec<f64> = edge_flows
        .iter()
        .map(|&f| clamp_flow(f))
        .collect::<Result<_>>()?;
    let mut costs = Vec::with_capacity(game.num_populations());
    for p in 0..game.num_populations() {
        let edge_delays: Vec<f64> = clamped
            .iter()
            .enumerate()
            .map(|(e, &f)| game.delay(p, e).eval(f))
            .collect();
        let row = game
            .routes()
            .routes()
            .iter()
            .map(|route| route.edge_indices().iter().map(|&e| edge_delays[e]).sum())
            .collect();
        costs.push(row);
    }
    Ok(costs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WardropViolation {
    pub population: usize,
    pub route: usize,
    pub excess: f64,
}

/// Result of checking the equilibrium condition on one state.
#[derive(Debug, Clone, PartialEq)]
pub struct WardropReport {
    /// Worst excess of a used route's cost over the population's minimum
    /// cost. Zero (up to rounding) at an equilibrium, positive otherwise.
    pub residual: f64,
    pub violations: Vec<WardropViolation>,
    pub min_costs: Vec<f64>,
}

impl WardropReport {
    pub fn is_equilibrium(&self, tol: f64) -> bool {
        self.residual <= tol
    }
}

/// Checks `z[p][r] > tol  =>  c[p][r] <= c[p][q]` for all routes `q`.
pub fn wardrop_residual(game: &RoutingGame, state: &FlowState, tol: f64) -> Result<WardropReport> {
    state.ensure_admissible(game, tol)?;
    let costs = route_costs(game, state)?;
    let mut residual = 0.0f64;
    let mut violations = Vec::new();
    let mut min_costs = Vec::with_capacity(game.num_populations());
    for (p, row) in costs.iter().enumerate() {
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        min_costs.push(min);
        for (r, &cost) in row.iter().enumerate() {
            if state.row(p)[r] > tol {
                let excess = cost - min;
                residual = residual.max(excess);
                if excess > tol {
                    violations.push(WardropViolation {
                        population: p,
                        route: r,
                        excess,
                    });
                }
            }
        }
    }
    Ok(WardropReport {
        residual,
        violations,
        min_costs,
    })
}

/// Routes whose cost is within `tie_tol` of the population's minimum.
pub fn optimal_route_set(
    game: &RoutingGame,
    state: &FlowState,
    population: usize,
    tie_tol: f64,
) -> Result<Vec<usize>> {
    let costs = route_costs(game, state)?;
    let row = &costs[population];
    let min = row.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(row
        .iter()
        .enumerate()
        .filter(|(_, &c)| c <= min + tie_tol)
        .map(|(r, _)| r)
        .collect())
}

#[cfg(test)]
pub(crate) mod test_games {
    use super::*;
    use crate::graph::test_graphs;

    pub fn poly(coeffs: &[f64]) -> DelayPolynomial {
        DelayPolynomial::new(coeffs.to_vec()).unwrap()
    }

    fn delays(pairs: &[(&str, &[f64])]) -> BTreeMap<EdgeId, DelayPolynomial> {
        pairs
            .iter()
            .map(|(id, c)| (id.to_string(), poly(c)))
            .collect()
    }

    /// Two parallel edges, two populations with swapped delays; admits a
    /// continuum of equilibria, all with aggregate flows (1, 1).
    pub fn crossed_parallel() -> RoutingGame {
        RoutingGame::new(
            test_graphs::two_parallel(),
            vec![
                Population::new(
                    "pop1",
                    1.0,
                    delays(&[("e1", &[1.0, 1.0]), ("e2", &[0.0, 2.0])]),
                ),
                Population::new(
                    "pop2",
                    1.0,
                    delays(&[("e1", &[0.0, 2.0]), ("e2", &[1.0, 1.0])]),
                ),
            ],
        )
        .unwrap()
    }

    /// Three populations on the double diamond; two essentially different
    /// equilibria (all members of a population on a single route).
    pub fn konishi_diamond() -> RoutingGame {
        let a = [19.0, 1.0];
        let b = [100.0, 1.0];
        let c = [0.0, 20.0];
        let d = [21.0, 1.0];
        RoutingGame::new(
            test_graphs::double_diamond(),
            vec![
                Population::new(
                    "pop1",
                    1.2,
                    delays(&[
                        ("e1", &a),
                        ("e2", &a),
                        ("e3", &b),
                        ("e4", &a),
                        ("e5", &b),
                        ("e6", &a),
                    ]),
                ),
                Population::new(
                    "pop2",
                    1.0,
                    delays(&[
                        ("e1", &a),
                        ("e2", &c),
                        ("e3", &b),
                        ("e4", &a),
                        ("e5", &d),
                        ("e6", &b),
                    ]),
                ),
                Population::new(
                    "pop3",
                    1.0,
                    delays(&[
                        ("e1", &a),
                        ("e2", &b),
                        ("e3", &d),
                        ("e4", &a),
                        ("e5", &b),
                        ("e6", &c),
                    ]),
                ),
            ],
        )
        .unwrap()
    }

    /// Two populations on the simple detour graph, mixing affine and
    /// quadratic delays.
    pub fn detour_game() -> RoutingGame {
        RoutingGame::new(
            test_graphs::detour(),
            vec![
                Population::new(
                    "pop1",
                    5.0,
                    delays(&[
                        ("e1", &[1.0, 1.0]),
                        ("e2", &[2.0, 0.5]),
                        ("e3", &[1.0, 0.0, 1.0]),
                        ("e4", &[0.0, 0.5]),
                    ]),
                ),
                Population::new(
                    "pop2",
                    5.0,
                    delays(&[
                        ("e1", &[1.0, 0.0, 1.0]),
                        ("e2", &[2.0, 1.0]),
                        ("e3", &[2.0, 1.0]),
                        ("e4", &[0.0, 1.0]),
                    ]),
                ),
            ],
        )
        .unwrap()
    }
}
