//! Scenario files: a versioned JSON description of a graph, its populations,
//! dynamics parameters and the initial condition, plus the built-in scenarios
//! used throughout the test-suite and CLI.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{LogitParams, DEFAULT_HORIZON, DEFAULT_STEP};
use crate::error::{Error, Result};
use crate::game::{DelayPolynomial, FlowState, Population, RoutingGame};
use crate::graph::{Edge, RoutingMultigraph};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
    pub origin: String,
    pub destination: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub id: String,
    pub throughput: f64,
    /// Edge id -> polynomial coefficients, lowest degree first
    /// (e.g. `[1, 1]` for `1 + x`, `[0, 20]` for `20x`).
    pub delays: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub eta: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
}

fn default_step() -> f64 {
    DEFAULT_STEP
}

fn default_horizon() -> f64 {
    DEFAULT_HORIZON
}

/// Initial condition: an explicit matrix, the uniform split, or a seeded
/// random admissible state.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitSpec {
    #[default]
    Uniform,
    SeededRandom { seed: u64 },
    Explicit { z: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub graph: GraphSpec,
    pub populations: Vec<PopulationSpec>,
    pub dynamics: DynamicsSpec,
    #[serde(default)]
    pub init: InitSpec,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Cheap structural checks with field-level messages; the full game
    /// invariants are enforced again by [`Scenario::build_game`].
    pub fn validate(&self) -> Result<()> {
        if self.version != SCENARIO_VERSION {
            return Err(Error::Validation(format!(
                "field `version`: expected {SCENARIO_VERSION}, got {}",
                self.version
            )));
        }
        if self.populations.is_empty() {
            return Err(Error::Validation(
                "field `populations`: at least one population is required".into(),
            ));
        }
        for pop in &self.populations {
            if pop.id.is_empty() {
                return Err(Error::Validation("field `populations[].id`: empty id".into()));
            }
        }
        self.logit_params()?;
        if let InitSpec::Explicit { z } = &self.init {
            if z.len() != self.populations.len() {
                return Err(Error::Validation(format!(
                    "field `init.z`: {} rows for {} populations",
                    z.len(),
                    self.populations.len()
                )));
            }
        }
        Ok(())
    }

    pub fn build_game(&self) -> Result<RoutingGame> {
        let graph = RoutingMultigraph::new(
            self.graph.nodes.clone(),
            self.graph.edges.clone(),
            self.graph.origin.clone(),
            self.graph.destination.clone(),
        )?;
        let mut populations = Vec::with_capacity(self.populations.len());
        for pop in &self.populations {
            let mut delays = BTreeMap::new();
            for (edge_id, coeffs) in &pop.delays {
                let poly = DelayPolynomial::new(coeffs.clone()).map_err(|e| {
                    Error::Validation(format!(
                        "field `populations[{}].delays[{edge_id}]`: {e}",
                        pop.id
                    ))
                })?;
                delays.insert(edge_id.clone(), poly);
            }
            populations.push(Population::new(pop.id.clone(), pop.throughput, delays));
        }
        RoutingGame::new(graph, populations)
    }

    pub fn logit_params(&self) -> Result<LogitParams> {
        LogitParams::with(self.dynamics.eta, self.dynamics.step, self.dynamics.horizon)
    }

    pub fn initial_state(&self, game: &RoutingGame) -> Result<FlowState> {
        initial_state_from_spec(&self.init, game)
    }
}

pub fn initial_state_from_spec(spec: &InitSpec, game: &RoutingGame) -> Result<FlowState> {
    let state = match spec {
        InitSpec::Uniform => FlowState::uniform(game),
        InitSpec::SeededRandom { seed } => FlowState::seeded(game, *seed),
        InitSpec::Explicit { z } => FlowState::new(z.clone())?,
    };
    state.matches_game(game)?;
    Ok(state)
}

/// Loads a scenario from a path, or a built-in one via `builtin:<name>`.
pub fn load_scenario(reference: &str) -> Result<Scenario> {
    if let Some(name) = reference.strip_prefix("builtin:") {
        builtin(name).ok_or_else(|| {
            Error::Validation(format!(
                "unknown builtin scenario `{name}` (available: {})",
                BUILTIN_NAMES.join(", ")
            ))
        })
    } else {
        Scenario::load(reference)
    }
}

pub const BUILTIN_NAMES: [&str; 3] = ["example1", "example2", "example3"];

/// Built-in scenarios. `example1`: two parallel edges, two populations with
/// mirrored delays and a continuum of equilibria. `example2`: the
/// two-interior-node diamond where three populations admit two essentially
/// different equilibria. `example3`: a simple four-edge graph with affine and
/// quadratic delays.
pub fn builtin(name: &str) -> Option<Scenario> {
    match name {
        "example1" => Some(crossed_parallel_scenario()),
        "example2" => Some(konishi_scenario()),
        "example3" => Some(detour_scenario()),
        _ => None,
    }
}

fn edge(id: &str, tail: &str, head: &str) -> Edge {
    Edge {
        id: id.into(),
        tail: tail.into(),
        head: head.into(),
    }
}

fn delays(pairs: &[(&str, &[f64])]) -> BTreeMap<String, Vec<f64>> {
    pairs
        .iter()
        .map(|(id, coeffs)| (id.to_string(), coeffs.to_vec()))
        .collect()
}

fn crossed_parallel_scenario() -> Scenario {
    Scenario {
        version: SCENARIO_VERSION,
        name: Some("example1".into()),
        graph: GraphSpec {
            nodes: vec!["o".into(), "d".into()],
            edges: vec![edge("e1", "o", "d"), edge("e2", "o", "d")],
            origin: "o".into(),
            destination: "d".into(),
        },
        populations: vec![
            PopulationSpec {
                id: "pop1".into(),
                throughput: 1.0,
                delays: delays(&[("e1", &[1.0, 1.0]), ("e2", &[0.0, 2.0])]),
            },
            PopulationSpec {
                id: "pop2".into(),
                throughput: 1.0,
                delays: delays(&[("e1", &[0.0, 2.0]), ("e2", &[1.0, 1.0])]),
            },
        ],
        dynamics: DynamicsSpec {
            eta: 5.0,
            step: DEFAULT_STEP,
            horizon: DEFAULT_HORIZON,
        },
        init: InitSpec::SeededRandom { seed: 1 },
    }
}

fn konishi_scenario() -> Scenario {
    let a: &[f64] = &[19.0, 1.0];
    let b: &[f64] = &[100.0, 1.0];
    let c: &[f64] = &[0.0, 20.0];
    let d: &[f64] = &[21.0, 1.0];
    Scenario {
        version: SCENARIO_VERSION,
        name: Some("example2".into()),
        graph: GraphSpec {
            nodes: vec!["o".into(), "a".into(), "b".into(), "d".into()],
            edges: vec![
                edge("e1", "o", "a"),
                edge("e2", "a", "d"),
                edge("e3", "a", "d"),
                edge("e4", "o", "b"),
                edge("e5", "b", "d"),
                edge("e6", "b", "d"),
            ],
            origin: "o".into(),
            destination: "d".into(),
        },
        populations: vec![
            PopulationSpec {
                id: "pop1".into(),
                throughput: 1.2,
                delays: delays(&[
                    ("e1", a),
                    ("e2", a),
                    ("e3", b),
                    ("e4", a),
                    ("e5", b),
                    ("e6", a),
                ]),
            },
            PopulationSpec {
                id: "pop2".into(),
                throughput: 1.0,
                delays: delays(&[
                    ("e1", a),
                    ("e2", c),
                    ("e3", b),
                    ("e4", a),
                    ("e5", d),
                    ("e6", b),
                ]),
            },
            PopulationSpec {
                id: "pop3".into(),
                throughput: 1.0,
                delays: delays(&[
                    ("e1", a),
                    ("e2", b),
                    ("e3", d),
                    ("e4", a),
                    ("e5", b),
                    ("e6", c),
                ]),
            },
        ],
        dynamics: DynamicsSpec {
            eta: 10.0,
            step: DEFAULT_STEP,
            horizon: DEFAULT_HORIZON,
        },
        init: InitSpec::SeededRandom { seed: 0 },
    }
}

fn detour_scenario() -> Scenario {
    Scenario {
        version: SCENARIO_VERSION,
        name: Some("example3".into()),
        graph: GraphSpec {
            nodes: vec!["o".into(), "a".into(), "d".into()],
            edges: vec![
                edge("e1", "o", "d"),
                edge("e2", "o", "a"),
                edge("e3", "o", "d"),
                edge("e4", "a", "d"),
            ],
            origin: "o".into(),
            destination: "d".into(),
        },
        populations: vec![
            PopulationSpec {
                id: "pop1".into(),
                throughput: 5.0,
                delays: delays(&[
                    ("e1", &[1.0, 1.0]),
                    ("e2", &[2.0, 0.5]),
                    ("e3", &[1.0, 0.0, 1.0]),
                    ("e4", &[0.0, 0.5]),
                ]),
            },
            PopulationSpec {
                id: "pop2".into(),
                throughput: 5.0,
                delays: delays(&[
                    ("e1", &[1.0, 0.0, 1.0]),
                    ("e2", &[2.0, 1.0]),
                    ("e3", &[2.0, 1.0]),
                    ("e4", &[0.0, 1.0]),
                ]),
            },
        ],
        dynamics: DynamicsSpec {
            eta: 2.0,
            step: DEFAULT_STEP,
            horizon: DEFAULT_HORIZON,
        },
        init: InitSpec::Uniform,
    }
}
