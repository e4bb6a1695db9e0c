//! Directed multigraphs with a single origin-destination pair, route
//! enumeration, and topology classification.
//!
//! Parallel edges are allowed and distinguished by id. Construction rejects
//! graphs whose origin-destination paths contain a cycle, so the route set is
//! always finite, and rejects edges that lie on no origin-destination path.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = String;
pub type EdgeId = String;

/// Hard limit on enumerated routes unless a caller picks its own cap.
pub const DEFAULT_ROUTE_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub id: EdgeId,
    pub tail: NodeId,
    pub head: NodeId,
}

/// Directed multigraph with designated origin and destination.
///
/// Invariants enforced at construction:
/// - node and edge ids are unique and printable (no commas, no whitespace);
/// - origin != destination, no self-loops;
/// - every edge lies on at least one directed origin->destination path;
/// - the subgraph spanned by origin->destination paths is acyclic.
#[derive(Debug, Clone)]
pub struct RoutingMultigraph {
    nodes: Vec<NodeId>,
    edges: Vec<Edge>,
    origin: NodeId,
    destination: NodeId,
    node_index: HashMap<NodeId, usize>,
    out_edges: Vec<Vec<usize>>,
}

fn check_id(kind: &str, id: &str) -> Result<()> {
    if id.is_empty() {
        return Err(Error::InvalidGraph(format!("empty {kind} id")));
    }
    if id.chars().any(|c| c == ',' || c.is_whitespace()) {
        return Err(Error::InvalidGraph(format!(
            "{kind} id `{id}` contains a comma or whitespace"
        )));
    }
    Ok(())
}

impl RoutingMultigraph {
    pub fn new(
        nodes: Vec<NodeId>,
        edges: Vec<Edge>,
        origin: NodeId,
        destination: NodeId,
    ) -> Result<Self> {
        let mut node_index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            check_id("node", n)?;
            if node_index.insert(n.clone(), i).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate node id `{n}`")));
            }
        }
        if origin == destination {
            return Err(Error::InvalidGraph(
                "origin and destination must differ".into(),
            ));
        }
        for (name, node) in [("origin", &origin), ("destination", &destination)] {
            if !node_index.contains_key(node) {
                return Err(Error::InvalidGraph(format!(
                    "{name} `{node}` is not in the node list"
                )));
            }
        }

        let mut seen_edge_ids = HashSet::new();
        let mut out_edges = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            check_id("edge", &e.id)?;
            if !seen_edge_ids.insert(e.id.clone()) {
                return Err(Error::InvalidGraph(format!("duplicate edge id `{}`", e.id)));
            }
            let tail = *node_index.get(&e.tail).ok_or_else(|| {
                Error::InvalidGraph(format!("edge `{}`: unknown tail node `{}`", e.id, e.tail))
            })?;
            if !node_index.contains_key(&e.head) {
                return Err(Error::InvalidGraph(format!(
                    "edge `{}`: unknown head node `{}`",
                    e.id, e.head
                )));
            }
            if e.tail == e.head {
                return Err(Error::InvalidGraph(format!("edge `{}` is a self-loop", e.id)));
            }
            out_edges[tail].push(i);
        }

        let g = Self {
            nodes,
            edges,
            origin,
            destination,
            node_index,
            out_edges,
        };
        g.check_reachability()?;
        g.check_acyclic()?;
        Ok(g)
    }

    /// Every edge must have its tail reachable from the origin and its head
    /// co-reachable from the destination; otherwise it can carry no flow.
    fn check_reachability(&self) -> Result<()> {
        let from_origin = self.reachable_forward(self.node_idx(&self.origin));
        let to_destination = self.reachable_backward(self.node_idx(&self.destination));
        for e in &self.edges {
            let usable = from_origin.contains(&self.node_idx(&e.tail))
                && to_destination.contains(&self.node_idx(&e.head));
            if !usable {
                return Err(Error::InvalidGraph(format!(
                    "edge `{}` lies on no origin->destination path",
                    e.id
                )));
            }
        }
        Ok(())
    }

    /// Kahn's algorithm; after the reachability check every edge is on some
    /// origin->destination path, so any cycle here would make the route set
    /// infinite.
    fn check_acyclic(&self) -> Result<()> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        for e in &self.edges {
            indegree[self.node_idx(&e.head)] += 1;
        }
        let mut queue: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(u) = queue.pop() {
            seen += 1;
            for &ei in &self.out_edges[u] {
                let v = self.node_idx(&self.edges[ei].head);
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    queue.push(v);
                }
            }
        }
        if seen != n {
            return Err(Error::InvalidGraph(
                "origin->destination paths contain a directed cycle".into(),
            ));
        }
        Ok(())
    }

    fn reachable_forward(&self, start: usize) -> HashSet<usize> {
        let mut seen = HashSet::from([start]);
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &ei in &self.out_edges[u] {
                let v = self.node_idx(&self.edges[ei].head);
                if seen.insert(v) {
                    stack.push(v);
                }
            }
        }
        seen
    }

    fn reachable_backward(&self, start: usize) -> HashSet<usize> {
        let mut in_edges = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            in_edges[self.node_idx(&e.head)].push(i);
        }
        let mut seen = HashSet::from([start]);
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &ei in &in_edges[u] {
                let v = self.node_idx(&self.edges[ei].tail);
                if seen.insert(v) {
                    stack.push(v);
                }
            }
        }
        seen
    }

    fn node_idx(&self, id: &str) -> usize {
        self.node_index[id]
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn origin(&self) -> &NodeId {
        &self.origin
    }

    pub fn destination(&self) -> &NodeId {
        &self.destination
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_position(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }

    /// True when every edge runs directly from the origin to the destination.
    pub fn is_parallel_form(&self) -> bool {
        self.edges
            .iter()
            .all(|e| e.tail == self.origin && e.head == self.destination)
    }
}

/// A simple directed path from origin to destination, stored as the ordered
/// list of traversed edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    edge_ids: Vec<EdgeId>,
    edge_indices: Vec<usize>,
}

impl Route {
    pub fn edge_ids(&self) -> &[EdgeId] {
        &self.edge_ids
    }

    pub fn edge_indices(&self) -> &[usize] {
        &self.edge_indices
    }

    pub fn len(&self) -> usize {
        self.edge_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edge_ids.is_empty()
    }

    /// Compact label, e.g. `e2+e4`.
    pub fn label(&self) -> String {
        self.edge_ids.join("+")
    }

    /// Node sequence visited by the route, starting at the origin.
    pub fn node_sequence(&self, g: &RoutingMultigraph) -> Vec<NodeId> {
        let mut nodes = Vec::with_capacity(self.edge_indices.len() + 1);
        nodes.push(g.origin().clone());
        for &ei in &self.edge_indices {
            nodes.push(g.edges()[ei].head.clone());
        }
        nodes
    }
}

/// All origin-destination routes of a graph, in lexicographic order of their
/// edge-id sequences so that matrix columns and state vectors are reproducible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteSet {
    routes: Vec<Route>,
}

impl RouteSet {
    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn route(&self, r: usize) -> &Route {
        &self.routes[r]
    }

    pub fn position(&self, edge_ids: &[EdgeId]) -> Option<usize> {
        self.routes.iter().position(|r| r.edge_ids() == edge_ids)
    }
}

pub fn enumerate_routes(g: &RoutingMultigraph) -> Result<RouteSet> {
    enumerate_routes_capped(g, DEFAULT_ROUTE_CAP)
}

/// Depth-first enumeration of all simple origin->destination paths.
///
/// Repeated nodes cannot occur because the reachable subgraph is acyclic, but
/// the visited set is kept as a guard for the route invariant.
pub fn enumerate_routes_capped(g: &RoutingMultigraph, cap: usize) -> Result<RouteSet> {
    let origin = g.node_idx(g.origin());
    let destination = g.node_idx(g.destination());

    let mut routes: Vec<Route> = Vec::new();
    let mut path: Vec<usize> = Vec::new();
    let mut visited: HashSet<usize> = HashSet::from([origin]);

    fn dfs(
        g: &RoutingMultigraph,
        node: usize,
        destination: usize,
        path: &mut Vec<usize>,
        visited: &mut HashSet<usize>,
        routes: &mut Vec<Route>,
        cap: usize,
    ) -> Result<()> {
        for &ei in &g.out_edges[node] {
            let head = g.node_idx(&g.edges[ei].head);
            if head == destination {
                if routes.len() >= cap {
                    return Err(Error::RouteExplosion { cap });
                }
                path.push(ei);
                routes.push(Route {
                    edge_ids: path.iter().map(|&i| g.edges[i].id.clone()).collect(),
                    edge_indices: path.clone(),
                });
                path.pop();
            } else if !visited.contains(&head) {
                path.push(ei);
                visited.insert(head);
                dfs(g, head, destination, path, visited, routes, cap)?;
                visited.remove(&head);
                path.pop();
            }
        }
        Ok(())
    }

    dfs(g, origin, destination, &mut path, &mut visited, &mut routes, cap)?;
    if routes.is_empty() {
        return Err(Error::NoRoute);
    }
    routes.sort_by(|a, b| a.edge_ids.cmp(&b.edge_ids));
    Ok(RouteSet { routes })
}

/// Edge-route incidence: `entry(e, r) = 1` iff edge `e` belongs to route `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    entries: Vec<Vec<f64>>, // E rows, R columns
}

impl IncidenceMatrix {
    pub fn build(g: &RoutingMultigraph, routes: &RouteSet) -> Self {
        let mut entries = vec![vec![0.0; routes.len()]; g.num_edges()];
        for (r, route) in routes.routes().iter().enumerate() {
            for &e in route.edge_indices() {
                entries[e][r] = 1.0;
            }
        }
        Self { entries }
    }

    pub fn num_edges(&self) -> usize {
        self.entries.len()
    }

    pub fn num_routes(&self) -> usize {
        self.entries.first().map_or(0, Vec::len)
    }

    pub fn entry(&self, edge: usize, route: usize) -> f64 {
        self.entries[edge][route]
    }

    /// Maps route flows to edge flows.
    pub fn edge_flows(&self, route_flows: &[f64]) -> Vec<f64> {
        self.entries
            .iter()
            .map(|row| {
                row.iter()
                    .zip(route_flows)
                    .map(|(a, z)| a * z)
                    .sum::<f64>()
            })
            .collect()
    }
}

/// Witness that a graph is not simple: one edge shared by two routes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedEdgeWitness {
    pub edge: EdgeId,
    pub route_a: usize,
    pub route_b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Simplicity {
    Simple,
    SharedEdge(SharedEdgeWitness),
}

impl Simplicity {
    pub fn is_simple(&self) -> bool {
        matches!(self, Simplicity::Simple)
    }
}

/// A multigraph is simple when every edge belongs to at most one route.
pub fn simplicity(g: &RoutingMultigraph, routes: &RouteSet) -> Simplicity {
    let mut first_use: Vec<Option<usize>> = vec![None; g.num_edges()];
    for (r, route) in routes.routes().iter().enumerate() {
        for &e in route.edge_indices() {
            match first_use[e] {
                None => first_use[e] = Some(r),
                Some(prev) => {
                    return Simplicity::SharedEdge(SharedEdgeWitness {
                        edge: g.edges()[e].id.clone(),
                        route_a: prev,
                        route_b: r,
                    })
                }
            }
        }
    }
    Simplicity::Simple
}

pub fn is_simple(g: &RoutingMultigraph) -> Result<Simplicity> {
    let routes = enumerate_routes(g)?;
    Ok(simplicity(g, &routes))
}

/// Splits a graph into its maximal series decomposition.
///
/// The split points are exactly the interior nodes traversed by every route,
/// in traversal order. Each component runs from one split point to the next;
/// concatenating the component route sets reproduces the full route set as a
/// Cartesian product. A graph with no split point comes back as a single
/// component.
pub fn series_decompose(g: &RoutingMultigraph) -> Result<Vec<RoutingMultigraph>> {
    let routes = enumerate_routes(g)?;
    let cuts = cut_vertices(g, &routes);
    if cuts.is_empty() {
        return Ok(vec![g.clone()]);
    }

    let mut boundaries = Vec::with_capacity(cuts.len() + 2);
    boundaries.push(g.origin().clone());
    boundaries.extend(cuts);
    boundaries.push(g.destination().clone());
    let segments = boundaries.len() - 1;

    let mut segment_edges: Vec<HashSet<usize>> = vec![HashSet::new(); segments];
    for route in routes.routes() {
        let mut seg = 0;
        for &ei in route.edge_indices() {
            segment_edges[seg].insert(ei);
            if g.edges()[ei].head == boundaries[seg + 1] {
                seg += 1;
            }
        }
    }

    let mut components = Vec::with_capacity(segments);
    for (seg, edge_set) in segment_edges.iter().enumerate() {
        let edges: Vec<Edge> = g
            .edges()
            .iter()
            .enumerate()
            .filter(|(i, _)| edge_set.contains(i))
            .map(|(_, e)| e.clone())
            .collect();
        let mut used_nodes: HashSet<&NodeId> = HashSet::new();
        for e in &edges {
            used_nodes.insert(&e.tail);
            used_nodes.insert(&e.head);
        }
        let nodes: Vec<NodeId> = g
            .nodes()
            .iter()
            .filter(|n| used_nodes.contains(n))
            .cloned()
            .collect();
        components.push(RoutingMultigraph::new(
            nodes,
            edges,
            boundaries[seg].clone(),
            boundaries[seg + 1].clone(),
        )?);
    }
    Ok(components)
}

/// Interior nodes that every route passes through, ordered along the routes.
/// The acyclicity invariant makes the order consistent across routes.
fn cut_vertices(g: &RoutingMultigraph, routes: &RouteSet) -> Vec<NodeId> {
    let mut common: Option<HashSet<NodeId>> = None;
    for route in routes.routes() {
        let interior: HashSet<NodeId> = route
            .node_sequence(g)
            .into_iter()
            .filter(|n| n != g.origin() && n != g.destination())
            .collect();
        common = Some(match common {
            None => interior,
            Some(prev) => prev.intersection(&interior).cloned().collect(),
        });
    }
    let common = common.unwrap_or_default();
    routes.routes()[0]
        .node_sequence(g)
        .into_iter()
        .filter(|n| common.contains(n))
        .collect()
}

/// True iff every component of the maximal series decomposition is simple.
pub fn is_series_of_simple(g: &RoutingMultigraph) -> Result<bool> {
    for component in series_decompose(g)? {
        if !is_simple(&component)?.is_simple() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Deterministic id for the parallel edge standing in for route `index`.
/// Zero-padding keeps lexicographic order equal to route order.
pub fn collapsed_edge_id(index: usize, total: usize) -> String {
    let width = total.saturating_sub(1).max(1).to_string().len();
    format!("r{index:0width$}")
}
