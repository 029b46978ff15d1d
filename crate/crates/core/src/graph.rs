//! Network topologies and hop-count routing.
//!
//! A [`Topology`] is an undirected, connected graph whose edges carry a
//! bandwidth capacity in Mbps. Routes are minimum-hop simple paths; the
//! deterministic router breaks ties toward the smallest next-hop id, the
//! randomized router samples uniformly among all shortest paths.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index into [`Topology::edges`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Lattice { rows: usize, cols: usize },
    PowerLaw { n: usize, m: usize, seed: u64 },
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TopologyDoc", into = "TopologyDoc")]
pub struct Topology {
    node_count: usize,
    edges: Vec<Edge>,
    kind: TopologyKind,
    // neighbor lists sorted by neighbor id
    adjacency: Vec<Vec<(NodeId, EdgeId)>>,
    edge_index: HashMap<(usize, usize), EdgeId>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyDoc {
    nodes: usize,
    edges: Vec<(usize, usize, f64)>,
    kind: TopologyKind,
}

impl TryFrom<TopologyDoc> for Topology {
    type Error = Error;

    fn try_from(doc: TopologyDoc) -> Result<Self> {
        let edges = doc
            .edges
            .into_iter()
            .map(|(u, v, capacity)| Edge {
                u: NodeId(u),
                v: NodeId(v),
                capacity,
            })
            .collect();
        Topology::from_edges(doc.nodes, edges, doc.kind)
    }
}

impl From<Topology> for TopologyDoc {
    fn from(t: Topology) -> Self {
        TopologyDoc {
            nodes: t.node_count,
            edges: t.edges.iter().map(|e| (e.u.0, e.v.0, e.capacity)).collect(),
            kind: t.kind,
        }
    }
}

fn key(a: NodeId, b: NodeId) -> (usize, usize) {
    if a.0 <= b.0 {
        (a.0, b.0)
    } else {
        (b.0, a.0)
    }
}

impl Topology {
    /// Builds a topology from an explicit edge list, checking that the graph
    /// is simple, connected, and has positive capacities.
    pub fn from_edges(node_count: usize, edges: Vec<Edge>, kind: TopologyKind) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::invalid("topology needs at least one node"));
        }
        let mut adjacency = vec![Vec::new(); node_count];
        let mut edge_index = HashMap::with_capacity(edges.len());
        for (idx, e) in edges.iter().enumerate() {
            if e.u.0 >= node_count || e.v.0 >= node_count {
                return Err(Error::invalid(format!(
                    "edge ({}, {}) references a node outside 0..{}",
                    e.u, e.v, node_count
                )));
            }
            if e.u == e.v {
                return Err(Error::invalid(format!("self loop at node {}", e.u)));
            }
            if !(e.capacity > 0.0) || !e.capacity.is_finite() {
                return Err(Error::invalid(format!(
                    "edge ({}, {}) has non-positive capacity {}",
                    e.u, e.v, e.capacity
                )));
            }
            if edge_index.insert(key(e.u, e.v), EdgeId(idx)).is_some() {
                return Err(Error::invalid(format!("duplicate edge ({}, {})", e.u, e.v)));
            }
            adjacency[e.u.0].push((e.v, EdgeId(idx)));
            adjacency[e.v.0].push((e.u, EdgeId(idx)));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let topo = Topology {
            node_count,
            edges,
            kind,
            adjacency,
            edge_index,
        };
        let reached = topo.bfs_distances(NodeId(0)).iter().filter(|d| d.is_some()).count();
        if reached != node_count {
            return Err(Error::invalid("topology is not connected"));
        }
        Ok(topo)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0]
    }

    pub fn kind(&self) -> &TopologyKind {
        &self.kind
    }

    pub fn degree(&self, n: NodeId) -> usize {
        self.adjacency[n.0].len()
    }

    pub fn neighbors(&self, n: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency[n.0].iter().map(|&(v, _)| v)
    }

    pub fn edge_between(&self, a: NodeId, b: NodeId) -> Option<EdgeId> {
        self.edge_index.get(&key(a, b)).copied()
    }

    pub fn contains(&self, n: NodeId) -> bool {
        n.0 < self.node_count
    }

    fn check_node(&self, n: NodeId) -> Result<()> {
        if self.contains(n) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "node {} not in topology of {} nodes",
                n, self.node_count
            )))
        }
    }

    /// Hop distance from `src` to every node (`None` when unreachable).
    pub fn bfs_distances(&self, src: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.node_count];
        let mut queue = VecDeque::new();
        dist[src.0] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[u.0].unwrap();
            for &(v, _) in &self.adjacency[u.0] {
                if dist[v.0].is_none() {
                    dist[v.0] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Distances and shortest-path counts from `src` (counts as f64, used as
    /// sampling weights only).
    fn bfs_counts(&self, src: NodeId) -> (Vec<Option<usize>>, Vec<f64>) {
        let dist = self.bfs_distances(src);
        let mut order: Vec<usize> = (0..self.node_count).filter(|&i| dist[i].is_some()).collect();
        order.sort_by_key(|&i| dist[i]);
        let mut count = vec![0.0; self.node_count];
        count[src.0] = 1.0;
        for u in order {
            let du = dist[u].unwrap();
            for &(v, _) in &self.adjacency[u] {
                if dist[v.0] == Some(du + 1) {
                    count[v.0] += count[u];
                }
            }
        }
        (dist, count)
    }
}

/// Ordered node sequence of a simple path. Link `i` (0-based) joins
/// `nodes[i]` and `nodes[i + 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Route {
    nodes: Vec<NodeId>,
}

impl Route {
    /// Validates that `nodes` is a simple path of at least one hop in `t`.
    pub fn new(t: &Topology, nodes: Vec<NodeId>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::invalid("route needs at least two nodes"));
        }
        let mut seen = vec![false; t.node_count()];
        for &n in &nodes {
            t.check_node(n)?;
            if std::mem::replace(&mut seen[n.0], true) {
                return Err(Error::invalid(format!("route revisits node {}", n)));
            }
        }
        for w in nodes.windows(2) {
            if t.edge_between(w[0], w[1]).is_none() {
                return Err(Error::invalid(format!(
                    "route hop {} -> {} is not an edge",
                    w[0], w[1]
                )));
            }
        }
        Ok(Route { nodes })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn source(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn destination(&self) -> NodeId {
        *self.nodes.last().unwrap()
    }

    pub fn hops(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Edge ids of the route's links, in route order.
    pub fn links(&self, t: &Topology) -> Vec<EdgeId> {
        self.nodes
            .windows(2)
            .map(|w| t.edge_between(w[0], w[1]).expect("route validated against topology"))
            .collect()
    }

    pub fn reversed(&self) -> Route {
        let mut nodes = self.nodes.clone();
        nodes.reverse();
        Route { nodes }
    }
}

/// `rows x cols` grid with horizontal and vertical links. Node `(r, c)` has
/// id `r * cols + c`.
pub fn build_lattice(rows: usize, cols: usize, capacity: f64) -> Result<Topology> {
    if rows < 2 || cols < 2 {
        return Err(Error::invalid(format!(
            "lattice needs rows >= 2 and cols >= 2, got {rows}x{cols}"
        )));
    }
    if !(capacity > 0.0) {
        return Err(Error::invalid("lattice capacity must be positive"));
    }
    let id = |r: usize, c: usize| NodeId(r * cols + c);
    let mut edges = Vec::with_capacity(2 * rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push(Edge {
                    u: id(r, c),
                    v: id(r, c + 1),
                    capacity,
                });
            }
            if r + 1 < rows {
                edges.push(Edge {
                    u: id(r, c),
                    v: id(r + 1, c),
                    capacity,
                });
            }
        }
    }
    Topology::from_edges(rows * cols, edges, TopologyKind::Lattice { rows, cols })
}

/// Barabási–Albert growth from an `(m + 1)`-clique: every new node attaches
/// `m` edges to distinct existing nodes chosen with probability proportional
/// to degree.
pub fn build_power_law(n: usize, m: usize, seed: u64, capacity: f64) -> Result<Topology> {
    if m < 1 || n <= m {
        return Err(Error::invalid(format!("power-law needs n > m >= 1, got n={n}, m={m}")));
    }
    if !(capacity > 0.0) {
        return Err(Error::invalid("power-law capacity must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    // every edge endpoint appears once per incident edge
    let mut endpoints: Vec<usize> = Vec::new();
    let seed_nodes = m + 1;
    for a in 0..seed_nodes {
        for b in (a + 1)..seed_nodes {
            edges.push(Edge {
                u: NodeId(a),
                v: NodeId(b),
                capacity,
            });
            endpoints.push(a);
            endpoints.push(b);
        }
    }
    for v in seed_nodes..n {
        let mut targets: Vec<usize> = Vec::with_capacity(m);
        while targets.len() < m {
            let t = endpoints[rng.gen_range(0..endpoints.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for t in targets {
            edges.push(Edge {
                u: NodeId(t),
                v: NodeId(v),
                capacity,
            });
            endpoints.push(t);
            endpoints.push(v);
        }
    }
    Topology::from_edges(n, edges, TopologyKind::PowerLaw { n, m, seed })
}

/// Minimum-hop route from `s` to `d`. At each step the smallest-id neighbor
/// that stays on a shortest path is taken, so the result is the
/// lexicographically smallest shortest path.
pub fn shortest_path(t: &Topology, s: NodeId, d: NodeId) -> Result<Route> {
    t.check_node(s)?;
    t.check_node(d)?;
    if s == d {
        return Err(Error::invalid("source and destination must differ"));
    }
    let dist = t.bfs_distances(d);
    let Some(mut remaining) = dist[s.0] else {
        return Err(Error::NoRoute { from: s.0, to: d.0 });
    };
    let mut nodes = vec![s];
    let mut cur = s;
    while remaining > 0 {
        cur = t
            .neighbors(cur)
            .find(|v| dist[v.0] == Some(remaining - 1))
            .expect("bfs layering guarantees a predecessor");
        nodes.push(cur);
        remaining -= 1;
    }
    Ok(Route { nodes })
}

/// A shortest path drawn uniformly at random among all minimum-hop paths.
pub fn random_shortest_path<R: Rng + ?Sized>(
    t: &Topology,
    s: NodeId,
    d: NodeId,
    rng: &mut R,
) -> Result<Route> {
    t.check_node(s)?;
    t.check_node(d)?;
    if s == d {
        return Err(Error::invalid("source and destination must differ"));
    }
    let (dist, count) = t.bfs_counts(d);
    let Some(mut remaining) = dist[s.0] else {
        return Err(Error::NoRoute { from: s.0, to: d.0 });
    };
    let mut nodes = vec![s];
    let mut cur = s;
    let mut choices: Vec<(NodeId, f64)> = Vec::new();
    while remaining > 0 {
        choices.clear();
        choices.extend(
            t.neighbors(cur)
                .filter(|v| dist[v.0] == Some(remaining - 1))
                .map(|v| (v, count[v.0])),
        );
        let total: f64 = choices.iter().map(|c| c.1).sum();
        let mut pick = rng.gen::<f64>() * total;
        cur = choices.last().unwrap().0;
        for &(v, w) in &choices {
            if pick < w {
                cur = v;
                break;
            }
            pick -= w;
        }
        nodes.push(cur);
        remaining -= 1;
    }
    Ok(Route { nodes })
}

/// Exact number of distinct minimum-hop paths between `s` and `d`
/// (1 when `s == d`, 0 when disconnected).
pub fn count_shortest_paths(t: &Topology, s: NodeId, d: NodeId) -> Result<u128> {
    t.check_node(s)?;
    t.check_node(d)?;
    let dist = t.bfs_distances(s);
    let Some(target) = dist[d.0] else {
        return Ok(0);
    };
    let mut layers: Vec<Vec<usize>> = vec![Vec::new(); target + 1];
    for (i, di) in dist.iter().enumerate() {
        if let Some(di) = *di {
            if di <= target {
                layers[di].push(i);
            }
        }
    }
    let mut count = vec![0u128; t.node_count()];
    count[s.0] = 1;
    for layer in &layers[..target] {
        for &u in layer {
            let du = dist[u].unwrap();
            for v in t.neighbors(NodeId(u)) {
                if dist[v.0] == Some(du + 1) {
                    count[v.0] = count[v.0].saturating_add(count[u]);
                }
            }
        }
    }
    Ok(count[d.0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_id(cols: usize, r: usize, c: usize) -> NodeId {
        NodeId(r * cols + c)
    }

    #[test]
    fn lattice_10x10_shape() {
        let t = build_lattice(10, 10, 100.0).unwrap();
        assert_eq!(t.node_count(), 100);
        assert_eq!(t.edge_count(), 180);
        for r in 1..9 {
            for c in 1..9 {
                assert_eq!(t.degree(grid_id(10, r, c)), 4);
            }
        }
        assert!(t.edges().iter().all(|e| e.capacity == 100.0));
    }

    #[test]
    fn smallest_lattice_is_a_4_cycle() {
        let t = build_lattice(2, 2, 100.0).unwrap();
        assert_eq!(t.edge_count(), 4);
        assert!((0..4).all(|i| t.degree(NodeId(i)) == 2));
    }

    #[test]
    fn lattice_3x3() {
        let t = build_lattice(3, 3, 50.0).unwrap();
        assert_eq!(t.node_count(), 9);
        assert_eq!(t.edge_count(), 12);
        assert_eq!(t.degree(NodeId(4)), 4);
    }

    #[test]
    fn lattice_rejects_thin_dimensions() {
        assert!(matches!(build_lattice(1, 5, 1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_lattice(5, 1, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn power_law_edge_count_and_seed() {
        let a = build_power_law(80, 2, 7, 100.0).unwrap();
        let b = build_power_law(80, 2, 7, 100.0).unwrap();
        assert_eq!(a.edge_count(), 2 * (80 - 3) + 3);
        assert_eq!(a.edges(), b.edges());
        let max_degree = (0..80).map(|i| a.degree(NodeId(i))).max().unwrap();
        assert!(max_degree >= 8, "heavy tail expected, max degree {max_degree}");
    }

    #[test]
    fn power_law_triangle_seed() {
        let t = build_power_law(3, 2, 1, 10.0).unwrap();
        assert_eq!(t.edge_count(), 3);
        assert!(matches!(build_power_law(2, 2, 1, 10.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn corner_to_corner_is_18_hops() {
        let t = build_lattice(10, 10, 100.0).unwrap();
        let r = shortest_path(&t, NodeId(0), NodeId(99)).unwrap();
        assert_eq!(r.hops(), 18);
        assert_eq!(r, shortest_path(&t, NodeId(0), NodeId(99)).unwrap());
        // smallest-id tie-break walks along row 0 first
        assert_eq!(r.nodes()[1], NodeId(1));
    }

    #[test]
    fn adjacent_nodes_route_one_hop() {
        let t = build_lattice(3, 3, 1.0).unwrap();
        assert_eq!(shortest_path(&t, NodeId(0), NodeId(1)).unwrap().hops(), 1);
        assert!(shortest_path(&t, NodeId(0), NodeId(0)).is_err());
    }

    #[test]
    fn path_counts_on_grid() {
        let t = build_lattice(5, 5, 1.0).unwrap();
        let c = |a: (usize, usize), b: (usize, usize)| {
            count_shortest_paths(&t, grid_id(5, a.0, a.1), grid_id(5, b.0, b.1)).unwrap()
        };
        assert_eq!(c((1, 1), (2, 2)), 2);
        assert_eq!(c((1, 0), (1, 3)), 1);
        assert_eq!(c((1, 1), (3, 3)), 6);
    }

    #[test]
    fn topology_json_round_trip() {
        let t = build_lattice(3, 4, 25.0).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("\"nodes\":12"));
        let back: Topology = serde_json::from_str(&s).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn disconnected_json_rejected() {
        let doc = r#"{"nodes":4,"edges":[[0,1,1.0],[2,3,1.0]],"kind":"custom"}"#;
        assert!(serde_json::from_str::<Topology>(doc).is_err());
    }

    #[test]
    fn random_shortest_path_is_shortest() {
        let t = build_lattice(6, 6, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let r = random_shortest_path(&t, NodeId(1), NodeId(34), &mut rng).unwrap();
            assert_eq!(r.hops(), 8);
            Route::new(&t, r.nodes().to_vec()).unwrap();
        }
    }
}
