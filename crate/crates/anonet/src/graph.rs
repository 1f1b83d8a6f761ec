//! Port-labeled communication graphs.
//!
//! Every node numbers its incident edges with consecutive ports `1..=degree`
//! and can address a neighbor only through a port; nodes carry no identifiers
//! of their own. For each node and port the graph stores the neighbor the
//! port reaches together with the port the same edge carries on the
//! neighbor's side, so a message sent "out of port k" can be routed into the
//! right inbox slot on the other end.
//!
//! Ports are 0-based in memory and 1-based in all user-facing text.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph needs at least {min} nodes, got {got}")]
    TooSmall { min: usize, got: usize },
    #[error("node index {node} out of range for {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("self-loop at node {node}")]
    SelfLoop { node: usize },
    #[error("duplicate edge between nodes {a} and {b}")]
    DuplicateEdge { a: usize, b: usize },
    #[error("graph is not connected")]
    Disconnected,
    #[error("node {node}: {detail}")]
    InvalidPorts { node: usize, detail: String },
    #[error("port table has {got} entries for {edges} edges")]
    PortTableLength { got: usize, edges: usize },
    #[error("mapping is not a permutation of 0..{n}")]
    InvalidPermutation { n: usize },
    #[error("cannot add {requested} extra edges on {n} nodes (at most {available} fit)")]
    TooManyExtraEdges { requested: usize, n: usize, available: usize },
    #[error("unrecognized graph spec `{0}`")]
    UnknownSpec(String),
}

/// One outgoing port: the neighbor it reaches and the 0-based port under
/// which the same edge appears on the neighbor's side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortTarget {
    pub neighbor: usize,
    pub reverse_port: usize,
}

/// Bidirectional connected graph with per-node port labels.
///
/// Invariants, enforced by every constructor:
/// - every edge is present in both directions;
/// - node `i`'s ports are exactly `0..degree(i)`;
/// - reverse ports are mutually consistent: if `i`'s port `k` leads to `j`
///   with reverse port `r`, then `j`'s port `r` leads back to `i` with
///   reverse port `k`;
/// - the graph is connected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortLabeledGraph {
    adj: Vec<Vec<PortTarget>>,
}

impl PortLabeledGraph {
    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adj[node].len()
    }

    /// Outgoing ports of `node`, indexed by 0-based port number.
    pub fn ports(&self, node: usize) -> &[PortTarget] {
        &self.adj[node]
    }

    /// Cycle on `n >= 2` nodes. Port 1 leads to the counterclockwise
    /// neighbor `i+1 (mod n)`, port 2 to the clockwise neighbor. `n = 2` is
    /// the two-node cycle: both ports of each node reach the other node
    /// through distinct parallel edges.
    pub fn ring(n: usize) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooSmall { min: 2, got: n });
        }
        let adj = (0..n)
            .map(|i| {
                vec![
                    PortTarget { neighbor: (i + 1) % n, reverse_port: 1 },
                    PortTarget { neighbor: (i + n - 1) % n, reverse_port: 0 },
                ]
            })
            .collect();
        let g = PortLabeledGraph { adj };
        debug_assert_eq!(g.validate(), Ok(()));
        Ok(g)
    }

    /// Complete graph on `n >= 1` nodes; ports follow ascending neighbor order.
    pub fn complete(n: usize) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::TooSmall { min: 1, got: n });
        }
        let edges: Vec<(usize, usize)> =
            (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        Self::from_edges(n, &edges, None)
    }

    /// Path 0-1-...-(n-1); ports follow ascending neighbor order.
    pub fn path(n: usize) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::TooSmall { min: 1, got: n });
        }
        let edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges, None)
    }

    /// Star with center 0 and leaves 1..n; the center's port k reaches leaf k.
    pub fn star(n: usize) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooSmall { min: 2, got: n });
        }
        let edges: Vec<(usize, usize)> = (1..n).map(|leaf| (0, leaf)).collect();
        Self::from_edges(n, &edges, None)
    }

    /// Single node, no edges. The smallest connected graph.
    pub fn singleton() -> Self {
        PortLabeledGraph { adj: vec![Vec::new()] }
    }

    /// Builds a graph from an undirected edge list.
    ///
    /// With `ports: None`, each node's ports follow ascending neighbor
    /// order. Otherwise `ports[e] = (port_at_a, port_at_b)` gives the 1-based
    /// port labels of edge `e = (a, b)` on each side; the labels per node
    /// must then form exactly `1..=degree`.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize)],
        ports: Option<&[(usize, usize)]>,
    ) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::TooSmall { min: 1, got: n });
        }
        let mut seen = BTreeSet::new();
        for &(a, b) in edges {
            for node in [a, b] {
                if node >= n {
                    return Err(GraphError::NodeOutOfRange { node, n });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop { node: a });
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(GraphError::DuplicateEdge { a: a.min(b), b: a.max(b) });
            }
        }

        let mut degree = vec![0usize; n];
        for &(a, b) in edges {
            degree[a] += 1;
            degree[b] += 1;
        }

        let adj = match ports {
            None => {
                // Ascending neighbor order; the rank of i in j's sorted
                // neighbor list is the reverse port of the edge (i, j).
                let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
                for &(a, b) in edges {
                    neighbors[a].push(b);
                    neighbors[b].push(a);
                }
                for list in &mut neighbors {
                    list.sort_unstable();
                }
                let rank = |of: usize, among: usize| -> usize {
                    neighbors[among].binary_search(&of).expect("neighbor present")
                };
                (0..n)
                    .map(|i| {
                        neighbors[i]
                            .iter()
                            .map(|&j| PortTarget { neighbor: j, reverse_port: rank(i, j) })
                            .collect()
                    })
                    .collect()
            }
            Some(table) => {
                if table.len() != edges.len() {
                    return Err(GraphError::PortTableLength {
                        got: table.len(),
                        edges: edges.len(),
                    });
                }
                let mut adj: Vec<Vec<Option<PortTarget>>> =
                    (0..n).map(|i| vec![None; degree[i]]).collect();
                let mut place = |node: usize, port: usize, target: PortTarget| {
                    if port == 0 || port > degree[node] {
                        return Err(GraphError::InvalidPorts {
                            node,
                            detail: format!(
                                "port {port} out of range 1..={}",
                                degree[node]
                            ),
                        });
                    }
                    let slot = &mut adj[node][port - 1];
                    if slot.is_some() {
                        return Err(GraphError::InvalidPorts {
                            node,
                            detail: format!("port {port} assigned twice"),
                        });
                    }
                    *slot = Some(target);
                    Ok(())
                };
                for (&(a, b), &(pa, pb)) in edges.iter().zip(table) {
                    place(a, pa, PortTarget { neighbor: b, reverse_port: pb - 1 })?;
                    place(b, pb, PortTarget { neighbor: a, reverse_port: pa - 1 })?;
                }
                adj.into_iter()
                    .enumerate()
                    .map(|(i, row)| {
                        row.into_iter()
                            .enumerate()
                            .map(|(k, slot)| {
                                slot.ok_or_else(|| GraphError::InvalidPorts {
                                    node: i,
                                    detail: format!("port {} missing", k + 1),
                                })
                            })
                            .collect::<Result<Vec<_>, _>>()
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
        };

        let g = PortLabeledGraph { adj };
        g.validate()?;
        Ok(g)
    }

    /// Connected random graph: a random attachment tree plus `extra_edges`
    /// distinct additional edges, all drawn from a ChaCha stream seeded with
    /// `seed`. The same arguments always produce the same graph.
    pub fn random_connected(n: usize, extra_edges: usize, seed: u64) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::TooSmall { min: 1, got: n });
        }
        let available = n * (n - 1) / 2 - (n - 1);
        if extra_edges > available {
            return Err(GraphError::TooManyExtraEdges { requested: extra_edges, n, available });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges: Vec<(usize, usize)> = Vec::with_capacity(n - 1 + extra_edges);
        let mut present = BTreeSet::new();
        for i in 1..n {
            let parent = rng.gen_range(0..i);
            edges.push((parent, i));
            present.insert((parent, i));
        }
        let mut added = 0;
        while added < extra_edges {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a == b {
                continue;
            }
            let key = (a.min(b), a.max(b));
            if present.insert(key) {
                edges.push(key);
                added += 1;
            }
        }
        Self::from_edges(n, &edges, None)
    }

    /// Relabels nodes through the permutation `perm` (node `i` becomes
    /// `perm[i]`) while transporting port labels unchanged: the port at
    /// `perm[i]` toward `perm[j]` equals the port at `i` toward `j`.
    pub fn apply_isomorphism(&self, perm: &[usize]) -> Result<Self, GraphError> {
        let n = self.node_count();
        if perm.len() != n {
            return Err(GraphError::InvalidPermutation { n });
        }
        let mut hit = vec![false; n];
        for &p in perm {
            if p >= n || hit[p] {
                return Err(GraphError::InvalidPermutation { n });
            }
            hit[p] = true;
        }
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            adj[perm[i]] = self.adj[i]
                .iter()
                .map(|t| PortTarget { neighbor: perm[t.neighbor], reverse_port: t.reverse_port })
                .collect();
        }
        let g = PortLabeledGraph { adj };
        debug_assert_eq!(g.validate(), Ok(()));
        Ok(g)
    }

    /// Checks every structural invariant; constructors call this before
    /// handing a graph out.
    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.node_count();
        for (i, row) in self.adj.iter().enumerate() {
            for (k, t) in row.iter().enumerate() {
                if t.neighbor >= n {
                    return Err(GraphError::NodeOutOfRange { node: t.neighbor, n });
                }
                if t.neighbor == i {
                    return Err(GraphError::SelfLoop { node: i });
                }
                let back = self
                    .adj[t.neighbor]
                    .get(t.reverse_port)
                    .ok_or_else(|| GraphError::InvalidPorts {
                        node: i,
                        detail: format!(
                            "port {} names reverse port {} beyond degree {}",
                            k + 1,
                            t.reverse_port + 1,
                            self.degree(t.neighbor)
                        ),
                    })?;
                if back.neighbor != i || back.reverse_port != k {
                    return Err(GraphError::InvalidPorts {
                        node: i,
                        detail: format!(
                            "port {} disagrees with node {} port {} about their shared edge",
                            k + 1,
                            t.neighbor,
                            t.reverse_port + 1
                        ),
                    });
                }
            }
        }
        if !self.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(())
    }

    fn is_connected(&self) -> bool {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for t in &self.adj[i] {
                if !seen[t.neighbor] {
                    seen[t.neighbor] = true;
                    count += 1;
                    stack.push(t.neighbor);
                }
            }
        }
        count == n
    }

    /// Deterministic plain-text port table, one node per line, 1-based ports.
    pub fn port_table(&self) -> String {
        let mut out = String::new();
        for i in 0..self.node_count() {
            out.push_str(&format!("node {i} (degree {}):", self.degree(i)));
            for (k, t) in self.adj[i].iter().enumerate() {
                out.push_str(&format!(
                    " {}->{}#{}",
                    k + 1,
                    t.neighbor,
                    t.reverse_port + 1
                ));
            }
            out.push('\n');
        }
        out
    }
}

/// Parsed form of the textual graph descriptions used by scenario files and
/// the command line: `ring(n)`, `path(n)`, `star(n)`, `complete(n)`,
/// `singleton`, `random_connected(n, extra, seed)` (also `seed=N` for the
/// last argument).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphSpec {
    Ring(usize),
    Path(usize),
    Star(usize),
    Complete(usize),
    Singleton,
    RandomConnected { n: usize, extra_edges: usize, seed: u64 },
}

impl GraphSpec {
    pub fn build(&self) -> Result<PortLabeledGraph, GraphError> {
        match *self {
            GraphSpec::Ring(n) => PortLabeledGraph::ring(n),
            GraphSpec::Path(n) => PortLabeledGraph::path(n),
            GraphSpec::Star(n) => PortLabeledGraph::star(n),
            GraphSpec::Complete(n) => PortLabeledGraph::complete(n),
            GraphSpec::Singleton => Ok(PortLabeledGraph::singleton()),
            GraphSpec::RandomConnected { n, extra_edges, seed } => {
                PortLabeledGraph::random_connected(n, extra_edges, seed)
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match *self {
            GraphSpec::Ring(n)
            | GraphSpec::Path(n)
            | GraphSpec::Star(n)
            | GraphSpec::Complete(n) => n,
            GraphSpec::Singleton => 1,
            GraphSpec::RandomConnected { n, .. } => n,
        }
    }

    /// Returns a copy with the node count replaced, for parameter sweeps.
    /// `singleton` is fixed-size and comes back unchanged.
    pub fn with_node_count(&self, n: usize) -> GraphSpec {
        match *self {
            GraphSpec::Ring(_) => GraphSpec::Ring(n),
            GraphSpec::Path(_) => GraphSpec::Path(n),
            GraphSpec::Star(_) => GraphSpec::Star(n),
            GraphSpec::Complete(_) => GraphSpec::Complete(n),
            GraphSpec::Singleton => GraphSpec::Singleton,
            GraphSpec::RandomConnected { extra_edges, seed, .. } => {
                GraphSpec::RandomConnected { n, extra_edges, seed }
            }
        }
    }

    /// Returns a copy with the randomness seed replaced; no-op for the
    /// deterministic families.
    pub fn with_seed(&self, new_seed: u64) -> GraphSpec {
        match *self {
            GraphSpec::RandomConnected { n, extra_edges, .. } => {
                GraphSpec::RandomConnected { n, extra_edges, seed: new_seed }
            }
            ref other => other.clone(),
        }
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            GraphSpec::Ring(n) => write!(f, "ring({n})"),
            GraphSpec::Path(n) => write!(f, "path({n})"),
            GraphSpec::Star(n) => write!(f, "star({n})"),
            GraphSpec::Complete(n) => write!(f, "complete({n})"),
            GraphSpec::Singleton => write!(f, "singleton"),
            GraphSpec::RandomConnected { n, extra_edges, seed } => {
                write!(f, "random_connected({n}, {extra_edges}, seed={seed})")
            }
        }
    }
}

impl FromStr for GraphSpec {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GraphError::UnknownSpec(s.to_string());
        let s = s.trim();
        if s == "singleton" {
            return Ok(GraphSpec::Singleton);
        }
        let open = s.find('(').ok_or_else(bad)?;
        if !s.ends_with(')') {
            return Err(bad());
        }
        let name = &s[..open];
        let args: Vec<&str> = s[open + 1..s.len() - 1]
            .split(',')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .collect();
        let number = |a: &str| -> Result<u64, GraphError> {
            let a = a.strip_prefix("seed=").unwrap_or(a);
            a.parse().map_err(|_| bad())
        };
        match (name, args.len()) {
            ("ring", 1) => Ok(GraphSpec::Ring(number(args[0])? as usize)),
            ("path", 1) => Ok(GraphSpec::Path(number(args[0])? as usize)),
            ("star", 1) => Ok(GraphSpec::Star(number(args[0])? as usize)),
            ("complete", 1) => Ok(GraphSpec::Complete(number(args[0])? as usize)),
            ("random_connected", 3) => Ok(GraphSpec::RandomConnected {
                n: number(args[0])? as usize,
                extra_edges: number(args[1])? as usize,
                seed: number(args[2])?,
            }),
            _ => Err(bad()),
        }
    }
}
