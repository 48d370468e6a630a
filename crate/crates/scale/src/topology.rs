use petgraph::algo::toposort;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use janus_core::ValidationError;

/// One directed edge `from -> to`, optionally carrying a transfer size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "EdgeRepr", into = "EdgeRepr")]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub bytes: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EdgeRepr {
    Bare([u64; 2]),
    Sized([u64; 3]),
}

impl From<EdgeRepr> for Edge {
    fn from(r: EdgeRepr) -> Self {
        match r {
            EdgeRepr::Bare([f, t]) => Edge { from: f as usize, to: t as usize, bytes: 0 },
            EdgeRepr::Sized([f, t, b]) => Edge { from: f as usize, to: t as usize, bytes: b },
        }
    }
}

impl From<Edge> for EdgeRepr {
    fn from(e: Edge) -> Self {
        EdgeRepr::Sized([e.from as u64, e.to as u64, e.bytes])
    }
}

/// An explicit communication DAG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dag {
    /// Defaults to one past the largest node index in `edges`.
    #[serde(default)]
    pub nodes: Option<usize>,
    pub edges: Vec<Edge>,
}

impl Dag {
    pub fn new(nodes: usize, edges: Vec<Edge>) -> Self {
        Self { nodes: Some(nodes), edges }
    }

    pub fn node_count(&self) -> usize {
        self.nodes
            .unwrap_or_else(|| self.edges.iter().map(|e| e.from.max(e.to) + 1).max().unwrap_or(0))
    }

    fn graph(&self) -> DiGraph<(), ()> {
        let mut g = DiGraph::new();
        let ids: Vec<_> = (0..self.node_count()).map(|_| g.add_node(())).collect();
        for e in &self.edges {
            g.add_edge(ids[e.from], ids[e.to], ());
        }
        g
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let n = self.node_count();
        for (i, e) in self.edges.iter().enumerate() {
            if e.from >= n || e.to >= n {
                return Err(ValidationError::new(format!("dag.edges[{i}]"), format!("node index out of range (nodes = {n})")));
            }
            if e.from == e.to {
                return Err(ValidationError::new(format!("dag.edges[{i}]"), "self loop"));
            }
        }
        toposort(&self.graph(), None)
            .map(|_| ())
            .map_err(|c| ValidationError::new("dag", format!("cycle through node {}", c.node_id().index())))
    }

    /// Nodes in dependency order. Panics on a cyclic graph; call
    /// [`Dag::validate`] first.
    pub fn topological_order(&self) -> Vec<usize> {
        toposort(&self.graph(), None)
            .expect("validated acyclic")
            .into_iter()
            .map(|n| n.index())
            .collect()
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.node_count()];
        for e in &self.edges {
            d[e.from] += 1;
        }
        d
    }

    pub fn max_out_degree(&self) -> usize {
        self.out_degrees().into_iter().max().unwrap_or(0)
    }

    /// Length of the longest path, in edges.
    pub fn depth(&self) -> usize {
        let mut level = vec![0usize; self.node_count()];
        let order = self.topological_order();
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); self.node_count()];
        for e in &self.edges {
            out[e.from].push(e.to);
        }
        for u in order {
            for &v in &out[u] {
                level[v] = level[v].max(level[u] + 1);
            }
        }
        level.into_iter().max().unwrap_or(0)
    }

    pub fn total_bytes(&self) -> u64 {
        self.edges.iter().map(|e| e.bytes).sum()
    }

    /// A complete `degree`-ary tree of the given depth.
    pub fn tree(depth: usize, degree: usize) -> Self {
        let mut edges = Vec::new();
        let mut frontier = vec![0usize];
        let mut next_id = 1;
        for _ in 0..depth {
            let mut next = Vec::new();
            for &u in &frontier {
                for _ in 0..degree {
                    edges.push(Edge { from: u, to: next_id, bytes: 0 });
                    next.push(next_id);
                    next_id += 1;
                }
            }
            frontier = next;
        }
        Dag::new(next_id, edges)
    }

    /// Twenty nodes in five levels with a widest fan-out of eight: an
    /// aggregation tree with cross-level edges, shaped like a federated
    /// pipeline with a coordinator, regional aggregators and clients.
    pub fn mixed_twenty() -> Self {
        let levels: [&[usize]; 6] = [&[0], &[1, 2], &[3, 4, 5, 6, 7, 8, 9, 10], &[11, 12, 13, 14], &[15, 16, 17], &[18, 19]];
        let mut edges = Vec::new();
        let mut add = |from: usize, to: usize| edges.push(Edge { from, to, bytes: 0 });
        add(0, 1);
        add(0, 2);
        for &c in levels[2] {
            add(1, c);
        }
        for &c in &levels[2][..4] {
            add(2, c);
        }
        for (i, &u) in levels[2].iter().enumerate() {
            add(u, levels[3][i % 4]);
        }
        for (i, &u) in levels[3].iter().enumerate() {
            add(u, levels[4][i % 3]);
            add(u, levels[4][(i + 1) % 3]);
        }
        for &u in levels[4] {
            add(u, 18);
            add(u, 19);
        }
        Dag::new(20, edges)
    }
}

/// How handshakes are laid out across hosts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Degree {
    /// Every node initiates `e` handshakes on average.
    Uniform(f64),
    Dag(Dag),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub nodes: usize,
    pub degree: Degree,
    pub hosts: usize,
    /// Host of each node; round-robin when absent.
    #[serde(default)]
    pub placement: Option<Vec<usize>>,
}

impl TopologySpec {
    pub fn uniform(nodes: usize, degree: f64, hosts: usize) -> Self {
        Self {
            nodes,
            degree: Degree::Uniform(degree),
            hosts,
            placement: None,
        }
    }

    /// One host per node unless `hosts` says otherwise.
    pub fn dag(dag: Dag, hosts: Option<usize>) -> Self {
        let n = dag.node_count();
        Self {
            nodes: n,
            degree: Degree::Dag(dag),
            hosts: hosts.unwrap_or(n).max(1),
            placement: None,
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.nodes == 0 {
            return Err(ValidationError::new("nodes", "must be at least 1"));
        }
        if self.hosts == 0 {
            return Err(ValidationError::new("hosts", "must be at least 1"));
        }
        match &self.degree {
            Degree::Uniform(e) if !e.is_finite() || *e < 0.0 => {
                return Err(ValidationError::new("degree", "must be a non-negative number"))
            }
            Degree::Uniform(_) => {}
            Degree::Dag(d) => {
                d.validate()?;
                if d.node_count() > self.nodes {
                    return Err(ValidationError::new("dag", "references more nodes than the topology has"));
                }
            }
        }
        if let Some(p) = &self.placement {
            if p.len() != self.nodes {
                return Err(ValidationError::new("placement", "needs one host per node"));
            }
            if let Some(i) = p.iter().position(|&h| h >= self.hosts) {
                return Err(ValidationError::new(format!("placement[{i}]"), "host out of range"));
            }
        }
        Ok(())
    }

    fn host_of(&self, node: usize) -> usize {
        match &self.placement {
            Some(p) => p[node],
            None => node % self.hosts,
        }
    }

    /// Handshakes each host must run. With a uniform degree,
    /// `round(N * e)` handshakes are dealt round-robin over hosts; with a
    /// DAG every edge runs on its initiating node's host.
    pub fn host_loads(&self) -> Vec<u64> {
        let mut loads = vec![0u64; self.hosts];
        match &self.degree {
            Degree::Uniform(e) => {
                let total = (self.nodes as f64 * e).round() as u64;
                let h = self.hosts as u64;
                for (i, l) in loads.iter_mut().enumerate() {
                    *l = total / h + u64::from((i as u64) < total % h);
                }
            }
            Degree::Dag(d) => {
                for e in &d.edges {
                    loads[self.host_of(e.from)] += 1;
                }
            }
        }
        loads
    }
}
