//! Directed duplex network graph.
//!
//! Links are stored once, oriented in the Interest direction (client toward
//! server). The Data direction of every link is its reverse; both share the
//! link's bandwidth.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Server,
    Intermediate,
    Client,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Server => "server",
            Role::Intermediate => "intermediate",
            Role::Client => "client",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: u32,
    pub role: Role,
}

/// One duplex link, oriented as Interests travel.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    /// Index of the downstream node (Interest sender).
    pub from: usize,
    /// Index of the upstream node (Interest receiver).
    pub to: usize,
    /// Shared capacity of both directions, bits per second.
    pub bandwidth: f64,
    /// One-way propagation delay, seconds.
    pub delay: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("node {0} declared twice")]
    DuplicateNode(u32),
    #[error("link references unknown node {0}")]
    UnknownNode(u32),
    #[error("link {0}->{1} declared twice")]
    DuplicateLink(u32, u32),
    #[error("self-loop on node {0}")]
    SelfLoop(u32),
    #[error("link {0}->{1} has invalid bandwidth {2}")]
    BadBandwidth(u32, u32, f64),
    #[error("link {0}->{1} has invalid delay {2}")]
    BadDelay(u32, u32, f64),
    #[error("expected exactly one server, found {0}")]
    MultiServer(usize),
    #[error("Interest links contain a cycle through node {0}")]
    Cycle(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    nodes: Vec<Node>,
    links: Vec<Link>,
    index: HashMap<u32, usize>,
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
    topo: Vec<usize>,
    server: usize,
    clients: Vec<usize>,
}

impl NetworkGraph {
    /// `links` are `(from_id, to_id, bandwidth_bps, delay_s)` in Interest direction.
    pub fn new(nodes: Vec<Node>, links: &[(u32, u32, f64, f64)]) -> Result<Self, GraphError> {
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id, i).is_some() {
                return Err(GraphError::DuplicateNode(n.id));
            }
        }
        let servers: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].role == Role::Server).collect();
        if servers.len() != 1 {
            return Err(GraphError::MultiServer(servers.len()));
        }
        let mut out = vec![Vec::new(); nodes.len()];
        let mut inc = vec![Vec::new(); nodes.len()];
        let mut seen = HashMap::new();
        let mut built = Vec::with_capacity(links.len());
        for &(a, b, bw, delay) in links {
            let from = *index.get(&a).ok_or(GraphError::UnknownNode(a))?;
            let to = *index.get(&b).ok_or(GraphError::UnknownNode(b))?;
            if from == to {
                return Err(GraphError::SelfLoop(a));
            }
            if !(bw >= 0.0) || !bw.is_finite() {
                return Err(GraphError::BadBandwidth(a, b, bw));
            }
            if !(delay >= 0.0) || !delay.is_finite() {
                return Err(GraphError::BadDelay(a, b, delay));
            }
            let key = (from.min(to), from.max(to));
            if seen.insert(key, ()).is_some() {
                return Err(GraphError::DuplicateLink(a, b));
            }
            out[from].push(built.len());
            inc[to].push(built.len());
            built.push(Link { from, to, bandwidth: bw, delay });
        }
        let clients = (0..nodes.len()).filter(|&i| nodes[i].role == Role::Client).collect();
        let mut g = Self { nodes, links: built, index, out, inc, topo: Vec::new(), server: servers[0], clients };
        g.topo = g.topological_order()?;
        Ok(g)
    }

    /// Kahn's algorithm over Interest links; ties resolve by node index.
    fn topological_order(&self) -> Result<Vec<usize>, GraphError> {
        let n = self.nodes.len();
        let mut indeg: Vec<usize> = (0..n).map(|i| self.inc[i].len()).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &l in &self.out[v] {
                let w = self.links[l].to;
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push_back(w);
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).find(|&i| indeg[i] > 0).unwrap();
            return Err(GraphError::Cycle(self.nodes[stuck].id));
        }
        Ok(order)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn id(&self, idx: usize) -> u32 {
        self.nodes[idx].id
    }

    pub fn role(&self, idx: usize) -> Role {
        self.nodes[idx].role
    }

    pub fn server(&self) -> usize {
        self.server
    }

    /// Client indices in declaration order.
    pub fn clients(&self) -> &[usize] {
        &self.clients
    }

    /// Interest links leaving `node` (toward the server).
    pub fn out_links(&self, node: usize) -> &[usize] {
        &self.out[node]
    }

    /// Interest links entering `node`.
    pub fn in_links(&self, node: usize) -> &[usize] {
        &self.inc[node]
    }

    /// Nodes ordered so every Interest link goes forward.
    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn find_link(&self, from: usize, to: usize) -> Option<usize> {
        self.out[from].iter().copied().find(|&l| self.links[l].to == to)
    }

    /// Whether `from` reaches the server along Interest links.
    pub fn reaches_server(&self, from: usize) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if v == self.server {
                return true;
            }
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend(self.out[v].iter().map(|&l| self.links[l].to));
        }
        false
    }

    /// Copy with every bandwidth multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut g = self.clone();
        for l in &mut g.links {
            l.bandwidth *= factor;
        }
        g
    }

    /// Links as `(from_id, to_id, bandwidth, delay)` tuples.
    pub fn link_tuples(&self) -> Vec<(u32, u32, f64, f64)> {
        self.links
            .iter()
            .map(|l| (self.nodes[l.from].id, self.nodes[l.to].id, l.bandwidth, l.delay))
            .collect()
    }
}
