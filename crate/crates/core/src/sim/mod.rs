//! Deterministic discrete-event simulation of the coded NDN network.

mod link;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use link::{Direction, DuplexLink, LinkSharing};

use crate::optimizer::{NetworkGraph, RateAllocationResult};
use crate::prlnc::{splitmix64, DecoderState};
use crate::protocol::{Action, BloomMode, BloomParams, Face, DataObject, FacePlan, Interest, NodeEngine, NodeSetup, NodeStats, Outbox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// Number of seeded runs averaged per point.
    pub runs: u32,
    /// Seeds are `base_seed .. base_seed + runs`.
    pub base_seed: u64,
    pub generations: u32,
    /// Seconds between a generation's end and its playback deadline.
    pub playback_delay: f64,
    /// Generations whose FIB entries exist ahead of time.
    pub fib_window: u32,
    /// Client start offsets are uniform in `[0, max_jitter]` seconds.
    pub max_jitter: f64,
    /// Link-bandwidth scale factors for the quality-vs-bandwidth sweep.
    pub bandwidth_scales: Vec<f64>,
    /// Scale factors for the per-generation quality traces.
    pub time_series_scales: Vec<f64>,
    /// Clients reported in the per-generation traces.
    pub time_series_clients: Vec<u32>,
    /// Synthetic payload bytes actually coded; link timing always uses the
    /// profile's nominal packet sizes.
    pub payload_bytes: usize,
    pub exact_bloom: bool,
    /// The server never emits a packet already in the span of its earlier
    /// packets of the same generation, restarting the span once the
    /// requested class is covered.
    pub innovative_source: bool,
    pub bloom: BloomParams,
    pub link_sharing: LinkSharing,
    pub prefix: String,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            runs: 100,
            base_seed: 1,
            generations: 40,
            playback_delay: 1.0,
            fib_window: 4,
            max_jitter: 0.1,
            bandwidth_scales: vec![1.0, 1.15, 1.25, 1.3, 1.35, 1.5, 1.7, 1.85, 2.0],
            time_series_scales: vec![330.0 / 281.25, 480.0 / 281.25, 560.0 / 281.25],
            time_series_clients: vec![26, 27],
            payload_bytes: 16,
            exact_bloom: false,
            innovative_source: true,
            bloom: BloomParams::default(),
            link_sharing: LinkSharing::Shared,
            prefix: "video".into(),
        }
    }
}

impl SimParams {
    pub fn check(&self) -> Result<(), String> {
        if self.runs == 0 {
            return Err("sim.runs must be positive".into());
        }
        if self.generations == 0 {
            return Err("sim.generations must be positive".into());
        }
        if self.fib_window == 0 {
            return Err("sim.fib_window must be positive".into());
        }
        if !(self.playback_delay >= 0.0 && self.max_jitter >= 0.0) {
            return Err("sim.playback_delay and sim.max_jitter must be nonnegative".into());
        }
        if self.bandwidth_scales.is_empty() {
            return Err("sim.bandwidth_scales must not be empty".into());
        }
        if self.bandwidth_scales.iter().chain(&self.time_series_scales).any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err("bandwidth scales must be finite and nonnegative".into());
        }
        if self.bloom.hashes == 0 {
            return Err("sim.bloom.hashes must be positive".into());
        }
        Ok(())
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..u64::from(self.runs)).map(|i| self.base_seed + i)
    }

    pub fn bloom_mode(&self) -> BloomMode {
        if self.exact_bloom {
            BloomMode::Exact
        } else {
            BloomMode::Hashed(self.bloom)
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
}

/// Request times for `count` Interests of one class in generation `g`:
/// evenly spaced over the generation window, shifted by the client's join
/// jitter.
pub fn schedule_interests(count: u32, generation: u32, gen_duration: f64, jitter: f64) -> Vec<f64> {
    let start = f64::from(generation) * gen_duration + jitter;
    (0..count).map(|k| start + f64::from(k) * gen_duration / f64::from(count)).collect()
}

#[derive(Debug)]
enum Packet {
    Interest(Interest),
    Data(DataObject),
}

#[derive(Debug)]
enum EventKind {
    Request { user: usize, class: usize, generation: u32 },
    Arrival { node: usize, link: usize, packet: Packet },
    GenerationBoundary(u32),
    Decode(u32),
}

struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    /// Reversed so the max-heap pops the earliest `(time, seq)`.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

/// Outcome of one seeded run.
#[derive(Debug, Clone)]
pub struct SimReport {
    pub seed: u64,
    /// Client ids, in the allocation's user order.
    pub clients: Vec<u32>,
    /// Decoded layer per client and generation.
    pub layers: Vec<Vec<Option<usize>>>,
    /// PSNR per client and generation.
    pub psnr: Vec<Vec<f64>>,
    /// Bits put on each link (both directions).
    pub link_bits: Vec<f64>,
    /// Largest number of bits that started serialization on a link within
    /// one generation window.
    pub link_window_bits: Vec<f64>,
    /// Simulated span used for utilization, seconds.
    pub duration: f64,
    /// Deliveries beyond the client's own Interests, per client.
    pub excess_deliveries: Vec<u64>,
    /// Identical coded packets handed to the same client twice for one
    /// class and generation, per client.
    pub repeated_deliveries: Vec<u64>,
    /// Deliveries that did not raise the client's decoder rank.
    pub non_innovative_deliveries: Vec<u64>,
    /// Interests issued per client.
    pub issued: Vec<u64>,
    /// Data handed to each client's player.
    pub delivered: Vec<u64>,
    pub node_stats: Vec<(u32, NodeStats)>,
    /// Event trace lines, when requested.
    pub trace: Vec<String>,
}

impl SimReport {
    pub fn mean_psnr(&self, user: usize) -> f64 {
        let p = &self.psnr[user];
        if p.is_empty() {
            0.0
        } else {
            p.iter().sum::<f64>() / p.len() as f64
        }
    }

    pub fn user_index(&self, client: u32) -> Option<usize> {
        self.clients.iter().position(|&c| c == client)
    }

    /// Per-link utilization over the run.
    pub fn utilization(&self, g: &NetworkGraph) -> Vec<f64> {
        g.links()
            .iter()
            .zip(&self.link_bits)
            .map(|(l, &b)| if l.bandwidth > 0.0 && self.duration > 0.0 { b / (l.bandwidth * self.duration) } else { 0.0 })
            .collect()
    }
}

/// Per-link forwarding plans for node `v`.
fn face_plans(g: &NetworkGraph, plan: &RateAllocationResult, v: usize) -> Vec<FacePlan> {
    let alloc = &plan.allocation;
    let mut faces = Vec::new();
    for &e in g.out_links(v) {
        for class in 0..plan.profile.layers() {
            let z = alloc.forward_counts[e][class];
            let users = plan
                .clients
                .iter()
                .enumerate()
                .filter_map(|(u, &id)| {
                    let r = alloc.link_counts[u][class][e];
                    (r > 0).then_some((id, r))
                })
                .collect();
            faces.push(FacePlan { link: e, class, z, users });
        }
    }
    faces
}

struct Sim<'a> {
    g: &'a NetworkGraph,
    plan: &'a RateAllocationResult,
    params: &'a SimParams,
    nodes: Vec<NodeEngine>,
    links: Vec<DuplexLink>,
    heap: BinaryHeap<Event>,
    seq: u64,
    /// Node index of each client, in user order.
    client_nodes: Vec<usize>,
    user_of_node: HashMap<usize, usize>,
    decoders: Vec<HashMap<u32, DecoderState>>,
    /// Coefficient vectors already delivered, per (user, class, generation).
    seen: HashMap<(usize, usize, u32), HashSet<Vec<u8>>>,
    issued: HashMap<(usize, usize, u32), u64>,
    delivered: HashMap<(usize, usize, u32), u64>,
    report: SimReport,
    window_bits: Vec<HashMap<u64, f64>>,
    trace: bool,
}

impl Sim<'_> {
    fn push(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Event { time, seq: self.seq, kind });
    }

    fn send(&mut self, now: f64, link: usize, packet: Packet) {
        let profile = &self.plan.profile;
        let (bytes, dir, to) = match &packet {
            Packet::Interest(_) => (profile.interest_size, Direction::Up, self.g.links()[link].to),
            Packet::Data(_) => (profile.payload_size, Direction::Down, self.g.links()[link].from),
        };
        let bits = bytes as f64 * 8.0;
        let Some((start, arrival)) = self.links[link].transmit(now, bits, dir) else {
            return;
        };
        self.report.link_bits[link] += bits;
        let window = (start / profile.gen_duration).floor() as u64;
        *self.window_bits[link].entry(window).or_insert(0.0) += bits;
        self.push(arrival, EventKind::Arrival { node: to, link, packet });
    }

    fn apply(&mut self, now: f64, node: usize, out: Outbox) {
        if let Some(t) = out.trace {
            self.report.trace.extend(t.iter().map(|e| e.to_string()));
        }
        for action in out.actions {
            match action {
                Action::Interest { link, interest } => self.send(now, link, Packet::Interest(interest)),
                Action::Data { link, data } => self.send(now, link, Packet::Data(data)),
                Action::Deliver { data } => self.deliver(node, data),
            }
        }
    }

    fn deliver(&mut self, node: usize, data: DataObject) {
        let u = self.user_of_node[&node];
        let g = data.name.generation;
        let class = data.name.packet_id as usize;
        *self.delivered.entry((u, class, g)).or_default() += 1;
        if !self.seen.entry((u, class, g)).or_default().insert(data.packet.coefficients.clone()) {
            self.report.repeated_deliveries[u] += 1;
        }
        if let Some(dec) = self.decoders[u].get_mut(&g) {
            if !dec.absorb(&data.packet).unwrap_or(false) {
                self.report.non_innovative_deliveries[u] += 1;
            }
        }
    }

    fn outbox(&self) -> Outbox {
        if self.trace {
            Outbox::traced()
        } else {
            Outbox::default()
        }
    }

    fn step(&mut self, ev: Event) {
        let now = ev.time;
        match ev.kind {
            EventKind::Request { user, class, generation } => {
                let node = self.client_nodes[user];
                *self.issued.entry((user, class, generation)).or_default() += 1;
                self.report.issued[user] += 1;
                let mut out = self.outbox();
                self.nodes[node].request(now, class, generation, &mut out).expect("planned class is valid");
                self.apply(now, node, out);
            }
            EventKind::Arrival { node, link, packet } => {
                let mut out = self.outbox();
                let engine = &mut self.nodes[node];
                let res = match packet {
                    Packet::Interest(i) => engine.process_interest(now, Face::Link(link), i, &mut out),
                    Packet::Data(d) => engine.process_data(now, d, &mut out),
                };
                res.expect("simulated names are well formed");
                self.apply(now, node, out);
            }
            EventKind::GenerationBoundary(k) => {
                let next = k + self.params.fib_window - 1;
                for i in 0..self.nodes.len() {
                    let mut out = self.outbox();
                    if next < self.params.generations {
                        self.nodes[i].install_generation(next);
                    }
                    self.nodes[i].sweep(now, &mut out);
                    self.apply(now, i, out);
                }
            }
            EventKind::Decode(g) => {
                for u in 0..self.client_nodes.len() {
                    let layer = self.decoders[u].remove(&g).and_then(|d| d.decodable_layer());
                    self.report.layers[u][g as usize] = layer;
                    self.report.psnr[u][g as usize] = self.plan.profile.quality_of(layer);
                    if self.trace {
                        let id = self.report.clients[u];
                        let shown = layer.map_or("-".to_string(), |l| l.to_string());
                        self.report.trace.push(format!("{now:.6} {id} decode g={g} layer={shown}"));
                    }
                }
            }
        }
    }

}

/// Simulates every generation once with the given seed.
///
/// The graph must be the one the allocation was computed for. Trace lines
/// are collected only when `trace` is set.
pub fn run(
    g: &NetworkGraph,
    plan: &RateAllocationResult,
    params: &SimParams,
    seed: u64,
    trace: bool,
) -> Result<SimReport, SimError> {
    params.check().map_err(SimError::ConfigInvalid)?;
    let clients = g.clients();
    if clients.iter().map(|&v| g.id(v)).collect::<Vec<_>>() != plan.clients {
        return Err(SimError::ConfigInvalid("allocation does not match the topology's clients".into()));
    }
    let profile = Arc::new(plan.profile.clone());
    let roster: Arc<[u32]> = plan.clients.clone().into();
    let prefix: Arc<str> = params.prefix.as_str().into();
    let bloom = params.bloom_mode();
    let nodes: Vec<NodeEngine> = (0..g.node_count())
        .map(|v| {
            NodeEngine::new(NodeSetup {
                id: g.id(v),
                role: g.role(v),
                roster: roster.clone(),
                bloom,
                profile: profile.clone(),
                prefix: prefix.clone(),
                faces: face_plans(g, plan, v),
                playback_delay: params.playback_delay,
                payload_len: params.payload_bytes,
                innovative_source: params.innovative_source,
                seed: splitmix64(seed ^ (u64::from(g.id(v)) << 32)),
            })
        })
        .collect();
    let up_share = profile.interest_size as f64 / (profile.interest_size + profile.payload_size) as f64;
    let links = g.links().iter().map(|l| DuplexLink::new(l.bandwidth, l.delay, params.link_sharing, up_share)).collect();
    let nu = clients.len();
    let gens = params.generations as usize;
    let report = SimReport {
        seed,
        clients: plan.clients.clone(),
        layers: vec![vec![None; gens]; nu],
        psnr: vec![vec![0.0; gens]; nu],
        link_bits: vec![0.0; g.link_count()],
        link_window_bits: vec![0.0; g.link_count()],
        duration: 0.0,
        excess_deliveries: vec![0; nu],
        repeated_deliveries: vec![0; nu],
        non_innovative_deliveries: vec![0; nu],
        issued: vec![0; nu],
        delivered: vec![0; nu],
        node_stats: Vec::new(),
        trace: Vec::new(),
    };
    let mut sim = Sim {
        g,
        plan,
        params,
        nodes,
        links,
        heap: BinaryHeap::new(),
        seq: 0,
        user_of_node: clients.iter().enumerate().map(|(u, &v)| (v, u)).collect(),
        client_nodes: clients.to_vec(),
        decoders: vec![HashMap::new(); nu],
        seen: HashMap::new(),
        issued: HashMap::new(),
        delivered: HashMap::new(),
        report,
        window_bits: vec![HashMap::new(); g.link_count()],
        trace,
    };

    let t = profile.gen_duration;
    for gen in 0..params.generations.min(params.fib_window) {
        for n in &mut sim.nodes {
            n.install_generation(gen);
        }
    }
    let mut jitter_rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x4A17_7E55));
    for u in 0..nu {
        let jitter = jitter_rng.gen::<f64>() * params.max_jitter;
        for gen in 0..params.generations {
            sim.decoders[u].insert(gen, DecoderState::new(&profile, gen));
            for class in 0..profile.layers() {
                let n = plan.allocation.class_counts[u][class];
                for at in schedule_interests(n, gen, t, jitter) {
                    sim.push(at, EventKind::Request { user: u, class, generation: gen });
                }
            }
        }
    }
    let last_deadline = (f64::from(params.generations)) * t + params.playback_delay;
    for k in 1..=params.generations + params.playback_delay.ceil() as u32 + 1 {
        sim.push(f64::from(k) * t, EventKind::GenerationBoundary(k));
    }
    for gen in 0..params.generations {
        sim.push((f64::from(gen) + 1.0) * t + params.playback_delay, EventKind::Decode(gen));
    }

    while let Some(ev) = sim.heap.pop() {
        if ev.time > last_deadline + t {
            break;
        }
        sim.step(ev);
    }

    let mut report = sim.report;
    report.duration = last_deadline;
    for (key, &n) in &sim.delivered {
        let issued = sim.issued.get(key).copied().unwrap_or(0);
        report.excess_deliveries[key.0] += n.saturating_sub(issued);
        report.delivered[key.0] += n;
    }
    report.link_window_bits = sim.window_bits.iter().map(|w| w.values().copied().fold(0.0, f64::max)).collect();
    report.node_stats = sim.nodes.iter().map(|n| (n.id(), n.stats)).collect();
    Ok(report)
}
