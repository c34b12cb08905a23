//! Per-node protocol state machine.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bloom::{BloomFilter, BloomMode};
use super::name::ContentName;
use super::tables::{
    build_bloom, cs_lookup, cs_update, pit_lookup_data, pit_lookup_interest, serving_entries, CsEntry, DataObject, Face,
    FibEntry, Interest, PitEntry,
};
use super::ProtocolError;
use crate::optimizer::Role;
use crate::prlnc::{encode, recode, CodedPacket, DecoderState, Generation, VideoProfile};

/// Per-generation Interest budget of one outgoing link for one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FacePlan {
    pub link: usize,
    pub class: usize,
    /// Actual Interests per generation (`z`).
    pub z: u32,
    /// Conceptual per-client Interests per generation, `(client id, r)`.
    pub users: Vec<(u32, u32)>,
}

#[derive(Debug, Clone)]
pub struct NodeSetup {
    pub id: u32,
    pub role: Role,
    pub roster: Arc<[u32]>,
    pub bloom: BloomMode,
    pub profile: Arc<VideoProfile>,
    pub prefix: Arc<str>,
    pub faces: Vec<FacePlan>,
    pub playback_delay: f64,
    /// Synthetic payload bytes per source packet (server only).
    pub payload_len: usize,
    /// Server only: keep each emitted packet innovative with respect to the
    /// earlier packets of its class and generation.
    pub innovative_source: bool,
    pub seed: u64,
}

/// Something the node wants the network to do.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Send an Interest along `link` (toward the server).
    Interest { link: usize, interest: Interest },
    /// Send Data back along `link` (away from the server).
    Data { link: usize, data: DataObject },
    /// Hand Data to the local application.
    Deliver { data: DataObject },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub time: f64,
    pub node: u32,
    pub action: &'static str,
    pub name: ContentName,
    pub bf: BloomFilter,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} {} {} {} {}", self.time, self.node, self.action, self.name, self.bf)
    }
}

#[derive(Debug, Default)]
pub struct Outbox {
    pub actions: Vec<Action>,
    /// Collected only when `Some`.
    pub trace: Option<Vec<TraceEvent>>,
}

impl Outbox {
    pub fn traced() -> Self {
        Self { actions: Vec::new(), trace: Some(Vec::new()) }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeStats {
    pub interests_in: u64,
    pub aggregated: u64,
    /// Interest transmissions, one per face.
    pub forwarded: u64,
    pub cs_replies: u64,
    pub pit_inserted: u64,
    pub pit_consumed: u64,
    pub pit_expired: u64,
    pub data_in: u64,
    pub expired_dropped: u64,
    pub non_innovative: u64,
    pub data_sent: u64,
    pub delivered: u64,
}

pub struct NodeEngine {
    setup: NodeSetup,
    pit: BTreeMap<ContentName, Vec<PitEntry>>,
    cs: BTreeMap<ContentName, Vec<CsEntry>>,
    fib: BTreeMap<ContentName, FibEntry>,
    /// Plan lookup by `(link, class)`.
    plans: HashMap<(usize, usize), FacePlan>,
    /// Rank of the cached objects destined to each client, per generation.
    ranks: HashMap<(u32, u32), DecoderState>,
    /// Server-side source data.
    sources: BTreeMap<u32, Generation>,
    /// Server-side span of the packets emitted so far per generation.
    emitted: HashMap<u32, DecoderState>,
    rng: ChaCha8Rng,
    pub stats: NodeStats,
}

impl NodeEngine {
    pub fn new(setup: NodeSetup) -> Self {
        let plans = setup.faces.iter().map(|p| ((p.link, p.class), p.clone())).collect();
        let rng = ChaCha8Rng::seed_from_u64(setup.seed);
        Self {
            setup,
            pit: BTreeMap::new(),
            cs: BTreeMap::new(),
            fib: BTreeMap::new(),
            plans,
            ranks: HashMap::new(),
            sources: BTreeMap::new(),
            emitted: HashMap::new(),
            rng,
            stats: NodeStats::default(),
        }
    }

    pub fn id(&self) -> u32 {
        self.setup.id
    }

    pub fn role(&self) -> Role {
        self.setup.role
    }

    pub fn name(&self, class: usize, generation: u32) -> ContentName {
        ContentName::coded(self.setup.prefix.clone(), class, generation)
    }

    pub fn deadline(&self, generation: u32) -> f64 {
        (f64::from(generation) + 1.0) * self.setup.profile.gen_duration + self.setup.playback_delay
    }

    pub fn pit(&self) -> &BTreeMap<ContentName, Vec<PitEntry>> {
        &self.pit
    }

    pub fn cs(&self) -> &BTreeMap<ContentName, Vec<CsEntry>> {
        &self.cs
    }

    pub fn fib(&self) -> &BTreeMap<ContentName, FibEntry> {
        &self.fib
    }

    /// Creates the FIB entries of one generation with counters set to the
    /// per-generation actual counts.
    pub fn install_generation(&mut self, generation: u32) {
        for class in 0..self.setup.profile.layers() {
            let faces: Vec<(usize, u32)> = self
                .setup
                .faces
                .iter()
                .filter(|p| p.class == class && p.z > 0)
                .map(|p| (p.link, p.z))
                .collect();
            if !faces.is_empty() {
                self.fib.insert(self.name(class, generation), FibEntry { faces });
            }
        }
    }

    /// Drops every table entry of generations whose deadline is at or
    /// before `now`.
    pub fn sweep(&mut self, now: f64, out: &mut Outbox) {
        let expired = |g: u32, this: &Self| this.deadline(g) <= now;
        let mut gone = Vec::new();
        for (name, entries) in &self.pit {
            if expired(name.generation, self) {
                gone.push(name.clone());
                self.stats.pit_expired += entries.len() as u64;
                if let Some(t) = out.trace.as_mut() {
                    for e in entries {
                        t.push(TraceEvent { time: now, node: self.setup.id, action: "pit-expire", name: name.clone(), bf: e.union.clone() });
                    }
                }
            }
        }
        for name in gone {
            self.pit.remove(&name);
        }
        let keep = |n: &ContentName| (f64::from(n.generation) + 1.0) * self.setup.profile.gen_duration + self.setup.playback_delay > now;
        self.cs.retain(|n, _| keep(n));
        self.fib.retain(|n, _| keep(n));
        let (t, d) = (self.setup.profile.gen_duration, self.setup.playback_delay);
        self.ranks.retain(|&(g, _), _| (f64::from(g) + 1.0) * t + d > now);
        self.sources.retain(|&g, _| (f64::from(g) + 1.0) * t + d > now);
        self.emitted.retain(|&g, _| (f64::from(g) + 1.0) * t + d > now);
    }

    fn trace(&self, out: &mut Outbox, now: f64, action: &'static str, name: &ContentName, bf: &BloomFilter) {
        if let Some(t) = out.trace.as_mut() {
            t.push(TraceEvent { time: now, node: self.setup.id, action, name: name.clone(), bf: bf.clone() });
        }
    }

    /// A client's player asks for one more packet of `(class, generation)`.
    pub fn request(&mut self, now: f64, class: usize, generation: u32, out: &mut Outbox) -> Result<(), ProtocolError> {
        let bf = self.setup.bloom.of([self.setup.id]);
        let interest = Interest { name: self.name(class, generation), bf, nonce: self.rng.gen(), timestamp: now };
        self.process_interest(now, Face::App, interest, out)
    }

    fn reply(&mut self, face: Face, data: DataObject, out: &mut Outbox) {
        match face {
            Face::App => {
                self.stats.delivered += 1;
                out.actions.push(Action::Deliver { data });
            }
            Face::Link(link) => {
                self.stats.data_sent += 1;
                out.actions.push(Action::Data { link, data });
            }
        }
    }

    /// Interest pipeline: PIT aggregation, then FIB forwarding, then a CS
    /// answer, else wait in the PIT.
    pub fn process_interest(&mut self, now: f64, face: Face, interest: Interest, out: &mut Outbox) -> Result<(), ProtocolError> {
        self.stats.interests_in += 1;
        let name = interest.name.clone();
        self.trace(out, now, "interest", &name, &interest.bf);
        let Some(class) = name.class() else {
            return self.process_plain_interest(now, face, interest, out);
        };
        if class >= self.setup.profile.layers() {
            return Err(ProtocolError::MalformedName(format!("class {class} out of range in `{name}`")));
        }

        if self.setup.role == Role::Server {
            let data = self.originate(&interest, class)?;
            self.trace(out, now, "serve", &name, &data.bf);
            self.reply(face, data, out);
            return Ok(());
        }

        let roster = self.setup.roster.clone();
        if let Some(pending) = self.pit.get_mut(&name) {
            if let Some(k) = pit_lookup_interest(&interest.bf, pending, &roster) {
                pending[k].append(face, interest.bf.clone());
                self.stats.aggregated += 1;
                self.trace(out, now, "aggregate", &name, &interest.bf);
                return Ok(());
            }
        }

        if let Some(entry) = self.fib.get_mut(&name) {
            let chosen: Vec<usize> = (0..entry.faces.len()).filter(|&i| entry.faces[i].1 > 0).collect();
            let mut sends = Vec::with_capacity(chosen.len());
            for i in chosen {
                let (link, counter) = entry.faces[i];
                let plan = &self.plans[&(link, class)];
                let bf = build_bloom(counter, plan.z, &plan.users, self.setup.bloom);
                entry.faces[i].1 -= 1;
                sends.push((link, bf));
            }
            if entry.exhausted() {
                self.fib.remove(&name);
            }
            for (link, bf) in sends {
                self.trace(out, now, "forward", &name, &bf);
                self.stats.forwarded += 1;
                out.actions.push(Action::Interest {
                    link,
                    interest: Interest { name: name.clone(), bf, nonce: interest.nonce, timestamp: now },
                });
            }
            self.insert_pending(now, face, interest);
            return Ok(());
        }

        if let Some(entries) = self.cs.get_mut(&name) {
            if let Some(serving) = cs_lookup(&interest.bf, entries, &roster) {
                let idx = serving_entries(&serving);
                let (packet, expiry) = self.combine(class, &name, &idx);
                let entries = self.cs.get_mut(&name).expect("just matched");
                cs_update(&interest.bf, entries, &idx, &roster);
                let data = DataObject { name: name.clone(), bf: interest.bf.clone(), packet, expiry };
                self.stats.cs_replies += 1;
                self.trace(out, now, "cs-reply", &name, &data.bf);
                self.reply(face, data, out);
                return Ok(());
            }
        }

        self.trace(out, now, "pit-insert", &name, &interest.bf);
        self.insert_pending(now, face, interest);
        Ok(())
    }

    fn insert_pending(&mut self, now: f64, face: Face, interest: Interest) {
        self.stats.pit_inserted += 1;
        self.pit.entry(interest.name).or_default().push(PitEntry::new(face, interest.bf, interest.nonce, now));
    }

    /// Uncoded names are answered from exact cached copies only.
    fn process_plain_interest(&mut self, now: f64, face: Face, interest: Interest, out: &mut Outbox) -> Result<(), ProtocolError> {
        if let Some(d) = self.cs.get(&interest.name).and_then(|e| e.first()) {
            let data = DataObject { bf: interest.bf.clone(), ..d.data.clone() };
            self.stats.cs_replies += 1;
            self.trace(out, now, "cs-reply", &interest.name, &data.bf);
            self.reply(face, data, out);
        } else {
            self.trace(out, now, "unanswered", &interest.name, &interest.bf);
        }
        Ok(())
    }

    fn originate(&mut self, interest: &Interest, class: usize) -> Result<DataObject, ProtocolError> {
        let g = interest.name.generation;
        let (profile, len, delay) = (&self.setup.profile, self.setup.payload_len, self.setup.playback_delay);
        let gen = self.sources.entry(g).or_insert_with(|| Generation::synthetic(profile, g, len, delay));
        let packet = if self.setup.innovative_source {
            // Redraw until the packet adds rank to what this generation has
            // already emitted; start a fresh span once no packet of this
            // class can.
            let span = self.emitted.entry(g).or_insert_with(|| DecoderState::rank_only(profile, g));
            if span.prefix_rank(class) >= profile.beta(class) {
                *span = DecoderState::rank_only(profile, g);
            }
            loop {
                let p = encode(profile, gen, class, &mut self.rng)?;
                if span.absorb(&p)? {
                    break p;
                }
            }
        } else {
            encode(profile, gen, class, &mut self.rng)?
        };
        Ok(DataObject { name: interest.name.clone(), bf: interest.bf.clone(), packet, expiry: gen.deadline })
    }

    /// Random combination of the serving objects of `name`.
    fn combine(&mut self, class: usize, name: &ContentName, serving: &[usize]) -> (CodedPacket, f64) {
        let entries = &self.cs[name];
        let packet = recode(&self.setup.profile, serving.iter().map(|&i| &entries[i].data.packet), class, name.generation, &mut self.rng)
            .expect("cached objects share name");
        let expiry = serving.iter().map(|&i| entries[i].data.expiry).fold(f64::INFINITY, f64::min);
        (packet, expiry)
    }

    /// Whether `data` adds rank for at least one of its destination
    /// clients, counting only objects this node has kept for that client.
    fn absorb_innovative(&mut self, data: &DataObject) -> bool {
        let g = data.name.generation;
        let mut innovative = false;
        for u in data.bf.members(&self.setup.roster) {
            let profile = &self.setup.profile;
            let state = self.ranks.entry((g, u)).or_insert_with(|| DecoderState::rank_only(profile, g));
            innovative |= state.absorb(&data.packet).unwrap_or(false);
        }
        innovative
    }

    /// Data pipeline: discard if expired or not innovative, cache, then
    /// satisfy pending Interests until none match.
    pub fn process_data(&mut self, now: f64, data: DataObject, out: &mut Outbox) -> Result<(), ProtocolError> {
        self.stats.data_in += 1;
        let name = data.name.clone();
        self.trace(out, now, "data", &name, &data.bf);
        if now > data.expiry {
            self.stats.expired_dropped += 1;
            self.trace(out, now, "drop-expired", &name, &data.bf);
            return Ok(());
        }
        let Some(class) = name.class() else {
            return self.process_plain_data(now, data, out);
        };
        if class >= self.setup.profile.layers() {
            return Err(ProtocolError::MalformedName(format!("class {class} out of range in `{name}`")));
        }
        if !self.absorb_innovative(&data) {
            self.stats.non_innovative += 1;
            self.trace(out, now, "non-innovative", &name, &data.bf);
            return Ok(());
        }
        self.cs.entry(name.clone()).or_default().push(CsEntry::new(data, self.setup.bloom));

        let roster = self.setup.roster.clone();
        loop {
            let (Some(pending), Some(entries)) = (self.pit.get_mut(&name), self.cs.get_mut(&name)) else { break };
            let Some((k, serving)) = pit_lookup_data(pending, entries, &roster) else { break };
            let idx = serving_entries(&serving);
            let consumed = pending.remove(k);
            if pending.is_empty() {
                self.pit.remove(&name);
            }
            let (packet, expiry) = self.combine(class, &name, &idx);
            let entries = self.cs.get_mut(&name).expect("just used");
            cs_update(&consumed.union, entries, &idx, &roster);
            self.stats.pit_consumed += 1;
            for (face, bf) in consumed.tuples {
                let data = DataObject { name: name.clone(), bf, packet: packet.clone(), expiry };
                self.trace(out, now, "send-data", &name, &data.bf);
                self.reply(face, data, out);
            }
        }
        Ok(())
    }

    /// Plain NDN semantics: one object consumes every pending entry.
    fn process_plain_data(&mut self, now: f64, data: DataObject, out: &mut Outbox) -> Result<(), ProtocolError> {
        let name = data.name.clone();
        let pending = self.pit.remove(&name).unwrap_or_default();
        self.cs.entry(name.clone()).or_default().push(CsEntry::new(data.clone(), self.setup.bloom));
        for entry in pending {
            self.stats.pit_consumed += 1;
            for (face, bf) in entry.tuples {
                let d = DataObject { bf, ..data.clone() };
                self.trace(out, now, "send-data", &name, &d.bf);
                self.reply(face, d, out);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const U1: u32 = 25;
    const U2: u32 = 26;

    fn profile() -> Arc<VideoProfile> {
        Arc::new(VideoProfile { alpha: vec![2, 1], rates: vec![2.0, 1.0], quality: vec![30.0, 35.0], ..VideoProfile::cif_three_layer() })
    }

    fn setup(id: u32, role: Role, faces: Vec<FacePlan>) -> NodeSetup {
        NodeSetup {
            id,
            role,
            roster: Arc::from(vec![U1, U2]),
            bloom: BloomMode::Exact,
            profile: profile(),
            prefix: "v".into(),
            faces,
            playback_delay: 1.0,
            payload_len: 4,
            innovative_source: true,
            seed: 1,
        }
    }

    fn interest(node: &NodeEngine, ids: &[u32]) -> Interest {
        Interest { name: node.name(0, 0), bf: BloomMode::Exact.of(ids.iter().copied()), nonce: 0, timestamp: 0.0 }
    }

    /// Intermediate with one upstream link (7) carrying `z` Interests
    /// per generation for class 0.
    fn relay(z: u32, users: Vec<(u32, u32)>) -> NodeEngine {
        let mut n = NodeEngine::new(setup(1, Role::Intermediate, vec![FacePlan { link: 7, class: 0, z, users }]));
        n.install_generation(0);
        n
    }

    fn server_data(node: &NodeEngine, ids: &[u32]) -> DataObject {
        server_data_seeded(node, ids, 1)
    }

    fn server_data_seeded(node: &NodeEngine, ids: &[u32], seed: u64) -> DataObject {
        let mut server = NodeEngine::new(NodeSetup { seed, ..setup(0, Role::Server, vec![]) });
        let mut out = Outbox::default();
        let mut i = interest(node, ids);
        i.nonce = 9;
        server.process_interest(0.0, Face::Link(7), i, &mut out).unwrap();
        match out.actions.pop() {
            Some(Action::Data { data, .. }) => data,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fresh_node_forwards_via_fib() {
        let mut n = relay(1, vec![(U1, 1)]);
        let mut out = Outbox::default();
        n.process_interest(0.0, Face::Link(3), interest(&n, &[U1]), &mut out).unwrap();
        assert!(matches!(&out.actions[..], [Action::Interest { link: 7, .. }]));
        // Counter 1 on the only face: entry gone after one transmission.
        assert!(n.fib().is_empty());
        assert_eq!(n.pit().values().map(Vec::len).sum::<usize>(), 1);
    }

    #[test]
    fn second_client_aggregates_onto_pending() {
        let mut n = relay(2, vec![(U1, 2), (U2, 2)]);
        let mut out = Outbox::default();
        n.process_interest(0.0, Face::Link(3), interest(&n, &[U1]), &mut out).unwrap();
        n.process_interest(0.0, Face::Link(4), interest(&n, &[U2]), &mut out).unwrap();
        assert_eq!(out.actions.len(), 1);
        assert_eq!(n.stats.aggregated, 1);
        // Same client again is a new request.
        n.process_interest(0.0, Face::Link(3), interest(&n, &[U1]), &mut out).unwrap();
        assert_eq!(out.actions.len(), 2);

        // One Data object answers both faces of the aggregated entry.
        let d = server_data(&n, &[U1, U2]);
        let mut out = Outbox::default();
        n.process_data(0.1, d, &mut out).unwrap();
        let faces: Vec<usize> = out.actions.iter().map(|a| match a { Action::Data { link, .. } => *link, _ => panic!() }).collect();
        assert_eq!(faces, vec![3, 4]);
    }

    #[test]
    fn forwards_on_all_nonzero_faces() {
        let faces = vec![
            FacePlan { link: 7, class: 0, z: 3, users: vec![(U1, 3)] },
            FacePlan { link: 8, class: 0, z: 0, users: vec![] },
        ];
        let mut n = NodeEngine::new(setup(1, Role::Intermediate, faces));
        n.install_generation(0);
        let mut out = Outbox::default();
        n.process_interest(0.0, Face::Link(3), interest(&n, &[U1]), &mut out).unwrap();
        assert!(matches!(&out.actions[..], [Action::Interest { link: 7, .. }]));
        assert_eq!(n.fib()[&n.name(0, 0)].faces, vec![(7, 2)]);
    }

    #[test]
    fn exhausted_fib_falls_back_to_cs() {
        let mut n = relay(1, vec![(U1, 1), (U2, 1)]);
        let mut out = Outbox::default();
        n.process_interest(0.0, Face::Link(3), interest(&n, &[U1]), &mut out).unwrap();
        let d = server_data(&n, &[U1, U2]);
        n.process_data(0.1, d, &mut out).unwrap();
        assert_eq!(n.stats.pit_consumed, 1);
        // U2 asks later: PIT empty, FIB spent, CS still owes U2.
        let mut out = Outbox::traced();
        n.process_interest(0.2, Face::Link(4), interest(&n, &[U2]), &mut out).unwrap();
        assert!(matches!(&out.actions[..], [Action::Data { link: 4, .. }]));
        assert_eq!(n.stats.cs_replies, 1);
        let actions: Vec<&str> = out.trace.as_ref().unwrap().iter().map(|t| t.action).collect();
        assert_eq!(actions, vec!["interest", "cs-reply"]);
        // Nothing left for either client: the next request waits.
        n.process_interest(0.3, Face::Link(4), interest(&n, &[U2]), &mut out).unwrap();
        assert_eq!(n.stats.pit_inserted, 2);
    }

    #[test]
    fn expired_data_dropped_without_state_change() {
        let mut n = relay(1, vec![(U1, 1)]);
        let mut out = Outbox::default();
        n.process_interest(0.0, Face::Link(3), interest(&n, &[U1]), &mut out).unwrap();
        let d = server_data(&n, &[U1]);
        let mut out = Outbox::default();
        n.process_data(d.expiry + 0.01, d, &mut out).unwrap();
        assert!(out.actions.is_empty());
        assert!(n.cs().is_empty());
        assert_eq!(n.stats.expired_dropped, 1);
        assert_eq!(n.pit().values().map(Vec::len).sum::<usize>(), 1);
    }

    #[test]
    fn replayed_data_serves_nobody_twice() {
        let mut n = relay(2, vec![(U1, 2)]);
        let mut out = Outbox::default();
        n.process_interest(0.0, Face::Link(3), interest(&n, &[U1]), &mut out).unwrap();
        n.process_interest(0.0, Face::Link(3), interest(&n, &[U1]), &mut out).unwrap();
        let d = server_data(&n, &[U1]);
        let mut out = Outbox::default();
        n.process_data(0.1, d.clone(), &mut out).unwrap();
        n.process_data(0.2, d, &mut out).unwrap();
        assert_eq!(out.actions.len(), 1);
        assert_eq!(n.stats.non_innovative, 1);
        assert_eq!(n.pit().values().map(Vec::len).sum::<usize>(), 1);
    }

    #[test]
    fn one_object_consumes_two_disjoint_pending_interests() {
        let mut n = relay(2, vec![(U1, 2), (U2, 2)]);
        // No FIB budget: the requests wait in the PIT, as separate
        // entries since each already holds its own client.
        n.fib.clear();
        let mut out = Outbox::default();
        n.process_interest(0.0, Face::Link(3), interest(&n, &[U1]), &mut out).unwrap();
        n.process_interest(0.0, Face::Link(3), interest(&n, &[U1]), &mut out).unwrap();
        n.process_data(0.1, server_data_seeded(&n, &[U1], 1), &mut out).unwrap();
        n.process_data(0.1, server_data_seeded(&n, &[U1], 2), &mut out).unwrap();
        assert_eq!(out.actions.len(), 2);
        assert!(n.pit().is_empty());

        let mut n = relay(1, vec![(U1, 1), (U2, 1)]);
        n.fib.clear();
        let mut out = Outbox::default();
        n.process_interest(0.0, Face::Link(3), interest(&n, &[U1]), &mut out).unwrap();
        n.process_interest(0.0, Face::Link(4), interest(&n, &[U2]), &mut out).unwrap();
        // Aggregated onto one entry; split them to get two pending Interests.
        let name = n.name(0, 0);
        let entry = n.pit.get_mut(&name).unwrap();
        assert_eq!(entry.len(), 1);
        let (face, bf) = entry[0].tuples.pop().unwrap();
        entry[0].union = BloomMode::Exact.of([U1]);
        entry.push(PitEntry::new(face, bf, 0, 0.0));
        n.process_data(0.1, server_data(&n, &[U1, U2]), &mut out).unwrap();
        let links: Vec<usize> = out.actions.iter().map(|a| match a { Action::Data { link, .. } => *link, _ => panic!() }).collect();
        assert_eq!(links, vec![3, 4]);
        assert!(n.pit().is_empty());
    }

    #[test]
    fn client_round_trip_and_sweep() {
        let faces = vec![
            FacePlan { link: 0, class: 0, z: 1, users: vec![(U1, 1)] },
            FacePlan { link: 1, class: 0, z: 2, users: vec![(U1, 2)] },
        ];
        let mut c = NodeEngine::new(NodeSetup { id: U1, ..setup(U1, Role::Client, faces) });
        c.install_generation(0);
        let mut out = Outbox::default();
        for _ in 0..3 {
            c.request(0.0, 0, 0, &mut out).unwrap();
        }
        let links: Vec<usize> = out.actions.iter().map(|a| match a { Action::Interest { link, interest } => { assert_eq!(interest.bf, BloomMode::Exact.of([U1])); *link } _ => panic!() }).collect();
        // Every face with budget left gets a copy; the third request finds
        // the budget spent and waits in the PIT.
        assert_eq!(links, vec![0, 1, 1]);
        let d = server_data(&c, &[U1]);
        let mut out = Outbox::default();
        c.process_data(0.1, d, &mut out).unwrap();
        assert!(matches!(&out.actions[..], [Action::Deliver { .. }]));
        c.request(0.0, 0, 0, &mut out).unwrap();
        c.sweep(c.deadline(0), &mut out);
        assert!(c.pit().is_empty() && c.cs().is_empty() && c.fib().is_empty());
        assert_eq!(c.stats.pit_inserted, c.stats.pit_consumed + c.stats.pit_expired);
    }

    #[test]
    fn server_span_restarts_per_class_window() {
        let mut s = NodeEngine::new(setup(0, Role::Server, vec![]));
        let mut out = Outbox::default();
        // 300 windows of two class-0 packets: each pair must decode layer 0.
        for _ in 0..300 {
            let mut d = DecoderState::rank_only(&s.setup.profile, 0);
            for _ in 0..2 {
                s.process_interest(0.0, Face::Link(7), interest(&s, &[U1]), &mut out).unwrap();
                let Some(Action::Data { data, .. }) = out.actions.pop() else { panic!() };
                assert!(d.absorb(&data.packet).unwrap());
            }
            assert_eq!(d.decodable_layer(), Some(0));
        }
    }

    #[test]
    fn server_rejects_bad_class() {
        let mut s = NodeEngine::new(setup(0, Role::Server, vec![]));
        let i = Interest { name: s.name(5, 0), bf: BloomMode::Exact.of([U1]), nonce: 0, timestamp: 0.0 };
        assert!(matches!(s.process_interest(0.0, Face::Link(0), i, &mut Outbox::default()), Err(ProtocolError::MalformedName(_))));
    }

    #[test]
    fn trace_line_format() {
        let t = TraceEvent { time: 1.5, node: 3, action: "forward", name: ContentName::coded("v".into(), 1, 2), bf: BloomMode::Exact.of([25]) };
        assert_eq!(t.to_string(), "1.500000 3 forward /v/1/1/2 25");
    }
}
