use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::message::{route, Hit, MessageId, Payload, Routing, UnitMessage};
use super::topology::Topology;
use super::{DpuError, UnitId};
use crate::cognition::{Dictionary, MinerConfig};
use crate::config::StructureSpec;
use crate::exec::Exec;
use crate::generalization::Hierarchy;
use crate::ids::NodeId;
use crate::pipeline;
use crate::queries::{self, Mode, QueryId};
use crate::relevancy::{RelevancyConfig, Scores};
use crate::store::{Segment, SegmentId};
use crate::structures::{join_items, Item, StructureGroups};

#[derive(Clone, Debug, PartialEq)]
pub struct SimSettings {
    pub miner: MinerConfig,
    pub structures: StructureSpec,
    pub relevancy: RelevancyConfig,
    /// Initial ttl of flooded messages.
    pub ttl: u64,
    pub exec: Exec,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            miner: MinerConfig::default(),
            structures: StructureSpec::default(),
            relevancy: RelevancyConfig::default(),
            ttl: 4,
            exec: Exec::default(),
        }
    }
}

/// A share-nothing processing unit. Everything derived from segments is
/// computed from `segments` alone; peer knowledge is kept apart.
#[derive(Clone, Debug, Default)]
pub struct Unit {
    pub unit_id: UnitId,
    pub owned: BTreeSet<SegmentId>,
    pub segments: Vec<Segment>,
    pub dictionary: Dictionary,
    pub groups: StructureGroups,
    pub hierarchy: Hierarchy,
    pub scores: Scores,
    pub peer_dictionaries: BTreeMap<UnitId, Dictionary>,
    pub peer_templates: BTreeMap<UnitId, BTreeSet<NodeId>>,
    /// Query results gathered at the query's origin, by responding unit.
    pub query_results: BTreeMap<QueryId, BTreeMap<UnitId, Vec<Hit>>>,
    pub confirmed: BTreeSet<(NodeId, Vec<Item>)>,
    mailbox: VecDeque<UnitMessage>,
    seen: BTreeSet<MessageId>,
    next_seq: u64,
}

type Event = (&'static str, String);

impl Unit {
    fn new(unit_id: UnitId) -> Self {
        Unit {
            unit_id,
            ..Unit::default()
        }
    }

    pub fn mailbox_len(&self) -> usize {
        self.mailbox.len()
    }

    fn fresh_id(&mut self) -> MessageId {
        let id = MessageId {
            origin: self.unit_id,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        id
    }

    fn mine(&mut self, settings: &SimSettings) -> Result<String, crate::Error> {
        let a = pipeline::analyze(
            &self.segments,
            &settings.miner,
            &settings.structures,
            settings.exec,
        )?;
        self.scores = pipeline::score(&a, &[], &settings.relevancy)?;
        self.dictionary = a.dictionary;
        self.groups = a.groups;
        self.hierarchy = a.hierarchy;
        Ok(format!(
            "patterns={} leaves={} nodes={}",
            self.dictionary.len(),
            self.groups.len(),
            self.hierarchy.len()
        ))
    }

    fn answer(&self, keywords: &[Vec<u8>], query_id: QueryId) -> Vec<Hit> {
        let Ok(plan) = queries::plan(
            query_id,
            keywords,
            0,
            &self.dictionary,
            &self.hierarchy,
            Mode::Exact,
        ) else {
            return Vec::new();
        };
        let results = queries::run(&[plan], &self.hierarchy, &self.scores).unwrap_or_default();
        results
            .into_values()
            .flatten()
            .map(|i| (i.origin.0, i.origin.1, join_items(&i.items)))
            .collect()
    }

    /// Drains the mailbox in FIFO order.
    fn drain(
        &mut self,
        topology: &Topology,
        settings: &SimSettings,
    ) -> (Vec<Event>, Vec<(UnitId, UnitMessage)>) {
        let mut events = Vec::new();
        let mut out = Vec::new();
        while let Some(m) = self.mailbox.pop_front() {
            self.handle(m, topology, settings, &mut events, &mut out);
        }
        (events, out)
    }

    fn handle(
        &mut self,
        m: UnitMessage,
        topology: &Topology,
        settings: &SimSettings,
        events: &mut Vec<Event>,
        out: &mut Vec<(UnitId, UnitMessage)>,
    ) {
        let me = self.unit_id;
        if !self.seen.insert(m.id) {
            events.push(("dup", format!("{} id={}", m.payload.kind(), m.id)));
            return;
        }
        let for_me = match m.routing {
            Routing::Flood => true,
            Routing::Unicast(target) => target == me,
        };
        if for_me {
            self.apply(&m, topology, settings, events, out);
        }
        if m.routing == Routing::Unicast(me) {
            return;
        }
        match route(&m, me, topology) {
            Ok(copies) => {
                let to: Vec<String> = copies.iter().map(|(u, _)| u.to_string()).collect();
                events.push((
                    "forward",
                    format!(
                        "{} id={} ttl={} to={}",
                        m.payload.kind(),
                        m.id,
                        m.ttl - 1,
                        to.join(",")
                    ),
                ));
                out.extend(copies);
            }
            Err(reason) => events.push((
                "drop",
                format!("{} id={} reason={reason}", m.payload.kind(), m.id),
            )),
        }
    }

    fn apply(
        &mut self,
        m: &UnitMessage,
        topology: &Topology,
        settings: &SimSettings,
        events: &mut Vec<Event>,
        out: &mut Vec<(UnitId, UnitMessage)>,
    ) {
        let me = self.unit_id;
        match &m.payload {
            Payload::Ingest(segments) => {
                for s in segments {
                    if self.owned.contains(&s.segment_id)
                        && !self.segments.iter().any(|x| x.segment_id == s.segment_id)
                    {
                        self.segments.push(s.clone());
                        self.segments.sort_by_key(|x| x.segment_id);
                        events.push(("ingest", format!("seg={}", s.segment_id)));
                    } else {
                        events.push(("reject", format!("seg={} not-owned", s.segment_id)));
                    }
                }
            }
            Payload::MineRequest => {
                match self.mine(settings) {
                    Ok(summary) => events.push(("mine", summary)),
                    Err(e) => {
                        events.push(("error", e.to_string()));
                        return;
                    }
                }
                let ttl = settings.ttl;
                let dict = Payload::DictSync(self.dictionary.clone());
                let templates =
                    Payload::TemplateSync(self.hierarchy.nodes().map(|n| n.node_id).collect());
                for payload in [dict, templates] {
                    let id = self.fresh_id();
                    events.push(("send", format!("{} id={id} ttl={ttl}", payload.kind())));
                    self.seen.insert(id);
                    let msg = UnitMessage::new(id, m.cause, payload, Routing::Flood, ttl);
                    match route(&msg, me, topology) {
                        Ok(copies) => out.extend(copies),
                        Err(reason) => events.push((
                            "drop",
                            format!("{} id={id} reason={reason}", msg.payload.kind()),
                        )),
                    }
                }
            }
            Payload::DictSync(d) => {
                self.peer_dictionaries.insert(m.origin, d.clone());
                events.push((
                    "sync-dict",
                    format!("from={} patterns={}", m.origin, d.len()),
                ));
            }
            Payload::TemplateSync(ids) => {
                self.peer_templates.insert(m.origin, ids.clone());
                events.push((
                    "sync-templates",
                    format!("from={} nodes={}", m.origin, ids.len()),
                ));
            }
            Payload::Query { query_id, keywords } => {
                let hits = self.answer(keywords, *query_id);
                events.push(("query", format!("q={query_id} hits={}", hits.len())));
                if m.origin == me {
                    self.query_results
                        .entry(*query_id)
                        .or_default()
                        .insert(me, hits);
                } else {
                    let id = self.fresh_id();
                    self.seen.insert(id);
                    let payload = Payload::QueryResult {
                        query_id: *query_id,
                        responder: me,
                        hits,
                    };
                    // A shortest path never exceeds the unit count in hops.
                    let msg = UnitMessage::new(
                        id,
                        m.cause,
                        payload,
                        Routing::Unicast(m.origin),
                        topology.len() as u64,
                    );
                    match route(&msg, me, topology) {
                        Ok(copies) => {
                            events.push(("send", format!("QueryResult id={id} to={}", m.origin)));
                            out.extend(copies);
                        }
                        Err(reason) => {
                            events.push(("drop", format!("QueryResult id={id} reason={reason}")))
                        }
                    }
                }
            }
            Payload::QueryResult {
                query_id,
                responder,
                hits,
            } => {
                self.query_results
                    .entry(*query_id)
                    .or_default()
                    .insert(*responder, hits.clone());
                events.push((
                    "result",
                    format!("q={query_id} from={responder} hits={}", hits.len()),
                ));
            }
            Payload::ConfirmSync { template_id, items } => {
                self.confirmed.insert((*template_id, items.clone()));
                events.push((
                    "confirm",
                    format!("template={template_id} items={}", join_items(items)),
                ));
            }
        }
    }
}

/// All units plus the messages in flight between rounds.
#[derive(Clone, Debug)]
pub struct World {
    topology: Topology,
    settings: SimSettings,
    units: Vec<Unit>,
    owners: BTreeMap<SegmentId, UnitId>,
    in_flight: Vec<(UnitId, UnitMessage)>,
    round: u64,
    transcript: Vec<String>,
    deliveries: BTreeMap<MessageId, u64>,
}

impl World {
    pub fn new(topology: Topology, settings: SimSettings) -> Self {
        let units = topology.units().map(Unit::new).collect();
        World {
            topology,
            settings,
            units,
            owners: BTreeMap::new(),
            in_flight: Vec::new(),
            round: 0,
            transcript: Vec::new(),
            deliveries: BTreeMap::new(),
        }
    }

    /// Unit `i` owns `parts[i]`.
    pub fn partitioned(
        topology: Topology,
        settings: SimSettings,
        parts: Vec<Vec<Segment>>,
    ) -> Result<Self, DpuError> {
        let mut w = World::new(topology, settings);
        for (u, part) in parts.into_iter().enumerate() {
            w.assign(u, part)?;
        }
        Ok(w)
    }

    /// Gives `unit` ownership of `segments` and stores them there.
    pub fn assign(&mut self, unit: UnitId, segments: Vec<Segment>) -> Result<(), DpuError> {
        if unit >= self.units.len() {
            return Err(DpuError::UnknownUnit(unit));
        }
        for s in &segments {
            if let Some(&owner) = self.owners.get(&s.segment_id) {
                return Err(DpuError::DuplicateOwner {
                    segment: s.segment_id,
                    owner,
                    claimant: unit,
                });
            }
        }
        let u = &mut self.units[unit];
        for s in segments {
            self.owners.insert(s.segment_id, unit);
            u.owned.insert(s.segment_id);
            u.segments.push(s);
        }
        u.segments.sort_by_key(|s| s.segment_id);
        Ok(())
    }

    /// Reserves segment ids for `unit` without data (for later ingest).
    pub fn claim(&mut self, unit: UnitId, ids: &[SegmentId]) -> Result<(), DpuError> {
        if unit >= self.units.len() {
            return Err(DpuError::UnknownUnit(unit));
        }
        for &id in ids {
            if let Some(&owner) = self.owners.get(&id) {
                return Err(DpuError::DuplicateOwner {
                    segment: id,
                    owner,
                    claimant: unit,
                });
            }
            self.owners.insert(id, unit);
            self.units[unit].owned.insert(id);
        }
        Ok(())
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn owner(&self, segment: SegmentId) -> Option<UnitId> {
        self.owners.get(&segment).copied()
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn transcript(&self) -> String {
        self.transcript.iter().map(|l| format!("{l}\n")).collect()
    }

    /// Network deliveries caused by an injected message.
    pub fn deliveries(&self, cause: MessageId) -> u64 {
        self.deliveries.get(&cause).copied().unwrap_or(0)
    }

    pub fn is_quiet(&self) -> bool {
        self.in_flight.is_empty() && self.units.iter().all(|u| u.mailbox.is_empty())
    }

    fn log(&mut self, unit: UnitId, event: &str, detail: &str) {
        self.transcript
            .push(format!("{}\t{unit}\t{event}\t{detail}", self.round));
    }

    /// Places a message in `unit`'s mailbox; it is handled next round.
    pub fn inject(
        &mut self,
        unit: UnitId,
        payload: Payload,
        routing: Routing,
    ) -> Result<MessageId, DpuError> {
        if unit >= self.units.len() {
            return Err(DpuError::UnknownUnit(unit));
        }
        let id = self.units[unit].fresh_id();
        let ttl = self.settings.ttl;
        self.log(
            unit,
            "inject",
            &format!("{} id={id} ttl={ttl}", payload.kind()),
        );
        self.units[unit]
            .mailbox
            .push_back(UnitMessage::new(id, id, payload, routing, ttl));
        Ok(id)
    }

    pub fn inject_query(
        &mut self,
        unit: UnitId,
        query_id: QueryId,
        keywords: Vec<Vec<u8>>,
    ) -> Result<MessageId, DpuError> {
        self.inject(unit, Payload::Query { query_id, keywords }, Routing::Flood)
    }

    /// Runs the local pipeline on every unit directly, in unit order.
    pub fn mine_all(&mut self) -> Result<(), crate::Error> {
        for u in 0..self.units.len() {
            let summary = self.units[u].mine(&self.settings)?;
            self.log(u, "mine", &summary);
        }
        Ok(())
    }

    /// One round: deliver in-flight messages, then let every unit drain its
    /// mailbox. Returns false (and changes nothing) when there is no work.
    pub fn step(&mut self) -> bool {
        if self.is_quiet() {
            return false;
        }
        self.round += 1;
        for (to, m) in std::mem::take(&mut self.in_flight) {
            *self.deliveries.entry(m.cause).or_insert(0) += 1;
            let detail = format!(
                "{} id={} from={} ttl={}",
                m.payload.kind(),
                m.id,
                m.sender,
                m.ttl
            );
            self.log(to, "deliver", &detail);
            self.units[to].mailbox.push_back(m);
        }
        let (topology, settings) = (&self.topology, &self.settings);
        let outputs = settings
            .exec
            .map_mut(&mut self.units, |u| u.drain(topology, settings));
        for (u, (events, out)) in outputs.into_iter().enumerate() {
            for (event, detail) in events {
                self.log(u, event, &detail);
            }
            self.in_flight.extend(out);
        }
        true
    }

    /// Steps until quiet or `max_rounds` rounds ran; returns rounds run.
    pub fn run(&mut self, max_rounds: u64) -> u64 {
        let mut n = 0;
        while n < max_rounds && self.step() {
            n += 1;
        }
        n
    }
}
