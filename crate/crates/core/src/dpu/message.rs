use std::collections::BTreeSet;
use std::fmt;

use super::topology::Topology;
use super::UnitId;
use crate::cognition::Dictionary;
use crate::ids::NodeId;
use crate::queries::QueryId;
use crate::store::Segment;
use crate::structures::Item;

/// Unique per message: the originating unit and its sequence number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MessageId {
    pub origin: UnitId,
    pub seq: u64,
}

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.origin, self.seq)
    }
}

/// One query hit: segment, offset, rendered items.
pub type Hit = (u64, u64, String);

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    /// Segments for the receiving unit to store (owner only).
    Ingest(Vec<Segment>),
    /// Re-run the local pipeline and publish the results.
    MineRequest,
    DictSync(Dictionary),
    TemplateSync(BTreeSet<NodeId>),
    Query {
        query_id: QueryId,
        keywords: Vec<Vec<u8>>,
    },
    QueryResult {
        query_id: QueryId,
        responder: UnitId,
        hits: Vec<Hit>,
    },
    ConfirmSync {
        template_id: NodeId,
        items: Vec<Item>,
    },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Ingest(_) => "Ingest",
            Payload::MineRequest => "MineRequest",
            Payload::DictSync(_) => "DictSync",
            Payload::TemplateSync(_) => "TemplateSync",
            Payload::Query { .. } => "Query",
            Payload::QueryResult { .. } => "QueryResult",
            Payload::ConfirmSync { .. } => "ConfirmSync",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Routing {
    /// Forwarded to every unvisited neighbor.
    Flood,
    /// Forwarded along a shortest path to one unit.
    Unicast(UnitId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnitMessage {
    pub id: MessageId,
    /// Id of the injected message this one descends from.
    pub cause: MessageId,
    pub payload: Payload,
    pub routing: Routing,
    pub ttl: u64,
    pub visited: BTreeSet<UnitId>,
    pub origin: UnitId,
    pub sender: UnitId,
}

impl UnitMessage {
    pub fn new(
        id: MessageId,
        cause: MessageId,
        payload: Payload,
        routing: Routing,
        ttl: u64,
    ) -> Self {
        UnitMessage {
            id,
            cause,
            payload,
            routing,
            ttl,
            visited: BTreeSet::from([id.origin]),
            origin: id.origin,
            sender: id.origin,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropReason {
    Ttl,
    Visited,
    Unreachable,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::Ttl => "ttl",
            DropReason::Visited => "visited",
            DropReason::Unreachable => "unreachable",
        })
    }
}

/// Copies of `message` to send from unit `at`, each with `ttl − 1`.
///
/// Flooding targets the neighbors not yet in `visited`; the copies carry
/// `visited ∪ {at} ∪ targets`, so no two branches of a flood target the
/// same unit twice through the same frontier. Unicast takes the first hop
/// of a shortest path.
pub fn route(
    message: &UnitMessage,
    at: UnitId,
    topology: &Topology,
) -> Result<Vec<(UnitId, UnitMessage)>, DropReason> {
    if message.ttl == 0 {
        return Err(DropReason::Ttl);
    }
    let targets: Vec<UnitId> = match message.routing {
        Routing::Flood => topology
            .neighbors(at)
            .iter()
            .copied()
            .filter(|v| *v != at && !message.visited.contains(v))
            .collect(),
        Routing::Unicast(target) => match topology.next_hop(at, target) {
            Some(v) if !message.visited.contains(&v) => vec![v],
            Some(_) => return Err(DropReason::Visited),
            None => return Err(DropReason::Unreachable),
        },
    };
    if targets.is_empty() {
        return Err(DropReason::Visited);
    }
    let mut visited = message.visited.clone();
    visited.insert(at);
    visited.extend(targets.iter().copied());
    Ok(targets
        .into_iter()
        .map(|v| {
            let mut m = message.clone();
            m.ttl -= 1;
            m.sender = at;
            m.visited = visited.clone();
            (v, m)
        })
        .collect())
}

/// Units a flood from `origin` with the given ttl reaches (origin excluded),
/// following the same forwarding and per-unit dedupe as the world.
pub fn flood_reach(topology: &Topology, origin: UnitId, ttl: u64) -> BTreeSet<UnitId> {
    let id = MessageId { origin, seq: 0 };
    let msg = UnitMessage::new(id, id, Payload::MineRequest, Routing::Flood, ttl);
    let mut reached = BTreeSet::new();
    let mut frontier = route(&msg, origin, topology).unwrap_or_default();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for (u, m) in frontier {
            if u == origin || !reached.insert(u) {
                continue;
            }
            next.extend(route(&m, u, topology).unwrap_or_default());
        }
        frontier = next;
    }
    reached
}
