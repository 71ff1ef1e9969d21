//! Simulated matrix of share-nothing processing units.
//!
//! Each unit owns a disjoint set of segments, runs the pipeline over them
//! locally and talks to its neighbors only through mailboxes. Messages are
//! flooded with a ttl and a visited set, or unicast along a shortest path.
//! [`World::step`] runs one logical round: units are processed in id order,
//! each draining its mailbox first-in first-out, and everything they send
//! is delivered at the start of the next round. Every action is written to
//! a transcript of `round<TAB>unit<TAB>event<TAB>detail` lines.

mod message;
mod topology;
mod world;

use thiserror::Error;

pub use message::{flood_reach, route, DropReason, Hit, MessageId, Payload, Routing, UnitMessage};
pub use topology::{Shape, Topology, TopologyConfig};
pub use world::{SimSettings, Unit, World};

use crate::cognition::Dictionary;
use crate::generalization::{build_hierarchy_with, Hierarchy};
use crate::store::{Segment, SegmentId};
use crate::structures::{merge_groups, StructureGroups};

pub type UnitId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DpuError {
    #[error("topology: {0}")]
    Topology(String),
    #[error("segment {segment} already owned by unit {owner}, claimed by unit {claimant}")]
    DuplicateOwner {
        segment: SegmentId,
        owner: UnitId,
        claimant: UnitId,
    },
    #[error("unknown unit {0}")]
    UnknownUnit(UnitId),
}

/// Union by pattern id: counts add, first seen is the minimum, last seen
/// the maximum.
pub fn sync_dictionaries(a: &Dictionary, b: &Dictionary) -> Dictionary {
    a.merge(b)
}

/// Dictionaries folded in unit order and a hierarchy rebuilt from the union
/// of every unit's leaf structures.
pub fn global_view(world: &World) -> (Dictionary, Hierarchy) {
    let mut dictionary = Dictionary::new();
    let mut groups = StructureGroups::new();
    for u in world.units() {
        dictionary = sync_dictionaries(&dictionary, &u.dictionary);
        merge_groups(&mut groups, &u.groups);
    }
    (
        dictionary,
        build_hierarchy_with(&groups, crate::Exec::default()),
    )
}

/// Splits segments into `n` contiguous runs whose sizes differ by at most one.
pub fn contiguous_split(segments: &[Segment], n: usize) -> Vec<Vec<Segment>> {
    let len = segments.len();
    (0..n)
        .map(|i| segments[i * len / n..(i + 1) * len / n].to_vec())
        .collect()
}
