//! Hypothesis synthesis, checking, correction and rejection.
//!
//! A hypothesis is a concrete item list built from a template by putting a
//! never-seen synonym into one slot. Incoming structures confirm it (exact
//! match, the item is admitted into the slot), record near misses, or
//! leave it alone; near misses drive correction and fluctuation rejection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::generalization::{GeneralizationError, Hierarchy, Position};
use crate::ids::NodeId;
use crate::relevancy::{Scores, Subject};
use crate::structures::{join_items, mismatches, Item, StructureInstance};

pub type HypothesisId = u64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HypothesisError {
    #[error("hierarchy has no slotted templates")]
    NoTemplates,
    #[error("hypothesis {id}: {have} consistent observations, quorum is {need}")]
    NoQuorum {
        id: HypothesisId,
        have: usize,
        need: usize,
    },
    #[error("hypothesis {0} is not proposed")]
    NotLive(HypothesisId),
    #[error("unknown hypothesis {0}")]
    UnknownHypothesis(HypothesisId),
    #[error("invalid hypothesis config: {0}")]
    InvalidConfig(String),
    #[error("state machine violation: {0}")]
    Safety(String),
    #[error(transparent)]
    Generalization(#[from] GeneralizationError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum HypothesisState {
    Proposed,
    Confirmed,
    Rejected,
    Superseded,
}

impl HypothesisState {
    pub fn is_terminal(self) -> bool {
        self != HypothesisState::Proposed
    }
}

impl fmt::Display for HypothesisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HypothesisState::Proposed => "proposed",
            HypothesisState::Confirmed => "confirmed",
            HypothesisState::Rejected => "rejected",
            HypothesisState::Superseded => "superseded",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    pub window: u64,
    pub distance: usize,
    /// Differing positions with the observed item at each.
    pub mismatches: Vec<(usize, Item)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub hypothesis_id: HypothesisId,
    pub template_id: NodeId,
    pub items: Vec<Item>,
    pub injected_positions: BTreeSet<usize>,
    pub state: HypothesisState,
    pub distance_history: Vec<Observation>,
    pub born_window: u64,
    pub score: f64,
    pub predecessor: Option<HypothesisId>,
    pub successor: Option<HypothesisId>,
}

impl Hypothesis {
    /// `id<TAB>template<TAB>items<TAB>state<TAB>born<TAB>history`; history is
    /// `window/distance/pos=item,…` entries joined by `;`, or `-`.
    pub fn log_line(&self) -> String {
        let history = if self.distance_history.is_empty() {
            "-".to_string()
        } else {
            self.distance_history
                .iter()
                .map(|o| {
                    let mm: Vec<String> = o
                        .mismatches
                        .iter()
                        .map(|(p, i)| format!("{p}={i}"))
                        .collect();
                    format!("{}/{}/{}", o.window, o.distance, mm.join(","))
                })
                .collect::<Vec<_>>()
                .join(";")
        };
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            self.hypothesis_id,
            self.template_id,
            join_items(&self.items),
            self.state,
            self.born_window,
            history
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HypothesisConfig {
    /// Distance threshold θ for recording near misses.
    pub threshold: usize,
    /// Correction quorum c.
    pub quorum: usize,
    /// Fluctuation window w.
    pub fluctuation_window: usize,
    /// Timeout TTL_h in windows.
    pub ttl: u64,
    /// New hypotheses per cycle.
    pub budget: usize,
}

impl Default for HypothesisConfig {
    fn default() -> Self {
        HypothesisConfig {
            threshold: 1,
            quorum: 3,
            fluctuation_window: 5,
            ttl: 8,
            budget: 4,
        }
    }
}

impl HypothesisConfig {
    pub fn validate(&self) -> Result<(), HypothesisError> {
        let bad = |m: &str| Err(HypothesisError::InvalidConfig(m.into()));
        if self.threshold < 1 {
            return bad("threshold must be >= 1");
        }
        if self.quorum < 1 {
            return bad("quorum must be >= 1");
        }
        if self.fluctuation_window < 2 {
            return bad("fluctuation_window must be >= 2");
        }
        if self.ttl < 1 {
            return bad("ttl must be >= 1");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub id: HypothesisId,
    pub from: HypothesisState,
    pub to: HypothesisState,
    pub window: u64,
}

/// All hypotheses ever created plus the log of state transitions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HypothesisBook {
    hypotheses: BTreeMap<HypothesisId, Hypothesis>,
    transitions: Vec<Transition>,
    next_id: HypothesisId,
}

impl HypothesisBook {
    pub fn new() -> Self {
        HypothesisBook::default()
    }

    pub fn get(&self, id: HypothesisId) -> Result<&Hypothesis, HypothesisError> {
        self.hypotheses
            .get(&id)
            .ok_or(HypothesisError::UnknownHypothesis(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Hypothesis> {
        self.hypotheses.values()
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn live(&self) -> impl Iterator<Item = &Hypothesis> {
        self.hypotheses
            .values()
            .filter(|h| h.state == HypothesisState::Proposed)
    }

    fn add(&mut self, mut h: Hypothesis) -> HypothesisId {
        h.hypothesis_id = self.next_id;
        self.next_id += 1;
        let id = h.hypothesis_id;
        self.hypotheses.insert(id, h);
        id
    }

    fn transition(
        &mut self,
        id: HypothesisId,
        to: HypothesisState,
        window: u64,
    ) -> Result<(), HypothesisError> {
        let h = self
            .hypotheses
            .get_mut(&id)
            .ok_or(HypothesisError::UnknownHypothesis(id))?;
        if h.state != HypothesisState::Proposed {
            return Err(HypothesisError::NotLive(id));
        }
        self.transitions.push(Transition {
            id,
            from: h.state,
            to,
            window,
        });
        h.state = to;
        Ok(())
    }

    /// Adds a hypothesis directly (for scripted scenarios and replays).
    pub fn propose(
        &mut self,
        template_id: NodeId,
        items: Vec<Item>,
        injected_positions: BTreeSet<usize>,
        born_window: u64,
        score: f64,
    ) -> HypothesisId {
        self.add(Hypothesis {
            hypothesis_id: 0,
            template_id,
            items,
            injected_positions,
            state: HypothesisState::Proposed,
            distance_history: Vec::new(),
            born_window,
            score,
            predecessor: None,
            successor: None,
        })
    }

    /// Log lines for every hypothesis, by id.
    pub fn export(&self) -> String {
        self.hypotheses.values().map(Hypothesis::log_line).collect()
    }

    /// Replays the transition log from all-`Proposed` and checks that it
    /// reproduces the current states without leaving a terminal state, and
    /// that every superseded hypothesis has exactly one successor.
    pub fn verify_safety(&self) -> Result<(), HypothesisError> {
        let violation = |m: String| Err(HypothesisError::Safety(m));
        let mut states: BTreeMap<HypothesisId, HypothesisState> = self
            .hypotheses
            .keys()
            .map(|&id| (id, HypothesisState::Proposed))
            .collect();
        for t in &self.transitions {
            let Some(s) = states.get_mut(&t.id) else {
                return violation(format!("transition for unknown hypothesis {}", t.id));
            };
            if *s != t.from || s.is_terminal() || !t.to.is_terminal() {
                return violation(format!(
                    "hypothesis {}: {} -> {} from {}",
                    t.id, t.from, t.to, s
                ));
            }
            *s = t.to;
        }
        for h in self.hypotheses.values() {
            if states[&h.hypothesis_id] != h.state {
                return violation(format!(
                    "hypothesis {} state differs from replay",
                    h.hypothesis_id
                ));
            }
            let successors = self
                .hypotheses
                .values()
                .filter(|s| s.predecessor == Some(h.hypothesis_id))
                .count();
            let expected = usize::from(h.state == HypothesisState::Superseded);
            if successors != expected || (expected == 1) != h.successor.is_some() {
                return violation(format!(
                    "hypothesis {} has {successors} successors",
                    h.hypothesis_id
                ));
            }
        }
        Ok(())
    }
}

struct Candidate {
    score: f64,
    template: NodeId,
    position: usize,
    item: Item,
    items: Vec<Item>,
}

fn item_relevancy(scores: &Scores, item: Item) -> f64 {
    item.pattern_id()
        .map_or(0.0, |id| scores.score(Subject::Pattern(id)))
}

/// Proposes up to `budget` new hypotheses, ranked by
/// `sqrt(template relevancy × candidate relevancy)` descending, then by
/// template id, position and item. A candidate for slot `V` is any member
/// of another slot `V′` overlapping `V` that is not itself in `V`; the other
/// slots take their most frequent member. Statements equal to a leaf or to
/// any hypothesis already in the book are skipped.
pub fn synthesize(
    book: &mut HypothesisBook,
    hierarchy: &Hierarchy,
    scores: &Scores,
    config: &HypothesisConfig,
    window: u64,
) -> Result<Vec<HypothesisId>, HypothesisError> {
    let slots: Vec<(NodeId, usize, &BTreeMap<Item, u64>)> = hierarchy
        .templates()
        .flat_map(|n| {
            n.positions
                .iter()
                .enumerate()
                .filter_map(move |(p, pos)| match pos {
                    Position::Slot(s) => Some((n.node_id, p, &s.vector)),
                    Position::Literal(_) => None,
                })
        })
        .collect();
    if slots.is_empty() {
        return Err(HypothesisError::NoTemplates);
    }

    let mut seen: BTreeSet<Vec<Item>> = hierarchy.leaves().filter_map(|l| l.items()).collect();
    seen.extend(book.iter().map(|h| h.items.clone()));

    let mut candidates = Vec::new();
    for &(node_id, p, v) in &slots {
        let node = hierarchy.get(node_id)?;
        let base: Vec<Item> = node
            .positions
            .iter()
            .map(|pos| match pos {
                Position::Literal(i) => *i,
                Position::Slot(s) => s.most_frequent().expect("slots are non-empty"),
            })
            .collect();
        let template_rel = scores.score(Subject::Node(node_id));
        let mut injected: BTreeSet<Item> = BTreeSet::new();
        for &(other_id, q, w) in &slots {
            if (other_id, q) == (node_id, p) || !w.keys().any(|k| v.contains_key(k)) {
                continue;
            }
            injected.extend(w.keys().filter(|k| !v.contains_key(k)));
        }
        for x in injected {
            let mut items = base.clone();
            items[p] = x;
            candidates.push(Candidate {
                score: (template_rel * item_relevancy(scores, x)).sqrt(),
                template: node_id,
                position: p,
                item: x,
                items,
            });
        }
    }
    candidates.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.template.cmp(&b.template))
            .then(a.position.cmp(&b.position))
            .then(a.item.cmp(&b.item))
    });

    let mut out = Vec::new();
    for c in candidates {
        if out.len() >= config.budget {
            break;
        }
        if !seen.insert(c.items.clone()) {
            continue;
        }
        out.push(book.propose(
            c.template,
            c.items,
            BTreeSet::from([c.position]),
            window,
            c.score,
        ));
    }
    Ok(out)
}

/// Compares each incoming instance, in order, against every live hypothesis
/// of equal arity born no later than the instance's window. An exact match
/// confirms and admits the injected items into the template; a near miss
/// within the threshold is recorded.
pub fn check(
    book: &mut HypothesisBook,
    hierarchy: &mut Hierarchy,
    incoming: &[StructureInstance],
    config: &HypothesisConfig,
) -> Result<(), HypothesisError> {
    for s in incoming {
        let live: Vec<HypothesisId> = book
            .live()
            .filter(|h| h.items.len() == s.arity() && h.born_window <= s.timestamp)
            .map(|h| h.hypothesis_id)
            .collect();
        for id in live {
            let h = &book.hypotheses[&id];
            let diff = mismatches(&h.items, &s.items).expect("arity checked");
            if diff.is_empty() {
                let (template, items, injected) =
                    (h.template_id, h.items.clone(), h.injected_positions.clone());
                book.transition(id, HypothesisState::Confirmed, s.timestamp)?;
                for p in injected {
                    if hierarchy.contains(template) {
                        hierarchy.admit(template, p, items[p])?;
                    }
                }
            } else if diff.len() <= config.threshold {
                let obs = Observation {
                    window: s.timestamp,
                    distance: diff.len(),
                    mismatches: diff.iter().map(|&p| (p, s.items[p])).collect(),
                };
                book.hypotheses
                    .get_mut(&id)
                    .expect("live id")
                    .distance_history
                    .push(obs);
            }
        }
    }
    Ok(())
}

/// Replaces a live hypothesis by a successor that takes the majority
/// observed value at the most frequently mismatched position. Needs at
/// least `quorum` observations at that position.
pub fn correct(
    book: &mut HypothesisBook,
    hierarchy: &Hierarchy,
    id: HypothesisId,
    config: &HypothesisConfig,
    window: u64,
) -> Result<HypothesisId, HypothesisError> {
    let h = book.get(id)?;
    if h.state != HypothesisState::Proposed {
        return Err(HypothesisError::NotLive(id));
    }
    let mut per_position: BTreeMap<usize, Vec<Item>> = BTreeMap::new();
    for o in &h.distance_history {
        for &(p, item) in &o.mismatches {
            per_position.entry(p).or_default().push(item);
        }
    }
    let best = per_position
        .iter()
        .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(a.0)));
    let Some((&position, observed)) = best.filter(|(_, obs)| obs.len() >= config.quorum) else {
        let have = best.map_or(0, |(_, obs)| obs.len());
        return Err(HypothesisError::NoQuorum {
            id,
            have,
            need: config.quorum,
        });
    };

    // Majority value; ties go to the value observed first.
    let mut tally: Vec<(Item, usize)> = Vec::new();
    for &item in observed {
        match tally.iter_mut().find(|(i, _)| *i == item) {
            Some((_, n)) => *n += 1,
            None => tally.push((item, 1)),
        }
    }
    let top = tally.iter().map(|(_, n)| *n).max().expect("quorum >= 1");
    let value = tally.iter().find(|(_, n)| *n == top).expect("max exists").0;

    let mut items = h.items.clone();
    items[position] = value;
    let template = hierarchy.get(h.template_id)?;
    let injected: BTreeSet<usize> = template
        .positions
        .iter()
        .zip(&items)
        .enumerate()
        .filter(|(_, (p, i))| !p.contains(**i))
        .map(|(k, _)| k)
        .collect();
    let (template_id, score) = (h.template_id, h.score);

    book.transition(id, HypothesisState::Superseded, window)?;
    let successor = book.add(Hypothesis {
        hypothesis_id: 0,
        template_id,
        items,
        injected_positions: injected,
        state: HypothesisState::Proposed,
        distance_history: Vec::new(),
        born_window: window,
        score,
        predecessor: Some(id),
        successor: None,
    });
    book.hypotheses.get_mut(&id).expect("predecessor").successor = Some(successor);
    Ok(successor)
}

/// True when the last `w` recorded distances never strictly lower the
/// running minimum.
pub fn is_fluctuating(distances: &[usize], w: usize) -> bool {
    let n = distances.len();
    if n < w {
        return false;
    }
    // 1-based index i improves when d_i < min(d_1..d_{i-1}).
    let mut running = Vec::with_capacity(n);
    let mut m = usize::MAX;
    for &d in distances {
        m = m.min(d);
        running.push(m);
    }
    let from = 2.max(n + 1 - w);
    !(from..=n).any(|i| distances[i - 1] < running[i - 2])
}

/// Rejects fluctuating hypotheses and those with no near miss after more
/// than `ttl` windows. Returns the rejected ids.
pub fn lifecycle_scan(
    book: &mut HypothesisBook,
    current_window: u64,
    config: &HypothesisConfig,
) -> Vec<HypothesisId> {
    let doomed: Vec<HypothesisId> = book
        .live()
        .filter(|h| {
            let d: Vec<usize> = h.distance_history.iter().map(|o| o.distance).collect();
            is_fluctuating(&d, config.fluctuation_window)
                || (d.is_empty() && current_window.saturating_sub(h.born_window) > config.ttl)
        })
        .map(|h| h.hypothesis_id)
        .collect();
    for &id in &doomed {
        book.transition(id, HypothesisState::Rejected, current_window)
            .expect("live hypothesis");
    }
    doomed
}

/// Tries to correct every live hypothesis; returns (predecessor, successor)
/// pairs for those that reached quorum.
pub fn correct_all(
    book: &mut HypothesisBook,
    hierarchy: &Hierarchy,
    config: &HypothesisConfig,
    window: u64,
) -> Vec<(HypothesisId, HypothesisId)> {
    let live: Vec<HypothesisId> = book.live().map(|h| h.hypothesis_id).collect();
    live.into_iter()
        .filter_map(|id| {
            correct(book, hierarchy, id, config, window)
                .ok()
                .map(|s| (id, s))
        })
        .collect()
}
