//! Keyword queries planned against the hierarchy.
//!
//! Each query resolves its keywords to pattern ids and becomes a
//! conjunctive filter: a leaf answers it when every requirement is met by
//! one of the leaf's items. Queries sharing a topmost candidate template
//! are merged into one generalized request that scans the template's leaves
//! once and post-filters per query.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::cognition::Dictionary;
use crate::generalization::{GeneralizationError, Hierarchy, Position};
use crate::ids::NodeId;
use crate::relevancy::{Scores, Subject};
use crate::store::SegmentId;
use crate::structures::{join_items, Item, StructureInstance};

pub type QueryId = u64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("query {0} has no keywords")]
    NoKeywords(QueryId),
    #[error("line {0}: unterminated quote")]
    UnterminatedQuote(usize),
    #[error(transparent)]
    Generalization(#[from] GeneralizationError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    /// Conjunctive containment of the resolved keywords.
    #[default]
    Exact,
    /// Each keyword also accepts its synonyms: members of any slot vector
    /// that contains it.
    Broaden,
    /// Any unresolved keyword empties the result.
    Narrow,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub query_id: QueryId,
    pub keywords: BTreeSet<Vec<u8>>,
    pub resolved: BTreeSet<Item>,
    pub unresolved: BTreeSet<Vec<u8>>,
    pub received_window: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plan {
    pub query: Query,
    /// One accepted-item set per resolved keyword; all must be met.
    pub requirements: Vec<BTreeSet<Item>>,
    pub candidates: BTreeSet<NodeId>,
}

impl Plan {
    pub fn accepts(&self, items: &[Item]) -> bool {
        !self.requirements.is_empty()
            && self
                .requirements
                .iter()
                .all(|r| items.iter().any(|i| r.contains(i)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneralizedRequest {
    pub template_id: NodeId,
    pub member_queries: Vec<QueryId>,
    pub priority: usize,
}

fn synonyms(hierarchy: &Hierarchy, item: Item) -> BTreeSet<Item> {
    let mut out = BTreeSet::from([item]);
    for n in hierarchy.templates() {
        for p in &n.positions {
            if let Position::Slot(s) = p {
                if s.contains(item) {
                    out.extend(s.members());
                }
            }
        }
    }
    out
}

pub fn plan(
    query_id: QueryId,
    keywords: &[Vec<u8>],
    received_window: u64,
    dictionary: &Dictionary,
    hierarchy: &Hierarchy,
    mode: Mode,
) -> Result<Plan, QueryError> {
    if keywords.is_empty() {
        return Err(QueryError::NoKeywords(query_id));
    }
    let keywords: BTreeSet<Vec<u8>> = keywords.iter().cloned().collect();
    let mut resolved = BTreeSet::new();
    let mut unresolved = BTreeSet::new();
    for k in &keywords {
        match dictionary.by_bytes(k) {
            Some(p) => {
                resolved.insert(Item::Pattern(p.pattern_id));
            }
            None => {
                unresolved.insert(k.clone());
            }
        }
    }
    let query = Query {
        query_id,
        keywords,
        resolved,
        unresolved,
        received_window,
    };
    if mode == Mode::Narrow && !query.unresolved.is_empty() {
        return Ok(Plan {
            query,
            requirements: Vec::new(),
            candidates: BTreeSet::new(),
        });
    }

    let requirements: Vec<BTreeSet<Item>> = query
        .resolved
        .iter()
        .map(|&k| {
            if mode == Mode::Broaden {
                synonyms(hierarchy, k)
            } else {
                BTreeSet::from([k])
            }
        })
        .collect();
    let wanted: BTreeSet<Item> = requirements.iter().flatten().copied().collect();
    let candidates = hierarchy
        .nodes()
        .filter(|n| wanted.iter().any(|&i| n.contains_item(i)))
        .map(|n| n.node_id)
        .collect();
    Ok(Plan {
        query,
        requirements,
        candidates,
    })
}

/// One request per topmost candidate template (a candidate without
/// parents); a query joins every request whose template is among its
/// topmost candidates. Sorted by priority descending, then by the members'
/// summed keyword relevancy descending, then by template id.
pub fn merge_requests(
    plans: &[Plan],
    hierarchy: &Hierarchy,
    scores: &Scores,
) -> Vec<GeneralizedRequest> {
    let mut groups: BTreeMap<NodeId, Vec<QueryId>> = BTreeMap::new();
    for p in plans {
        for &c in &p.candidates {
            let node = hierarchy
                .get(c)
                .expect("candidates come from the hierarchy");
            if node.parents.iter().all(|par| !p.candidates.contains(par)) {
                groups.entry(c).or_default().push(p.query.query_id);
            }
        }
    }
    let relevancy: BTreeMap<QueryId, f64> = plans
        .iter()
        .map(|p| {
            let r = p
                .query
                .resolved
                .iter()
                .filter_map(|i| i.pattern_id())
                .map(|id| scores.score(Subject::Pattern(id)))
                .sum();
            (p.query.query_id, r)
        })
        .collect();
    let mut out: Vec<(f64, GeneralizedRequest)> = groups
        .into_iter()
        .map(|(template_id, member_queries)| {
            let rel = member_queries.iter().map(|q| relevancy[q]).sum();
            (
                rel,
                GeneralizedRequest {
                    template_id,
                    priority: member_queries.len(),
                    member_queries,
                },
            )
        })
        .collect();
    out.sort_by(|a, b| {
        b.1.priority
            .cmp(&a.1.priority)
            .then(b.0.total_cmp(&a.0))
            .then(a.1.template_id.cmp(&b.1.template_id))
    });
    out.into_iter().map(|(_, r)| r).collect()
}

/// Scans the template's leaves once and post-filters for each member.
pub fn execute(
    request: &GeneralizedRequest,
    plans: &BTreeMap<QueryId, &Plan>,
    hierarchy: &Hierarchy,
) -> Result<BTreeMap<QueryId, Vec<StructureInstance>>, QueryError> {
    let leaves: Vec<_> = hierarchy
        .leaves_under(request.template_id)?
        .into_iter()
        .map(|l| hierarchy.get(l))
        .collect::<Result<_, _>>()?;
    let mut out = BTreeMap::new();
    for q in &request.member_queries {
        let plan = plans[q];
        let mut hits: Vec<StructureInstance> = leaves
            .iter()
            .filter(|l| plan.accepts(&l.items().expect("leaves are concrete")))
            .flat_map(|l| l.instances.iter().cloned())
            .collect();
        hits.sort_by_key(|i| (i.timestamp, i.origin));
        out.insert(*q, hits);
    }
    Ok(out)
}

/// Plans every query, executes the merged requests in priority order and
/// returns the deduplicated per-query results (every query is present).
pub fn run(
    plans: &[Plan],
    hierarchy: &Hierarchy,
    scores: &Scores,
) -> Result<BTreeMap<QueryId, Vec<StructureInstance>>, QueryError> {
    let by_id: BTreeMap<QueryId, &Plan> = plans.iter().map(|p| (p.query.query_id, p)).collect();
    let mut merged: BTreeMap<QueryId, BTreeSet<StructureInstance>> =
        by_id.keys().map(|&q| (q, BTreeSet::new())).collect();
    for req in merge_requests(plans, hierarchy, scores) {
        for (q, hits) in execute(&req, &by_id, hierarchy)? {
            merged.get_mut(&q).expect("member of plans").extend(hits);
        }
    }
    Ok(merged
        .into_iter()
        .map(|(q, set)| {
            let mut v: Vec<_> = set.into_iter().collect();
            v.sort_by_key(|i| (i.timestamp, i.origin));
            (q, v)
        })
        .collect())
}

/// `query_id<TAB>segment_id<TAB>offset<TAB>items` per result.
pub fn export(results: &BTreeMap<QueryId, Vec<StructureInstance>>) -> String {
    let mut out = String::new();
    for (q, hits) in results {
        for h in hits {
            let (seg, off): (SegmentId, u64) = h.origin;
            let _ = writeln!(out, "{q}\t{seg}\t{off}\t{}", join_items(&h.items));
        }
    }
    out
}

/// One query per non-blank line; keywords split on spaces, double quotes
/// group a keyword containing spaces, `\"` and `\\` escape inside quotes.
pub fn parse_queries(text: &str) -> Result<Vec<Vec<Vec<u8>>>, QueryError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let words = split_line(line).ok_or(QueryError::UnterminatedQuote(n + 1))?;
        if !words.is_empty() {
            out.push(words);
        }
    }
    Ok(out)
}

fn split_line(line: &str) -> Option<Vec<Vec<u8>>> {
    let mut words = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        while chars.peek() == Some(&' ') {
            chars.next();
        }
        let Some(&c) = chars.peek() else {
            return Some(words);
        };
        let mut word = String::new();
        if c == '"' {
            chars.next();
            loop {
                match chars.next()? {
                    '"' => break,
                    '\\' => word.push(chars.next()?),
                    ch => word.push(ch),
                }
            }
        } else {
            while let Some(&ch) = chars.peek() {
                if ch == ' ' {
                    break;
                }
                word.push(ch);
                chars.next();
            }
        }
        words.push(word.into_bytes());
    }
}
