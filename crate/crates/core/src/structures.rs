//! Ordered structures over the token stream.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::cognition::{Dictionary, StreamLayout, Token, TokenKind};
use crate::ids::PatternId;
use crate::store::SegmentId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StructureError {
    #[error("window arity must be >= 2, got {0}")]
    BadArity(usize),
    #[error("delimiter {0} is not a dictionary pattern")]
    UnknownDelimiter(Item),
    #[error("arity mismatch: {0} vs {1}")]
    ArityMismatch(usize, usize),
}

/// One position of a structure: a pattern occurrence or a literal gap byte.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Item {
    Pattern(PatternId),
    Literal(u8),
}

impl Item {
    /// Inverse of `Display`: a 16-digit pattern id or `lit:xx`.
    pub fn parse(s: &str) -> Option<Item> {
        match s.strip_prefix("lit:") {
            Some(h) if h.len() == 2 => u8::from_str_radix(h, 16).ok().map(Item::Literal),
            Some(_) => None,
            None => PatternId::from_hex(s).map(Item::Pattern),
        }
    }

    pub fn pattern_id(self) -> Option<PatternId> {
        match self {
            Item::Pattern(id) => Some(id),
            Item::Literal(_) => None,
        }
    }
}

impl From<TokenKind> for Item {
    fn from(k: TokenKind) -> Self {
        match k {
            TokenKind::Pattern(id) => Item::Pattern(id),
            TokenKind::Gap(b) => Item::Literal(b),
        }
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Item::Pattern(id) => write!(f, "{id}"),
            Item::Literal(b) => write!(f, "lit:{b:02x}"),
        }
    }
}

impl fmt::Debug for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

pub(crate) fn join_items(items: &[Item]) -> String {
    items
        .iter()
        .map(Item::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StructureInstance {
    pub items: Vec<Item>,
    /// Window index of the first token.
    pub timestamp: u64,
    pub origin: (SegmentId, u64),
}

impl StructureInstance {
    pub fn arity(&self) -> usize {
        self.items.len()
    }

    pub fn key(&self) -> StructureKey {
        StructureKey(self.items.clone())
    }
}

/// The item list alone; equal items mean equal keys.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StructureKey(pub Vec<Item>);

impl StructureKey {
    pub fn arity(&self) -> usize {
        self.0.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtractMode {
    /// Every run of `k` consecutive pattern tokens, stride 1. Gap tokens
    /// break runs and never appear in window structures.
    Window(usize),
    /// Maximal token runs between occurrences of the delimiter item; gaps
    /// are kept as literal items. Runs shorter than 2 are dropped.
    Delimiter(Item),
}

impl Default for ExtractMode {
    fn default() -> Self {
        ExtractMode::Window(3)
    }
}

pub fn extract(
    tokens: &[Token],
    mode: ExtractMode,
    dictionary: &Dictionary,
    layout: &StreamLayout,
) -> Result<Vec<StructureInstance>, StructureError> {
    let instance = |run: &[Token]| StructureInstance {
        items: run.iter().map(|t| Item::from(t.kind)).collect(),
        timestamp: run[0].window_index,
        origin: layout.locate(run[0].offset),
    };

    let mut out = Vec::new();
    match mode {
        ExtractMode::Window(k) => {
            if k < 2 {
                return Err(StructureError::BadArity(k));
            }
            for run in tokens.split(Token::is_gap) {
                out.extend(run.windows(k).map(instance));
            }
        }
        ExtractMode::Delimiter(delim) => {
            if let Item::Pattern(id) = delim {
                if !dictionary.contains(id) {
                    return Err(StructureError::UnknownDelimiter(delim));
                }
            }
            for run in tokens.split(|t| Item::from(t.kind) == delim) {
                if run.len() >= 2 {
                    out.push(instance(run));
                }
            }
        }
    }
    Ok(out)
}

/// Positional mismatch count between two equal-arity item lists.
pub fn distance(a: &[Item], b: &[Item]) -> Result<usize, StructureError> {
    Ok(mismatches(a, b)?.len())
}

/// Positions at which two equal-arity item lists differ.
pub fn mismatches(a: &[Item], b: &[Item]) -> Result<Vec<usize>, StructureError> {
    if a.len() != b.len() {
        return Err(StructureError::ArityMismatch(a.len(), b.len()));
    }
    Ok(a.iter()
        .zip(b)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, _)| i)
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StructureGroup {
    pub count: u64,
    /// Timestamp-ordered (stable for equal timestamps).
    pub instances: Vec<StructureInstance>,
}

pub type StructureGroups = BTreeMap<StructureKey, StructureGroup>;

pub fn dedupe(instances: impl IntoIterator<Item = StructureInstance>) -> StructureGroups {
    let mut groups = StructureGroups::new();
    for inst in instances {
        let g = groups.entry(inst.key()).or_default();
        g.count += 1;
        g.instances.push(inst);
    }
    for g in groups.values_mut() {
        g.instances.sort_by_key(|i| i.timestamp);
    }
    groups
}

/// Folds `other` into `groups`, keeping each group's instances timestamp-ordered.
pub fn merge_groups(groups: &mut StructureGroups, other: &StructureGroups) {
    for (key, g) in other {
        let mine = groups.entry(key.clone()).or_default();
        mine.count += g.count;
        mine.instances.extend(g.instances.iter().cloned());
        mine.instances.sort_by_key(|i| (i.timestamp, i.origin));
    }
}

/// `arity<TAB>item1,item2,…<TAB>count`, lines sorted lexicographically.
pub fn export(groups: &StructureGroups) -> String {
    let mut lines: Vec<String> = groups
        .iter()
        .map(|(k, g)| format!("{}\t{}\t{}\n", k.arity(), join_items(&k.0), g.count))
        .collect();
    lines.sort();
    lines.concat()
}
