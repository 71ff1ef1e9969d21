//! Template generalization and the notion hierarchy.
//!
//! Two equal-arity nodes merge when at most one position holds two
//! different literals; that position becomes a slot holding both. Slots
//! absorb literals and union with other slots, with counts adding.
//!
//! [`build_hierarchy`] runs a worklist per arity class in canonical order
//! (support descending, then shape) and repeatedly merges the first
//! mergeable pair until no pair merges. A merge result whose level equals an
//! operand's level replaces that operand and adopts its children; otherwise
//! the operand becomes a child. Every created node is also linked directly
//! to each leaf of its class that it strictly matches, so a node is an
//! ancestor of a leaf exactly when it matches the leaf's items.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::exec::Exec;
use crate::ids::{content_hash, NodeId};
use crate::structures::{Item, StructureGroup, StructureGroups, StructureInstance, StructureKey};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeneralizationError {
    #[error("arity mismatch: {0} vs {1}")]
    ArityMismatch(usize, usize),
    #[error("not mergeable: {0} literal disagreements")]
    NotMergeable(usize),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("position {position} out of range for arity {arity}")]
    BadPosition { position: usize, arity: usize },
    #[error("position {position} of node {node} is a literal, not a slot")]
    NotASlot { node: NodeId, position: usize },
}

/// A keyword vector: observed substitutes for one position, with counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Slot {
    pub vector: BTreeMap<Item, u64>,
}

impl Slot {
    pub fn contains(&self, item: Item) -> bool {
        self.vector.contains_key(&item)
    }

    pub fn members(&self) -> impl Iterator<Item = Item> + '_ {
        self.vector.keys().copied()
    }

    fn add(&mut self, item: Item, count: u64) {
        *self.vector.entry(item).or_insert(0) += count;
    }

    /// Most frequent member; ties go to the smallest item.
    pub fn most_frequent(&self) -> Option<Item> {
        self.vector
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&item, _)| item)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Position {
    Literal(Item),
    Slot(Slot),
}

impl Position {
    pub fn contains(&self, item: Item) -> bool {
        match self {
            Position::Literal(l) => *l == item,
            Position::Slot(s) => s.contains(item),
        }
    }

    pub fn as_slot(&self) -> Option<&Slot> {
        match self {
            Position::Slot(s) => Some(s),
            Position::Literal(_) => None,
        }
    }

    fn export(&self) -> String {
        match self {
            Position::Literal(item) => item.to_string(),
            Position::Slot(s) => {
                let members: Vec<String> =
                    s.vector.iter().map(|(i, c)| format!("{i}:{c}")).collect();
                format!("slot:{{{}}}", members.join(","))
            }
        }
    }
}

/// Canonical, count-free form of a position used for ordering and ids.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum ShapePos {
    Lit(Item),
    Slot(Vec<Item>),
}

fn shape(positions: &[Position]) -> Vec<ShapePos> {
    positions
        .iter()
        .map(|p| match p {
            Position::Literal(i) => ShapePos::Lit(*i),
            Position::Slot(s) => ShapePos::Slot(s.members().collect()),
        })
        .collect()
}

/// Content hash of the shape: positions with sorted slot members, no counts.
pub fn shape_id(positions: &[Position]) -> NodeId {
    let mut parts: Vec<Vec<u8>> = vec![(positions.len() as u64).to_le_bytes().to_vec()];
    for p in positions {
        let mut enc = Vec::new();
        match p {
            Position::Literal(item) => {
                enc.push(b'L');
                encode_item(&mut enc, *item);
            }
            Position::Slot(s) => {
                enc.push(b'S');
                for item in s.members() {
                    encode_item(&mut enc, item);
                }
            }
        }
        parts.push(enc);
    }
    NodeId(content_hash("template", parts.iter().map(Vec::as_slice)))
}

fn encode_item(out: &mut Vec<u8>, item: Item) {
    match item {
        Item::Pattern(id) => {
            out.push(b'p');
            out.extend_from_slice(&id.0.to_be_bytes());
        }
        Item::Literal(b) => out.extend_from_slice(&[b'l', b]),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplateNode {
    pub node_id: NodeId,
    pub positions: Vec<Position>,
    /// Number of slot positions; 0 for leaves.
    pub level: usize,
    pub children: BTreeSet<NodeId>,
    pub parents: BTreeSet<NodeId>,
    /// Total leaf instances matched.
    pub support: u64,
    /// Observed instances; only leaves carry them.
    pub instances: Vec<StructureInstance>,
}

impl TemplateNode {
    pub fn leaf(key: &StructureKey, group: &StructureGroup) -> Self {
        let positions: Vec<Position> = key.0.iter().map(|&i| Position::Literal(i)).collect();
        TemplateNode {
            node_id: shape_id(&positions),
            positions,
            level: 0,
            children: BTreeSet::new(),
            parents: BTreeSet::new(),
            support: group.count,
            instances: group.instances.clone(),
        }
    }

    pub fn arity(&self) -> usize {
        self.positions.len()
    }

    pub fn is_leaf(&self) -> bool {
        self.level == 0
    }

    /// Concrete items of a leaf.
    pub fn items(&self) -> Option<Vec<Item>> {
        self.positions
            .iter()
            .map(|p| match p {
                Position::Literal(i) => Some(*i),
                Position::Slot(_) => None,
            })
            .collect()
    }

    pub fn slot_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.positions
            .iter()
            .enumerate()
            .filter(|(_, p)| p.as_slot().is_some())
            .map(|(i, _)| i)
    }

    pub fn contains_item(&self, item: Item) -> bool {
        self.positions.iter().any(|p| p.contains(item))
    }

    pub fn strict_match(&self, items: &[Item]) -> Result<bool, GeneralizationError> {
        if items.len() != self.arity() {
            return Err(GeneralizationError::ArityMismatch(
                self.arity(),
                items.len(),
            ));
        }
        Ok(matches_positions(&self.positions, items))
    }

    fn export_line(&self) -> String {
        let positions: Vec<String> = self.positions.iter().map(Position::export).collect();
        let children = if self.children.is_empty() {
            "-".to_string()
        } else {
            self.children
                .iter()
                .map(NodeId::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "{}\t{}\t{}\t{}\n",
            self.node_id,
            self.level,
            positions.join("|"),
            children
        )
    }
}

fn matches_positions(positions: &[Position], items: &[Item]) -> bool {
    positions.iter().zip(items).all(|(p, &i)| p.contains(i))
}

pub fn strict_match(node: &TemplateNode, items: &[Item]) -> Result<bool, GeneralizationError> {
    node.strict_match(items)
}

fn literal_disagreements(u: &TemplateNode, v: &TemplateNode) -> usize {
    u.positions
        .iter()
        .zip(&v.positions)
        .filter(|(a, b)| matches!((a, b), (Position::Literal(x), Position::Literal(y)) if x != y))
        .count()
}

fn mergeable(u: &TemplateNode, v: &TemplateNode) -> bool {
    u.arity() == v.arity() && literal_disagreements(u, v) <= 1
}

/// Merges two equal-arity nodes. Counts add; the result's children are the
/// operands of strictly lower level, plus the children of any operand whose
/// level the result keeps. Merging a node with itself returns it unchanged.
pub fn merge(u: &TemplateNode, v: &TemplateNode) -> Result<TemplateNode, GeneralizationError> {
    if u.arity() != v.arity() {
        return Err(GeneralizationError::ArityMismatch(u.arity(), v.arity()));
    }
    let disagreements = literal_disagreements(u, v);
    if disagreements > 1 {
        return Err(GeneralizationError::NotMergeable(disagreements));
    }
    if u.node_id == v.node_id {
        return Ok(u.clone());
    }

    let positions: Vec<Position> = u
        .positions
        .iter()
        .zip(&v.positions)
        .map(|(a, b)| match (a, b) {
            (Position::Literal(x), Position::Literal(y)) if x == y => Position::Literal(*x),
            (Position::Literal(x), Position::Literal(y)) => {
                let mut s = Slot::default();
                s.add(*x, u.support);
                s.add(*y, v.support);
                Position::Slot(s)
            }
            (Position::Literal(x), Position::Slot(s)) => {
                let mut s = s.clone();
                s.add(*x, u.support);
                Position::Slot(s)
            }
            (Position::Slot(s), Position::Literal(y)) => {
                let mut s = s.clone();
                s.add(*y, v.support);
                Position::Slot(s)
            }
            (Position::Slot(s), Position::Slot(t)) => {
                let mut s = s.clone();
                for (&item, &c) in &t.vector {
                    s.add(item, c);
                }
                Position::Slot(s)
            }
        })
        .collect();

    let level = positions.iter().filter(|p| p.as_slot().is_some()).count();
    let node_id = shape_id(&positions);
    let mut children = BTreeSet::new();
    for op in [u, v] {
        if op.level < level {
            children.insert(op.node_id);
        } else {
            children.extend(op.children.iter().copied());
        }
    }
    Ok(TemplateNode {
        node_id,
        positions,
        level,
        children,
        parents: BTreeSet::new(),
        support: u.support + v.support,
        instances: Vec::new(),
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Hierarchy {
    nodes: BTreeMap<NodeId, TemplateNode>,
    roots: BTreeSet<NodeId>,
}

pub fn build_hierarchy(groups: &StructureGroups) -> Hierarchy {
    build_hierarchy_with(groups, Exec::default())
}

/// Builds each arity class independently (in parallel under
/// `Exec::Parallel`) and joins the results.
pub fn build_hierarchy_with(groups: &StructureGroups, exec: Exec) -> Hierarchy {
    let mut classes: BTreeMap<usize, Vec<(&StructureKey, &StructureGroup)>> = BTreeMap::new();
    for (k, g) in groups {
        classes.entry(k.arity()).or_default().push((k, g));
    }
    let classes: Vec<_> = classes.into_values().collect();
    let built = exec.map(&classes, |leaves| ClassBuilder::new(leaves).run(exec));

    let mut h = Hierarchy::default();
    for (nodes, roots) in built {
        h.nodes.extend(nodes);
        h.roots.extend(roots);
    }
    h
}

struct ClassBuilder {
    nodes: BTreeMap<NodeId, TemplateNode>,
    leaves: Vec<NodeId>,
    worklist: Vec<NodeId>,
}

impl ClassBuilder {
    fn new(leaves: &[(&StructureKey, &StructureGroup)]) -> Self {
        let mut nodes = BTreeMap::new();
        let mut ids = Vec::new();
        for (k, g) in leaves {
            let leaf = TemplateNode::leaf(k, g);
            ids.push(leaf.node_id);
            nodes.insert(leaf.node_id, leaf);
        }
        let mut b = ClassBuilder {
            nodes,
            leaves: ids.clone(),
            worklist: ids,
        };
        b.sort_worklist();
        b
    }

    fn order_key(&self, id: &NodeId) -> (std::cmp::Reverse<u64>, Vec<ShapePos>) {
        let n = &self.nodes[id];
        (std::cmp::Reverse(n.support), shape(&n.positions))
    }

    fn sort_worklist(&mut self) {
        let mut keyed: Vec<_> = self
            .worklist
            .iter()
            .map(|id| (self.order_key(id), *id))
            .collect();
        keyed.sort();
        self.worklist = keyed.into_iter().map(|(_, id)| id).collect();
    }

    fn first_mergeable_pair(&self, exec: Exec) -> Option<(NodeId, NodeId)> {
        let wl = &self.worklist;
        let nodes = &self.nodes;
        exec.find_first(wl.len(), |i| {
            let u = &nodes[&wl[i]];
            wl[i + 1..]
                .iter()
                .find(|id| mergeable(u, &nodes[*id]))
                .copied()
        })
        .map(|(i, j)| (wl[i], j))
    }

    fn matched_leaves(&self, positions: &[Position]) -> BTreeSet<NodeId> {
        self.leaves
            .iter()
            .filter(|id| {
                let leaf = &self.nodes[*id];
                leaf.positions
                    .iter()
                    .zip(positions)
                    .all(|(lp, p)| match lp {
                        Position::Literal(i) => p.contains(*i),
                        Position::Slot(_) => unreachable!("leaves have no slots"),
                    })
            })
            .copied()
            .collect()
    }

    fn leaves_under(&self, id: NodeId) -> BTreeSet<NodeId> {
        let n = &self.nodes[&id];
        if n.is_leaf() {
            return BTreeSet::from([id]);
        }
        self.matched_leaves(&n.positions)
    }

    fn run(mut self, exec: Exec) -> (BTreeMap<NodeId, TemplateNode>, Vec<NodeId>) {
        while let Some((u_id, v_id)) = self.first_mergeable_pair(exec) {
            let merged =
                merge(&self.nodes[&u_id], &self.nodes[&v_id]).expect("pair checked mergeable");
            self.worklist.retain(|id| *id != u_id && *id != v_id);

            let matched = self.matched_leaves(&merged.positions);
            let mut children = merged.children.clone();
            let reached: BTreeSet<NodeId> = children
                .iter()
                .flat_map(|c| self.leaves_under(*c))
                .collect();
            children.extend(matched.difference(&reached).copied());

            for op in [u_id, v_id] {
                if self.nodes[&op].level == merged.level {
                    let gone = self.nodes.remove(&op).expect("operand present");
                    debug_assert!(
                        gone.parents.is_empty(),
                        "worklist templates have no parents"
                    );
                    for c in &gone.children {
                        if let Some(child) = self.nodes.get_mut(c) {
                            child.parents.remove(&op);
                        }
                    }
                }
            }

            let id = merged.node_id;
            for c in &children {
                self.nodes
                    .get_mut(c)
                    .expect("child present")
                    .parents
                    .insert(id);
            }
            if let Some(existing) = self.nodes.get_mut(&id) {
                // Same shape already exists (and therefore matches the same
                // leaves); fold the new children into it.
                existing.children.extend(children);
                continue;
            }

            let mut positions = merged.positions;
            for (p, pos) in positions.iter_mut().enumerate() {
                if let Position::Slot(s) = pos {
                    s.vector.values_mut().for_each(|c| *c = 0);
                    for leaf in &matched {
                        let leaf = &self.nodes[leaf];
                        let Position::Literal(item) = leaf.positions[p] else {
                            unreachable!()
                        };
                        s.add(item, leaf.support);
                    }
                }
            }
            let support = matched.iter().map(|l| self.nodes[l].support).sum();
            self.nodes.insert(
                id,
                TemplateNode {
                    node_id: id,
                    positions,
                    level: merged.level,
                    children,
                    parents: BTreeSet::new(),
                    support,
                    instances: Vec::new(),
                },
            );
            let key = self.order_key(&id);
            let at = self.worklist.partition_point(|w| self.order_key(w) < key);
            self.worklist.insert(at, id);
        }
        let roots = self.worklist;
        (self.nodes, roots)
    }
}

impl Hierarchy {
    pub fn nodes(&self) -> impl Iterator<Item = &TemplateNode> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: NodeId) -> Result<&TemplateNode, GeneralizationError> {
        self.nodes
            .get(&id)
            .ok_or(GeneralizationError::UnknownNode(id))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    /// Parentless nodes: the fixpoint of every arity class.
    pub fn roots(&self) -> impl Iterator<Item = &TemplateNode> {
        self.roots.iter().map(|id| &self.nodes[id])
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TemplateNode> {
        self.nodes.values().filter(|n| n.is_leaf())
    }

    /// Nodes with at least one slot.
    pub fn templates(&self) -> impl Iterator<Item = &TemplateNode> {
        self.nodes.values().filter(|n| !n.is_leaf())
    }

    /// Leaf ids reachable through child links, including `id` itself if it
    /// is a leaf.
    pub fn leaves_under(&self, id: NodeId) -> Result<BTreeSet<NodeId>, GeneralizationError> {
        self.get(id)?;
        let mut seen = BTreeSet::new();
        let mut out = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            let node = &self.nodes[&n];
            if node.is_leaf() {
                out.insert(n);
            }
            stack.extend(node.children.iter().copied());
        }
        Ok(out)
    }

    /// All ancestors of `id` through parent links.
    pub fn ancestors(&self, id: NodeId) -> Result<BTreeSet<NodeId>, GeneralizationError> {
        self.get(id)?;
        let mut out = BTreeSet::new();
        let mut stack: Vec<NodeId> = self.nodes[&id].parents.iter().copied().collect();
        while let Some(n) = stack.pop() {
            if out.insert(n) {
                stack.extend(self.nodes[&n].parents.iter().copied());
            }
        }
        Ok(out)
    }

    /// Instances of every leaf under `id`, ordered by timestamp then origin.
    pub fn leaf_instances(
        &self,
        id: NodeId,
    ) -> Result<Vec<StructureInstance>, GeneralizationError> {
        let mut out: Vec<StructureInstance> = self
            .leaves_under(id)?
            .into_iter()
            .flat_map(|l| self.nodes[&l].instances.iter().cloned())
            .collect();
        out.sort_by_key(|i| (i.timestamp, i.origin));
        Ok(out)
    }

    /// Leaf instances under `id` whose item at `position` equals `value`.
    pub fn relation_select(
        &self,
        id: NodeId,
        position: usize,
        value: Item,
    ) -> Result<Vec<StructureInstance>, GeneralizationError> {
        let arity = self.get(id)?.arity();
        if position >= arity {
            return Err(GeneralizationError::BadPosition { position, arity });
        }
        Ok(self
            .leaf_instances(id)?
            .into_iter()
            .filter(|i| i.items[position] == value)
            .collect())
    }

    /// Deduplicated union of the leaf instances under `ids`.
    pub fn relation_union(
        &self,
        ids: &[NodeId],
    ) -> Result<Vec<StructureInstance>, GeneralizationError> {
        let mut leaves = BTreeSet::new();
        for &id in ids {
            leaves.extend(self.leaves_under(id)?);
        }
        let mut out: Vec<StructureInstance> = leaves
            .into_iter()
            .flat_map(|l| self.nodes[&l].instances.iter().cloned())
            .collect();
        out.sort_by_key(|i| (i.timestamp, i.origin));
        Ok(out)
    }

    /// Knowledge admission: adds `item` to the slot at `position` of `id`
    /// and of every ancestor, keeping vectors nested. Node ids stay as they
    /// were when the hierarchy was built.
    pub fn admit(
        &mut self,
        id: NodeId,
        position: usize,
        item: Item,
    ) -> Result<(), GeneralizationError> {
        let node = self.get(id)?;
        if position >= node.arity() {
            return Err(GeneralizationError::BadPosition {
                position,
                arity: node.arity(),
            });
        }
        if node.positions[position].as_slot().is_none() {
            return Err(GeneralizationError::NotASlot { node: id, position });
        }
        let mut targets = self.ancestors(id)?;
        targets.insert(id);
        for t in targets {
            if let Some(Position::Slot(s)) =
                self.nodes.get_mut(&t).map(|n| &mut n.positions[position])
            {
                s.add(item, 1);
            }
        }
        Ok(())
    }

    /// `node_id<TAB>level<TAB>pos0|pos1|…<TAB>children`, sorted by
    /// (arity, level, node_id). A literal position prints its item, a slot
    /// prints `slot:{item:count,…}`; `-` marks no children.
    pub fn export(&self) -> String {
        let mut nodes: Vec<&TemplateNode> = self.nodes.values().collect();
        nodes.sort_by_key(|n| (n.arity(), n.level, n.node_id));
        let mut out = String::new();
        for n in nodes {
            let _ = write!(out, "{}", n.export_line());
        }
        out
    }
}
