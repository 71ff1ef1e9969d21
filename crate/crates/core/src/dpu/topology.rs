use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use super::{DpuError, UnitId};
use crate::config::{parse_entries, unknown, value, ConfigError, Entry};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Ring,
    Mesh,
    Grid,
}

impl FromStr for Shape {
    type Err = DpuError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ring" => Ok(Shape::Ring),
            "mesh" | "full-mesh" => Ok(Shape::Mesh),
            "grid" => Ok(Shape::Grid),
            other => Err(DpuError::Topology(format!("unknown shape {other:?}"))),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Ring => "ring",
            Shape::Mesh => "mesh",
            Shape::Grid => "grid",
        })
    }
}

/// `shape=…`, `units=N`, optional `ttl=K` (defaults to the unit count).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TopologyConfig {
    pub shape: Shape,
    pub units: usize,
    pub ttl: Option<u64>,
}

impl TopologyConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        TopologyConfig::from_entries(&parse_entries(text)?)
    }

    pub(crate) fn from_entries(entries: &[Entry]) -> Result<Self, ConfigError> {
        let (mut shape, mut units, mut ttl) = (None, None, None);
        for e in entries {
            match e.key.as_str() {
                "shape" => shape = Some(value::<Shape>(e)?),
                "units" => units = Some(value::<usize>(e)?),
                "ttl" => ttl = Some(value::<u64>(e)?),
                _ => return Err(unknown(e)),
            }
        }
        let shape = shape.ok_or_else(|| ConfigError::Invalid("topology needs shape".into()))?;
        let units = units.ok_or_else(|| ConfigError::Invalid("topology needs units".into()))?;
        if units == 0 {
            return Err(ConfigError::Invalid(
                "topology needs at least one unit".into(),
            ));
        }
        Ok(TopologyConfig { shape, units, ttl })
    }

    pub fn ttl(&self) -> u64 {
        self.ttl.unwrap_or(self.units as u64)
    }
}

/// Symmetric, connected adjacency over units `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    shape: Shape,
    adjacency: BTreeMap<UnitId, BTreeSet<UnitId>>,
}

impl Topology {
    /// Grids use the most square `rows × cols` factorization of `n` with
    /// `rows ≤ cols`.
    pub fn new(shape: Shape, n: usize) -> Result<Self, DpuError> {
        if n == 0 {
            return Err(DpuError::Topology("need at least one unit".into()));
        }
        let mut adjacency: BTreeMap<UnitId, BTreeSet<UnitId>> =
            (0..n).map(|u| (u, BTreeSet::new())).collect();
        let mut link = |a: UnitId, b: UnitId| {
            if a != b {
                adjacency.get_mut(&a).expect("unit").insert(b);
                adjacency.get_mut(&b).expect("unit").insert(a);
            }
        };
        match shape {
            Shape::Ring => (0..n).for_each(|u| link(u, (u + 1) % n)),
            Shape::Mesh => (0..n).for_each(|a| (a + 1..n).for_each(|b| link(a, b))),
            Shape::Grid => {
                let rows = (1..=n)
                    .filter(|r| n.is_multiple_of(*r) && r * r <= n)
                    .max()
                    .expect("1 divides n");
                let cols = n / rows;
                for r in 0..rows {
                    for c in 0..cols {
                        let u = r * cols + c;
                        if c + 1 < cols {
                            link(u, u + 1);
                        }
                        if r + 1 < rows {
                            link(u, u + cols);
                        }
                    }
                }
            }
        }
        Ok(Topology { shape, adjacency })
    }

    pub fn from_config(config: &TopologyConfig) -> Result<Self, DpuError> {
        Topology::new(config.shape, config.units)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn units(&self) -> impl Iterator<Item = UnitId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn neighbors(&self, u: UnitId) -> &BTreeSet<UnitId> {
        &self.adjacency[&u]
    }

    /// Hop distances from `from` to every unit.
    pub fn distances(&self, from: UnitId) -> BTreeMap<UnitId, usize> {
        let mut dist = BTreeMap::from([(from, 0)]);
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            let d = dist[&u];
            for &v in self.neighbors(u) {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(v) {
                    e.insert(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// First hop on a shortest path from `at` to `target`, smallest id on ties.
    pub fn next_hop(&self, at: UnitId, target: UnitId) -> Option<UnitId> {
        let dist = self.distances(target);
        let here = *dist.get(&at)?;
        self.neighbors(at)
            .iter()
            .copied()
            .find(|v| dist.get(v).is_some_and(|&d| d + 1 == here))
    }

    pub fn diameter(&self) -> usize {
        self.units()
            .map(|u| self.distances(u).values().copied().max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    pub fn is_connected(&self) -> bool {
        self.distances(0).len() == self.len()
    }
}
