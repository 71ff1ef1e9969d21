//! Exponentially decayed relevancy scores and budgeted scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

use crate::ids::{NodeId, PatternId};

#[derive(Debug, Error, PartialEq)]
pub enum RelevancyError {
    #[error("window {got} is not after last processed window {last}")]
    WindowRegression { last: u64, got: u64 },
    #[error("unknown subject {0}")]
    UnknownSubject(Subject),
    #[error("invalid relevancy config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subject {
    Pattern(PatternId),
    Node(NodeId),
}

impl Subject {
    /// Inverse of `Display`: `pat:<hex>` or `node:<hex>`.
    pub fn parse(s: &str) -> Option<Subject> {
        if let Some(h) = s.strip_prefix("pat:") {
            return PatternId::from_hex(h).map(Subject::Pattern);
        }
        s.strip_prefix("node:")
            .and_then(NodeId::from_hex)
            .map(Subject::Node)
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Pattern(id) => write!(f, "pat:{id}"),
            Subject::Node(id) => write!(f, "node:{id}"),
        }
    }
}

impl fmt::Debug for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelevancyConfig {
    /// Decay λ in (0, 1].
    pub decay: f64,
    /// Saturation κ: counts at or above it score as a full observation.
    pub saturation: u64,
    /// Tasks selected per cycle.
    pub budget: usize,
}

impl Default for RelevancyConfig {
    fn default() -> Self {
        RelevancyConfig {
            decay: 0.5,
            saturation: 4,
            budget: 8,
        }
    }
}

impl RelevancyConfig {
    pub fn validate(&self) -> Result<(), RelevancyError> {
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(RelevancyError::InvalidConfig(format!(
                "decay must be in (0, 1], got {}",
                self.decay
            )));
        }
        if self.saturation == 0 {
            return Err(RelevancyError::InvalidConfig(
                "saturation must be positive".into(),
            ));
        }
        if self.budget == 0 {
            return Err(RelevancyError::InvalidConfig(
                "budget must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelevanceScore {
    pub score: f64,
    /// Last window with a positive count or a query hit.
    pub last_window: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scores {
    table: BTreeMap<Subject, RelevanceScore>,
    last_processed: Option<u64>,
}

impl Scores {
    pub fn new() -> Self {
        Scores::default()
    }

    pub fn get(&self, subject: Subject) -> Option<&RelevanceScore> {
        self.table.get(&subject)
    }

    /// Score of a subject, 0 when unknown.
    pub fn score(&self, subject: Subject) -> f64 {
        self.table.get(&subject).map_or(0.0, |s| s.score)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Subject, &RelevanceScore)> {
        self.table.iter().map(|(s, r)| (*s, r))
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn last_processed(&self) -> Option<u64> {
        self.last_processed
    }

    /// Applies one window of observations: `s ← (1−λ)s + λ·min(1, c/κ)`.
    /// Subjects missing from `counts` decay as if observed zero times; new
    /// subjects start from 0.
    pub fn update_window(
        &mut self,
        window_index: u64,
        counts: &BTreeMap<Subject, u64>,
        config: &RelevancyConfig,
    ) -> Result<(), RelevancyError> {
        if let Some(last) = self.last_processed {
            if window_index <= last {
                return Err(RelevancyError::WindowRegression {
                    last,
                    got: window_index,
                });
            }
        }
        for &subject in counts.keys() {
            self.table.entry(subject).or_insert(RelevanceScore {
                score: 0.0,
                last_window: window_index,
            });
        }
        let lambda = config.decay;
        for (subject, entry) in self.table.iter_mut() {
            let c = counts.get(subject).copied().unwrap_or(0);
            let observed = (c as f64 / config.saturation as f64).min(1.0);
            entry.score = (1.0 - lambda) * entry.score + lambda * observed;
            if c > 0 {
                entry.last_window = window_index;
            }
        }
        self.last_processed = Some(window_index);
        Ok(())
    }

    /// A query hit counts as one saturated observation.
    pub fn query_boost(
        &mut self,
        subject: Subject,
        config: &RelevancyConfig,
    ) -> Result<(), RelevancyError> {
        let window = self.last_processed.unwrap_or(0);
        let entry = self
            .table
            .get_mut(&subject)
            .ok_or(RelevancyError::UnknownSubject(subject))?;
        entry.score = (1.0 - config.decay) * entry.score + config.decay;
        entry.last_window = window;
        Ok(())
    }

    /// Adds a subject with score 0 if absent.
    pub fn register(&mut self, subject: Subject, window: u64) {
        self.table.entry(subject).or_insert(RelevanceScore {
            score: 0.0,
            last_window: window,
        });
    }

    /// `subject<TAB>score<TAB>last_window`, sorted by subject.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for (s, r) in &self.table {
            let _ = writeln!(out, "{s}\t{:.6}\t{}", r.score, r.last_window);
        }
        out
    }
}

/// Stable sort by subject score descending; the first `budget` tasks.
pub fn schedule<T: Clone>(
    tasks: &[(T, Subject)],
    scores: &Scores,
    config: &RelevancyConfig,
) -> Vec<T> {
    let mut ranked: Vec<&(T, Subject)> = tasks.iter().collect();
    ranked.sort_by(|a, b| scores.score(b.1).total_cmp(&scores.score(a.1)));
    ranked
        .into_iter()
        .take(config.budget)
        .map(|(t, _)| t.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn subj(n: u64) -> Subject {
        Subject::Pattern(PatternId(n))
    }

    fn counts(pairs: &[(u64, u64)]) -> BTreeMap<Subject, u64> {
        pairs.iter().map(|&(s, c)| (subj(s), c)).collect()
    }

    #[test]
    fn hand_trace() {
        let cfg = RelevancyConfig::default();
        let mut s = Scores::new();
        let mut got = Vec::new();
        for (w, c) in [4, 2, 0].into_iter().enumerate() {
            s.update_window(w as u64, &counts(&[(1, c)]), &cfg).unwrap();
            got.push(s.score(subj(1)));
        }
        // Recurrence s_{t+1} = s_t / 2 + min(1, c/4) / 2.
        assert_eq!(got, vec![0.5, 0.5, 0.25]);
        assert_eq!(s.get(subj(1)).unwrap().last_window, 1);
    }

    #[test]
    fn window_regression() {
        let cfg = RelevancyConfig::default();
        let mut s = Scores::new();
        s.update_window(3, &counts(&[]), &cfg).unwrap();
        assert_eq!(
            s.update_window(3, &counts(&[]), &cfg),
            Err(RelevancyError::WindowRegression { last: 3, got: 3 })
        );
    }

    #[test]
    fn boosts() {
        let cfg = RelevancyConfig::default();
        let mut s = Scores::new();
        s.register(subj(1), 0);
        s.query_boost(subj(1), &cfg).unwrap();
        assert_eq!(s.score(subj(1)), 0.5);
        s.update_window(0, &counts(&[]), &cfg).unwrap();
        s.update_window(1, &counts(&[]), &cfg).unwrap();
        assert_eq!(s.score(subj(1)), 0.125);
        s.register(subj(2), 0);
        s.update_window(2, &counts(&[(2, 4), (2, 4)]), &cfg)
            .unwrap();
        s.update_window(3, &counts(&[(2, 4)]), &cfg).unwrap();
        s.update_window(4, &counts(&[(2, 1)]), &cfg).unwrap();
        assert_eq!(s.score(subj(2)), 0.5 * 0.75 + 0.5 * 0.25);
        assert_eq!(
            s.query_boost(subj(9), &cfg),
            Err(RelevancyError::UnknownSubject(subj(9)))
        );
    }

    #[test]
    fn boost_examples() {
        let cfg = RelevancyConfig::default();
        for (start, want) in [(0.25, 0.625), (1.0, 1.0), (0.0, 0.5)] {
            let mut s = Scores::new();
            s.table.insert(
                subj(1),
                RelevanceScore {
                    score: start,
                    last_window: 0,
                },
            );
            s.query_boost(subj(1), &cfg).unwrap();
            assert_eq!(s.score(subj(1)), want);
        }
    }

    #[test]
    fn schedule_rules() {
        let cfg = RelevancyConfig {
            budget: 1,
            ..RelevancyConfig::default()
        };
        let mut s = Scores::new();
        s.table.insert(
            subj(1),
            RelevanceScore {
                score: 0.9,
                last_window: 0,
            },
        );
        s.table.insert(
            subj(2),
            RelevanceScore {
                score: 0.2,
                last_window: 0,
            },
        );
        let tasks = vec![("t2", subj(2)), ("t1", subj(1))];
        assert_eq!(schedule(&tasks, &s, &cfg), vec!["t1"]);
        let all = RelevancyConfig { budget: 10, ..cfg };
        assert_eq!(schedule(&tasks, &s, &all), vec!["t1", "t2"]);
        let ties = vec![("a", subj(7)), ("b", subj(8)), ("c", subj(7))];
        assert_eq!(schedule(&ties, &s, &all), vec!["a", "b", "c"]);
    }

    #[test]
    fn export_format() {
        let mut s = Scores::new();
        s.update_window(0, &counts(&[(1, 1)]), &RelevancyConfig::default())
            .unwrap();
        assert_eq!(s.export(), "pat:0000000000000001\t0.125000\t0\n");
        assert_eq!(Subject::parse("pat:0000000000000001"), Some(subj(1)));
        assert_eq!(
            Subject::parse("node:00000000000000ff"),
            Some(Subject::Node(NodeId(255)))
        );
        assert_eq!(Subject::parse("x"), None);
    }

    proptest! {
        #[test]
        fn bounded(decay in 0.01f64..=1.0, kappa in 1u64..10, seq in proptest::collection::vec(0u64..20, 1..50)) {
            let cfg = RelevancyConfig { decay, saturation: kappa, budget: 1 };
            let mut s = Scores::new();
            for (w, c) in seq.into_iter().enumerate() {
                s.update_window(w as u64, &counts(&[(1, c)]), &cfg).unwrap();
                if w % 3 == 0 {
                    s.query_boost(subj(1), &cfg).unwrap();
                }
                let v = s.score(subj(1));
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn monotone_in_latest_count(prefix in proptest::collection::vec(0u64..10, 0..10), c in 0u64..10) {
            let cfg = RelevancyConfig::default();
            let run = |last: u64| {
                let mut s = Scores::new();
                for (w, &x) in prefix.iter().enumerate() {
                    s.update_window(w as u64, &counts(&[(1, x)]), &cfg).unwrap();
                }
                s.update_window(prefix.len() as u64, &counts(&[(1, last)]), &cfg).unwrap();
                s.score(subj(1))
            };
            prop_assert!(run(c + 1) >= run(c));
        }

        #[test]
        fn schedule_rank_invariant(raw in proptest::collection::vec(0.0f64..1.0, 1..20), budget in 1usize..25) {
            let cfg = RelevancyConfig { budget, ..RelevancyConfig::default() };
            let mut a = Scores::new();
            let mut b = Scores::new();
            for (i, &v) in raw.iter().enumerate() {
                a.table.insert(subj(i as u64), RelevanceScore { score: v, last_window: 0 });
                b.table.insert(subj(i as u64), RelevanceScore { score: v * v / 2.0, last_window: 0 });
            }
            let tasks: Vec<(usize, Subject)> = (0..raw.len()).map(|i| (i, subj(i as u64))).collect();
            prop_assert_eq!(schedule(&tasks, &a, &cfg), schedule(&tasks, &b, &cfg));
        }
    }
}
