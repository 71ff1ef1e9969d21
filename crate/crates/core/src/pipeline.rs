//! The cognition cycle stitched together: mine, tokenize, extract,
//! generalize, score, and the hypothesis replay.

use std::collections::BTreeMap;

use crate::cognition::{analyze_segments, Dictionary, MinerConfig, StreamLayout, Token, TokenKind};
use crate::config::StructureSpec;
use crate::exec::Exec;
use crate::generalization::{build_hierarchy_with, Hierarchy};
use crate::hypotheses::{
    check, correct_all, lifecycle_scan, synthesize, HypothesisBook, HypothesisConfig,
    HypothesisError,
};
use crate::ids::{NodeId, PatternId};
use crate::relevancy::{RelevancyConfig, Scores, Subject};
use crate::store::{Segment, StreamWindow};
use crate::structures::{
    dedupe, extract, ExtractMode, Item, StructureError, StructureGroups, StructureInstance,
};
use crate::Result;

/// Everything derived from one mining run over a segment list.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub dictionary: Dictionary,
    pub tokens: Vec<Token>,
    pub windows: Vec<StreamWindow>,
    pub layout: StreamLayout,
    pub instances: Vec<StructureInstance>,
    pub groups: StructureGroups,
    pub hierarchy: Hierarchy,
}

/// A delimiter that is a dictionary pattern becomes that pattern item;
/// otherwise a single byte becomes a literal item. [`analyze`] mines with
/// the delimiter as a barrier, so records never share a pattern.
pub fn resolve_mode(spec: &StructureSpec, dictionary: &Dictionary) -> Result<ExtractMode> {
    Ok(match spec {
        StructureSpec::Window(k) => ExtractMode::Window(*k),
        StructureSpec::Delimiter(bytes) => match dictionary.by_bytes(bytes) {
            Some(p) => ExtractMode::Delimiter(Item::Pattern(p.pattern_id)),
            None if bytes.len() == 1 => ExtractMode::Delimiter(Item::Literal(bytes[0])),
            None => {
                return Err(
                    StructureError::UnknownDelimiter(Item::Pattern(PatternId::of(bytes))).into(),
                )
            }
        },
    })
}

pub fn analyze(
    segments: &[Segment],
    miner: &MinerConfig,
    spec: &StructureSpec,
    exec: Exec,
) -> Result<Analysis> {
    let barrier: &[u8] = match spec {
        StructureSpec::Delimiter(bytes) => bytes,
        StructureSpec::Window(_) => &[],
    };
    let (dictionary, tokens, windows, layout) = analyze_segments(segments, miner, exec, barrier)?;
    let mode = resolve_mode(spec, &dictionary)?;
    let instances = extract(&tokens, mode, &dictionary, &layout)?;
    let groups = dedupe(instances.iter().cloned());
    let hierarchy = build_hierarchy_with(&groups, exec);
    Ok(Analysis {
        dictionary,
        tokens,
        windows,
        layout,
        instances,
        groups,
        hierarchy,
    })
}

/// Per-window observation counts: pattern tokens, and for every leaf
/// instance one count for the leaf and each of its ancestors.
pub fn window_counts(
    tokens: &[Token],
    instances: &[StructureInstance],
    hierarchy: &Hierarchy,
    window_count: u64,
) -> Vec<BTreeMap<Subject, u64>> {
    let mut out = vec![BTreeMap::new(); window_count as usize];
    for t in tokens {
        if let TokenKind::Pattern(id) = t.kind {
            *out[t.window_index as usize]
                .entry(Subject::Pattern(id))
                .or_insert(0) += 1;
        }
    }
    let leaf_of: BTreeMap<Vec<Item>, NodeId> = hierarchy
        .leaves()
        .map(|l| (l.items().expect("leaves are concrete"), l.node_id))
        .collect();
    let mut lineage: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for inst in instances {
        let Some(&leaf) = leaf_of.get(&inst.items) else {
            continue;
        };
        let nodes = lineage.entry(leaf).or_insert_with(|| {
            let mut v: Vec<NodeId> = hierarchy
                .ancestors(leaf)
                .expect("leaf exists")
                .into_iter()
                .collect();
            v.push(leaf);
            v
        });
        let bucket = &mut out[inst.timestamp as usize];
        for n in nodes.iter() {
            *bucket.entry(Subject::Node(*n)).or_insert(0) += 1;
        }
    }
    out
}

/// Scores after replaying `window_count` windows of counts, applying each
/// boost right after the window it was recorded in (boosts for unknown
/// subjects are skipped).
pub fn score_windows(
    counts: &[BTreeMap<Subject, u64>],
    boosts: &[(u64, Subject)],
    config: &RelevancyConfig,
) -> Result<Scores> {
    let mut scores = Scores::new();
    for (w, c) in counts.iter().enumerate() {
        scores.update_window(w as u64, c, config)?;
        for (_, s) in boosts.iter().filter(|(bw, _)| *bw == w as u64) {
            let _ = scores.query_boost(*s, config);
        }
    }
    let last = counts.len() as u64;
    for (_, s) in boosts.iter().filter(|(bw, _)| *bw >= last) {
        let _ = scores.query_boost(*s, config);
    }
    Ok(scores)
}

pub fn score(
    analysis: &Analysis,
    boosts: &[(u64, Subject)],
    config: &RelevancyConfig,
) -> Result<Scores> {
    let counts = window_counts(
        &analysis.tokens,
        &analysis.instances,
        &analysis.hierarchy,
        analysis.windows.len() as u64,
    );
    score_windows(&counts, boosts, config)
}

/// Outcome of a hypothesis replay.
#[derive(Clone, Debug)]
pub struct HypothesisRun {
    pub book: HypothesisBook,
    /// Hierarchy built from the history windows, with admissions applied.
    pub hierarchy: Hierarchy,
    pub split: u64,
}

/// Splits the windows into history `[0, split)` and incoming
/// `[split, W)` with `split = max(1, W − holdout)`. Hypotheses are
/// synthesized from the history and then each incoming window is checked,
/// corrected and scanned in order. Returns `None` when the history yields
/// no slotted template.
pub fn replay_hypotheses(
    analysis: &Analysis,
    relevancy: &RelevancyConfig,
    config: &HypothesisConfig,
    holdout: u64,
    exec: Exec,
) -> Result<Option<HypothesisRun>> {
    let total = analysis.windows.len() as u64;
    let split = total.saturating_sub(holdout).max(1);
    let history: Vec<StructureInstance> = analysis
        .instances
        .iter()
        .filter(|i| i.timestamp < split)
        .cloned()
        .collect();
    let mut hierarchy = build_hierarchy_with(&dedupe(history.iter().cloned()), exec);
    let tokens: Vec<Token> = analysis
        .tokens
        .iter()
        .filter(|t| t.window_index < split)
        .copied()
        .collect();
    let counts = window_counts(&tokens, &history, &hierarchy, split.min(total));
    let scores = score_windows(&counts, &[], relevancy)?;

    let mut book = HypothesisBook::new();
    match synthesize(&mut book, &hierarchy, &scores, config, split) {
        Ok(_) => {}
        Err(HypothesisError::NoTemplates) => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let mut by_window: BTreeMap<u64, Vec<StructureInstance>> = BTreeMap::new();
    for i in analysis.instances.iter().filter(|i| i.timestamp >= split) {
        by_window.entry(i.timestamp).or_default().push(i.clone());
    }
    for w in split..total {
        let incoming = by_window.remove(&w).unwrap_or_default();
        check(&mut book, &mut hierarchy, &incoming, config)?;
        correct_all(&mut book, &hierarchy, config, w);
        lifecycle_scan(&mut book, w, config);
    }
    Ok(Some(HypothesisRun {
        book,
        hierarchy,
        split,
    }))
}
