//! Pattern discovery and tokenization.
//!
//! [`mine_patterns`] finds repeatable byte substrings with no prior schema;
//! [`tokenize`] re-expresses the stream as pattern occurrences and literal
//! gap bytes that tile it exactly; [`assign_windows`] slices the token
//! sequence into fixed-size windows that serve as the time axis.

mod miner;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::exec::Exec;
use crate::ids::PatternId;
use crate::store::{Segment, SegmentId, StreamWindow};

pub use miner::{mine_bytes, mine_bytes_bounded, mine_patterns, mine_patterns_with};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CognitionError {
    #[error("invalid miner config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MinerConfig {
    pub min_len: usize,
    pub max_len: usize,
    pub min_support: usize,
    /// Tokens per window.
    pub window_size: usize,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            min_len: 2,
            max_len: 16,
            min_support: 2,
            window_size: 1024,
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<(), CognitionError> {
        if self.min_len < 1 || self.min_len > self.max_len {
            return Err(CognitionError::InvalidConfig(format!(
                "need 1 <= min_len <= max_len, got {}..{}",
                self.min_len, self.max_len
            )));
        }
        if self.min_support < 2 {
            return Err(CognitionError::InvalidConfig(
                "min_support must be >= 2".into(),
            ));
        }
        if self.window_size < 1 {
            return Err(CognitionError::InvalidConfig(
                "window_size must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pattern {
    pub pattern_id: PatternId,
    pub bytes: Vec<u8>,
    /// Non-overlapping occurrences credited when the pattern was selected.
    pub count: u64,
    pub first_seen: u64,
    pub last_seen: u64,
}

impl Pattern {
    pub fn new(bytes: Vec<u8>, count: u64, first_seen: u64, last_seen: u64) -> Self {
        Pattern {
            pattern_id: PatternId::of(&bytes),
            bytes,
            count,
            first_seen,
            last_seen,
        }
    }
}

/// The pattern dictionary, keyed (and exported) by content id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dictionary {
    patterns: BTreeMap<PatternId, Pattern>,
}

impl Dictionary {
    pub fn new() -> Self {
        Dictionary::default()
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn get(&self, id: PatternId) -> Option<&Pattern> {
        self.patterns.get(&id)
    }

    pub fn contains(&self, id: PatternId) -> bool {
        self.patterns.contains_key(&id)
    }

    pub fn by_bytes(&self, bytes: &[u8]) -> Option<&Pattern> {
        self.patterns
            .get(&PatternId::of(bytes))
            .filter(|p| p.bytes == bytes)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Pattern> {
        self.patterns.values()
    }

    /// Inserts a pattern, replacing any previous entry with the same bytes.
    pub fn insert(&mut self, pattern: Pattern) {
        self.patterns.insert(pattern.pattern_id, pattern);
    }

    /// Content-addressed union: counts add, first_seen takes the minimum and
    /// last_seen the maximum. Commutative and associative with the empty
    /// dictionary as identity.
    pub fn merge(&self, other: &Dictionary) -> Dictionary {
        let mut out = self.clone();
        for p in other.iter() {
            out.patterns
                .entry(p.pattern_id)
                .and_modify(|q| {
                    q.count += p.count;
                    q.first_seen = q.first_seen.min(p.first_seen);
                    q.last_seen = q.last_seen.max(p.last_seen);
                })
                .or_insert_with(|| p.clone());
        }
        out
    }

    /// `(bytes, count)` pairs sorted by bytes; handy for comparisons that
    /// should ignore window stamps.
    pub fn counts(&self) -> Vec<(Vec<u8>, u64)> {
        let mut v: Vec<_> = self.iter().map(|p| (p.bytes.clone(), p.count)).collect();
        v.sort();
        v
    }

    /// `pattern_id<TAB>hex(bytes)<TAB>count<TAB>first_seen<TAB>last_seen`, by id.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for p in self.iter() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                p.pattern_id,
                hex::encode(&p.bytes),
                p.count,
                p.first_seen,
                p.last_seen
            );
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TokenKind {
    Pattern(PatternId),
    Gap(u8),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    /// Offset into the concatenation of the tokenized segments.
    pub offset: u64,
    pub len: u32,
    pub window_index: u64,
}

impl Token {
    pub fn is_gap(&self) -> bool {
        matches!(self.kind, TokenKind::Gap(_))
    }

    pub fn end(&self) -> u64 {
        self.offset + self.len as u64
    }
}

/// Maps offsets in a concatenated stream back to `(segment_id, offset)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StreamLayout {
    starts: Vec<u64>,
    ids: Vec<SegmentId>,
    total: u64,
}

impl StreamLayout {
    pub fn of(segments: &[Segment]) -> Self {
        let mut layout = StreamLayout::default();
        for s in segments {
            layout.starts.push(layout.total);
            layout.ids.push(s.segment_id);
            layout.total += s.bytes.len() as u64;
        }
        layout
    }

    pub fn total_len(&self) -> u64 {
        self.total
    }

    /// Segment and segment-relative offset of a stream offset.
    pub fn locate(&self, offset: u64) -> (SegmentId, u64) {
        assert!(
            offset < self.total,
            "offset {offset} outside stream of {}",
            self.total
        );
        let idx = self.starts.partition_point(|&s| s <= offset) - 1;
        (self.ids[idx], offset - self.starts[idx])
    }
}

pub fn concat(segments: &[Segment]) -> Vec<u8> {
    let mut out = Vec::with_capacity(segments.iter().map(|s| s.bytes.len()).sum());
    for s in segments {
        out.extend_from_slice(&s.bytes);
    }
    out
}

pub fn tokenize(segments: &[Segment], dictionary: &Dictionary) -> Vec<Token> {
    tokenize_bytes(&concat(segments), dictionary)
}

/// Left-to-right longest match; bytes no pattern covers become gaps.
pub fn tokenize_bytes(stream: &[u8], dictionary: &Dictionary) -> Vec<Token> {
    let by_bytes: HashMap<&[u8], PatternId> = dictionary
        .iter()
        .map(|p| (p.bytes.as_slice(), p.pattern_id))
        .collect();
    let mut lengths: Vec<usize> = dictionary.iter().map(|p| p.bytes.len()).collect();
    lengths.sort_unstable_by(|a, b| b.cmp(a));
    lengths.dedup();

    let mut tokens = Vec::new();
    let mut i = 0usize;
    while i < stream.len() {
        let rest = stream.len() - i;
        let hit = lengths
            .iter()
            .filter(|&&len| len <= rest)
            .find_map(|&len| by_bytes.get(&stream[i..i + len]).map(|&id| (id, len)));
        let (kind, len) = match hit {
            Some((id, len)) => (TokenKind::Pattern(id), len),
            None => (TokenKind::Gap(stream[i]), 1),
        };
        tokens.push(Token {
            kind,
            offset: i as u64,
            len: len as u32,
            window_index: 0,
        });
        i += len;
    }
    tokens
}

/// Concatenates pattern bytes and gap bytes back into the stream.
pub fn reconstruct(tokens: &[Token], dictionary: &Dictionary) -> Vec<u8> {
    let mut out = Vec::new();
    for t in tokens {
        match t.kind {
            TokenKind::Gap(b) => out.push(b),
            TokenKind::Pattern(id) => {
                let p = dictionary
                    .get(id)
                    .expect("token references a dictionary pattern");
                out.extend_from_slice(&p.bytes);
            }
        }
    }
    out
}

/// Stamps `window_index` on every token (`window_size` tokens per window,
/// last window may be partial) and describes each window.
pub fn assign_windows(
    tokens: &mut [Token],
    layout: &StreamLayout,
    config: &MinerConfig,
) -> Vec<StreamWindow> {
    let size = config.window_size.max(1);
    tokens
        .chunks_mut(size)
        .enumerate()
        .map(|(w, chunk)| {
            for t in chunk.iter_mut() {
                t.window_index = w as u64;
            }
            let first = chunk.first().expect("chunks are non-empty");
            let last = chunk.last().expect("chunks are non-empty");
            StreamWindow {
                window_index: w as u64,
                segment_range: (
                    layout.locate(first.offset).0,
                    layout.locate(last.end() - 1).0,
                ),
                token_count: chunk.len(),
            }
        })
        .collect()
}

/// Runs mining, tokenization and windowing in one go. `barrier` is passed
/// to [`mine_bytes_bounded`].
pub fn analyze_segments(
    segments: &[Segment],
    config: &MinerConfig,
    exec: Exec,
    barrier: &[u8],
) -> Result<(Dictionary, Vec<Token>, Vec<StreamWindow>, StreamLayout), CognitionError> {
    let dictionary = mine_bytes_bounded(&concat(segments), config, exec, barrier)?;
    let layout = StreamLayout::of(segments);
    let mut tokens = tokenize(segments, &dictionary);
    let windows = assign_windows(&mut tokens, &layout, config);
    Ok((dictionary, tokens, windows, layout))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(id: SegmentId, bytes: &[u8]) -> Segment {
        Segment {
            segment_id: id,
            bytes: bytes.to_vec(),
            timestamp: id,
            source_tag: "t".into(),
        }
    }

    fn dict_of(words: &[&[u8]]) -> Dictionary {
        let mut d = Dictionary::new();
        for w in words {
            d.insert(Pattern::new(w.to_vec(), 2, 0, 0));
        }
        d
    }

    #[test]
    fn longest_match_trace() {
        let d = dict_of(&[b"abc"]);
        let toks = tokenize_bytes(b"xxabcy", &d);
        let kinds: Vec<_> = toks.iter().map(|t| (t.kind, t.offset)).collect();
        assert_eq!(
            kinds,
            vec![
                (TokenKind::Gap(b'x'), 0),
                (TokenKind::Gap(b'x'), 1),
                (TokenKind::Pattern(PatternId::of(b"abc")), 2),
                (TokenKind::Gap(b'y'), 5),
            ]
        );
    }

    #[test]
    fn empty_dictionary_gives_gaps() {
        let toks = tokenize_bytes(b"ab", &Dictionary::new());
        assert_eq!(toks.len(), 2);
        assert!(toks.iter().all(Token::is_gap));
    }

    #[test]
    fn longer_pattern_wins() {
        let d = dict_of(&[b"ab", b"abc"]);
        let toks = tokenize_bytes(b"abc", &d);
        assert_eq!(toks.len(), 1);
        assert_eq!(toks[0].kind, TokenKind::Pattern(PatternId::of(b"abc")));
    }

    #[test]
    fn window_partition() {
        let cfg = MinerConfig::default();
        for (n, expect) in [
            (2048usize, vec![1024, 1024]),
            (1025, vec![1024, 1]),
            (0, vec![]),
        ] {
            let stream = vec![b'q'; n];
            let layout = StreamLayout::of(&[seg(0, &stream)][..n.min(1)]);
            let mut toks = tokenize_bytes(&stream, &Dictionary::new());
            let windows = assign_windows(&mut toks, &layout, &cfg);
            let counts: Vec<_> = windows.iter().map(|w| w.token_count).collect();
            assert_eq!(counts, expect);
            for (i, w) in windows.iter().enumerate() {
                assert_eq!(w.window_index, i as u64);
            }
            if n > 1024 {
                assert_eq!(toks[1023].window_index, 0);
                assert_eq!(toks[1024].window_index, 1);
            }
        }
    }

    #[test]
    fn layout_locates_segment_offsets() {
        let segs = [seg(4, b"abc"), seg(5, b"de"), seg(9, b"f")];
        let layout = StreamLayout::of(&segs);
        assert_eq!(layout.locate(0), (4, 0));
        assert_eq!(layout.locate(2), (4, 2));
        assert_eq!(layout.locate(3), (5, 0));
        assert_eq!(layout.locate(5), (9, 0));
    }

    #[test]
    fn window_segment_ranges() {
        let segs = [seg(0, b"aaaa"), seg(1, b"bbbb")];
        let layout = StreamLayout::of(&segs);
        let mut toks = tokenize(&segs, &Dictionary::new());
        let cfg = MinerConfig {
            window_size: 3,
            ..MinerConfig::default()
        };
        let windows = assign_windows(&mut toks, &layout, &cfg);
        let ranges: Vec<_> = windows.iter().map(|w| w.segment_range).collect();
        assert_eq!(ranges, vec![(0, 0), (0, 1), (1, 1)]);
    }

    #[test]
    fn config_validation() {
        assert!(MinerConfig::default().validate().is_ok());
        let bad = [
            MinerConfig {
                min_len: 0,
                ..MinerConfig::default()
            },
            MinerConfig {
                min_len: 5,
                max_len: 4,
                ..MinerConfig::default()
            },
            MinerConfig {
                min_support: 1,
                ..MinerConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn merge_adds_counts() {
        let mut a = Dictionary::new();
        a.insert(Pattern::new(b"abc".to_vec(), 2, 3, 4));
        let mut b = Dictionary::new();
        b.insert(Pattern::new(b"abc".to_vec(), 3, 1, 2));
        b.insert(Pattern::new(b"zz".to_vec(), 2, 0, 0));
        let m = a.merge(&b);
        let abc = m.by_bytes(b"abc").unwrap();
        assert_eq!((abc.count, abc.first_seen, abc.last_seen), (5, 1, 4));
        assert_eq!(m.len(), 2);
        assert_eq!(a.merge(&Dictionary::new()), a);
    }
}
