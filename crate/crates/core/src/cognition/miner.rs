//! Greedy coverage miner.
//!
//! Selection rule: over the still-uncovered parts of the stream, pick the
//! substring with the highest `count * length`, where `count` is the
//! leftmost-greedy non-overlapping occurrence count among fully uncovered
//! occurrences and must reach `min_support`. Ties go to the longer
//! substring, then to the lexicographically smaller one. The chosen
//! occurrences are marked covered and the process repeats.
//!
//! Candidates come from a suffix array sorted on the first `max_len` bytes:
//! every run of adjacent suffixes sharing a prefix of length `L` is one
//! candidate of length `L` with its raw occurrence list. Covering bytes can
//! only lower a candidate's count (greedy-by-start is optimal for equal
//! length intervals, so fewer admissible intervals never yields more), which
//! lets the selection loop keep stale scores as upper bounds in a max-heap
//! and re-score lazily.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{
    assign_windows, tokenize_bytes, CognitionError, Dictionary, MinerConfig, Pattern, StreamLayout,
};
use crate::exec::Exec;
use crate::store::Segment;

pub fn mine_patterns(
    segments: &[Segment],
    config: &MinerConfig,
) -> Result<Dictionary, CognitionError> {
    mine_patterns_with(segments, config, Exec::default())
}

pub fn mine_patterns_with(
    segments: &[Segment],
    config: &MinerConfig,
    exec: Exec,
) -> Result<Dictionary, CognitionError> {
    mine_bytes(&super::concat(segments), config, exec)
}

/// Mines a single contiguous stream. First/last-seen windows are stamped
/// from the windows of the tokens covering each credited occurrence.
pub fn mine_bytes(
    stream: &[u8],
    config: &MinerConfig,
    exec: Exec,
) -> Result<Dictionary, CognitionError> {
    mine_bytes_bounded(stream, config, exec, &[])
}

/// Like [`mine_bytes`], but the leftmost non-overlapping occurrences of
/// `barrier` are covered before selection, so no pattern spans one. The
/// barrier itself becomes a pattern when it occurs at least `min_support`
/// times. An empty barrier changes nothing.
pub fn mine_bytes_bounded(
    stream: &[u8],
    config: &MinerConfig,
    exec: Exec,
    barrier: &[u8],
) -> Result<Dictionary, CognitionError> {
    config.validate()?;
    let mut covered = vec![false; stream.len()];
    let mut fence = Vec::new();
    if !barrier.is_empty() {
        let mut i = 0;
        while i + barrier.len() <= stream.len() {
            if &stream[i..i + barrier.len()] == barrier {
                covered[i..i + barrier.len()].fill(true);
                fence.push(i as u32);
                i += barrier.len();
            } else {
                i += 1;
            }
        }
    }
    let mut selected = select(stream, config, exec, covered);
    if fence.len() >= config.min_support {
        selected.push(Selected {
            bytes: barrier.to_vec(),
            offsets: fence,
        });
    }

    let mut dictionary = Dictionary::new();
    for s in &selected {
        dictionary.insert(Pattern::new(s.bytes.clone(), s.offsets.len() as u64, 0, 0));
    }
    if dictionary.is_empty() {
        return Ok(dictionary);
    }

    let mut tokens = tokenize_bytes(stream, &dictionary);
    let layout = StreamLayout {
        starts: vec![0],
        ids: vec![0],
        total: stream.len() as u64,
    };
    assign_windows(&mut tokens, &layout, config);
    let window_of = |offset: u64| {
        let idx = tokens.partition_point(|t| t.offset <= offset) - 1;
        tokens[idx].window_index
    };
    for s in &selected {
        let first = window_of(s.offsets[0] as u64);
        let last = window_of(*s.offsets.last().expect("count >= min_support") as u64);
        dictionary.insert(Pattern::new(
            s.bytes.clone(),
            s.offsets.len() as u64,
            first,
            last,
        ));
    }
    Ok(dictionary)
}

struct Selected {
    bytes: Vec<u8>,
    offsets: Vec<u32>,
}

struct Candidate {
    len: u32,
    /// Raw occurrence starts, ascending.
    positions: Vec<u32>,
    /// Position of this candidate's bytes in the global lexicographic order.
    lex_rank: u32,
}

#[derive(Clone, Copy, PartialEq, Eq)]
struct Key {
    score: u64,
    len: u32,
    lex_rank: u32,
    idx: u32,
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .cmp(&other.score)
            .then(self.len.cmp(&other.len))
            .then(other.lex_rank.cmp(&self.lex_rank))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn select(
    stream: &[u8],
    config: &MinerConfig,
    exec: Exec,
    mut covered: Vec<bool>,
) -> Vec<Selected> {
    assert!(
        stream.len() < u32::MAX as usize,
        "stream too large for 32-bit offsets"
    );
    let candidates = candidates(stream, config, exec);

    let key_of = |idx: usize, c: &Candidate, covered: &[bool]| Key {
        score: greedy_count(&c.positions, c.len, covered) as u64 * c.len as u64,
        len: c.len,
        lex_rank: c.lex_rank,
        idx: idx as u32,
    };
    let min_score = |len: u32| config.min_support as u64 * len as u64;

    let idxs: Vec<usize> = (0..candidates.len()).collect();
    let initial = exec.map(&idxs, |&i| key_of(i, &candidates[i], &covered));
    let mut heap: BinaryHeap<Key> = initial
        .into_iter()
        .filter(|k| k.score >= min_score(k.len))
        .collect();

    let mut out = Vec::new();
    while let Some(top) = heap.pop() {
        let c = &candidates[top.idx as usize];
        let fresh = key_of(top.idx as usize, c, &covered);
        if fresh.score < min_score(fresh.len) {
            continue;
        }
        if fresh != top {
            heap.push(fresh);
            continue;
        }
        let chosen = greedy_positions(&c.positions, c.len, &covered);
        for &p in &chosen {
            covered[p as usize..(p + c.len) as usize].fill(true);
        }
        let start = c.positions[0] as usize;
        out.push(Selected {
            bytes: stream[start..start + c.len as usize].to_vec(),
            offsets: chosen,
        });
    }
    out
}

fn admissible(p: u32, len: u32, covered: &[bool]) -> bool {
    !covered[p as usize..(p + len) as usize].contains(&true)
}

fn greedy_count(positions: &[u32], len: u32, covered: &[bool]) -> usize {
    let mut next_free = 0u32;
    let mut count = 0;
    for &p in positions {
        if p >= next_free && admissible(p, len, covered) {
            count += 1;
            next_free = p + len;
        }
    }
    count
}

fn greedy_positions(positions: &[u32], len: u32, covered: &[bool]) -> Vec<u32> {
    let mut next_free = 0u32;
    let mut out = Vec::new();
    for &p in positions {
        if p >= next_free && admissible(p, len, covered) {
            out.push(p);
            next_free = p + len;
        }
    }
    out
}

/// Every distinct substring of admissible length with at least
/// `min_support` raw occurrences.
fn candidates(stream: &[u8], config: &MinerConfig, exec: Exec) -> Vec<Candidate> {
    if stream.len() < config.min_len {
        return Vec::new();
    }
    let max_len = config.max_len.min(stream.len());
    let sa = suffix_order(stream, max_len);
    // lcp[j]: common prefix of suffixes sa[j-1] and sa[j], capped at max_len.
    let mut lcp = vec![0u32; sa.len()];
    for j in 1..sa.len() {
        let a = &stream[sa[j - 1] as usize..];
        let b = &stream[sa[j] as usize..];
        lcp[j] = a
            .iter()
            .zip(b)
            .take(max_len)
            .take_while(|(x, y)| x == y)
            .count() as u32;
    }

    let lens: Vec<u32> = (config.min_len as u32..=max_len as u32).collect();
    let per_len = exec.map(&lens, |&len| {
        let mut groups = Vec::new();
        let mut j = 0;
        while j < sa.len() {
            let mut k = j + 1;
            while k < sa.len() && lcp[k] >= len {
                k += 1;
            }
            if k - j >= config.min_support {
                let mut positions: Vec<u32> = sa[j..k].to_vec();
                positions.sort_unstable();
                groups.push((j, positions));
            }
            j = k;
        }
        groups
            .into_iter()
            .map(move |(rank, positions)| (rank, len, positions))
            .collect::<Vec<_>>()
    });

    let mut flat: Vec<(usize, u32, Vec<u32>)> = per_len.into_iter().flatten().collect();
    // Suffix-array rank of a group's first suffix orders candidates by bytes,
    // except that a prefix sorts before its extensions; break that tie on length.
    flat.sort_unstable_by_key(|&(rank, len, _)| (rank, len));
    flat.into_iter()
        .enumerate()
        .map(|(i, (_, len, positions))| Candidate {
            len,
            positions,
            lex_rank: i as u32,
        })
        .collect()
}

/// Suffix start positions sorted by their first `depth` bytes (prefix
/// doubling, stopped once the compared prefix reaches `depth`).
fn suffix_order(s: &[u8], depth: usize) -> Vec<u32> {
    let n = s.len();
    let mut sa: Vec<u32> = (0..n as u32).collect();
    sa.sort_unstable_by_key(|&i| (s[i as usize], i));
    let mut rank: Vec<u32> = s.iter().map(|&b| b as u32).collect();
    let mut tmp = vec![0u32; n];
    let mut k = 1usize;
    while k < depth {
        let key = |i: u32| {
            let i = i as usize;
            let second = if i + k < n { rank[i + k] + 1 } else { 0 };
            (rank[i], second)
        };
        sa.sort_unstable_by_key(|&i| (key(i), i));
        tmp[sa[0] as usize] = 0;
        for w in 1..n {
            let bump = u32::from(key(sa[w - 1]) != key(sa[w]));
            tmp[sa[w] as usize] = tmp[sa[w - 1] as usize] + bump;
        }
        std::mem::swap(&mut rank, &mut tmp);
        if rank[sa[n - 1] as usize] as usize == n - 1 {
            break;
        }
        k *= 2;
    }
    sa
}
