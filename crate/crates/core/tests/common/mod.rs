//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use cognistream::cognition::MinerConfig;
use cognistream::store::Segment;
use cognistream::structures::{dedupe, StructureGroups, StructureInstance};
use cognistream::{Item, PatternId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn seg(id: u64, bytes: &[u8]) -> Segment {
    Segment {
        segment_id: id,
        bytes: bytes.to_vec(),
        timestamp: id,
        source_tag: String::new(),
    }
}

pub fn random_bytes(rng: &mut ChaCha8Rng, len: usize, alphabet: &[u8]) -> Vec<u8> {
    (0..len)
        .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
        .collect()
}

/// Straight-line greedy coverage by brute force: every substring's raw
/// occurrences are found by direct comparison, and every round recounts
/// every substring against the coverage mask. Returns `(bytes, count)`
/// sorted by bytes.
pub fn naive_mine(stream: &[u8], cfg: &MinerConfig) -> Vec<(Vec<u8>, u64)> {
    let n = stream.len();
    let mut occ: HashMap<&[u8], Vec<usize>> = HashMap::new();
    for len in cfg.min_len..=cfg.max_len.min(n) {
        for i in 0..=n - len {
            occ.entry(&stream[i..i + len]).or_default().push(i);
        }
    }
    occ.retain(|_, v| v.len() >= cfg.min_support);

    let mut covered = vec![false; n];
    let mut out = Vec::new();
    loop {
        let mut best: Option<(u64, usize, &[u8], Vec<usize>)> = None;
        for (&sub, starts) in &occ {
            let len = sub.len();
            let mut taken = Vec::new();
            let mut free_from = 0;
            for &p in starts {
                if p >= free_from && (p..p + len).all(|k| !covered[k]) {
                    taken.push(p);
                    free_from = p + len;
                }
            }
            if taken.len() < cfg.min_support {
                continue;
            }
            let score = (taken.len() * len) as u64;
            let better = match &best {
                None => true,
                Some((s, l, b, _)) => {
                    (score, len) > (*s, *l) || ((score, len) == (*s, *l) && sub < *b)
                }
            };
            if better {
                best = Some((score, len, sub, taken));
            }
        }
        let Some((_, len, sub, taken)) = best else {
            break;
        };
        for &p in &taken {
            covered[p..p + len].iter_mut().for_each(|c| *c = true);
        }
        out.push((sub.to_vec(), taken.len() as u64));
    }
    out.sort();
    out
}

/// Pattern item for a small symbol, with the id the dictionary would assign
/// to the two-byte pattern `[b'a' + sym, b'a' + sym]`.
pub fn sym(s: u8) -> Item {
    Item::Pattern(PatternId::of(&sym_bytes(s)))
}

pub fn sym_bytes(s: u8) -> Vec<u8> {
    vec![b'a' + s, b'a' + s]
}

/// Up to `max_leaves` distinct random structures of the given arity over
/// `alphabet` symbols, each observed 1..=3 times.
pub fn random_groups(
    rng: &mut ChaCha8Rng,
    max_leaves: usize,
    arity: usize,
    alphabet: u8,
) -> StructureGroups {
    let n = rng.gen_range(1..=max_leaves);
    let mut instances = Vec::new();
    let mut t = 0;
    for _ in 0..n {
        let items: Vec<Item> = (0..arity)
            .map(|_| sym(rng.gen_range(0..alphabet)))
            .collect();
        for _ in 0..rng.gen_range(1..=3) {
            instances.push(StructureInstance {
                items: items.clone(),
                timestamp: t,
                origin: (0, t),
            });
            t += 1;
        }
    }
    dedupe(instances)
}

/// Relevancy recurrence written out per step.
pub fn ewma_trace(counts: &[u64], decay: f64, saturation: u64) -> Vec<f64> {
    let mut s = 0.0;
    counts
        .iter()
        .map(|&c| {
            let x = if c >= saturation {
                1.0
            } else {
                c as f64 / saturation as f64
            };
            s = s * (1.0 - decay) + decay * x;
            s
        })
        .collect()
}

pub fn sums_to_one(d: &BTreeMap<Item, f64>, tol: f64) -> bool {
    (d.values().sum::<f64>() - 1.0).abs() <= tol
}
