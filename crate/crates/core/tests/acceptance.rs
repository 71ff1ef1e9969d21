//! One PASS/FAIL line per acceptance criterion. Exits non-zero on any failure.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use cognistream::cognition::{
    mine_bytes, reconstruct, tokenize_bytes, Dictionary, MinerConfig, Pattern,
};
use cognistream::config::StructureSpec;
use cognistream::dpu::{contiguous_split, global_view, Shape, SimSettings, Topology, World};
use cognistream::forecast::{markov_predict, trend_predict, ClassSequence};
use cognistream::generalization::{build_hierarchy, Hierarchy};
use cognistream::hypotheses::{
    check, correct_all, lifecycle_scan, HypothesisBook, HypothesisConfig, HypothesisState,
};
use cognistream::pipeline;
use cognistream::queries::{self, Mode};
use cognistream::relevancy::{RelevancyConfig, Scores, Subject};
use cognistream::structures::{dedupe, merge_groups, StructureGroups, StructureInstance};
use cognistream::{Exec, Item, NodeId, PatternId};
use common::*;
use rand::seq::SliceRandom;
use rand::Rng;

const MINER_BUDGET: Duration = Duration::from_secs(10);
const FORECAST_TOL: f64 = 1e-9;
const PERIODIC_TOL: f64 = 1e-12;
const RELEVANCY_TOL: f64 = 1e-12;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn mined_streams() -> Vec<Vec<u8>> {
    let mut r = rng(0x5eed_0001);
    let mut streams: Vec<Vec<u8>> = (0..200)
        .map(|_| {
            let len = r.gen_range(64..=4096);
            random_bytes(&mut r, len, b"abcdef")
        })
        .collect();
    streams.push(b"abcabcabc".to_vec());
    streams
}

fn miner_oracle(streams: &[Vec<u8>]) -> Outcome {
    let cfg = MinerConfig::default();
    let mut elapsed = Duration::ZERO;
    for (i, s) in streams.iter().enumerate() {
        let start = Instant::now();
        let dict = mine_bytes(s, &cfg, Exec::default()).map_err(|e| e.to_string())?;
        elapsed += start.elapsed();
        let want = naive_mine(s, &cfg);
        ensure(dict.counts() == want, || {
            format!("stream {i} (len {}) differs from oracle", s.len())
        })?;
    }
    let abc = mine_bytes(b"abcabcabc", &cfg, Exec::default()).map_err(|e| e.to_string())?;
    ensure(abc.counts() == vec![(b"abc".to_vec(), 3)], || {
        format!("abcabcabc gave {:?}", abc.counts())
    })?;
    ensure(elapsed < MINER_BUDGET, || {
        format!("mining took {elapsed:?}")
    })?;
    Ok(format!(
        "{} streams, mining {:.2}s",
        streams.len(),
        elapsed.as_secs_f64()
    ))
}

fn reconstruction(streams: &[Vec<u8>]) -> Outcome {
    let cfg = MinerConfig::default();
    for (i, s) in streams.iter().enumerate() {
        let dict = mine_bytes(s, &cfg, Exec::default()).map_err(|e| e.to_string())?;
        let tokens = tokenize_bytes(s, &dict);
        ensure(reconstruct(&tokens, &dict) == *s, || {
            format!("stream {i} does not round-trip")
        })?;
    }
    Ok(format!("{} streams bit-exact", streams.len()))
}

fn pigeonhole() -> Outcome {
    let cfg = MinerConfig {
        min_len: 1,
        min_support: 2,
        ..MinerConfig::default()
    };
    let all: Vec<u8> = (0..=255).collect();
    let mut r = rng(0x5eed_0003);
    for i in 0..50 {
        let s = random_bytes(&mut r, 257, &all);
        let dict = mine_bytes(&s, &cfg, Exec::default()).map_err(|e| e.to_string())?;
        ensure(!dict.is_empty(), || format!("stream {i} mined nothing"))?;
    }
    Ok("50 streams non-empty".into())
}

fn hierarchy_consistency() -> Outcome {
    let mut r = rng(0x5eed_0004);
    for case in 0..100 {
        let arity = r.gen_range(3..=4);
        let groups = random_groups(&mut r, 50, arity, 5);
        let h = build_hierarchy(&groups);
        let leaves: Vec<_> = h.leaves().collect();
        for leaf in &leaves {
            let items = leaf.items().expect("leaf");
            let ancestors = h.ancestors(leaf.node_id).map_err(|e| e.to_string())?;
            for n in h.nodes().filter(|n| n.node_id != leaf.node_id) {
                let matches = n.strict_match(&items).map_err(|e| e.to_string())?;
                ensure(ancestors.contains(&n.node_id) == matches, || {
                    format!(
                        "case {case}: leaf {} / node {} ancestor≠match",
                        leaf.node_id, n.node_id
                    )
                })?;
            }
        }
        for n in h.nodes() {
            let want: u64 = leaves
                .iter()
                .filter(|l| n.strict_match(&l.items().expect("leaf")) == Ok(true))
                .map(|l| l.support)
                .sum();
            ensure(n.support == want, || {
                format!(
                    "case {case}: node {} support {} != {want}",
                    n.node_id, n.support
                )
            })?;
        }
        let total: u64 = groups.values().map(|g| g.count).sum();
        ensure(
            leaves.iter().map(|l| l.support).sum::<u64>() == total,
            || format!("case {case}: leaf support"),
        )?;

        let mut instances: Vec<StructureInstance> =
            groups.values().flat_map(|g| g.instances.clone()).collect();
        instances.shuffle(&mut r);
        let mut permuted = StructureGroups::new();
        for chunk in instances.chunks(3) {
            merge_groups(&mut permuted, &dedupe(chunk.to_vec()));
        }
        ensure(build_hierarchy(&permuted).export() == h.export(), || {
            format!("case {case}: permuted export differs")
        })?;
    }
    Ok("100 leaf sets".into())
}

fn hypothesis_lifecycle() -> Outcome {
    let items = |s: &[u8]| -> Vec<Item> { s.iter().map(|&c| sym(c)).collect() };
    let inst = |s: &[u8], ts: u64| StructureInstance {
        items: items(s),
        timestamp: ts,
        origin: (0, ts),
    };
    // Template (0, {1,2}, 3); 4 is the injected value, 5 and 6 the observed ones.
    let base = || build_hierarchy(&dedupe([inst(&[0, 1, 3], 0), inst(&[0, 2, 3], 1)]));
    let cfg = HypothesisConfig::default();
    let inject = BTreeSet::from([1]);

    let mut h = base();
    let t = h.roots().next().ok_or("no template")?.node_id;
    let mut book = HypothesisBook::new();
    let confirm = book.propose(t, items(&[0, 4, 3]), inject.clone(), 0, 0.0);
    check(&mut book, &mut h, &[inst(&[0, 4, 3], 1)], &cfg).map_err(|e| e.to_string())?;
    let slot_has = h.get(t).map_err(|e| e.to_string())?.positions[1].contains(sym(4));
    ensure(
        book.get(confirm).unwrap().state == HypothesisState::Confirmed && slot_has,
        || "confirm".into(),
    )?;

    let mut h = base();
    let fix = book.propose(t, items(&[0, 4, 3]), inject.clone(), 2, 0.0);
    let misses: Vec<_> = [5, 5, 6, 5]
        .iter()
        .enumerate()
        .map(|(i, &v)| inst(&[0, v, 3], 3 + i as u64))
        .collect();
    check(&mut book, &mut h, &misses[..3], &cfg).map_err(|e| e.to_string())?;
    let pairs = correct_all(&mut book, &h, &cfg, 5);
    ensure(pairs.len() == 1 && pairs[0].0 == fix, || {
        format!("correct: {pairs:?}")
    })?;
    let succ = book.get(pairs[0].1).unwrap();
    ensure(
        succ.items == items(&[0, 5, 3])
            && book.get(fix).unwrap().state == HypothesisState::Superseded,
        || "correct: wrong successor".into(),
    )?;

    let mut h = base();
    let noisy = book.propose(t, items(&[0, 4, 3]), inject.clone(), 10, 0.0);
    let stream: Vec<_> = (0..5)
        .map(|i| inst(&[0, 5 + (i % 2) as u8, 3], 10 + i))
        .collect();
    check(&mut book, &mut h, &stream, &cfg).map_err(|e| e.to_string())?;
    let rejected = lifecycle_scan(&mut book, 14, &cfg);
    ensure(rejected.contains(&noisy), || {
        format!("fluctuation: rejected {rejected:?}")
    })?;

    let quiet = book.propose(NodeId(1), items(&[0, 4, 3]), inject, 20, 0.0);
    for w in 21..=28 {
        ensure(!lifecycle_scan(&mut book, w, &cfg).contains(&quiet), || {
            format!("timeout: early at {w}")
        })?;
    }
    ensure(lifecycle_scan(&mut book, 29, &cfg).contains(&quiet), || {
        "timeout: not rejected".into()
    })?;
    ensure(
        book.get(quiet).unwrap().state == HypothesisState::Rejected,
        || "timeout state".into(),
    )?;
    book.verify_safety().map_err(|e| e.to_string())?;
    Ok("confirm, correct, fluctuation, timeout; safety replay ok".into())
}

fn synonyms_oracle(h: &Hierarchy, item: Item) -> BTreeSet<Item> {
    let mut out = BTreeSet::from([item]);
    for n in h.nodes().filter(|n| !n.is_leaf()) {
        for p in &n.positions {
            if let Some(s) = p.as_slot() {
                if s.vector.contains_key(&item) {
                    out.extend(s.vector.keys().copied());
                }
            }
        }
    }
    out
}

fn direct_scan(
    h: &Hierarchy,
    dict: &Dictionary,
    keywords: &[Vec<u8>],
    mode: Mode,
) -> Vec<StructureInstance> {
    let resolved: Vec<Item> = keywords
        .iter()
        .filter_map(|k| dict.by_bytes(k))
        .map(|p| Item::Pattern(p.pattern_id))
        .collect();
    let unresolved = keywords.iter().any(|k| dict.by_bytes(k).is_none());
    if resolved.is_empty() || (mode == Mode::Narrow && unresolved) {
        return Vec::new();
    }
    let accepted: Vec<BTreeSet<Item>> = resolved
        .iter()
        .map(|&k| {
            if mode == Mode::Broaden {
                synonyms_oracle(h, k)
            } else {
                BTreeSet::from([k])
            }
        })
        .collect();
    let mut hits = BTreeSet::new();
    for leaf in h.leaves() {
        let items = leaf.items().expect("leaf");
        if accepted.iter().all(|a| items.iter().any(|i| a.contains(i))) {
            hits.extend(leaf.instances.iter().cloned());
        }
    }
    let mut v: Vec<_> = hits.into_iter().collect();
    v.sort_by_key(|i| (i.timestamp, i.origin));
    v
}

fn query_equivalence() -> Outcome {
    let mut dict = Dictionary::new();
    for s in 0..5 {
        dict.insert(Pattern::new(sym_bytes(s), 2, 0, 0));
    }
    let mut r = rng(0x5eed_0006);
    let (mut total, mut nonempty) = (0, 0);
    for case in 0..100 {
        let mut groups = random_groups(&mut r, 40, 3, 5);
        merge_groups(&mut groups, &random_groups(&mut r, 20, 4, 5));
        let h = build_hierarchy(&groups);
        let mode = [Mode::Exact, Mode::Broaden, Mode::Narrow][case % 3];
        let mut plans = Vec::new();
        let mut asked = Vec::new();
        for q in 0..r.gen_range(1..=10u64) {
            // Symbol 5 is absent from the dictionary.
            let kws: Vec<Vec<u8>> = (0..r.gen_range(1..=3))
                .map(|_| sym_bytes(r.gen_range(0..6)))
                .collect();
            plans.push(queries::plan(q, &kws, 0, &dict, &h, mode).map_err(|e| e.to_string())?);
            asked.push(kws);
        }
        let got = queries::run(&plans, &h, &Scores::new()).map_err(|e| e.to_string())?;
        for (q, kws) in asked.iter().enumerate() {
            let want = direct_scan(&h, &dict, kws, mode);
            ensure(got[&(q as u64)] == want, || {
                format!("case {case} query {q} ({mode:?}) differs")
            })?;
            total += 1;
            nonempty += usize::from(!want.is_empty());
        }
    }
    Ok(format!(
        "100 hierarchies, {total} queries ({nonempty} with hits)"
    ))
}

fn forecast() -> Outcome {
    let mut r = rng(0x5eed_0007);
    let mut checked = 0;
    for case in 0..500 {
        let len = r.gen_range(2..40);
        let labels: Vec<Item> = (0..len).map(|_| sym(r.gen_range(0..4))).collect();
        let mut window_distributions = Vec::new();
        for (w, chunk) in labels.chunks(r.gen_range(1..=5)).enumerate() {
            let mut d: BTreeMap<Item, f64> = BTreeMap::new();
            for &l in chunk {
                *d.entry(l).or_default() += 1.0 / chunk.len() as f64;
            }
            window_distributions.push((w as u64, d));
        }
        let seq = ClassSequence {
            template_id: NodeId(0),
            class_position: 0,
            labels,
            window_distributions,
        };
        let alpha = [0.0, 0.5, 1.0, 2.0][case % 4];
        let m = markov_predict(&seq, alpha).map_err(|e| e.to_string())?;
        ensure(sums_to_one(&m.distribution, FORECAST_TOL), || {
            format!("case {case}: markov sum")
        })?;
        ensure(m.distribution.values().all(|&p| p >= 0.0), || {
            format!("case {case}: markov negative")
        })?;
        checked += 1;
        if seq.window_distributions.len() >= 2 {
            let t = trend_predict(&seq).map_err(|e| e.to_string())?;
            ensure(sums_to_one(&t.distribution, FORECAST_TOL), || {
                format!("case {case}: trend sum")
            })?;
            ensure(t.distribution.values().all(|&p| p >= 0.0), || {
                format!("case {case}: trend negative")
            })?;
            checked += 1;
        }
    }
    for len in 4..=24 {
        let (a, b) = (sym(r.gen_range(0..2)), sym(r.gen_range(2..4)));
        let labels: Vec<Item> = (0..len).map(|i| if i % 2 == 0 { a } else { b }).collect();
        let next = labels[len - 2];
        let seq = ClassSequence {
            template_id: NodeId(0),
            class_position: 0,
            labels,
            window_distributions: vec![],
        };
        let f = markov_predict(&seq, 0.0).map_err(|e| e.to_string())?;
        let p = f.distribution.get(&next).copied().unwrap_or(0.0);
        ensure((p - 1.0).abs() <= PERIODIC_TOL, || {
            format!("period-2 len {len}: p={p}")
        })?;
    }
    Ok(format!(
        "{checked} forecasts normalized; period-2 lengths 4..=24 certain"
    ))
}

/// Blocks over disjoint alphabets, each closed by a byte used nowhere else,
/// so no pattern or structure spans two blocks.
fn block_segments(r: &mut impl Rng, blocks: usize) -> Vec<cognistream::store::Segment> {
    (0..blocks)
        .map(|b| {
            let base = 0x20 + 4 * b as u8;
            let alphabet = [base, base + 1, base + 2];
            let len = r.gen_range(30..90);
            let mut bytes: Vec<u8> = (0..len).map(|_| alphabet[r.gen_range(0..3)]).collect();
            bytes.push(base + 3);
            seg(b as u64, &bytes)
        })
        .collect()
}

fn dpu_bounds() -> Outcome {
    let mut r = rng(0x5eed_0008);
    let topologies = [
        (Shape::Ring, 6),
        (Shape::Ring, 9),
        (Shape::Mesh, 5),
        (Shape::Mesh, 9),
        (Shape::Grid, 9),
    ];
    let mut queries_checked = 0;
    for (shape, n) in topologies {
        for ttl in [1, 2, 3, n as u64] {
            let segments = block_segments(&mut r, n + 3);
            let settings = SimSettings {
                ttl,
                ..SimSettings::default()
            };
            let build = |exec: Exec| -> Result<(World, Vec<_>), String> {
                let topo = Topology::new(shape, n).map_err(|e| e.to_string())?;
                let mut w = World::partitioned(
                    topo,
                    SimSettings {
                        exec,
                        ..settings.clone()
                    },
                    contiguous_split(&segments, n),
                )
                .map_err(|e| e.to_string())?;
                w.mine_all().map_err(|e| e.to_string())?;
                let mut ids = Vec::new();
                for q in 0..n as u64 {
                    let origin = (q as usize * 7) % n;
                    let kw = segments[q as usize].bytes[..2].to_vec();
                    ids.push(
                        w.inject_query(origin, q, vec![kw])
                            .map_err(|e| e.to_string())?,
                    );
                }
                w.run(1000);
                Ok((w, ids))
            };
            let (w1, ids) = build(Exec::Parallel)?;
            let (w2, _) = build(Exec::Parallel)?;
            let (w3, _) = build(Exec::Sequential)?;
            ensure(w1.is_quiet(), || {
                format!("{shape} {n} ttl {ttl}: not quiet")
            })?;
            ensure(
                w1.transcript() == w2.transcript() && w1.transcript() == w3.transcript(),
                || format!("{shape} {n} ttl {ttl}: transcripts differ"),
            )?;
            let bound = n as u64 * (ttl + 1);
            for id in ids {
                let d = w1.deliveries(id);
                ensure(d <= bound, || {
                    format!("{shape} {n} ttl {ttl}: query {id} delivered {d} > {bound}")
                })?;
                queries_checked += 1;
            }
        }
    }

    for split in 0..20 {
        let n = 2 + split % 4;
        let blocks = n + r.gen_range(0..4);
        let segments = block_segments(&mut r, blocks);
        let settings = SimSettings {
            ttl: n as u64,
            ..SimSettings::default()
        };
        let mut w = World::partitioned(
            Topology::new(Shape::Ring, n).map_err(|e| e.to_string())?,
            settings.clone(),
            contiguous_split(&segments, n),
        )
        .map_err(|e| e.to_string())?;
        w.mine_all().map_err(|e| e.to_string())?;
        let (dict, h) = global_view(&w);
        let single = pipeline::analyze(
            &segments,
            &settings.miner,
            &StructureSpec::default(),
            Exec::default(),
        )
        .map_err(|e| e.to_string())?;
        ensure(dict.counts() == single.dictionary.counts(), || {
            format!("split {split}: dictionaries differ")
        })?;
        ensure(h.export() == single.hierarchy.export(), || {
            format!("split {split}: hierarchies differ")
        })?;
    }
    Ok(format!(
        "{queries_checked} queries within N·(TTL+1); transcripts identical; 20 splits equivalent"
    ))
}

fn relevancy() -> Outcome {
    let subject = Subject::Pattern(PatternId(7));
    let run = |counts: &[u64], cfg: &RelevancyConfig| -> Result<Vec<f64>, String> {
        let mut s = Scores::new();
        let mut out = Vec::new();
        for (w, &c) in counts.iter().enumerate() {
            s.update_window(w as u64, &BTreeMap::from([(subject, c)]), cfg)
                .map_err(|e| e.to_string())?;
            out.push(s.score(subject));
        }
        Ok(out)
    };
    let cfg = RelevancyConfig {
        decay: 0.5,
        saturation: 4,
        ..RelevancyConfig::default()
    };
    let got = run(&[4, 2, 0], &cfg)?;
    let close = |a: &[f64], b: &[f64]| {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= RELEVANCY_TOL)
    };
    ensure(close(&got, &[0.5, 0.5, 0.25]), || format!("trace {got:?}"))?;

    let mut r = rng(0x5eed_0009);
    for i in 0..10_000 {
        let cfg = RelevancyConfig {
            decay: r.gen_range(0.01..=1.0),
            saturation: r.gen_range(1..10),
            ..RelevancyConfig::default()
        };
        let counts: Vec<u64> = (0..r.gen_range(1..20))
            .map(|_| r.gen_range(0..20))
            .collect();
        let got = run(&counts, &cfg)?;
        ensure(got.iter().all(|s| (0.0..=1.0).contains(s)), || {
            format!("sequence {i} left [0,1]: {got:?}")
        })?;
        if i < 1000 {
            let want = ewma_trace(&counts, cfg.decay, cfg.saturation);
            ensure(close(&got, &want), || {
                format!("sequence {i}: {got:?} vs {want:?}")
            })?;
        }
    }
    Ok("traces within 1e-12; 10000 sequences bounded".into())
}

fn main() {
    let streams = mined_streams();
    let criteria: Vec<Criterion> = vec![
        (
            "miner-oracle-equivalence",
            Box::new(|| miner_oracle(&streams)),
        ),
        (
            "stream-reconstruction",
            Box::new(|| reconstruction(&streams)),
        ),
        ("pigeonhole", Box::new(pigeonhole)),
        ("hierarchy-consistency", Box::new(hierarchy_consistency)),
        ("hypothesis-lifecycle", Box::new(hypothesis_lifecycle)),
        ("query-equivalence", Box::new(query_equivalence)),
        ("forecast-normalization-periodicity", Box::new(forecast)),
        ("dpu-protocol-bounds", Box::new(dpu_bounds)),
        ("relevancy-recurrence", Box::new(relevancy)),
    ];
    let mut failed = 0;
    for (name, f) in &criteria {
        match f() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
