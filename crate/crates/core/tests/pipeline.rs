use cognistream::cognition::MinerConfig;
use cognistream::config::{RunConfig, StructureSpec};
use cognistream::hypotheses::HypothesisConfig;
use cognistream::pipeline::{analyze, replay_hypotheses, score};
use cognistream::queries::{self, Mode};
use cognistream::relevancy::RelevancyConfig;
use cognistream::store::StreamStore;
use cognistream::Exec;

const LOG: &[&str] = &[
    "user alice login ok\n",
    "user bob login ok\n",
    "user alice logout ok\n",
    "user carol login fail\n",
    "user bob logout ok\n",
    "user alice login ok\n",
    "user dave login ok\n",
    "user carol logout ok\n",
];

fn stored() -> (tempfile::TempDir, StreamStore) {
    let dir = tempfile::tempdir().unwrap();
    let mut store = StreamStore::open(dir.path()).unwrap();
    for round in 0..4 {
        for (i, line) in LOG.iter().enumerate() {
            store
                .append(line.as_bytes(), (round * LOG.len() + i) as u64, "auth")
                .unwrap();
        }
    }
    (dir, store)
}

#[test]
fn store_survives_reopen() {
    let (dir, store) = stored();
    let again = StreamStore::open(dir.path()).unwrap();
    assert_eq!(again.segments(), store.segments());
    assert_eq!(again.metadata_text(), store.metadata_text());
}

#[test]
fn log_lines_generalize_and_answer_queries() {
    let (_dir, store) = stored();
    let miner = MinerConfig {
        window_size: 64,
        ..MinerConfig::default()
    };
    let spec = StructureSpec::Delimiter(b"\n".to_vec());
    let a = analyze(&store.segments(), &miner, &spec, Exec::default()).unwrap();
    assert!(a
        .dictionary
        .iter()
        .all(|p| p.bytes == b"\n" || !p.bytes.contains(&b'\n')));
    let templates: Vec<_> = a.hierarchy.templates().collect();
    assert!(!templates.is_empty(), "no template over log lines");

    let scores = score(&a, &[], &RelevancyConfig::default()).unwrap();
    let kw = a
        .dictionary
        .iter()
        .filter(|p| p.bytes != b"\n")
        .max_by_key(|p| (p.count, p.bytes.clone()))
        .unwrap()
        .bytes
        .clone();
    let plan = queries::plan(0, &[kw], 0, &a.dictionary, &a.hierarchy, Mode::Exact).unwrap();
    let hits = queries::run(&[plan], &a.hierarchy, &scores).unwrap();
    assert!(!hits[&0].is_empty());

    let seq = analyze(&store.segments(), &miner, &spec, Exec::Sequential).unwrap();
    assert_eq!(seq.hierarchy.export(), a.hierarchy.export());
}

#[test]
fn replay_keeps_state_machine_safe() {
    let (_dir, store) = stored();
    let miner = MinerConfig {
        window_size: 16,
        ..MinerConfig::default()
    };
    let spec = StructureSpec::Delimiter(b"\n".to_vec());
    let a = analyze(&store.segments(), &miner, &spec, Exec::default()).unwrap();
    let cfg = HypothesisConfig {
        budget: 8,
        ..HypothesisConfig::default()
    };
    let run = replay_hypotheses(&a, &RelevancyConfig::default(), &cfg, 3, Exec::default()).unwrap();
    if let Some(run) = run {
        run.book.verify_safety().unwrap();
        assert!(run.split >= 1);
    }
}

#[test]
fn config_round_trip() {
    let cfg = RunConfig::parse(
        "[miner]\nmin_len = 3\nwindow_size = 8\n[structures]\nmode = delimiter\ndelimiter = 0a\n[dpu]\nshape = grid\nunits = 9\n",
    )
    .unwrap();
    assert_eq!(cfg.miner.min_len, 3);
    assert_eq!(cfg.structures, StructureSpec::Delimiter(vec![b'\n']));
    assert_eq!(cfg.dpu.unwrap().units, 9);
    assert!(RunConfig::parse("[miner]\nbogus = 1\n").is_err());
}
