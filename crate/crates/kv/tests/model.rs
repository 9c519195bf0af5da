use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use proptest::prelude::*;
use shardgraph_kv::{Env, EnvConfig};

#[derive(Debug, Clone)]
enum Step {
    Put(u8, u8),
    DelKey(u8),
    DelPair(u8, u8),
    Commit,
    Abort,
    Reopen,
}

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        4 => (0u8..8, 0u8..6).prop_map(|(k, v)| Step::Put(k, v)),
        1 => (0u8..8).prop_map(Step::DelKey),
        1 => (0u8..8, 0u8..6).prop_map(|(k, v)| Step::DelPair(k, v)),
        2 => Just(Step::Commit),
        1 => Just(Step::Abort),
        1 => Just(Step::Reopen),
    ]
}

type Model = BTreeMap<u8, BTreeSet<u8>>;

fn dump(env: &Env) -> Model {
    let r = env.begin_read().unwrap();
    let db = r.db("d").unwrap().unwrap();
    let mut m = Model::new();
    let mut last_key = None;
    for (k, v) in r.iter(&db).unwrap() {
        // ordered iteration: keys ascending, values ascending within a key
        let cur = (k[0], v[0]);
        if let Some(prev) = last_key {
            assert!(prev < cur, "iteration out of order: {prev:?} then {cur:?}");
        }
        last_key = Some(cur);
        m.entry(k[0]).or_default().insert(v[0]);
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Committed state always equals the model of committed steps, across
    /// aborts and reopen.
    #[test]
    fn committed_state_matches_model(steps in proptest::collection::vec(step(), 1..60)) {
        let dir = tempfile::tempdir().unwrap();
        let mut env = Env::open(dir.path(), EnvConfig::default()).unwrap();
        env.open_db("d", true).unwrap();
        let mut committed = Model::new();
        let mut pending = committed.clone();
        let mut txn = None;
        for s in steps {
            match s {
                Step::Put(k, v) => {
                    let t = txn.get_or_insert_with(|| env.begin_write().unwrap());
                    let db = t.db("d").unwrap().unwrap();
                    t.put(&db, &[k], &[v]).unwrap();
                    pending.entry(k).or_default().insert(v);
                }
                Step::DelKey(k) => {
                    let t = txn.get_or_insert_with(|| env.begin_write().unwrap());
                    let db = t.db("d").unwrap().unwrap();
                    let found = t.del(&db, &[k], None).unwrap();
                    prop_assert_eq!(found, pending.remove(&k).is_some());
                }
                Step::DelPair(k, v) => {
                    let t = txn.get_or_insert_with(|| env.begin_write().unwrap());
                    let db = t.db("d").unwrap().unwrap();
                    let found = t.del(&db, &[k], Some(&[v])).unwrap();
                    let expect = pending.get_mut(&k).map(|s| s.remove(&v)).unwrap_or(false);
                    if pending.get(&k).is_some_and(|s| s.is_empty()) {
                        pending.remove(&k);
                    }
                    prop_assert_eq!(found, expect);
                }
                Step::Commit => {
                    if let Some(t) = txn.take() { t.commit().unwrap(); }
                    committed = pending.clone();
                }
                Step::Abort => {
                    if let Some(t) = txn.take() { t.abort(); }
                    pending = committed.clone();
                }
                Step::Reopen => {
                    if let Some(t) = txn.take() { t.abort(); }
                    pending = committed.clone();
                    drop(env);
                    env = Env::open(dir.path(), EnvConfig::default()).unwrap();
                }
            }
            if txn.is_none() {
                prop_assert_eq!(dump(&env), committed.clone());
            }
        }
    }
}

/// Writers increment a counter and log their increment; readers check each
/// snapshot is internally consistent while writers run.
#[test]
fn concurrent_writers_serialize_and_readers_see_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let env = Env::open(dir.path(), EnvConfig::default()).unwrap();
    let ctr = env.open_db("ctr", false).unwrap();
    let log = env.open_db("log", false).unwrap();
    let done = Arc::new(AtomicBool::new(false));
    let checks = Arc::new(AtomicU64::new(0));

    let readers: Vec<_> = (0..2)
        .map(|_| {
            let (env, ctr, log, done, checks) =
                (env.clone(), ctr.clone(), log.clone(), done.clone(), checks.clone());
            std::thread::spawn(move || {
                while !done.load(Ordering::SeqCst) {
                    let r = env.begin_read().unwrap();
                    let n = r
                        .get(&ctr, b"n")
                        .unwrap()
                        .map(|v| u64::from_be_bytes(v[..].try_into().unwrap()))
                        .unwrap_or(0);
                    let first = r.len(&log).unwrap();
                    std::thread::yield_now();
                    assert_eq!(first, n, "torn read");
                    assert_eq!(r.len(&log).unwrap(), n, "snapshot changed under reader");
                    checks.fetch_add(1, Ordering::Relaxed);
                }
            })
        })
        .collect();

    let writers: Vec<_> = (0..4u64)
        .map(|w| {
            let (env, ctr, log) = (env.clone(), ctr.clone(), log.clone());
            std::thread::spawn(move || {
                for i in 0..250u64 {
                    let mut t = env.begin_write().unwrap();
                    let n = t
                        .get(&ctr, b"n")
                        .unwrap()
                        .map(|v| u64::from_be_bytes(v[..].try_into().unwrap()))
                        .unwrap_or(0);
                    t.put(&ctr, b"n", &(n + 1).to_be_bytes()).unwrap();
                    t.put(&log, &(n + 1).to_be_bytes(), &(w * 1000 + i).to_be_bytes())
                        .unwrap();
                    t.commit().unwrap();
                }
            })
        })
        .collect();
    for w in writers {
        w.join().unwrap();
    }
    done.store(true, Ordering::SeqCst);
    for r in readers {
        r.join().unwrap();
    }

    let r = env.begin_read().unwrap();
    assert_eq!(r.len(&log).unwrap(), 1000);
    // each writer's entries appear in its program order
    let mut last = [None::<u64>; 4];
    for (_, v) in r.iter(&log).unwrap() {
        let tag = u64::from_be_bytes(v[..].try_into().unwrap());
        let (w, i) = ((tag / 1000) as usize, tag % 1000);
        if let Some(p) = last[w] {
            assert!(i > p);
        }
        last[w] = Some(i);
    }
    assert!(checks.load(Ordering::Relaxed) > 0);
}
