//! Embedded, ordered, transactional key-value store.
//!
//! One [`Env`] is a directory holding an append-only commit log. The live
//! state is kept in persistent (copy-on-write) ordered maps, so:
//!
//! - exactly one read/write transaction runs at a time; others block in
//!   [`Env::begin`],
//! - any number of read-only transactions run concurrently with each other
//!   and with the writer, each pinned to the snapshot current at its start,
//! - a commit appends one checksummed record and then publishes the new
//!   snapshot; reopening replays the longest valid record prefix.
//!
//! Databases are named and come in two flavours: plain (one value per key)
//! and duplicate-key, where every key holds a sorted set of values.

mod env;
mod error;
mod log;
mod snapshot;
mod txn;

pub use bytes::Bytes;
pub use env::{Env, EnvConfig, EnvStat, Mode, SyncMode};
pub use error::{Error, Result};
pub use txn::{Db, EntryIter, Txn};

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicBool, Ordering};
    use std::sync::Arc;
    use std::time::Duration;

    fn env() -> (tempfile::TempDir, Env) {
        let dir = tempfile::tempdir().unwrap();
        let env = Env::open(dir.path(), EnvConfig::default()).unwrap();
        (dir, env)
    }

    #[test]
    fn fresh_env_is_empty() {
        let (_d, env) = env();
        assert_eq!(env.stat().databases, 0);
        assert!(env.begin_read().unwrap().db_names().is_empty());
    }

    #[test]
    fn abort_discards() {
        let (_d, env) = env();
        let db = env.open_db("t", false).unwrap();
        let mut w = env.begin_write().unwrap();
        w.put(&db, b"k", b"v").unwrap();
        w.abort();
        assert_eq!(env.begin_read().unwrap().get(&db, b"k").unwrap(), None);
    }

    #[test]
    fn dup_values_are_sorted() {
        let (_d, env) = env();
        let db = env.open_db("d", true).unwrap();
        let mut w = env.begin_write().unwrap();
        for v in [b"3", b"1", b"2"] {
            w.put(&db, b"k", v).unwrap();
        }
        w.commit().unwrap();
        let r = env.begin_read().unwrap();
        let vals: Vec<_> = r.dup_scan(&db, b"k").unwrap();
        assert_eq!(vals, vec![&b"1"[..], b"2", b"3"]);
        assert_eq!(r.get(&db, b"k").unwrap().unwrap(), &b"1"[..]);
    }

    #[test]
    fn durable_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        {
            let env = Env::open(dir.path(), EnvConfig::default()).unwrap();
            let db = env.open_db("t", false).unwrap();
            let mut w = env.begin_write().unwrap();
            w.put(&db, b"k", b"v").unwrap();
            w.commit().unwrap();
        }
        let env = Env::open(dir.path(), EnvConfig::default()).unwrap();
        let r = env.begin_read().unwrap();
        let db = r.db("t").unwrap().unwrap();
        assert_eq!(r.get(&db, b"k").unwrap().unwrap(), &b"v"[..]);
    }

    #[test]
    fn reader_sees_pre_writer_snapshot() {
        let (_d, env) = env();
        let db = env.open_db("t", false).unwrap();
        let mut w = env.begin_write().unwrap();
        w.put(&db, b"a", b"1").unwrap();
        w.commit().unwrap();

        let mut w = env.begin_write().unwrap();
        w.put(&db, b"a", b"2").unwrap();
        let r = env.begin_read().unwrap();
        assert_eq!(r.get(&db, b"a").unwrap().unwrap(), &b"1"[..]);
        w.commit().unwrap();
        assert_eq!(r.get(&db, b"a").unwrap().unwrap(), &b"1"[..]);
        assert_eq!(
            env.begin_read().unwrap().get(&db, b"a").unwrap().unwrap(),
            &b"2"[..]
        );
    }

    #[test]
    fn second_writer_blocks_until_first_finishes() {
        let (_d, env) = env();
        let db = env.open_db("t", false).unwrap();
        let w = env.begin_write().unwrap();
        let started = Arc::new(AtomicBool::new(false));
        let t = {
            let env = env.clone();
            let started = started.clone();
            let db = db.clone();
            std::thread::spawn(move || {
                let mut w2 = env.begin_write().unwrap();
                started.store(true, Ordering::SeqCst);
                w2.put(&db, b"x", b"y").unwrap();
                w2.commit().unwrap();
            })
        };
        std::thread::sleep(Duration::from_millis(50));
        assert!(!started.load(Ordering::SeqCst));
        w.abort();
        t.join().unwrap();
        assert!(started.load(Ordering::SeqCst));
    }

    #[test]
    fn closed_env_rejects_begin() {
        let (_d, env) = env();
        env.close();
        assert!(matches!(env.begin_read(), Err(Error::EnvClosed)));
        assert!(matches!(env.begin_write(), Err(Error::EnvClosed)));
    }

    #[test]
    fn read_only_violation() {
        let (_d, env) = env();
        let db = env.open_db("t", false).unwrap();
        let mut r = env.begin_read().unwrap();
        assert!(matches!(r.put(&db, b"k", b"v"), Err(Error::ReadOnly)));
        assert!(matches!(r.del(&db, b"k", None), Err(Error::ReadOnly)));
    }

    #[test]
    fn storage_full_and_growth() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = EnvConfig {
            map_size: 64,
            ..EnvConfig::default()
        };
        let env = Env::open(dir.path(), cfg.clone()).unwrap();
        let db = env.open_db("t", false).unwrap();
        let mut w = env.begin_write().unwrap();
        w.put(&db, b"k1", &[0u8; 40]).unwrap();
        assert!(matches!(
            w.put(&db, b"k2", &[0u8; 40]),
            Err(Error::StorageFull { .. })
        ));
        drop(w);

        let env2_dir = tempfile::tempdir().unwrap();
        let env2 = Env::open(
            env2_dir.path(),
            EnvConfig {
                allow_growth: true,
                ..cfg
            },
        )
        .unwrap();
        let db = env2.open_db("t", false).unwrap();
        let mut w = env2.begin_write().unwrap();
        w.put(&db, b"k1", &[0u8; 40]).unwrap();
        w.put(&db, b"k2", &[0u8; 40]).unwrap();
        w.commit().unwrap();
        assert!(env2.stat().map_size >= 84);
    }

    #[test]
    fn reopen_with_smaller_map_size() {
        let dir = tempfile::tempdir().unwrap();
        {
            let env = Env::open(dir.path(), EnvConfig::default()).unwrap();
            let db = env.open_db("t", false).unwrap();
            let mut w = env.begin_write().unwrap();
            w.put(&db, b"key", &[7u8; 100]).unwrap();
            w.commit().unwrap();
        }
        let small = EnvConfig {
            map_size: 50,
            ..EnvConfig::default()
        };
        assert!(matches!(
            Env::open(dir.path(), small.clone()),
            Err(Error::IncompatibleFormat(_))
        ));
        let env = Env::open(
            dir.path(),
            EnvConfig {
                allow_growth: true,
                ..small
            },
        )
        .unwrap();
        assert!(env.stat().map_size >= 103);
    }

    #[test]
    fn bad_magic_is_incompatible() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("data.log"), b"NOTALOGFILE_____").unwrap();
        assert!(matches!(
            Env::open(dir.path(), EnvConfig::default()),
            Err(Error::IncompatibleFormat(_))
        ));
    }

    #[test]
    fn second_open_is_locked() {
        let (d, _env) = env();
        assert!(matches!(
            Env::open(d.path(), EnvConfig::default()),
            Err(Error::Locked(_))
        ));
    }

    #[test]
    fn del_single_dup_and_whole_key() {
        let (_d, env) = env();
        let db = env.open_db("d", true).unwrap();
        let mut w = env.begin_write().unwrap();
        w.put(&db, b"k", b"a").unwrap();
        w.put(&db, b"k", b"b").unwrap();
        w.put(&db, b"j", b"c").unwrap();
        assert!(w.del(&db, b"k", Some(b"a")).unwrap());
        assert!(!w.del(&db, b"k", Some(b"zz")).unwrap());
        assert_eq!(w.dup_scan(&db, b"k").unwrap(), vec![&b"b"[..]]);
        assert!(w.del(&db, b"j", None).unwrap());
        assert!(!w.contains(&db, b"j").unwrap());
        assert_eq!(w.len(&db).unwrap(), 1);
        w.commit().unwrap();
    }

    #[test]
    fn prefix_scan() {
        let (_d, env) = env();
        let db = env.open_db("t", false).unwrap();
        let mut w = env.begin_write().unwrap();
        for k in ["a1", "b1", "b2", "c1"] {
            w.put(&db, k.as_bytes(), b"").unwrap();
        }
        let keys: Vec<_> = w.prefix(&db, b"b").unwrap().map(|(k, _)| k).collect();
        assert_eq!(keys, vec![&b"b1"[..], b"b2"]);
    }

    #[test]
    fn compaction_preserves_state() {
        let dir = tempfile::tempdir().unwrap();
        {
            let env = Env::open(dir.path(), EnvConfig::default()).unwrap();
            let db = env.open_db("d", true).unwrap();
            for i in 0..50u32 {
                let mut w = env.begin_write().unwrap();
                w.put(&db, &(i % 5).to_be_bytes(), &i.to_be_bytes()).unwrap();
                if i % 7 == 0 {
                    w.del(&db, &(i % 5).to_be_bytes(), Some(&i.to_be_bytes())).unwrap();
                }
                w.commit().unwrap();
            }
            let before: Vec<_> = env.begin_read().unwrap().iter(&db).unwrap().collect();
            env.compact().unwrap();
            assert_eq!(env.stat().log_records, 1);
            let after: Vec<_> = env.begin_read().unwrap().iter(&db).unwrap().collect();
            assert_eq!(before, after);
        }
        let env = Env::open(dir.path(), EnvConfig::default()).unwrap();
        let r = env.begin_read().unwrap();
        let db = r.db("d").unwrap().unwrap();
        assert_eq!(r.len(&db).unwrap(), 50 - 8);
    }
}
