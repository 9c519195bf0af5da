//! Benchmark reports: totals, per-block rates and message counts.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use shardgraph_cluster::rpc::MessageCounters;

pub const DEFAULT_BLOCK: u64 = 1_000_000;

/// Counts completed items from any number of threads and notes the time
/// each full block of `block_size` items completes.
#[derive(Debug)]
pub struct BlockClock {
    start: Instant,
    block_size: u64,
    done: AtomicU64,
    marks: Mutex<Vec<(u64, Instant)>>,
}

impl BlockClock {
    pub fn new(block_size: u64) -> Self {
        Self {
            start: Instant::now(),
            block_size: block_size.max(1),
            done: AtomicU64::new(0),
            marks: Default::default(),
        }
    }

    pub fn start(&self) -> Instant {
        self.start
    }

    pub fn add(&self, n: u64) {
        let before = self.done.fetch_add(n, Ordering::Relaxed);
        let after = before + n;
        let now = Instant::now();
        for b in before / self.block_size + 1..=after / self.block_size {
            self.marks.lock().unwrap_or_else(|e| e.into_inner()).push((b, now));
        }
    }

    pub fn done(&self) -> u64 {
        self.done.load(Ordering::Relaxed)
    }

    /// Blocks of the run ending at `end`. Full blocks come first; a partial
    /// last block holds the remainder.
    pub fn blocks(&self, end: Instant) -> Vec<Block> {
        let total = self.done();
        let mut out = Vec::new();
        let mut prev = self.start;
        let mut marks = self.marks.lock().unwrap_or_else(|e| e.into_inner()).clone();
        marks.sort_by_key(|m| m.0);
        for (_, at) in marks {
            out.push(Block {
                items: self.block_size,
                elapsed: at.saturating_duration_since(prev),
            });
            prev = at;
        }
        let rest = total - self.block_size * out.len() as u64;
        if rest > 0 || out.is_empty() {
            out.push(Block {
                items: rest,
                elapsed: end.saturating_duration_since(prev),
            });
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub items: u64,
    pub elapsed: Duration,
}

impl Block {
    pub fn rate(&self) -> f64 {
        rate(self.items, self.elapsed)
    }
}

pub fn rate(items: u64, d: Duration) -> f64 {
    if d.is_zero() {
        0.0
    } else {
        items as f64 / d.as_secs_f64()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub operation: String,
    pub items: u64,
    pub failed: u64,
    pub skipped: u64,
    pub wall: Duration,
    pub blocks: Vec<Block>,
    pub counters: Option<MessageCounters>,
    /// Free-form extra metrics, rendered after the standard ones.
    pub extra: Vec<(String, String)>,
}

impl BenchReport {
    pub fn new(operation: impl Into<String>) -> Self {
        Self {
            operation: operation.into(),
            ..Default::default()
        }
    }

    pub fn rate(&self) -> f64 {
        rate(self.items, self.wall)
    }

    pub fn messages(&self) -> Option<u64> {
        self.counters.as_ref().map(MessageCounters::total_sent)
    }

    fn metrics(&self) -> Vec<(String, String)> {
        let mut m = vec![
            ("operation".to_string(), self.operation.clone()),
            ("items".to_string(), self.items.to_string()),
            ("failed".to_string(), self.failed.to_string()),
            ("skipped".to_string(), self.skipped.to_string()),
            ("wall_secs".to_string(), format!("{:.6}", self.wall.as_secs_f64())),
            ("items_per_sec".to_string(), format!("{:.1}", self.rate())),
        ];
        if let Some(c) = &self.counters {
            m.push(("messages".to_string(), c.total_sent().to_string()));
            for (op, n) in &c.sent {
                m.push((format!("messages.op_{op:#06x}"), n.to_string()));
            }
        }
        for (i, b) in self.blocks.iter().enumerate() {
            m.push((format!("block.{i}.items"), b.items.to_string()));
            m.push((format!("block.{i}.secs"), format!("{:.6}", b.elapsed.as_secs_f64())));
            m.push((format!("block.{i}.items_per_sec"), format!("{:.1}", b.rate())));
        }
        m.extend(self.extra.iter().cloned());
        m
    }

    /// Aligned human-readable table.
    pub fn render_text(&self) -> String {
        let m = self.metrics();
        let width = m.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut s = String::new();
        for (k, v) in m {
            let _ = writeln!(s, "{k:<width$}  {v}");
        }
        s
    }

    /// One `key value` line per metric.
    pub fn render_metrics(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.metrics() {
            let _ = writeln!(s, "{k} {v}");
        }
        s
    }

    pub fn write_metrics(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.render_metrics())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_sum_to_total() {
        let c = BlockClock::new(10);
        for n in [3, 4, 9, 1, 20, 2] {
            c.add(n);
        }
        let blocks = c.blocks(Instant::now());
        assert_eq!(blocks.iter().map(|b| b.items).sum::<u64>(), 39);
        assert_eq!(blocks.len(), 4);
        assert_eq!(blocks[3].items, 9);
    }

    #[test]
    fn empty_run_has_one_empty_block() {
        let c = BlockClock::new(10);
        let b = c.blocks(Instant::now());
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].items, 0);
    }

    #[test]
    fn rate_is_total_over_wall() {
        let mut r = BenchReport::new("x");
        r.items = 500;
        r.wall = Duration::from_millis(250);
        assert!((r.rate() - 2000.0).abs() < 1e-9);
        let text = r.render_metrics();
        assert!(text.contains("items_per_sec 2000.0"));
        assert!(r.render_text().lines().all(|l| l.starts_with(|c: char| c.is_ascii_lowercase())));
    }
}
