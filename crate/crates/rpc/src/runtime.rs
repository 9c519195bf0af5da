//! Work-stealing task pool.
//!
//! External submissions go to a shared injector queue. A task submitted from
//! inside a worker goes to that worker's own deque. Idle workers first drain
//! their deque, then the injector, then steal from a random victim.

use std::cell::RefCell;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam::deque::{Injector, Steal, Stealer, Worker};
use parking_lot::{Condvar, Mutex};
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

pub type Task = Box<dyn FnOnce() + Send + 'static>;

/// Environment variable overriding the default worker count.
pub const WORKERS_ENV: &str = "SHARDGRAPH_WORKERS";
pub const DEFAULT_WORKERS: usize = 4;

static NEXT_POOL_ID: AtomicUsize = AtomicUsize::new(1);

thread_local! {
    static LOCAL: RefCell<Option<(usize, Worker<Task>)>> = const { RefCell::new(None) };
}

struct Shared {
    id: usize,
    injector: Injector<Task>,
    stealers: Vec<Stealer<Task>>,
    /// Submitted but not yet started.
    queued: AtomicUsize,
    running: AtomicUsize,
    shutdown: AtomicBool,
    joined: AtomicBool,
    sleep: Mutex<usize>,
    wake: Condvar,
    executed: Vec<AtomicU64>,
}

impl Shared {
    fn notify(&self) {
        let sleepers = self.sleep.lock();
        if *sleepers > 0 {
            self.wake.notify_one();
        }
    }
}

/// Handle to a pool of worker threads. Cloning shares the pool.
#[derive(Clone)]
pub struct TaskPool {
    shared: Arc<Shared>,
    threads: Arc<Mutex<Vec<JoinHandle<()>>>>,
}

impl std::fmt::Debug for TaskPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TaskPool")
            .field("workers", &self.shared.stealers.len())
            .finish()
    }
}

/// Worker count from `SHARDGRAPH_WORKERS`, else the default.
pub fn configured_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or(DEFAULT_WORKERS)
}

impl TaskPool {
    pub fn start(workers: usize) -> Self {
        let workers = workers.max(1);
        let locals: Vec<Worker<Task>> = (0..workers).map(|_| Worker::new_lifo()).collect();
        let shared = Arc::new(Shared {
            id: NEXT_POOL_ID.fetch_add(1, Ordering::Relaxed),
            injector: Injector::new(),
            stealers: locals.iter().map(Worker::stealer).collect(),
            queued: AtomicUsize::new(0),
            running: AtomicUsize::new(0),
            shutdown: AtomicBool::new(false),
            joined: AtomicBool::new(false),
            sleep: Mutex::new(0),
            wake: Condvar::new(),
            executed: (0..workers).map(|_| AtomicU64::new(0)).collect(),
        });
        let threads = locals
            .into_iter()
            .enumerate()
            .map(|(i, local)| {
                let shared = shared.clone();
                std::thread::Builder::new()
                    .name(format!("worker-{i}"))
                    .spawn(move || worker_loop(shared, i, local))
                    .expect("spawn worker")
            })
            .collect();
        Self {
            shared,
            threads: Arc::new(Mutex::new(threads)),
        }
    }

    pub fn workers(&self) -> usize {
        self.shared.stealers.len()
    }

    /// Queues `task`. After shutdown has completed the task runs inline on
    /// the caller so it is never lost.
    pub fn submit(&self, task: impl FnOnce() + Send + 'static) {
        let task: Task = Box::new(task);
        if self.shared.joined.load(Ordering::SeqCst) {
            task();
            return;
        }
        self.shared.queued.fetch_add(1, Ordering::SeqCst);
        let task = LOCAL.with(|l| match &*l.borrow() {
            Some((id, w)) if *id == self.shared.id => {
                w.push(task);
                None
            }
            _ => Some(task),
        });
        if let Some(task) = task {
            self.shared.injector.push(task);
        }
        self.shared.notify();
    }

    /// Tasks executed so far by each worker.
    pub fn executed_per_worker(&self) -> Vec<u64> {
        self.shared
            .executed
            .iter()
            .map(|c| c.load(Ordering::Relaxed))
            .collect()
    }

    /// Tasks submitted but not started yet.
    pub fn queued(&self) -> usize {
        self.shared.queued.load(Ordering::SeqCst)
    }

    /// Tasks currently executing.
    pub fn running(&self) -> usize {
        self.shared.running.load(Ordering::SeqCst)
    }

    /// True if the calling thread is one of this pool's workers.
    pub fn on_worker(&self) -> bool {
        LOCAL.with(|l| matches!(&*l.borrow(), Some((id, _)) if *id == self.shared.id))
    }

    /// Runs every queued task, then stops and joins the workers. Calling it
    /// again is a no-op. Must not be called from a worker of this pool.
    pub fn shutdown(&self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        {
            let _g = self.shared.sleep.lock();
            self.shared.wake.notify_all();
        }
        let threads: Vec<_> = std::mem::take(&mut *self.threads.lock());
        for t in threads {
            let _ = t.join();
        }
        self.shared.joined.store(true, Ordering::SeqCst);
        // Anything that raced in between the workers exiting and `joined`
        // being set still has to run.
        while let Steal::Success(task) = self.shared.injector.steal() {
            self.shared.queued.fetch_sub(1, Ordering::SeqCst);
            task();
        }
    }
}

fn find_task(shared: &Shared, me: usize, local: &Worker<Task>, rng: &mut SmallRng) -> Option<Task> {
    if let Some(t) = local.pop() {
        return Some(t);
    }
    loop {
        match shared.injector.steal_batch_and_pop(local) {
            Steal::Success(t) => return Some(t),
            Steal::Retry => continue,
            Steal::Empty => break,
        }
    }
    let n = shared.stealers.len();
    if n > 1 {
        let start = rng.gen_range(0..n);
        for k in 0..n {
            let victim = (start + k) % n;
            if victim == me {
                continue;
            }
            loop {
                match shared.stealers[victim].steal() {
                    Steal::Success(t) => return Some(t),
                    Steal::Retry => continue,
                    Steal::Empty => break,
                }
            }
        }
    }
    None
}

fn worker_loop(shared: Arc<Shared>, me: usize, local: Worker<Task>) {
    let mut rng = SmallRng::seed_from_u64(me as u64 ^ 0x9e37_79b9);
    LOCAL.with(|l| *l.borrow_mut() = Some((shared.id, local)));
    loop {
        let task = LOCAL.with(|l| {
            let b = l.borrow();
            let (_, local) = b.as_ref().expect("worker deque installed");
            find_task(&shared, me, local, &mut rng)
        });
        match task {
            Some(task) => {
                shared.running.fetch_add(1, Ordering::SeqCst);
                shared.queued.fetch_sub(1, Ordering::SeqCst);
                task();
                shared.running.fetch_sub(1, Ordering::SeqCst);
                shared.executed[me].fetch_add(1, Ordering::Relaxed);
            }
            None => {
                if shared.shutdown.load(Ordering::SeqCst) && shared.queued.load(Ordering::SeqCst) == 0 {
                    break;
                }
                let mut sleepers = shared.sleep.lock();
                if shared.queued.load(Ordering::SeqCst) > 0 && !shared.shutdown.load(Ordering::SeqCst) {
                    // work exists but is in a deque we failed to steal from
                    // this round (or is being pushed right now); retry
                    drop(sleepers);
                    std::thread::yield_now();
                    continue;
                }
                if shared.shutdown.load(Ordering::SeqCst) {
                    drop(sleepers);
                    std::thread::yield_now();
                    continue;
                }
                *sleepers += 1;
                shared.wake.wait_for(&mut sleepers, Duration::from_millis(50));
                *sleepers -= 1;
            }
        }
    }
    // Leave nothing behind in the local deque.
    LOCAL.with(|l| {
        if let Some((_, local)) = l.borrow_mut().take() {
            while let Some(task) = local.pop() {
                shared.queued.fetch_sub(1, Ordering::SeqCst);
                task();
                shared.executed[me].fetch_add(1, Ordering::Relaxed);
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::mpsc;
    use std::time::Instant;

    #[test]
    fn runs_every_task_exactly_once() {
        let pool = TaskPool::start(4);
        let counter = Arc::new(AtomicU64::new(0));
        for _ in 0..1000 {
            let c = counter.clone();
            pool.submit(move || {
                c.fetch_add(1, Ordering::SeqCst);
            });
        }
        pool.shutdown();
        assert_eq!(counter.load(Ordering::SeqCst), 1000);
        assert_eq!(pool.executed_per_worker().iter().sum::<u64>(), 1000);
    }

    #[test]
    fn nested_submit_on_single_worker() {
        let pool = TaskPool::start(1);
        let (tx, rx) = mpsc::channel();
        let inner_pool = pool.clone();
        pool.submit(move || {
            let tx2 = tx.clone();
            inner_pool.submit(move || tx2.send("inner").unwrap());
            tx.send("outer").unwrap();
        });
        let mut got: Vec<_> = (0..2).map(|_| rx.recv_timeout(Duration::from_secs(5)).unwrap()).collect();
        got.sort();
        assert_eq!(got, ["inner", "outer"]);
        pool.shutdown();
    }

    #[test]
    fn blocking_on_a_subtask_works_with_two_workers() {
        let pool = TaskPool::start(2);
        let (tx, rx) = mpsc::channel();
        let p = pool.clone();
        pool.submit(move || {
            let (itx, irx) = mpsc::channel();
            p.submit(move || itx.send(42).unwrap());
            tx.send(irx.recv().unwrap()).unwrap();
        });
        assert_eq!(rx.recv_timeout(Duration::from_secs(5)).unwrap(), 42);
        pool.shutdown();
    }

    #[test]
    fn empty_shutdown_is_prompt_and_idempotent() {
        let pool = TaskPool::start(4);
        let t = Instant::now();
        pool.shutdown();
        pool.shutdown();
        assert!(t.elapsed() < Duration::from_secs(2));
        let ran = Arc::new(AtomicBool::new(false));
        let r = ran.clone();
        pool.submit(move || r.store(true, Ordering::SeqCst));
        assert!(ran.load(Ordering::SeqCst));
    }

    #[test]
    fn shutdown_drains_queue() {
        let pool = TaskPool::start(2);
        let counter = Arc::new(AtomicU64::new(0));
        for _ in 0..200 {
            let c = counter.clone();
            pool.submit(move || {
                std::thread::sleep(Duration::from_micros(100));
                c.fetch_add(1, Ordering::SeqCst);
            });
        }
        pool.shutdown();
        assert_eq!(counter.load(Ordering::SeqCst), 200);
    }
}
