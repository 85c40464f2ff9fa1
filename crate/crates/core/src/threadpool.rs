//! Fixed-size task pool over one shared queue, plus a contention benchmark.
//!
//! An idle worker yields a few times before parking on a condition variable.
//! A submit only signals when the queue outgrows the workers that are awake,
//! so a burst of tiny tasks costs a handful of wakeups instead of one per task
//! when the pool is oversubscribed.

use std::collections::VecDeque;
use std::marker::PhantomData;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

type Job = Box<dyn FnOnce() + Send + 'static>;

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("a pool needs at least one worker")]
    ZeroWorkers,
    #[error("failed to start worker thread: {0}")]
    Spawn(#[from] std::io::Error),
    #[error("pool has been shut down")]
    ShutDown,
}

#[derive(Default)]
struct State {
    queue: VecDeque<Job>,
    /// Queued plus running.
    pending: usize,
    parked: usize,
    /// Workers that have entered their loop.
    ready: usize,
    /// Wakeups sent but not yet picked up; never more than `parked`.
    signalled: usize,
    shutdown: bool,
    panicked: usize,
}

struct Shared {
    state: Mutex<State>,
    work: Condvar,
    idle: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        // Jobs run outside the lock, so a poisoned mutex only means a panic in
        // our own bookkeeping; the state is still consistent.
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct Pool {
    shared: Arc<Shared>,
    workers: Vec<JoinHandle<()>>,
}

/// Options for [`Pool`] creation.
#[derive(Debug, Clone, Copy)]
pub struct PoolBuilder {
    size: usize,
    pin: bool,
}

impl PoolBuilder {
    /// Best-effort pinning of worker `i` to CPU `i mod available`.
    pub fn pin(mut self, pin: bool) -> Self {
        self.pin = pin;
        self
    }

    pub fn build(self) -> Result<Pool, PoolError> {
        if self.size == 0 {
            return Err(PoolError::ZeroWorkers);
        }
        let shared = Arc::new(Shared {
            state: Mutex::new(State::default()),
            work: Condvar::new(),
            idle: Condvar::new(),
        });
        let cpus = thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        let mut pool = Pool {
            shared,
            workers: Vec::with_capacity(self.size),
        };
        for i in 0..self.size {
            let shared = Arc::clone(&pool.shared);
            let pin = self.pin.then_some(i % cpus);
            let handle = thread::Builder::new()
                .name(format!("partune-worker-{i}"))
                .spawn(move || {
                    if let Some(cpu) = pin {
                        pin_current_thread(cpu);
                    }
                    worker_loop(&shared);
                })?;
            pool.workers.push(handle);
        }
        // Hand out the pool only once every worker is parked, so callers
        // never race worker startup.
        let mut state = pool.shared.lock();
        while state.ready < self.size {
            state = pool.shared.idle.wait(state).unwrap_or_else(|e| e.into_inner());
        }
        drop(state);
        Ok(pool)
    }
}

const SPINS_BEFORE_PARKING: u32 = 32;

fn worker_loop(shared: &Shared) {
    let mut state = shared.lock();
    state.ready += 1;
    shared.idle.notify_all();
    let mut spins = 0;
    loop {
        if let Some(job) = state.queue.pop_front() {
            spins = 0;
            drop(state);
            let ok = panic::catch_unwind(AssertUnwindSafe(job)).is_ok();
            state = shared.lock();
            if !ok {
                state.panicked += 1;
            }
            state.pending -= 1;
            if state.pending == 0 {
                shared.idle.notify_all();
            }
        } else if state.shutdown {
            return;
        } else if spins < SPINS_BEFORE_PARKING {
            // A busy producer usually refills the queue within a few yields,
            // which is far cheaper than a park and wakeup round trip.
            spins += 1;
            drop(state);
            thread::yield_now();
            state = shared.lock();
        } else {
            state.parked += 1;
            state = shared.work.wait(state).unwrap_or_else(|e| e.into_inner());
            state.parked -= 1;
            state.signalled = state.signalled.saturating_sub(1);
        }
    }
}

#[cfg(target_os = "linux")]
fn pin_current_thread(cpu: usize) {
    // SAFETY: cpu_set_t is plain data; sched_setaffinity only reads it.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(cpu, &mut set);
        let _ = libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set);
    }
}

#[cfg(not(target_os = "linux"))]
fn pin_current_thread(_cpu: usize) {}

impl Pool {
    pub fn new(size: usize) -> Result<Pool, PoolError> {
        Pool::builder(size).build()
    }

    pub fn builder(size: usize) -> PoolBuilder {
        PoolBuilder { size, pin: false }
    }

    pub fn size(&self) -> usize {
        self.workers.len()
    }

    fn push(&self, job: Job) -> Result<(), PoolError> {
        let mut state = self.shared.lock();
        if state.shutdown {
            return Err(PoolError::ShutDown);
        }
        state.queue.push_back(job);
        state.pending += 1;
        // Wake a sleeper only when the queue outgrows the workers that are
        // already awake (or about to be); those pick jobs up on their own.
        let awake = state.ready - state.parked + state.signalled;
        let wake = state.parked > state.signalled && state.queue.len() > awake;
        if wake {
            state.signalled += 1;
        }
        drop(state);
        if wake {
            self.shared.work.notify_one();
        }
        Ok(())
    }

    /// Queues `task`; it runs exactly once on some worker.
    pub fn submit<F>(&self, task: F) -> Result<(), PoolError>
    where
        F: FnOnce() + Send + 'static,
    {
        self.push(Box::new(task))
    }

    /// Blocks until every task submitted so far has finished.
    pub fn join(&self) {
        let mut state = self.shared.lock();
        while state.pending > 0 {
            state = self.shared.idle.wait(state).unwrap_or_else(|e| e.into_inner());
        }
    }

    /// `join` with an upper bound on the wait. Returns false on timeout.
    pub fn join_timeout(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut state = self.shared.lock();
        while state.pending > 0 {
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            state = self
                .shared
                .idle
                .wait_timeout(state, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
        true
    }

    /// Stops accepting tasks. Already queued tasks still run.
    pub fn shutdown(&self) {
        self.shared.lock().shutdown = true;
        self.shared.work.notify_all();
    }

    pub fn is_shut_down(&self) -> bool {
        self.shared.lock().shutdown
    }

    /// Tasks that panicked so far. A panic never takes a worker down.
    pub fn panicked_tasks(&self) -> usize {
        self.shared.lock().panicked
    }

    /// Runs `f` with a [`Scope`] whose tasks may borrow from the caller's
    /// stack; returns after all of them finish. Must not be called from one
    /// of this pool's own workers.
    pub fn scope<'env, R>(&self, f: impl FnOnce(&Scope<'_, 'env>) -> R) -> R {
        let scope = Scope {
            pool: self,
            latch: Arc::new(Latch::default()),
            _env: PhantomData,
        };
        let result = panic::catch_unwind(AssertUnwindSafe(|| f(&scope)));
        scope.latch.wait();
        match result {
            Err(payload) => panic::resume_unwind(payload),
            Ok(_) if scope.latch.panicked.load(Ordering::SeqCst) => panic!("a scoped pool task panicked"),
            Ok(value) => value,
        }
    }
}

impl Drop for Pool {
    fn drop(&mut self) {
        self.shutdown();
        for handle in self.workers.drain(..) {
            let _ = handle.join();
        }
    }
}

#[derive(Default)]
struct Latch {
    count: Mutex<usize>,
    zero: Condvar,
    panicked: AtomicBool,
}

impl Latch {
    fn add(&self) {
        *self.count.lock().unwrap_or_else(|e| e.into_inner()) += 1;
    }

    fn done(&self) {
        let mut count = self.count.lock().unwrap_or_else(|e| e.into_inner());
        *count -= 1;
        if *count == 0 {
            self.zero.notify_all();
        }
    }

    fn wait(&self) {
        let mut count = self.count.lock().unwrap_or_else(|e| e.into_inner());
        while *count > 0 {
            count = self.zero.wait(count).unwrap_or_else(|e| e.into_inner());
        }
    }
}

/// Handle for submitting borrowing tasks; see [`Pool::scope`].
pub struct Scope<'pool, 'env> {
    pool: &'pool Pool,
    latch: Arc<Latch>,
    _env: PhantomData<&'env mut &'env ()>,
}

impl<'env> Scope<'_, 'env> {
    pub fn submit<F>(&self, task: F) -> Result<(), PoolError>
    where
        F: FnOnce() + Send + 'env,
    {
        self.latch.add();
        let latch = Arc::clone(&self.latch);
        let job: Box<dyn FnOnce() + Send + 'env> = Box::new(move || {
            if panic::catch_unwind(AssertUnwindSafe(task)).is_err() {
                latch.panicked.store(true, Ordering::SeqCst);
            }
            latch.done();
        });
        // SAFETY: `Pool::scope` waits on the latch before returning, so the
        // job finishes (or is dropped unrun, see below) while 'env is alive.
        let job: Job = unsafe { std::mem::transmute::<Box<dyn FnOnce() + Send + 'env>, Job>(job) };
        self.pool.push(job).inspect_err(|_| self.latch.done())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BenchResult {
    pub pool_size: usize,
    pub tasks: usize,
    pub total_latency_us: u64,
    pub final_counter: u64,
}

impl BenchResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bench results always serialize")
    }
}

pub const DEFAULT_TASKS: usize = 10_000;

/// Time to push `tasks` increments of one shared atomic counter through a
/// pool of `pool_size` workers and wait for all of them.
pub fn microbench(pool_size: usize, tasks: usize) -> Result<BenchResult, PoolError> {
    let pool = Pool::new(pool_size)?;
    let counter = Arc::new(AtomicU64::new(0));
    let started = Instant::now();
    for _ in 0..tasks {
        let counter = Arc::clone(&counter);
        pool.submit(move || {
            counter.fetch_add(1, Ordering::Relaxed);
        })?;
    }
    pool.join();
    let elapsed = started.elapsed();
    Ok(BenchResult {
        pool_size,
        tasks,
        total_latency_us: elapsed.as_micros() as u64,
        final_counter: counter.load(Ordering::SeqCst),
    })
}

/// The same benchmark without a pool: every batch of `threads` tasks gets
/// freshly spawned threads that are joined before the next batch starts.
pub fn naive_microbench(threads: usize, tasks: usize) -> Result<BenchResult, PoolError> {
    if threads == 0 {
        return Err(PoolError::ZeroWorkers);
    }
    let counter = Arc::new(AtomicU64::new(0));
    let started = Instant::now();
    let mut left = tasks;
    while left > 0 {
        let batch = left.min(threads);
        let handles = (0..batch)
            .map(|_| {
                let counter = Arc::clone(&counter);
                thread::Builder::new().spawn(move || {
                    counter.fetch_add(1, Ordering::Relaxed);
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        for h in handles {
            let _ = h.join();
        }
        left -= batch;
    }
    Ok(BenchResult {
        pool_size: threads,
        tasks,
        total_latency_us: started.elapsed().as_micros() as u64,
        final_counter: counter.load(Ordering::SeqCst),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_workers_rejected() {
        assert!(matches!(Pool::new(0), Err(PoolError::ZeroWorkers)));
    }

    #[test]
    fn hundred_increments() {
        let pool = Pool::new(3).unwrap();
        let counter = Arc::new(AtomicU64::new(0));
        for _ in 0..100 {
            let c = Arc::clone(&counter);
            pool.submit(move || {
                c.fetch_add(1, Ordering::Relaxed);
            })
            .unwrap();
        }
        pool.join();
        assert_eq!(counter.load(Ordering::SeqCst), 100);
    }

    #[test]
    fn join_without_tasks_returns() {
        let pool = Pool::new(2).unwrap();
        assert!(pool.join_timeout(Duration::from_secs(1)));
    }

    #[test]
    fn single_worker_serializes() {
        let pool = Pool::new(1).unwrap();
        let log = Arc::new(Mutex::new(Vec::new()));
        for i in 0..20 {
            let log = Arc::clone(&log);
            pool.submit(move || log.lock().unwrap().push(i)).unwrap();
        }
        pool.join();
        assert_eq!(*log.lock().unwrap(), (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn submit_after_shutdown_fails() {
        let pool = Pool::new(2).unwrap();
        pool.shutdown();
        assert!(pool.is_shut_down());
        assert!(matches!(pool.submit(|| {}), Err(PoolError::ShutDown)));
    }

    #[test]
    fn panicking_task_does_not_kill_worker() {
        let pool = Pool::new(1).unwrap();
        pool.submit(|| panic!("boom")).unwrap();
        let flag = Arc::new(AtomicBool::new(false));
        let f = Arc::clone(&flag);
        pool.submit(move || f.store(true, Ordering::SeqCst)).unwrap();
        pool.join();
        assert!(flag.load(Ordering::SeqCst));
        assert_eq!(pool.panicked_tasks(), 1);
    }

    #[test]
    fn scoped_tasks_borrow_and_write_disjoint_slices() {
        let pool = Pool::new(4).unwrap();
        let input: Vec<u64> = (0..64).collect();
        let mut out = vec![0u64; 64];
        pool.scope(|s| {
            for (src, dst) in input.chunks(16).zip(out.chunks_mut(16)) {
                s.submit(move || {
                    for (d, x) in dst.iter_mut().zip(src) {
                        *d = x * 2;
                    }
                })
                .unwrap();
            }
        });
        assert_eq!(out, input.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    #[should_panic(expected = "scoped pool task panicked")]
    fn scoped_panic_propagates() {
        let pool = Pool::new(2).unwrap();
        pool.scope(|s| {
            s.submit(|| panic!("inner")).unwrap();
        });
    }

    #[test]
    fn pinned_pool_runs_tasks() {
        let pool = Pool::builder(2).pin(true).build().unwrap();
        let counter = Arc::new(AtomicU64::new(0));
        let c = Arc::clone(&counter);
        pool.submit(move || {
            c.fetch_add(1, Ordering::Relaxed);
        })
        .unwrap();
        pool.join();
        assert_eq!(counter.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn benches_count_exactly() {
        assert_eq!(microbench(1, 1000).unwrap().final_counter, 1000);
        assert_eq!(microbench(4, 1000).unwrap().final_counter, 1000);
        assert_eq!(naive_microbench(8, 100).unwrap().final_counter, 100);
    }
}
