//! Work-stealing thread pool backend.
//!
//! A process is scheduled on at most one worker at a time, guarded by the
//! `scheduled` flag in its inbox. Newly scheduled processes go onto the
//! sending worker's own deque so that a chain of hops stays on one thread.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle, Thread};
use std::time::{Duration, Instant};

use crossbeam_deque::{Injector, Steal, Stealer, Worker};
use parking_lot::{Condvar, Mutex, RwLock};
use rand_chacha::ChaCha8Rng;

use super::engine::Shared;
use super::message::{Envelope, ProcessId, ProtocolMessage};
use super::state::{CombinatorState, Effect};
use super::{DeliveryLog, Fabric, RuntimeError};

const BATCH: usize = 64;

struct Inbox {
    queue: VecDeque<Envelope>,
    scheduled: bool,
}

struct Body {
    state: CombinatorState,
    log: Option<DeliveryLog>,
}

struct Cell {
    inbox: Mutex<Inbox>,
    body: Mutex<Body>,
    halted: AtomicBool,
}

impl Cell {
    fn new(state: CombinatorState, log: Option<DeliveryLog>) -> Self {
        let halted = state.is_halted();
        Cell {
            inbox: Mutex::new(Inbox { queue: VecDeque::new(), scheduled: false }),
            body: Mutex::new(Body { state, log }),
            halted: AtomicBool::new(halted),
        }
    }
}

struct Inner {
    shared: Arc<Shared>,
    cells: RwLock<Vec<Arc<Cell>>>,
    injector: Injector<u32>,
    stealers: Mutex<Vec<Stealer<u32>>>,
    in_flight: AtomicUsize,
    quiet: Mutex<()>,
    quiet_cv: Condvar,
    idle: AtomicUsize,
    shutdown: AtomicBool,
    threads: Mutex<Vec<Thread>>,
}

pub(crate) struct Pool {
    inner: Arc<Inner>,
    handles: Vec<JoinHandle<()>>,
}

impl Inner {
    fn cell(&self, pid: ProcessId) -> Arc<Cell> {
        self.cells.read()[pid.0 as usize].clone()
    }

    fn place(&self, pid: ProcessId, state: CombinatorState, activation: u64) {
        let log = self.shared.record_deliveries.then(|| DeliveryLog { process: pid, activation, received: Vec::new(), alive: true });
        let cell = Arc::new(Cell::new(state, log));
        let mut cells = self.cells.write();
        let i = pid.0 as usize;
        while cells.len() <= i {
            cells.push(Arc::new(Cell::new(CombinatorState::Halted, None)));
        }
        cells[i] = cell;
    }

    fn wake_all(&self) {
        for t in self.threads.lock().iter() {
            t.unpark();
        }
    }

    fn wake_one(&self) {
        if self.idle.load(Ordering::Relaxed) > 0 {
            if let Some(t) = self.threads.lock().first() {
                t.unpark();
            }
        }
    }

    fn deliver(&self, from: Option<ProcessId>, to: ProcessId, msg: ProtocolMessage, local: Option<&Worker<u32>>) {
        let cell = self.cell(to);
        if cell.halted.load(Ordering::Acquire) {
            return;
        }
        self.in_flight.fetch_add(1, Ordering::SeqCst);
        let schedule = {
            let mut inbox = cell.inbox.lock();
            inbox.queue.push_back(Envelope { from, msg });
            !std::mem::replace(&mut inbox.scheduled, true)
        };
        if schedule {
            match local {
                Some(w) => {
                    w.push(to.0);
                    if w.len() > 1 {
                        self.wake_one();
                    }
                }
                None => {
                    self.injector.push(to.0);
                    self.wake_all();
                }
            }
        }
    }

    fn settle_one(&self) {
        if self.in_flight.fetch_sub(1, Ordering::SeqCst) == 1 {
            let _g = self.quiet.lock();
            self.quiet_cv.notify_all();
        }
    }

    fn run_cell(&self, pid: u32, local: &Worker<u32>, scratch: &mut Vec<Effect>) {
        let me = ProcessId(pid);
        let cell = self.cell(me);
        let mut body = cell.body.lock();
        for _ in 0..BATCH {
            let envelope = {
                let mut inbox = cell.inbox.lock();
                match inbox.queue.pop_front() {
                    Some(e) => e,
                    None => {
                        inbox.scheduled = false;
                        return;
                    }
                }
            };
            let Body { state, log } = &mut *body;
            let event = self.shared.handle(me, state, log.as_mut(), envelope, scratch);
            if state.is_halted() {
                cell.halted.store(true, Ordering::Release);
            }
            let activation = event.map_or(1, |i| i + 1);
            for effect in scratch.drain(..) {
                match effect {
                    Effect::Spawn(p, s) => self.place(p, s, activation),
                    Effect::Send(to, m) => self.deliver(Some(me), to, m, Some(local)),
                    _ => unreachable!("reports are absorbed by the engine"),
                }
            }
            self.settle_one();
        }
        let more = {
            let mut inbox = cell.inbox.lock();
            if inbox.queue.is_empty() {
                inbox.scheduled = false;
                false
            } else {
                true
            }
        };
        if more {
            local.push(pid);
        }
    }

    fn find_task(&self, local: &Worker<u32>) -> Option<u32> {
        if let Some(t) = local.pop() {
            return Some(t);
        }
        loop {
            match self.injector.steal_batch_and_pop(local) {
                Steal::Success(t) => return Some(t),
                Steal::Retry => continue,
                Steal::Empty => break,
            }
        }
        let stealers = self.stealers.lock().clone();
        for s in &stealers {
            loop {
                match s.steal() {
                    Steal::Success(t) => return Some(t),
                    Steal::Retry => continue,
                    Steal::Empty => break,
                }
            }
        }
        None
    }

    fn work(&self, local: Worker<u32>) {
        let mut scratch = Vec::new();
        let mut misses = 0u32;
        while !self.shutdown.load(Ordering::Acquire) {
            match self.find_task(&local) {
                Some(pid) => {
                    misses = 0;
                    self.run_cell(pid, &local, &mut scratch);
                }
                None if misses < 64 => {
                    misses += 1;
                    std::hint::spin_loop();
                }
                None => {
                    self.idle.fetch_add(1, Ordering::Relaxed);
                    thread::park_timeout(Duration::from_micros(500));
                    self.idle.fetch_sub(1, Ordering::Relaxed);
                }
            }
        }
    }
}

impl Pool {
    pub fn new(shared: Arc<Shared>, workers: usize) -> Self {
        let inner = Arc::new(Inner {
            shared,
            cells: RwLock::new(Vec::new()),
            injector: Injector::new(),
            stealers: Mutex::new(Vec::new()),
            in_flight: AtomicUsize::new(0),
            quiet: Mutex::new(()),
            quiet_cv: Condvar::new(),
            idle: AtomicUsize::new(0),
            shutdown: AtomicBool::new(false),
            threads: Mutex::new(Vec::new()),
        });
        let locals: Vec<Worker<u32>> = (0..workers).map(|_| Worker::new_lifo()).collect();
        *inner.stealers.lock() = locals.iter().map(Worker::stealer).collect();
        let handles: Vec<JoinHandle<()>> = locals
            .into_iter()
            .enumerate()
            .map(|(i, local)| {
                let inner = inner.clone();
                thread::Builder::new()
                    .name(format!("monitor-worker-{i}"))
                    .spawn(move || inner.work(local))
                    .expect("spawn worker thread")
            })
            .collect();
        *inner.threads.lock() = handles.iter().map(|h| h.thread().clone()).collect();
        Pool { inner, handles }
    }
}

impl Fabric for Pool {
    fn install(&mut self, pid: ProcessId, state: CombinatorState, activation: u64) {
        self.inner.shared.register(&state);
        self.inner.place(pid, state, activation);
    }

    fn inject(&mut self, to: ProcessId, msg: ProtocolMessage) {
        self.inner.deliver(None, to, msg, None);
    }

    fn is_halted(&self, pid: ProcessId) -> bool {
        self.inner.cell(pid).halted.load(Ordering::Acquire)
    }

    fn run_to_quiescence(&mut self, timeout: Duration) -> Result<(), RuntimeError> {
        let deadline = Instant::now() + timeout;
        let mut g = self.inner.quiet.lock();
        while self.inner.in_flight.load(Ordering::SeqCst) > 0 {
            if self.inner.quiet_cv.wait_until(&mut g, deadline).timed_out() {
                let in_flight = self.inner.in_flight.load(Ordering::SeqCst);
                if in_flight > 0 {
                    return Err(RuntimeError::Deadlock { timeout, in_flight });
                }
            }
        }
        Ok(())
    }

    fn run_burst(&mut self, _steps: usize) {}

    fn burst_rng(&mut self) -> Option<&mut ChaCha8Rng> {
        None
    }

    fn state_of(&self, pid: ProcessId) -> CombinatorState {
        self.inner.cell(pid).body.lock().state.clone()
    }

    fn deliveries(&self) -> Vec<DeliveryLog> {
        let cells = self.inner.cells.read().clone();
        cells
            .iter()
            .filter_map(|c| {
                let body = c.body.lock();
                body.log.clone().map(|mut l| {
                    l.alive = body.state.census_key().is_some();
                    l
                })
            })
            .collect()
    }

    fn shutdown(&mut self) {
        self.inner.shutdown.store(true, Ordering::Release);
        self.inner.wake_all();
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}
