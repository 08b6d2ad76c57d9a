//! Bookkeeping shared by both backends: id allocation, counters, the
//! population census and the verdict sink.

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};

use parking_lot::Mutex;

use crate::expr::EvalError;
use crate::synthesis::Mode;

use super::message::{Envelope, MessageKind, ProcessId, ProtocolMessage};
use super::state::{transition, CombinatorState, Context, Effect, ProcessKind, ProtocolFault};
use super::DeliveryLog;

#[derive(Debug, Default)]
pub(crate) struct Census {
    pub live: usize,
    pub leaves: usize,
    pub merging: usize,
    depth_counts: Vec<usize>,
    pub peak_live: usize,
    pub peak_leaves: usize,
    pub peak_live_transient: usize,
    pub max_depth_seen: u32,
}

type Key = Option<(ProcessKind, u32)>;

impl Census {
    fn add(&mut self, key: Key, merging: bool) {
        if let Some((kind, depth)) = key {
            self.live += 1;
            if kind == ProcessKind::Leaf {
                self.leaves += 1;
            }
            let d = depth as usize;
            if self.depth_counts.len() <= d {
                self.depth_counts.resize(d + 1, 0);
            }
            self.depth_counts[d] += 1;
            self.peak_live_transient = self.peak_live_transient.max(self.live);
        }
        if merging {
            self.merging += 1;
        }
    }

    fn remove(&mut self, key: Key, merging: bool) {
        if let Some((kind, depth)) = key {
            self.live -= 1;
            if kind == ProcessKind::Leaf {
                self.leaves -= 1;
            }
            self.depth_counts[depth as usize] -= 1;
        }
        if merging {
            self.merging -= 1;
        }
    }

    /// Records the population at a point where no message is in flight.
    pub fn sample(&mut self) {
        self.peak_live = self.peak_live.max(self.live);
        self.peak_leaves = self.peak_leaves.max(self.leaves);
        if let Some(d) = self.depth_counts.iter().rposition(|c| *c > 0) {
            self.max_depth_seen = self.max_depth_seen.max(d as u32);
        }
    }
}

#[derive(Debug, Default)]
pub(crate) struct Reports {
    pub min_violation: Option<u64>,
    pub min_fault: Option<(u64, EvalError)>,
    pub protocol: Vec<ProtocolFault>,
}

pub(crate) struct Shared {
    pub mode: Mode,
    next_pid: AtomicU32,
    pub forwards: AtomicU64,
    pub spawned: AtomicU64,
    pub hubs_created: AtomicU64,
    pub merges_completed: AtomicU64,
    pub census: Mutex<Census>,
    pub reports: Mutex<Reports>,
    /// Set once any violation or fault has been reported.
    pub decided: AtomicBool,
    max_processes: Option<u64>,
    pub exhausted: AtomicBool,
    pub record_deliveries: bool,
}

impl Shared {
    pub fn new(mode: Mode, max_processes: Option<u64>, record_deliveries: bool) -> Self {
        Shared {
            mode,
            next_pid: AtomicU32::new(0),
            forwards: AtomicU64::new(0),
            spawned: AtomicU64::new(0),
            hubs_created: AtomicU64::new(0),
            merges_completed: AtomicU64::new(0),
            census: Mutex::new(Census::default()),
            reports: Mutex::new(Reports::default()),
            decided: AtomicBool::new(false),
            max_processes,
            exhausted: AtomicBool::new(false),
            record_deliveries,
        }
    }

    pub fn alloc(&self) -> ProcessId {
        let id = self.next_pid.fetch_add(1, Ordering::Relaxed);
        if self.max_processes.is_some_and(|m| u64::from(id) >= m) {
            self.exhausted.store(true, Ordering::Relaxed);
        }
        ProcessId(id)
    }

    /// Registers a newly created process.
    pub fn register(&self, state: &CombinatorState) {
        self.spawned.fetch_add(1, Ordering::Relaxed);
        if matches!(state.census_key(), Some((ProcessKind::Hub, _))) {
            self.hubs_created.fetch_add(1, Ordering::Relaxed);
        }
        self.census.lock().add(state.census_key(), state.in_merge());
    }

    pub fn report_violation(&self, index: u64) {
        let mut r = self.reports.lock();
        r.min_violation = Some(r.min_violation.map_or(index, |m| m.min(index)));
        self.decided.store(true, Ordering::Release);
    }

    fn report_fault(&self, index: u64, error: EvalError) {
        let mut r = self.reports.lock();
        if r.min_fault.as_ref().is_none_or(|(m, _)| index < *m) {
            r.min_fault = Some((index, error));
        }
        self.decided.store(true, Ordering::Release);
    }

    fn report_protocol(&self, f: ProtocolFault) {
        self.reports.lock().protocol.push(f);
        self.decided.store(true, Ordering::Release);
    }

    /// Handles one message for process `me`. Reports and counters are
    /// absorbed here; the `Send` and `Spawn` effects left in `out` are for
    /// the backend to carry out, spawns first in the order given.
    pub fn handle(
        &self,
        me: ProcessId,
        state: &mut CombinatorState,
        log: Option<&mut DeliveryLog>,
        envelope: Envelope,
        out: &mut Vec<Effect>,
    ) -> Option<u64> {
        let event = envelope.msg.event_index();
        if let (Some(log), Some(i)) = (log, event) {
            log.received.push(i);
        }
        let completes_merge = envelope.msg.kind() == MessageKind::MergeComplete;
        let before = state.census_key();
        let merging_before = state.in_merge();
        let mut alloc = || self.alloc();
        let mut cx = Context { mode: self.mode, me, alloc: &mut alloc };
        let start = out.len();
        transition(state, envelope.from, envelope.msg, &mut cx, out);
        let after = state.census_key();
        let merging_after = state.in_merge();
        if before != after || merging_before != merging_after {
            let mut c = self.census.lock();
            c.remove(before, merging_before);
            c.add(after, merging_after);
        }
        if matches!(before, Some((ProcessKind::Leaf, _))) && matches!(after, Some((ProcessKind::Hub, _))) {
            self.hubs_created.fetch_add(1, Ordering::Relaxed);
        }
        let mut forwards = 0u64;
        let mut i = start;
        let mut faulted = false;
        while i < out.len() {
            match &out[i] {
                Effect::Send(_, ProtocolMessage::Ev(_)) => {
                    forwards += 1;
                    i += 1;
                }
                Effect::Send(..) => i += 1,
                Effect::Spawn(_, s) => {
                    self.register(s);
                    i += 1;
                }
                _ => match out.remove(i) {
                    Effect::Violation(index) => self.report_violation(index),
                    Effect::EvalFault { index, error } => self.report_fault(index, error),
                    Effect::ProtocolFault(f) => {
                        faulted = true;
                        self.report_protocol(f);
                    }
                    _ => unreachable!(),
                },
            }
        }
        if forwards > 0 {
            self.forwards.fetch_add(forwards, Ordering::Relaxed);
        }
        if completes_merge && !faulted {
            self.merges_completed.fetch_add(1, Ordering::Relaxed);
        }
        event
    }
}
