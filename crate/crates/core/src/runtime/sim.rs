//! Deterministic single-threaded scheduler.
//!
//! Every process owns one FIFO mailbox and a message is appended to it at
//! send time, so delivery respects causality. Which ready process runs next
//! is chosen by a seeded RNG.

use std::collections::VecDeque;
use std::mem;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::engine::Shared;
use super::message::{Envelope, ProcessId, ProtocolMessage};
use super::state::{CombinatorState, Effect};
use super::{DeliveryLog, Fabric, RuntimeError};

struct Slot {
    state: CombinatorState,
    mailbox: VecDeque<Envelope>,
    queued: bool,
    log: Option<DeliveryLog>,
}

pub(crate) struct Sim {
    shared: Arc<Shared>,
    slots: Vec<Slot>,
    ready: Vec<u32>,
    rng: ChaCha8Rng,
    scratch: Vec<Effect>,
    steps: u64,
}

impl Sim {
    pub fn new(shared: Arc<Shared>, seed: u64) -> Self {
        Sim { shared, slots: Vec::new(), ready: Vec::new(), rng: ChaCha8Rng::seed_from_u64(seed), scratch: Vec::new(), steps: 0 }
    }

    fn deliver(&mut self, from: Option<ProcessId>, to: ProcessId, msg: ProtocolMessage) {
        let slot = &mut self.slots[to.0 as usize];
        if slot.state.is_halted() {
            return;
        }
        slot.mailbox.push_back(Envelope { from, msg });
        if !slot.queued {
            slot.queued = true;
            self.ready.push(to.0);
        }
    }

    fn step(&mut self) -> bool {
        if self.ready.is_empty() {
            return false;
        }
        self.steps += 1;
        let i = self.rng.gen_range(0..self.ready.len());
        let pid = self.ready.swap_remove(i);
        let me = ProcessId(pid);
        let slot = &mut self.slots[pid as usize];
        let envelope = slot.mailbox.pop_front().expect("ready process has mail");
        let mut state = mem::replace(&mut slot.state, CombinatorState::Halted);
        let mut log = slot.log.take();
        let mut out = mem::take(&mut self.scratch);
        let event = self.shared.handle(me, &mut state, log.as_mut(), envelope, &mut out);
        let slot = &mut self.slots[pid as usize];
        let halted = state.is_halted();
        slot.state = state;
        slot.log = log;
        if halted {
            slot.mailbox.clear();
            slot.queued = false;
        } else if slot.mailbox.is_empty() {
            slot.queued = false;
        } else {
            self.ready.push(pid);
        }
        let activation = event.map_or(1, |i| i + 1);
        for effect in out.drain(..) {
            match effect {
                Effect::Spawn(p, s) => self.place(p, s, activation),
                Effect::Send(to, m) => self.deliver(Some(me), to, m),
                _ => unreachable!("reports are absorbed by the engine"),
            }
        }
        self.scratch = out;
        true
    }

    fn place(&mut self, pid: ProcessId, state: CombinatorState, activation: u64) {
        let i = pid.0 as usize;
        while self.slots.len() <= i {
            self.slots.push(Slot { state: CombinatorState::Halted, mailbox: VecDeque::new(), queued: false, log: None });
        }
        let log = self.shared.record_deliveries.then(|| DeliveryLog { process: pid, activation, received: Vec::new(), alive: true });
        self.slots[i] = Slot { state, mailbox: VecDeque::new(), queued: false, log };
    }
}

impl Fabric for Sim {
    fn install(&mut self, pid: ProcessId, state: CombinatorState, activation: u64) {
        self.shared.register(&state);
        self.place(pid, state, activation);
    }

    fn inject(&mut self, to: ProcessId, msg: ProtocolMessage) {
        self.deliver(None, to, msg);
    }

    fn is_halted(&self, pid: ProcessId) -> bool {
        self.slots[pid.0 as usize].state.is_halted()
    }

    fn run_to_quiescence(&mut self, timeout: Duration) -> Result<(), RuntimeError> {
        let start = Instant::now();
        let mut n = 0u32;
        while self.step() {
            n = n.wrapping_add(1);
            if n.is_multiple_of(65_536) && start.elapsed() > timeout {
                return Err(RuntimeError::Deadlock { timeout, in_flight: self.ready.len() });
            }
        }
        Ok(())
    }

    fn run_burst(&mut self, steps: usize) {
        for _ in 0..steps {
            if !self.step() {
                break;
            }
        }
    }

    fn burst_rng(&mut self) -> Option<&mut ChaCha8Rng> {
        Some(&mut self.rng)
    }

    fn state_of(&self, pid: ProcessId) -> CombinatorState {
        self.slots[pid.0 as usize].state.clone()
    }

    fn deliveries(&self) -> Vec<DeliveryLog> {
        self.slots
            .iter()
            .filter_map(|s| {
                s.log.clone().map(|mut l| {
                    l.alive = s.state.census_key().is_some();
                    l
                })
            })
            .collect()
    }

    fn shutdown(&mut self) {}
}
