//! Execution of monitor plans as networks of message-passing combinators.
//!
//! Each combinator is a sequential reactor with a private mailbox. A front
//! door feeds trace events to the root; violation and fault reports go to a
//! sink that keeps the smallest event index. Two backends run the same
//! transition functions: a seeded simulator and a work-stealing thread pool.

mod engine;
pub mod message;
mod sim;
pub mod state;
mod threads;
pub mod topology;

use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::Event;
use crate::expr::EvalError;
use crate::oracle::Verdict;
use crate::synthesis::{MonitorPlan, Mode, PlanNode, PlanRoot};

use engine::Shared;
pub use topology::{Topology, TopologyNode};
pub use message::{Envelope, MessageKind, ProcessId, ProtocolMessage};
pub use state::{
    step_pure, transition, CombinatorState, Context, Effect, HubPhase, HubState, LeafState, MergePhase,
    MergingChildState, ProcessKind, ProtocolFault,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Backend {
    Sim { seed: u64 },
    Threads { workers: usize },
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Sim { .. } => "sim",
            Backend::Threads { .. } => "threads",
        }
    }
}

/// How the front door paces events.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Injection {
    /// Wait for the network to go quiet after every event. Counters are
    /// then independent of scheduling.
    Quiescent,
    /// Let only a random number of steps (at most `max_burst`) run between
    /// events, so that events overtake merges in progress. Simulator only;
    /// the thread pool runs freely in this mode.
    Eager { max_burst: usize },
}

#[derive(Clone, Debug)]
pub struct SchedulerConfig {
    pub backend: Backend,
    pub injection: Injection,
    pub timeout: Duration,
    pub record_deliveries: bool,
    pub max_processes: Option<u64>,
}

impl SchedulerConfig {
    pub fn sim(seed: u64) -> Self {
        SchedulerConfig {
            backend: Backend::Sim { seed },
            injection: Injection::Quiescent,
            timeout: Duration::from_secs(10),
            record_deliveries: false,
            max_processes: None,
        }
    }

    pub fn threads(workers: usize) -> Self {
        SchedulerConfig { backend: Backend::Threads { workers: workers.max(1) }, ..Self::sim(0) }
    }

    pub fn eager(mut self, max_burst: usize) -> Self {
        self.injection = Injection::Eager { max_burst };
        self
    }

    pub fn recording(mut self) -> Self {
        self.record_deliveries = true;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_max_processes(mut self, limit: u64) -> Self {
        self.max_processes = Some(limit);
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    /// Trace events sent from one combinator to another.
    pub forwards: u64,
    /// Processes ever created, the root included.
    pub spawned: u64,
    /// Processes that were hubs at some point, by spawning or by a leaf
    /// turning into one.
    pub hubs_created: u64,
    /// Largest live process count seen at a quiescent point.
    pub peak_live: u64,
    /// Largest live process count at any instant, merges in flight included.
    pub peak_live_transient: u64,
    /// Largest live leaf count seen at a quiescent point.
    pub peak_leaves: u64,
    pub merges_completed: u64,
    pub max_depth_seen: u64,
    /// Time from offering each event to quiescence (thread backend,
    /// quiescent injection).
    #[serde(with = "duration_nanos")]
    pub per_event_latency: Vec<Duration>,
    /// Forwards caused by each event (quiescent injection).
    pub per_event_forwards: Vec<u64>,
}

mod duration_nanos {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Duration], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|d| d.as_nanos() as u64).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Duration>, D::Error> {
        Ok(Vec::<u64>::deserialize(d)?.into_iter().map(Duration::from_nanos).collect())
    }
}

impl Metrics {
    pub fn mean_latency(&self) -> Option<Duration> {
        if self.per_event_latency.is_empty() {
            return None;
        }
        let total: Duration = self.per_event_latency.iter().sum();
        Some(total / self.per_event_latency.len() as u32)
    }
}

/// The Ev messages one process received, for checking delivery order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryLog {
    pub process: ProcessId,
    /// First event index the process should see.
    pub activation: u64,
    pub received: Vec<u64>,
    /// Still running when the last event had been processed.
    pub alive: bool,
}

impl DeliveryLog {
    /// Received indices form the gap-free range starting at the activation
    /// index; a process alive at the end must have seen every event up to
    /// `last_event`.
    pub fn is_contiguous(&self, last_event: u64) -> bool {
        let gapless = self.received.iter().enumerate().all(|(k, i)| *i == self.activation + k as u64);
        let complete = !self.alive || self.received.last().copied().unwrap_or(self.activation - 1) == last_event;
        gapless && complete
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Verdict(Verdict),
    /// A boolean test could not be evaluated at this event.
    EvalFault { index: u64, error: EvalError },
}

impl Outcome {
    pub fn verdict(&self) -> Option<Verdict> {
        match self {
            Outcome::Verdict(v) => Some(*v),
            Outcome::EvalFault { .. } => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FinishReport {
    pub outcome: Outcome,
    pub metrics: Metrics,
    /// Network shape after the last event and before shutdown.
    pub topology: Topology,
    pub deliveries: Vec<DeliveryLog>,
    pub events_offered: u64,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum RuntimeError {
    #[error("protocol violation: {0}")]
    Protocol(ProtocolFault),
    #[error("network did not quiesce within {timeout:?} ({in_flight} processes still busy)")]
    Deadlock { timeout: Duration, in_flight: usize },
    #[error("{0} processes are stuck in an unfinished merge")]
    StuckMerge(usize),
    #[error("{0}")]
    Usage(String),
    #[error("process limit of {0} exceeded")]
    ResourceExhausted(u64),
}

/// Operations a backend provides to the front door.
pub(crate) trait Fabric: Send {
    fn install(&mut self, pid: ProcessId, state: CombinatorState, activation: u64);
    fn inject(&mut self, to: ProcessId, msg: ProtocolMessage);
    fn is_halted(&self, pid: ProcessId) -> bool;
    fn run_to_quiescence(&mut self, timeout: Duration) -> Result<(), RuntimeError>;
    fn run_burst(&mut self, steps: usize);
    fn burst_rng(&mut self) -> Option<&mut ChaCha8Rng>;
    fn state_of(&self, pid: ProcessId) -> CombinatorState;
    fn deliveries(&self) -> Vec<DeliveryLog>;
    fn shutdown(&mut self);
}

pub struct NetworkHandle {
    shared: Arc<Shared>,
    fabric: Box<dyn Fabric>,
    config: SchedulerConfig,
    root: Option<ProcessId>,
    offered: u64,
    ended: bool,
    latency: Vec<Duration>,
    event_forwards: Vec<u64>,
    snapshot: Option<(Topology, Vec<DeliveryLog>)>,
}

/// Starts a network for `plan`. The returned network is quiescent.
pub fn deploy(plan: &MonitorPlan, config: &SchedulerConfig) -> Result<NetworkHandle, RuntimeError> {
    if config.max_processes == Some(0) && matches!(plan.root, PlanRoot::Network(_)) {
        return Err(RuntimeError::ResourceExhausted(0));
    }
    let shared = Arc::new(Shared::new(plan.mode, config.max_processes, config.record_deliveries));
    let mut fabric: Box<dyn Fabric> = match config.backend {
        Backend::Sim { seed } => Box::new(sim::Sim::new(shared.clone(), seed)),
        Backend::Threads { workers } => Box::new(threads::Pool::new(shared.clone(), workers)),
    };
    let root = match &plan.root {
        PlanRoot::Satisfied => None,
        PlanRoot::Violated => {
            shared.report_violation(0);
            None
        }
        PlanRoot::Network(node) => {
            let pid = shared.alloc();
            match node {
                PlanNode::Nec { pattern, body, env } => {
                    fabric.install(pid, CombinatorState::new_leaf(pattern.clone(), body.clone(), env.clone(), None, 1), 1);
                }
                PlanNode::Hub(children) => {
                    // Plans rooted at a conjunction: build the subtree directly.
                    let kids = children.iter().map(|c| install_subtree(&shared, fabric.as_mut(), c, pid, 2)).collect();
                    fabric.install(pid, CombinatorState::new_hub(kids, None, 1), 1);
                }
            }
            Some(pid)
        }
    };
    let handle = NetworkHandle {
        shared,
        fabric,
        config: config.clone(),
        root,
        offered: 0,
        ended: false,
        latency: Vec::new(),
        event_forwards: Vec::new(),
        snapshot: None,
    };
    handle.check_limits()?;
    handle.shared.census.lock().sample();
    Ok(handle)
}

fn install_subtree(shared: &Shared, fabric: &mut dyn Fabric, node: &PlanNode, parent: ProcessId, depth: u32) -> ProcessId {
    let pid = shared.alloc();
    let state = match node {
        PlanNode::Nec { pattern, body, env } => {
            CombinatorState::new_leaf(pattern.clone(), body.clone(), env.clone(), Some(parent), depth)
        }
        PlanNode::Hub(children) => {
            let kids = children.iter().map(|c| install_subtree(shared, fabric, c, pid, depth + 1)).collect();
            CombinatorState::new_hub(kids, Some(parent), depth)
        }
    };
    fabric.install(pid, state, 1);
    pid
}

impl NetworkHandle {
    pub fn mode(&self) -> Mode {
        self.shared.mode
    }

    fn check_limits(&self) -> Result<(), RuntimeError> {
        if self.shared.exhausted.load(Ordering::Relaxed) {
            return Err(RuntimeError::ResourceExhausted(self.config.max_processes.unwrap_or(0)));
        }
        if let Some(f) = self.shared.reports.lock().protocol.first() {
            return Err(RuntimeError::Protocol(f.clone()));
        }
        Ok(())
    }

    fn root_alive(&self) -> bool {
        self.root.is_some_and(|r| !self.fabric.is_halted(r))
    }

    /// Hands the next trace event to the root. Events arriving after the
    /// verdict is settled, or after the whole network has terminated, are
    /// accepted and dropped.
    pub fn offer_event(&mut self, event: &Event) -> Result<(), RuntimeError> {
        if self.ended {
            return Err(RuntimeError::Usage("event offered after end of trace".into()));
        }
        if event.index != self.offered + 1 {
            return Err(RuntimeError::Usage(format!(
                "event index {} offered where {} was expected",
                event.index,
                self.offered + 1
            )));
        }
        self.offered += 1;
        let before = self.shared.forwards.load(Ordering::Relaxed);
        if self.shared.decided.load(Ordering::Acquire) || !self.root_alive() {
            if self.config.injection == Injection::Quiescent {
                self.event_forwards.push(0);
            }
            return Ok(());
        }
        let root = self.root.expect("live root");
        let start = Instant::now();
        self.fabric.inject(root, ProtocolMessage::Ev(Arc::new(event.clone())));
        match self.config.injection {
            Injection::Quiescent => {
                self.quiesce()?;
                if matches!(self.config.backend, Backend::Threads { .. }) {
                    self.latency.push(start.elapsed());
                }
                self.event_forwards.push(self.shared.forwards.load(Ordering::Relaxed) - before);
            }
            Injection::Eager { max_burst } => {
                let steps = self.fabric.burst_rng().map(|r| r.gen_range(0..=max_burst));
                if let Some(n) = steps {
                    self.fabric.run_burst(n);
                }
            }
        }
        self.check_limits()
    }

    /// Runs until nothing is in flight and samples the population.
    fn quiesce(&mut self) -> Result<(), RuntimeError> {
        self.fabric.run_to_quiescence(self.config.timeout)?;
        let mut c = self.shared.census.lock();
        if c.merging > 0 {
            return Err(RuntimeError::StuckMerge(c.merging));
        }
        c.sample();
        Ok(())
    }

    /// Lets the network settle and returns its current shape.
    pub fn topology(&mut self) -> Result<Topology, RuntimeError> {
        self.quiesce()?;
        self.check_limits()?;
        Ok(self.snapshot_plan())
    }

    fn snapshot_plan(&self) -> Topology {
        let violated = self.root.is_none() && self.shared.reports.lock().min_violation == Some(0);
        let mut nodes = Vec::new();
        if let Some(root) = self.root {
            // (process, index of the parent node)
            let mut stack = vec![(root, None::<usize>)];
            while let Some((pid, parent)) = stack.pop() {
                let node = match self.fabric.state_of(pid) {
                    CombinatorState::Leaf(l) => {
                        TopologyNode::Leaf { process: pid, pattern: l.pattern, body: l.body, env: l.env }
                    }
                    CombinatorState::Hub(HubState { children, .. })
                    | CombinatorState::MergingChild(MergingChildState { former_children: children, .. }) => {
                        let me = nodes.len();
                        stack.extend(children.iter().rev().map(|c| (*c, Some(me))));
                        TopologyNode::Hub { process: pid, children: Vec::new() }
                    }
                    CombinatorState::Merged { .. } | CombinatorState::Halted => continue,
                };
                let idx = nodes.len();
                nodes.push(node);
                if let Some(TopologyNode::Hub { children, .. }) = parent.map(|p| &mut nodes[p]) {
                    children.push(idx);
                }
            }
        }
        Topology { mode: self.shared.mode, nodes, violated }
    }

    /// Signals the end of the trace: the network settles, its shape is
    /// recorded, and then every combinator is shut down.
    pub fn offer_end(&mut self) -> Result<(), RuntimeError> {
        if self.ended {
            return Err(RuntimeError::Usage("end of trace offered twice".into()));
        }
        self.ended = true;
        self.quiesce()?;
        self.check_limits()?;
        self.snapshot = Some((self.snapshot_plan(), self.fabric.deliveries()));
        if self.root_alive() {
            self.fabric.inject(self.root.expect("live root"), ProtocolMessage::EndOfTrace);
            self.fabric.run_to_quiescence(self.config.timeout)?;
        }
        self.check_limits()
    }

    /// Counters so far.
    pub fn metrics(&self) -> Metrics {
        let c = self.shared.census.lock();
        Metrics {
            forwards: self.shared.forwards.load(Ordering::Relaxed),
            spawned: self.shared.spawned.load(Ordering::Relaxed),
            hubs_created: self.shared.hubs_created.load(Ordering::Relaxed),
            peak_live: c.peak_live as u64,
            peak_live_transient: c.peak_live_transient as u64,
            peak_leaves: c.peak_leaves as u64,
            merges_completed: self.shared.merges_completed.load(Ordering::Relaxed),
            max_depth_seen: u64::from(c.max_depth_seen),
            per_event_latency: self.latency.clone(),
            per_event_forwards: self.event_forwards.clone(),
        }
    }

    /// Live processes and live leaves right now.
    pub fn population(&self) -> (usize, usize) {
        let c = self.shared.census.lock();
        (c.live, c.leaves)
    }

    /// The verdict so far: the smallest reported index wins, and an
    /// evaluation fault wins over a violation at the same or a later event.
    pub fn outcome(&self) -> Outcome {
        let r = self.shared.reports.lock();
        match (&r.min_fault, r.min_violation) {
            (Some((i, error)), v) if v.is_none_or(|v| *i <= v) => Outcome::EvalFault { index: *i, error: error.clone() },
            (_, Some(v)) => Outcome::Verdict(Verdict::Violation(v)),
            _ => Outcome::Verdict(Verdict::NoViolation),
        }
    }

    /// Ends the trace if needed, waits for the network to finish and
    /// collects the results.
    pub fn finish(mut self) -> Result<FinishReport, RuntimeError> {
        if !self.ended {
            self.offer_end()?;
        }
        let (topology, deliveries) = self.snapshot.take().expect("snapshot taken at end of trace");
        let report = FinishReport {
            outcome: self.outcome(),
            metrics: self.metrics(),
            topology,
            deliveries,
            events_offered: self.offered,
        };
        self.fabric.shutdown();
        Ok(report)
    }
}

impl Drop for NetworkHandle {
    fn drop(&mut self) {
        self.fabric.shutdown();
    }
}

/// Deploys `plan`, feeds it the whole trace and finishes.
pub fn run_trace(plan: &MonitorPlan, trace: &[Event], config: &SchedulerConfig) -> Result<FinishReport, RuntimeError> {
    let mut h = deploy(plan, config)?;
    for e in trace {
        h.offer_event(e)?;
    }
    h.finish()
}
