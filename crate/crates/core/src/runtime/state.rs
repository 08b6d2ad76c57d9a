//! Per-process state and the pure transition functions of the combinators.

use std::collections::VecDeque;
use std::fmt;

use crate::event::{match_action, ActionPattern, Substitution};
use crate::expr::EvalError;
use crate::formula::Formula;
use crate::synthesis::{resolve, Mode, PlanNode, Resolved};

use super::message::{Envelope, ProcessId, ProtocolMessage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HubPhase {
    Normal,
    /// Acknowledged a merge request from this child; waiting for its children.
    AwaitingMergeMsg(ProcessId),
    /// Adopted the child's children; waiting for it to finish.
    AwaitingComplete(ProcessId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HubState {
    pub children: Vec<ProcessId>,
    pub phase: HubPhase,
    pub event_buffer: VecDeque<ProtocolMessage>,
    /// Control messages held back until the current merge completes.
    pub deferred: VecDeque<Envelope>,
    pub parent: Option<ProcessId>,
    pub depth: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeafState {
    pub pattern: ActionPattern,
    pub body: Formula,
    pub env: Substitution,
    pub parent: Option<ProcessId>,
    pub depth: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MergePhase {
    AwaitAck,
    AwaitFinal,
}

/// A conjunction-rooted process handing its children over to its parent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergingChildState {
    pub former_children: Vec<ProcessId>,
    pub parent: ProcessId,
    pub phase: MergePhase,
    /// Merge requests and terminations from former children, in arrival order.
    pub pending: Vec<ProtocolMessage>,
    pub depth: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CombinatorState {
    Hub(HubState),
    Leaf(LeafState),
    MergingChild(MergingChildState),
    /// Finished merging; relays late control messages from its former
    /// children to the hub that adopted them.
    Merged { into: ProcessId },
    Halted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProcessKind {
    Hub,
    Leaf,
}

impl CombinatorState {
    pub fn new_hub(children: Vec<ProcessId>, parent: Option<ProcessId>, depth: u32) -> Self {
        CombinatorState::Hub(HubState {
            children,
            phase: HubPhase::Normal,
            event_buffer: VecDeque::new(),
            deferred: VecDeque::new(),
            parent,
            depth,
        })
    }

    pub fn new_leaf(pattern: ActionPattern, body: Formula, env: Substitution, parent: Option<ProcessId>, depth: u32) -> Self {
        CombinatorState::Leaf(LeafState { pattern, body, env, parent, depth })
    }

    /// Kind and depth of a live combinator; `None` once merged or halted.
    pub fn census_key(&self) -> Option<(ProcessKind, u32)> {
        match self {
            CombinatorState::Hub(h) => Some((ProcessKind::Hub, h.depth)),
            CombinatorState::MergingChild(m) => Some((ProcessKind::Hub, m.depth)),
            CombinatorState::Leaf(l) => Some((ProcessKind::Leaf, l.depth)),
            CombinatorState::Merged { .. } | CombinatorState::Halted => None,
        }
    }

    pub fn is_halted(&self) -> bool {
        matches!(self, CombinatorState::Halted)
    }

    /// True while a merge involving this process is unfinished.
    pub fn in_merge(&self) -> bool {
        match self {
            CombinatorState::Hub(h) => h.phase != HubPhase::Normal,
            CombinatorState::MergingChild(_) => true,
            _ => false,
        }
    }

    pub fn phase_name(&self) -> &'static str {
        match self {
            CombinatorState::Hub(h) => match h.phase {
                HubPhase::Normal => "hub/normal",
                HubPhase::AwaitingMergeMsg(_) => "hub/awaiting-merge-msg",
                HubPhase::AwaitingComplete(_) => "hub/awaiting-complete",
            },
            CombinatorState::Leaf(_) => "leaf",
            CombinatorState::MergingChild(m) => match m.phase {
                MergePhase::AwaitAck => "merging/await-ack",
                MergePhase::AwaitFinal => "merging/await-final",
            },
            CombinatorState::Merged { .. } => "merged",
            CombinatorState::Halted => "halted",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Effect {
    Send(ProcessId, ProtocolMessage),
    /// Create a process; emitted before any message addressed to it.
    Spawn(ProcessId, CombinatorState),
    Violation(u64),
    EvalFault { index: u64, error: EvalError },
    ProtocolFault(ProtocolFault),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolFault {
    pub process: ProcessId,
    pub phase: &'static str,
    pub message: String,
}

impl fmt::Display for ProtocolFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} in phase {}: {}", self.process, self.phase, self.message)
    }
}

pub struct Context<'a> {
    pub mode: Mode,
    pub me: ProcessId,
    pub alloc: &'a mut dyn FnMut() -> ProcessId,
}

/// Applies one message to a process. The state is updated in place and the
/// resulting effects are appended to `out`. A message that is not valid in
/// the current phase leaves the state unchanged and emits a protocol fault.
pub fn transition(
    state: &mut CombinatorState,
    from: Option<ProcessId>,
    msg: ProtocolMessage,
    cx: &mut Context<'_>,
    out: &mut Vec<Effect>,
) {
    let phase = state.phase_name();
    let me = cx.me;
    let fault = |out: &mut Vec<Effect>, msg: &ProtocolMessage, why: &str| {
        out.push(Effect::ProtocolFault(ProtocolFault {
            process: me,
            phase,
            message: format!("{why}: {}", describe(msg, from)),
        }))
    };
    match state {
        CombinatorState::Hub(h) => {
            if let Some(next) = hub_step(h, from, msg, cx, out, &fault) {
                *state = next;
            }
        }
        CombinatorState::Leaf(l) => {
            if let Some(next) = leaf_step(l, msg, cx, out, &fault) {
                *state = next;
            }
        }
        CombinatorState::MergingChild(m) => {
            if let Some(next) = merging_step(m, from, msg, cx, out, &fault) {
                *state = next;
            }
        }
        CombinatorState::Merged { into } => match msg {
            ProtocolMessage::Terminated(_) | ProtocolMessage::MergeRequest(_) => out.push(Effect::Send(*into, msg)),
            other => fault(out, &other, "message for a merged process"),
        },
        CombinatorState::Halted => {}
    }
}

fn describe(msg: &ProtocolMessage, from: Option<ProcessId>) -> String {
    match from {
        Some(p) => format!("{msg:?} from {p}"),
        None => format!("{msg:?} from the front door"),
    }
}

type FaultFn<'f> = dyn Fn(&mut Vec<Effect>, &ProtocolMessage, &str) + 'f;

fn send_all(children: &[ProcessId], msg: &ProtocolMessage, out: &mut Vec<Effect>) {
    out.extend(children.iter().map(|c| Effect::Send(*c, msg.clone())));
}

fn adopt(parent_slot: &mut Option<ProcessId>, depth_slot: &mut u32, children: &[ProcessId], parent: ProcessId, depth: u32, me: ProcessId, out: &mut Vec<Effect>) {
    *parent_slot = Some(parent);
    if *depth_slot != depth {
        *depth_slot = depth;
        send_all(children, &ProtocolMessage::Adopted { parent: me, depth: depth + 1 }, out);
    }
}

// Returns a replacement state when the process changes form.
fn hub_step(
    h: &mut HubState,
    from: Option<ProcessId>,
    msg: ProtocolMessage,
    cx: &mut Context<'_>,
    out: &mut Vec<Effect>,
    fault: &FaultFn<'_>,
) -> Option<CombinatorState> {
    match (h.phase, msg) {
        (_, ProtocolMessage::Adopted { parent, depth }) => {
            adopt(&mut h.parent, &mut h.depth, &h.children, parent, depth, cx.me, out);
            None
        }
        (HubPhase::Normal, msg) => hub_normal(h, from, msg, cx, out, fault),
        (HubPhase::AwaitingMergeMsg(_) | HubPhase::AwaitingComplete(_), msg @ ProtocolMessage::Ev(_)) => {
            h.event_buffer.push_back(msg);
            None
        }
        (
            HubPhase::AwaitingMergeMsg(_) | HubPhase::AwaitingComplete(_),
            msg @ (ProtocolMessage::Terminated(_) | ProtocolMessage::MergeRequest(_)),
        ) => {
            h.deferred.push_back(Envelope { from, msg });
            None
        }
        (HubPhase::AwaitingMergeMsg(c), ProtocolMessage::MergeMsg(kids)) if from == Some(c) => {
            let pos = h.children.iter().position(|x| *x == c).expect("merging child is a child");
            h.children.splice(pos..=pos, kids.iter().copied());
            out.push(Effect::Send(c, ProtocolMessage::MergeFinal));
            send_all(&kids, &ProtocolMessage::Adopted { parent: cx.me, depth: h.depth + 1 }, out);
            h.phase = HubPhase::AwaitingComplete(c);
            None
        }
        (HubPhase::AwaitingComplete(c), ProtocolMessage::MergeComplete) if from == Some(c) => {
            h.phase = HubPhase::Normal;
            while let Some(ev) = h.event_buffer.pop_front() {
                send_all(&h.children, &ev, out);
            }
            while h.phase == HubPhase::Normal {
                let Some(d) = h.deferred.pop_front() else { break };
                if let Some(next) = hub_normal(h, d.from, d.msg, cx, out, fault) {
                    return Some(next);
                }
            }
            if h.phase == HubPhase::Normal {
                return prune_if_empty(h, cx, out);
            }
            None
        }
        (_, msg) => {
            fault(out, &msg, "unexpected message");
            None
        }
    }
}

fn prune_if_empty(h: &HubState, cx: &Context<'_>, out: &mut Vec<Effect>) -> Option<CombinatorState> {
    if cx.mode.prunes() && h.children.is_empty() {
        if let Some(p) = h.parent {
            out.push(Effect::Send(p, ProtocolMessage::Terminated(cx.me)));
        }
        Some(CombinatorState::Halted)
    } else {
        None
    }
}

fn hub_normal(
    h: &mut HubState,
    from: Option<ProcessId>,
    msg: ProtocolMessage,
    cx: &mut Context<'_>,
    out: &mut Vec<Effect>,
    fault: &FaultFn<'_>,
) -> Option<CombinatorState> {
    match msg {
        ProtocolMessage::Ev(_) => {
            send_all(&h.children, &msg, out);
            None
        }
        ProtocolMessage::EndOfTrace => {
            send_all(&h.children, &msg, out);
            Some(CombinatorState::Halted)
        }
        ProtocolMessage::Terminated(_) if !cx.mode.prunes() => None,
        ProtocolMessage::Terminated(c) => match h.children.iter().position(|x| *x == c) {
            Some(pos) => {
                h.children.remove(pos);
                prune_if_empty(h, cx, out)
            }
            None => {
                fault(out, &ProtocolMessage::Terminated(c), "termination from a process that is not a child");
                None
            }
        },
        ProtocolMessage::MergeRequest(c) if cx.mode == Mode::Reconf && h.children.contains(&c) => {
            out.push(Effect::Send(c, ProtocolMessage::MergeAck));
            h.phase = HubPhase::AwaitingMergeMsg(c);
            None
        }
        other => {
            let _ = from;
            fault(out, &other, "unexpected message");
            None
        }
    }
}

fn spawn_node(node: PlanNode, parent: ProcessId, depth: u32, cx: &mut Context<'_>, out: &mut Vec<Effect>) -> ProcessId {
    let pid = (cx.alloc)();
    let state = match node {
        PlanNode::Nec { pattern, body, env } => CombinatorState::new_leaf(pattern, body, env, Some(parent), depth),
        PlanNode::Hub(children) => {
            // Reserve the spawn slot so the hub exists before its children.
            let slot = out.len();
            out.push(Effect::Spawn(pid, CombinatorState::Halted));
            let kids = children.into_iter().map(|c| spawn_node(c, pid, depth + 1, cx, out)).collect();
            out[slot] = Effect::Spawn(pid, CombinatorState::new_hub(kids, Some(parent), depth));
            return pid;
        }
    };
    out.push(Effect::Spawn(pid, state));
    pid
}

fn leaf_step(
    l: &mut LeafState,
    msg: ProtocolMessage,
    cx: &mut Context<'_>,
    out: &mut Vec<Effect>,
    fault: &FaultFn<'_>,
) -> Option<CombinatorState> {
    let terminate = |out: &mut Vec<Effect>, parent: Option<ProcessId>| {
        if let Some(p) = parent {
            out.push(Effect::Send(p, ProtocolMessage::Terminated(cx.me)));
        }
        Some(CombinatorState::Halted)
    };
    match msg {
        ProtocolMessage::Ev(e) => {
            let Some(sigma) = match_action(&l.pattern.substitute(&l.env), &e) else {
                return terminate(out, l.parent);
            };
            let env = l.env.overridden_by(&sigma);
            match resolve(&l.body, &env, cx.mode) {
                Err(error) => {
                    out.push(Effect::EvalFault { index: e.index, error });
                    terminate(out, l.parent)
                }
                Ok(Resolved::Violated) => {
                    out.push(Effect::Violation(e.index));
                    terminate(out, l.parent)
                }
                Ok(Resolved::Discharged) => terminate(out, l.parent),
                Ok(Resolved::Node(PlanNode::Nec { pattern, body, env })) => {
                    l.pattern = pattern;
                    l.body = body;
                    l.env = env;
                    None
                }
                Ok(Resolved::Node(PlanNode::Hub(children))) => {
                    let me = cx.me;
                    let kids: Vec<ProcessId> =
                        children.into_iter().map(|c| spawn_node(c, me, l.depth + 1, cx, out)).collect();
                    match l.parent {
                        Some(parent) if cx.mode == Mode::Reconf => {
                            out.push(Effect::Send(parent, ProtocolMessage::MergeRequest(me)));
                            Some(CombinatorState::MergingChild(MergingChildState {
                                former_children: kids,
                                parent,
                                phase: MergePhase::AwaitAck,
                                pending: Vec::new(),
                                depth: l.depth,
                            }))
                        }
                        parent => Some(CombinatorState::new_hub(kids, parent, l.depth)),
                    }
                }
            }
        }
        ProtocolMessage::EndOfTrace => terminate(out, l.parent),
        ProtocolMessage::Adopted { parent, depth } => {
            l.parent = Some(parent);
            l.depth = depth;
            None
        }
        other => {
            fault(out, &other, "unexpected message");
            None
        }
    }
}

fn merging_step(
    m: &mut MergingChildState,
    from: Option<ProcessId>,
    msg: ProtocolMessage,
    cx: &mut Context<'_>,
    out: &mut Vec<Effect>,
    fault: &FaultFn<'_>,
) -> Option<CombinatorState> {
    match (m.phase, msg) {
        (MergePhase::AwaitAck, msg @ ProtocolMessage::Ev(_)) => {
            send_all(&m.former_children, &msg, out);
            None
        }
        (MergePhase::AwaitAck, ProtocolMessage::Terminated(c)) => {
            match m.former_children.iter().position(|x| *x == c) {
                Some(pos) => {
                    m.former_children.remove(pos);
                }
                None => fault(out, &ProtocolMessage::Terminated(c), "termination from a process that is not a child"),
            }
            None
        }
        (_, msg @ ProtocolMessage::MergeRequest(_)) | (MergePhase::AwaitFinal, msg @ ProtocolMessage::Terminated(_)) => {
            m.pending.push(msg);
            None
        }
        (MergePhase::AwaitAck, ProtocolMessage::Adopted { parent, depth }) => {
            let mut slot = Some(m.parent);
            adopt(&mut slot, &mut m.depth, &m.former_children, parent, depth, cx.me, out);
            m.parent = parent;
            None
        }
        (MergePhase::AwaitAck, ProtocolMessage::MergeAck) if from == Some(m.parent) => {
            out.push(Effect::Send(m.parent, ProtocolMessage::MergeMsg(std::mem::take(&mut m.former_children))));
            m.phase = MergePhase::AwaitFinal;
            None
        }
        (MergePhase::AwaitFinal, ProtocolMessage::MergeFinal) if from == Some(m.parent) => {
            for p in m.pending.drain(..) {
                out.push(Effect::Send(m.parent, p));
            }
            out.push(Effect::Send(m.parent, ProtocolMessage::MergeComplete));
            Some(CombinatorState::Merged { into: m.parent })
        }
        (_, msg) => {
            fault(out, &msg, "unexpected message");
            None
        }
    }
}

/// Runs one transition on a copy of `state`, allocating fresh ids from
/// `next_id` upwards. Convenient for examining single steps in isolation.
pub fn step_pure(
    state: &CombinatorState,
    me: ProcessId,
    mode: Mode,
    from: Option<ProcessId>,
    msg: ProtocolMessage,
    next_id: u32,
) -> (CombinatorState, Vec<Effect>) {
    let mut next = next_id;
    let mut alloc = || {
        let p = ProcessId(next);
        next += 1;
        p
    };
    let mut cx = Context { mode, me, alloc: &mut alloc };
    let mut s = state.clone();
    let mut out = Vec::new();
    transition(&mut s, from, msg, &mut cx, &mut out);
    (s, out)
}
