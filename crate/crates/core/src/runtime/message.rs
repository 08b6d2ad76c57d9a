use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::event::Event;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProcessId(pub u32);

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProtocolMessage {
    Ev(Arc<Event>),
    EndOfTrace,
    MergeRequest(ProcessId),
    MergeAck,
    MergeMsg(Vec<ProcessId>),
    MergeFinal,
    MergeComplete,
    Terminated(ProcessId),
    ViolationReport(u64),
    /// Sent by a hub to the processes it took over in a merge, so that
    /// they address their new parent from then on.
    Adopted { parent: ProcessId, depth: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MessageKind {
    Ev,
    EndOfTrace,
    MergeRequest,
    MergeAck,
    MergeMsg,
    MergeFinal,
    MergeComplete,
    Terminated,
    ViolationReport,
    Adopted,
}

impl MessageKind {
    pub const ALL: [MessageKind; 10] = [
        MessageKind::Ev,
        MessageKind::EndOfTrace,
        MessageKind::MergeRequest,
        MessageKind::MergeAck,
        MessageKind::MergeMsg,
        MessageKind::MergeFinal,
        MessageKind::MergeComplete,
        MessageKind::Terminated,
        MessageKind::ViolationReport,
        MessageKind::Adopted,
    ];
}

impl ProtocolMessage {
    pub fn kind(&self) -> MessageKind {
        match self {
            ProtocolMessage::Ev(_) => MessageKind::Ev,
            ProtocolMessage::EndOfTrace => MessageKind::EndOfTrace,
            ProtocolMessage::MergeRequest(_) => MessageKind::MergeRequest,
            ProtocolMessage::MergeAck => MessageKind::MergeAck,
            ProtocolMessage::MergeMsg(_) => MessageKind::MergeMsg,
            ProtocolMessage::MergeFinal => MessageKind::MergeFinal,
            ProtocolMessage::MergeComplete => MessageKind::MergeComplete,
            ProtocolMessage::Terminated(_) => MessageKind::Terminated,
            ProtocolMessage::ViolationReport(_) => MessageKind::ViolationReport,
            ProtocolMessage::Adopted { .. } => MessageKind::Adopted,
        }
    }

    pub fn event_index(&self) -> Option<u64> {
        match self {
            ProtocolMessage::Ev(e) => Some(e.index),
            _ => None,
        }
    }
}

/// A message in a mailbox. `from` is `None` for the front door.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub from: Option<ProcessId>,
    pub msg: ProtocolMessage,
}
