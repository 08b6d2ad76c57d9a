//! Snapshots of a running network.
//!
//! Chains in the baseline mode reach depths in the tens of thousands, so the
//! snapshot is a flat arena and every walk over it is iterative.

use std::fmt;

use crate::event::{ActionPattern, Substitution};
use crate::formula::Formula;
use crate::synthesis::{render_leaf, MonitorPlan, Mode, PlanNode, PlanRoot, PlanStats};

use super::message::ProcessId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TopologyNode {
    Hub { process: ProcessId, children: Vec<usize> },
    Leaf { process: ProcessId, pattern: ActionPattern, body: Formula, env: Substitution },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    pub mode: Mode,
    /// `nodes[0]` is the root when the network still runs.
    pub nodes: Vec<TopologyNode>,
    /// Violated before any event.
    pub violated: bool,
}

impl Topology {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn stats(&self) -> PlanStats {
        let mut s = PlanStats::default();
        if self.nodes.is_empty() {
            return s;
        }
        let mut stack = vec![(0usize, 1usize)];
        while let Some((i, depth)) = stack.pop() {
            s.depth = s.depth.max(depth);
            match &self.nodes[i] {
                TopologyNode::Hub { children, .. } => {
                    s.hubs += 1;
                    stack.extend(children.iter().map(|c| (*c, depth + 1)));
                }
                TopologyNode::Leaf { .. } => s.leaves += 1,
            }
        }
        s
    }

    /// True when no hub has a hub child.
    pub fn is_spider(&self) -> bool {
        match self.nodes.first() {
            Some(TopologyNode::Hub { children, .. }) => {
                children.iter().all(|c| matches!(self.nodes[*c], TopologyNode::Leaf { .. }))
            }
            _ => true,
        }
    }

    /// Leaves in left-to-right order, rendered with their environment applied.
    pub fn leaves(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            match &self.nodes[i] {
                TopologyNode::Hub { children, .. } => stack.extend(children.iter().rev()),
                TopologyNode::Leaf { pattern, body, env, .. } => out.push(render_leaf(pattern, body, env)),
            }
        }
        out
    }

    /// The snapshot as a plan. Recursive, so meant for shallow networks.
    pub fn to_plan(&self) -> MonitorPlan {
        fn build(t: &Topology, i: usize) -> PlanNode {
            match &t.nodes[i] {
                TopologyNode::Hub { children, .. } => PlanNode::Hub(children.iter().map(|c| build(t, *c)).collect()),
                TopologyNode::Leaf { pattern, body, env, .. } => {
                    PlanNode::Nec { pattern: pattern.clone(), body: body.clone(), env: env.clone() }
                }
            }
        }
        let root = if self.violated {
            PlanRoot::Violated
        } else if self.nodes.is_empty() {
            PlanRoot::Satisfied
        } else {
            PlanRoot::Network(build(self, 0))
        };
        MonitorPlan { mode: self.mode, root }
    }
}

/// Same indented-tree text as [`MonitorPlan`].
impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violated {
            return writeln!(f, "ff");
        }
        if self.nodes.is_empty() {
            return writeln!(f, "tt");
        }
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, indent)) = stack.pop() {
            match &self.nodes[i] {
                TopologyNode::Hub { children, .. } => {
                    writeln!(f, "{:indent$}hub", "")?;
                    stack.extend(children.iter().rev().map(|c| (*c, indent + 2)));
                }
                TopologyNode::Leaf { pattern, body, env, .. } => {
                    writeln!(f, "{:indent$}nec {}", "", render_leaf(pattern, body, env))?
                }
            }
        }
        Ok(())
    }
}
