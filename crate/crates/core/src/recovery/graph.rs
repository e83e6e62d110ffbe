use std::collections::{BTreeMap, VecDeque};

use super::{CheckpointMeta, RecoveryError, RecoveryLine};
use crate::dataflow::InstanceIdx;

/// (owner, checkpoint index)
pub type NodeId = (InstanceIdx, u64);

/// Checkpoints as nodes; an edge `a -> b` between different owners means a
/// message was sent after `a` and processed before `b`. Consecutive
/// checkpoints of one owner are chained.
#[derive(Clone, Debug, Default)]
pub struct CheckpointGraph {
    pub nodes: Vec<NodeId>,
    index: BTreeMap<NodeId, usize>,
    adj: Vec<Vec<usize>>,
    /// Per owner, node positions in ascending index order.
    chains: Vec<Vec<usize>>,
}

impl CheckpointGraph {
    pub fn node(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        match (self.node(a), self.node(b)) {
            (Some(x), Some(y)) => self.adj[x].contains(&y),
            _ => false,
        }
    }

    /// All edges as (from, to) checkpoint ids, sorted.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out: Vec<(NodeId, NodeId)> = self
            .adj
            .iter()
            .enumerate()
            .flat_map(|(a, succ)| succ.iter().map(move |&b| (a, b)))
            .map(|(a, b)| (self.nodes[a], self.nodes[b]))
            .collect();
        out.sort();
        out
    }

    /// Nodes reachable from `start` by a path of at least one edge.
    fn strictly_reachable(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut queue: VecDeque<usize> = self.adj[start].iter().copied().collect();
        while let Some(n) = queue.pop_front() {
            if seen[n] {
                continue;
            }
            seen[n] = true;
            queue.extend(self.adj[n].iter().copied().filter(|&m| !seen[m]));
        }
        seen
    }
}

/// Builds the graph from per-owner checkpoint chains (ascending index, the
/// first entry being the oldest retained checkpoint) and the channel
/// endpoints (`channels[c] = (from, to)`).
pub fn build_checkpoint_graph(
    chains: &[Vec<CheckpointMeta>],
    channels: &[(InstanceIdx, InstanceIdx)],
) -> Result<CheckpointGraph, RecoveryError> {
    let mut g = CheckpointGraph { chains: vec![Vec::new(); chains.len()], ..Default::default() };
    for (owner, chain) in chains.iter().enumerate() {
        for cp in chain {
            let pos = g.nodes.len();
            g.nodes.push((owner, cp.index));
            g.index.insert((owner, cp.index), pos);
            g.adj.push(Vec::new());
            if let Some(&prev) = g.chains[owner].last() {
                g.adj[prev].push(pos);
            }
            g.chains[owner].push(pos);
        }
    }
    for (c, &(from, to)) in channels.iter().enumerate() {
        for (xi, x) in chains[from].iter().enumerate() {
            let sent = *x.last_sent.get(&c).ok_or(RecoveryError::MissingMetadata { owner: from, index: x.index, channel: c })?;
            for (yi, y) in chains[to].iter().enumerate() {
                let received = *y
                    .last_received
                    .get(&c)
                    .ok_or(RecoveryError::MissingMetadata { owner: to, index: y.index, channel: c })?;
                if received > sent {
                    let (a, b) = (g.chains[from][xi], g.chains[to][yi]);
                    if !g.adj[a].contains(&b) {
                        g.adj[a].push(b);
                    }
                }
            }
        }
    }
    for succ in &mut g.adj {
        succ.sort_unstable();
    }
    Ok(g)
}

/// Rollback propagation: start from the latest checkpoint of every owner,
/// repeatedly replace each member that is strictly reachable from another
/// member by the owner's next-older checkpoint, stop when nothing is marked.
pub fn rollback_propagation(graph: &CheckpointGraph) -> Result<RecoveryLine, RecoveryError> {
    let owners = graph.chains.len();
    let mut pos: Vec<usize> = graph
        .chains
        .iter()
        .enumerate()
        .map(|(o, c)| c.len().checked_sub(1).ok_or(RecoveryError::NoConsistentLine { owner: o }))
        .collect::<Result<_, _>>()?;
    loop {
        let members: Vec<usize> = (0..owners).map(|o| graph.chains[o][pos[o]]).collect();
        let mut marked = vec![false; owners];
        for (o, &m) in members.iter().enumerate() {
            let reach = graph.strictly_reachable(m);
            for (p, &other) in members.iter().enumerate() {
                if p != o && reach[other] {
                    marked[p] = true;
                }
            }
        }
        if !marked.iter().any(|&m| m) {
            break;
        }
        for (o, m) in marked.into_iter().enumerate() {
            if m {
                pos[o] = pos[o].checked_sub(1).ok_or(RecoveryError::NoConsistentLine { owner: o })?;
            }
        }
    }
    Ok(RecoveryLine::new((0..owners).map(|o| graph.nodes[graph.chains[o][pos[o]]].1).collect()))
}
