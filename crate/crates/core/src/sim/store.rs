use crate::dataflow::InstanceIdx;
use crate::protocol::uncoordinated::Checkpoint;
use crate::recovery::CheckpointMeta;
use crate::time::Ticks;

/// Durable checkpoint storage. Each instance has a live chain with indices
/// 1, 2, ... in order; checkpoints discarded by a rollback move to the
/// archive, nothing is ever deleted. Upstream-backup logs live with the
/// sending instance's channel log and the input lives in the source log;
/// neither is touched by failures.
#[derive(Clone, Debug)]
pub struct DurableStore {
    chains: Vec<Vec<Checkpoint>>,
    pub archived: Vec<Checkpoint>,
}

impl DurableStore {
    pub fn new(instances: usize) -> Self {
        DurableStore { chains: vec![Vec::new(); instances], archived: Vec::new() }
    }

    /// Registers a checkpoint whose upload has started.
    pub fn begin(&mut self, cp: Checkpoint) {
        debug_assert_eq!(cp.index, self.chains[cp.owner].len() as u64 + 1);
        self.chains[cp.owner].push(cp);
    }

    pub fn mark_durable(&mut self, owner: InstanceIdx, index: u64, at: Ticks) -> Option<&Checkpoint> {
        let cp = self.chains[owner].get_mut(index as usize - 1)?;
        cp.durable_time = Some(at);
        Some(cp)
    }

    /// Drops uploads that had not completed; returns their indices.
    pub fn abort_pending(&mut self, owner: InstanceIdx) -> Vec<u64> {
        let mut out = Vec::new();
        while self.chains[owner].last().is_some_and(|c| c.durable_time.is_none()) {
            out.push(self.chains[owner].pop().expect("non-empty").index);
        }
        out.reverse();
        out
    }

    pub fn latest_durable(&self, owner: InstanceIdx) -> u64 {
        self.chains[owner].iter().rev().find(|c| c.durable_time.is_some()).map_or(0, |c| c.index)
    }

    pub fn get(&self, owner: InstanceIdx, index: u64) -> Option<&Checkpoint> {
        index.checked_sub(1).and_then(|i| self.chains[owner].get(i as usize))
    }

    /// Moves checkpoints newer than `index` to the archive.
    pub fn truncate(&mut self, owner: InstanceIdx, index: u64) {
        let tail = self.chains[owner].split_off(index as usize);
        self.archived.extend(tail);
    }

    /// Releases snapshot contents of checkpoints older than `floor`.
    pub fn drop_states_below(&mut self, owner: InstanceIdx, floor: u64) {
        for cp in self.chains[owner].iter_mut().take(floor.saturating_sub(1) as usize) {
            cp.state = None;
        }
    }

    /// Metadata of durable checkpoints with index >= `floor`, ascending;
    /// `initial` stands in for index 0.
    pub fn durable_metas(&self, owner: InstanceIdx, floor: u64, initial: &CheckpointMeta) -> Vec<CheckpointMeta> {
        let mut out = Vec::new();
        if floor == 0 {
            out.push(initial.clone());
        }
        out.extend(
            self.chains[owner]
                .iter()
                .filter(|c| c.index >= floor && c.durable_time.is_some())
                .map(Checkpoint::meta),
        );
        out
    }

    pub fn chain(&self, owner: InstanceIdx) -> &[Checkpoint] {
        &self.chains[owner]
    }

    pub fn live_count(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }
}
