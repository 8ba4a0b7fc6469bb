use serde::Serialize;

use super::counter::{CountMode, StepCategory, StepCounter};
use crate::model::NetworkModel;

/// Nodes that receive power but feed no closed branch, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LeafSet {
    leaves: Vec<usize>,
}

impl LeafSet {
    /// Panics unless `leaves` is strictly ascending.
    pub fn from_sorted(leaves: Vec<usize>) -> Self {
        assert!(
            leaves.windows(2).all(|w| w[0] < w[1]),
            "leaf list must be strictly ascending"
        );
        LeafSet { leaves }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.leaves
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// Binary search; returns membership and the number of probes made.
    pub fn search(&self, node: usize) -> (bool, u64) {
        let mut probes = 0;
        // inclusive bounds, shifted by one so `high` cannot underflow
        let mut low = 1usize;
        let mut high = self.leaves.len();
        while low <= high {
            probes += 1;
            let mid = (low + high) / 2;
            let probe = self.leaves[mid - 1];
            if probe > node {
                high = mid - 1;
            } else if probe < node {
                low = mid + 1;
            } else {
                return (true, probes);
            }
        }
        (false, probes)
    }
}

pub fn is_leaf(leaves: &LeafSet, node: usize) -> bool {
    leaves.search(node).0
}

pub fn find_leaf_nodes(net: &NetworkModel) -> LeafSet {
    find_leaf_nodes_counted(net, CountMode::Adjacency, &mut StepCounter::new())
}

/// Scans the sending-node column for every node that never feeds a branch.
///
/// One step is counted per branch examined: `LN` in adjacency mode (one pass
/// marking senders), `NB·LN` in literal mode (a full pass per node).
pub fn find_leaf_nodes_counted(
    net: &NetworkModel,
    mode: CountMode,
    counter: &mut StepCounter,
) -> LeafSet {
    let n = net.node_count();
    let root = net.root();
    let branches = net.branches();
    let mut leaves = Vec::new();
    match mode {
        CountMode::Adjacency => {
            let mut sends = vec![false; n];
            for b in branches {
                sends[b.from - 1] = true;
            }
            counter.add(StepCategory::LeafScan, branches.len() as u64);
            for node in 1..=n {
                if node != root && !sends[node - 1] {
                    leaves.push(node);
                }
            }
        }
        CountMode::LiteralScan => {
            for node in 1..=n {
                let mut feeds = false;
                for b in branches {
                    feeds |= b.from == node;
                }
                counter.add(StepCategory::LeafScan, branches.len() as u64);
                if node != root && !feeds {
                    leaves.push(node);
                }
            }
        }
    }
    LeafSet { leaves }
}
