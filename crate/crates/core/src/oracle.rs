//! Brute-force reference computations.
//!
//! [`downstream_sum`] sums load currents over explicitly enumerated subtrees
//! and is the check on the stack-based backward sweep. [`baseline_solve`]
//! uses the same voltage update but rebuilds the leaf list and every
//! downstream set inside each iteration, counting the steps that costs.

use crate::error::Result;
use crate::model::{NetworkModel, Phasor, SolveState};
use crate::solver::{run_sweeps, Method, SolveOptions, SolveReport, StepCategory, StepCounter};

/// Per-branch sorted list of the nodes fed through that branch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DownstreamSets {
    sets: Vec<Vec<usize>>,
}

impl DownstreamSets {
    /// Enumerates each branch's subtree by walking outward from its
    /// receiving node. Uses no branch ordering.
    pub fn enumerate(net: &NetworkModel) -> Self {
        let sets = net
            .branches()
            .iter()
            .map(|b| {
                let mut nodes = Vec::new();
                let mut pending = vec![b.to];
                while let Some(node) = pending.pop() {
                    nodes.push(node);
                    pending.extend(net.children(node).iter().map(|&c| net.branches()[c].to));
                }
                nodes.sort_unstable();
                nodes
            })
            .collect();
        DownstreamSets { sets }
    }

    pub fn get(&self, branch_pos: usize) -> &[usize] {
        &self.sets[branch_pos]
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Sum of set sizes: each node counted once per branch above it.
    pub fn mass(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }
}

/// Branch currents as plain sums of load currents over each downstream set.
pub fn downstream_sum(net: &NetworkModel, load_currents: &[Phasor]) -> Vec<Phasor> {
    let sets = DownstreamSets::enumerate(net);
    (0..sets.len())
        .map(|j| {
            sets.get(j)
                .iter()
                .fold(Phasor::ZERO, |acc, &k| acc + load_currents[k - 1])
        })
        .collect()
}

/// Leaf flags rebuilt with a full pass over the sending column per node.
fn scan_leaves(net: &NetworkModel, counter: &mut StepCounter) -> Vec<bool> {
    let branches = net.branches();
    (1..=net.node_count())
        .map(|node| {
            counter.add(StepCategory::LeafScan, branches.len() as u64);
            node != net.root() && !branches.iter().any(|b| b.from == node)
        })
        .collect()
}

/// Downstream sets assembled leaf-to-root, finding child branches by
/// scanning the whole branch list.
fn build_sets(net: &NetworkModel, leaf: &[bool], counter: &mut StepCounter) -> Vec<Vec<usize>> {
    let branches = net.branches();
    let mut sets: Vec<Vec<usize>> = vec![Vec::new(); branches.len()];
    for pos in (0..branches.len()).rev() {
        let to = branches[pos].to;
        counter.tick(StepCategory::Current);
        let mut set = vec![to];
        if !leaf[to - 1] {
            counter.add(StepCategory::Current, branches.len() as u64);
            for (j, b) in branches.iter().enumerate() {
                if b.from == to {
                    set.extend_from_slice(&sets[j]);
                }
            }
            set.sort_unstable();
        }
        counter.add(StepCategory::Current, set.len() as u64);
        sets[pos] = set;
    }
    sets
}

pub fn baseline_solve(net: &NetworkModel, options: &SolveOptions) -> Result<SolveReport> {
    let mut last_leaf_count = 0;
    let mut step = |state: &mut SolveState, counter: &mut StepCounter| {
        let leaf = scan_leaves(net, counter);
        last_leaf_count = leaf.iter().filter(|&&l| l).count();
        let sets = build_sets(net, &leaf, counter);
        for (pos, set) in sets.iter().enumerate() {
            state.branch_current[pos] = set
                .iter()
                .fold(Phasor::ZERO, |acc, &k| acc + state.load_current[k - 1]);
            counter.add(StepCategory::Current, set.len() as u64);
        }
        Ok(())
    };
    let leaf_count = (1..=net.node_count())
        .filter(|&k| k != net.root() && net.children(k).is_empty())
        .count();
    let report = run_sweeps(
        net,
        options,
        Method::Baseline,
        leaf_count,
        StepCounter::new(),
        &mut step,
    )?;
    debug_assert_eq!(last_leaf_count, leaf_count);
    Ok(report)
}
