//! Seeded random radial feeders for property tests and step-count benches.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ingest::RawTable;
use crate::model::BranchRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeSpec {
    pub nodes: usize,
    /// Exact leaf count, clamped to `1..nodes`.
    pub leaves: usize,
    /// Upper bound of the per-branch R and X draw, ohms.
    pub max_ohm: f64,
    /// Upper bound of the total real load spread over the feeder, kW.
    pub total_kw: f64,
}

impl TreeSpec {
    /// A tree whose leaf count is `fraction · nodes`, rounded.
    pub fn with_leaf_fraction(nodes: usize, fraction: f64) -> Self {
        let leaves = (fraction * nodes as f64).round() as usize;
        TreeSpec {
            nodes,
            leaves,
            max_ohm: 0.5,
            total_kw: 1500.0,
        }
    }
}

/// Builds a sequentially numbered random tree.
///
/// Node `k` attaches to a lower-numbered node. An attachment to a current
/// leaf keeps the leaf count; an attachment to an inner node (or the root)
/// adds a leaf. Exactly `leaves − 1` of the `nodes − 2` attachments after
/// the first branch are of the second kind.
pub fn random_tree(spec: &TreeSpec, rng: &mut impl Rng) -> RawTable {
    let n = spec.nodes.max(2);
    let target = spec.leaves.clamp(1, n - 1);

    let mut branching = vec![false; n + 1];
    let mut slots: Vec<usize> = (3..=n).collect();
    for _ in 0..target - 1 {
        let i = rng.gen_range(0..slots.len());
        branching[slots.swap_remove(i)] = true;
    }

    let mut parent = vec![0usize; n + 1];
    let mut is_leaf = vec![false; n + 1];
    let mut leaves: Vec<usize> = vec![2];
    let mut inner: Vec<usize> = vec![1];
    parent[2] = 1;
    is_leaf[2] = true;
    for k in 3..=n {
        let p = if branching[k] {
            inner[rng.gen_range(0..inner.len())]
        } else {
            let i = rng.gen_range(0..leaves.len());
            let p = leaves.swap_remove(i);
            is_leaf[p] = false;
            inner.push(p);
            p
        };
        parent[k] = p;
        is_leaf[k] = true;
        leaves.push(k);
    }
    debug_assert_eq!(leaves.len(), target);

    let per_node_kw = spec.total_kw / (n - 1) as f64;
    let rows = (2..=n)
        .map(|k| {
            let p = rng.gen_range(0.0..=per_node_kw * 2.0);
            BranchRecord {
                branch_id: k - 1,
                sending_node: parent[k],
                receiving_node: k,
                resistance: rng.gen_range(0.01..=spec.max_ohm),
                reactance: rng.gen_range(0.01..=spec.max_ohm),
                load_p: p,
                load_q: p * rng.gen_range(0.0..=0.8),
                capacity: None,
                is_tie: false,
            }
        })
        .collect();
    RawTable::new(rows, format!("random-{n}-{target}")).expect("generated rows are valid")
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
