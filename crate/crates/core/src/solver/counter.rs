use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

/// How the backward sweep finds the branches leaving a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountMode {
    /// Read the precomputed children adjacency.
    #[default]
    Adjacency,
    /// Compare against the sending node of every closed branch, as a plain
    /// table scan would. Same currents, more steps.
    LiteralScan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepCategory {
    Setup,
    LeafScan,
    Current,
    Voltage,
    Convergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepCounts {
    pub setup: u64,
    pub leaf_scan: u64,
    pub current: u64,
    pub voltage: u64,
    pub convergence: u64,
}

impl StepCounts {
    pub fn total(&self) -> u64 {
        self.setup + self.leaf_scan + self.current + self.voltage + self.convergence
    }

    fn slot(&mut self, category: StepCategory) -> &mut u64 {
        match category {
            StepCategory::Setup => &mut self.setup,
            StepCategory::LeafScan => &mut self.leaf_scan,
            StepCategory::Current => &mut self.current,
            StepCategory::Voltage => &mut self.voltage,
            StepCategory::Convergence => &mut self.convergence,
        }
    }
}

impl AddAssign for StepCounts {
    fn add_assign(&mut self, rhs: StepCounts) {
        self.setup += rhs.setup;
        self.leaf_scan += rhs.leaf_scan;
        self.current += rhs.current;
        self.voltage += rhs.voltage;
        self.convergence += rhs.convergence;
    }
}

/// Tally of elementary operations, kept cumulatively and per iteration.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCounter {
    pub cumulative: StepCounts,
    pub per_iteration: Vec<StepCounts>,
    #[serde(skip)]
    open: Option<StepCounts>,
}

impl StepCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, category: StepCategory, steps: u64) {
        *self.cumulative.slot(category) += steps;
        if let Some(iter) = self.open.as_mut() {
            *iter.slot(category) += steps;
        }
    }

    pub fn tick(&mut self, category: StepCategory) {
        self.add(category, 1);
    }

    pub fn begin_iteration(&mut self) {
        debug_assert!(self.open.is_none(), "iteration already open");
        self.open = Some(StepCounts::default());
    }

    pub fn end_iteration(&mut self) {
        if let Some(iter) = self.open.take() {
            self.per_iteration.push(iter);
        }
    }

    pub fn total(&self) -> u64 {
        self.cumulative.total()
    }

    /// Mean steps per completed iteration.
    pub fn mean_per_iteration(&self) -> f64 {
        if self.per_iteration.is_empty() {
            return 0.0;
        }
        let sum: u64 = self.per_iteration.iter().map(StepCounts::total).sum();
        sum as f64 / self.per_iteration.len() as f64
    }
}

/// Closed-form step predictions for an `n`-node feeder with `m` leaves
/// solved in `r` iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepModel {
    pub proposed: u64,
    pub baseline: u64,
    pub proposed_per_iteration: u64,
    pub baseline_per_iteration: u64,
}

impl StepModel {
    /// Baseline over proposed.
    pub fn saving_ratio(&self) -> f64 {
        self.baseline as f64 / self.proposed as f64
    }
}

/// proposed: `3n + n² + r(n + n·m + n(n−m) + n)`;
/// baseline: `3n + n² + r(n + n² + n² + n)`.
pub fn step_model(n: u64, m: u64, r: u64) -> StepModel {
    let setup = 3 * n + n * n;
    let proposed_per_iteration = n + n * m + n * n.saturating_sub(m) + n;
    let baseline_per_iteration = n + n * n + n * n + n;
    StepModel {
        proposed: setup + r * proposed_per_iteration,
        baseline: setup + r * baseline_per_iteration,
        proposed_per_iteration,
        baseline_per_iteration,
    }
}
