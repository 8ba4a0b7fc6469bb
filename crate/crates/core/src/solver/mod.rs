//! Backward/forward sweep load flow.
//!
//! Leaves are identified once, before iterating. Each iteration then
//! computes load currents, accumulates branch currents leaf-to-root,
//! updates voltages root-to-leaf and tests every node's magnitude change
//! against the tolerance.

mod counter;
mod leaf;
mod sweep;

pub use counter::{step_model, CountMode, StepCategory, StepCounter, StepCounts, StepModel};
pub use leaf::{find_leaf_nodes, find_leaf_nodes_counted, is_leaf, LeafSet};
pub use sweep::{
    backward_sweep, check_convergence, compute_load_currents, compute_losses, forward_sweep,
    load_current_polar, receiving_voltage_polar, ConvergenceCheck, PolarDeviation, POLAR_TOLERANCE,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NetworkModel, Phasor, SolveState};

pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Voltage-magnitude change, p.u.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub debug_polar: bool,
    pub count_mode: CountMode,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            debug_polar: false,
            count_mode: CountMode::Adjacency,
        }
    }
}

impl SolveOptions {
    pub fn check(&self) -> Result<()> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::Data(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Data("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Proposed,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeVoltage {
    pub node: usize,
    pub vmag_pu: f64,
    pub angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchFlow {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub current_pu: f64,
    pub loss_kw: f64,
    pub loss_kvar: f64,
}

/// Complex power at the substation against total load and losses, p.u.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBalance {
    pub injected: Phasor,
    pub load: Phasor,
    pub loss: Phasor,
}

impl PowerBalance {
    /// `injected − load − loss`.
    pub fn mismatch(&self) -> Phasor {
        self.injected - self.load - self.loss
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub max_delta: f64,
    pub nodes_over_tolerance: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    pub converged: bool,
    pub iterations: usize,
    pub node_count: usize,
    pub leaf_count: usize,
    pub tolerance: f64,
    pub node_voltages: Vec<NodeVoltage>,
    pub branch_flows: Vec<BranchFlow>,
    pub total_loss_kw: f64,
    pub total_loss_kvar: f64,
    pub power_balance: PowerBalance,
    pub steps: StepCounter,
    pub history: Vec<IterationRecord>,
    pub polar_deviation: Option<PolarDeviation>,
    /// Converged node voltages, p.u., indexed by `node - 1`.
    pub voltages: Vec<Phasor>,
    /// Branch currents at the converged voltages, p.u., in branch order.
    pub branch_currents: Vec<Phasor>,
}

impl SolveReport {
    pub fn step_count(&self) -> u64 {
        self.steps.total()
    }

    pub fn vmag(&self, node: usize) -> f64 {
        self.node_voltages[node - 1].vmag_pu
    }
}

/// Fills `state.branch_current` from `state.load_current`.
pub(crate) type BranchCurrentStep<'a> =
    dyn FnMut(&mut SolveState, &mut StepCounter) -> Result<()> + 'a;

/// Iteration loop shared by the proposed and baseline methods; only the
/// branch-current step differs between them.
pub(crate) fn run_sweeps(
    net: &NetworkModel,
    options: &SolveOptions,
    method: Method,
    leaf_count: usize,
    mut counter: StepCounter,
    branch_currents: &mut BranchCurrentStep<'_>,
) -> Result<SolveReport> {
    options.check()?;
    let n = net.node_count();
    let mut state = SolveState::flat(net);
    // flat start: V, V_old and I initialised
    counter.add(StepCategory::Setup, (2 * n + net.branch_count()) as u64);

    let mut history = Vec::new();
    let mut polar: Option<PolarDeviation> = None;
    let mut last_delta = f64::INFINITY;

    for iteration in 1..=options.max_iterations {
        counter.begin_iteration();
        compute_load_currents(&mut state, net, &mut counter)?;
        branch_currents(&mut state, &mut counter)?;
        if let Some(dev) = forward_sweep(&mut state, net, options.debug_polar, &mut counter)? {
            polar.get_or_insert_with(PolarDeviation::default).merge(dev);
        }
        let check = check_convergence(&mut state, options.tolerance, &mut counter);
        counter.end_iteration();

        history.push(IterationRecord {
            iteration,
            max_delta: check.max_delta,
            nodes_over_tolerance: check.nodes_over,
        });
        last_delta = check.max_delta;

        if check.converged {
            // Currents consistent with the converged voltages for losses and
            // the power balance; not part of the iteration count.
            let mut scratch = StepCounter::new();
            compute_load_currents(&mut state, net, &mut scratch)?;
            branch_currents(&mut state, &mut scratch)?;
            return Ok(finish(
                net, options, method, leaf_count, iteration, state, counter, history, polar,
            ));
        }
    }

    Err(Error::NonConvergence {
        iterations: options.max_iterations,
        max_delta: last_delta,
    })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    net: &NetworkModel,
    options: &SolveOptions,
    method: Method,
    leaf_count: usize,
    iterations: usize,
    state: SolveState,
    steps: StepCounter,
    history: Vec<IterationRecord>,
    polar_deviation: Option<PolarDeviation>,
) -> SolveReport {
    let kva = net.base().kva_base();
    let losses = compute_losses(&state, net);

    let node_voltages = state
        .node_voltage
        .iter()
        .enumerate()
        .map(|(k, v)| NodeVoltage {
            node: k + 1,
            vmag_pu: v.magnitude(),
            angle_deg: v.angle().to_degrees(),
        })
        .collect();

    let branch_flows: Vec<BranchFlow> = net
        .branches()
        .iter()
        .zip(&state.branch_current)
        .zip(&losses)
        .map(|((b, i), loss)| BranchFlow {
            id: b.id,
            from: b.from,
            to: b.to,
            current_pu: i.magnitude(),
            loss_kw: loss.re * kva,
            loss_kvar: loss.im * kva,
        })
        .collect();
    let total_loss_kw = branch_flows.iter().map(|f| f.loss_kw).sum();
    let total_loss_kvar = branch_flows.iter().map(|f| f.loss_kvar).sum();

    let root = net.root();
    let v_root = state.node_voltage[root - 1];
    let injected = net.children(root).iter().fold(Phasor::ZERO, |acc, &pos| {
        acc + v_root * state.branch_current[pos].conj()
    });
    let loss = losses.iter().fold(Phasor::ZERO, |acc, &l| acc + l);

    SolveReport {
        method,
        converged: true,
        iterations,
        node_count: net.node_count(),
        leaf_count,
        tolerance: options.tolerance,
        node_voltages,
        branch_flows,
        total_loss_kw,
        total_loss_kvar,
        power_balance: PowerBalance {
            injected,
            load: net.total_load(),
            loss,
        },
        steps,
        history,
        polar_deviation,
        voltages: state.node_voltage,
        branch_currents: state.branch_current,
    }
}

/// Solves the network from a flat start.
pub fn solve(net: &NetworkModel, options: &SolveOptions) -> Result<SolveReport> {
    let mut counter = StepCounter::new();
    let leaves = find_leaf_nodes_counted(net, options.count_mode, &mut counter);
    let mode = options.count_mode;
    let mut step = |state: &mut SolveState, counter: &mut StepCounter| {
        backward_sweep(state, net, &leaves, mode, counter)
    };
    run_sweeps(
        net,
        options,
        Method::Proposed,
        leaves.len(),
        counter,
        &mut step,
    )
}
