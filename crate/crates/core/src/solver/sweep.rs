//! The four per-iteration kernels: load currents, backward sweep, forward
//! sweep and the convergence check, plus branch losses.

use serde::{Deserialize, Serialize};

use super::counter::{CountMode, StepCategory, StepCounter};
use super::leaf::LeafSet;
use crate::error::{Error, Result};
use crate::model::{wrap_angle, NetworkModel, Phasor, SolveState};

/// Largest allowed gap between the polar voltage formulas and the
/// rectangular update, per branch.
pub const POLAR_TOLERANCE: f64 = 1e-10;

/// `LI_i = (PL_i − jQL_i) / conj(V_i)` at every node; unloaded nodes get an
/// exact zero.
pub fn compute_load_currents(
    state: &mut SolveState,
    net: &NetworkModel,
    counter: &mut StepCounter,
) -> Result<()> {
    for (k, &s) in net.loads().iter().enumerate() {
        state.load_current[k] = if s == Phasor::ZERO {
            Phasor::ZERO
        } else {
            s.conj()
                .checked_div(state.node_voltage[k].conj())
                .map_err(|_| Error::VoltageCollapse { node: k + 1 })?
        };
    }
    counter.add(StepCategory::Current, net.node_count() as u64);
    Ok(())
}

/// Polar form of the load current: magnitude `|S|/|V|` and angle
/// `θv − atan2(QL, PL)`.
pub fn load_current_polar(load: Phasor, voltage: Phasor) -> (f64, f64) {
    (
        load.magnitude() / voltage.magnitude(),
        wrap_angle(voltage.angle() - load.im.atan2(load.re)),
    )
}

/// Branch currents from the far end of the feeder back to the root.
///
/// Branches are visited in descending order. A branch into a leaf carries
/// that leaf's load current; any other branch collects the currents of the
/// branches leaving its receiving node through a stack, then adds the
/// receiving node's own load current.
pub fn backward_sweep(
    state: &mut SolveState,
    net: &NetworkModel,
    leaves: &LeafSet,
    mode: CountMode,
    counter: &mut StepCounter,
) -> Result<()> {
    let branches = net.branches();
    let mut done = vec![false; branches.len()];
    let mut stack: Vec<usize> = Vec::new();

    for pos in (0..branches.len()).rev() {
        let to = branches[pos].to;
        let (leaf, probes) = leaves.search(to);
        counter.add(StepCategory::Current, probes);

        if leaf {
            state.branch_current[pos] = state.load_current[to - 1];
            counter.tick(StepCategory::Current);
        } else {
            stack.clear();
            match mode {
                CountMode::Adjacency => stack.extend_from_slice(net.children(to)),
                CountMode::LiteralScan => {
                    counter.add(StepCategory::Current, branches.len() as u64);
                    stack.extend(
                        branches
                            .iter()
                            .enumerate()
                            .filter(|(_, b)| b.from == to)
                            .map(|(j, _)| j),
                    );
                }
            }
            counter.add(StepCategory::Current, stack.len() as u64);

            let mut sum = Phasor::ZERO;
            while let Some(child) = stack.pop() {
                if !done[child] {
                    return Err(Error::Invariant(format!(
                        "branch {} needed before branch {} was computed",
                        branches[child].id, branches[pos].id
                    )));
                }
                sum += state.branch_current[child];
                // pop + add
                counter.add(StepCategory::Current, 2);
            }
            sum += state.load_current[to - 1];
            counter.tick(StepCategory::Current);
            state.branch_current[pos] = sum;
        }
        done[pos] = true;
    }
    Ok(())
}

/// Receiving-end voltage from the polar formulas: `φ = θI + θZ`, then
/// `|Vr|² = |Vs|² + |I|²|Z|² − 2|Vs||I||Z|cos(θVs − φ)` and
/// `θVr = atan2(|Vs|sinθVs − |I||Z|sinφ, |Vs|cosθVs − |I||Z|cosφ)`.
pub fn receiving_voltage_polar(sending: Phasor, current: Phasor, impedance: Phasor) -> (f64, f64) {
    let vs = sending.magnitude();
    let theta_vs = sending.angle();
    let drop = current.magnitude() * impedance.magnitude();
    let phi = current.im.atan2(current.re) + impedance.im.atan2(impedance.re);

    let mag_sq = vs * vs + drop * drop - 2.0 * vs * drop * (theta_vs - phi).cos();
    let angle =
        (vs * theta_vs.sin() - drop * phi.sin()).atan2(vs * theta_vs.cos() - drop * phi.cos());
    (mag_sq.max(0.0).sqrt(), wrap_angle(angle))
}

/// Worst disagreement between the polar formulas and the rectangular update.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PolarDeviation {
    pub magnitude: f64,
    pub angle: f64,
}

impl PolarDeviation {
    pub fn merge(&mut self, other: PolarDeviation) {
        self.magnitude = self.magnitude.max(other.magnitude);
        self.angle = self.angle.max(other.angle);
    }
}

/// `V_r = V_s − I·Z` in ascending branch order. With `debug_polar`, every
/// branch is re-evaluated in polar form and checked against
/// [`POLAR_TOLERANCE`].
pub fn forward_sweep(
    state: &mut SolveState,
    net: &NetworkModel,
    debug_polar: bool,
    counter: &mut StepCounter,
) -> Result<Option<PolarDeviation>> {
    let mut worst = debug_polar.then(PolarDeviation::default);
    for (pos, b) in net.branches().iter().enumerate() {
        let sending = state.node_voltage[b.from - 1];
        let current = state.branch_current[pos];
        let v = sending - current * b.impedance;
        if !v.is_finite() {
            return Err(Error::Numeric { branch: b.id });
        }
        state.node_voltage[b.to - 1] = v;
        counter.tick(StepCategory::Voltage);

        if let Some(worst) = worst.as_mut() {
            let (mag, angle) = receiving_voltage_polar(sending, current, b.impedance);
            let dev = PolarDeviation {
                magnitude: (mag - v.magnitude()).abs(),
                angle: wrap_angle(angle - v.angle()).abs(),
            };
            if dev.magnitude > POLAR_TOLERANCE || dev.angle > POLAR_TOLERANCE {
                return Err(Error::Invariant(format!(
                    "polar voltage on branch {} differs by {:.3e} p.u. / {:.3e} rad",
                    b.id, dev.magnitude, dev.angle
                )));
            }
            worst.merge(dev);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceCheck {
    pub converged: bool,
    pub max_delta: f64,
    /// Nodes whose magnitude moved by more than the tolerance.
    pub nodes_over: usize,
}

/// Converged iff every node's magnitude changed by at most `tolerance`.
/// The current magnitudes then become the previous ones.
pub fn check_convergence(
    state: &mut SolveState,
    tolerance: f64,
    counter: &mut StepCounter,
) -> ConvergenceCheck {
    let mut within = 0usize;
    let mut max_delta = 0.0f64;
    for (v, prev) in state
        .node_voltage
        .iter()
        .zip(state.prev_voltage_mag.iter_mut())
    {
        let mag = v.magnitude();
        let delta = (mag - *prev).abs();
        if delta <= tolerance {
            within += 1;
        }
        max_delta = max_delta.max(delta);
        *prev = mag;
    }
    let n = state.node_voltage.len();
    counter.add(StepCategory::Convergence, n as u64);
    ConvergenceCheck {
        converged: within == n,
        max_delta,
        nodes_over: n - within,
    }
}

/// Per-branch `|I|²·(R + jX)` in p.u.
pub fn compute_losses(state: &SolveState, net: &NetworkModel) -> Vec<Phasor> {
    net.branches()
        .iter()
        .zip(&state.branch_current)
        .map(|(b, i)| b.impedance.scale(i.magnitude_sqr()))
        .collect()
}
