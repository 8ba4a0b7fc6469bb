//! End-to-end acceptance checks. Runs without the libtest harness so every
//! check prints one PASS/FAIL line; exits nonzero if any check fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rdnflow::ingest::{
    parse_branch_table, renumber_sequential, validate_radial, RawTable, TableFormat,
};
use rdnflow::model::{BranchRecord, NetworkModel, PerUnitBase, Phasor, SolveState};
use rdnflow::oracle::{baseline_solve, downstream_sum};
use rdnflow::solver::{
    backward_sweep, compute_load_currents, find_leaf_nodes, solve, step_model, CountMode,
    SolveOptions, StepCounter,
};
use rdnflow::synth::{random_tree, seeded_rng, TreeSpec};
use rdnflow::Error;

use common::*;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn solve_fixture(name: &str, opts: &SolveOptions) -> Result<rdnflow::SolveReport, String> {
    solve(&network(name), opts).map_err(|e| format!("{name}: {e}"))
}

fn golden_reproduction() -> Outcome {
    let start = Instant::now();
    let rep = solve_fixture("ieee69.txt", &SolveOptions::default())?;
    let elapsed = start.elapsed();
    let golden = golden_69();
    ensure(golden.len() == 69, || {
        format!("golden table has {} rows", golden.len())
    })?;

    let mut worst = (0usize, 0.0f64);
    for &(node, g) in &golden {
        let d = (rep.vmag(node) - g).abs();
        if d > worst.1 {
            worst = (node, d);
        }
    }
    ensure(worst.1 <= 1e-3, || {
        format!("node {} deviates by {:.3e}", worst.0, worst.1)
    })?;

    for (node, anchor) in [(2, 0.99997), (50, 0.99415), (61, 0.91217), (65, 0.90901)] {
        let v = rep.vmag(node);
        ensure((v - anchor).abs() <= 1e-3, || {
            format!("|V{node}| = {v:.5}, expected {anchor}")
        })?;
    }
    ensure(elapsed.as_secs_f64() < 1.0, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "max deviation {:.2e} at node {} over 69 nodes, {} iterations, {:.1} ms",
        worst.1,
        worst.0,
        rep.iterations,
        elapsed.as_secs_f64() * 1e3
    ))
}

fn oracle_equivalence() -> Outcome {
    let mut worst_current = 0.0f64;
    let mut worst_voltage = 0.0f64;
    for seed in 0..200u64 {
        let n = 2 + (seed as usize * 7919) % 29;
        let frac = 0.05 + 0.9 * ((seed * 37 % 100) as f64 / 100.0);
        let table = random_tree(
            &TreeSpec::with_leaf_fraction(n, frac),
            &mut seeded_rng(seed),
        );
        let net = validate_radial(&table, 1, PerUnitBase::default()).map_err(|e| e.to_string())?;

        let mut st = SolveState::flat(&net);
        compute_load_currents(&mut st, &net, &mut StepCounter::new()).map_err(|e| e.to_string())?;
        backward_sweep(
            &mut st,
            &net,
            &find_leaf_nodes(&net),
            CountMode::LiteralScan,
            &mut StepCounter::new(),
        )
        .map_err(|e| e.to_string())?;
        let dc = max_abs_diff(&st.branch_current, &downstream_sum(&net, &st.load_current));

        let opts = SolveOptions::default();
        let a = solve(&net, &opts).map_err(|e| format!("seed {seed}: {e}"))?;
        let b = baseline_solve(&net, &opts).map_err(|e| format!("seed {seed}: {e}"))?;
        let dv = max_abs_diff(&a.voltages, &b.voltages);

        ensure(dc <= 1e-12 && dv <= 1e-12, || {
            format!("seed {seed} (n={n}): current diff {dc:.2e}, voltage diff {dv:.2e}")
        })?;
        worst_current = worst_current.max(dc);
        worst_voltage = worst_voltage.max(dv);
    }
    Ok(format!(
        "200 trees, max current diff {worst_current:.1e}, max voltage diff {worst_voltage:.1e}"
    ))
}

fn power_balance() -> Outcome {
    let mut notes = Vec::new();
    for name in ["ieee69.txt", "ieee33.txt"] {
        let rep = solve_fixture(name, &SolveOptions::default())?;
        let m = rep.power_balance.mismatch();
        ensure(m.re.abs() <= 1e-6 && m.im.abs() <= 1e-6, || {
            format!("{name}: mismatch {:.3e} + j{:.3e} p.u.", m.re, m.im)
        })?;
        notes.push(format!("{name} {:.1e}/{:.1e}", m.re.abs(), m.im.abs()));
    }
    Ok(format!("P/Q mismatch p.u.: {}", notes.join(", ")))
}

fn step_count_saving() -> Outcome {
    let net = network("ieee69.txt");
    let opts = SolveOptions {
        count_mode: CountMode::LiteralScan,
        ..Default::default()
    };
    let a = solve(&net, &opts).map_err(|e| e.to_string())?;
    let b = baseline_solve(&net, &opts).map_err(|e| e.to_string())?;
    ensure(a.step_count() < b.step_count(), || {
        format!(
            "proposed {} not below baseline {}",
            a.step_count(),
            b.step_count()
        )
    })?;

    let n = net.node_count() as u64;
    let m = a.leaf_count as u64;
    let model = step_model(n, m, a.iterations as u64);
    let pa = a.steps.mean_per_iteration();
    let pb = b.steps.mean_per_iteration();
    let ea = pa / model.proposed_per_iteration as f64 - 1.0;
    let eb = pb / model.baseline_per_iteration as f64 - 1.0;
    ensure(ea.abs() <= 0.2 && eb.abs() <= 0.2, || {
        format!(
            "per-iteration proposed {pa:.0} vs {} ({:+.1}%), baseline {pb:.0} vs {} ({:+.1}%)",
            model.proposed_per_iteration,
            ea * 100.0,
            model.baseline_per_iteration,
            eb * 100.0
        )
    })?;
    Ok(format!(
        "totals {} < {}; per iteration proposed {pa:.0} vs {} ({:+.1}%), baseline {pb:.0} vs {} ({:+.1}%), r={}, m={m}",
        a.step_count(),
        b.step_count(),
        model.proposed_per_iteration,
        ea * 100.0,
        model.baseline_per_iteration,
        eb * 100.0,
        a.iterations
    ))
}

/// A light branch and a heavy one off the root: the heavy end is still
/// settling after the light end has stopped moving.
fn straggler() -> NetworkModel {
    let row = |id, to, r, x, p, q| BranchRecord {
        branch_id: id,
        sending_node: 1,
        receiving_node: to,
        resistance: r,
        reactance: x,
        load_p: p,
        load_q: q,
        capacity: None,
        is_tie: false,
    };
    let table = RawTable::new(
        vec![
            row(1, 2, 0.1, 0.05, 5.0, 2.0),
            row(2, 3, 3.0, 3.0, 600.0, 400.0),
        ],
        "straggler",
    )
    .unwrap();
    validate_radial(&table, 1, PerUnitBase::default()).unwrap()
}

fn convergence_semantics() -> Outcome {
    let net = straggler();
    let tol = 1e-4;
    let rep = solve(&net, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let h = &rep.history;
    let last = h.last().ok_or("no iterations recorded")?;
    ensure(
        rep.converged && last.max_delta <= tol && last.nodes_over_tolerance == 0,
        || format!("declared convergence with max delta {:.3e}", last.max_delta),
    )?;
    ensure(h.len() >= 2, || "converged on the first pass".into())?;
    let prev = &h[h.len() - 2];
    ensure(
        prev.nodes_over_tolerance == 1 && prev.max_delta > tol,
        || {
            format!(
                "penultimate pass had {} nodes over, max delta {:.3e}",
                prev.nodes_over_tolerance, prev.max_delta
            )
        },
    )?;
    ensure(h[..h.len() - 1].iter().all(|r| r.max_delta > tol), || {
        "an earlier pass was already within tolerance".into()
    })?;

    // one iteration short of what it needs must not be reported as converged
    let capped = SolveOptions {
        max_iterations: rep.iterations - 1,
        ..Default::default()
    };
    match solve(&net, &capped) {
        Err(Error::NonConvergence { max_delta, .. }) if max_delta > tol => {}
        other => return Err(format!("capped run returned {other:?}")),
    }

    // a looser threshold that the straggler already meets stops one pass earlier
    let loose = SolveOptions {
        tolerance: prev.max_delta * 1.01,
        ..Default::default()
    };
    let early = solve(&net, &loose).map_err(|e| e.to_string())?;
    ensure(early.iterations == rep.iterations - 1, || {
        format!("loose tolerance took {} iterations", early.iterations)
    })?;
    Ok(format!(
        "one node at {:.2e} held the run for iteration {}, converged at {:.2e}",
        prev.max_delta, rep.iterations, last.max_delta
    ))
}

fn polar_agreement() -> Outcome {
    let opts = SolveOptions {
        debug_polar: true,
        ..Default::default()
    };
    let mut notes = Vec::new();
    for name in ["ieee69.txt", "ieee33.txt"] {
        let rep = solve_fixture(name, &opts)?;
        let d = rep
            .polar_deviation
            .ok_or_else(|| format!("{name}: no polar check ran"))?;
        ensure(d.magnitude <= 1e-10 && d.angle <= 1e-10, || {
            format!(
                "{name}: magnitude {:.2e}, angle {:.2e}",
                d.magnitude, d.angle
            )
        })?;
        notes.push(format!("{name} {:.1e}/{:.1e}", d.magnitude, d.angle));
    }
    Ok(format!("max |V|/angle deviation: {}", notes.join(", ")))
}

fn thirty_three_bus() -> Outcome {
    let net = network("ieee33.txt");
    let rep = solve(&net, &SolveOptions::default()).map_err(|e| e.to_string())?;
    ensure(rep.converged && rep.iterations <= 100, || {
        format!("{} iterations", rep.iterations)
    })?;

    let mut kcl = 0.0f64;
    for k in 2..=net.node_count() {
        let inb = net
            .parent_branch(k)
            .ok_or(format!("node {k} has no feeder"))?;
        let vk = rep.voltages[k - 1];
        let load = net.load(k);
        let li = Phasor::new(load.re, -load.im)
            .checked_div(vk.conj())
            .map_err(|e| e.to_string())?;
        let out = net
            .children(k)
            .iter()
            .fold(Phasor::ZERO, |acc, &c| acc + rep.branch_currents[c]);
        kcl = kcl.max((rep.branch_currents[inb] - li - out).magnitude());
    }
    ensure(kcl <= 1e-12, || format!("KCL residual {kcl:.2e}"))?;

    for b in net.branches() {
        let (vp, vc) = (rep.vmag(b.from), rep.vmag(b.to));
        ensure(vc <= vp + 1e-9, || {
            format!("|V{}| = {vc} above parent |V{}| = {vp}", b.to, b.from)
        })?;
    }
    Ok(format!(
        "{} iterations, KCL residual {kcl:.1e}, min |V| {:.5}",
        rep.iterations,
        rep.node_voltages
            .iter()
            .map(|v| v.vmag_pu)
            .fold(f64::INFINITY, f64::min)
    ))
}

fn ingest_fidelity() -> Outcome {
    let t = table("ieee69.txt");
    let closed = t.closed().count();
    let ties = t.ties().count();
    ensure(closed == 68 && ties == 5, || {
        format!("{closed} closed, {ties} ties")
    })?;

    let expected = parse_branch_table(
        "5 5 6 0.3660 0.1864 2.60 2.20 1899\n\
         17 17 18 0.0047 0.0016 60.0 35.0 2200\n\
         60 60 61 0.5075 0.2585 1244.0 888.0 1899\n\
         69* 11 43 0.5000 0.5000 566\n",
        TableFormat::Delimited,
    )
    .map_err(|e| e.to_string())?;
    for want in &expected.rows {
        let got = t
            .rows
            .iter()
            .find(|r| r.branch_id == want.branch_id)
            .ok_or(format!("row {} missing", want.branch_id))?;
        ensure(got == want, || format!("row {}: {got:?}", want.branch_id))?;
    }

    let (out, map) = renumber_sequential(&t, 1).map_err(|e| e.to_string())?;
    ensure(map.is_identity() && out == t, || {
        "renumbering changed the table".into()
    })?;
    Ok("68 closed + 5 ties, rows 5/17/60/69* match, renumbering is the identity".into())
}

fn main() -> ExitCode {
    let checks: [Check; 8] = [
        (
            "69-bus voltages match the published profile",
            golden_reproduction,
        ),
        (
            "stack sweep and solver match the downstream-set oracle",
            oracle_equivalence,
        ),
        ("power balance at convergence", power_balance),
        ("step-count saving against closed forms", step_count_saving),
        ("convergence waits for every node", convergence_semantics),
        (
            "polar and rectangular voltage updates agree",
            polar_agreement,
        ),
        (
            "33-bus convergence, KCL and voltage monotonicity",
            thirty_three_bus,
        ),
        ("69-bus ingest fidelity", ingest_fidelity),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {}: {name} ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}: {name} ({detail})", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        checks.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
