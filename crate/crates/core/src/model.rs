//! Domain types shared by the ingest, solver and oracle modules.
//!
//! Electrical quantities are stored in rectangular form; polar views are
//! derived on demand. Network quantities inside a [`NetworkModel`] are in
//! per-unit on the model's [`PerUnitBase`].

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A complex electrical quantity (voltage, current, impedance or power).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Phasor {
    pub re: f64,
    pub im: f64,
}

impl Phasor {
    pub const ZERO: Phasor = Phasor { re: 0.0, im: 0.0 };
    pub const ONE: Phasor = Phasor { re: 1.0, im: 0.0 };

    pub const fn new(re: f64, im: f64) -> Self {
        Phasor { re, im }
    }

    pub fn from_polar(magnitude: f64, angle: f64) -> Self {
        Complex64::from_polar(magnitude, angle).into()
    }

    pub fn magnitude(self) -> f64 {
        Complex64::from(self).norm()
    }

    pub fn magnitude_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    /// Angle in radians, normalized to (-π, π].
    pub fn angle(self) -> f64 {
        wrap_angle(self.im.atan2(self.re))
    }

    pub fn conj(self) -> Self {
        Phasor::new(self.re, -self.im)
    }

    pub fn scale(self, k: f64) -> Self {
        Phasor::new(self.re * k, self.im * k)
    }

    pub fn checked_div(self, rhs: Phasor) -> Result<Phasor> {
        if rhs.re == 0.0 && rhs.im == 0.0 {
            return Err(Error::Singularity);
        }
        Ok((Complex64::from(self) / Complex64::from(rhs)).into())
    }

    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Wraps an angle in radians into (-π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

impl From<Complex64> for Phasor {
    fn from(c: Complex64) -> Self {
        Phasor::new(c.re, c.im)
    }
}

impl From<Phasor> for Complex64 {
    fn from(p: Phasor) -> Self {
        Complex64::new(p.re, p.im)
    }
}

impl Add for Phasor {
    type Output = Phasor;
    fn add(self, rhs: Phasor) -> Phasor {
        Phasor::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl AddAssign for Phasor {
    fn add_assign(&mut self, rhs: Phasor) {
        self.re += rhs.re;
        self.im += rhs.im;
    }
}

impl Sub for Phasor {
    type Output = Phasor;
    fn sub(self, rhs: Phasor) -> Phasor {
        Phasor::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl Mul for Phasor {
    type Output = Phasor;
    fn mul(self, rhs: Phasor) -> Phasor {
        (Complex64::from(self) * Complex64::from(rhs)).into()
    }
}

impl Neg for Phasor {
    type Output = Phasor;
    fn neg(self) -> Phasor {
        Phasor::new(-self.re, -self.im)
    }
}

impl fmt::Display for Phasor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}∠{}", self.magnitude(), self.angle())
    }
}

pub fn phasor_mul(a: Phasor, b: Phasor) -> Phasor {
    a * b
}

pub fn phasor_div(a: Phasor, b: Phasor) -> Result<Phasor> {
    a.checked_div(b)
}

pub fn phasor_conj(a: Phasor) -> Phasor {
    a.conj()
}

/// One row of a feeder branch table, in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub branch_id: usize,
    pub sending_node: usize,
    pub receiving_node: usize,
    /// Ohms.
    pub resistance: f64,
    /// Ohms.
    pub reactance: f64,
    /// kW drawn at the receiving node.
    pub load_p: f64,
    /// kVAr drawn at the receiving node.
    pub load_q: f64,
    /// Line rating in kVA.
    pub capacity: Option<f64>,
    pub is_tie: bool,
}

impl BranchRecord {
    /// Checks the record-level invariants.
    pub fn check(&self) -> Result<()> {
        let id = self.branch_id;
        let finite = [self.resistance, self.reactance, self.load_p, self.load_q]
            .iter()
            .chain(self.capacity.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Data(format!("branch {id}: non-finite field")));
        }
        if id == 0 || self.sending_node == 0 || self.receiving_node == 0 {
            return Err(Error::Data(format!(
                "branch {id}: branch and node numbers start at 1"
            )));
        }
        if self.sending_node == self.receiving_node {
            return Err(Error::Data(format!(
                "branch {id}: sending and receiving node are both {}",
                self.sending_node
            )));
        }
        if self.resistance < 0.0 || self.reactance < 0.0 {
            return Err(Error::Data(format!("branch {id}: negative impedance")));
        }
        if let Some(cap) = self.capacity {
            if cap <= 0.0 {
                return Err(Error::Data(format!(
                    "branch {id}: capacity must be positive"
                )));
            }
        }
        if self.is_tie && (self.load_p != 0.0 || self.load_q != 0.0) {
            return Err(Error::Data(format!("branch {id}: tie line carries a load")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerUnitBase {
    /// Line-to-line voltage base, kV.
    pub kv_base: f64,
    /// Three-phase power base, MVA.
    pub mva_base: f64,
}

impl Default for PerUnitBase {
    fn default() -> Self {
        PerUnitBase {
            kv_base: 12.66,
            mva_base: 10.0,
        }
    }
}

impl PerUnitBase {
    pub fn new(kv_base: f64, mva_base: f64) -> Result<Self> {
        if !(kv_base.is_finite() && kv_base > 0.0 && mva_base.is_finite() && mva_base > 0.0) {
            return Err(Error::Data(format!(
                "invalid per-unit base: {kv_base} kV, {mva_base} MVA"
            )));
        }
        Ok(PerUnitBase { kv_base, mva_base })
    }

    /// Impedance base in ohms.
    pub fn z_base(&self) -> f64 {
        self.kv_base * self.kv_base / self.mva_base
    }

    /// Power base in kVA.
    pub fn kva_base(&self) -> f64 {
        self.mva_base * 1000.0
    }
}

/// A branch record converted to per-unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerUnitBranch {
    pub impedance: Phasor,
    /// Complex power drawn at the receiving node.
    pub load: Phasor,
}

pub fn to_per_unit(record: &BranchRecord, base: &PerUnitBase) -> Result<PerUnitBranch> {
    let fields = [
        record.resistance,
        record.reactance,
        record.load_p,
        record.load_q,
    ];
    if fields.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "branch {}: non-finite field",
            record.branch_id
        )));
    }
    let z = Phasor::new(record.resistance, record.reactance).scale(1.0 / base.z_base());
    let load = if record.is_tie {
        Phasor::ZERO
    } else {
        // kW/kVAr -> MW/MVAr -> p.u.
        Phasor::new(record.load_p / 1000.0, record.load_q / 1000.0).scale(1.0 / base.mva_base)
    };
    Ok(PerUnitBranch { impedance: z, load })
}

/// Inverse of [`to_per_unit`]: impedance in ohms and load in kW/kVAr.
pub fn from_per_unit(branch: &PerUnitBranch, base: &PerUnitBase) -> (Phasor, Phasor) {
    (
        branch.impedance.scale(base.z_base()),
        branch.load.scale(base.mva_base * 1000.0),
    )
}

/// A closed branch of a validated network.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    /// Per-unit series impedance.
    pub impedance: Phasor,
    pub capacity: Option<f64>,
}

/// A validated radial feeder in per-unit.
///
/// Nodes are labelled `1..=node_count`. Branches are held in ascending id
/// order and every branch is preceded by the branch feeding its sending node.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub(crate) node_count: usize,
    pub(crate) root: usize,
    pub(crate) branches: Vec<Branch>,
    pub(crate) tie_lines: Vec<BranchRecord>,
    /// node index -> positions in `branches` leaving that node, ascending.
    pub(crate) children: Vec<Vec<usize>>,
    /// node index -> position of the branch entering it.
    pub(crate) parent: Vec<Option<usize>>,
    /// Per-unit complex load at each node.
    pub(crate) node_load: Vec<Phasor>,
    pub(crate) base: PerUnitBase,
}

impl NetworkModel {
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn tie_lines(&self) -> &[BranchRecord] {
        &self.tie_lines
    }

    pub fn base(&self) -> &PerUnitBase {
        &self.base
    }

    /// Positions (into [`branches`](Self::branches)) of the branches leaving `node`.
    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node - 1]
    }

    /// Position of the branch entering `node`; `None` for the root.
    pub fn parent_branch(&self, node: usize) -> Option<usize> {
        self.parent[node - 1]
    }

    pub fn load(&self, node: usize) -> Phasor {
        self.node_load[node - 1]
    }

    pub fn loads(&self) -> &[Phasor] {
        &self.node_load
    }

    pub fn total_load(&self) -> Phasor {
        self.node_load.iter().fold(Phasor::ZERO, |acc, &s| acc + s)
    }
}

/// Working arrays for one sweep iteration. Node arrays are indexed by
/// `node - 1`, branch arrays by branch position.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveState {
    pub node_voltage: Vec<Phasor>,
    pub load_current: Vec<Phasor>,
    pub branch_current: Vec<Phasor>,
    pub prev_voltage_mag: Vec<f64>,
}

impl SolveState {
    /// Flat start: every voltage 1∠0, every current zero.
    pub fn flat(net: &NetworkModel) -> Self {
        let n = net.node_count();
        SolveState {
            node_voltage: vec![Phasor::ONE; n],
            load_current: vec![Phasor::ZERO; n],
            branch_current: vec![Phasor::ZERO; net.branch_count()],
            prev_voltage_mag: vec![1.0; n],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EPS: f64 = 1e-12;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn identity_product() {
        assert_eq!(Phasor::ONE * Phasor::ONE, Phasor::ONE);
    }

    #[test]
    fn angles_add_on_multiplication() {
        let a = Phasor::from_polar(2.0, PI / 2.0);
        let b = Phasor::from_polar(3.0, PI / 2.0);
        let p = phasor_mul(a, b);
        assert!(close(p.re, -6.0, EPS));
        assert!(p.im.abs() < 1e-12);
        assert!(close(p.magnitude(), 6.0, EPS));
        assert!(close(p.angle().abs(), PI, EPS));
    }

    #[test]
    fn hand_checked_division() {
        let q = phasor_div(Phasor::new(1.0, 1.0), Phasor::new(1.0, -1.0)).unwrap();
        assert!(q.re.abs() < EPS);
        assert!(close(q.im, 1.0, EPS));
    }

    #[test]
    fn division_by_zero_is_singular() {
        assert_eq!(
            phasor_div(Phasor::ONE, Phasor::ZERO),
            Err(Error::Singularity)
        );
    }

    #[test]
    fn angle_is_in_half_open_interval() {
        assert_eq!(Phasor::new(-1.0, -0.0).angle(), PI);
        assert_eq!(Phasor::new(-1.0, 0.0).angle(), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!(close(wrap_angle(3.0 * PI), PI, EPS));
    }

    #[test]
    fn per_unit_examples() {
        let base = PerUnitBase::new(12.66, 10.0).unwrap();
        assert!(close(base.z_base(), 12.66 * 12.66 / 10.0, 0.0));
        let rec = BranchRecord {
            branch_id: 5,
            sending_node: 5,
            receiving_node: 6,
            resistance: 0.3660,
            reactance: 0.1864,
            load_p: 100.0,
            load_q: 60.0,
            capacity: Some(1899.0),
            is_tie: false,
        };
        let pu = to_per_unit(&rec, &base).unwrap();
        assert!(close(pu.impedance.re, 0.3660 / 16.027_56, 1e-12));
        assert!(close(pu.impedance.im, 0.1864 / 16.027_56, 1e-12));
        assert!(close(pu.load.re, 0.01, EPS));
        assert!(close(pu.load.im, 0.006, EPS));

        let zero = BranchRecord {
            resistance: 0.0,
            reactance: 0.0,
            ..rec.clone()
        };
        assert_eq!(to_per_unit(&zero, &base).unwrap().impedance, Phasor::ZERO);

        let bad = BranchRecord {
            resistance: f64::NAN,
            ..rec
        };
        match to_per_unit(&bad, &base) {
            Err(Error::Data(msg)) => assert!(msg.contains("branch 5")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tie_converts_impedance_only() {
        let rec = BranchRecord {
            branch_id: 69,
            sending_node: 11,
            receiving_node: 43,
            resistance: 0.5,
            reactance: 0.5,
            load_p: 0.0,
            load_q: 0.0,
            capacity: Some(566.0),
            is_tie: true,
        };
        let pu = to_per_unit(&rec, &PerUnitBase::default()).unwrap();
        assert_eq!(pu.load, Phasor::ZERO);
        assert!(pu.impedance.re > 0.0);
    }

    #[test]
    fn invalid_base_rejected() {
        assert!(PerUnitBase::new(0.0, 10.0).is_err());
        assert!(PerUnitBase::new(12.66, -1.0).is_err());
        assert!(PerUnitBase::new(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn record_checks() {
        let ok = BranchRecord {
            branch_id: 1,
            sending_node: 1,
            receiving_node: 2,
            resistance: 0.1,
            reactance: 0.1,
            load_p: 1.0,
            load_q: 1.0,
            capacity: None,
            is_tie: false,
        };
        assert!(ok.check().is_ok());
        assert!(BranchRecord {
            receiving_node: 1,
            ..ok.clone()
        }
        .check()
        .is_err());
        assert!(BranchRecord {
            reactance: -0.1,
            ..ok.clone()
        }
        .check()
        .is_err());
        assert!(BranchRecord {
            capacity: Some(0.0),
            ..ok.clone()
        }
        .check()
        .is_err());
        assert!(BranchRecord { is_tie: true, ..ok }.check().is_err());
    }

    fn phasor() -> impl Strategy<Value = Phasor> {
        (1e-3f64..1e3, -PI..PI).prop_map(|(m, a)| Phasor::from_polar(m, a))
    }

    proptest! {
        #[test]
        fn product_magnitudes_multiply(a in phasor(), b in phasor()) {
            let p = a * b;
            prop_assert!(close(p.magnitude(), a.magnitude() * b.magnitude(), EPS));
            let da = wrap_angle(p.angle() - wrap_angle(a.angle() + b.angle()));
            prop_assert!(da.abs() <= 1e-12);
        }

        #[test]
        fn double_conjugate_is_identity(a in phasor()) {
            prop_assert_eq!(a.conj().conj(), a);
        }

        #[test]
        fn polar_round_trip(m in 1e-3f64..1e3, ang in -3.0f64..3.0) {
            let p = Phasor::from_polar(m, ang);
            prop_assert!(close(p.magnitude(), m, EPS));
            prop_assert!((p.angle() - ang).abs() <= 1e-12);
        }

        #[test]
        fn per_unit_round_trip(
            r in 0.0f64..10.0, x in 0.0f64..10.0,
            p in 0.0f64..5000.0, q in 0.0f64..5000.0,
            kv in 0.4f64..69.0, mva in 0.1f64..100.0,
        ) {
            let base = PerUnitBase::new(kv, mva).unwrap();
            let rec = BranchRecord {
                branch_id: 1, sending_node: 1, receiving_node: 2,
                resistance: r, reactance: x, load_p: p, load_q: q,
                capacity: None, is_tie: false,
            };
            let pu = to_per_unit(&rec, &base).unwrap();
            let (z, s) = from_per_unit(&pu, &base);
            prop_assert!(close(z.re, r, EPS) && close(z.im, x, EPS));
            prop_assert!(close(s.re, p, EPS) && close(s.im, q, EPS));
        }
    }
}
