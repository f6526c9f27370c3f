use std::fmt;

use super::{travel_matrix, Instance, PdpInstance};
use crate::TIME_EPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    InvertedWindow,
    NegativeService,
    /// Depot copies must carry zero demand and zero service time.
    DepotLoad,
    /// Start and end depot differ in position or window.
    DepotMismatch,
    DemandExceedsCapacity,
    /// Customer window closes before the earliest possible arrival from the depot.
    Unreachable,
    /// Depot due date `b_0` is below the latest at-earliest return over all customers.
    DepotDueTooEarly,
    /// Depot ready time `a_0` exceeds `min_i (b_i - t_0i)`.
    DepotReadyTooLate,
    PickupDemand,
    PairDemand,
    /// Single-request route 0 -> pickup -> delivery -> end is not feasible.
    PairInfeasible,
}

/// One violated invariant, naming the node it concerns.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceViolation {
    pub node: usize,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for InstanceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}: {:?}: {}", self.node, self.kind, self.detail)
    }
}

fn push(out: &mut Vec<InstanceViolation>, node: usize, kind: ViolationKind, detail: String) {
    out.push(InstanceViolation { node, kind, detail });
}

fn structural(inst: &Instance, out: &mut Vec<InstanceViolation>) {
    for (i, n) in inst.nodes.iter().enumerate() {
        if n.tw_open > n.tw_close {
            push(out, i, ViolationKind::InvertedWindow, format!("[{}, {}]", n.tw_open, n.tw_close));
        }
        if n.service < 0.0 {
            push(out, i, ViolationKind::NegativeService, format!("{}", n.service));
        }
        if n.demand.abs() > inst.capacity {
            push(out, i, ViolationKind::DemandExceedsCapacity, format!("|{}| > {}", n.demand, inst.capacity));
        }
    }
    let (d0, de) = (&inst.nodes[0], &inst.nodes[inst.end_depot()]);
    for (i, d) in [(0, d0), (inst.end_depot(), de)] {
        if d.demand != 0 || d.service != 0.0 {
            push(out, i, ViolationKind::DepotLoad, format!("demand {} service {}", d.demand, d.service));
        }
    }
    if (d0.x, d0.y, d0.tw_open, d0.tw_close) != (de.x, de.y, de.tw_open, de.tw_close) {
        push(out, inst.end_depot(), ViolationKind::DepotMismatch, "end depot differs from start depot".into());
    }
}

/// Checks the VRPTW instance invariants, including the two depot-window
/// bounds that make every single-customer route feasible.
pub fn validate_instance(inst: &Instance) -> Vec<InstanceViolation> {
    let mut out = Vec::new();
    structural(inst, &mut out);
    let d = travel_matrix(inst);
    let (a0, b0) = inst.horizon();
    let end = inst.end_depot();
    let mut need_b0 = f64::NEG_INFINITY;
    let mut worst_b0 = 0;
    let mut allow_a0 = f64::INFINITY;
    let mut worst_a0 = 0;
    for i in inst.customers() {
        let n = &inst.nodes[i];
        let start = (a0 + d.get(0, i)).max(n.tw_open);
        if start > n.tw_close + TIME_EPS {
            push(&mut out, i, ViolationKind::Unreachable, format!("earliest start {start} > due {}", n.tw_close));
        }
        let ret = start + n.service + d.get(i, end);
        if ret > need_b0 {
            need_b0 = ret;
            worst_b0 = i;
        }
        let latest = n.tw_close - d.get(0, i);
        if latest < allow_a0 {
            allow_a0 = latest;
            worst_a0 = i;
        }
    }
    if need_b0 > b0 + TIME_EPS {
        push(
            &mut out,
            0,
            ViolationKind::DepotDueTooEarly,
            format!("depot due date {b0} < {need_b0} required by customer {worst_b0}"),
        );
    }
    if a0 > allow_a0 + TIME_EPS {
        push(
            &mut out,
            0,
            ViolationKind::DepotReadyTooLate,
            format!("depot ready time {a0} > {allow_a0} allowed by customer {worst_a0}"),
        );
    }
    out
}

/// Checks the PDPTW invariants: paired demands and feasibility of every
/// single-request route served at the earliest.
pub fn validate_pdp_instance(inst: &PdpInstance) -> Vec<InstanceViolation> {
    let mut out = Vec::new();
    structural(inst, &mut out);
    let d = travel_matrix(inst);
    let (a0, b0) = inst.horizon();
    let end = inst.end_depot();
    for p in 1..=inst.n_requests() {
        let q = inst.delivery_of(p);
        let (np, nq) = (&inst.nodes[p], &inst.nodes[q]);
        if np.demand <= 0 {
            push(&mut out, p, ViolationKind::PickupDemand, format!("pickup demand {}", np.demand));
        }
        if nq.demand != -np.demand {
            push(&mut out, q, ViolationKind::PairDemand, format!("{} vs pickup {}", nq.demand, np.demand));
        }
        let tp = (a0 + d.get(0, p)).max(np.tw_open);
        let tq = (tp + np.service + d.get(p, q)).max(nq.tw_open);
        let back = tq + nq.service + d.get(q, end);
        if tp > np.tw_close + TIME_EPS {
            push(&mut out, p, ViolationKind::Unreachable, format!("earliest start {tp} > due {}", np.tw_close));
        } else if tq > nq.tw_close + TIME_EPS {
            push(&mut out, q, ViolationKind::PairInfeasible, format!("delivery start {tq} > due {}", nq.tw_close));
        } else if back > b0 + TIME_EPS {
            push(&mut out, p, ViolationKind::PairInfeasible, format!("return {back} > depot due {b0}"));
        }
    }
    out
}
