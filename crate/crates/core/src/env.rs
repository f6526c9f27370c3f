//! A common interface over the two construction environments, used by the
//! policy, the baseline heuristics and training.

use crate::cvrptw::{CvrptwEnv, EnvError, RouteState};
use crate::instances::{DistanceMatrix, Instance, PdpInstance};
use crate::pdptw::{PdpState, PdptwEnv};
use crate::solution::{solution_cost, Objective, Solution};

/// Dynamic quantities fed to the decoder context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Context {
    pub last: usize,
    /// Remaining capacity as a fraction of the vehicle capacity.
    pub residual: f64,
    /// Departure time at `last` divided by the depot due date.
    pub clock: f64,
}

pub trait RoutingEnv: Sync {
    type State: Clone + Send;

    fn instance(&self) -> &Instance;
    fn dist(&self) -> &DistanceMatrix;
    /// Pairing information when the problem has pickups and deliveries.
    fn pdp(&self) -> Option<&PdpInstance> {
        None
    }
    fn initial_state(&self) -> Self::State;
    fn mask(&self, s: &Self::State) -> Vec<bool>;
    fn step(&self, s: &Self::State, action: usize) -> Result<Self::State, EnvError>;
    fn is_terminal(&self, s: &Self::State) -> bool;
    fn context(&self, s: &Self::State) -> Context;
    fn solution(&self, s: &Self::State) -> Solution;
    /// Increase of the planned route length if `action` is taken next.
    fn insertion_cost(&self, s: &Self::State, action: usize) -> f64;

    fn n_nodes(&self) -> usize {
        self.instance().n_nodes()
    }

    /// Cost of a complete solution; panics if a customer is missing.
    fn solution_cost(&self, sol: &Solution, objective: Objective) -> f64 {
        match self.pdp() {
            Some(p) => solution_cost(sol, p, self.dist(), objective),
            None => solution_cost(sol, self.instance(), self.dist(), objective),
        }
        .expect("cost of an incomplete solution")
    }

    /// Cost of the solution held by a terminal state.
    fn cost(&self, s: &Self::State, objective: Objective) -> f64 {
        self.solution_cost(&self.solution(s), objective)
    }
}

fn residual(inst: &Instance, load: i64) -> f64 {
    (inst.capacity - load) as f64 / inst.capacity.max(1) as f64
}

fn clock_frac(inst: &Instance, t: f64) -> f64 {
    let due = inst.horizon().1;
    if due > 0.0 {
        t / due
    } else {
        0.0
    }
}

impl RoutingEnv for CvrptwEnv<'_> {
    type State = RouteState;

    fn instance(&self) -> &Instance {
        self.inst
    }

    fn dist(&self) -> &DistanceMatrix {
        self.dist
    }

    fn initial_state(&self) -> RouteState {
        CvrptwEnv::initial_state(self)
    }

    fn mask(&self, s: &RouteState) -> Vec<bool> {
        self.feasible_mask(s)
    }

    fn step(&self, s: &RouteState, action: usize) -> Result<RouteState, EnvError> {
        CvrptwEnv::step(self, s, action).map(|o| o.next_state)
    }

    fn is_terminal(&self, s: &RouteState) -> bool {
        s.is_terminal()
    }

    fn context(&self, s: &RouteState) -> Context {
        Context { last: s.current, residual: residual(self.inst, s.load_used), clock: clock_frac(self.inst, s.clock) }
    }

    fn solution(&self, s: &RouteState) -> Solution {
        CvrptwEnv::solution(self, s)
    }

    fn insertion_cost(&self, s: &RouteState, action: usize) -> f64 {
        let end = self.inst.end_depot();
        if action == end {
            return self.dist.get(s.current, end);
        }
        self.dist.get(s.current, action) + self.dist.get(action, end) - self.dist.get(s.current, end)
    }
}

impl RoutingEnv for PdptwEnv<'_> {
    type State = PdpState;

    fn instance(&self) -> &Instance {
        self.inst
    }

    fn dist(&self) -> &DistanceMatrix {
        self.dist
    }

    fn pdp(&self) -> Option<&PdpInstance> {
        Some(self.inst)
    }

    fn initial_state(&self) -> PdpState {
        PdptwEnv::initial_state(self)
    }

    fn mask(&self, s: &PdpState) -> Vec<bool> {
        self.feasible_mask(s)
    }

    fn step(&self, s: &PdpState, action: usize) -> Result<PdpState, EnvError> {
        PdptwEnv::step(self, s, action)
    }

    fn is_terminal(&self, s: &PdpState) -> bool {
        s.is_terminal()
    }

    fn context(&self, s: &PdpState) -> Context {
        let last = s.current();
        let dep = s.est[last] + self.inst.nodes[last].service;
        Context { last, residual: residual(self.inst, s.load_used), clock: clock_frac(self.inst, dep) }
    }

    fn solution(&self, s: &PdpState) -> Solution {
        PdptwEnv::solution(self, s)
    }

    fn insertion_cost(&self, s: &PdpState, action: usize) -> f64 {
        let d = |i, j| self.dist.get(i, j);
        let cur = s.current();
        let end = self.inst.end_depot();
        let first = s.gamma.first().copied().unwrap_or(end);
        if action == end {
            return d(cur, end);
        }
        if self.inst.is_pickup(action) {
            let v = self.check_insertion(s, action);
            return d(cur, action) + d(action, first) - d(cur, first) + v.added_cost;
        }
        match s.gamma.iter().position(|&g| g == action) {
            Some(0) | None => 0.0,
            Some(k) => {
                let before = s.gamma[k - 1];
                let after = s.gamma.get(k + 1).copied().unwrap_or(end);
                d(cur, action) + d(action, first) - d(cur, first) + d(before, after)
                    - d(before, action)
                    - d(action, after)
            }
        }
    }
}
