//! Sequential-construction environment for C-VRP and C-VRP-TW.
//!
//! A state is one partial solution: closed routes plus the open route, the
//! departure clock at the current node and the load already on board.
//! Feasibility of a customer is a single arrival-time comparison plus a
//! depot-return bound.

use crate::instances::{DistanceMatrix, Instance};
use crate::solution::Solution;
use crate::TIME_EPS;

/// Hard windows are masked; soft windows allow late service and report it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TwMode {
    #[default]
    Hard,
    Soft,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EnvError {
    #[error("action {action} is not feasible in the current state")]
    Infeasible { action: usize },
    #[error("state is terminal")]
    Terminal,
    #[error("{0}")]
    Guard(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteState {
    pub visited: Vec<bool>,
    pub routes: Vec<Vec<usize>>,
    /// Customers of the open route, in visiting order.
    pub active_route: Vec<usize>,
    pub current: usize,
    /// Departure time from `current`: service start plus service time.
    pub clock: f64,
    pub load_used: i64,
    pub vehicles_used: usize,
    pub n_visited: usize,
    /// Accumulated lateness; always zero under hard windows.
    pub lateness: f64,
}

impl RouteState {
    pub fn is_terminal(&self) -> bool {
        self.n_visited == self.visited.len() - 2 && self.current == 0 && self.active_route.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: RouteState,
    pub added_distance: f64,
    pub lateness: f64,
}

/// The environment borrows its instance and travel-time matrix.
#[derive(Debug, Clone, Copy)]
pub struct CvrptwEnv<'a> {
    pub inst: &'a Instance,
    pub dist: &'a DistanceMatrix,
    pub mode: TwMode,
}

impl<'a> CvrptwEnv<'a> {
    pub fn new(inst: &'a Instance, dist: &'a DistanceMatrix, mode: TwMode) -> Self {
        CvrptwEnv { inst, dist, mode }
    }

    pub fn initial_state(&self) -> RouteState {
        RouteState {
            visited: vec![false; self.inst.n_nodes()],
            routes: Vec::new(),
            active_route: Vec::new(),
            current: 0,
            clock: self.inst.horizon().0,
            load_used: 0,
            vehicles_used: 1,
            n_visited: 0,
            lateness: 0.0,
        }
    }

    fn customer_ok(&self, s: &RouteState, i: usize) -> bool {
        let node = &self.inst.nodes[i];
        if s.visited[i] || s.load_used + node.demand > self.inst.capacity {
            return false;
        }
        let start = (s.clock + self.dist.get(s.current, i)).max(node.tw_open);
        if self.mode == TwMode::Hard && start > node.tw_close + TIME_EPS {
            return false;
        }
        start + node.service + self.dist.get(i, self.inst.end_depot()) <= self.inst.horizon().1 + TIME_EPS
    }

    /// Feasible next nodes, indexed over all nodes. The start depot is never
    /// feasible; the end depot is feasible iff the open route is nonempty.
    pub fn feasible_mask(&self, s: &RouteState) -> Vec<bool> {
        let n = self.inst.n_nodes();
        let mut mask = vec![false; n];
        if s.is_terminal() {
            return mask;
        }
        for i in self.inst.customers() {
            mask[i] = self.customer_ok(s, i);
        }
        mask[n - 1] = !s.active_route.is_empty();
        mask
    }

    pub fn step(&self, s: &RouteState, action: usize) -> Result<StepOutcome, EnvError> {
        if s.is_terminal() {
            return Err(EnvError::Terminal);
        }
        let end = self.inst.end_depot();
        let mut next = s.clone();
        if action == end {
            if s.active_route.is_empty() {
                return Err(EnvError::Infeasible { action });
            }
            let added = self.dist.get(s.current, end);
            let mut route = Vec::with_capacity(s.active_route.len() + 2);
            route.push(0);
            route.extend_from_slice(&s.active_route);
            route.push(end);
            next.routes.push(route);
            next.active_route.clear();
            next.current = 0;
            next.clock = self.inst.horizon().0;
            next.load_used = 0;
            if next.n_visited < self.inst.n_customers() {
                next.vehicles_used += 1;
            }
            return Ok(StepOutcome { next_state: next, added_distance: added, lateness: 0.0 });
        }
        if action == 0 || action >= end || !self.customer_ok(s, action) {
            return Err(EnvError::Infeasible { action });
        }
        let node = &self.inst.nodes[action];
        let added = self.dist.get(s.current, action);
        let start = (s.clock + added).max(node.tw_open);
        let lateness = (start - node.tw_close).max(0.0);
        next.visited[action] = true;
        next.n_visited += 1;
        next.active_route.push(action);
        next.current = action;
        next.clock = start + node.service;
        next.load_used += node.demand;
        next.lateness += lateness;
        Ok(StepOutcome { next_state: next, added_distance: added, lateness })
    }

    /// Converts a terminal state into a solution.
    pub fn solution(&self, s: &RouteState) -> Solution {
        Solution { routes: s.routes.clone() }
    }
}
