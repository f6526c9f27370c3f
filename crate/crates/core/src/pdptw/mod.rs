//! Construction environment for the capacitated pickup-and-delivery problem
//! with time windows.
//!
//! The state keeps the constructed route `τ` (append-only) next to a
//! prospective delivery sequence `γ`: the deliveries of requests already
//! picked up, in the order they are planned to be served. After every step
//! the earliest service times along `[τ_v, γ.., depot]` are refreshed and the
//! waiting-time/slack table is rebuilt, so that testing a pickup costs
//! `O(|γ|)` instead of a search over delivery orders.

mod exact;
mod insertion;
mod slack;

pub use exact::exact_feasible;
pub(crate) use insertion::check_insertion_counted;
pub use insertion::{can_promote, check_insertion, verdict_csv_row, InsertionVerdict, VERDICT_CSV_HEADER};
pub(crate) use slack::precompute_counted;
pub use slack::{precompute, SlackTable};

use crate::cvrptw::EnvError;
use crate::instances::{DistanceMatrix, PdpInstance};
use crate::solution::Solution;

#[derive(Debug, Clone, PartialEq)]
pub struct PdpState {
    /// Open route, starting with depot `0`; empty once the rollout is done.
    pub tau: Vec<usize>,
    /// Pending deliveries in planned order.
    pub gamma: Vec<usize>,
    /// `unvisited[i]` is true for pickups not yet served.
    pub unvisited: Vec<bool>,
    pub n_unvisited: usize,
    /// Earliest service time per node, valid for nodes of `τ`, `γ` and the end depot.
    pub est: Vec<f64>,
    pub load_used: i64,
    pub routes: Vec<Vec<usize>>,
    pub vehicles_used: usize,
    pub done: bool,
    pub table: SlackTable,
}

impl PdpState {
    pub fn current(&self) -> usize {
        self.tau.last().copied().unwrap_or(0)
    }

    pub fn is_terminal(&self) -> bool {
        self.done
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PdptwEnv<'a> {
    pub inst: &'a PdpInstance,
    pub dist: &'a DistanceMatrix,
}

impl<'a> PdptwEnv<'a> {
    pub fn new(inst: &'a PdpInstance, dist: &'a DistanceMatrix) -> Self {
        PdptwEnv { inst, dist }
    }

    pub fn initial_state(&self) -> PdpState {
        let n = self.inst.n_nodes();
        let mut unvisited = vec![false; n];
        for p in 1..=self.inst.n_requests() {
            unvisited[p] = true;
        }
        let mut s = PdpState {
            tau: vec![0],
            gamma: Vec::new(),
            unvisited,
            n_unvisited: self.inst.n_requests(),
            est: vec![0.0; n],
            load_used: 0,
            routes: Vec::new(),
            vehicles_used: 1,
            done: self.inst.n_requests() == 0,
            table: SlackTable::default(),
        };
        if s.done {
            s.tau.clear();
        } else {
            s.est[0] = self.inst.horizon().0;
            self.refresh(&mut s);
        }
        s
    }

    /// Recomputes at-earliest times along `γ` and the end depot, then the table.
    fn refresh(&self, s: &mut PdpState) {
        let nodes = &self.inst.nodes;
        let mut prev = s.current();
        let mut dep = s.est[prev] + nodes[prev].service;
        for &g in s.gamma.iter().chain(std::iter::once(&self.inst.end_depot())) {
            let t = (dep + self.dist.get(prev, g)).max(nodes[g].tw_open);
            s.est[g] = t;
            dep = t + nodes[g].service;
            prev = g;
        }
        s.table = precompute(s, self.inst, self.dist);
    }

    pub fn precompute(&self, s: &PdpState) -> SlackTable {
        precompute(s, self.inst, self.dist)
    }

    pub fn check_insertion(&self, s: &PdpState, u: usize) -> InsertionVerdict {
        check_insertion(s, &s.table, u, self.inst, self.dist)
    }

    pub fn exact_feasible(&self, s: &PdpState, u: usize) -> Result<bool, EnvError> {
        exact_feasible(s, u, self.inst, self.dist)
    }

    /// Feasible next nodes as a mask over all node indices.
    pub fn feasible_mask(&self, s: &PdpState) -> Vec<bool> {
        let mut ops = 0;
        self.feasible_mask_counted(s, &mut ops)
    }

    pub(crate) fn feasible_mask_counted(&self, s: &PdpState, ops: &mut u64) -> Vec<bool> {
        let mut mask = vec![false; self.inst.n_nodes()];
        if s.done {
            return mask;
        }
        for u in 1..=self.inst.n_requests() {
            if s.unvisited[u] {
                mask[u] = insertion::check_insertion_counted(s, &s.table, u, self.inst, self.dist, ops).is_feasible();
            }
        }
        for k in 0..s.gamma.len() {
            *ops += k as u64 + 1;
            mask[s.gamma[k]] = can_promote(&s.table, k, self.inst, self.dist);
        }
        mask[self.inst.end_depot()] = s.gamma.is_empty() && s.tau.len() > 1;
        mask
    }

    pub fn feasible_actions(&self, s: &PdpState) -> Vec<usize> {
        self.feasible_mask(s).iter().enumerate().filter(|(_, &ok)| ok).map(|(i, _)| i).collect()
    }

    pub fn step(&self, s: &PdpState, action: usize) -> Result<PdpState, EnvError> {
        if s.done {
            return Err(EnvError::Terminal);
        }
        let inst = self.inst;
        let nodes = &inst.nodes;
        let end = inst.end_depot();
        let mut next = s.clone();
        if action == end {
            if !s.gamma.is_empty() || s.tau.len() < 2 {
                return Err(EnvError::Infeasible { action });
            }
            let mut route = std::mem::take(&mut next.tau);
            route.push(end);
            next.routes.push(route);
            next.load_used = 0;
            if next.n_unvisited == 0 {
                next.done = true;
                next.table = SlackTable::default();
                return Ok(next);
            }
            next.tau.push(0);
            next.est[0] = inst.horizon().0;
            next.vehicles_used += 1;
        } else if inst.is_pickup(action) {
            let verdict = self.check_insertion(s, action);
            let Some(x) = verdict.best_position else {
                return Err(EnvError::Infeasible { action });
            };
            next.gamma.insert(x, inst.delivery_of(action));
            next.tau.push(action);
            next.est[action] = verdict.pickup_start;
            next.unvisited[action] = false;
            next.n_unvisited -= 1;
            next.load_used += nodes[action].demand;
        } else if let Some(k) = s.gamma.iter().position(|&g| g == action) {
            if !can_promote(&s.table, k, inst, self.dist) {
                return Err(EnvError::Infeasible { action });
            }
            let cur = s.current();
            let dep = s.est[cur] + nodes[cur].service;
            next.gamma.remove(k);
            next.tau.push(action);
            next.est[action] = (dep + self.dist.get(cur, action)).max(nodes[action].tw_open);
            next.load_used += nodes[action].demand;
        } else {
            return Err(EnvError::Infeasible { action });
        }
        self.refresh(&mut next);
        Ok(next)
    }

    pub fn solution(&self, s: &PdpState) -> Solution {
        Solution { routes: s.routes.clone() }
    }
}
