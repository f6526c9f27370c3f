use super::PdpState;
use crate::instances::{DistanceMatrix, Instance};

/// Waiting times and slacks along `Δ = [τ_v, γ_1, .., γ_w, end depot]`.
///
/// `wait(i, j)` is the idle time accumulated strictly after position `i` up to
/// and including position `j` of `Δ`, so a delay `δ` introduced at position
/// `i` reaches position `j` as `max(0, δ - wait(i, j))`. `slack(i)` is the
/// largest such delay that keeps every window from `i` onwards satisfied.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SlackTable {
    pub delta: Vec<usize>,
    /// Earliest service time at each position of `delta`.
    pub t: Vec<f64>,
    /// Row-major `m x m`; entries below the diagonal are zero and unused.
    pub wait: Vec<f64>,
    pub slack: Vec<f64>,
}

impl SlackTable {
    /// Number of positions, `w + 2`.
    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    #[inline]
    pub fn w(&self, i: usize, j: usize) -> f64 {
        self.wait[i * self.delta.len() + j]
    }

    #[inline]
    pub fn f(&self, i: usize) -> f64 {
        self.slack[i]
    }
}

pub(crate) fn precompute_counted(
    state: &PdpState,
    inst: &Instance,
    dist: &DistanceMatrix,
    ops: &mut u64,
) -> SlackTable {
    if state.done || state.tau.is_empty() {
        return SlackTable::default();
    }
    let end = inst.end_depot();
    let mut delta = Vec::with_capacity(state.gamma.len() + 2);
    delta.push(*state.tau.last().unwrap());
    delta.extend_from_slice(&state.gamma);
    delta.push(end);
    let m = delta.len();
    let t: Vec<f64> = delta.iter().map(|&i| state.est[i]).collect();

    // Idle time on arrival at each position.
    let mut idle = vec![0.0; m];
    for p in 1..m {
        let (a, b) = (delta[p - 1], delta[p]);
        idle[p] = t[p] - (t[p - 1] + inst.nodes[a].service + dist.get(a, b));
        *ops += 1;
    }
    let mut wait = vec![0.0; m * m];
    for i in 0..m {
        for j in (i + 1)..m {
            wait[i * m + j] = wait[i * m + j - 1] + idle[j];
            *ops += 1;
        }
    }
    let mut slack = vec![0.0; m];
    for i in 0..m {
        let mut best = f64::INFINITY;
        for j in i..m {
            best = best.min(wait[i * m + j] + (inst.nodes[delta[j]].tw_close - t[j]));
            *ops += 1;
        }
        slack[i] = best;
    }
    SlackTable { delta, t, wait, slack }
}

/// Rebuilds the waiting-time and slack table for the current `τ_v` and `γ`.
/// Runs in `O(w²)` for `w` pending deliveries.
pub fn precompute(state: &PdpState, inst: &Instance, dist: &DistanceMatrix) -> SlackTable {
    precompute_counted(state, inst, dist, &mut 0)
}
