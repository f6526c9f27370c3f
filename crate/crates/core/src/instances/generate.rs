use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Instance, InstanceError, NodeRec, PdpInstance};

/// Parameters of the random instance generators. All times are in the same
/// scaled units as the unit-square coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GenProfile {
    /// Vehicle capacity; `None` picks a size-dependent default.
    pub capacity: Option<i64>,
    /// Depot window is `[0, horizon]`.
    pub horizon: f64,
    /// Bounds of the uniform width of a tight customer window.
    pub tw_width: (f64, f64),
    pub service: f64,
    /// Probability that a customer receives a tight window rather than the full horizon.
    pub p_tw: f64,
    /// Demands are drawn uniformly from `1..=max_demand`.
    pub max_demand: i64,
    pdp: bool,
}

impl Default for GenProfile {
    fn default() -> Self {
        GenProfile::cvrptw()
    }
}

impl GenProfile {
    pub fn cvrptw() -> Self {
        GenProfile {
            capacity: None,
            horizon: 4.6,
            tw_width: (0.2, 0.4),
            service: 0.02,
            p_tw: 0.5,
            max_demand: 9,
            pdp: false,
        }
    }

    pub fn pdptw() -> Self {
        GenProfile { max_demand: 5, pdp: true, ..GenProfile::cvrptw() }
    }

    /// Capacity used for an instance with `n` customers (or requests).
    pub fn capacity_for(&self, n: usize) -> i64 {
        if let Some(c) = self.capacity {
            return c;
        }
        if self.pdp {
            return 15;
        }
        match n {
            0..=10 => 20,
            11..=20 => 30,
            21..=50 => 40,
            _ => 50,
        }
    }

    fn check(&self, n: usize) -> Result<i64, InstanceError> {
        let cap = self.capacity_for(n);
        if self.max_demand < 1 || self.max_demand > cap {
            return Err(InstanceError::Generation(format!(
                "demands up to {} cannot fit capacity {cap}",
                self.max_demand
            )));
        }
        if !(self.tw_width.0 >= 0.0 && self.tw_width.0 <= self.tw_width.1) {
            return Err(InstanceError::Generation("window width range is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.p_tw) || self.service < 0.0 || self.horizon <= 0.0 {
            return Err(InstanceError::Generation("profile values out of range".into()));
        }
        Ok(cap)
    }

    /// A tight window of random width centered uniformly in `[lo, hi]`, clipped
    /// to the horizon, or the whole horizon.
    fn window(&self, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> (f64, f64) {
        if rng.gen::<f64>() >= self.p_tw {
            return (0.0, self.horizon);
        }
        let width = rng.gen_range(self.tw_width.0..=self.tw_width.1);
        let center = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        ((center - width / 2.0).max(0.0), (center + width / 2.0).min(self.horizon))
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Random C-VRP-TW instance: uniform coordinates in the unit square, integer
/// demands, and a mix of tight and horizon-wide windows placed so that every
/// customer can be served from the depot and the vehicle can return in time.
pub fn generate_cvrptw(seed: u64, n: usize, profile: &GenProfile) -> Result<Instance, InstanceError> {
    if n == 0 {
        return Err(InstanceError::Generation("need at least one customer".into()));
    }
    let cap = profile.check(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depot_xy = (rng.gen::<f64>(), rng.gen::<f64>());
    let depot = NodeRec::new(0, depot_xy.0, depot_xy.1, 0, (0.0, profile.horizon), 0.0);
    let mut customers = Vec::with_capacity(n);
    for k in 1..=n {
        let xy = (rng.gen::<f64>(), rng.gen::<f64>());
        let demand = rng.gen_range(1..=profile.max_demand);
        let t0 = dist(depot_xy, xy);
        let lo = t0;
        let hi = profile.horizon - profile.service - t0;
        if lo > hi {
            return Err(InstanceError::Generation(format!(
                "customer {k} cannot be served and returned within horizon {}",
                profile.horizon
            )));
        }
        let tw = profile.window(&mut rng, lo, hi);
        customers.push(NodeRec::new(k, xy.0, xy.1, demand, tw, profile.service));
    }
    Ok(Instance::new(format!("cvrptw-n{n}-s{seed}"), depot, customers, cap))
}

/// Random C-PDP-TW instance with `n_requests` pickup/delivery pairs. The
/// pickup window is drawn first; the delivery window is then placed so that
/// the single-request route depot → pickup → delivery → depot is feasible when
/// served at the earliest.
pub fn generate_pdptw(seed: u64, n_requests: usize, profile: &GenProfile) -> Result<PdpInstance, InstanceError> {
    if n_requests == 0 {
        return Err(InstanceError::Generation("need at least one request".into()));
    }
    let cap = profile.check(n_requests)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depot_xy = (rng.gen::<f64>(), rng.gen::<f64>());
    let depot = NodeRec::new(0, depot_xy.0, depot_xy.1, 0, (0.0, profile.horizon), 0.0);
    let s = profile.service;
    let mut pickups = Vec::with_capacity(n_requests);
    let mut deliveries = Vec::with_capacity(n_requests);
    for k in 1..=n_requests {
        let p = (rng.gen::<f64>(), rng.gen::<f64>());
        let d = (rng.gen::<f64>(), rng.gen::<f64>());
        let demand = rng.gen_range(1..=profile.max_demand);
        let t_dp = dist(depot_xy, p);
        let t_pd = dist(p, d);
        let t_dd = dist(d, depot_xy);
        let p_hi = profile.horizon - s - t_pd - s - t_dd;
        if t_dp > p_hi {
            return Err(InstanceError::Generation(format!(
                "request {k} cannot be served within horizon {}",
                profile.horizon
            )));
        }
        let ptw = profile.window(&mut rng, t_dp, p_hi);
        let earliest_delivery = t_dp.max(ptw.0) + s + t_pd;
        let d_hi = profile.horizon - s - t_dd;
        let dtw = profile.window(&mut rng, earliest_delivery, d_hi);
        pickups.push(NodeRec::new(k, p.0, p.1, demand, ptw, s));
        deliveries.push(NodeRec::new(k + n_requests, d.0, d.1, -demand, dtw, s));
    }
    PdpInstance::new(format!("pdptw-n{n_requests}-s{seed}"), depot, pickups, deliveries, cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{validate_instance, validate_pdp_instance};

    #[test]
    fn deterministic_in_seed() {
        let p = GenProfile::default();
        assert_eq!(generate_cvrptw(7, 20, &p).unwrap(), generate_cvrptw(7, 20, &p).unwrap());
        assert_ne!(generate_cvrptw(7, 20, &p).unwrap().nodes, generate_cvrptw(8, 20, &p).unwrap().nodes);
        let q = GenProfile::pdptw();
        assert_eq!(generate_pdptw(7, 5, &q).unwrap(), generate_pdptw(7, 5, &q).unwrap());
    }

    #[test]
    fn generated_instances_validate() {
        let p = GenProfile::default();
        let q = GenProfile::pdptw();
        for seed in 0..500 {
            let inst = generate_cvrptw(seed, 1 + (seed as usize % 30), &p).unwrap();
            assert!(validate_instance(&inst).is_empty(), "seed {seed}");
            let pdp = generate_pdptw(seed, 1 + (seed as usize % 12), &q).unwrap();
            assert!(validate_pdp_instance(&pdp).is_empty(), "seed {seed}");
        }
    }

    #[test]
    fn features_stay_in_unit_range() {
        let inst = generate_cvrptw(3, 50, &GenProfile::default()).unwrap();
        assert_eq!(inst.capacity, 40);
        for node in &inst.nodes {
            assert!((0.0..=1.0).contains(&node.x) && (0.0..=1.0).contains(&node.y));
            assert!(node.tw_open >= 0.0 && node.tw_close <= 4.6);
        }
        for c in inst.customers() {
            assert!((1..=9).contains(&inst.nodes[c].demand));
            assert_eq!(inst.nodes[c].service, 0.02);
        }
    }

    #[test]
    fn impossible_profiles_error() {
        let short = GenProfile { horizon: 0.5, ..GenProfile::default() };
        assert!(matches!(generate_cvrptw(1, 50, &short), Err(InstanceError::Generation(_))));
        let heavy = GenProfile { capacity: Some(3), ..GenProfile::default() };
        assert!(matches!(generate_cvrptw(1, 5, &heavy), Err(InstanceError::Generation(_))));
        assert!(generate_cvrptw(1, 0, &GenProfile::default()).is_err());
        assert!(generate_pdptw(1, 0, &GenProfile::pdptw()).is_err());
    }

    #[test]
    fn single_customer_is_reachable() {
        for seed in 0..50 {
            let inst = generate_cvrptw(seed, 1, &GenProfile::default()).unwrap();
            let c = inst.nodes[1];
            let t0 = (c.x - inst.nodes[0].x).hypot(c.y - inst.nodes[0].y);
            assert!(t0.max(c.tw_open) <= c.tw_close);
            assert!(t0.max(c.tw_open) + c.service + t0 <= inst.horizon().1);
        }
    }
}
