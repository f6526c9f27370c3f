//! Problem instances: node records, the VRPTW and PDPTW instance types,
//! travel-time matrices, benchmark parsers, random generators and the
//! structural validator.
//!
//! Indexing follows the usual construction-heuristic convention: node `0` is
//! the depot where routes start and the last node (`N + 1` for VRPTW,
//! `2N + 1` for PDPTW) is a copy of the depot where routes end. Both copies
//! share coordinates and time window, which keeps the distance matrix
//! uniformly indexed.

mod generate;
mod lilim;
mod solomon;
mod validate;

use std::ops::Deref;

pub use generate::{generate_cvrptw, generate_pdptw, GenProfile};
pub use lilim::{parse_li_lim, write_li_lim};
pub use solomon::{parse_instance_text, parse_solomon, write_instance, ParsedInstance};
pub use validate::{validate_instance, validate_pdp_instance, InstanceViolation, ViolationKind};

/// Errors raised while reading or generating instances.
#[derive(Debug, thiserror::Error)]
pub enum InstanceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid pairing: {0}")]
    Pairing(String),
    #[error("generation failed: {0}")]
    Generation(String),
}

impl InstanceError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        InstanceError::Parse { line, message: message.into() }
    }
}

/// One vertex of the routing graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeRec {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    /// Signed load change; deliveries carry the negated pickup demand.
    pub demand: i64,
    pub tw_open: f64,
    pub tw_close: f64,
    pub service: f64,
}

impl NodeRec {
    pub fn new(id: usize, x: f64, y: f64, demand: i64, tw: (f64, f64), service: f64) -> Self {
        NodeRec { id, x, y, demand, tw_open: tw.0, tw_close: tw.1, service }
    }
}

/// A capacitated VRP with time windows over `N` customers.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: String,
    /// Nodes `0..=N+1`; `nodes[0]` and `nodes[N+1]` are the depot.
    pub nodes: Vec<NodeRec>,
    pub capacity: i64,
    /// Vehicle count from a benchmark header, if any. The fleet is otherwise open.
    pub fleet_size: Option<usize>,
}

impl Instance {
    /// Builds an instance from a depot record and customer records, assigning
    /// ids by position and appending the end-depot copy.
    pub fn new(name: impl Into<String>, depot: NodeRec, customers: Vec<NodeRec>, capacity: i64) -> Self {
        let mut nodes = Vec::with_capacity(customers.len() + 2);
        nodes.push(NodeRec { id: 0, demand: 0, service: 0.0, ..depot });
        for (k, c) in customers.into_iter().enumerate() {
            nodes.push(NodeRec { id: k + 1, ..c });
        }
        let end = nodes.len();
        nodes.push(NodeRec { id: end, ..nodes[0] });
        Instance { name: name.into(), nodes, capacity, fleet_size: None }
    }

    pub fn n_customers(&self) -> usize {
        self.nodes.len() - 2
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn end_depot(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_depot(&self, i: usize) -> bool {
        i == 0 || i == self.end_depot()
    }

    /// The depot window `[E, L]`.
    pub fn horizon(&self) -> (f64, f64) {
        (self.nodes[0].tw_open, self.nodes[0].tw_close)
    }

    pub fn customers(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.n_customers()
    }
}

/// A capacitated pickup-and-delivery instance with `N` requests. Pickup `i`
/// (`1..=N`) is paired with delivery `i + N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdpInstance {
    inner: Instance,
    n_requests: usize,
}

impl PdpInstance {
    /// `pickups[k]` and `deliveries[k]` form request `k + 1`.
    pub fn new(
        name: impl Into<String>,
        depot: NodeRec,
        pickups: Vec<NodeRec>,
        deliveries: Vec<NodeRec>,
        capacity: i64,
    ) -> Result<Self, InstanceError> {
        if pickups.len() != deliveries.len() {
            return Err(InstanceError::Pairing(format!(
                "{} pickups but {} deliveries",
                pickups.len(),
                deliveries.len()
            )));
        }
        let n_requests = pickups.len();
        let mut customers = pickups;
        customers.extend(deliveries);
        Ok(PdpInstance { inner: Instance::new(name, depot, customers, capacity), n_requests })
    }

    pub fn n_requests(&self) -> usize {
        self.n_requests
    }

    pub fn instance(&self) -> &Instance {
        &self.inner
    }

    pub fn into_instance(self) -> Instance {
        self.inner
    }

    pub fn is_pickup(&self, i: usize) -> bool {
        (1..=self.n_requests).contains(&i)
    }

    pub fn is_delivery(&self, i: usize) -> bool {
        (self.n_requests + 1..=2 * self.n_requests).contains(&i)
    }

    pub fn delivery_of(&self, pickup: usize) -> usize {
        pickup + self.n_requests
    }

    pub fn pickup_of(&self, delivery: usize) -> usize {
        delivery - self.n_requests
    }
}

impl Deref for PdpInstance {
    type Target = Instance;

    fn deref(&self) -> &Instance {
        &self.inner
    }
}

/// Shared view used by the solution checker: the underlying node set plus the
/// request count when precedence applies.
pub trait Problem: Sync {
    fn base(&self) -> &Instance;
    fn requests(&self) -> Option<usize>;
}

impl Problem for Instance {
    fn base(&self) -> &Instance {
        self
    }
    fn requests(&self) -> Option<usize> {
        None
    }
}

impl Problem for PdpInstance {
    fn base(&self) -> &Instance {
        &self.inner
    }
    fn requests(&self) -> Option<usize> {
        Some(self.n_requests)
    }
}

/// How Euclidean distances are turned into travel times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rounding {
    #[default]
    Exact,
    /// Truncate to one decimal, the convention behind published Solomon results.
    Solomon,
}

/// Dense symmetric travel-time matrix; travel time equals distance.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(inst: &Instance, rounding: Rounding) -> Self {
        let n = inst.n_nodes();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (&inst.nodes[i], &inst.nodes[j]);
                let mut dij = (a.x - b.x).hypot(a.y - b.y);
                if rounding == Rounding::Solomon {
                    dij = (dij * 10.0).floor() / 10.0;
                }
                d[i * n + j] = dij;
                d[j * n + i] = dij;
            }
        }
        DistanceMatrix { n, d }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn max(&self) -> f64 {
        self.d.iter().copied().fold(0.0, f64::max)
    }
}

/// Shorthand for the exact Euclidean matrix of an instance.
pub fn travel_matrix(inst: &Instance) -> DistanceMatrix {
    DistanceMatrix::new(inst, Rounding::Exact)
}
