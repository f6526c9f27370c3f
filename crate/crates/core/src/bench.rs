//! Benchmark plumbing: best-known references, per-instance result rows,
//! family tables, and solving benchmark files with a trained policy.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cvrptw::{CvrptwEnv, TwMode};
use crate::derive_seed;
use crate::env::RoutingEnv;
use crate::instances::{parse_li_lim, parse_solomon, DistanceMatrix, InstanceError, Problem, Rounding};
use crate::numeric::Graph;
use crate::pdptw::PdptwEnv;
use crate::policy::{featurize, AttentionModel, Chooser, DecodeMode, PolicyError, Variant};
use crate::solution::{validate_solution, write_solution, Solution};
use crate::training::GeneratedInstance;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Instance { path: PathBuf, source: InstanceError },
    #[error("best-known table: {0}")]
    BestKnown(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub vehicles: u32,
    pub distance: f64,
}

/// Best-known vehicles and distance per instance id. Ids are matched
/// case-insensitively.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BestKnown {
    entries: BTreeMap<String, Reference>,
}

#[derive(Deserialize)]
struct BestKnownRecord {
    instance: String,
    vehicles: u32,
    distance: f64,
}

impl BestKnown {
    /// CSV with header `instance,vehicles,distance`; `#` lines are comments.
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut entries = BTreeMap::new();
        for rec in rdr.deserialize::<BestKnownRecord>() {
            let rec = rec?;
            if rec.vehicles == 0 || rec.distance.is_nan() || rec.distance <= 0.0 {
                return Err(BenchError::BestKnown(format!("{}: values must be positive", rec.instance)));
            }
            let id = rec.instance.to_lowercase();
            let r = Reference { vehicles: rec.vehicles, distance: rec.distance };
            if entries.insert(id, r).is_some() {
                return Err(BenchError::BestKnown(format!("duplicate id {}", rec.instance)));
            }
        }
        Ok(BestKnown { entries })
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn get(&self, id: &str) -> Option<Reference> {
        self.entries.get(&id.to_lowercase()).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Percentage gap of `distance` over `best`.
pub fn gap(distance: f64, best: f64) -> f64 {
    (distance - best) / best * 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance: String,
    pub vehicles: usize,
    pub distance: f64,
    /// Blank when the instance has no best-known entry.
    pub gap: Option<f64>,
    pub seconds: f64,
    pub feasible: bool,
}

pub fn write_results(rows: &[ResultRow]) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn read_results(text: &str) -> Result<Vec<ResultRow>, BenchError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

/// Benchmark family of an instance id: `R`, `C` or `RC` for Solomon names,
/// letters plus the first digit (`lr1`, `lc2`, ..) for Li & Lim names.
pub fn family(id: &str) -> String {
    let id = id.trim();
    let letters: String = id.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
    if letters.to_ascii_lowercase().starts_with('l') {
        let digit = id[letters.len()..].chars().next().filter(char::is_ascii_digit);
        let mut f = letters.to_ascii_lowercase();
        f.extend(digit);
        f
    } else {
        letters.to_ascii_uppercase()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Family,
    /// One row over everything.
    All,
}

impl std::str::FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "family" => Ok(GroupBy::Family),
            "all" => Ok(GroupBy::All),
            other => Err(format!("unknown grouping `{other}` (expected family or all)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRow {
    pub group: String,
    pub instances: usize,
    pub distance: f64,
    /// Mean over the rows that have a gap.
    pub gap: Option<f64>,
    pub vehicles: f64,
    pub feasible: usize,
}

pub fn aggregate(rows: &[ResultRow], by: GroupBy) -> Vec<GroupRow> {
    let mut groups: BTreeMap<String, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let key = match by {
            GroupBy::Family => family(&r.instance),
            GroupBy::All => "all".to_string(),
        };
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(group, rs)| {
            let n = rs.len() as f64;
            let gaps: Vec<f64> = rs.iter().filter_map(|r| r.gap).collect();
            GroupRow {
                group,
                instances: rs.len(),
                distance: rs.iter().map(|r| r.distance).sum::<f64>() / n,
                gap: (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64),
                vehicles: rs.iter().map(|r| r.vehicles as f64).sum::<f64>() / n,
                feasible: rs.iter().filter(|r| r.feasible).count(),
            }
        })
        .collect()
}

pub fn format_table(rows: &[GroupRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<8} {:>9} {:>12} {:>8} {:>9} {:>9}",
        "group", "instances", "distance", "gap%", "vehicles", "feasible"
    );
    for r in rows {
        let gap = r.gap.map(|g| format!("{g:.2}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{:<8} {:>9} {:>12.2} {:>8} {:>9.2} {:>9}",
            r.group, r.instances, r.distance, gap, r.vehicles, r.feasible
        );
    }
    s
}

pub fn table_csv(rows: &[GroupRow]) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Reads a benchmark file: Solomon layout for the time-window variants,
/// Li & Lim layout for pickup and delivery.
pub fn load_benchmark(path: &Path, variant: Variant, limit: Option<usize>) -> Result<GeneratedInstance, BenchError> {
    let text = fs::read_to_string(path)?;
    let wrap = |source| BenchError::Instance { path: path.to_path_buf(), source };
    Ok(match variant {
        Variant::Cvrp | Variant::Cvrptw => GeneratedInstance::Vrp(parse_solomon(&text, limit).map_err(wrap)?),
        Variant::Cpdptw => {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("instance");
            GeneratedInstance::Pdp(parse_li_lim(&text, stem, limit).map_err(wrap)?)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveMode {
    Greedy,
    /// Best of `k` sampled rollouts by total distance.
    Sample {
        k: usize,
        seed: u64,
    },
}

/// Default number of sampled rollouts per instance.
pub const DEFAULT_SAMPLES: usize = 16;

#[derive(Debug, Clone)]
pub struct Solved {
    pub row: ResultRow,
    pub solution: Solution,
    /// Solution file contents.
    pub text: String,
}

fn decode<E: RoutingEnv>(model: &AttentionModel, env: &E, mode: SolveMode) -> Result<Solution, PolicyError> {
    let mut g = Graph::new(&model.params);
    let enc = model.encode(&mut g, &featurize(env, &model.config))?;
    let (rows, dm) = match mode {
        SolveMode::Greedy => (1, DecodeMode::Greedy),
        SolveMode::Sample { k, seed } => (k.max(1), DecodeMode::Sample(seed)),
    };
    let b = model.rollout_batch(&mut g, &enc, env, &vec![None; rows], Chooser::Decode(dm))?;
    let dist = env.dist();
    let best = b
        .states
        .iter()
        .map(|s| env.solution(s))
        .min_by(|a, c| a.distance(dist).total_cmp(&c.distance(dist)))
        .expect("at least one rollout");
    Ok(best)
}

fn finish<P: Problem>(
    id: &str,
    sol: Solution,
    problem: &P,
    dist: &DistanceMatrix,
    best: &BestKnown,
    started: Instant,
) -> Solved {
    let feasible = validate_solution(&sol, problem, dist).is_empty();
    let distance = sol.distance(dist);
    let row = ResultRow {
        instance: id.to_string(),
        vehicles: sol.vehicles(),
        distance,
        gap: best.get(id).map(|r| gap(distance, r.distance)),
        seconds: started.elapsed().as_secs_f64(),
        feasible,
    };
    let text = write_solution(&sol, id, dist);
    Solved { row, solution: sol, text }
}

/// Rolls out the policy on one instance with hard time windows, validates
/// the result and scores it against `best`.
pub fn solve_instance(
    model: &AttentionModel,
    inst: &GeneratedInstance,
    mode: SolveMode,
    rounding: Rounding,
    best: &BestKnown,
) -> Result<Solved, BenchError> {
    let started = Instant::now();
    Ok(match inst {
        GeneratedInstance::Vrp(i) => {
            let dist = DistanceMatrix::new(i, rounding);
            let env = CvrptwEnv::new(i, &dist, TwMode::Hard);
            let sol = decode(model, &env, mode)?;
            finish(inst.name(), sol, i, &dist, best, started)
        }
        GeneratedInstance::Pdp(i) => {
            let dist = DistanceMatrix::new(i, rounding);
            let env = PdptwEnv::new(i, &dist);
            let sol = decode(model, &env, mode)?;
            finish(inst.name(), sol, i, &dist, best, started)
        }
    })
}

/// Per-instance sampling seed that does not depend on the order of a batch.
pub fn instance_seed(base: u64, id: &str) -> u64 {
    let parts: Vec<u64> = id.bytes().map(u64::from).collect();
    derive_seed(base, &parts)
}
