use std::collections::HashMap;
use std::fmt::Write as _;

use super::{InstanceError, NodeRec, PdpInstance};

struct Row {
    line: usize,
    node: NodeRec,
    pickup_col: usize,
    delivery_col: usize,
}

/// Reads a Li & Lim PDPTW benchmark file.
///
/// The first line holds `<vehicles> <capacity> <speed>`; each following row is
/// `task x y demand ready due service pickup-index delivery-index`. Pickups
/// carry their partner in the delivery column, deliveries in the pickup
/// column. Requests are renumbered by ascending pickup task id so that pickup
/// `k` pairs with delivery `k + N`. `max_requests` keeps only the first
/// requests in that order.
pub fn parse_li_lim(text: &str, name: &str, max_requests: Option<usize>) -> Result<PdpInstance, InstanceError> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l)).filter(|(_, l)| !l.trim().is_empty());

    let (hline, header) = lines.next().ok_or_else(|| InstanceError::parse(1, "empty input"))?;
    let head: Vec<f64> = header
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| InstanceError::parse(hline, "header must be `<vehicles> <capacity> <speed>`"))?;
    if head.len() != 3 {
        return Err(InstanceError::parse(hline, "header must be `<vehicles> <capacity> <speed>`"));
    }
    let (fleet, capacity) = (head[0] as usize, head[1] as i64);

    let mut rows = Vec::new();
    let mut by_id: HashMap<usize, usize> = HashMap::new();
    for (line, text) in lines {
        let cols: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| InstanceError::parse(line, format!("malformed row: {:?}", text.trim())))?;
        if cols.len() != 9 {
            return Err(InstanceError::parse(line, format!("expected 9 columns, found {}", cols.len())));
        }
        if cols.iter().enumerate().any(|(k, v)| k != 1 && k != 2 && k != 4 && k != 5 && k != 6 && v.fract() != 0.0) {
            return Err(InstanceError::parse(line, "task id, demand and pair columns must be integers"));
        }
        if cols[4] > cols[5] {
            return Err(InstanceError::parse(line, "ready time after due date"));
        }
        let id = cols[0] as usize;
        if by_id.insert(id, rows.len()).is_some() {
            return Err(InstanceError::parse(line, format!("duplicate task id {id}")));
        }
        rows.push(Row {
            line,
            node: NodeRec::new(id, cols[1], cols[2], cols[3] as i64, (cols[4], cols[5]), cols[6]),
            pickup_col: cols[7] as usize,
            delivery_col: cols[8] as usize,
        });
    }
    let depot_row = rows.first().ok_or_else(|| InstanceError::parse(hline, "no depot row"))?;
    if depot_row.node.id != 0 || depot_row.node.demand != 0 {
        return Err(InstanceError::parse(depot_row.line, "first row must be the depot (task 0, zero demand)"));
    }

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (k, row) in rows.iter().enumerate().skip(1) {
        let id = row.node.id;
        match (row.pickup_col, row.delivery_col) {
            (0, 0) => return Err(InstanceError::Pairing(format!("task {id} is unpaired"))),
            (p, d) if p != 0 && d != 0 => {
                return Err(InstanceError::Pairing(format!("task {id} is both pickup and delivery")))
            }
            (0, d) => {
                if d == id {
                    return Err(InstanceError::Pairing(format!("task {id} pairs with itself")));
                }
                let dk = *by_id
                    .get(&d)
                    .ok_or_else(|| InstanceError::Pairing(format!("pickup {id} names missing delivery {d}")))?;
                let drow = &rows[dk];
                if drow.pickup_col != id || drow.delivery_col != 0 {
                    return Err(InstanceError::Pairing(format!(
                        "pickup {id} -> {d} is not reciprocated (cycle or mismatched link)"
                    )));
                }
                if row.node.demand <= 0 || drow.node.demand != -row.node.demand {
                    return Err(InstanceError::Pairing(format!(
                        "request {id}->{d} has demands {} and {}",
                        row.node.demand, drow.node.demand
                    )));
                }
                pairs.push((k, dk));
            }
            (p, 0) => {
                let pk = *by_id
                    .get(&p)
                    .ok_or_else(|| InstanceError::Pairing(format!("delivery {id} names missing pickup {p}")))?;
                if rows[pk].delivery_col != id {
                    return Err(InstanceError::Pairing(format!(
                        "delivery {id} <- {p} is not reciprocated (cycle or mismatched link)"
                    )));
                }
            }
            _ => unreachable!(),
        }
    }
    pairs.sort_by_key(|&(pk, _)| rows[pk].node.id);
    pairs.truncate(max_requests.unwrap_or(usize::MAX));

    let pickups = pairs.iter().map(|&(p, _)| rows[p].node).collect();
    let deliveries = pairs.iter().map(|&(_, d)| rows[d].node).collect();
    let mut inst = PdpInstance::new(name, rows[0].node, pickups, deliveries, capacity)?;
    inst.inner.fleet_size = Some(fleet);
    Ok(inst)
}

/// Writes an instance back in Li & Lim layout using canonical task ids.
pub fn write_li_lim(inst: &PdpInstance) -> String {
    let n = inst.n_requests();
    let mut s = String::new();
    let fleet = inst.fleet_size.unwrap_or(n.max(1));
    let _ = writeln!(s, "{fleet}\t{}\t1", inst.capacity);
    for (k, node) in inst.nodes[..inst.end_depot()].iter().enumerate() {
        let (p, d) = match k {
            0 => (0, 0),
            k if k <= n => (0, k + n),
            k => (k - n, 0),
        };
        let _ = writeln!(
            s,
            "{k}\t{}\t{}\t{}\t{}\t{}\t{}\t{p}\t{d}",
            node.x, node.y, node.demand, node.tw_open, node.tw_close, node.service
        );
    }
    s
}
