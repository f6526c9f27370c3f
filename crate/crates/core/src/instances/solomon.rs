use std::fmt::Write as _;

use super::{Instance, InstanceError, NodeRec, PdpInstance, Problem};

/// Result of reading the line-oriented instance format: plain VRPTW files have
/// seven columns, PDPTW files carry an extra PAIR column.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedInstance {
    Vrptw(Instance),
    Pdptw(PdpInstance),
}

struct Table {
    name: String,
    fleet: usize,
    capacity: i64,
    /// (line number, numeric columns)
    rows: Vec<(usize, Vec<f64>)>,
}

fn numeric_tokens(line: &str) -> Option<Vec<f64>> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.is_empty() {
        return None;
    }
    toks.iter().map(|t| t.parse::<f64>().ok()).collect()
}

fn read_table(text: &str) -> Result<Table, InstanceError> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
    let name = lines
        .by_ref()
        .map(|(_, l)| l.trim())
        .find(|l| !l.is_empty())
        .ok_or_else(|| InstanceError::parse(1, "empty input"))?
        .to_string();

    let mut saw_vehicle = false;
    let mut header: Option<(usize, i64)> = None;
    let mut saw_customer = false;
    let mut rows = Vec::new();
    let mut last_line = 1;
    for (no, line) in lines {
        last_line = no;
        let upper = line.trim().to_ascii_uppercase();
        if upper.starts_with("VEHICLE") {
            saw_vehicle = true;
            continue;
        }
        if upper.starts_with("CUSTOMER") {
            if header.is_none() {
                return Err(InstanceError::parse(no, "CUSTOMER section before vehicle header"));
            }
            saw_customer = true;
            continue;
        }
        let Some(nums) = numeric_tokens(line) else {
            let non_blank = !line.trim().is_empty();
            // Column captions are allowed; anything else inside the customer
            // table is malformed.
            if saw_customer && non_blank && !rows.is_empty() {
                return Err(InstanceError::parse(no, format!("malformed row: {:?}", line.trim())));
            }
            continue;
        };
        if saw_vehicle && header.is_none() {
            if nums.len() != 2 {
                return Err(InstanceError::parse(no, "expected `<vehicles> <capacity>`"));
            }
            header = Some((nums[0] as usize, nums[1] as i64));
            continue;
        }
        if !saw_customer {
            return Err(InstanceError::parse(no, "numeric row outside CUSTOMER section"));
        }
        rows.push((no, nums));
    }
    let (fleet, capacity) = header.ok_or_else(|| InstanceError::parse(last_line, "missing VEHICLE header"))?;
    if !saw_customer {
        return Err(InstanceError::parse(last_line, "missing CUSTOMER section"));
    }
    Ok(Table { name, fleet, capacity, rows })
}

fn as_int(v: f64, line: usize, what: &str) -> Result<i64, InstanceError> {
    if v.fract() != 0.0 {
        return Err(InstanceError::parse(line, format!("{what} must be an integer, got {v}")));
    }
    Ok(v as i64)
}

fn to_nodes(table: &Table, width: usize) -> Result<Vec<(NodeRec, usize)>, InstanceError> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, cols) in &table.rows {
        if cols.len() != width {
            return Err(InstanceError::parse(*line, format!("expected {width} columns, found {}", cols.len())));
        }
        let id = as_int(cols[0], *line, "customer id")?;
        if id < 0 || !seen.insert(id) {
            return Err(InstanceError::parse(*line, format!("duplicate or negative customer id {id}")));
        }
        let demand = as_int(cols[3], *line, "demand")?;
        if cols[4] > cols[5] {
            return Err(InstanceError::parse(*line, "ready time after due date"));
        }
        if cols[6] < 0.0 {
            return Err(InstanceError::parse(*line, "negative service time"));
        }
        let pair = if width == 8 { as_int(cols[7], *line, "pair")? as usize } else { 0 };
        out.push((NodeRec::new(id as usize, cols[1], cols[2], demand, (cols[4], cols[5]), cols[6]), pair));
    }
    if out.is_empty() {
        let line = table.rows.last().map(|r| r.0).unwrap_or(1);
        return Err(InstanceError::parse(line, "no depot row"));
    }
    Ok(out)
}

/// Reads a Solomon benchmark file. `count` keeps only the first `count`
/// customers in file order (the 25/50-customer variants are prefixes of the
/// 100-customer files).
pub fn parse_solomon(text: &str, count: Option<usize>) -> Result<Instance, InstanceError> {
    let table = read_table(text)?;
    let rows = to_nodes(&table, 7)?;
    let depot_line = table.rows[0].0;
    let (depot, _) = rows[0];
    if depot.demand != 0 {
        return Err(InstanceError::parse(depot_line, "depot row must have zero demand"));
    }
    let keep = count.unwrap_or(usize::MAX);
    let customers: Vec<NodeRec> = rows[1..].iter().take(keep).map(|r| r.0).collect();
    let mut inst = Instance::new(table.name, depot, customers, table.capacity);
    inst.fleet_size = Some(table.fleet);
    Ok(inst)
}

/// Reads the line-oriented format produced by [`write_instance`].
pub fn parse_instance_text(text: &str) -> Result<ParsedInstance, InstanceError> {
    let table = read_table(text)?;
    let width = table.rows.first().map(|r| r.1.len()).unwrap_or(7);
    if width == 7 {
        return parse_solomon(text, None).map(ParsedInstance::Vrptw);
    }
    let rows = to_nodes(&table, 8)?;
    let total = rows.len() - 1;
    if total % 2 != 0 {
        return Err(InstanceError::Pairing(format!("{total} customers cannot form pairs")));
    }
    let n = total / 2;
    for (k, (node, pair)) in rows.iter().enumerate().skip(1) {
        let expect = if k <= n { k + n } else { k - n };
        if *pair != expect || node.id != k {
            return Err(InstanceError::Pairing(format!(
                "node {} pairs with {pair}, expected canonical pairing {expect}",
                node.id
            )));
        }
    }
    let depot = rows[0].0;
    let pickups = rows[1..=n].iter().map(|r| r.0).collect();
    let deliveries = rows[n + 1..].iter().map(|r| r.0).collect();
    let mut pdp = PdpInstance::new(table.name, depot, pickups, deliveries, table.capacity)?;
    pdp.inner.fleet_size = Some(table.fleet);
    Ok(ParsedInstance::Pdptw(pdp))
}

/// Writes an instance in Solomon column layout; PDPTW instances get an extra
/// PAIR column holding the partner node index.
pub fn write_instance<P: Problem + ?Sized>(problem: &P) -> String {
    let inst = problem.base();
    let pdp = problem.requests();
    let mut s = String::new();
    let _ = writeln!(s, "{}\n\nVEHICLE\nNUMBER     CAPACITY", inst.name);
    let fleet = inst.fleet_size.unwrap_or(inst.n_customers().max(1));
    let _ = writeln!(s, "  {fleet}         {}\n\nCUSTOMER", inst.capacity);
    let _ = write!(s, "CUST NO.  XCOORD.   YCOORD.    DEMAND   READY TIME  DUE DATE   SERVICE   TIME");
    s.push_str(if pdp.is_some() { "   PAIR\n\n" } else { "\n\n" });
    for (k, node) in inst.nodes[..inst.end_depot()].iter().enumerate() {
        let _ = write!(
            s,
            "{:>5} {:>12} {:>12} {:>6} {:>12} {:>12} {:>8}",
            k, node.x, node.y, node.demand, node.tw_open, node.tw_close, node.service
        );
        if let Some(n) = pdp {
            let pair = match k {
                0 => 0,
                k if k <= n => k + n,
                k => k - n,
            };
            let _ = write!(s, " {pair:>5}");
        }
        s.push('\n');
    }
    s
}
