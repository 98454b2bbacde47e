//! Grid data model and the MATPOWER-style case file reader/writer.
//!
//! Case files use the familiar `mpc.<table> = [ ... ];` layout with `%`
//! comments. The tables read are `baseMVA`, `bus`, `gen`, `branch` and the
//! optional `gencost`; anything else (`version`, `areas`, ...) is skipped.
//! Powers are kept in MW/MVAr exactly as stored in the file; per-unit
//! conversion happens in the power-flow solver.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Linear cost used for generators without a `gencost` row, in $/MWh.
pub const DEFAULT_LINEAR_COST: f64 = 20.0;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing required table `{0}`")]
    MissingTable(&'static str),
    #[error("duplicate bus id {0}")]
    DuplicateBus(u32),
    #[error("{what} {index} references unknown bus {bus}")]
    DanglingBus {
        what: &'static str,
        index: usize,
        bus: u32,
    },
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusKind {
    Pq,
    Pv,
    Slack,
}

impl BusKind {
    fn from_code(code: f64) -> Option<Self> {
        match code as i64 {
            1 => Some(BusKind::Pq),
            2 => Some(BusKind::Pv),
            3 => Some(BusKind::Slack),
            _ => None,
        }
    }

    fn code(self) -> u8 {
        match self {
            BusKind::Pq => 1,
            BusKind::Pv => 2,
            BusKind::Slack => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    /// MW
    pub p_load: f64,
    /// MVAr
    pub q_load: f64,
    /// MW consumed at 1 p.u. voltage.
    pub g_shunt: f64,
    /// MVAr injected at 1 p.u. voltage.
    pub b_shunt: f64,
    pub v_mag_init: f64,
    /// Degrees.
    pub v_ang_init: f64,
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from_bus: u32,
    pub to_bus: u32,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, p.u.
    pub b_charging: f64,
    /// Off-nominal turns ratio; 1.0 for plain lines.
    pub tap_ratio: f64,
    /// Degrees.
    pub phase_shift: f64,
    pub in_service: bool,
}

/// Polynomial cost curve, `coeffs[k]` multiplies `P^k` (P in MW, result in $/h).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub coeffs: Vec<f64>,
}

impl CostCurve {
    pub fn linear(per_mwh: f64) -> Self {
        CostCurve {
            coeffs: vec![0.0, per_mwh],
        }
    }

    pub fn eval(&self, p_mw: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * p_mw + c)
    }

    pub fn derivative(&self, p_mw: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * p_mw + k as f64 * c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: u32,
    /// Scheduled output from the case file, MW.
    pub p_gen: f64,
    pub q_gen: f64,
    pub q_max: f64,
    pub q_min: f64,
    /// Voltage set-point, p.u.
    pub v_set: f64,
    pub in_service: bool,
    pub p_max: f64,
    pub p_min: f64,
    pub cost: CostCurve,
}

/// An immutable grid case.
#[derive(Debug, Clone)]
pub struct Network {
    name: String,
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
    positions: HashMap<u32, usize>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.base_mva == other.base_mva
            && self.buses == other.buses
            && self.branches == other.branches
            && self.generators == other.generators
    }
}

impl Network {
    /// Assembles a network without checking it; see [`validate`].
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Self {
        let mut positions = HashMap::with_capacity(buses.len());
        for (i, b) in buses.iter().enumerate() {
            positions.entry(b.id).or_insert(i);
        }
        Network {
            name: name.into(),
            base_mva,
            buses,
            branches,
            generators,
            positions,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    /// Position of bus `id` in [`Network::buses`].
    pub fn bus_position(&self, id: u32) -> Option<usize> {
        self.positions.get(&id).copied()
    }

    /// Branch endpoints as bus positions. Panics on a dangling reference,
    /// which parsed networks never contain.
    pub fn branch_ends(&self, k: usize) -> (usize, usize) {
        let br = &self.branches[k];
        (self.positions[&br.from_bus], self.positions[&br.to_bus])
    }

    pub fn generator_position(&self, g: usize) -> usize {
        self.positions[&self.generators[g].bus]
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.p_load).sum()
    }

    /// Finds a branch between two bus ids, in either direction.
    pub fn find_branch(&self, a: u32, b: u32) -> Option<usize> {
        self.branches.iter().position(|br| {
            (br.from_bus == a && br.to_bus == b) || (br.from_bus == b && br.to_bus == a)
        })
    }

    /// Writes the network back out in the case file format.
    pub fn to_case_text(&self) -> String {
        let mut s = String::new();
        let ident: String = self
            .name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        let ident = if ident.is_empty() {
            "case".into()
        } else {
            ident
        };
        let _ = writeln!(s, "function mpc = {ident}");
        let _ = writeln!(s, "mpc.version = '2';");
        let _ = writeln!(s, "mpc.baseMVA = {};", num(self.base_mva));
        let _ = writeln!(s, "\n%% bus data");
        let _ = writeln!(
            s,
            "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin"
        );
        s.push_str("mpc.bus = [\n");
        for b in &self.buses {
            let _ = writeln!(
                s,
                "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t{}\t{}\t{}\t1\t1.1\t0.9;",
                b.id,
                b.kind.code(),
                num(b.p_load),
                num(b.q_load),
                num(b.g_shunt),
                num(b.b_shunt),
                num(b.v_mag_init),
                num(b.v_ang_init),
                num(b.base_kv)
            );
        }
        s.push_str("];\n\n%% gen data\n");
        let _ = writeln!(
            s,
            "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin"
        );
        s.push_str("mpc.gen = [\n");
        for g in &self.generators {
            let _ = writeln!(
                s,
                "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
                g.bus,
                num(g.p_gen),
                num(g.q_gen),
                num(g.q_max),
                num(g.q_min),
                num(g.v_set),
                num(self.base_mva),
                u8::from(g.in_service),
                num(g.p_max),
                num(g.p_min)
            );
        }
        s.push_str("];\n\n%% branch data\n");
        let _ = writeln!(
            s,
            "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax"
        );
        s.push_str("mpc.branch = [\n");
        for br in &self.branches {
            let tap = if br.tap_ratio == 1.0 {
                0.0
            } else {
                br.tap_ratio
            };
            let _ = writeln!(
                s,
                "\t{}\t{}\t{}\t{}\t{}\t0\t0\t0\t{}\t{}\t{}\t-360\t360;",
                br.from_bus,
                br.to_bus,
                num(br.r),
                num(br.x),
                num(br.b_charging),
                num(tap),
                num(br.phase_shift),
                u8::from(br.in_service)
            );
        }
        s.push_str("];\n\n%% generator cost data\nmpc.gencost = [\n");
        for g in &self.generators {
            let _ = write!(s, "\t2\t0\t0\t{}", g.cost.coeffs.len());
            for c in g.cost.coeffs.iter().rev() {
                let _ = write!(s, "\t{}", num(*c));
            }
            s.push_str(";\n");
        }
        s.push_str("];\n");
        s
    }
}

// Shortest representation that parses back to the same f64.
fn num(x: f64) -> String {
    format!("{x}")
}

/// Per-branch and per-generator service flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceMask {
    pub branches: Vec<bool>,
    pub generators: Vec<bool>,
}

impl ServiceMask {
    /// The statuses recorded in the case file.
    pub fn from_network(net: &Network) -> Self {
        ServiceMask {
            branches: net.branches().iter().map(|b| b.in_service).collect(),
            generators: net.generators().iter().map(|g| g.in_service).collect(),
        }
    }

    pub fn fits(&self, net: &Network) -> bool {
        self.branches.len() == net.n_branches() && self.generators.len() == net.n_generators()
    }
}

/// Reads a case file from disk.
pub fn load_case(path: impl AsRef<Path>) -> Result<Network, CaseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut net = parse_case(&text)?;
    if net.name.is_empty() {
        if let Some(stem) = path.file_stem() {
            net.name = stem.to_string_lossy().into_owned();
        }
    }
    Ok(net)
}

struct Table {
    line: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

/// Parses case-file text into a [`Network`].
pub fn parse_case(text: &str) -> Result<Network, CaseError> {
    let mut name = String::new();
    let mut scalars: HashMap<String, (usize, String)> = HashMap::new();
    let mut tables: HashMap<String, Table> = HashMap::new();
    // (table name, pending row tokens)
    let mut open: Option<(String, Vec<f64>, usize)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('%') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let mut rest = line.trim();
        if rest.is_empty() {
            continue;
        }

        if open.is_none() {
            if let Some(sig) = rest.strip_prefix("function") {
                if let Some((_, n)) = sig.split_once('=') {
                    name = n.trim().trim_end_matches(';').to_string();
                }
                continue;
            }
            let Some((lhs, rhs)) = rest.split_once('=') else {
                return Err(syntax(
                    lineno,
                    format!("expected `mpc.<name> = ...`, found `{rest}`"),
                ));
            };
            let key = lhs.trim();
            let Some(key) = key.strip_prefix("mpc.") else {
                return Err(syntax(lineno, format!("unexpected assignment to `{key}`")));
            };
            let key = key.to_string();
            let rhs = rhs.trim();
            if let Some(body) = rhs.strip_prefix('[') {
                if tables.contains_key(&key) {
                    return Err(syntax(lineno, format!("table `{key}` defined twice")));
                }
                tables.insert(
                    key.clone(),
                    Table {
                        line: lineno,
                        rows: Vec::new(),
                    },
                );
                open = Some((key, Vec::new(), lineno));
                rest = body;
            } else {
                let value = rhs.trim_end_matches(';').trim().to_string();
                scalars.insert(key, (lineno, value));
                continue;
            }
        }

        // Inside a matrix literal.
        let (key, row, row_line) = open.as_mut().expect("matrix open");
        let mut closed = false;
        let mut body = rest;
        if let Some(p) = body.find(']') {
            let tail = body[p + 1..].trim();
            if !(tail.is_empty() || tail == ";") {
                return Err(syntax(lineno, format!("unexpected `{tail}` after `]`")));
            }
            body = &body[..p];
            closed = true;
        }
        for (i, chunk) in body.split(';').enumerate() {
            if i > 0 {
                flush_row(&mut tables, key, row, *row_line);
            }
            for tok in chunk.split(|c: char| c.is_whitespace() || c == ',') {
                if tok.is_empty() {
                    continue;
                }
                let v: f64 = tok
                    .parse()
                    .map_err(|_| syntax(lineno, format!("invalid number `{tok}` in `{key}`")))?;
                if row.is_empty() {
                    *row_line = lineno;
                }
                row.push(v);
            }
        }
        // A newline also ends a row.
        flush_row(&mut tables, key, row, *row_line);
        if closed {
            open = None;
        }
    }
    if let Some((key, _, line)) = open {
        return Err(syntax(line, format!("table `{key}` is never closed")));
    }

    let base_mva = match scalars.get("baseMVA") {
        Some((line, v)) => v
            .parse::<f64>()
            .map_err(|_| syntax(*line, format!("invalid baseMVA `{v}`")))?,
        None => return Err(CaseError::MissingTable("baseMVA")),
    };
    let bus_t = tables.remove("bus").ok_or(CaseError::MissingTable("bus"))?;
    let gen_t = tables.remove("gen").ok_or(CaseError::MissingTable("gen"))?;
    let branch_t = tables
        .remove("branch")
        .ok_or(CaseError::MissingTable("branch"))?;
    let cost_t = tables.remove("gencost");

    let mut buses = Vec::with_capacity(bus_t.rows.len());
    for (line, r) in &bus_t.rows {
        need_cols(*line, "bus", r, 13)?;
        let kind = match r[1] as i64 {
            4 => {
                return Err(CaseError::Unsupported(format!(
                    "line {line}: isolated bus type 4 is not supported"
                )))
            }
            _ => BusKind::from_code(r[1])
                .ok_or_else(|| syntax(*line, format!("unknown bus type {}", r[1])))?,
        };
        buses.push(Bus {
            id: as_id(*line, r[0])?,
            kind,
            p_load: r[2],
            q_load: r[3],
            g_shunt: r[4],
            b_shunt: r[5],
            v_mag_init: r[7],
            v_ang_init: r[8],
            base_kv: r[9],
        });
    }

    let costs: Vec<CostCurve> = match &cost_t {
        Some(t) => {
            let mut out = Vec::with_capacity(t.rows.len());
            for (line, r) in &t.rows {
                need_cols(*line, "gencost", r, 4)?;
                if r[0] as i64 != 2 {
                    return Err(CaseError::Unsupported(format!(
                        "line {line}: only polynomial (model 2) costs are supported"
                    )));
                }
                let n = r[3] as usize;
                need_cols(*line, "gencost", r, 4 + n)?;
                let coeffs = r[4..4 + n].iter().rev().copied().collect();
                out.push(CostCurve { coeffs });
            }
            if out.len() < gen_t.rows.len() {
                return Err(syntax(
                    t.line,
                    format!(
                        "gencost has {} rows for {} generators",
                        out.len(),
                        gen_t.rows.len()
                    ),
                ));
            }
            out
        }
        None => Vec::new(),
    };

    let mut generators = Vec::with_capacity(gen_t.rows.len());
    for (g, (line, r)) in gen_t.rows.iter().enumerate() {
        need_cols(*line, "gen", r, 10)?;
        generators.push(Generator {
            bus: as_id(*line, r[0])?,
            p_gen: r[1],
            q_gen: r[2],
            q_max: r[3],
            q_min: r[4],
            v_set: r[5],
            in_service: r[7] > 0.0,
            p_max: r[8],
            p_min: r[9],
            cost: costs
                .get(g)
                .cloned()
                .unwrap_or_else(|| CostCurve::linear(DEFAULT_LINEAR_COST)),
        });
    }

    let mut branches = Vec::with_capacity(branch_t.rows.len());
    for (line, r) in &branch_t.rows {
        need_cols(*line, "branch", r, 11)?;
        branches.push(Branch {
            from_bus: as_id(*line, r[0])?,
            to_bus: as_id(*line, r[1])?,
            r: r[2],
            x: r[3],
            b_charging: r[4],
            tap_ratio: if r[8] == 0.0 { 1.0 } else { r[8] },
            phase_shift: r[9],
            in_service: r[10] > 0.0,
        });
    }

    let net = Network::new(name, base_mva, buses, branches, generators);
    if net.positions.len() != net.buses.len() {
        let mut seen = std::collections::HashSet::new();
        for b in &net.buses {
            if !seen.insert(b.id) {
                return Err(CaseError::DuplicateBus(b.id));
            }
        }
    }
    for (k, br) in net.branches.iter().enumerate() {
        for bus in [br.from_bus, br.to_bus] {
            if net.bus_position(bus).is_none() {
                return Err(CaseError::DanglingBus {
                    what: "branch",
                    index: k,
                    bus,
                });
            }
        }
    }
    for (g, gen) in net.generators.iter().enumerate() {
        if net.bus_position(gen.bus).is_none() {
            return Err(CaseError::DanglingBus {
                what: "generator",
                index: g,
                bus: gen.bus,
            });
        }
    }
    Ok(net)
}

fn flush_row(tables: &mut HashMap<String, Table>, key: &str, row: &mut Vec<f64>, line: usize) {
    if !row.is_empty() {
        let t = tables.get_mut(key).expect("table registered");
        t.rows.push((line, std::mem::take(row)));
    }
}

fn syntax(line: usize, message: String) -> CaseError {
    CaseError::Syntax { line, message }
}

fn need_cols(line: usize, table: &str, row: &[f64], n: usize) -> Result<(), CaseError> {
    if row.len() < n {
        Err(syntax(
            line,
            format!("`{table}` row has {} columns, need {n}", row.len()),
        ))
    } else {
        Ok(())
    }
}

fn as_id(line: usize, v: f64) -> Result<u32, CaseError> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as u32)
    } else {
        Err(syntax(line, format!("invalid bus id {v}")))
    }
}

/// Lists every broken invariant of `net`; empty means the network is usable.
pub fn validate(net: &Network) -> Vec<String> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, b) in net.buses.iter().enumerate() {
        if !seen.insert(b.id) {
            out.push(format!("bus {i} (id {}): duplicate id", b.id));
        }
        if !(b.v_mag_init > 0.0) {
            out.push(format!(
                "bus {i} (id {}): initial voltage {} is not positive",
                b.id, b.v_mag_init
            ));
        }
    }
    if !net.buses.iter().any(|b| b.kind == BusKind::Slack) {
        out.push("network has no slack bus".into());
    }
    for (k, br) in net.branches.iter().enumerate() {
        let tag = format!("branch {k} ({}-{})", br.from_bus, br.to_bus);
        if br.from_bus == br.to_bus {
            out.push(format!("{tag}: both ends on the same bus"));
        }
        for end in [br.from_bus, br.to_bus] {
            if net.bus_position(end).is_none() {
                out.push(format!("{tag}: references absent bus {end}"));
            }
        }
        if br.r == 0.0 && br.x == 0.0 {
            out.push(format!("{tag}: zero impedance"));
        }
    }
    if net.generators.is_empty() {
        out.push("network has no generator".into());
    }
    for (g, gen) in net.generators.iter().enumerate() {
        let tag = format!("generator {g} (bus {})", gen.bus);
        if net.bus_position(gen.bus).is_none() {
            out.push(format!("{tag}: references absent bus {}", gen.bus));
        }
        if gen.p_min < 0.0 {
            out.push(format!("{tag}: p_min {} is negative", gen.p_min));
        }
        if gen.p_min > gen.p_max {
            out.push(format!(
                "{tag}: p_min {} exceeds p_max {}",
                gen.p_min, gen.p_max
            ));
        }
        let steps = 16;
        let decreasing = (0..=steps).any(|s| {
            let p = gen.p_max.max(0.0) * s as f64 / steps as f64;
            gen.cost.derivative(p) < -1e-12
        });
        if decreasing {
            out.push(format!("{tag}: cost decreases on [0, p_max]"));
        }
    }
    out
}

/// The two IEEE test systems shipped with the crate.
pub mod fixtures {
    use super::{parse_case, Network};

    pub const IEEE14: &str = include_str!("../data/ieee14.m");
    pub const IEEE118: &str = include_str!("../data/ieee118.m");

    pub fn ieee14() -> Network {
        parse_case(IEEE14).expect("bundled 14-bus case parses")
    }

    pub fn ieee118() -> Network {
        parse_case(IEEE118).expect("bundled 118-bus case parses")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = "
function mpc = two_bus
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0   0 0 0 1 1 0 230 1 1.1 0.9;
  2 1 100 0 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [ 1 0 0 300 -300 1 100 1 250 0 ];
mpc.branch = [
  1 2 0 0.1 0 0 0 0 0 0 1 -360 360;
];
";

    #[test]
    fn parses_minimal_two_bus_case() {
        let net = parse_case(TWO_BUS).unwrap();
        assert_eq!(net.name(), "two_bus");
        assert_eq!(net.n_buses(), 2);
        assert_eq!(net.n_branches(), 1);
        assert_eq!(net.n_generators(), 1);
        assert_eq!(net.buses()[0].kind, BusKind::Slack);
        assert_eq!(net.branches()[0].tap_ratio, 1.0);
        // No gencost table: uniform linear fallback.
        assert_eq!(net.generators()[0].cost.eval(100.0), 2000.0);
        assert!(validate(&net).is_empty());
    }

    #[test]
    fn fixture_counts() {
        let n14 = fixtures::ieee14();
        assert_eq!(
            (n14.n_buses(), n14.n_branches(), n14.n_generators()),
            (14, 20, 5)
        );
        let n118 = fixtures::ieee118();
        assert_eq!(
            (n118.n_buses(), n118.n_branches(), n118.n_generators()),
            (118, 179, 54)
        );
        assert!(validate(&n14).is_empty(), "{:?}", validate(&n14));
        assert!(validate(&n118).is_empty(), "{:?}", validate(&n118));
    }

    #[test]
    fn quadratic_cost_reads_descending_coefficients() {
        let net = fixtures::ieee14();
        let c = &net.generators()[0].cost;
        // 0.0430293 P^2 + 20 P
        assert!((c.eval(100.0) - (430.293 + 2000.0)).abs() < 1e-9);
    }

    #[test]
    fn syntax_error_reports_line() {
        let bad = TWO_BUS.replace("2 1 100", "2 1 1x0");
        match parse_case(&bad) {
            Err(CaseError::Syntax { line, .. }) => assert_eq!(line, 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_table() {
        let bad = TWO_BUS.replace("mpc.gen = [ 1 0 0 300 -300 1 100 1 250 0 ];", "");
        assert!(matches!(
            parse_case(&bad),
            Err(CaseError::MissingTable("gen"))
        ));
    }

    #[test]
    fn unclosed_table() {
        let bad = TWO_BUS.replace("];\nmpc.gen", "\nmpc.gen");
        assert!(parse_case(&bad).is_err());
    }

    #[test]
    fn semantic_errors() {
        let dup = TWO_BUS.replace("2 1 100", "1 1 100");
        assert!(matches!(parse_case(&dup), Err(CaseError::DuplicateBus(1))));
        let dangling = TWO_BUS.replace("1 2 0 0.1", "1 9 0 0.1");
        assert!(matches!(
            parse_case(&dangling),
            Err(CaseError::DanglingBus {
                what: "branch",
                index: 0,
                bus: 9
            })
        ));
    }

    #[test]
    fn validate_flags_absent_bus() {
        let net = fixtures::ieee14();
        let mut branches = net.branches().to_vec();
        branches[3].to_bus = 99;
        let broken = Network::new(
            "x",
            net.base_mva(),
            net.buses().to_vec(),
            branches,
            net.generators().to_vec(),
        );
        let v = validate(&broken);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].contains("branch 3") && v[0].contains("99"));
    }

    #[test]
    fn validate_flags_inverted_generator_limits() {
        let net = fixtures::ieee14();
        let mut gens = net.generators().to_vec();
        gens[2].p_min = gens[2].p_max + 1.0;
        let broken = Network::new(
            "x",
            net.base_mva(),
            net.buses().to_vec(),
            net.branches().to_vec(),
            gens,
        );
        let v = validate(&broken);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].starts_with("generator 2"));
    }

    #[test]
    fn written_cases_reparse_identically() {
        for net in [fixtures::ieee14(), fixtures::ieee118()] {
            let again = parse_case(&net.to_case_text()).unwrap();
            assert_eq!(net, again);
        }
    }
}
