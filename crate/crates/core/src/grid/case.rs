use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use super::GridError;

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub base_kv: f64,
    pub load_mw: f64,
    pub load_mvar: f64,
    /// No load and no generator attached.
    pub is_zero_injection: bool,
}

/// A transmission line or transformer, modelled as a pi section with the
/// line charging split evenly between the two ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    pub resistance: f64,
    pub reactance: f64,
    /// Total line charging susceptance, per unit.
    pub charging: f64,
    pub flow_limit_mw: f64,
}

impl Branch {
    pub fn series_admittance(&self) -> Complex64 {
        Complex64::new(self.resistance, self.reactance).inv()
    }

    /// Total shunt admittance of the pi section; half of it sits at each end.
    pub fn shunt_admittance(&self) -> Complex64 {
        Complex64::new(0.0, self.charging)
    }

    /// DC susceptance, `-Im(y_series)`.
    pub fn dc_susceptance(&self) -> f64 {
        -self.series_admittance().im
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: usize,
    pub p_min_mw: f64,
    pub p_max_mw: f64,
    pub cost_per_mwh: f64,
    /// Voltage magnitude set point used by the AC power flow.
    pub v_set_pu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    bus_index: HashMap<usize, usize>,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Preamble,
    Bus,
    Branch,
    Gen,
}

impl NetworkCase {
    /// Assembles and validates a case. Zero-injection flags are recomputed
    /// from loads and generator locations.
    pub fn new(
        base_mva: f64,
        mut buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
    ) -> Result<Self, GridError> {
        let mut bus_index = HashMap::with_capacity(buses.len());
        for (k, bus) in buses.iter().enumerate() {
            if bus_index.insert(bus.id, k).is_some() {
                return Err(GridError::Invalid(format!("duplicate bus id {}", bus.id)));
            }
        }
        if buses.is_empty() {
            return Err(GridError::Invalid("case has no buses".into()));
        }
        if !(base_mva > 0.0) {
            return Err(GridError::Invalid("base_mva must be positive".into()));
        }
        for br in &branches {
            for end in [br.from_bus, br.to_bus] {
                if !bus_index.contains_key(&end) {
                    return Err(GridError::DanglingBus { element: format!("branch {}", br.id), bus: end });
                }
            }
            if br.from_bus == br.to_bus {
                return Err(GridError::Invalid(format!("branch {} is a self loop", br.id)));
            }
            if !(br.flow_limit_mw > 0.0) {
                return Err(GridError::Invalid(format!("branch {} has non-positive flow limit", br.id)));
            }
            if br.resistance == 0.0 && br.reactance == 0.0 {
                return Err(GridError::Invalid(format!("branch {} has zero impedance", br.id)));
            }
        }
        for g in &generators {
            if !bus_index.contains_key(&g.bus) {
                return Err(GridError::DanglingBus { element: "generator".into(), bus: g.bus });
            }
            if g.p_min_mw > g.p_max_mw {
                return Err(GridError::Invalid(format!("generator at bus {} has p_min > p_max", g.bus)));
            }
        }
        for bus in &mut buses {
            let has_gen = generators.iter().any(|g| g.bus == bus.id);
            bus.is_zero_injection = bus.load_mw == 0.0 && bus.load_mvar == 0.0 && !has_gen;
        }
        let case = NetworkCase { base_mva, buses, branches, generators, bus_index };
        if !case.is_connected() {
            return Err(GridError::Disconnected);
        }
        Ok(case)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, GridError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| GridError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses the sectioned case grammar. See `data/README.md` for the
    /// column layout.
    pub fn parse(text: &str) -> Result<Self, GridError> {
        let mut base_mva = 100.0;
        let mut section = Section::Preamble;
        let mut buses = Vec::new();
        let mut branches = Vec::new();
        let mut generators = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                section = match line {
                    "[bus]" => Section::Bus,
                    "[branch]" => Section::Branch,
                    "[gen]" => Section::Gen,
                    other => {
                        return Err(GridError::Syntax { line: line_no, message: format!("unknown section {other}") })
                    }
                };
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let num = |k: usize| -> Result<f64, GridError> {
                let f = fields.get(k).ok_or_else(|| GridError::Syntax {
                    line: line_no,
                    message: format!("expected at least {} columns", k + 1),
                })?;
                f.parse::<f64>().map_err(|_| GridError::Syntax {
                    line: line_no,
                    message: format!("cannot parse {f:?} as a number"),
                })
            };
            let int = |k: usize| -> Result<usize, GridError> {
                let v = num(k)?;
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(GridError::Syntax { line: line_no, message: format!("column {} must be a non-negative integer", k + 1) });
                }
                Ok(v as usize)
            };
            let expect_cols = |lo: usize, hi: usize| -> Result<(), GridError> {
                if fields.len() < lo || fields.len() > hi {
                    Err(GridError::Syntax {
                        line: line_no,
                        message: format!("expected {lo}..={hi} columns, found {}", fields.len()),
                    })
                } else {
                    Ok(())
                }
            };
            match section {
                Section::Preamble => {
                    if fields.len() == 2 && fields[0] == "base_mva" {
                        base_mva = num(1)?;
                    } else {
                        return Err(GridError::Syntax { line: line_no, message: "data outside of a section".into() });
                    }
                }
                Section::Bus => {
                    expect_cols(4, 4)?;
                    buses.push(Bus {
                        id: int(0)?,
                        base_kv: num(1)?,
                        load_mw: num(2)?,
                        load_mvar: num(3)?,
                        is_zero_injection: false,
                    });
                }
                Section::Branch => {
                    expect_cols(7, 7)?;
                    branches.push(Branch {
                        id: int(0)?,
                        from_bus: int(1)?,
                        to_bus: int(2)?,
                        resistance: num(3)?,
                        reactance: num(4)?,
                        charging: num(5)?,
                        flow_limit_mw: num(6)?,
                    });
                }
                Section::Gen => {
                    expect_cols(4, 5)?;
                    generators.push(Generator {
                        bus: int(0)?,
                        p_min_mw: num(1)?,
                        p_max_mw: num(2)?,
                        cost_per_mwh: num(3)?,
                        v_set_pu: if fields.len() == 5 { num(4)? } else { 1.0 },
                    });
                }
            }
        }
        Self::new(base_mva, buses, branches, generators)
    }

    /// Writes the case back in the grammar accepted by [`NetworkCase::parse`].
    /// Floats use the shortest representation that round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "base_mva {}", self.base_mva);
        out.push_str("\n[bus]\n# id base_kv load_mw load_mvar\n");
        for b in &self.buses {
            let _ = writeln!(out, "{} {} {} {}", b.id, b.base_kv, b.load_mw, b.load_mvar);
        }
        out.push_str("\n[branch]\n# id from to r_pu x_pu b_pu rate_mw\n");
        for br in &self.branches {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {}",
                br.id, br.from_bus, br.to_bus, br.resistance, br.reactance, br.charging, br.flow_limit_mw
            );
        }
        out.push_str("\n[gen]\n# bus p_min_mw p_max_mw cost_per_mwh v_set_pu\n");
        for g in &self.generators {
            let _ = writeln!(out, "{} {} {} {} {}", g.bus, g.p_min_mw, g.p_max_mw, g.cost_per_mwh, g.v_set_pu);
        }
        out
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Position of a bus id in `buses` (and hence in every state vector).
    pub fn bus_pos(&self, id: usize) -> Option<usize> {
        self.bus_index.get(&id).copied()
    }

    pub(crate) fn pos(&self, id: usize) -> usize {
        self.bus_index[&id]
    }

    pub fn branch_pos(&self, id: usize) -> Option<usize> {
        self.branches.iter().position(|b| b.id == id)
    }

    /// Neighbouring bus positions for every bus position.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_buses()];
        for br in &self.branches {
            let (f, t) = (self.pos(br.from_bus), self.pos(br.to_bus));
            if !adj[f].contains(&t) {
                adj[f].push(t);
            }
            if !adj[t].contains(&f) {
                adj[t].push(f);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    /// Breadth-first hop distances between all bus positions.
    pub fn hop_distances(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let n = self.n_buses();
        (0..n)
            .map(|src| {
                let mut dist = vec![usize::MAX; n];
                dist[src] = 0;
                let mut queue = VecDeque::from([src]);
                while let Some(u) = queue.pop_front() {
                    for &v in &adj[u] {
                        if dist[v] == usize::MAX {
                            dist[v] = dist[u] + 1;
                            queue.push_back(v);
                        }
                    }
                }
                dist
            })
            .collect()
    }

    fn is_connected(&self) -> bool {
        self.hop_distances()[0].iter().all(|&d| d != usize::MAX)
    }

    pub fn loads_mw(&self) -> Vec<f64> {
        self.buses.iter().map(|b| b.load_mw).collect()
    }

    pub fn total_load_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.load_mw).sum()
    }

    /// Position of the first generator's bus, the default PTDF slack.
    pub fn default_slack(&self) -> usize {
        self.generators.first().map(|g| self.pos(g.bus)).unwrap_or(0)
    }

    /// Returns a copy with bus ids replaced through `map`. Bus order, and
    /// hence state order, is unchanged.
    pub fn relabeled(&self, map: &HashMap<usize, usize>) -> Result<Self, GridError> {
        let m = |id: usize| map.get(&id).copied().unwrap_or(id);
        let buses = self.buses.iter().map(|b| Bus { id: m(b.id), ..b.clone() }).collect();
        let branches = self
            .branches
            .iter()
            .map(|br| Branch { from_bus: m(br.from_bus), to_bus: m(br.to_bus), ..br.clone() })
            .collect();
        let generators = self.generators.iter().map(|g| Generator { bus: m(g.bus), ..g.clone() }).collect();
        Self::new(self.base_mva, buses, branches, generators)
    }
}
