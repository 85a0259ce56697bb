//! Grid case model: buses, branches, case documents, and parameter perturbation.
//!
//! A [`GridCase`] is immutable after construction. Buses are renumbered to a
//! contiguous 0-based internal index at load time; the external bus ids from
//! the source document are kept for I/O and error messages. Branch endpoints
//! are stored as internal indices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const CASE3_JSON: &str = include_str!("../cases/case3.json");
const CASE14_JSON: &str = include_str!("../cases/case14.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    /// External bus id as given in the case document.
    pub index: usize,
    pub kind: BusKind,
    /// Active load demand, p.u. on `base_mva`.
    pub p_load: f64,
    /// Reactive load demand, p.u.
    pub q_load: f64,
    /// Scheduled active generation, p.u.
    pub p_gen: f64,
    /// Voltage magnitude setpoint for slack/PV buses.
    pub v_setpoint: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    /// Internal (0-based) from-bus index.
    pub from_bus: usize,
    /// Internal (0-based) to-bus index.
    pub to_bus: usize,
    /// Series resistance, p.u.
    pub r: f64,
    /// Series reactance, p.u. Never zero.
    pub x: f64,
    /// Total line charging susceptance, p.u.
    pub b_shunt: f64,
}

impl BranchRecord {
    /// Series admittance (g, b) = (r, -x) / (r^2 + x^2).
    pub fn series_admittance(&self) -> (f64, f64) {
        let d = self.r * self.r + self.x * self.x;
        (self.r / d, -self.x / d)
    }
}

/// Which line parameters a perturbation touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbScope {
    RAndX,
    XOnly,
}

/// Modeling-error specification: every in-scope parameter v becomes
/// v * (1 + u) with u drawn uniformly from [-delta, +delta].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub delta: f64,
    pub seed: u64,
    pub scope: PerturbScope,
}

impl PerturbSpec {
    pub fn new(delta: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::Validation(format!(
                "perturbation delta must lie in [0, 1], got {delta}"
            )));
        }
        Ok(PerturbSpec {
            delta,
            seed,
            scope: PerturbScope::RAndX,
        })
    }

    pub fn with_scope(mut self, scope: PerturbScope) -> Self {
        self.scope = scope;
        self
    }
}

/// A validated, internally renumbered power-grid case.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCase {
    id: String,
    base_mva: f64,
    buses: Vec<BusRecord>,
    branches: Vec<BranchRecord>,
    slack: usize,
    layout_hash: String,
}

// ---------------------------------------------------------------------------
// Case document (the external JSON schema)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseDocument {
    #[serde(default)]
    pub id: Option<String>,
    pub base_mva: f64,
    pub buses: Vec<BusDocRecord>,
    pub branches: Vec<BranchDocRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusDocRecord {
    pub index: usize,
    pub kind: BusKind,
    pub p_load: f64,
    pub q_load: f64,
    pub p_gen: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_setpoint: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchDocRecord {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b_shunt: f64,
}

/// Parse and validate a case document from JSON text.
pub fn load_case(json: &str) -> Result<GridCase> {
    let doc: CaseDocument =
        serde_json::from_str(json).map_err(|e| Error::Schema(format!("case document: {e}")))?;
    GridCase::from_document(doc)
}

/// Load a case document from a file path.
pub fn load_case_file(path: &std::path::Path) -> Result<GridCase> {
    let text = std::fs::read_to_string(path)?;
    load_case(&text)
}

impl GridCase {
    /// The 3-bus, 3-branch demonstration system (resistances zero,
    /// reactances 0.0281, 0.0304, 0.0108).
    pub fn three_bus_demo() -> GridCase {
        load_case(CASE3_JSON).expect("embedded 3-bus case is valid")
    }

    /// The standard IEEE 14-bus test case (taps neutral, per-branch charging
    /// susceptances retained).
    pub fn ieee14() -> GridCase {
        load_case(CASE14_JSON).expect("embedded 14-bus case is valid")
    }

    /// Resolve a builtin case name, falling back to treating `name` as a path.
    pub fn builtin(name: &str) -> Option<GridCase> {
        match name {
            "case3" | "3bus" => Some(Self::three_bus_demo()),
            "case14" | "ieee14" => Some(Self::ieee14()),
            _ => None,
        }
    }

    pub fn from_document(doc: CaseDocument) -> Result<GridCase> {
        if doc.base_mva <= 0.0 || !doc.base_mva.is_finite() {
            return Err(Error::Validation(format!(
                "base_mva must be positive and finite, got {}",
                doc.base_mva
            )));
        }
        if doc.buses.is_empty() {
            return Err(Error::Validation("case has no buses".into()));
        }

        // External id -> internal index map; document order defines numbering.
        let mut ext_to_int = std::collections::HashMap::new();
        for (i, b) in doc.buses.iter().enumerate() {
            if ext_to_int.insert(b.index, i).is_some() {
                return Err(Error::Validation(format!("duplicate bus index {}", b.index)));
            }
        }

        let mut slack = None;
        let mut buses = Vec::with_capacity(doc.buses.len());
        for (i, b) in doc.buses.iter().enumerate() {
            match b.kind {
                BusKind::Slack => {
                    if slack.is_some() {
                        return Err(Error::Validation(format!(
                            "more than one slack bus (bus {})",
                            b.index
                        )));
                    }
                    slack = Some(i);
                }
                BusKind::Pv => {}
                BusKind::Pq => {}
            }
            if matches!(b.kind, BusKind::Slack | BusKind::Pv) {
                match b.v_setpoint {
                    Some(v) if v > 0.0 && v.is_finite() => {}
                    _ => {
                        return Err(Error::Validation(format!(
                            "bus {}: {} bus requires a positive v_setpoint",
                            b.index,
                            if b.kind == BusKind::Slack { "slack" } else { "pv" }
                        )))
                    }
                }
            }
            for (name, v) in [("p_load", b.p_load), ("q_load", b.q_load), ("p_gen", b.p_gen)] {
                if !v.is_finite() {
                    return Err(Error::Validation(format!(
                        "bus {}: non-finite {name}",
                        b.index
                    )));
                }
            }
            buses.push(BusRecord {
                index: b.index,
                kind: b.kind,
                p_load: b.p_load,
                q_load: b.q_load,
                p_gen: b.p_gen,
                v_setpoint: b.v_setpoint,
            });
        }
        let slack =
            slack.ok_or_else(|| Error::Validation("missing slack bus designation".into()))?;

        let mut branches = Vec::with_capacity(doc.branches.len());
        for (k, br) in doc.branches.iter().enumerate() {
            let from = *ext_to_int.get(&br.from).ok_or_else(|| {
                Error::Validation(format!("branch {k}: unknown bus {}", br.from))
            })?;
            let to = *ext_to_int
                .get(&br.to)
                .ok_or_else(|| Error::Validation(format!("branch {k}: unknown bus {}", br.to)))?;
            if from == to {
                return Err(Error::Validation(format!(
                    "branch {k}: endpoints must be two distinct buses (bus {})",
                    br.from
                )));
            }
            if br.x == 0.0 || !br.x.is_finite() {
                return Err(Error::Validation(format!(
                    "branch {k} ({}-{}): reactance must be nonzero and finite, got {}",
                    br.from, br.to, br.x
                )));
            }
            if br.r < 0.0 || !br.r.is_finite() {
                return Err(Error::Validation(format!(
                    "branch {k} ({}-{}): resistance must be nonnegative, got {}",
                    br.from, br.to, br.r
                )));
            }
            if !br.b_shunt.is_finite() {
                return Err(Error::Validation(format!(
                    "branch {k} ({}-{}): non-finite b_shunt",
                    br.from, br.to
                )));
            }
            branches.push(BranchRecord {
                from_bus: from,
                to_bus: to,
                r: br.r,
                x: br.x,
                b_shunt: br.b_shunt,
            });
        }

        // Connectivity: BFS over the bus-branch graph from the slack.
        let n = buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in &branches {
            adj[br.from_bus].push(br.to_bus);
            adj[br.to_bus].push(br.from_bus);
        }
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::from([slack]);
        seen[slack] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Validation(format!(
                "graph not connected: bus {} unreachable from the slack",
                buses[i].index
            )));
        }

        let id = doc.id.unwrap_or_else(|| "unnamed".to_string());
        let layout_hash = layout_hash(&buses, &branches);
        Ok(GridCase {
            id,
            base_mva: doc.base_mva,
            buses,
            branches,
            slack,
            layout_hash,
        })
    }

    pub fn to_document(&self) -> CaseDocument {
        CaseDocument {
            id: Some(self.id.clone()),
            base_mva: self.base_mva,
            buses: self
                .buses
                .iter()
                .map(|b| BusDocRecord {
                    index: b.index,
                    kind: b.kind,
                    p_load: b.p_load,
                    q_load: b.q_load,
                    p_gen: b.p_gen,
                    v_setpoint: b.v_setpoint,
                })
                .collect(),
            branches: self
                .branches
                .iter()
                .map(|br| BranchDocRecord {
                    from: self.buses[br.from_bus].index,
                    to: self.buses[br.to_bus].index,
                    r: br.r,
                    x: br.x,
                    b_shunt: br.b_shunt,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("case document serializes")
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branch(&self) -> usize {
        self.branches.len()
    }

    /// Internal index of the slack bus.
    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn buses(&self) -> &[BusRecord] {
        &self.buses
    }

    pub fn branches(&self) -> &[BranchRecord] {
        &self.branches
    }

    pub fn bus(&self, internal: usize) -> &BusRecord {
        &self.buses[internal]
    }

    /// External id of an internal bus index.
    pub fn external_id(&self, internal: usize) -> usize {
        self.buses[internal].index
    }

    /// Internal index for an external bus id.
    pub fn internal_index(&self, external: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.index == external)
    }

    /// Hash of the measurement-relevant topology (bus ids, branch endpoints).
    /// Parameter perturbations do not change it, so source and target cases
    /// of one system share a layout.
    pub fn layout_hash(&self) -> &str {
        &self.layout_hash
    }

    /// Per-branch series admittances (g, b), in branch order.
    pub fn branch_admittances(&self) -> Vec<(f64, f64)> {
        self.branches.iter().map(|b| b.series_admittance()).collect()
    }

    /// Per-bus (p_load, q_load) pairs in internal order.
    pub fn base_loads(&self) -> Vec<(f64, f64)> {
        self.buses.iter().map(|b| (b.p_load, b.q_load)).collect()
    }
}

fn layout_hash(buses: &[BusRecord], branches: &[BranchRecord]) -> String {
    let mut hasher = Sha256::new();
    hasher.update((buses.len() as u64).to_le_bytes());
    hasher.update((branches.len() as u64).to_le_bytes());
    for b in buses {
        hasher.update((b.index as u64).to_le_bytes());
    }
    for br in branches {
        hasher.update((br.from_bus as u64).to_le_bytes());
        hasher.update((br.to_bus as u64).to_le_bytes());
    }
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Apply random multiplicative modeling errors to line parameters.
///
/// Each in-scope parameter v becomes v * (1 + u) with u ~ U[-delta, +delta],
/// drawn independently per branch and per parameter from a ChaCha stream
/// seeded by `spec.seed`. A draw that would zero out a reactance is redrawn.
pub fn perturb_case(case: &GridCase, spec: &PerturbSpec) -> Result<GridCase> {
    if !(0.0..=1.0).contains(&spec.delta) {
        return Err(Error::Validation(format!(
            "perturbation delta must lie in [0, 1], got {}",
            spec.delta
        )));
    }
    let mut out = case.clone();
    if spec.delta == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.delta;
    for (k, br) in out.branches.iter_mut().enumerate() {
        if spec.scope == PerturbScope::RAndX {
            let u: f64 = rng.random_range(-d..=d);
            br.r *= 1.0 + u;
        }
        let mut x_new = 0.0;
        let mut ok = false;
        for _ in 0..100 {
            let u: f64 = rng.random_range(-d..=d);
            x_new = br.x * (1.0 + u);
            if x_new != 0.0 {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::Validation(format!(
                "branch {k}: perturbation at delta={d} keeps producing zero reactance"
            )));
        }
        br.x = x_new;
    }
    out.id = format!("{}+delta{:.4}", case.id, spec.delta);
    Ok(out)
}
