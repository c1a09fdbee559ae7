//! Network case data: parsing MATPOWER-style case files, per-unit
//! normalization, the admittance and Hermitian injection/flow matrices, and
//! low-impedance preprocessing.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::polymodel::{ComplexMonomial, PolyC, PolyR, RealMonomial};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusType {
    Pq,
    Pv,
    Ref,
}

/// Per-bus data, all quantities in per unit on the system base.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    /// External (file) bus id.
    pub ext_id: u64,
    pub bus_type: BusType,
    pub pd: f64,
    pub qd: f64,
    /// Shunt conductance/susceptance.
    pub gs: f64,
    pub bs: f64,
    pub vmin: f64,
    pub vmax: f64,
}

/// Generator box limits and quadratic cost, per unit except cost coefficients
/// which are in $/hr over per-unit power (c2 pu^-2, c1 pu^-1, c0).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenRecord {
    pub bus: usize,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
    /// Set when low-impedance merging combined generators whose nonzero cost
    /// curves cannot be exactly aggregated; cost-mode assembly rejects these.
    pub cost_merged: bool,
}

/// Branch data in per unit. `b_sh` is the charging susceptance per line end
/// (half the MATPOWER total), `tau` the tap magnitude (1 when absent), and
/// `theta` the phase shift in radians. `s_max` = 0 means unconstrained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b_sh: f64,
    pub tau: f64,
    pub theta: f64,
    pub s_max: f64,
}

impl LineRecord {
    pub fn series_admittance(&self) -> Complex64 {
        Complex64::new(1.0, 0.0) / Complex64::new(self.r, self.x)
    }

    pub fn impedance_magnitude(&self) -> f64 {
        (self.r * self.r + self.x * self.x).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<BusRecord>,
    pub gens: Vec<GenRecord>,
    pub lines: Vec<LineRecord>,
    pub ref_bus: usize,
    /// Reference voltage angle in radians (Eq. 1f's fixed phasor angle).
    pub ref_angle: f64,
}

impl NetworkCase {
    pub fn n(&self) -> usize {
        self.buses.len()
    }

    pub fn gen_at(&self, bus: usize) -> Option<&GenRecord> {
        self.gens.iter().find(|g| g.bus == bus)
    }

    /// Canonical JSON serialization.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Semantic {
            what: "case JSON".into(),
            msg: e.to_string(),
        })
    }

    /// Check structural invariants; used after parsing and preprocessing.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.base_mva <= 0.0 {
            return Err(semantic("baseMVA", "must be positive"));
        }
        if self.ref_bus >= n {
            return Err(semantic("ref bus", "index out of range"));
        }
        if self.buses[self.ref_bus].bus_type != BusType::Ref {
            return Err(semantic("ref bus", "type flag is not ref"));
        }
        if self.buses.iter().filter(|b| b.bus_type == BusType::Ref).count() != 1 {
            return Err(semantic("bus table", "exactly one reference bus required"));
        }
        for (i, b) in self.buses.iter().enumerate() {
            if b.vmin > b.vmax {
                return Err(Error::InfeasibleBounds { bus: i, vmin: b.vmin, vmax: b.vmax });
            }
            if b.vmax <= 0.0 {
                return Err(semantic("bus table", format!("bus {i}: V_max must be positive")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for g in &self.gens {
            if g.bus >= n {
                return Err(semantic("gen table", "bus index out of range"));
            }
            if !seen.insert(g.bus) {
                return Err(semantic(
                    "gen table",
                    format!("more than one in-service generator at bus {}", g.bus),
                ));
            }
            if g.c2 < 0.0 {
                return Err(semantic("gencost", format!("bus {}: c2 < 0", g.bus)));
            }
            if g.pmin > g.pmax || g.qmin > g.qmax {
                return Err(semantic("gen table", format!("bus {}: empty limit box", g.bus)));
            }
        }
        for (i, l) in self.lines.iter().enumerate() {
            if l.from >= n || l.to >= n || l.from == l.to {
                return Err(semantic("branch table", format!("line {i}: bad endpoints")));
            }
            if l.r * l.r + l.x * l.x == 0.0 {
                return Err(semantic("branch table", format!("line {i}: zero impedance")));
            }
            if l.tau <= 0.0 {
                return Err(semantic("branch table", format!("line {i}: tap must be positive")));
            }
        }
        // connectivity over in-service lines
        if n > 1 {
            let mut adj = vec![Vec::new(); n];
            for l in &self.lines {
                adj[l.from].push(l.to);
                adj[l.to].push(l.from);
            }
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            if seen.iter().any(|&s| !s) {
                return Err(semantic("case", "network is not connected"));
            }
        }
        Ok(())
    }
}

fn semantic(what: &str, msg: impl Into<String>) -> Error {
    Error::Semantic { what: what.into(), msg: msg.into() }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Parse a MATPOWER-style case file (bus, gen, branch, gencost tables with
/// polynomial costs). All quantities are converted to per unit on baseMVA.
pub fn parse_case(text: &str) -> Result<NetworkCase> {
    let mut name = String::from("case");
    let mut base_mva: Option<f64> = None;
    let mut tables: std::collections::BTreeMap<String, Vec<(usize, Vec<f64>)>> =
        std::collections::BTreeMap::new();

    let mut current: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = match raw.find('%') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("function") {
            if let Some(eq) = rest.find('=') {
                name = rest[eq + 1..].trim().trim_end_matches(';').trim().to_string();
            }
            continue;
        }
        if let Some(table) = &current {
            if line.starts_with("];") || line == "]" {
                current = None;
                continue;
            }
            let mut nums = Vec::new();
            for tok in line
                .trim_end_matches(';')
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
            {
                let v: f64 = tok.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("expected a number, found {tok:?}"),
                })?;
                nums.push(v);
            }
            if !nums.is_empty() {
                tables.get_mut(table).unwrap().push((lineno, nums));
            }
            if line.ends_with("];") {
                current = None;
            }
            continue;
        }
        if line.starts_with("mpc.version") {
            continue;
        }
        if let Some(rest) = line.strip_prefix("mpc.baseMVA") {
            let rest = rest.trim_start_matches([' ', '=']).trim_end_matches(';').trim();
            base_mva = Some(rest.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad baseMVA value {rest:?}"),
            })?);
            continue;
        }
        if let Some(rest) = line.strip_prefix("mpc.") {
            if let Some(br) = rest.find('=') {
                let field = rest[..br].trim().to_string();
                let after = rest[br + 1..].trim();
                if after.starts_with('[') {
                    tables.insert(field.clone(), Vec::new());
                    if !after.trim_start_matches('[').trim().is_empty() {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: "table rows must start on their own line".into(),
                        });
                    }
                    current = Some(field);
                    continue;
                }
                // scalar fields other than baseMVA are ignored
                continue;
            }
        }
        return Err(Error::Parse { line: lineno, msg: format!("unrecognized line {line:?}") });
    }
    if current.is_some() {
        return Err(Error::Parse { line: text.lines().count(), msg: "unterminated table".into() });
    }

    let base = base_mva.ok_or_else(|| semantic("case", "missing baseMVA"))?;
    if base <= 0.0 {
        return Err(semantic("baseMVA", "must be positive"));
    }
    let bus_rows = tables.remove("bus").ok_or_else(|| semantic("case", "missing bus table"))?;
    let gen_rows = tables.remove("gen").unwrap_or_default();
    let branch_rows =
        tables.remove("branch").ok_or_else(|| semantic("case", "missing branch table"))?;
    let gencost_rows = tables.remove("gencost").unwrap_or_default();

    // bus table: BUS_I TYPE PD QD GS BS AREA VM VA BASEKV ZONE VMAX VMIN
    let mut buses = Vec::new();
    let mut id_map = std::collections::BTreeMap::new();
    let mut ref_bus = None;
    let mut ref_angle = 0.0;
    for (lineno, row) in &bus_rows {
        if row.len() < 13 {
            return Err(Error::Parse { line: *lineno, msg: "bus row needs 13 columns".into() });
        }
        let ext_id = row[0] as u64;
        let idx = buses.len();
        if id_map.insert(ext_id, idx).is_some() {
            return Err(semantic("bus table", format!("duplicate bus id {ext_id}")));
        }
        let bus_type = match row[1] as i64 {
            1 => BusType::Pq,
            2 => BusType::Pv,
            3 => {
                if ref_bus.is_some() {
                    return Err(semantic("bus table", "more than one reference bus"));
                }
                ref_bus = Some(idx);
                ref_angle = row[8].to_radians();
                BusType::Ref
            }
            4 => return Err(semantic("bus table", format!("bus {ext_id} is isolated (type 4)"))),
            t => return Err(semantic("bus table", format!("bus {ext_id}: unknown type {t}"))),
        };
        buses.push(BusRecord {
            ext_id,
            bus_type,
            pd: row[2] / base,
            qd: row[3] / base,
            gs: row[4] / base,
            bs: row[5] / base,
            vmax: row[11],
            vmin: row[12],
        });
    }
    let ref_bus = ref_bus.ok_or_else(|| semantic("bus table", "no reference (type 3) bus"))?;

    // gen table: BUS PG QG QMAX QMIN VG MBASE STATUS PMAX PMIN ...
    let mut gens = Vec::new();
    let mut gen_row_live = Vec::new();
    for (lineno, row) in &gen_rows {
        if row.len() < 10 {
            return Err(Error::Parse { line: *lineno, msg: "gen row needs 10 columns".into() });
        }
        let live = row[7] > 0.0;
        gen_row_live.push(live);
        if !live {
            continue;
        }
        let bus = *id_map
            .get(&(row[0] as u64))
            .ok_or_else(|| semantic("gen table", format!("unknown bus id {}", row[0])))?;
        gens.push(GenRecord {
            bus,
            pmin: row[9] / base,
            pmax: row[8] / base,
            qmin: row[4] / base,
            qmax: row[3] / base,
            c2: 0.0,
            c1: 0.0,
            c0: 0.0,
            cost_merged: false,
        });
    }

    // gencost table: MODEL STARTUP SHUTDOWN NCOST c(n-1) ... c0
    if !gencost_rows.is_empty() {
        if gencost_rows.len() != gen_rows.len() {
            return Err(semantic(
                "gencost",
                format!(
                    "expected one row per generator ({}), found {}",
                    gen_rows.len(),
                    gencost_rows.len()
                ),
            ));
        }
        let mut live_idx = 0usize;
        for (i, (lineno, row)) in gencost_rows.iter().enumerate() {
            if !gen_row_live[i] {
                continue;
            }
            if row.len() < 4 {
                return Err(Error::Parse { line: *lineno, msg: "gencost row too short".into() });
            }
            if row[0] as i64 != 2 {
                return Err(semantic(
                    "gencost",
                    "only polynomial cost model (MODEL = 2) is supported",
                ));
            }
            let ncost = row[3] as usize;
            if row.len() < 4 + ncost {
                return Err(Error::Parse { line: *lineno, msg: "gencost row too short".into() });
            }
            if ncost > 3 {
                return Err(semantic("gencost", "cost degree above quadratic is unsupported"));
            }
            let coeffs = &row[4..4 + ncost];
            let (c2, c1, c0) = match ncost {
                3 => (coeffs[0], coeffs[1], coeffs[2]),
                2 => (0.0, coeffs[0], coeffs[1]),
                1 => (0.0, 0.0, coeffs[0]),
                _ => (0.0, 0.0, 0.0),
            };
            if c2 < 0.0 {
                return Err(semantic("gencost", format!("row {}: c2 < 0", i + 1)));
            }
            // convert from MW-domain to per-unit-power-domain coefficients
            let g = &mut gens[live_idx];
            g.c2 = c2 * base * base;
            g.c1 = c1 * base;
            g.c0 = c0;
            live_idx += 1;
        }
    }

    // branch table: F T R X B RATEA RATEB RATEC RATIO ANGLE STATUS ...
    let mut lines = Vec::new();
    for (lineno, row) in &branch_rows {
        if row.len() < 11 {
            return Err(Error::Parse { line: *lineno, msg: "branch row needs 11 columns".into() });
        }
        if row[10] == 0.0 {
            continue;
        }
        let from = *id_map
            .get(&(row[0] as u64))
            .ok_or_else(|| semantic("branch table", format!("unknown bus id {}", row[0])))?;
        let to = *id_map
            .get(&(row[1] as u64))
            .ok_or_else(|| semantic("branch table", format!("unknown bus id {}", row[1])))?;
        let tau = if row[8] == 0.0 { 1.0 } else { row[8] };
        lines.push(LineRecord {
            from,
            to,
            r: row[2],
            x: row[3],
            b_sh: row[4] / 2.0,
            tau,
            theta: row[9].to_radians(),
            s_max: row[5] / base,
        });
    }

    let case = NetworkCase { name, base_mva: base, buses, gens, lines, ref_bus, ref_angle };
    case.validate()?;
    Ok(case)
}

// ---------------------------------------------------------------------------
// Hermitian matrix construction
// ---------------------------------------------------------------------------

type CMat = DMatrix<Complex64>;

/// Admittance matrix plus the Hermitian injection matrices and directed flow
/// matrices of the OPF formulation.
pub struct HermitianMatrixSet {
    pub y: CMat,
    /// Active-injection matrices: V^H H_k V = net active injection at k.
    pub h: Vec<CMat>,
    /// Reactive-injection matrices.
    pub ht: Vec<CMat>,
    /// Directed flow matrices: V^H F V = S_from->to for each entry, two per
    /// line (forward and reverse).
    pub flows: Vec<FlowMatrix>,
}

pub struct FlowMatrix {
    /// Index into `case.lines`.
    pub line: usize,
    pub from: usize,
    pub to: usize,
    pub f: CMat,
}

pub fn build_matrices(case: &NetworkCase) -> HermitianMatrixSet {
    let n = case.n();
    let mut y = CMat::zeros(n, n);
    for l in &case.lines {
        let ys = l.series_admittance();
        let sh = Complex64::new(0.0, l.b_sh);
        let tap = Complex64::from_polar(l.tau, l.theta);
        let t2 = l.tau * l.tau;
        y[(l.from, l.from)] += (ys + sh) / t2;
        y[(l.from, l.to)] += -ys / tap.conj();
        y[(l.to, l.from)] += -ys / tap;
        y[(l.to, l.to)] += ys + sh;
    }
    for (k, b) in case.buses.iter().enumerate() {
        y[(k, k)] += Complex64::new(b.gs, b.bs);
    }

    let mut h = Vec::with_capacity(n);
    let mut ht = Vec::with_capacity(n);
    for k in 0..n {
        // H_k = (Y^H e_k e_k^T + e_k e_k^T Y)/2
        // Ht_k = (Y^H e_k e_k^T - e_k e_k^T Y)/(2i)
        let mut hk = CMat::zeros(n, n);
        let mut htk = CMat::zeros(n, n);
        let half = Complex64::new(0.5, 0.0);
        let half_over_i = Complex64::new(0.0, -0.5); // 1/(2i)
        for i in 0..n {
            let yki = y[(k, i)];
            hk[(i, k)] += yki.conj() * half;
            hk[(k, i)] += yki * half;
            htk[(i, k)] += yki.conj() * half_over_i;
            htk[(k, i)] -= yki * half_over_i;
        }
        h.push(hk);
        ht.push(htk);
    }

    let mut flows = Vec::new();
    for (li, l) in case.lines.iter().enumerate() {
        let ys = l.series_admittance();
        let sh = Complex64::new(0.0, l.b_sh);
        let tap = Complex64::from_polar(l.tau, l.theta);
        let t2 = l.tau * l.tau;
        let yff = (ys + sh) / t2;
        let yft = -ys / tap.conj();
        let ytf = -ys / tap;
        let ytt = ys + sh;
        // S_lm = conj(Y_ff)|V_l|^2 + conj(Y_ft) V_l conj(V_m) = V^H F_lm V
        let mut fwd = CMat::zeros(n, n);
        fwd[(l.from, l.from)] = yff.conj();
        fwd[(l.to, l.from)] = yft.conj();
        flows.push(FlowMatrix { line: li, from: l.from, to: l.to, f: fwd });
        let mut rev = CMat::zeros(n, n);
        rev[(l.to, l.to)] = ytt.conj();
        rev[(l.from, l.to)] = ytf.conj();
        flows.push(FlowMatrix { line: li, from: l.to, to: l.from, f: rev });
    }

    HermitianMatrixSet { y, h, ht, flows }
}

impl HermitianMatrixSet {
    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    /// Largest deviation from Hermitian symmetry across all H/Ht matrices.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for m in self.h.iter().chain(self.ht.iter()) {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
                }
            }
        }
        worst
    }
}

/// Net complex injection S_k = V_k * conj((YV)_k) at every bus; the
/// independent oracle form of the power-flow equations.
pub fn injections(y: &CMat, v: &[Complex64]) -> Vec<Complex64> {
    let n = v.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            acc += y[(k, j)] * v[j];
        }
        out.push(v[k] * acc.conj());
    }
    out
}

/// Quadratic form V^H M V.
pub fn quad_form(m: &CMat, v: &[Complex64]) -> Complex64 {
    let n = v.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += v[i].conj() * m[(i, j)] * v[j];
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// Polynomials of the formulation
// ---------------------------------------------------------------------------

/// Maps bus indices to the real variable layout [V_d.., V_q.. (ref dropped)].
#[derive(Clone, Debug)]
pub struct VarLayout {
    pub n: usize,
    pub ref_bus: usize,
}

impl VarLayout {
    pub fn new(n: usize, ref_bus: usize) -> Self {
        VarLayout { n, ref_bus }
    }

    /// Number of real variables, 2n - 1.
    pub fn m(&self) -> usize {
        2 * self.n - 1
    }

    pub fn vd(&self, bus: usize) -> usize {
        bus
    }

    pub fn vq(&self, bus: usize) -> Option<usize> {
        use std::cmp::Ordering::*;
        match bus.cmp(&self.ref_bus) {
            Equal => None,
            Less => Some(self.n + bus),
            Greater => Some(self.n + bus - 1),
        }
    }

    /// Real variables of a set of buses, ascending.
    pub fn vars_for(&self, buses: &[usize]) -> Vec<usize> {
        let mut vars: Vec<usize> = buses.iter().map(|&b| self.vd(b)).collect();
        vars.extend(buses.iter().filter_map(|&b| self.vq(b)));
        vars.sort_unstable();
        vars
    }

    /// Voltage phasors from a real variable vector.
    pub fn to_phasors(&self, xi: &[f64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|k| {
                let re = xi[self.vd(k)];
                let im = self.vq(k).map_or(0.0, |q| xi[q]);
                Complex64::new(re, im)
            })
            .collect()
    }

    /// Real variable vector from voltage phasors; the reference bus's
    /// imaginary part is dropped (callers should rotate it to zero first).
    pub fn from_phasors(&self, v: &[Complex64]) -> Vec<f64> {
        let mut xi = vec![0.0; self.m()];
        for k in 0..self.n {
            xi[self.vd(k)] = v[k].re;
            if let Some(q) = self.vq(k) {
                xi[q] = v[k].im;
            }
        }
        xi
    }
}

/// Hermitian quadratic V^H M V as a complex polynomial: term M[i][j] on
/// zeta_j * conj(zeta_i).
pub fn quad_poly(m: &CMat) -> PolyC {
    let n = m.nrows();
    let mut p = PolyC::new();
    for i in 0..n {
        for j in 0..n {
            let c = m[(i, j)];
            if c != Complex64::new(0.0, 0.0) {
                let mut alpha = vec![0u8; n];
                let mut beta = vec![0u8; n];
                alpha[j] += 1;
                beta[i] += 1;
                p.add_term(ComplexMonomial::new(alpha, beta), c);
            }
        }
    }
    p
}

/// Substitute zeta_k = V_dk + i V_qk (V_q of the reference bus = 0) to turn a
/// complex polynomial into a polynomial over the real components. The input
/// must be real-valued (Hermitian); the imaginary residue is checked.
pub fn complex_to_real(p: &PolyC, layout: &VarLayout) -> PolyR {
    use std::collections::BTreeMap;
    let m = layout.m();
    let mut scale = 0.0_f64;
    let mut result: BTreeMap<RealMonomial, Complex64> = BTreeMap::new();
    for (mono, coeff) in p.terms() {
        scale = scale.max(coeff.norm());
        // expand prod_k (vd + i vq)^alpha_k (vd - i vq)^beta_k
        let mut terms: BTreeMap<RealMonomial, Complex64> = BTreeMap::new();
        terms.insert(RealMonomial::constant(m), coeff);
        for k in 0..layout.n {
            let reps = mono.alpha()[k] as usize;
            for _ in 0..reps {
                terms = mul_linear(&terms, layout, k, Complex64::new(0.0, 1.0));
            }
            let reps = mono.beta()[k] as usize;
            for _ in 0..reps {
                terms = mul_linear(&terms, layout, k, Complex64::new(0.0, -1.0));
            }
        }
        for (m2, c2) in terms {
            *result.entry(m2).or_insert(Complex64::new(0.0, 0.0)) += c2;
        }
    }
    let mut out = PolyR::new();
    let tol = 1e-9 * scale.max(1.0);
    for (mono, c) in result {
        assert!(
            c.im.abs() <= tol,
            "imaginary residue {} in real conversion (polynomial not real-valued?)",
            c.im
        );
        if c.re.abs() > 1e-14 * scale.max(1.0) {
            out.add_term(mono, c.re);
        }
    }
    out
}

/// Multiply a complex-coefficient real-monomial polynomial by
/// (V_dk + j_sign * V_qk), with V_q eliminated at the reference bus.
fn mul_linear(
    terms: &std::collections::BTreeMap<RealMonomial, Complex64>,
    layout: &VarLayout,
    bus: usize,
    j_sign: Complex64,
) -> std::collections::BTreeMap<RealMonomial, Complex64> {
    let m = layout.m();
    let mut out = std::collections::BTreeMap::new();
    let vd = RealMonomial::var(m, layout.vd(bus));
    let vq = layout.vq(bus).map(|q| RealMonomial::var(m, q));
    for (mono, c) in terms {
        *out.entry(mono.mul(&vd)).or_insert(Complex64::new(0.0, 0.0)) += c;
        if let Some(vq) = &vq {
            *out.entry(mono.mul(vq)).or_insert(Complex64::new(0.0, 0.0)) += c * j_sign;
        }
    }
    out
}

/// Objective data for the two supported modes.
pub enum ObjectivePoly {
    /// Total active injection `sum_k (V^H H_k V + P_Dk)`; equals network
    /// losses plus the fixed total load. Degree 2, Hermitian.
    Loss(PolyC),
    /// Per-generator quadratic costs over the active injection polynomial.
    Cost(Vec<CostTerm>),
}

pub struct CostTerm {
    pub bus: usize,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
    /// Injection polynomial V^H H_k V at this generator's bus; generation is
    /// this plus P_D.
    pub injection: PolyC,
    pub pd: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveMode {
    Cost,
    Loss,
}

pub fn objective_polynomial(
    case: &NetworkCase,
    mats: &HermitianMatrixSet,
    mode: ObjectiveMode,
) -> Result<ObjectivePoly> {
    match mode {
        ObjectiveMode::Loss => {
            let n = case.n();
            let mut p = PolyC::new();
            let mut total_pd = 0.0;
            for k in 0..n {
                p = p.add(&quad_poly(&mats.h[k]));
                total_pd += case.buses[k].pd;
            }
            p.add_term(ComplexMonomial::constant(n), Complex64::new(total_pd, 0.0));
            Ok(ObjectivePoly::Loss(p))
        }
        ObjectiveMode::Cost => {
            let mut terms = Vec::new();
            for g in &case.gens {
                if g.cost_merged {
                    return Err(semantic(
                        "objective",
                        format!(
                            "bus {}: merged generators carry incompatible cost curves; \
                             use the loss objective or skip low-impedance preprocessing",
                            g.bus
                        ),
                    ));
                }
                terms.push(CostTerm {
                    bus: g.bus,
                    c2: g.c2,
                    c1: g.c1,
                    c0: g.c0,
                    injection: quad_poly(&mats.h[g.bus]),
                    pd: case.buses[g.bus].pd,
                });
            }
            Ok(ObjectivePoly::Cost(terms))
        }
    }
}

// ---------------------------------------------------------------------------
// Low-impedance preprocessing
// ---------------------------------------------------------------------------

/// Result of preprocessing: the reduced case and, per original bus, the index
/// of the bus it maps to in the reduced case.
pub struct PreprocessResult {
    pub case: NetworkCase,
    pub bus_map: Vec<usize>,
}

/// Merge buses joined by lines with `|R + jX| < threshold`. Loads, shunts,
/// and generator limit boxes of merged buses are summed; voltage boxes are
/// intersected; the charging of removed lines lands on the merged bus's
/// shunt. Parallel lines with matching tap and shift are combined. Repeats to
/// a fixpoint, so the result has no line below the threshold and the
/// operation is idempotent.
pub fn preprocess_low_impedance(case: &NetworkCase, threshold: f64) -> Result<PreprocessResult> {
    let mut current = case.clone();
    let mut bus_map: Vec<usize> = (0..case.n()).collect();
    loop {
        let (next, step_map, changed) = merge_step(&current, threshold)?;
        for slot in bus_map.iter_mut() {
            *slot = step_map[*slot];
        }
        current = next;
        if !changed {
            break;
        }
    }
    current.validate()?;
    Ok(PreprocessResult { case: current, bus_map })
}

fn merge_step(case: &NetworkCase, threshold: f64) -> Result<(NetworkCase, Vec<usize>, bool)> {
    let n = case.n();
    // union-find over low-impedance lines
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut any = false;
    for l in &case.lines {
        if l.impedance_magnitude() < threshold {
            let a = find(&mut parent, l.from);
            let b = find(&mut parent, l.to);
            if a != b {
                parent[a.max(b)] = a.min(b);
                any = true;
            }
        }
    }
    if !any {
        return Ok((case.clone(), (0..n).collect(), false));
    }

    // group representatives in ascending order of their smallest member
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut new_index = vec![0usize; n];
    for (new_id, (_, members)) in groups.iter().enumerate() {
        for &m in members {
            new_index[m] = new_id;
        }
    }

    // guard: a merge may not join two reference-typed buses
    for members in groups.values() {
        let refs = members
            .iter()
            .filter(|&&b| case.buses[b].bus_type == BusType::Ref)
            .count();
        if refs > 1 {
            return Err(semantic(
                "preprocess",
                "merging would join two reference buses".to_string(),
            ));
        }
    }

    let mut buses = Vec::with_capacity(groups.len());
    for members in groups.values() {
        let first = &case.buses[members[0]];
        let mut b = BusRecord {
            ext_id: case.buses[*members.iter().min().unwrap()].ext_id,
            bus_type: first.bus_type,
            pd: 0.0,
            qd: 0.0,
            gs: 0.0,
            bs: 0.0,
            vmin: f64::NEG_INFINITY,
            vmax: f64::INFINITY,
        };
        for &midx in members {
            let src = &case.buses[midx];
            b.pd += src.pd;
            b.qd += src.qd;
            b.gs += src.gs;
            b.bs += src.bs;
            b.vmin = b.vmin.max(src.vmin);
            b.vmax = b.vmax.min(src.vmax);
            if src.bus_type == BusType::Ref {
                b.bus_type = BusType::Ref;
            } else if src.bus_type == BusType::Pv && b.bus_type == BusType::Pq {
                b.bus_type = BusType::Pv;
            }
        }
        if b.vmin > b.vmax {
            return Err(Error::InfeasibleBounds {
                bus: buses.len(),
                vmin: b.vmin,
                vmax: b.vmax,
            });
        }
        buses.push(b);
    }

    // generators: sum limit boxes within each merged bus
    let mut gen_by_bus: std::collections::BTreeMap<usize, GenRecord> = std::collections::BTreeMap::new();
    for g in &case.gens {
        let nb = new_index[g.bus];
        match gen_by_bus.get_mut(&nb) {
            None => {
                let mut g2 = g.clone();
                g2.bus = nb;
                gen_by_bus.insert(nb, g2);
            }
            Some(existing) => {
                existing.pmin += g.pmin;
                existing.pmax += g.pmax;
                existing.qmin += g.qmin;
                existing.qmax += g.qmax;
                existing.c0 += g.c0;
                let existing_curved = existing.c1 != 0.0 || existing.c2 != 0.0;
                let incoming_curved = g.c1 != 0.0 || g.c2 != 0.0;
                if existing_curved && incoming_curved {
                    existing.cost_merged = true;
                } else if incoming_curved {
                    existing.c1 = g.c1;
                    existing.c2 = g.c2;
                }
                existing.cost_merged |= g.cost_merged;
            }
        }
    }
    let gens: Vec<GenRecord> = gen_by_bus.into_values().collect();

    // lines: drop collapsed ones (charging goes to the merged bus's shunt),
    // remap endpoints, then combine parallels with matching tap/shift
    let mut lines: Vec<LineRecord> = Vec::new();
    for l in &case.lines {
        let nf = new_index[l.from];
        let nt = new_index[l.to];
        if nf == nt {
            buses[nf].bs += l.b_sh / (l.tau * l.tau) + l.b_sh;
            continue;
        }
        let mut l2 = l.clone();
        l2.from = nf;
        l2.to = nt;
        lines.push(l2);
    }
    let mut combined: Vec<LineRecord> = Vec::new();
    'outer: for l in lines {
        for c in combined.iter_mut() {
            let same_fwd = c.from == l.from && c.to == l.to && c.tau == l.tau && c.theta == l.theta;
            if same_fwd {
                // parallel series impedances: z = z1 z2 / (z1 + z2)
                let z1 = Complex64::new(c.r, c.x);
                let z2 = Complex64::new(l.r, l.x);
                let z = z1 * z2 / (z1 + z2);
                c.r = z.re;
                c.x = z.im;
                c.b_sh += l.b_sh;
                c.s_max = if c.s_max == 0.0 || l.s_max == 0.0 { 0.0 } else { c.s_max + l.s_max };
                continue 'outer;
            }
        }
        combined.push(l);
    }

    let ref_bus = buses
        .iter()
        .position(|b| b.bus_type == BusType::Ref)
        .ok_or_else(|| semantic("preprocess", "reference bus lost in merge"))?;

    let merged = NetworkCase {
        name: case.name.clone(),
        base_mva: case.base_mva,
        buses,
        gens,
        lines: combined,
        ref_bus,
        ref_angle: case.ref_angle,
    };
    Ok((merged, new_index, any))
}
