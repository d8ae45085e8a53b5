//! Quantum causal models.
//!
//! Each node has an input space and an output space (possibly split into
//! subsystems). A node's channel maps selected parent output subsystems to
//! its input and is stored in Choi form `J = Σ E(|i⟩⟨j|) ⊗ |i⟩⟨j|` on
//! `node_in ⊗ sources`; root nodes carry a state on their input. The process
//! operator is the product of these factors, which must pairwise commute.
//! Outcome probabilities follow `P = Tr[σ (τ_1 ⊗ … ⊗ τ_n)]`, where `τ` is the
//! transposed Choi matrix of an instrument element laid out as `in ⊗ out`.

mod scenario;

pub use scenario::{
    bell_description, bell_scenario, bell_scenario_with, choi_of_channel, chsh_value, chsh_value_with, ewf_description,
    ewf_scenario, friend_isometry, friend_reversal_fidelity, matrix_rows, ChannelDesc, ChannelWiring, EwfOutcome,
    InstrumentDesc, InstrumentKind, MatrixRows, ScenarioDescription, StateDesc, TSIRELSON_ANGLES,
};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::quantum::{
    c, hermitian_eigenvalues, spectral_norm, strides, unitarity_deviation, CMatrix, C64, SPECTRAL_TOL,
};
use crate::{Error, Result};

/// Tolerance for CP, trace preservation and factor commutation.
pub const QCM_TOL: f64 = 1e-10;

/// Tolerance on the total probability of each setting combination.
pub const BORN_SUM_TOL: f64 = 1e-9;

/// Choi matrix of a linear map from `in_dim` to `out_dim`, on `out ⊗ in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Choi {
    matrix: CMatrix,
    out_dim: usize,
    in_dim: usize,
}

fn kraus_choi(ops: &[CMatrix]) -> Result<(CMatrix, usize, usize)> {
    let first = ops.first().ok_or(Error::EmptySelection)?;
    let (out_dim, in_dim) = first.shape();
    if ops.iter().any(|k| k.shape() != (out_dim, in_dim)) {
        return Err(Error::DimensionMismatch("Kraus operators differ in shape".into()));
    }
    let n = out_dim * in_dim;
    let mut j = CMatrix::zeros(n, n);
    for k in ops {
        // |K⟩⟩ = Σ_i K|i⟩ ⊗ |i⟩
        let mut v = CMatrix::zeros(n, 1);
        for a in 0..out_dim {
            for i in 0..in_dim {
                v[(a * in_dim + i, 0)] = k[(a, i)];
            }
        }
        j += &v * v.adjoint();
    }
    Ok((j, out_dim, in_dim))
}

impl Choi {
    /// Validates complete positivity and trace preservation.
    pub fn from_matrix(matrix: CMatrix, out_dim: usize, in_dim: usize) -> Result<Self> {
        let choi = Self::cp_map(matrix, out_dim, in_dim)?;
        let dev = choi.tp_deviation();
        if dev > QCM_TOL {
            return Err(Error::NotTracePreserving { deviation: dev });
        }
        Ok(choi)
    }

    /// A completely positive map that need not preserve trace (instrument
    /// elements).
    pub fn cp_map(matrix: CMatrix, out_dim: usize, in_dim: usize) -> Result<Self> {
        let n = out_dim * in_dim;
        if matrix.shape() != (n, n) || n == 0 {
            return Err(Error::DimensionMismatch(format!(
                "Choi matrix {:?} for {out_dim}×{in_dim}",
                matrix.shape()
            )));
        }
        let herm = (&matrix - matrix.adjoint())
            .iter()
            .fold(0.0_f64, |a, z| a.max(z.norm()));
        if herm > QCM_TOL {
            return Err(Error::NotCompletelyPositive {
                min_eigenvalue: f64::NAN,
            });
        }
        let min = hermitian_eigenvalues(&matrix).first().copied().unwrap_or(0.0);
        if min < -QCM_TOL {
            return Err(Error::NotCompletelyPositive { min_eigenvalue: min });
        }
        Ok(Self {
            matrix,
            out_dim,
            in_dim,
        })
    }

    pub fn from_kraus(ops: &[CMatrix]) -> Result<Self> {
        let (j, out_dim, in_dim) = kraus_choi(ops)?;
        let choi = Self {
            matrix: j,
            out_dim,
            in_dim,
        };
        let dev = choi.tp_deviation();
        if dev > QCM_TOL {
            return Err(Error::NotTracePreserving { deviation: dev });
        }
        Ok(choi)
    }

    /// CP map `X ↦ Σ K X K†` without the trace-preservation requirement.
    pub fn cp_from_kraus(ops: &[CMatrix]) -> Result<Self> {
        let (j, out_dim, in_dim) = kraus_choi(ops)?;
        Ok(Self {
            matrix: j,
            out_dim,
            in_dim,
        })
    }

    pub fn from_unitary(u: &CMatrix) -> Result<Self> {
        let deviation = unitarity_deviation(u);
        if deviation > SPECTRAL_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        Self::from_kraus(std::slice::from_ref(u))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_kraus(&[CMatrix::identity(dim, dim)]).expect("identity is a channel")
    }

    /// `ρ ↦ (1 − p) ρ + p I/2` on a qubit.
    pub fn depolarizing(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfRange(format!("depolarizing strength {p} outside [0, 1]")));
        }
        let paulis = [
            crate::quantum::sigma_x(),
            crate::quantum::sigma_y(),
            crate::quantum::sigma_z(),
        ];
        let mut ops = vec![CMatrix::identity(2, 2) * c((1.0 - 0.75 * p).sqrt(), 0.0)];
        ops.extend(paulis.iter().map(|s| s * c((p / 4.0).sqrt(), 0.0)));
        Self::from_kraus(&ops)
    }

    /// Preparation of `rho`, a map from the trivial space.
    pub fn state(rho: &CMatrix) -> Result<Self> {
        if !rho.is_square() {
            return Err(Error::DimensionMismatch("state must be square".into()));
        }
        Self::from_matrix(rho.clone(), rho.nrows(), 1)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    /// `Tr_out J`.
    pub fn input_marginal(&self) -> CMatrix {
        partial_trace_first(&self.matrix, self.out_dim, self.in_dim)
    }

    /// Max-entry deviation of `Tr_out J` from the identity.
    pub fn tp_deviation(&self) -> f64 {
        max_abs(&(self.input_marginal() - CMatrix::identity(self.in_dim, self.in_dim)))
    }

    /// `E(ρ) = Tr_in[J (I ⊗ ρ^T)]`.
    pub fn apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        if rho.shape() != (self.in_dim, self.in_dim) {
            return Err(Error::DimensionMismatch(format!(
                "input {:?} for a map on dimension {}",
                rho.shape(),
                self.in_dim
            )));
        }
        let (o, d) = (self.out_dim, self.in_dim);
        let mut out = CMatrix::zeros(o, o);
        for a in 0..o {
            for b in 0..o {
                let mut acc = c(0.0, 0.0);
                for i in 0..d {
                    for j in 0..d {
                        acc += self.matrix[(a * d + i, b * d + j)] * rho[(i, j)];
                    }
                }
                out[(a, b)] = acc;
            }
        }
        Ok(out)
    }

    /// Number of eigenvalues above `tol`.
    pub fn rank(&self, tol: f64) -> usize {
        hermitian_eigenvalues(&self.matrix).iter().filter(|&&l| l > tol).count()
    }
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |a, z| a.max(z.norm()))
}

/// Traces out the first factor of `A ⊗ B` with dims `(da, db)`.
fn partial_trace_first(m: &CMatrix, da: usize, db: usize) -> CMatrix {
    let mut out = CMatrix::zeros(db, db);
    for a in 0..da {
        for i in 0..db {
            for j in 0..db {
                out[(i, j)] += m[(a * db + i, a * db + j)];
            }
        }
    }
    out
}

/// Traces out the second factor of `A ⊗ B` with dims `(da, db)`.
fn partial_trace_second(m: &CMatrix, da: usize, db: usize) -> CMatrix {
    let mut out = CMatrix::zeros(da, da);
    for i in 0..da {
        for j in 0..da {
            out[(i, j)] = (0..db).map(|b| m[(i * db + b, j * db + b)]).sum();
        }
    }
    out
}

/// Reorders `A ⊗ B` (dims `da`, `db`) to `B ⊗ A`.
fn swap_factors(m: &CMatrix, da: usize, db: usize) -> CMatrix {
    let n = da * db;
    let idx = |k: usize| (k % db) * da + k / db;
    let mut out = CMatrix::zeros(n, n);
    for r in 0..n {
        for col in 0..n {
            out[(idx(r), idx(col))] = m[(r, col)];
        }
    }
    out
}

/// `(op on targets) · m`, for a matrix `m` over subsystems of dims `dims`.
fn apply_left(op: &CMatrix, targets: &[usize], dims: &[usize], m: &CMatrix) -> CMatrix {
    let st = strides(dims);
    let tdims: Vec<usize> = targets.iter().map(|&t| dims[t]).collect();
    let lst = strides(&tdims);
    let dl: usize = tdims.iter().product();
    let total = m.nrows();
    let off: Vec<usize> = (0..dl)
        .map(|l| {
            targets
                .iter()
                .enumerate()
                .map(|(k, &t)| ((l / lst[k]) % tdims[k]) * st[t])
                .sum()
        })
        .collect();
    let mut out = CMatrix::zeros(total, m.ncols());
    for g in 0..total {
        let mut l = 0;
        let mut base = g;
        for (k, &t) in targets.iter().enumerate() {
            let d = (g / st[t]) % dims[t];
            l += d * lst[k];
            base -= d * st[t];
        }
        for (lp, &o) in off.iter().enumerate() {
            let a = op[(l, lp)];
            if a.re == 0.0 && a.im == 0.0 {
                continue;
            }
            let src = base + o;
            for col in 0..m.ncols() {
                out[(g, col)] += a * m[(src, col)];
            }
        }
    }
    out
}

/// A node of the causal structure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub input_dim: usize,
    pub output_dim: usize,
    #[serde(default)]
    pub parents: Vec<String>,
    /// Factorisation of the output into subsystems children can read
    /// separately; defaults to a single subsystem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_split: Option<Vec<usize>>,
}

impl NodeSpec {
    pub fn new(name: &str, input_dim: usize, output_dim: usize, parents: &[&str]) -> Self {
        Self {
            name: name.into(),
            input_dim,
            output_dim,
            parents: parents.iter().map(|p| p.to_string()).collect(),
            output_split: None,
        }
    }

    pub fn split(mut self, parts: &[usize]) -> Self {
        self.output_split = Some(parts.to_vec());
        self
    }

    pub fn output_parts(&self) -> Vec<usize> {
        self.output_split.clone().unwrap_or_else(|| vec![self.output_dim])
    }
}

/// An output subsystem of a parent node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortRef {
    pub node: String,
    #[serde(default)]
    pub subsystem: usize,
}

impl PortRef {
    pub fn new(node: &str, subsystem: usize) -> Self {
        Self {
            node: node.into(),
            subsystem,
        }
    }
}

/// A node's channel with its wiring: `choi` maps the listed parent output
/// subsystems (in order) to the node's input.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelCJ {
    pub node: String,
    pub sources: Vec<PortRef>,
    pub choi: Choi,
}

impl ChannelCJ {
    pub fn new(node: &str, sources: Vec<PortRef>, choi: Choi) -> Self {
        Self {
            node: node.into(),
            sources,
            choi,
        }
    }

    pub fn root(node: &str, rho: &CMatrix) -> Result<Self> {
        Ok(Self::new(node, Vec::new(), Choi::state(rho)?))
    }
}

/// Subsystem layout: per node, the input subsystem then its output parts.
#[derive(Clone, Debug, PartialEq)]
struct Layout {
    dims: Vec<usize>,
    input: Vec<usize>,
    outputs: Vec<Vec<usize>>,
}

fn validate_nodes(nodes: &[NodeSpec]) -> Result<(HashMap<String, usize>, Layout)> {
    let mut index = HashMap::new();
    for (i, n) in nodes.iter().enumerate() {
        if n.input_dim == 0 || n.output_dim == 0 {
            return Err(Error::InvalidModel(format!("node {} has a zero dimension", n.name)));
        }
        if n.output_parts().iter().product::<usize>() != n.output_dim || n.output_parts().contains(&0) {
            return Err(Error::InvalidModel(format!(
                "output split of {} does not multiply to {}",
                n.name, n.output_dim
            )));
        }
        if index.insert(n.name.clone(), i).is_some() {
            return Err(Error::InvalidModel(format!("duplicate node {}", n.name)));
        }
    }
    for n in nodes {
        for p in &n.parents {
            if !index.contains_key(p) {
                return Err(Error::InvalidModel(format!("parent {p} of {} does not exist", n.name)));
            }
        }
    }
    // cycle check by repeated removal of parentless nodes
    let mut remaining: Vec<usize> = (0..nodes.len()).collect();
    let mut done = vec![false; nodes.len()];
    while !remaining.is_empty() {
        let before = remaining.len();
        remaining.retain(|&i| {
            if nodes[i].parents.iter().all(|p| done[index[p]]) {
                done[i] = true;
                false
            } else {
                true
            }
        });
        if remaining.len() == before {
            return Err(Error::InvalidModel("parent graph has a cycle".into()));
        }
    }
    let mut layout = Layout {
        dims: Vec::new(),
        input: Vec::new(),
        outputs: Vec::new(),
    };
    for n in nodes {
        layout.input.push(layout.dims.len());
        layout.dims.push(n.input_dim);
        let parts = n.output_parts();
        layout
            .outputs
            .push((layout.dims.len()..layout.dims.len() + parts.len()).collect());
        layout.dims.extend(parts);
    }
    Ok((index, layout))
}

/// The process operator `σ` over all node spaces.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessOperator {
    matrix: CMatrix,
    nodes: Vec<NodeSpec>,
    subsystem_dims: Vec<usize>,
}

impl ProcessOperator {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    /// Dims of `[in_1, out_1…, in_2, out_2…, …]`.
    pub fn subsystem_dims(&self) -> &[usize] {
        &self.subsystem_dims
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn node_index(&self, name: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .ok_or_else(|| Error::InvalidModel(format!("unknown node {name}")))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.matrix).first().copied().unwrap_or(0.0)
    }
}

/// Builds `σ = Π_i ρ_{A_i|Pa(A_i)}` after checking the wiring and that every
/// pair of factors commutes.
pub fn assemble_process(nodes: &[NodeSpec], channels: &[ChannelCJ]) -> Result<ProcessOperator> {
    let (index, layout) = validate_nodes(nodes)?;
    let mut by_node: Vec<Option<&ChannelCJ>> = vec![None; nodes.len()];
    for ch in channels {
        let i = *index
            .get(&ch.node)
            .ok_or_else(|| Error::InvalidModel(format!("channel for unknown node {}", ch.node)))?;
        if by_node[i].replace(ch).is_some() {
            return Err(Error::InvalidModel(format!("two channels for node {}", ch.node)));
        }
    }
    let mut supports = Vec::with_capacity(nodes.len());
    for (i, node) in nodes.iter().enumerate() {
        let ch = by_node[i].ok_or_else(|| Error::InvalidModel(format!("node {} has no channel", node.name)))?;
        let mut targets = vec![layout.input[i]];
        for src in &ch.sources {
            if !node.parents.contains(&src.node) {
                return Err(Error::InvalidModel(format!(
                    "channel of {} reads {}, which is not a parent",
                    node.name, src.node
                )));
            }
            let p = index[&src.node];
            let sub = *layout.outputs[p].get(src.subsystem).ok_or_else(|| {
                Error::InvalidModel(format!("{} has no output subsystem {}", src.node, src.subsystem))
            })?;
            if targets.contains(&sub) {
                return Err(Error::InvalidModel(format!(
                    "channel of {} reads a subsystem twice",
                    node.name
                )));
            }
            targets.push(sub);
        }
        for p in &node.parents {
            if !ch.sources.iter().any(|s| &s.node == p) {
                return Err(Error::InvalidModel(format!(
                    "channel of {} ignores parent {p}",
                    node.name
                )));
            }
        }
        let in_dim: usize = targets[1..].iter().map(|&t| layout.dims[t]).product();
        if ch.choi.out_dim != node.input_dim || ch.choi.in_dim != in_dim {
            return Err(Error::DimensionMismatch(format!(
                "channel of {} maps {} → {}, wiring needs {} → {}",
                node.name, ch.choi.in_dim, ch.choi.out_dim, in_dim, node.input_dim
            )));
        }
        let dev = ch.choi.tp_deviation();
        if dev > QCM_TOL {
            return Err(Error::NotTracePreserving { deviation: dev });
        }
        supports.push(targets);
    }

    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            if !supports[i].iter().any(|t| supports[j].contains(t)) {
                continue;
            }
            let mut union: Vec<usize> = supports[i].iter().chain(&supports[j]).copied().collect();
            union.sort_unstable();
            union.dedup();
            let udims: Vec<usize> = union.iter().map(|&t| layout.dims[t]).collect();
            let local =
                |s: &[usize]| -> Vec<usize> { s.iter().map(|t| union.iter().position(|u| u == t).unwrap()).collect() };
            let n: usize = udims.iter().product();
            let id = CMatrix::identity(n, n);
            let fi = apply_left(by_node[i].unwrap().choi.matrix(), &local(&supports[i]), &udims, &id);
            let fj = apply_left(by_node[j].unwrap().choi.matrix(), &local(&supports[j]), &udims, &id);
            let norm = spectral_norm(&(&fi * &fj - &fj * &fi));
            if norm >= QCM_TOL {
                return Err(Error::QmcViolation {
                    first: nodes[i].name.clone(),
                    second: nodes[j].name.clone(),
                    norm,
                });
            }
        }
    }

    let total: usize = layout.dims.iter().product();
    let mut sigma = CMatrix::identity(total, total);
    for i in (0..nodes.len()).rev() {
        sigma = apply_left(by_node[i].unwrap().choi.matrix(), &supports[i], &layout.dims, &sigma);
    }
    Ok(ProcessOperator {
        matrix: sigma,
        nodes: nodes.to_vec(),
        subsystem_dims: layout.dims,
    })
}

/// One outcome of an intervention, as `τ` on `node_in ⊗ node_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct InstrumentElement {
    pub node: String,
    pub setting: String,
    pub outcome: String,
    pub matrix: CMatrix,
    /// Marks an intervention that yields a determinate value; bookkeeping
    /// only.
    pub sdc_flag: bool,
}

impl InstrumentElement {
    /// From the Choi matrix (on `out ⊗ in`) of the element's CP map.
    pub fn from_choi(node: &str, setting: &str, outcome: &str, choi: &Choi, sdc_flag: bool) -> Self {
        let tau = swap_factors(&choi.matrix.transpose(), choi.out_dim, choi.in_dim);
        Self {
            node: node.into(),
            setting: setting.into(),
            outcome: outcome.into(),
            matrix: tau,
            sdc_flag,
        }
    }
}

/// All outcomes of one setting at one node.
#[derive(Clone, Debug, PartialEq)]
pub struct Instrument {
    pub node: String,
    pub setting: String,
    pub elements: Vec<InstrumentElement>,
}

impl Instrument {
    pub fn new(elements: Vec<InstrumentElement>) -> Result<Self> {
        let first = elements.first().ok_or(Error::EmptySelection)?;
        let (node, setting) = (first.node.clone(), first.setting.clone());
        if elements.iter().any(|e| e.node != node || e.setting != setting) {
            return Err(Error::InvalidModel(
                "instrument elements span several nodes or settings".into(),
            ));
        }
        let n = first.matrix.nrows();
        if elements.iter().any(|e| e.matrix.shape() != (n, n)) {
            return Err(Error::DimensionMismatch("instrument elements differ in size".into()));
        }
        Ok(Self {
            node,
            setting,
            elements,
        })
    }

    /// Identity channel on a `dim`-dimensional node (single outcome "id").
    pub fn identity(node: &str, dim: usize) -> Self {
        let e = InstrumentElement::from_choi(node, "id", "id", &Choi::identity(dim), false);
        Self::new(vec![e]).expect("one element")
    }

    /// Projective measurement with trivial output: `τ_k = P_k`.
    pub fn projective(node: &str, setting: &str, outcomes: &[(&str, CMatrix)], sdc_flag: bool) -> Result<Self> {
        Self::new(
            outcomes
                .iter()
                .map(|(label, p)| InstrumentElement {
                    node: node.into(),
                    setting: setting.into(),
                    outcome: label.to_string(),
                    matrix: p.clone(),
                    sdc_flag,
                })
                .collect(),
        )
    }

    /// Lüders measure-and-forward: outcome `k` applies `X ↦ P_k X P_k`.
    pub fn measure_prepare(node: &str, setting: &str, outcomes: &[(&str, CMatrix)], sdc_flag: bool) -> Result<Self> {
        let elements = outcomes
            .iter()
            .map(|(label, p)| {
                Ok(InstrumentElement::from_choi(
                    node,
                    setting,
                    label,
                    &Choi::cp_from_kraus(std::slice::from_ref(p))?,
                    sdc_flag,
                ))
            })
            .collect::<Result<_>>()?;
        Self::new(elements)
    }

    /// Deviation of `Tr_out Σ_k τ_k` from the identity on the input.
    pub fn normalization_deviation(&self, in_dim: usize, out_dim: usize) -> f64 {
        let n = in_dim * out_dim;
        let sum = self
            .elements
            .iter()
            .fold(CMatrix::zeros(n, n), |acc, e| acc + &e.matrix);
        max_abs(&(partial_trace_second(&sum, in_dim, out_dim) - CMatrix::identity(in_dim, in_dim)))
    }
}

/// Outcome probabilities for one choice of setting per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTable {
    pub nodes: Vec<String>,
    pub settings: Vec<String>,
    pub rows: Vec<OutcomeRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub outcomes: Vec<String>,
    pub p: f64,
}

impl OutcomeTable {
    pub fn total(&self) -> f64 {
        self.rows.iter().map(|r| r.p).sum()
    }

    /// Probability that the named nodes show the given outcomes.
    pub fn marginal(&self, assignment: &[(&str, &str)]) -> Result<f64> {
        let idx: Vec<(usize, &str)> = assignment
            .iter()
            .map(|(n, o)| {
                self.nodes
                    .iter()
                    .position(|m| m == n)
                    .map(|i| (i, *o))
                    .ok_or_else(|| Error::InvalidModel(format!("unknown node {n}")))
            })
            .collect::<Result<_>>()?;
        Ok(self
            .rows
            .iter()
            .filter(|r| idx.iter().all(|&(i, o)| r.outcomes[i] == o))
            .map(|r| r.p)
            .sum())
    }
}

/// Generalised Born rule for one instrument per node.
pub fn joint_probabilities(sigma: &ProcessOperator, instruments: &[&Instrument]) -> Result<OutcomeTable> {
    let n = sigma.nodes.len();
    let mut chosen: Vec<Option<&Instrument>> = vec![None; n];
    for ins in instruments {
        let i = sigma.node_index(&ins.node)?;
        if chosen[i].replace(ins).is_some() {
            return Err(Error::InvalidModel(format!("two instruments for node {}", ins.node)));
        }
    }
    let mut picked = Vec::with_capacity(n);
    for (i, node) in sigma.nodes.iter().enumerate() {
        let ins = chosen[i].ok_or_else(|| Error::InvalidModel(format!("no instrument for node {}", node.name)))?;
        let d = node.input_dim * node.output_dim;
        if ins.elements[0].matrix.nrows() != d {
            return Err(Error::DimensionMismatch(format!(
                "instrument at {} has dimension {}, node needs {d}",
                node.name,
                ins.elements[0].matrix.nrows()
            )));
        }
        let deviation = ins.normalization_deviation(node.input_dim, node.output_dim);
        if deviation > QCM_TOL {
            return Err(Error::InstrumentNotNormalized {
                node: node.name.clone(),
                setting: ins.setting.clone(),
                deviation,
            });
        }
        picked.push(ins);
    }
    let counts: Vec<usize> = picked.iter().map(|i| i.elements.len()).collect();
    let combos: usize = counts.iter().product();
    let s = &sigma.matrix;
    let mut rows = Vec::with_capacity(combos);
    for code in 0..combos {
        let mut rem = code;
        let mut ks = vec![0; n];
        for i in (0..n).rev() {
            ks[i] = rem % counts[i];
            rem /= counts[i];
        }
        let tau = (0..n).fold(CMatrix::identity(1, 1), |acc, i| {
            acc.kronecker(&picked[i].elements[ks[i]].matrix)
        });
        // Tr[σ τ] = Σ_ij σ_ij τ_ji
        let mut p = 0.0;
        for col in 0..s.ncols() {
            for row in 0..s.nrows() {
                p += (s[(row, col)] * tau[(col, row)]).re;
            }
        }
        if p < -1e-12 {
            return Err(Error::InvalidState(format!("negative probability {p}")));
        }
        rows.push(OutcomeRow {
            outcomes: (0..n).map(|i| picked[i].elements[ks[i]].outcome.clone()).collect(),
            p: p.max(0.0),
        });
    }
    let table = OutcomeTable {
        nodes: sigma.nodes.iter().map(|n| n.name.clone()).collect(),
        settings: picked.iter().map(|i| i.setting.clone()).collect(),
        rows,
    };
    let sum = table.total();
    if (sum - 1.0).abs() > BORN_SUM_TOL {
        return Err(Error::NotNormalized { sum });
    }
    Ok(table)
}

/// Projectors `(P_+, P_−)` of `cos θ σ_z + sin θ σ_x`.
pub fn xz_projectors(theta: f64) -> (CMatrix, CMatrix) {
    let (h_c, h_s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let plus = CMatrix::from_column_slice(2, 1, &[c(h_c, 0.0), c(h_s, 0.0)]);
    let p = &plus * plus.adjoint();
    let m = CMatrix::identity(2, 2) - &p;
    (p, m)
}

pub(crate) fn zero() -> C64 {
    c(0.0, 0.0)
}
