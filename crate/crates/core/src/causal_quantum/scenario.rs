//! Serializable scenario descriptions and the Bell and Wigner's-friend
//! set-ups built from them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{
    assemble_process, joint_probabilities, xz_projectors, zero, ChannelCJ, Choi, Instrument, NodeSpec, OutcomeTable,
    PortRef, ProcessOperator,
};
use crate::causal_classical::Behavior;
use crate::quantum::{c, cnot, CMatrix, StateVector};
use crate::{Error, Result};

/// `(a, a′, b, b′)` reaching `S = 2√2` on the singlet with
/// `S = E(a,b) + E(a,b′) + E(a′,b) − E(a′,b′)`.
pub const TSIRELSON_ANGLES: [f64; 4] = [0.0, -PI / 2.0, 3.0 * PI / 4.0, -3.0 * PI / 4.0];

/// Complex entries as `[re, im]`.
pub type MatrixRows = Vec<Vec<[f64; 2]>>;

fn parse_matrix(rows: &MatrixRows) -> Result<CMatrix> {
    let r = rows.len();
    let cols = rows.first().map_or(0, Vec::len);
    if r == 0 || rows.iter().any(|row| row.len() != cols) {
        return Err(Error::DimensionMismatch("matrix rows are empty or ragged".into()));
    }
    Ok(CMatrix::from_fn(r, cols, |i, j| c(rows[i][j][0], rows[i][j][1])))
}

pub fn matrix_rows(m: &CMatrix) -> MatrixRows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateDesc {
    /// `(|01⟩ − |10⟩)/√2`.
    Singlet,
    PhiPlus,
    Basis {
        dim: usize,
        index: usize,
    },
    Diagonal {
        probs: Vec<f64>,
    },
    Density {
        matrix: MatrixRows,
    },
}

impl StateDesc {
    pub fn matrix(&self) -> Result<CMatrix> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let pure = |amps: &[f64]| {
            let v: Vec<_> = amps.iter().map(|&a| c(a, 0.0)).collect();
            StateVector::from_slice(&v, vec![2, 2]).map(|s| s.to_density().matrix().clone())
        };
        match self {
            StateDesc::Singlet => pure(&[0.0, h, -h, 0.0]),
            StateDesc::PhiPlus => pure(&[h, 0.0, 0.0, h]),
            StateDesc::Basis { dim, index } => {
                Ok(StateVector::basis(vec![*dim], *index)?.to_density().matrix().clone())
            }
            StateDesc::Diagonal { probs } => Ok(crate::quantum::DensityOperator::diagonal(probs, vec![probs.len()])?
                .matrix()
                .clone()),
            StateDesc::Density { matrix } => parse_matrix(matrix),
        }
    }
}

/// Channel by name and parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelDesc {
    /// Preparation (root nodes).
    State {
        state: StateDesc,
    },
    Identity {
        dim: usize,
    },
    Depolarizing {
        p: f64,
    },
    Cnot,
    /// `|k⟩ ↦ |k⟩|k⟩`: CNOT onto a memory qubit prepared in `|0⟩`.
    FriendCnot,
    Unitary {
        matrix: MatrixRows,
    },
    Kraus {
        operators: Vec<MatrixRows>,
    },
    Choi {
        matrix: MatrixRows,
        out_dim: usize,
        in_dim: usize,
    },
}

/// Choi matrix of a described channel.
pub fn choi_of_channel(desc: &ChannelDesc) -> Result<Choi> {
    match desc {
        ChannelDesc::State { state } => Choi::state(&state.matrix()?),
        ChannelDesc::Identity { dim } => Ok(Choi::identity(*dim)),
        ChannelDesc::Depolarizing { p } => Choi::depolarizing(*p),
        ChannelDesc::Cnot => Choi::from_unitary(&cnot()),
        ChannelDesc::FriendCnot => Choi::from_kraus(&[friend_isometry()]),
        ChannelDesc::Unitary { matrix } => Choi::from_unitary(&parse_matrix(matrix)?),
        ChannelDesc::Kraus { operators } => {
            Choi::from_kraus(&operators.iter().map(parse_matrix).collect::<Result<Vec<_>>>()?)
        }
        ChannelDesc::Choi {
            matrix,
            out_dim,
            in_dim,
        } => Choi::from_matrix(parse_matrix(matrix)?, *out_dim, *in_dim),
    }
}

/// `V = CNOT (I ⊗ |0⟩)`, a 4×2 isometry.
pub fn friend_isometry() -> CMatrix {
    let mut v = CMatrix::zeros(4, 2);
    v[(0, 0)] = c(1.0, 0.0);
    v[(3, 1)] = c(1.0, 0.0);
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelWiring {
    pub node: String,
    #[serde(default)]
    pub sources: Vec<PortRef>,
    pub channel: ChannelDesc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstrumentKind {
    /// Let the system pass untouched (single outcome "id").
    Identity,
    /// Sharp `±1` measurement of `cos θ σ_z + sin θ σ_x`, no output.
    Projective { angle: f64 },
    /// The same measurement, forwarding the collapsed qubit.
    MeasurePrepare { angle: f64 },
    /// `±1` measurement of the encoded qubit `V|θ±⟩` on target ⊗ memory;
    /// the complement of the code space counts as `−1`.
    EncodedProjective { angle: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstrumentDesc {
    pub node: String,
    pub setting: String,
    #[serde(flatten)]
    pub kind: InstrumentKind,
    #[serde(default)]
    pub sdc_flag: bool,
}

impl InstrumentDesc {
    fn new(node: &str, setting: &str, kind: InstrumentKind, sdc_flag: bool) -> Self {
        Self {
            node: node.into(),
            setting: setting.into(),
            kind,
            sdc_flag,
        }
    }

    pub fn build(&self, node: &NodeSpec) -> Result<Instrument> {
        let (n, s, f) = (self.node.as_str(), self.setting.as_str(), self.sdc_flag);
        match self.kind {
            InstrumentKind::Identity => {
                if node.input_dim != node.output_dim {
                    return Err(Error::DimensionMismatch(format!(
                        "identity instrument at {n} needs equal input and output dims"
                    )));
                }
                Ok(Instrument::identity(n, node.input_dim))
            }
            InstrumentKind::Projective { angle } => {
                let (p, m) = xz_projectors(angle);
                Instrument::projective(n, s, &[("1", p), ("-1", m)], f)
            }
            InstrumentKind::MeasurePrepare { angle } => {
                let (p, m) = xz_projectors(angle);
                Instrument::measure_prepare(n, s, &[("1", p), ("-1", m)], f)
            }
            InstrumentKind::EncodedProjective { angle } => {
                let v = friend_isometry();
                let (p, _) = xz_projectors(angle);
                let plus = &v * p * v.adjoint();
                let minus = CMatrix::identity(4, 4) - &plus;
                Instrument::projective(n, s, &[("1", plus), ("-1", minus)], f)
            }
        }
    }
}

/// A complete causal scenario: structure, channels and the available
/// interventions at every node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDescription {
    pub nodes: Vec<NodeSpec>,
    pub channels: Vec<ChannelWiring>,
    pub instruments: Vec<InstrumentDesc>,
}

impl ScenarioDescription {
    pub fn process(&self) -> Result<ProcessOperator> {
        let channels = self
            .channels
            .iter()
            .map(|w| Ok(ChannelCJ::new(&w.node, w.sources.clone(), choi_of_channel(&w.channel)?)))
            .collect::<Result<Vec<_>>>()?;
        assemble_process(&self.nodes, &channels)
    }

    /// Instruments grouped per node, settings in order of appearance.
    pub fn instruments_by_node(&self) -> Result<Vec<Vec<Instrument>>> {
        let mut out: Vec<Vec<Instrument>> = vec![Vec::new(); self.nodes.len()];
        for d in &self.instruments {
            let i = self
                .nodes
                .iter()
                .position(|n| n.name == d.node)
                .ok_or_else(|| Error::InvalidModel(format!("instrument for unknown node {}", d.node)))?;
            if out[i].iter().any(|ins| ins.setting == d.setting) {
                return Err(Error::InvalidModel(format!(
                    "duplicate setting {} at {}",
                    d.setting, d.node
                )));
            }
            out[i].push(d.build(&self.nodes[i])?);
        }
        Ok(out)
    }

    /// Outcome tables for every combination of settings, row-major in node
    /// order.
    pub fn evaluate(&self) -> Result<Vec<OutcomeTable>> {
        let sigma = self.process()?;
        let per_node = self.instruments_by_node()?;
        if let Some(i) = per_node.iter().position(Vec::is_empty) {
            return Err(Error::InvalidModel(format!(
                "no instrument for node {}",
                self.nodes[i].name
            )));
        }
        let counts: Vec<usize> = per_node.iter().map(Vec::len).collect();
        let total: usize = counts.iter().product();
        (0..total)
            .map(|code| {
                let mut rem = code;
                let mut pick = vec![0; counts.len()];
                for i in (0..counts.len()).rev() {
                    pick[i] = rem % counts[i];
                    rem /= counts[i];
                }
                let chosen: Vec<&Instrument> = pick.iter().enumerate().map(|(i, &k)| &per_node[i][k]).collect();
                joint_probabilities(&sigma, &chosen)
            })
            .collect()
    }
}

fn setting_instruments(node: &str, angles: &[f64], make: impl Fn(f64) -> InstrumentKind) -> Vec<InstrumentDesc> {
    angles
        .iter()
        .enumerate()
        .map(|(k, &a)| InstrumentDesc::new(node, &k.to_string(), make(a), true))
        .collect()
}

fn preparation(rho: &CMatrix) -> ChannelWiring {
    ChannelWiring {
        node: "L".into(),
        sources: Vec::new(),
        channel: ChannelDesc::State {
            state: StateDesc::Density {
                matrix: matrix_rows(rho),
            },
        },
    }
}

fn wire(node: &str, parent: &str, subsystem: usize, channel: ChannelDesc) -> ChannelWiring {
    ChannelWiring {
        node: node.into(),
        sources: vec![PortRef::new(parent, subsystem)],
        channel,
    }
}

/// Common cause `L` (two qubits) feeding parties `A` and `B` through
/// identity channels; `A`, `B` measure in the x–z plane.
pub fn bell_description(rho: &CMatrix, angles_a: &[f64], angles_b: &[f64]) -> ScenarioDescription {
    ScenarioDescription {
        nodes: vec![
            NodeSpec::new("L", 4, 4, &[]).split(&[2, 2]),
            NodeSpec::new("A", 2, 1, &["L"]),
            NodeSpec::new("B", 2, 1, &["L"]),
        ],
        channels: vec![
            preparation(rho),
            wire("A", "L", 0, ChannelDesc::Identity { dim: 2 }),
            wire("B", "L", 1, ChannelDesc::Identity { dim: 2 }),
        ],
        instruments: std::iter::once(InstrumentDesc::new("L", "id", InstrumentKind::Identity, false))
            .chain(setting_instruments("A", angles_a, |angle| InstrumentKind::Projective {
                angle,
            }))
            .chain(setting_instruments("B", angles_b, |angle| InstrumentKind::Projective {
                angle,
            }))
            .collect(),
    }
}

/// Two-party table for nodes `a`, `b` whose settings are labelled by index.
fn behavior_of(tables: &[OutcomeTable], a: &str, b: &str, na: usize, nb: usize) -> Result<Behavior> {
    let ia = tables[0]
        .nodes
        .iter()
        .position(|n| n == a)
        .ok_or(Error::EmptySelection)?;
    let ib = tables[0]
        .nodes
        .iter()
        .position(|n| n == b)
        .ok_or(Error::EmptySelection)?;
    let labels = ["1", "-1"];
    let mut probs = Vec::with_capacity(na * nb * 4);
    for x in 0..na {
        for y in 0..nb {
            let t = tables
                .iter()
                .find(|t| t.settings[ia] == x.to_string() && t.settings[ib] == y.to_string())
                .ok_or(Error::EmptySelection)?;
            for oa in labels {
                for ob in labels {
                    probs.push(t.marginal(&[(a, oa), (b, ob)])?);
                }
            }
        }
    }
    Behavior::new((na, nb), (2, 2), probs)
}

/// `P(a, b | s, t)` on the singlet.
pub fn bell_scenario(angles_a: &[f64], angles_b: &[f64]) -> Result<Behavior> {
    bell_scenario_with(&StateDesc::Singlet.matrix()?, angles_a, angles_b)
}

pub fn bell_scenario_with(rho: &CMatrix, angles_a: &[f64], angles_b: &[f64]) -> Result<Behavior> {
    if angles_a.is_empty() || angles_b.is_empty() {
        return Err(Error::EmptySelection);
    }
    let tables = bell_description(rho, angles_a, angles_b).evaluate()?;
    behavior_of(&tables, "A", "B", angles_a.len(), angles_b.len())
}

/// `S = E(a,b) + E(a,b′) + E(a′,b) − E(a′,b′)` on the singlet.
pub fn chsh_value(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Result<f64> {
    bell_scenario(&[a, a_prime], &[b, b_prime])?.chsh()
}

pub fn chsh_value_with(rho: &CMatrix, a: f64, a_prime: f64, b: f64, b_prime: f64) -> Result<f64> {
    bell_scenario_with(rho, &[a, a_prime], &[b, b_prime])?.chsh()
}

/// Extended Wigner's friend on a singlet. Isolated friends are CNOT
/// channels onto their memories and the Wigners measure target ⊗ memory in
/// the encoded basis; otherwise each friend `F1`, `F2` is a z measurement
/// that forwards its qubit to its Wigner.
pub fn ewf_description(isolated: bool, wigner_a: &[f64], wigner_b: &[f64]) -> Result<ScenarioDescription> {
    let rho = StateDesc::Singlet.matrix()?;
    let lambda = InstrumentDesc::new("L", "id", InstrumentKind::Identity, false);
    Ok(if isolated {
        ScenarioDescription {
            nodes: vec![
                NodeSpec::new("L", 4, 4, &[]).split(&[2, 2]),
                NodeSpec::new("W1", 4, 1, &["L"]),
                NodeSpec::new("W2", 4, 1, &["L"]),
            ],
            channels: vec![
                preparation(&rho),
                wire("W1", "L", 0, ChannelDesc::FriendCnot),
                wire("W2", "L", 1, ChannelDesc::FriendCnot),
            ],
            instruments: std::iter::once(lambda)
                .chain(setting_instruments("W1", wigner_a, |angle| {
                    InstrumentKind::EncodedProjective { angle }
                }))
                .chain(setting_instruments("W2", wigner_b, |angle| {
                    InstrumentKind::EncodedProjective { angle }
                }))
                .collect(),
        }
    } else {
        let friend = |n: &str| InstrumentDesc::new(n, "z", InstrumentKind::MeasurePrepare { angle: 0.0 }, true);
        ScenarioDescription {
            nodes: vec![
                NodeSpec::new("L", 4, 4, &[]).split(&[2, 2]),
                NodeSpec::new("F1", 2, 2, &["L"]),
                NodeSpec::new("F2", 2, 2, &["L"]),
                NodeSpec::new("W1", 2, 1, &["F1"]),
                NodeSpec::new("W2", 2, 1, &["F2"]),
            ],
            channels: vec![
                preparation(&rho),
                wire("F1", "L", 0, ChannelDesc::Identity { dim: 2 }),
                wire("F2", "L", 1, ChannelDesc::Identity { dim: 2 }),
                wire("W1", "F1", 0, ChannelDesc::Identity { dim: 2 }),
                wire("W2", "F2", 0, ChannelDesc::Identity { dim: 2 }),
            ],
            instruments: [lambda, friend("F1"), friend("F2")]
                .into_iter()
                .chain(setting_instruments("W1", wigner_a, |angle| {
                    InstrumentKind::Projective { angle }
                }))
                .chain(setting_instruments("W2", wigner_b, |angle| {
                    InstrumentKind::Projective { angle }
                }))
                .collect(),
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EwfOutcome {
    pub isolated: bool,
    /// Wigners' `p(a, b | x, y)`, summed over any friend outcomes.
    pub wigners: Behavior,
    /// Friends' `p(c, d)`; absent when friends are isolated.
    pub friends: Option<Behavior>,
    pub tables: Vec<OutcomeTable>,
    /// Fidelity after undoing the friends' interaction (isolated only).
    pub reversal_fidelity: Option<f64>,
}

pub fn ewf_scenario(isolated: bool, wigner_a: &[f64], wigner_b: &[f64]) -> Result<EwfOutcome> {
    if wigner_a.is_empty() || wigner_b.is_empty() {
        return Err(Error::EmptySelection);
    }
    let tables = ewf_description(isolated, wigner_a, wigner_b)?.evaluate()?;
    let wigners = behavior_of(&tables, "W1", "W2", wigner_a.len(), wigner_b.len())?;
    let (friends, reversal_fidelity) = if isolated {
        (None, Some(friend_reversal_fidelity()?))
    } else {
        let labels = ["1", "-1"];
        let mut probs = Vec::with_capacity(4);
        for oc in labels {
            for od in labels {
                probs.push(tables[0].marginal(&[("F1", oc), ("F2", od)])?);
            }
        }
        (Some(Behavior::new((1, 1), (2, 2), probs)?), None)
    };
    Ok(EwfOutcome {
        isolated,
        wigners,
        friends,
        tables,
        reversal_fidelity,
    })
}

/// Applies both friends' CNOT channels to singlet ⊗ |00⟩ (ordered
/// target₁, memory₁, target₂, memory₂), then their inverses, and returns
/// the fidelity with the starting state.
pub fn friend_reversal_fidelity() -> Result<f64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut amps = vec![zero(); 16];
    // |t1 m1 t2 m2⟩ = |0 0 1 0⟩ and |1 0 0 0⟩
    amps[0b0010] = c(h, 0.0);
    amps[0b1000] = c(-h, 0.0);
    let pre = StateVector::from_slice(&amps, vec![2; 4])?;
    let u = cnot().kronecker(&cnot());
    let forward = Choi::from_unitary(&u)?;
    let backward = Choi::from_unitary(&u.adjoint())?;
    let after = backward.apply(&forward.apply(pre.to_density().matrix())?)?;
    let v = pre.amplitudes();
    Ok((v.adjoint() * after * v)[(0, 0)].re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal_classical::{bell_factorization, lhv_chsh_max};
    use crate::quantum::{apply_unitary, tensor_product, DensityOperator};
    use crate::rng;
    use rand::Rng;

    #[test]
    fn bell_process_is_valid() {
        let d = bell_description(&StateDesc::Singlet.matrix().unwrap(), &[0.0], &[0.0]);
        let sigma = d.process().unwrap();
        assert_eq!(sigma.dim(), 64);
        assert!(sigma.min_eigenvalue() > -1e-10);
    }

    #[test]
    fn singlet_anticorrelation() {
        let b = bell_scenario(&[0.0, PI / 2.0], &[0.0]).unwrap();
        assert!(b.get(0, 0, 0, 0).abs() < 1e-12 && b.get(0, 0, 1, 1).abs() < 1e-12);
        assert!((b.correlator(0, 0).unwrap() + 1.0).abs() < 1e-12);
        assert!(b.correlator(1, 0).unwrap().abs() < 1e-12);
        for a in 0..2 {
            for bb in 0..2 {
                assert!((b.get(1, 0, a, bb) - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singlet_correlator_formula() {
        let mut r = rng::seeded(13);
        for _ in 0..20 {
            let (a, b): (f64, f64) = (r.random_range(-PI..PI), r.random_range(-PI..PI));
            let e = bell_scenario(&[a], &[b]).unwrap().correlator(0, 0).unwrap();
            assert!((e + (a - b).cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn no_signaling_and_uniform_marginals() {
        let b = bell_scenario(&[0.1, 1.3, -2.0], &[0.7, 2.9]).unwrap();
        assert!(b.signaling() < 1e-10);
        for x in 0..3 {
            let pa: f64 = (0..2).map(|bb| b.get(x, 0, 0, bb)).sum();
            assert!((pa - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn chsh_values() {
        let [a, a2, b, b2] = TSIRELSON_ANGLES;
        let s = chsh_value(a, a2, b, b2).unwrap();
        assert!((s - 2.0 * 2f64.sqrt()).abs() < 1e-9);
        assert!(s > lhv_chsh_max());
        let flat = chsh_value(0.4, 0.4, 0.4, 0.4).unwrap();
        assert!((flat.abs() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn product_states_respect_the_local_bound() {
        let mut r = rng::seeded(21);
        for _ in 0..100 {
            let rho = tensor_product(
                &DensityOperator::random(vec![2], 2, &mut r),
                &DensityOperator::random(vec![2], 2, &mut r),
            );
            let ang: Vec<f64> = (0..4).map(|_| r.random_range(-PI..PI)).collect();
            let s = chsh_value_with(rho.matrix(), ang[0], ang[1], ang[2], ang[3]).unwrap();
            assert!(s.abs() <= 2.0 + 1e-9);
        }
    }

    #[test]
    fn classical_reduction() {
        // diagonal preparation over |ab⟩, z-type measurements (θ = 0 or π)
        let probs = [0.1, 0.4, 0.3, 0.2];
        let rho = StateDesc::Diagonal { probs: probs.to_vec() }.matrix().unwrap();
        let quantum = bell_scenario_with(&rho, &[0.0, PI], &[PI, 0.0]).unwrap();
        // λ = (bit_a, bit_b); θ = 0 reports the bit, θ = π flips it
        let resp = |bit: usize, flip: bool| {
            let o = bit ^ usize::from(flip);
            if o == 0 {
                vec![1.0, 0.0]
            } else {
                vec![0.0, 1.0]
            }
        };
        let p_a: Vec<Vec<Vec<f64>>> = (0..4).map(|l| vec![resp(l >> 1, false), resp(l >> 1, true)]).collect();
        let p_b: Vec<Vec<Vec<f64>>> = (0..4).map(|l| vec![resp(l & 1, true), resp(l & 1, false)]).collect();
        let classical = bell_factorization(&probs, &p_a, &p_b).unwrap();
        for (q, cl) in quantum.probabilities().iter().zip(classical.probabilities()) {
            assert!((q - cl).abs() < 1e-10);
        }
    }

    #[test]
    fn isolated_ewf_matches_state_vector() {
        let (wa, wb) = ([0.3, 1.1], [-0.5, 2.0]);
        let out = ewf_scenario(true, &wa, &wb).unwrap();
        assert!(out.friends.is_none());
        assert!((out.reversal_fidelity.unwrap() - 1.0).abs() < 1e-10);
        // direct computation on |t1 m1 t2 m2⟩
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = vec![zero(); 16];
        amps[0b0010] = c(h, 0.0);
        amps[0b1000] = c(-h, 0.0);
        let psi = StateVector::from_slice(&amps, vec![2; 4]).unwrap();
        let psi = apply_unitary(&psi, &cnot(), &[0, 1]).unwrap();
        let psi = apply_unitary(&psi, &cnot(), &[2, 3]).unwrap();
        let v = friend_isometry();
        let proj = |theta: f64, plus: bool| {
            let (p, _) = xz_projectors(theta);
            let pp = &v * p * v.adjoint();
            if plus {
                pp
            } else {
                CMatrix::identity(4, 4) - pp
            }
        };
        for (x, &a) in wa.iter().enumerate() {
            for (y, &b) in wb.iter().enumerate() {
                for (ka, sa) in [true, false].into_iter().enumerate() {
                    for (kb, sb) in [true, false].into_iter().enumerate() {
                        let op = proj(a, sa).kronecker(&proj(b, sb));
                        let amp = psi.amplitudes();
                        let p = (amp.adjoint() * op * amp)[(0, 0)].re;
                        assert!((out.wigners.get(x, y, ka, kb) - p).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn non_isolated_friends_anticorrelate() {
        let out = ewf_scenario(false, &[0.0, 0.8], &[0.0]).unwrap();
        let f = out.friends.unwrap();
        assert!(f.get(0, 0, 0, 0).abs() < 1e-12 && f.get(0, 0, 1, 1).abs() < 1e-12);
        assert!((f.get(0, 0, 0, 1) - 0.5).abs() < 1e-12);
        // Wigners see the decohered mixture: E = −cos a cos b
        assert!((out.wigners.correlator(1, 0).unwrap() + 0.8f64.cos()).abs() < 1e-10);
        assert_eq!(out.tables[0].nodes.len(), 5);
        assert!(out.tables.iter().all(|t| (t.total() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn description_json_round_trip() {
        let d = ewf_description(false, &[0.0], &[PI / 4.0]).unwrap();
        let text = serde_json::to_string_pretty(&d).unwrap();
        let back: ScenarioDescription = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);
        let custom: ChannelDesc = serde_json::from_str(r#"{"kind": "depolarizing", "p": 0.2}"#).unwrap();
        assert!(choi_of_channel(&custom).is_ok());
        let not_cp: ChannelDesc = serde_json::from_str(
            r#"{"kind": "choi", "out_dim": 1, "in_dim": 2, "matrix": [[[2,0],[0,0]],[[0,0],[-1,0]]]}"#,
        )
        .unwrap();
        assert!(matches!(
            choi_of_channel(&not_cp),
            Err(Error::NotCompletelyPositive { .. })
        ));
    }
}
