//! Classical causal models over finite variables.
//!
//! A [`ClassicalDag`] names variables and their cardinalities; a
//! [`JointTable`] is a dense distribution over them. The module checks
//! d-separation, the Markov condition, common-cause screening and the
//! reality criterion, and bounds CHSH for local hidden-variable models.

use std::collections::{HashMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Absolute tolerance for probability equalities.
pub const PROB_TOL: f64 = 1e-10;

/// Tolerance on the total mass of a table.
pub const NORM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableSpec {
    pub name: String,
    pub cardinality: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DagSpec {
    pub nodes: Vec<VariableSpec>,
    pub edges: Vec<(String, String)>,
}

/// Directed acyclic graph over named finite variables.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DagSpec", into = "DagSpec")]
pub struct ClassicalDag {
    names: Vec<String>,
    cards: Vec<usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl TryFrom<DagSpec> for ClassicalDag {
    type Error = Error;

    fn try_from(spec: DagSpec) -> Result<Self> {
        let vars = spec.nodes.into_iter().map(|v| (v.name, v.cardinality)).collect();
        ClassicalDag::new(vars, spec.edges)
    }
}

impl From<ClassicalDag> for DagSpec {
    fn from(dag: ClassicalDag) -> Self {
        let edges = dag
            .edges()
            .into_iter()
            .map(|(a, b)| (dag.names[a].clone(), dag.names[b].clone()))
            .collect();
        DagSpec {
            nodes: dag
                .names
                .into_iter()
                .zip(dag.cards)
                .map(|(name, cardinality)| VariableSpec { name, cardinality })
                .collect(),
            edges,
        }
    }
}

impl ClassicalDag {
    pub fn new<S: Into<String>>(variables: Vec<(S, usize)>, edges: Vec<(S, S)>) -> Result<Self> {
        let (names, cards): (Vec<String>, Vec<usize>) = variables.into_iter().map(|(n, c)| (n.into(), c)).unzip();
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::InvalidModel(format!("duplicate variable {n}")));
            }
            if cards[i] == 0 {
                return Err(Error::InvalidModel(format!("variable {n} has cardinality 0")));
            }
        }
        let n = names.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for (a, b) in edges {
            let (a, b): (String, String) = (a.into(), b.into());
            let lookup = |s: &String| {
                index
                    .get(s)
                    .copied()
                    .ok_or_else(|| Error::InvalidModel(format!("edge endpoint {s} is not a variable")))
            };
            let (ia, ib) = (lookup(&a)?, lookup(&b)?);
            if ia == ib {
                return Err(Error::InvalidModel(format!("self-loop on {a}")));
            }
            if !parents[ib].contains(&ia) {
                parents[ib].push(ia);
                children[ia].push(ib);
            }
        }
        for p in parents.iter_mut().chain(children.iter_mut()) {
            p.sort_unstable();
        }
        let dag = Self {
            names,
            cards,
            parents,
            children,
        };
        if dag.topological_order().len() != n {
            return Err(Error::InvalidModel("graph has a directed cycle".into()));
        }
        Ok(dag)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidModel(format!("unknown variable {name}")))
    }

    pub fn resolve(&self, names: &[&str]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.index_of(n)).collect()
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.len())
            .flat_map(|b| self.parents[b].iter().map(move |&a| (a, b)))
            .collect()
    }

    /// Kahn order; shorter than `len()` only for cyclic input.
    pub fn topological_order(&self) -> Vec<usize> {
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..self.len()).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.len());
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        order
    }

    fn reach(&self, start: &[usize], next: impl Fn(usize) -> Vec<usize>) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<usize> = start.to_vec();
        while let Some(v) = stack.pop() {
            if !std::mem::replace(&mut seen[v], true) {
                stack.extend(next(v));
            }
        }
        seen
    }

    /// Ancestors of a set, each node counted as its own ancestor.
    pub fn ancestors(&self, set: &[usize]) -> Vec<bool> {
        self.reach(set, |v| self.parents[v].clone())
    }

    /// Descendants of a set, each node counted as its own descendant.
    pub fn descendants(&self, set: &[usize]) -> Vec<bool> {
        self.reach(set, |v| self.children[v].clone())
    }

    /// Whether a directed path of length ≥ 1 leads from `a` to `b`.
    pub fn has_directed_path(&self, a: usize, b: usize) -> bool {
        self.reach(&self.children[a], |v| self.children[v].clone())[b]
    }

    /// Nodes `c ∉ {a, b}` with directed paths to both `a` and `b`.
    pub fn common_ancestors(&self, a: usize, b: usize) -> Vec<usize> {
        let (ra, rb) = (self.ancestors(&[a]), self.ancestors(&[b]));
        (0..self.len())
            .filter(|&c| c != a && c != b && ra[c] && rb[c])
            .collect()
    }

    /// Table built from conditionals `cpts[v][parent_config * card_v + value]`,
    /// with parent configurations row-major over `parents(v)`.
    pub fn markov_table(&self, cpts: &[Vec<f64>]) -> Result<JointTable> {
        if cpts.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} conditionals for {} variables",
                cpts.len(),
                self.len()
            )));
        }
        for (v, cpt) in cpts.iter().enumerate() {
            let rows: usize = self.parents[v].iter().map(|&p| self.cards[p]).product();
            if cpt.len() != rows * self.cards[v] {
                return Err(Error::DimensionMismatch(format!(
                    "conditional for {} has {} entries, expected {}",
                    self.names[v],
                    cpt.len(),
                    rows * self.cards[v]
                )));
            }
            for row in cpt.chunks(self.cards[v]) {
                let s: f64 = row.iter().sum();
                if row.iter().any(|&p| p < 0.0) || (s - 1.0).abs() > NORM_TOL {
                    return Err(Error::NotNormalized { sum: s });
                }
            }
        }
        let shape = Shape::new(&self.cards);
        let probs = (0..shape.size)
            .map(|idx| {
                let x = shape.unravel(idx);
                (0..self.len())
                    .map(|v| {
                        let row = self.parents[v].iter().fold(0, |acc, &p| acc * self.cards[p] + x[p]);
                        cpts[v][row * self.cards[v] + x[v]]
                    })
                    .product()
            })
            .collect();
        JointTable::new(self.variable_specs(), probs)
    }

    /// A Markov table with conditionals drawn uniformly from the simplex.
    pub fn random_markov_table<R: Rng + ?Sized>(&self, rng: &mut R) -> JointTable {
        let cpts: Vec<Vec<f64>> = (0..self.len())
            .map(|v| {
                let rows: usize = self.parents[v].iter().map(|&p| self.cards[p]).product();
                (0..rows).flat_map(|_| random_simplex(self.cards[v], rng)).collect()
            })
            .collect();
        self.markov_table(&cpts).expect("generated conditionals are normalised")
    }

    pub fn variable_specs(&self) -> Vec<VariableSpec> {
        self.names
            .iter()
            .zip(&self.cards)
            .map(|(n, &c)| VariableSpec {
                name: n.clone(),
                cardinality: c,
            })
            .collect()
    }
}

fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    // normalised exponentials are uniform on the simplex
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

fn check_disjoint(sets: [&[usize]; 3]) -> Result<()> {
    for (i, a) in sets.iter().enumerate() {
        for b in &sets[i + 1..] {
            if let Some(v) = a.iter().find(|v| b.contains(v)) {
                return Err(Error::OverlappingSets(format!("node {v} appears in two sets")));
            }
        }
    }
    Ok(())
}

/// d-separation of `x` and `y` given `z` (node indices), via the moral graph
/// of the ancestral set.
pub fn d_separated_idx(dag: &ClassicalDag, x: &[usize], y: &[usize], z: &[usize]) -> Result<bool> {
    check_disjoint([x, y, z])?;
    let all: Vec<usize> = x.iter().chain(y).chain(z).copied().collect();
    let keep = dag.ancestors(&all);
    let n = dag.len();
    let mut adj = vec![Vec::new(); n];
    for v in (0..n).filter(|&v| keep[v]) {
        let ps = dag.parents(v);
        for (i, &p) in ps.iter().enumerate() {
            adj[p].push(v);
            adj[v].push(p);
            for &q in &ps[i + 1..] {
                adj[p].push(q);
                adj[q].push(p);
            }
        }
    }
    let mut blocked = vec![false; n];
    for &v in z {
        blocked[v] = true;
    }
    let mut seen = blocked.clone();
    let mut stack: Vec<usize> = x.to_vec();
    for &v in x {
        seen[v] = true;
    }
    while let Some(v) = stack.pop() {
        if y.contains(&v) {
            return Ok(false);
        }
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    Ok(true)
}

/// d-separation by variable name.
pub fn d_separated(dag: &ClassicalDag, x: &[&str], y: &[&str], z: &[&str]) -> Result<bool> {
    d_separated_idx(dag, &dag.resolve(x)?, &dag.resolve(y)?, &dag.resolve(z)?)
}

/// Row-major strides, last variable fastest.
#[derive(Clone, Debug, PartialEq)]
struct Shape {
    cards: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
}

impl Shape {
    fn new(cards: &[usize]) -> Self {
        let mut strides = vec![1; cards.len()];
        for i in (0..cards.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * cards[i + 1];
        }
        Self {
            cards: cards.to_vec(),
            strides,
            size: cards.iter().product(),
        }
    }

    fn unravel(&self, mut idx: usize) -> Vec<usize> {
        self.strides
            .iter()
            .map(|&s| {
                let v = idx / s;
                idx %= s;
                v
            })
            .collect()
    }

    fn ravel(&self, x: &[usize]) -> usize {
        x.iter().zip(&self.strides).map(|(a, b)| a * b).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointTableSpec {
    pub variables: Vec<VariableSpec>,
    pub probabilities: Vec<f64>,
}

/// Dense joint distribution over named finite variables, row-major with the
/// last variable varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointTableSpec", into = "JointTableSpec")]
pub struct JointTable {
    names: Vec<String>,
    shape: Shape,
    probs: Vec<f64>,
}

impl TryFrom<JointTableSpec> for JointTable {
    type Error = Error;

    fn try_from(spec: JointTableSpec) -> Result<Self> {
        JointTable::new(spec.variables, spec.probabilities)
    }
}

impl From<JointTable> for JointTableSpec {
    fn from(t: JointTable) -> Self {
        JointTableSpec {
            variables: t
                .names
                .iter()
                .zip(&t.shape.cards)
                .map(|(n, &c)| VariableSpec {
                    name: n.clone(),
                    cardinality: c,
                })
                .collect(),
            probabilities: t.probs,
        }
    }
}

impl JointTable {
    pub fn new(variables: Vec<VariableSpec>, probabilities: Vec<f64>) -> Result<Self> {
        let cards: Vec<usize> = variables.iter().map(|v| v.cardinality).collect();
        let shape = Shape::new(&cards);
        if probabilities.len() != shape.size {
            return Err(Error::DimensionMismatch(format!(
                "{} probabilities for a table of size {}",
                probabilities.len(),
                shape.size
            )));
        }
        if let Some(p) = probabilities.iter().find(|p| !(**p >= 0.0)) {
            return Err(Error::InvalidState(format!("negative or NaN probability {p}")));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self {
            names: variables.into_iter().map(|v| v.name).collect(),
            shape,
            probs: probabilities,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.shape.cards
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidModel(format!("unknown variable {name}")))
    }

    pub fn prob(&self, assignment: &[usize]) -> f64 {
        self.probs[self.shape.ravel(assignment)]
    }

    /// Marginal over `vars` (indices), in the given order.
    pub fn marginal(&self, vars: &[usize]) -> Vec<f64> {
        let sub = Shape::new(&vars.iter().map(|&v| self.shape.cards[v]).collect::<Vec<_>>());
        let mut out = vec![0.0; sub.size];
        for (idx, &p) in self.probs.iter().enumerate() {
            let x = self.shape.unravel(idx);
            let j = vars.iter().zip(&sub.strides).map(|(&v, s)| x[v] * s).sum::<usize>();
            out[j] += p;
        }
        out
    }

    /// Probability of a conjunction of `(variable, value)` assignments.
    pub fn event_prob(&self, event: &[(usize, usize)]) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(idx, _)| {
                let x = self.shape.unravel(*idx);
                event.iter().all(|&(v, val)| x[v] == val)
            })
            .map(|(_, p)| p)
            .sum()
    }

    /// Largest joint-scale deviation `|p(xyz) − p(xz)p(yz)/p(z)|`.
    pub fn independence_deviation(&self, x: &[usize], y: &[usize], z: &[usize]) -> f64 {
        let vars: Vec<usize> = x.iter().chain(y).chain(z).copied().collect();
        let card = |s: &[usize]| s.iter().map(|&v| self.shape.cards[v]).product::<usize>();
        let (nx, ny, nz) = (card(x), card(y), card(z));
        let m = self.marginal(&vars);
        let mut dev: f64 = 0.0;
        for k in 0..nz {
            let pz: f64 = (0..nx * ny).map(|ij| m[ij * nz + k]).sum();
            if pz <= 0.0 {
                continue;
            }
            for i in 0..nx {
                let pxz: f64 = (0..ny).map(|j| m[(i * ny + j) * nz + k]).sum();
                for j in 0..ny {
                    let pyz: f64 = (0..nx).map(|i2| m[(i2 * ny + j) * nz + k]).sum();
                    dev = dev.max((m[(i * ny + j) * nz + k] - pxz * pyz / pz).abs());
                }
            }
        }
        dev
    }

    pub fn conditionally_independent(&self, x: &[usize], y: &[usize], z: &[usize], tol: f64) -> bool {
        self.independence_deviation(x, y, z) <= tol
    }

    /// Reorders the table's variables to `order` (names).
    pub fn permuted(&self, order: &[&str]) -> Result<JointTable> {
        let perm: Vec<usize> = order.iter().map(|n| self.index_of(n)).collect::<Result<_>>()?;
        if perm.len() != self.names.len() {
            return Err(Error::DimensionMismatch("permutation must name every variable".into()));
        }
        let vars: Vec<VariableSpec> = perm
            .iter()
            .map(|&i| VariableSpec {
                name: self.names[i].clone(),
                cardinality: self.shape.cards[i],
            })
            .collect();
        JointTable::new(vars, self.marginal(&perm))
    }
}

/// Outcome of [`markov_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport {
    pub holds: bool,
    /// Whether `P = Π P(X_j | Pa(X_j))` holds entrywise.
    pub factorizes: bool,
    /// Whether every node is independent of its non-descendants given its
    /// parents.
    pub local_markov: bool,
    pub max_deviation: f64,
    /// Pairs `(node, non-descendant)` whose conditional independence given
    /// the node's parents fails.
    pub violations: Vec<(String, String)>,
}

/// Checks the Markov condition by factorization and by local independences.
pub fn markov_check(dag: &ClassicalDag, table: &JointTable) -> Result<MarkovReport> {
    if dag.len() != table.names.len() {
        return Err(Error::DimensionMismatch(format!(
            "DAG has {} variables, table has {}",
            dag.len(),
            table.names.len()
        )));
    }
    let order: Vec<&str> = dag.names().iter().map(String::as_str).collect();
    let t = table.permuted(&order)?;
    if t.cardinalities() != dag.cardinalities() {
        return Err(Error::DimensionMismatch(
            "cardinalities differ between DAG and table".into(),
        ));
    }
    let n = dag.len();
    // P(X_v, Pa_v) and P(Pa_v) marginals
    let families: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .map(|v| {
            let mut fam = dag.parents(v).to_vec();
            let pa = t.marginal(&fam);
            fam.push(v);
            (t.marginal(&fam), pa)
        })
        .collect();
    let mut max_deviation: f64 = 0.0;
    for (idx, &p) in t.probs.iter().enumerate() {
        let x = t.shape.unravel(idx);
        let prod: f64 = (0..n)
            .map(|v| {
                let row = dag.parents(v).iter().fold(0, |acc, &q| acc * dag.cards[q] + x[q]);
                let (joint, pa) = &families[v];
                if pa[row] > 0.0 {
                    joint[row * dag.cards[v] + x[v]] / pa[row]
                } else {
                    0.0
                }
            })
            .product();
        max_deviation = max_deviation.max((p - prod).abs());
    }
    let factorizes = max_deviation <= PROB_TOL;

    let mut local_markov = true;
    let mut violations = Vec::new();
    for v in 0..n {
        let desc = dag.descendants(&[v]);
        let pa = dag.parents(v);
        let others: Vec<usize> = (0..n).filter(|&w| !desc[w] && !pa.contains(&w)).collect();
        if others.is_empty() {
            continue;
        }
        if !t.conditionally_independent(&[v], &others, pa, PROB_TOL) {
            local_markov = false;
        }
        for &w in &others {
            if !t.conditionally_independent(&[v], &[w], pa, PROB_TOL) {
                let pair = (v.min(w), v.max(w));
                let named = (dag.names[pair.0].clone(), dag.names[pair.1].clone());
                if !violations.contains(&named) {
                    violations.push(named);
                }
            }
        }
    }
    Ok(MarkovReport {
        holds: factorizes && local_markov,
        factorizes,
        local_markov,
        max_deviation,
        violations,
    })
}

/// `P(a, b | x, y)` for two parties, stored `[x][y][a][b]` row-major.
/// For binary outcomes index 0 is read as `+1` and index 1 as `−1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Behavior {
    pub settings: (usize, usize),
    pub outcomes: (usize, usize),
    probs: Vec<f64>,
}

impl Behavior {
    pub fn new(settings: (usize, usize), outcomes: (usize, usize), probs: Vec<f64>) -> Result<Self> {
        let size = settings.0 * settings.1 * outcomes.0 * outcomes.1;
        if probs.len() != size {
            return Err(Error::DimensionMismatch(format!(
                "{} entries, expected {size}",
                probs.len()
            )));
        }
        let b = Self {
            settings,
            outcomes,
            probs,
        };
        for x in 0..settings.0 {
            for y in 0..settings.1 {
                let s: f64 = (0..outcomes.0)
                    .flat_map(|a| (0..outcomes.1).map(move |bb| (a, bb)))
                    .map(|(a, bb)| b.get(x, y, a, bb))
                    .sum();
                if (s - 1.0).abs() > NORM_TOL {
                    return Err(Error::NotNormalized { sum: s });
                }
            }
        }
        Ok(b)
    }

    fn offset(&self, x: usize, y: usize, a: usize, b: usize) -> usize {
        ((x * self.settings.1 + y) * self.outcomes.0 + a) * self.outcomes.1 + b
    }

    pub fn get(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        self.probs[self.offset(x, y, a, b)]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// `E(x, y) = Σ a·b·P(a, b | x, y)` with `±1` outcome values.
    pub fn correlator(&self, x: usize, y: usize) -> Result<f64> {
        if self.outcomes != (2, 2) {
            return Err(Error::DimensionMismatch("correlators need binary outcomes".into()));
        }
        let sign = |k: usize| if k == 0 { 1.0 } else { -1.0 };
        Ok((0..2)
            .flat_map(|a| (0..2).map(move |b| (a, b)))
            .map(|(a, b)| sign(a) * sign(b) * self.get(x, y, a, b))
            .sum())
    }

    /// `S = E(0,0) + E(0,1) + E(1,0) − E(1,1)`.
    pub fn chsh(&self) -> Result<f64> {
        if self.settings != (2, 2) {
            return Err(Error::DimensionMismatch("CHSH needs two settings per party".into()));
        }
        Ok(self.correlator(0, 0)? + self.correlator(0, 1)? + self.correlator(1, 0)? - self.correlator(1, 1)?)
    }

    /// Largest change of one party's marginal under the other's setting.
    pub fn signaling(&self) -> f64 {
        let (sx, sy) = self.settings;
        let (oa, ob) = self.outcomes;
        let mut dev: f64 = 0.0;
        for x in 0..sx {
            for a in 0..oa {
                let m: Vec<f64> = (0..sy).map(|y| (0..ob).map(|b| self.get(x, y, a, b)).sum()).collect();
                dev = m.iter().fold(dev, |d, v| d.max((v - m[0]).abs()));
            }
        }
        for y in 0..sy {
            for b in 0..ob {
                let m: Vec<f64> = (0..sx).map(|x| (0..oa).map(|a| self.get(x, y, a, b)).sum()).collect();
                dev = m.iter().fold(dev, |d, v| d.max((v - m[0]).abs()));
            }
        }
        dev
    }

    /// `setting_a,setting_b,outcome_a,outcome_b,p`; binary outcomes are
    /// written as `1` / `-1`, others as their index.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "setting_a,setting_b,outcome_a,outcome_b,p")?;
        let label = |k: usize, n: usize| match (n, k) {
            (2, 0) => "1".to_string(),
            (2, _) => "-1".to_string(),
            _ => k.to_string(),
        };
        for x in 0..self.settings.0 {
            for y in 0..self.settings.1 {
                for a in 0..self.outcomes.0 {
                    for b in 0..self.outcomes.1 {
                        writeln!(
                            w,
                            "{x},{y},{},{},{}",
                            label(a, self.outcomes.0),
                            label(b, self.outcomes.1),
                            crate::fmt::sig12(self.get(x, y, a, b))
                        )?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_conditionals(p: &[Vec<Vec<f64>>], lambdas: usize, what: &str) -> Result<(usize, usize)> {
    if p.len() != lambdas || p.is_empty() || p[0].is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: one table per hidden value required"
        )));
    }
    let (settings, outcomes) = (p[0].len(), p[0][0].len());
    for row in p.iter().flatten() {
        if row.len() != outcomes || row.iter().any(|&q| q < 0.0) {
            return Err(Error::InvalidState(format!("{what}: ragged or negative conditional")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { sum: s });
        }
    }
    if p.iter().any(|l| l.len() != settings) {
        return Err(Error::InvalidState(format!("{what}: ragged settings")));
    }
    Ok((settings, outcomes))
}

/// `P(a, b | x, y) = Σ_λ P(λ) P(a | x, λ) P(b | y, λ)`, with conditionals
/// indexed `[λ][setting][outcome]`.
pub fn bell_factorization(p_lambda: &[f64], p_a: &[Vec<Vec<f64>>], p_b: &[Vec<Vec<f64>>]) -> Result<Behavior> {
    let s: f64 = p_lambda.iter().sum();
    if p_lambda.iter().any(|&q| q < 0.0) || (s - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { sum: s });
    }
    let (sx, oa) = check_conditionals(p_a, p_lambda.len(), "p_a")?;
    let (sy, ob) = check_conditionals(p_b, p_lambda.len(), "p_b")?;
    let mut probs = Vec::with_capacity(sx * sy * oa * ob);
    #[allow(clippy::needless_range_loop)]
    for x in 0..sx {
        for y in 0..sy {
            for a in 0..oa {
                for b in 0..ob {
                    probs.push(
                        p_lambda
                            .iter()
                            .enumerate()
                            .map(|(l, pl)| pl * p_a[l][x][a] * p_b[l][y][b])
                            .sum(),
                    );
                }
            }
        }
    }
    Behavior::new((sx, sy), (oa, ob), probs)
}

/// Deterministic local strategy: for each hidden value, an outcome index per
/// setting for each party.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LhvStrategy {
    pub prior: Vec<f64>,
    /// `alice[λ][x]` is Alice's outcome index.
    pub alice: Vec<Vec<usize>>,
    pub bob: Vec<Vec<usize>>,
    pub outcomes: (usize, usize),
}

impl LhvStrategy {
    pub fn deterministic(alice: Vec<usize>, bob: Vec<usize>, outcomes: (usize, usize)) -> Self {
        Self {
            prior: vec![1.0],
            alice: vec![alice],
            bob: vec![bob],
            outcomes,
        }
    }

    pub fn behavior(&self) -> Result<Behavior> {
        let indicator = |resp: &[Vec<usize>], n: usize| -> Result<Vec<Vec<Vec<f64>>>> {
            resp.iter()
                .map(|row| {
                    row.iter()
                        .map(|&o| {
                            if o >= n {
                                return Err(Error::OutOfRange(format!("outcome {o} ≥ {n}")));
                            }
                            Ok((0..n).map(|k| if k == o { 1.0 } else { 0.0 }).collect())
                        })
                        .collect()
                })
                .collect()
        };
        bell_factorization(
            &self.prior,
            &indicator(&self.alice, self.outcomes.0)?,
            &indicator(&self.bob, self.outcomes.1)?,
        )
    }
}

/// Best CHSH value over the 16 deterministic strategy pairs for two binary
/// settings and outcomes, with a maximising strategy.
pub fn lhv_chsh_optimum() -> (f64, LhvStrategy) {
    let mut best: Option<(f64, LhvStrategy)> = None;
    for code in 0..16usize {
        let alice = vec![code & 1, (code >> 1) & 1];
        let bob = vec![(code >> 2) & 1, (code >> 3) & 1];
        let strategy = LhvStrategy::deterministic(alice, bob, (2, 2));
        let s = strategy
            .behavior()
            .and_then(|b| b.chsh())
            .expect("deterministic binary strategies are valid");
        if best.as_ref().is_none_or(|(v, _)| s > *v) {
            best = Some((s, strategy));
        }
    }
    best.expect("sixteen candidates")
}

pub fn lhv_chsh_max() -> f64 {
    lhv_chsh_optimum().0
}

/// Screening set for a correlation between `a` and `b`: `None` when they
/// are uncorrelated or one causes the other, otherwise the smallest set of
/// common ancestors (by size, then lexicographically by node order) given
/// which they are independent.
pub fn crccp_screening_set(dag: &ClassicalDag, table: &JointTable, a: &str, b: &str) -> Result<Option<Vec<String>>> {
    if !markov_check(dag, table)?.holds {
        return Err(Error::NotMarkov);
    }
    let order: Vec<&str> = dag.names().iter().map(String::as_str).collect();
    let t = table.permuted(&order)?;
    let (ia, ib) = (dag.index_of(a)?, dag.index_of(b)?);
    if ia == ib {
        return Err(Error::OverlappingSets(format!("{a} paired with itself")));
    }
    if t.conditionally_independent(&[ia], &[ib], &[], PROB_TOL) {
        return Ok(None);
    }
    if dag.has_directed_path(ia, ib) || dag.has_directed_path(ib, ia) {
        return Ok(None);
    }
    let common = dag.common_ancestors(ia, ib);
    for size in 0..=common.len() {
        for subset in combinations(&common, size) {
            if t.conditionally_independent(&[ia], &[ib], &subset, PROB_TOL) {
                return Ok(Some(subset.iter().map(|&v| dag.names[v].clone()).collect()));
            }
        }
    }
    Err(Error::ScreeningFailed(
        common.iter().map(|&v| dag.names[v].clone()).collect(),
    ))
}

/// k-subsets of `items` in lexicographic order of positions.
pub(crate) fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > items.len() {
        return out;
    }
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + items.len() - k) else {
            return out;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// A value assignment `variable = value`.
pub type Assignment = (String, usize);

/// Certifying event for the reality criterion.
///
/// When `p(A | a ∧ B) = 1`, searches value assignments `C` over variables
/// not mentioned in `A`, `a` or `B` (smallest first) such that
/// `p(A | a ∧ C) = 1` and `A`, `B` factorize given `a ∧ C` and given
/// `a ∧ ¬C`. Returns `None` when the premise fails or nothing qualifies.
pub fn reality_criterion_check(
    table: &JointTable,
    outcome: (&str, usize),
    setting: (&str, usize),
    predictor: (&str, usize),
) -> Result<Option<Vec<Assignment>>> {
    let resolve = |(n, v): (&str, usize)| -> Result<(usize, usize)> {
        let i = table.index_of(n)?;
        if v >= table.shape.cards[i] {
            return Err(Error::OutOfRange(format!("{n} = {v} exceeds cardinality")));
        }
        Ok((i, v))
    };
    let (ea, es, eb) = (resolve(outcome)?, resolve(setting)?, resolve(predictor)?);
    let p_sb = table.event_prob(&[es, eb]);
    if p_sb <= 0.0 {
        return Err(Error::ZeroProbability);
    }
    if table.event_prob(&[ea, es, eb]) / p_sb < 1.0 - PROB_TOL {
        return Ok(None);
    }
    let free: Vec<usize> = (0..table.names.len())
        .filter(|v| ![ea.0, es.0, eb.0].contains(v))
        .collect();
    // per-assignment probabilities p(a ∧ X) for the four A/B combinations
    let shape = &table.shape;
    for size in 1..=free.len() {
        for vars in combinations(&free, size) {
            let sub = Shape::new(&vars.iter().map(|&v| shape.cards[v]).collect::<Vec<_>>());
            for code in 0..sub.size {
                let vals = sub.unravel(code);
                let c_event: Vec<(usize, usize)> = vars.iter().copied().zip(vals.iter().copied()).collect();
                if certifies(table, ea, es, eb, &c_event) {
                    return Ok(Some(
                        c_event.iter().map(|&(v, x)| (table.names[v].clone(), x)).collect(),
                    ));
                }
            }
        }
    }
    Ok(None)
}

fn certifies(
    t: &JointTable,
    ea: (usize, usize),
    es: (usize, usize),
    eb: (usize, usize),
    c_event: &[(usize, usize)],
) -> bool {
    // mass of (a, C or ¬C) split by whether A and B hold
    let mut m = [[[0.0f64; 2]; 2]; 2];
    for (idx, &p) in t.probs.iter().enumerate() {
        let x = t.shape.unravel(idx);
        if x[es.0] != es.1 {
            continue;
        }
        let in_c = c_event.iter().all(|&(v, val)| x[v] == val);
        m[usize::from(!in_c)][usize::from(x[ea.0] == ea.1)][usize::from(x[eb.0] == eb.1)] += p;
    }
    let screens = |k: usize| {
        let tot: f64 = m[k].iter().flatten().sum();
        if tot <= 0.0 {
            return true;
        }
        let pa = m[k][1][0] + m[k][1][1];
        let pb = m[k][0][1] + m[k][1][1];
        (m[k][1][1] / tot - (pa / tot) * (pb / tot)).abs() <= PROB_TOL
    };
    let c_mass: f64 = m[0].iter().flatten().sum();
    c_mass > 0.0 && (m[0][1][0] + m[0][1][1]) / c_mass >= 1.0 - PROB_TOL && screens(0) && screens(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    pub(crate) fn five_node_dag() -> ClassicalDag {
        ClassicalDag::new(
            vec![("A", 2), ("B", 2), ("C", 2), ("D", 2), ("E", 2)],
            vec![("A", "B"), ("A", "C"), ("B", "D"), ("C", "D"), ("C", "E")],
        )
        .unwrap()
    }

    fn spec(names: &[&str]) -> Vec<VariableSpec> {
        names
            .iter()
            .map(|n| VariableSpec {
                name: n.to_string(),
                cardinality: 2,
            })
            .collect()
    }

    #[test]
    fn rejects_cycles_and_unknown_endpoints() {
        assert!(ClassicalDag::new(vec![("A", 2), ("B", 2)], vec![("A", "B"), ("B", "A")]).is_err());
        assert!(ClassicalDag::new(vec![("A", 2)], vec![("A", "Z")]).is_err());
        assert!(ClassicalDag::new(vec![("A", 2)], vec![("A", "A")]).is_err());
    }

    #[test]
    fn ancestry_conventions() {
        let g = five_node_dag();
        let anc = g.ancestors(&[3]);
        assert_eq!(anc, vec![true, true, true, true, false]);
        assert!(g.descendants(&[2])[2]);
        assert!(!g.parents(2).contains(&2));
        assert!(g.has_directed_path(0, 3));
        assert!(!g.has_directed_path(1, 2));
        assert!(!g.has_directed_path(1, 1));
        assert_eq!(g.common_ancestors(1, 2), vec![0]);
    }

    #[test]
    fn d_separation_examples() {
        let g = five_node_dag();
        assert!(d_separated(&g, &["B"], &["C"], &["A"]).unwrap());
        assert!(!d_separated(&g, &["B"], &["C"], &[]).unwrap());
        assert!(!d_separated(&g, &["B"], &["C"], &["A", "D"]).unwrap());
        let collider = ClassicalDag::new(vec![("A", 2), ("B", 2), ("D", 2)], vec![("A", "D"), ("B", "D")]).unwrap();
        assert!(d_separated(&collider, &["A"], &["B"], &[]).unwrap());
        assert!(!d_separated(&collider, &["A"], &["B"], &["D"]).unwrap());
        let chain = ClassicalDag::new(vec![("A", 2), ("B", 2), ("C", 2)], vec![("A", "B"), ("B", "C")]).unwrap();
        assert!(d_separated(&chain, &["A"], &["C"], &["B"]).unwrap());
        assert!(matches!(
            d_separated(&chain, &["A"], &["A"], &[]),
            Err(Error::OverlappingSets(_))
        ));
    }

    #[test]
    fn table_validation() {
        assert!(JointTable::new(spec(&["A"]), vec![0.5, 0.6]).is_err());
        assert!(JointTable::new(spec(&["A"]), vec![1.5, -0.5]).is_err());
        assert!(JointTable::new(spec(&["A"]), vec![1.0]).is_err());
        let t = JointTable::new(spec(&["A", "B"]), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(t.prob(&[1, 0]), 0.3);
        assert!((t.marginal(&[1])[1] - 0.6).abs() < 1e-15);
        let swapped = t.permuted(&["B", "A"]).unwrap();
        assert_eq!(swapped.prob(&[0, 1]), 0.3);
    }

    #[test]
    fn markov_examples() {
        let edgeless = ClassicalDag::new(vec![("A", 2), ("B", 2)], Vec::<(&str, &str)>::new()).unwrap();
        let coins = JointTable::new(spec(&["A", "B"]), vec![0.25; 4]).unwrap();
        assert!(markov_check(&edgeless, &coins).unwrap().holds);
        let copy = JointTable::new(spec(&["A", "B"]), vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let r = markov_check(&edgeless, &copy).unwrap();
        assert!(!r.holds && !r.factorizes && !r.local_markov);
        assert_eq!(r.violations, vec![("A".to_string(), "B".to_string())]);
        let mut rng = rng::seeded(3);
        let g = five_node_dag();
        let t = g.random_markov_table(&mut rng);
        let r = markov_check(&g, &t).unwrap();
        assert!(r.holds, "{r:?}");
        let three = JointTable::new(spec(&["A", "B", "C"]), vec![0.125; 8]).unwrap();
        assert!(markov_check(&edgeless, &three).is_err());
    }

    #[test]
    fn bell_examples() {
        // λ ∈ {0, 1}: Alice outputs λ, Bob outputs 1 − λ, for every setting
        let p_a = vec![vec![vec![1.0, 0.0]; 2], vec![vec![0.0, 1.0]; 2]];
        let p_b = vec![vec![vec![0.0, 1.0]; 2], vec![vec![1.0, 0.0]; 2]];
        let det = bell_factorization(&[1.0, 0.0], &p_a, &p_b).unwrap();
        assert_eq!(det.get(0, 0, 0, 0) + det.get(0, 0, 1, 1), 0.0);
        let mixed = bell_factorization(&[0.5, 0.5], &p_a, &p_b).unwrap();
        assert_eq!(mixed.correlator(0, 0).unwrap(), -1.0);
        assert_eq!(mixed.correlator(1, 0).unwrap(), -1.0);
        assert_eq!(mixed.signaling(), 0.0);
        assert!(mixed.chsh().unwrap().abs() <= 2.0 + 1e-12);
    }

    #[test]
    fn lhv_bound() {
        let (s, strategy) = lhv_chsh_optimum();
        assert_eq!(s, 2.0);
        assert_eq!(lhv_chsh_max(), 2.0);
        assert_eq!(strategy.behavior().unwrap().chsh().unwrap(), 2.0);
        let plus = LhvStrategy::deterministic(vec![0, 0], vec![0, 0], (2, 2));
        assert_eq!(plus.behavior().unwrap().chsh().unwrap(), 2.0);
    }

    #[test]
    fn screening_examples() {
        let g = five_node_dag();
        let t = g.random_markov_table(&mut rng::seeded(5));
        assert_eq!(
            crccp_screening_set(&g, &t, "B", "C").unwrap(),
            Some(vec!["A".to_string()])
        );
        assert_eq!(crccp_screening_set(&g, &t, "A", "D").unwrap(), None);
        let roots = ClassicalDag::new(vec![("A", 2), ("B", 2)], Vec::<(&str, &str)>::new()).unwrap();
        let coins = JointTable::new(spec(&["A", "B"]), vec![0.25; 4]).unwrap();
        assert_eq!(crccp_screening_set(&roots, &coins, "A", "B").unwrap(), None);
        let copy = JointTable::new(spec(&["A", "B"]), vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert!(matches!(
            crccp_screening_set(&roots, &copy, "A", "B"),
            Err(Error::NotMarkov)
        ));
    }

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(combinations(&[3, 5, 7], 2), vec![vec![3, 5], vec![3, 7], vec![5, 7]]);
        assert_eq!(combinations(&[1, 2], 0), vec![Vec::<usize>::new()]);
        assert!(combinations(&[1], 2).is_empty());
    }

    /// L → A (through setting S), L → B: B copies L, A = L when S = 1.
    fn copy_table() -> JointTable {
        let vars = spec(&["L", "S", "A", "B"]);
        let mut probs = vec![0.0; 16];
        let shape = Shape::new(&[2; 4]);
        for l in 0..2 {
            for s in 0..2 {
                let a = if s == 1 { l } else { 0 };
                probs[shape.ravel(&[l, s, a, l])] += 0.25;
            }
        }
        JointTable::new(vars, probs).unwrap()
    }

    #[test]
    fn reality_criterion_copy() {
        let t = copy_table();
        let c = reality_criterion_check(&t, ("A", 1), ("S", 1), ("B", 1)).unwrap();
        assert_eq!(c, Some(vec![("L".to_string(), 1)]));
        assert!(matches!(
            reality_criterion_check(&t, ("A", 1), ("S", 1), ("A", 5)),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn reality_criterion_premise_fails() {
        // B predicts A with probability 0.9
        let vars = spec(&["S", "A", "B"]);
        let shape = Shape::new(&[2; 3]);
        let mut probs = vec![0.0; 8];
        probs[shape.ravel(&[1, 1, 1])] = 0.45;
        probs[shape.ravel(&[1, 0, 1])] = 0.05;
        probs[shape.ravel(&[1, 0, 0])] = 0.5;
        let t = JointTable::new(vars, probs).unwrap();
        assert_eq!(reality_criterion_check(&t, ("A", 1), ("S", 1), ("B", 1)).unwrap(), None);
        assert!(matches!(
            reality_criterion_check(&t, ("A", 1), ("S", 0), ("B", 1)),
            Err(Error::ZeroProbability)
        ));
    }

    #[test]
    fn json_round_trip() {
        let g = five_node_dag();
        let text = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<ClassicalDag>(&text).unwrap(), g);
        let t = g.random_markov_table(&mut rng::seeded(1));
        let back: JointTable = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<ClassicalDag>(
            r#"{"nodes":[{"name":"A","cardinality":2}],"edges":[["A","B"]]}"#
        )
        .is_err());
    }
}
