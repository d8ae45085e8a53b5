//! Spin-bath decoherence of a single target qubit.
//!
//! A target qubit `a|0⟩ + b|1⟩` couples to `G` environment spins through
//! `H = −Σ_j g_j σ_z ⊗ σ_z^(j)` (ħ = 1, no self-Hamiltonians). Tracing out the
//! bath leaves the populations untouched and multiplies the coherence by the
//! decoherence factor
//!
//! ```text
//! z(t) = Π_j [cos 2g_j t + i(|α_j|² − |β_j|²) sin 2g_j t]
//! ```
//!
//! Two evaluation routes are provided: the analytic product above (any `G`)
//! and an exact state-vector evolution of the `2^(G+1)`-dimensional joint
//! state (`G ≤ 20`), which serves as a cross-check.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exec::{self, Execution};
use crate::fmt::{round12, sig12};
use crate::quantum::{
    c, partial_trace_pure, sigma_x, sigma_z, von_neumann_entropy, CMatrix, CVector, DensityOperator, StateVector, C64,
};
use crate::{rng, Error, Result};

/// Largest bath handled by exact state-vector evolution.
pub const EXACT_MAX_BATH: usize = 20;

const NORM_TOL: f64 = 1e-12;

/// Pointer basis selected by an interaction Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointerBasis {
    Z,
    X,
}

impl PointerBasis {
    pub fn pauli(self) -> CMatrix {
        match self {
            PointerBasis::Z => sigma_z(),
            PointerBasis::X => sigma_x(),
        }
    }

    /// Eigenvectors for eigenvalues +1 and −1, in computational coordinates.
    pub fn eigenvectors(self) -> [[C64; 2]; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            PointerBasis::Z => [[c(1., 0.), c(0., 0.)], [c(0., 0.), c(1., 0.)]],
            PointerBasis::X => [[c(h, 0.), c(h, 0.)], [c(h, 0.), c(-h, 0.)]],
        }
    }

    /// Basis used at chain step `step`: z on even steps, x on odd steps.
    pub fn for_step(step: usize) -> Self {
        if step.is_multiple_of(2) {
            PointerBasis::Z
        } else {
            PointerBasis::X
        }
    }
}

impl std::fmt::Display for PointerBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PointerBasis::Z => "z",
            PointerBasis::X => "x",
        })
    }
}

fn check_pair(pair: (C64, C64), field: &'static str) -> Result<()> {
    let n = pair.0.norm_sqr() + pair.1.norm_sqr();
    if (n - 1.0).abs() > NORM_TOL {
        return Err(Error::Config {
            field,
            reason: format!("|α|²+|β|² = {n}, expected 1"),
        });
    }
    Ok(())
}

/// Target amplitudes, bath couplings and bath initial states for one
/// decoherence model. Amplitudes are expressed in the pointer basis.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinBathConfig {
    couplings: Vec<f64>,
    env_weights: Vec<(C64, C64)>,
    target_amps: (C64, C64),
}

impl SpinBathConfig {
    pub fn new(couplings: Vec<f64>, env_weights: Vec<(C64, C64)>, target_amps: (C64, C64)) -> Result<Self> {
        if couplings.is_empty() {
            return Err(Error::Config {
                field: "couplings",
                reason: "bath must contain at least one spin".into(),
            });
        }
        if couplings.len() != env_weights.len() {
            return Err(Error::Config {
                field: "env_weights",
                reason: format!("{} weights for {} couplings", env_weights.len(), couplings.len()),
            });
        }
        if couplings.iter().any(|g| !g.is_finite()) {
            return Err(Error::Config {
                field: "couplings",
                reason: "non-finite coupling".into(),
            });
        }
        for &w in &env_weights {
            check_pair(w, "env_weights")?;
        }
        check_pair(target_amps, "target_amps")?;
        Ok(Self {
            couplings,
            env_weights,
            target_amps,
        })
    }

    /// Bath spins in equal-weight superpositions; target `|+⟩`.
    pub fn equal_weight(couplings: Vec<f64>) -> Result<Self> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let w = vec![(c(h, 0.), c(h, 0.)); couplings.len()];
        Self::new(couplings, w, (c(h, 0.), c(h, 0.)))
    }

    pub fn with_target(mut self, a: C64, b: C64) -> Result<Self> {
        check_pair((a, b), "target_amps")?;
        self.target_amps = (a, b);
        Ok(self)
    }

    /// Random couplings in `[0, 1)`, random bath and target states.
    pub fn random<R: Rng + ?Sized>(bath_size: usize, rng: &mut R) -> Self {
        let couplings = (0..bath_size).map(|_| rng.random::<f64>()).collect();
        let pair = |rng: &mut R| {
            let s = StateVector::random(vec![2], rng);
            (s.amplitudes()[0], s.amplitudes()[1])
        };
        let env_weights = (0..bath_size).map(|_| pair(rng)).collect();
        let target_amps = pair(rng);
        Self {
            couplings,
            env_weights,
            target_amps,
        }
    }

    pub fn bath_size(&self) -> usize {
        self.couplings.len()
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn env_weights(&self) -> &[(C64, C64)] {
        &self.env_weights
    }

    pub fn target_amps(&self) -> (C64, C64) {
        self.target_amps
    }
}

/// Decoherence factor for arbitrary bath weights.
pub fn z_factor_general(cfg: &SpinBathConfig, t: f64) -> C64 {
    cfg.couplings
        .iter()
        .zip(&cfg.env_weights)
        .fold(c(1.0, 0.0), |acc, (&g, &(alpha, beta))| {
            let bias = alpha.norm_sqr() - beta.norm_sqr();
            let phase = 2.0 * g * t;
            acc * c(phase.cos(), bias * phase.sin())
        })
}

/// Decoherence factor when every bath spin has `|α| = |β|`.
pub fn z_factor_equal_weight(couplings: &[f64], t: f64) -> f64 {
    couplings.iter().map(|&g| (2.0 * g * t).cos()).product()
}

/// Reduced target state from the analytic factor:
/// `[[|a|², a b* z], [a* b z*, |b|²]]` in the pointer basis.
pub fn reduced_state_analytic(cfg: &SpinBathConfig, t: f64) -> DensityOperator {
    let (a, b) = cfg.target_amps;
    let z = z_factor_general(cfg, t);
    let off = a * b.conj() * z;
    let m = CMatrix::from_row_slice(2, 2, &[c(a.norm_sqr(), 0.0), off, off.conj(), c(b.norm_sqr(), 0.0)]);
    DensityOperator::from_parts(m, vec![2])
}

/// Dense interaction Hamiltonian `−Σ_j g_j σ_b ⊗ σ_b^(j)` on target ⊗ bath.
/// Only sensible for small baths (dimension `2^(G+1)`).
pub fn interaction_hamiltonian(couplings: &[f64], basis: PointerBasis) -> Result<CMatrix> {
    if couplings.len() > 10 {
        return Err(Error::DimensionCap {
            qubits: couplings.len() + 1,
        });
    }
    let dims = vec![2; couplings.len() + 1];
    let p = basis.pauli();
    let target = crate::quantum::embed(&p, 0, &dims);
    let dim = 1usize << dims.len();
    let mut h = CMatrix::zeros(dim, dim);
    for (j, &g) in couplings.iter().enumerate() {
        let env = crate::quantum::embed(&p, j + 1, &dims);
        h -= (&target * env) * c(g, 0.0);
    }
    Ok(h)
}

/// Exact evolution of target ⊗ bath for time `t` and the resulting reduced
/// target state. The target amplitudes are taken from `target` (the
/// configuration's own `target_amps` are ignored here).
pub fn entangle_step(target: &StateVector, cfg: &SpinBathConfig, t: f64) -> Result<(StateVector, DensityOperator)> {
    if target.dims() != [2] {
        return Err(Error::DimensionMismatch(format!(
            "target must be a single qubit, got dims {:?}",
            target.dims()
        )));
    }
    if t < 0.0 {
        return Err(Error::Config {
            field: "t",
            reason: "time must be non-negative".into(),
        });
    }
    let g = cfg.bath_size();
    if g > EXACT_MAX_BATH {
        return Err(Error::DimensionCap { qubits: g + 1 });
    }
    let mut joint = target.clone();
    for &(alpha, beta) in &cfg.env_weights {
        joint = crate::quantum::tensor_product(&joint, &StateVector::qubit(alpha, beta)?);
    }
    // H is diagonal in the computational basis: eigenvalue −s Σ_j g_j e_j with
    // s, e_j = ±1 the σ_z eigenvalues of target and bath spins.
    let n = g + 1;
    let amps = joint.amplitudes();
    let evolved = CVector::from_fn(amps.len(), |idx, _| {
        let spin = |q: usize| if (idx >> (n - 1 - q)) & 1 == 0 { 1.0 } else { -1.0 };
        let s = spin(0);
        let field: f64 = cfg.couplings.iter().enumerate().map(|(j, &gj)| gj * spin(j + 1)).sum();
        let energy = -s * field;
        amps[idx] * C64::from_polar(1.0, -energy * t)
    });
    let joint = StateVector::new(evolved, vec![2; n])?;
    let reduced = partial_trace_pure(&joint, &[0])?;
    Ok((joint, reduced))
}

/// Uniform sampling grid `0, step, 2·step, …, t_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub step: f64,
    pub t_max: f64,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            step: 0.01,
            t_max: 10.0,
        }
    }
}

impl TimeGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.t_max > 0.0) || !self.step.is_finite() || !self.t_max.is_finite() {
            return Err(Error::Config {
                field: "time_grid",
                reason: format!("step {} and t_max {} must be positive", self.step, self.t_max),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        (self.t_max / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.step).collect()
    }
}

/// Sustained-threshold rule for "z has gone to zero for good".
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceTimeConvention {
    pub epsilon: f64,
    pub window: f64,
}

impl Default for DecoherenceTimeConvention {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            window: 5.0,
        }
    }
}

/// Sampled decoherence factor with optional derived quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoherenceTrace {
    pub times: Vec<f64>,
    pub z_values: Vec<C64>,
    pub gamma: Option<f64>,
    pub decoherence_time: Option<f64>,
}

impl DecoherenceTrace {
    pub fn new(times: Vec<f64>, z_values: Vec<C64>) -> Result<Self> {
        if times.len() != z_values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} times vs {} values",
                times.len(),
                z_values.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidState("times must be strictly increasing".into()));
        }
        Ok(Self {
            times,
            z_values,
            gamma: None,
            decoherence_time: None,
        })
    }

    /// Samples `f` on the grid.
    pub fn from_fn(grid: &TimeGrid, f: impl Fn(f64) -> C64) -> Result<Self> {
        grid.validate()?;
        let times = grid.times();
        let z_values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, z_values)
    }

    pub fn for_config(cfg: &SpinBathConfig, grid: &TimeGrid) -> Result<Self> {
        Self::from_fn(grid, |t| z_factor_general(cfg, t))
    }

    pub fn for_equal_weight(couplings: &[f64], grid: &TimeGrid) -> Result<Self> {
        Self::from_fn(grid, |t| c(z_factor_equal_weight(couplings, t), 0.0))
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn abs_values(&self) -> Vec<f64> {
        self.z_values.iter().map(|z| z.norm()).collect()
    }

    /// Fills `gamma` and `decoherence_time`; a failed fit leaves `gamma` empty.
    pub fn analyze(mut self, conv: &DecoherenceTimeConvention) -> Self {
        self.decoherence_time = estimate_decoherence_time(&self, conv.epsilon, conv.window);
        self.gamma = fit_gaussian_decay(&self).ok().map(|f| f.gamma);
        self
    }

    /// CSV with header `t,re_z,im_z,abs_z`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,re_z,im_z,abs_z")?;
        for (t, z) in self.times.iter().zip(&self.z_values) {
            writeln!(w, "{},{},{},{}", sig12(*t), sig12(z.re), sig12(z.im), sig12(z.norm()))?;
        }
        Ok(())
    }

    /// Plot data: CSV with header `t,abs_z`.
    pub fn write_abs_csv<W: Write>(&self, mut w: W) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyTrace);
        }
        writeln!(w, "t,abs_z")?;
        for (t, z) in self.times.iter().zip(&self.z_values) {
            writeln!(w, "{},{}", sig12(*t), sig12(z.norm()))?;
        }
        Ok(())
    }

    pub fn sidecar(&self, conv: &DecoherenceTimeConvention) -> TraceSidecar {
        TraceSidecar {
            samples: self.len(),
            gamma: self.gamma.map(round12),
            decoherence_time: self.decoherence_time.map(round12),
            epsilon: conv.epsilon,
            window: conv.window,
        }
    }
}

/// JSON summary written next to a trace CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSidecar {
    pub samples: usize,
    pub gamma: Option<f64>,
    pub decoherence_time: Option<f64>,
    pub epsilon: f64,
    pub window: f64,
}

/// How the bath couplings are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum CouplingKind {
    Uniform { lo: f64, hi: f64 },
    Fixed { values: Vec<f64> },
}

impl Default for CouplingKind {
    fn default() -> Self {
        CouplingKind::Uniform { lo: 0.0, hi: 1.0 }
    }
}

impl CouplingKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            CouplingKind::Uniform { lo, hi } if !(lo < hi) || !lo.is_finite() || !hi.is_finite() => {
                Err(Error::Config {
                    field: "couplings",
                    reason: format!("uniform requires lo < hi, got [{lo}, {hi})"),
                })
            }
            CouplingKind::Fixed { values } if values.iter().any(|g| !g.is_finite()) => Err(Error::Config {
                field: "couplings",
                reason: "non-finite fixed coupling".into(),
            }),
            _ => Ok(()),
        }
    }

    /// Draws `n` couplings from `rng`.
    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.validate()?;
        match self {
            CouplingKind::Uniform { lo, hi } => Ok((0..n).map(|_| rng.random_range(*lo..*hi)).collect()),
            CouplingKind::Fixed { values } if values.len() == n => Ok(values.clone()),
            CouplingKind::Fixed { values } => Err(Error::Config {
                field: "couplings",
                reason: format!("{} fixed couplings for a bath of {n}", values.len()),
            }),
        }
    }
}

/// A coupling law together with the seed it is sampled under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingDistribution {
    pub kind: CouplingKind,
    pub seed: u64,
}

impl CouplingDistribution {
    pub fn uniform(lo: f64, hi: f64, seed: u64) -> Self {
        Self {
            kind: CouplingKind::Uniform { lo, hi },
            seed,
        }
    }

    pub fn sample(&self, n: usize) -> Result<Vec<f64>> {
        self.kind.sample_with(n, &mut rng::seeded(self.seed))
    }
}

/// Result of a least-squares fit of `ln|z| = −Γ² t²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianFit {
    pub gamma: f64,
    /// RMS of the `ln|z|` misfit over the fitted samples.
    pub rms_residual: f64,
    pub points: usize,
}

/// Band of `|z|` used for the Gaussian fit.
pub const FIT_BAND: (f64, f64) = (0.1, 0.999);
pub const MIN_FIT_POINTS: usize = 10;

/// Fits the early-time Gaussian decay `|z| ≈ exp(−Γ² t²)`.
///
/// Uses samples with `|z|` inside [`FIT_BAND`] up to the first time `|z|`
/// falls below the band, so later revivals do not enter the fit.
pub fn fit_gaussian_decay(trace: &DecoherenceTrace) -> Result<GaussianFit> {
    let (lo, hi) = FIT_BAND;
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (&t, z) in trace.times.iter().zip(&trace.z_values) {
        let a = z.norm();
        if a <= lo {
            break;
        }
        if t > 0.0 && a < hi {
            pts.push((t * t, a.ln()));
        }
    }
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData {
            found: pts.len(),
            needed: MIN_FIT_POINTS,
        });
    }
    // ln|z| = −k t², least squares through the origin in t²
    let num: f64 = pts.iter().map(|&(x, y)| x * y).sum();
    let den: f64 = pts.iter().map(|&(x, _)| x * x).sum();
    let k = (-num / den).max(0.0);
    let rss: f64 = pts.iter().map(|&(x, y)| (y + k * x).powi(2)).sum();
    Ok(GaussianFit {
        gamma: k.sqrt(),
        rms_residual: (rss / pts.len() as f64).sqrt(),
        points: pts.len(),
    })
}

/// Smallest sampled time `T` with `|z(t)| < epsilon` for every sample in
/// `[T, T + window]`, where the window must fit inside the trace.
pub fn estimate_decoherence_time(trace: &DecoherenceTrace, epsilon: f64, window: f64) -> Option<f64> {
    let n = trace.len();
    if n == 0 || !(window > 0.0) {
        return None;
    }
    let t_end = *trace.times.last()?;
    let slack = 1e-9 * window.max(1.0);
    let abs = trace.abs_values();
    // next_bad[i]: first index ≥ i with |z| ≥ epsilon
    let mut next_bad = vec![n; n + 1];
    for i in (0..n).rev() {
        next_bad[i] = if abs[i] >= epsilon { i } else { next_bad[i + 1] };
    }
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        let t = trace.times[i];
        if t + window > t_end + slack {
            break;
        }
        let nb = next_bad[i];
        if nb == n || trace.times[nb] > t + window + slack {
            return Some(t);
        }
    }
    None
}

/// `S(ρ)/ln N`, the normalised entropy of a reduced state.
pub fn differentiation_degree(rho: &DensityOperator) -> Result<f64> {
    let n = rho.dim();
    if n < 2 {
        return Err(Error::DimensionMismatch(
            "differentiation degree needs dimension ≥ 2".into(),
        ));
    }
    Ok((von_neumann_entropy(rho) / (n as f64).ln()).clamp(0.0, 1.0))
}

/// Decoherence times for an ensemble of equal-weight baths, one per seed.
pub fn ensemble_decoherence_times(
    bath_size: usize,
    kind: &CouplingKind,
    seeds: &[u64],
    grid: &TimeGrid,
    conv: &DecoherenceTimeConvention,
    exec: Execution,
) -> Result<Vec<Option<f64>>> {
    kind.validate()?;
    grid.validate()?;
    exec::map_slice(seeds, exec, |&seed| {
        let couplings = CouplingDistribution {
            kind: kind.clone(),
            seed,
        }
        .sample(bath_size)?;
        let trace = DecoherenceTrace::for_equal_weight(&couplings, grid)?;
        Ok(estimate_decoherence_time(&trace, conv.epsilon, conv.window))
    })
    .into_iter()
    .collect()
}

/// Mean of the defined entries; `None` when every entry is undefined.
pub fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// Time average of `|z|` over `[from, to]` for each seed's equal-weight bath.
pub fn ensemble_time_averaged_abs_z(
    bath_size: usize,
    kind: &CouplingKind,
    seeds: &[u64],
    grid: &TimeGrid,
    from: f64,
    to: f64,
    exec: Execution,
) -> Result<Vec<f64>> {
    kind.validate()?;
    grid.validate()?;
    let times: Vec<f64> = grid
        .times()
        .into_iter()
        .filter(|&t| t >= from - 1e-12 && t <= to + 1e-12)
        .collect();
    if times.is_empty() {
        return Err(Error::EmptyTrace);
    }
    exec::map_slice(seeds, exec, |&seed| {
        let couplings = CouplingDistribution {
            kind: kind.clone(),
            seed,
        }
        .sample(bath_size)?;
        let sum: f64 = times.iter().map(|&t| z_factor_equal_weight(&couplings, t).abs()).sum();
        Ok(sum / times.len() as f64)
    })
    .into_iter()
    .collect()
}
