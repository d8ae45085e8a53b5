//! Stable determination chains (SDCs).
//!
//! A chain has layers `0..=N`. Layer `N` holds `n_N` systems and every layer
//! below it is `G` times larger: the systems of layer `i` are cut into groups
//! of `G`, and group `k` acts as the environment that decoheres system `k` of
//! layer `i + 1`. Layer 0 holds the initiators. Step `i` runs the interactions
//! from layer `i` to layer `i + 1` for a duration `Δ`, with pointer basis
//! `σ_z` on even steps and `σ_x` on odd steps; its events are stamped
//! `t = (i + 1)·Δ`.

mod graph;
mod simulate;

pub use graph::{build_graph, validate_cdc, CdcViolation, LayerDescriptor, SdcGraph, SystemNode};
pub use simulate::{
    dissolve_at, simulate_chain, simulate_chain_with, timescale_ordering_check, ChainRun, Event, NodeValues,
    OrderingReport, StepSummary,
};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::decoherence::{CouplingKind, DecoherenceTimeConvention, TimeGrid};
use crate::quantum::{c, C64};
use crate::{Error, Result};

/// Default cap on the number of systems in a chain.
pub const DEFAULT_NODE_CAP: u64 = 10_000_000;

/// Seeds used to calibrate `Δ` in auto mode.
pub const AUTO_CALIBRATION_SEEDS: usize = 32;

/// Interaction duration per step.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum StepDuration {
    Fixed(f64),
    /// Mean decoherence time of a calibration ensemble at the chain's `G`.
    #[default]
    Auto,
}

impl Serialize for StepDuration {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            StepDuration::Fixed(d) => s.serialize_f64(*d),
            StepDuration::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for StepDuration {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(StepDuration::Fixed(x)),
            Raw::Str(s) if s == "auto" => Ok(StepDuration::Auto),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a duration in seconds or \"auto\", got \"{s}\""
            ))),
        }
    }
}

/// Target amplitudes `(a, b)` in the pointer basis of the step, as
/// `[re, im]` pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetAmplitudes {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl Default for TargetAmplitudes {
    fn default() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            a: [h, 0.0],
            b: [h, 0.0],
        }
    }
}

impl TargetAmplitudes {
    pub fn pair(&self) -> (C64, C64) {
        (c(self.a[0], self.a[1]), c(self.b[0], self.b[1]))
    }
}

fn default_trace_samples() -> usize {
    64
}

fn default_node_cap() -> u64 {
    DEFAULT_NODE_CAP
}

/// Parameters of one chain simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    /// Total number of layers, `N + 1`.
    pub num_layers: usize,
    /// Systems in the last layer, `n_N`.
    pub last_layer_count: u64,
    pub group_size: usize,
    #[serde(default)]
    pub coupling: CouplingKind,
    #[serde(default)]
    pub step_duration: StepDuration,
    pub seed: u64,
    #[serde(default)]
    pub dissolve_after_layer: Option<usize>,
    #[serde(default)]
    pub target_amplitudes: TargetAmplitudes,
    /// Grid used when measuring per-step decoherence times.
    #[serde(default)]
    pub time_grid: TimeGrid,
    #[serde(default)]
    pub convention: DecoherenceTimeConvention,
    /// Targets per step whose full trace is measured.
    #[serde(default = "default_trace_samples")]
    pub trace_samples: usize,
    #[serde(default = "default_node_cap")]
    pub node_cap: u64,
}

impl ChainConfig {
    pub fn new(num_layers: usize, last_layer_count: u64, group_size: usize, seed: u64) -> Self {
        Self {
            num_layers,
            last_layer_count,
            group_size,
            coupling: CouplingKind::default(),
            step_duration: StepDuration::Auto,
            seed,
            dissolve_after_layer: None,
            target_amplitudes: TargetAmplitudes::default(),
            time_grid: TimeGrid::default(),
            convention: DecoherenceTimeConvention::default(),
            trace_samples: default_trace_samples(),
            node_cap: DEFAULT_NODE_CAP,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.step_duration = StepDuration::Fixed(delta);
        self
    }

    pub fn with_dissolution(mut self, after_step: usize) -> Self {
        self.dissolve_after_layer = Some(after_step);
        self
    }

    /// Index of the last layer, `N`.
    pub fn last_layer(&self) -> usize {
        self.num_layers.saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Err(Error::Config { field, reason });
        if self.num_layers < 2 {
            return bad("num_layers", format!("need at least 2 layers, got {}", self.num_layers));
        }
        if self.last_layer_count < 1 {
            return bad("last_layer_count", "must be at least 1".into());
        }
        if self.group_size < 1 {
            return bad("group_size", "must be at least 1".into());
        }
        if let StepDuration::Fixed(d) = self.step_duration {
            if !(d > 0.0) || !d.is_finite() {
                return bad("step_duration", format!("must be positive, got {d}"));
            }
        }
        if let Some(k) = self.dissolve_after_layer {
            if k > self.last_layer() {
                return bad(
                    "dissolve_after_layer",
                    format!("must be at most {}, got {k}", self.last_layer()),
                );
            }
        }
        let (a, b) = self.target_amplitudes.pair();
        if ((a.norm_sqr() + b.norm_sqr()) - 1.0).abs() > 1e-12 {
            return bad("target_amplitudes", "|a|²+|b|² must equal 1".into());
        }
        self.coupling.validate()?;
        self.time_grid.validate()?;
        let total = count_events(self)?;
        if total > self.node_cap {
            return bad(
                "node_cap",
                format!("chain has {total} systems, cap is {}", self.node_cap),
            );
        }
        Ok(())
    }
}

fn overflow() -> Error {
    Error::Config {
        field: "group_size",
        reason: "chain size overflows 64 bits".into(),
    }
}

/// Systems in layer `i`: `n_N · G^(N − i)`.
pub fn layer_size(cfg: &ChainConfig, layer: usize) -> Result<u64> {
    let n = cfg.last_layer();
    if layer > n {
        return Err(Error::OutOfRange(format!("layer {layer} > N = {n}")));
    }
    let g = cfg.group_size as u64;
    let pow = g.checked_pow((n - layer) as u32).ok_or_else(overflow)?;
    cfg.last_layer_count.checked_mul(pow).ok_or_else(overflow)
}

/// Total systems across all layers, `Σ_{i=0}^{N} n_N·G^i`: every system takes
/// part in at least one event.
pub fn count_events(cfg: &ChainConfig) -> Result<u64> {
    (0..=cfg.last_layer()).try_fold(0u64, |acc, i| acc.checked_add(layer_size(cfg, i)?).ok_or_else(overflow))
}

/// The three ways of counting a chain's activity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    /// Systems with a determinate value (`count_events`).
    pub systems: u64,
    /// Environment → target pairs.
    pub edges: u64,
    /// Group → target interactions (one per non-initiator).
    pub group_interactions: u64,
}

pub fn event_counts(cfg: &ChainConfig) -> Result<EventCounts> {
    let n = cfg.last_layer();
    let systems = count_events(cfg)?;
    let mut edges = 0u64;
    let mut groups = 0u64;
    for i in 0..n {
        edges = edges.checked_add(layer_size(cfg, i)?).ok_or_else(overflow)?;
        groups = groups.checked_add(layer_size(cfg, i + 1)?).ok_or_else(overflow)?;
    }
    Ok(EventCounts {
        systems,
        edges,
        group_interactions: groups,
    })
}
