//! Single-photon Mach–Zehnder interferometer over four channels.
//!
//! Basis `|1000⟩ … |0001⟩` puts the photon in channel 1 … 4. BS1 sends
//! channels 1, 2 to 3, 4; BS2 mixes 3 and 4, which end at D1 and D2. The
//! optional which-path detector D3 sits on channel 3 between the splitters,
//! flips a pointer `|E_0⟩ → |E_1⟩` and absorbs the photon, which is then
//! relabelled to channel 1.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fmt::sig12;
use crate::quantum::{c, sample_index, unitarity_deviation, CMatrix, C64};
use crate::{Error, Result};

const NORM_TOL: f64 = 1e-12;

pub const CHANNELS: usize = 4;

/// Photon amplitudes, optionally entangled with a detector pointer
/// (index `channel · 2 + pointer` when the register is present).
#[derive(Clone, Debug, PartialEq)]
pub struct FockState4 {
    amplitudes: Vec<C64>,
    register: bool,
}

impl FockState4 {
    pub fn new(amplitudes: [C64; CHANNELS]) -> Result<Self> {
        Self::checked(amplitudes.to_vec(), false)
    }

    pub fn with_register(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != 2 * CHANNELS {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for channels ⊗ pointer",
                amplitudes.len()
            )));
        }
        Self::checked(amplitudes, true)
    }

    fn checked(amplitudes: Vec<C64>, register: bool) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(C64::norm_sqr).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!("norm² {norm} differs from 1")));
        }
        Ok(Self { amplitudes, register })
    }

    /// Photon in `channel` (1-based).
    pub fn photon_in(channel: usize) -> Result<Self> {
        if !(1..=CHANNELS).contains(&channel) {
            return Err(Error::OutOfRange(format!("channel {channel} outside 1..=4")));
        }
        let mut a = [c(0.0, 0.0); CHANNELS];
        a[channel - 1] = c(1.0, 0.0);
        Self::new(a)
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn has_register(&self) -> bool {
        self.register
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(C64::norm_sqr).sum()
    }

    fn pointer_dim(&self) -> usize {
        if self.register {
            2
        } else {
            1
        }
    }

    /// Amplitude for the photon in `channel` (1-based) and pointer `e`.
    pub fn amplitude(&self, channel: usize, e: usize) -> C64 {
        self.amplitudes[(channel - 1) * self.pointer_dim() + e]
    }

    pub fn inner(&self, other: &FockState4) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Occupation-basis label of amplitude `index`, e.g. `|0010⟩|E0⟩`.
    pub fn label(&self, index: usize) -> String {
        let ch = index / self.pointer_dim();
        let occ: String = (0..CHANNELS).map(|k| if k == ch { '1' } else { '0' }).collect();
        if self.register {
            format!("|{occ}⟩|E{}⟩", index % 2)
        } else {
            format!("|{occ}⟩")
        }
    }

    /// Channel populations after tracing out the pointer.
    pub fn channel_populations(&self) -> [f64; CHANNELS] {
        let mut p = [0.0; CHANNELS];
        for (i, a) in self.amplitudes.iter().enumerate() {
            p[i / self.pointer_dim()] += a.norm_sqr();
        }
        p
    }

    /// Reduced density matrix over the four channels.
    pub fn reduced_channel_state(&self) -> CMatrix {
        let d = self.pointer_dim();
        CMatrix::from_fn(CHANNELS, CHANNELS, |i, j| {
            (0..d)
                .map(|e| self.amplitudes[i * d + e] * self.amplitudes[j * d + e].conj())
                .sum()
        })
    }

    /// `label,re,im` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "label,re,im")?;
        for (i, a) in self.amplitudes.iter().enumerate() {
            writeln!(w, "{},{},{}", self.label(i), sig12(a.re), sig12(a.im))?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Beamsplitter {
    Bs1,
    Bs2,
}

/// 50/50 block `[[1, i], [i, 1]]/√2`.
fn half_silvered() -> CMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_row_slice(2, 2, &[c(h, 0.0), c(0.0, h), c(0.0, h), c(h, 0.0)])
}

/// Channel-space unitary of a beamsplitter.
pub fn beamsplitter_matrix(which: Beamsplitter) -> CMatrix {
    let b = half_silvered();
    let mut m = CMatrix::zeros(CHANNELS, CHANNELS);
    match which {
        Beamsplitter::Bs1 => {
            m.view_mut((2, 0), (2, 2)).copy_from(&b);
            m.view_mut((0, 2), (2, 2)).copy_from(&b);
        }
        Beamsplitter::Bs2 => {
            m[(0, 0)] = c(1.0, 0.0);
            m[(1, 1)] = c(1.0, 0.0);
            m.view_mut((2, 2), (2, 2)).copy_from(&b);
        }
    }
    debug_assert!(unitarity_deviation(&m) < 1e-15);
    m
}

/// Applies a beamsplitter to the channel factor.
pub fn beamsplitter(state: &FockState4, which: Beamsplitter) -> FockState4 {
    let u = beamsplitter_matrix(which);
    let d = state.pointer_dim();
    let mut out = vec![c(0.0, 0.0); state.amplitudes.len()];
    for i in 0..CHANNELS {
        for j in 0..CHANNELS {
            for e in 0..d {
                out[i * d + e] += u[(i, j)] * state.amplitudes[j * d + e];
            }
        }
    }
    FockState4 {
        amplitudes: out,
        register: state.register,
    }
}

/// Which-path detector with pointer states `|E_0⟩` (no signal), `|E_1⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorModel {
    /// Channel (1-based) the detector watches.
    pub placement: usize,
    /// Whether the pointer belongs to a determination chain, so that the
    /// final state yields an outcome table.
    pub sdc_connected: bool,
}

impl DetectorModel {
    pub fn d3(sdc_connected: bool) -> Self {
        Self {
            placement: 3,
            sdc_connected,
        }
    }
}

/// Entangles the pointer with the watched channel: a photon there flips the
/// pointer to `|E_1⟩` and is absorbed, relabelled to channel 1.
pub fn couple_detector(state: &FockState4, det: &DetectorModel) -> Result<FockState4> {
    if !(2..=CHANNELS).contains(&det.placement) {
        return Err(Error::OutOfRange(format!(
            "detector placement {} must be a channel in 2..=4",
            det.placement
        )));
    }
    if state.register {
        return Err(Error::InvalidState("state already carries a detector register".into()));
    }
    let mut out = vec![c(0.0, 0.0); 2 * CHANNELS];
    for ch in 1..=CHANNELS {
        let a = state.amplitudes[ch - 1];
        if ch == det.placement {
            out[1] += a;
        } else {
            out[(ch - 1) * 2] += a;
        }
    }
    FockState4::with_register(out)
}

/// Final state and, when every detector is chain-connected, the outcome
/// table `{detector: probability}`.
#[derive(Clone, Debug, PartialEq)]
pub struct MzRun {
    pub final_state: FockState4,
    pub table: Option<BTreeMap<String, f64>>,
}

impl MzRun {
    /// Draws the firing detector from the table.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<String> {
        let table = self.table.as_ref()?;
        let names: Vec<&String> = table.keys().collect();
        let weights: Vec<f64> = table.values().copied().collect();
        Some(names[sample_index(&weights, rng)].clone())
    }

    pub fn table_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.table)?)
    }
}

fn detector_name(channel: usize, pointer: usize) -> Option<&'static str> {
    match (channel, pointer) {
        (1, 1) => Some("D3"),
        (3, _) => Some("D1"),
        (4, _) => Some("D2"),
        _ => None,
    }
}

/// Runs BS1 → (D3) → BS2 on `|1000⟩`.
pub fn run_mz_with(detector: Option<DetectorModel>) -> Result<MzRun> {
    let mut state = beamsplitter(&FockState4::photon_in(1)?, Beamsplitter::Bs1);
    if let Some(det) = &detector {
        state = couple_detector(&state, det)?;
    }
    let state = beamsplitter(&state, Beamsplitter::Bs2);
    if detector.is_some_and(|d| !d.sdc_connected) {
        return Ok(MzRun {
            final_state: state,
            table: None,
        });
    }
    let mut table = BTreeMap::new();
    let d = state.pointer_dim();
    for (i, a) in state.amplitudes.iter().enumerate() {
        let p = a.norm_sqr();
        if p <= NORM_TOL {
            continue;
        }
        let name = detector_name(i / d + 1, i % d)
            .ok_or_else(|| Error::InvalidState(format!("amplitude on undetected {}", state.label(i))))?;
        *table.entry(name.to_string()).or_insert(0.0) += p;
    }
    Ok(MzRun {
        final_state: state,
        table: Some(table),
    })
}

/// With `detector_d3`, D3 is present and chain-connected.
pub fn run_mz(detector_d3: bool) -> Result<MzRun> {
    run_mz_with(detector_d3.then(|| DetectorModel::d3(true)))
}
