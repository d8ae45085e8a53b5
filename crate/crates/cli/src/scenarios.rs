//! One runner per scenario: parse parameters, compute, write artifacts.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use endqt::causal_classical::{
    crccp_screening_set, d_separated, lhv_chsh_max, markov_check, Behavior, ClassicalDag, JointTable, PROB_TOL,
};
use endqt::causal_quantum::{bell_scenario, chsh_value, ewf_scenario, TSIRELSON_ANGLES};
use endqt::decoherence::{
    ensemble_decoherence_times, ensemble_time_averaged_abs_z, fit_gaussian_decay, mean_defined, CouplingDistribution,
    CouplingKind, DecoherenceTimeConvention, DecoherenceTrace, TimeGrid,
};
use endqt::exec::Execution;
use endqt::interferometer::{run_mz_with, DetectorModel};
use endqt::rng;
use endqt::sdc::{simulate_chain_with, timescale_ordering_check, validate_cdc, ChainConfig, StepDuration};
use serde::{Deserialize, Serialize};

use crate::config::{CliError, Scenario, ScenarioConfig};
use crate::emit_plot_data;
use crate::report::{ArtifactSink, Headlines};

pub(crate) fn dispatch(cfg: &ScenarioConfig, sink: &mut ArtifactSink, h: &mut Headlines) -> Result<(), CliError> {
    match cfg.scenario {
        Scenario::Trace => trace(cfg, sink, h),
        Scenario::Sdc => sdc(cfg, sink, h),
        Scenario::Bell => bell(cfg, sink, h),
        Scenario::Chsh => chsh(cfg, sink, h),
        Scenario::Ewf => ewf(cfg, sink, h),
        Scenario::Mz => mz(cfg, sink, h),
        Scenario::Ccm => ccm(cfg, sink, h),
    }
}

fn runtime(e: endqt::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn check_finite(field: &str, values: &[f64]) -> Result<(), CliError> {
    match values.iter().find(|x| !x.is_finite()) {
        Some(x) => Err(CliError::config(
            format!("parameters.{field}"),
            format!("non-finite value {x}"),
        )),
        None => Ok(()),
    }
}

fn nonempty_angles(field: &str, values: &[f64]) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::config(
            format!("parameters.{field}"),
            "at least one angle is required",
        ));
    }
    check_finite(field, values)
}

fn default_grid_step() -> f64 {
    TimeGrid::default().step
}
fn default_t_max() -> f64 {
    TimeGrid::default().t_max
}
fn default_epsilon() -> f64 {
    DecoherenceTimeConvention::default().epsilon
}
fn default_window() -> f64 {
    DecoherenceTimeConvention::default().window
}

// ---------------------------------------------------------------- trace

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceParams {
    #[serde(default = "default_group_sizes")]
    group_sizes: Vec<usize>,
    #[serde(default)]
    coupling: CouplingKind,
    #[serde(default = "default_grid_step")]
    dt: f64,
    #[serde(default = "default_t_max")]
    t_max: f64,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
    #[serde(default = "default_window")]
    window: f64,
    /// Extra baths per size for ensemble means; 0 disables.
    #[serde(default)]
    ensemble_seeds: usize,
    /// Start of the window for time-averaged `|z|`.
    #[serde(default = "default_average_from")]
    average_from: f64,
}

fn default_group_sizes() -> Vec<usize> {
    vec![6, 12, 17, 30]
}
fn default_average_from() -> f64 {
    2.0
}

fn rename_trace(field: &str) -> Option<&'static str> {
    match field {
        "time_grid" => Some("dt"),
        "couplings" => Some("coupling"),
        _ => None,
    }
}

#[derive(Serialize)]
struct TraceSummary<'a> {
    group_size: usize,
    couplings: &'a [f64],
    #[serde(flatten)]
    sidecar: endqt::decoherence::TraceSidecar,
    fit_rms_residual: Option<f64>,
    abs_z_mean_late: f64,
    abs_z_std_late: f64,
}

fn trace(cfg: &ScenarioConfig, sink: &mut ArtifactSink, h: &mut Headlines) -> Result<(), CliError> {
    let p: TraceParams = cfg.parameters()?;
    let seed = cfg.require_seed()?;
    if p.group_sizes.is_empty() || p.group_sizes.contains(&0) {
        return Err(CliError::config(
            "parameters.group_sizes",
            "bath sizes must be a non-empty list of positive integers",
        ));
    }
    let grid = TimeGrid {
        step: p.dt,
        t_max: p.t_max,
    };
    grid.validate().map_err(|e| CliError::from_core(e, rename_trace))?;
    p.coupling
        .validate()
        .map_err(|e| CliError::from_core(e, rename_trace))?;
    if !(p.epsilon > 0.0 && p.epsilon < 1.0) {
        return Err(CliError::config("parameters.epsilon", "threshold must lie in (0, 1)"));
    }
    if !(p.window > 0.0) || !p.window.is_finite() {
        return Err(CliError::config("parameters.window", "window must be positive"));
    }
    if !(p.average_from >= 0.0 && p.average_from < p.t_max) {
        return Err(CliError::config("parameters.average_from", "must lie in [0, t_max)"));
    }
    let conv = DecoherenceTimeConvention {
        epsilon: p.epsilon,
        window: p.window,
    };
    for &g in &p.group_sizes {
        let couplings = CouplingDistribution {
            kind: p.coupling.clone(),
            seed: rng::stream_id(&[seed, g as u64]),
        }
        .sample(g)
        .map_err(|e| CliError::from_core(e, rename_trace))?;
        let trace = DecoherenceTrace::for_equal_weight(&couplings, &grid)
            .map_err(runtime)?
            .analyze(&conv);
        let late: Vec<f64> = trace
            .times
            .iter()
            .zip(&trace.z_values)
            .filter(|(t, _)| **t >= p.average_from - 1e-12)
            .map(|(_, z)| z.norm())
            .collect();
        let (mean, std) = mean_std(&late);
        sink.write_with(&format!("trace_G{g}.csv"), |w| trace.write_csv(w))?;
        let plot = sink.path(&format!("plot_G{g}.csv"));
        emit_plot_data(&trace, &plot).map_err(runtime)?;
        sink.record(plot);
        let fit = fit_gaussian_decay(&trace).ok();
        let summary = TraceSummary {
            group_size: g,
            couplings: &couplings,
            sidecar: trace.sidecar(&conv),
            fit_rms_residual: fit.map(|f| f.rms_residual),
            abs_z_mean_late: mean,
            abs_z_std_late: std,
        };
        sink.write_json(&format!("trace_G{g}.json"), &summary)?;
        h.set(format!("decoherence_time_G{g}"), trace.decoherence_time)?;
        h.set(format!("gamma_G{g}"), trace.gamma)?;
        h.set(format!("abs_z_std_late_G{g}"), std)?;
        if p.ensemble_seeds > 0 {
            let seeds: Vec<u64> = (0..p.ensemble_seeds as u64)
                .map(|k| rng::stream_id(&[seed, g as u64, k + 1]))
                .collect();
            let times =
                ensemble_decoherence_times(g, &p.coupling, &seeds, &grid, &conv, Execution::Auto).map_err(runtime)?;
            let averages =
                ensemble_time_averaged_abs_z(g, &p.coupling, &seeds, &grid, p.average_from, p.t_max, Execution::Auto)
                    .map_err(runtime)?;
            h.set(format!("ensemble_mean_decoherence_time_G{g}"), mean_defined(&times))?;
            h.set(
                format!("ensemble_undecohered_G{g}"),
                times.iter().filter(|t| t.is_none()).count(),
            )?;
            h.set(format!("ensemble_mean_abs_z_late_G{g}"), mean_std(&averages).0)?;
        }
    }
    Ok(())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

// ---------------------------------------------------------------- sdc

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SdcParams {
    #[serde(default = "default_layers")]
    layers: usize,
    #[serde(default = "default_last_layer")]
    last_layer: u64,
    #[serde(default = "default_group_size")]
    group_size: usize,
    #[serde(default)]
    delta: StepDuration,
    #[serde(default)]
    dissolve_after_layer: Option<usize>,
    #[serde(default)]
    coupling: CouplingKind,
    #[serde(default = "default_trace_samples")]
    trace_samples: usize,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
    #[serde(default = "default_window")]
    window: f64,
    #[serde(default = "default_grid_step")]
    dt: f64,
    #[serde(default = "default_t_max")]
    t_max: f64,
    /// Required ratio between successive step decoherence times.
    #[serde(default = "default_ordering_factor")]
    ordering_factor: f64,
    #[serde(default = "default_node_cap")]
    node_cap: u64,
}

fn default_layers() -> usize {
    4
}
fn default_last_layer() -> u64 {
    5
}
fn default_group_size() -> usize {
    30
}
fn default_trace_samples() -> usize {
    64
}
fn default_ordering_factor() -> f64 {
    10.0
}
fn default_node_cap() -> u64 {
    endqt::sdc::DEFAULT_NODE_CAP
}

fn rename_sdc(field: &str) -> Option<&'static str> {
    match field {
        "num_layers" => Some("layers"),
        "last_layer_count" => Some("last_layer"),
        "step_duration" => Some("delta"),
        "couplings" => Some("coupling"),
        "time_grid" => Some("dt"),
        _ => None,
    }
}

#[derive(Serialize)]
struct SdcSteps<'a> {
    delta: f64,
    counts: endqt::sdc::EventCounts,
    dissolved_after: Option<usize>,
    steps: &'a [endqt::sdc::StepSummary],
}

fn sdc(cfg: &ScenarioConfig, sink: &mut ArtifactSink, h: &mut Headlines) -> Result<(), CliError> {
    let p: SdcParams = cfg.parameters()?;
    let seed = cfg.require_seed()?;
    let mut chain = ChainConfig::new(p.layers, p.last_layer, p.group_size, seed);
    chain.step_duration = p.delta;
    chain.dissolve_after_layer = p.dissolve_after_layer;
    chain.coupling = p.coupling;
    chain.trace_samples = p.trace_samples;
    chain.convention = DecoherenceTimeConvention {
        epsilon: p.epsilon,
        window: p.window,
    };
    chain.time_grid = TimeGrid {
        step: p.dt,
        t_max: p.t_max,
    };
    chain.node_cap = p.node_cap;
    chain.validate().map_err(|e| CliError::from_core(e, rename_sdc))?;
    if !(p.ordering_factor >= 1.0) {
        return Err(CliError::config("parameters.ordering_factor", "must be at least 1"));
    }
    let run = simulate_chain_with(&chain, Execution::Auto).map_err(|e| CliError::from_core(e, rename_sdc))?;
    sink.write_with("events.csv", |w| run.write_events_csv(w))?;
    sink.write_with("systems.csv", |w| run.write_systems_csv(w))?;
    sink.write_json(
        "steps.json",
        &SdcSteps {
            delta: run.delta,
            counts: run.counts,
            dissolved_after: run.dissolved_after,
            steps: &run.steps,
        },
    )?;
    h.set("total_systems", run.counts.systems)?;
    h.set("edges", run.counts.edges)?;
    h.set("group_interactions", run.counts.group_interactions)?;
    h.set("events_written", run.events.len())?;
    h.set("delta_s", run.delta)?;
    h.set("steps_run", run.steps.len())?;
    h.set("final_event_time_s", run.events.last().map(|e| e.time))?;
    h.set("cdc_violations", validate_cdc(&run.graph).len())?;
    if let Some(times) = run.step_decoherence_times() {
        h.set("step_decoherence_times_s", &times)?;
        if times.len() >= 2 {
            let rep = timescale_ordering_check(&times, p.ordering_factor).map_err(runtime)?;
            h.set("timescale_ordering_pass", rep.pass)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- bell / chsh

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BellParams {
    #[serde(default = "default_alice")]
    angles_a: Vec<f64>,
    #[serde(default = "default_bob")]
    angles_b: Vec<f64>,
}

fn default_alice() -> Vec<f64> {
    TSIRELSON_ANGLES[..2].to_vec()
}
fn default_bob() -> Vec<f64> {
    TSIRELSON_ANGLES[2..].to_vec()
}

fn correlator_headlines(b: &Behavior, h: &mut Headlines) -> Result<(), CliError> {
    let mut corr = BTreeMap::new();
    for x in 0..b.settings.0 {
        for y in 0..b.settings.1 {
            corr.insert(format!("{x},{y}"), b.correlator(x, y).map_err(runtime)?);
        }
    }
    h.set("correlators", corr)?;
    h.set("max_signaling", b.signaling())?;
    Ok(())
}

fn bell(cfg: &ScenarioConfig, sink: &mut ArtifactSink, h: &mut Headlines) -> Result<(), CliError> {
    let p: BellParams = cfg.parameters()?;
    nonempty_angles("angles_a", &p.angles_a)?;
    nonempty_angles("angles_b", &p.angles_b)?;
    let b = bell_scenario(&p.angles_a, &p.angles_b).map_err(runtime)?;
    sink.write_with("bell.csv", |w| b.write_csv(w))?;
    correlator_headlines(&b, h)?;
    if b.settings == (2, 2) {
        h.set("chsh", b.chsh().map_err(runtime)?)?;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChshParams {
    #[serde(default = "tsirelson_a")]
    a: f64,
    #[serde(default = "tsirelson_a_prime")]
    a_prime: f64,
    #[serde(default = "tsirelson_b")]
    b: f64,
    #[serde(default = "tsirelson_b_prime")]
    b_prime: f64,
}

fn tsirelson_a() -> f64 {
    TSIRELSON_ANGLES[0]
}
fn tsirelson_a_prime() -> f64 {
    TSIRELSON_ANGLES[1]
}
fn tsirelson_b() -> f64 {
    TSIRELSON_ANGLES[2]
}
fn tsirelson_b_prime() -> f64 {
    TSIRELSON_ANGLES[3]
}

fn chsh(cfg: &ScenarioConfig, sink: &mut ArtifactSink, h: &mut Headlines) -> Result<(), CliError> {
    let p: ChshParams = cfg.parameters()?;
    check_finite("a", &[p.a])?;
    check_finite("a_prime", &[p.a_prime])?;
    check_finite("b", &[p.b])?;
    check_finite("b_prime", &[p.b_prime])?;
    let b = bell_scenario(&[p.a, p.a_prime], &[p.b, p.b_prime]).map_err(runtime)?;
    sink.write_with("chsh.csv", |w| b.write_csv(w))?;
    correlator_headlines(&b, h)?;
    h.set("chsh", chsh_value(p.a, p.a_prime, p.b, p.b_prime).map_err(runtime)?)?;
    h.set("lhv_bound", lhv_chsh_max())?;
    h.set("tsirelson_bound", 2.0 * SQRT_2)?;
    Ok(())
}

// ---------------------------------------------------------------- ewf

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EwfParams {
    #[serde(default = "default_true")]
    isolated: bool,
    #[serde(default = "default_alice")]
    wigner_a: Vec<f64>,
    #[serde(default = "default_bob")]
    wigner_b: Vec<f64>,
}

fn default_true() -> bool {
    true
}

fn ewf(cfg: &ScenarioConfig, sink: &mut ArtifactSink, h: &mut Headlines) -> Result<(), CliError> {
    let p: EwfParams = cfg.parameters()?;
    nonempty_angles("wigner_a", &p.wigner_a)?;
    nonempty_angles("wigner_b", &p.wigner_b)?;
    let out = ewf_scenario(p.isolated, &p.wigner_a, &p.wigner_b).map_err(runtime)?;
    sink.write_with("ewf_wigners.csv", |w| out.wigners.write_csv(w))?;
    if let Some(friends) = &out.friends {
        sink.write_with("ewf_friends.csv", |w| friends.write_csv(w))?;
        h.set(
            "friends_same_outcome",
            friends.get(0, 0, 0, 0) + friends.get(0, 0, 1, 1),
        )?;
    }
    sink.write_json("ewf_tables.json", &out.tables)?;
    correlator_headlines(&out.wigners, h)?;
    if out.wigners.settings == (2, 2) {
        h.set("wigner_chsh", out.wigners.chsh().map_err(runtime)?)?;
    }
    h.set("reversal_fidelity", out.reversal_fidelity)?;
    Ok(())
}

// ---------------------------------------------------------------- mz

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MzParams {
    #[serde(default)]
    detector_d3: bool,
    #[serde(default = "default_true")]
    sdc_connected: bool,
    /// Born-rule detector clicks to draw from the outcome table.
    #[serde(default)]
    samples: u64,
}

fn mz(cfg: &ScenarioConfig, sink: &mut ArtifactSink, h: &mut Headlines) -> Result<(), CliError> {
    let p: MzParams = cfg.parameters()?;
    let run = run_mz_with(p.detector_d3.then(|| DetectorModel::d3(p.sdc_connected))).map_err(runtime)?;
    if p.samples > 0 && run.table.is_none() {
        return Err(CliError::config(
            "parameters.samples",
            "no outcome table exists when the detector is not chain-connected",
        ));
    }
    let seed = if p.samples > 0 { Some(cfg.require_seed()?) } else { None };
    sink.write_with("mz_state.csv", |w| run.final_state.write_csv(w))?;
    let pops = run.final_state.channel_populations();
    h.set("channel_populations", pops)?;
    h.set("outcome_table_defined", run.table.is_some())?;
    if let Some(table) = &run.table {
        sink.write_json("mz_table.json", table)?;
        for (det, prob) in table {
            h.set(format!("P_{det}"), prob)?;
        }
    }
    if let Some(seed) = seed {
        let mut rng = rng::seeded(seed);
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for _ in 0..p.samples {
            if let Some(d) = run.sample(&mut rng) {
                *counts.entry(d).or_default() += 1;
            }
        }
        sink.write_json("mz_samples.json", &counts)?;
        h.set("sample_counts", counts)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- ccm

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CcmParams {
    #[serde(default)]
    dag: Option<ClassicalDag>,
    /// Joint distribution; drawn as a random Markov table when absent.
    #[serde(default)]
    table: Option<JointTable>,
    #[serde(default)]
    independencies: Option<Vec<IndependenceQuery>>,
    /// Pairs whose common-cause screening set is requested.
    #[serde(default)]
    screening: Option<Vec<(String, String)>>,
    #[serde(default = "default_ci_tol")]
    tolerance: f64,
}

fn default_ci_tol() -> f64 {
    PROB_TOL
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndependenceQuery {
    x: Vec<String>,
    y: Vec<String>,
    #[serde(default)]
    given: Vec<String>,
}

/// Five binary variables `A → B, A → C, B → D, C → D, C → E`.
pub fn example_dag() -> ClassicalDag {
    ClassicalDag::new(
        vec![("A", 2), ("B", 2), ("C", 2), ("D", 2), ("E", 2)],
        vec![("A", "B"), ("A", "C"), ("B", "D"), ("C", "D"), ("C", "E")],
    )
    .expect("static DAG is valid")
}

fn example_queries() -> Vec<IndependenceQuery> {
    let q = |x: &[&str], y: &[&str], given: &[&str]| IndependenceQuery {
        x: x.iter().map(|s| s.to_string()).collect(),
        y: y.iter().map(|s| s.to_string()).collect(),
        given: given.iter().map(|s| s.to_string()).collect(),
    };
    vec![
        q(&["B"], &["C", "E"], &["A"]),
        q(&["C"], &["B"], &["A"]),
        q(&["D"], &["A", "E"], &["B", "C"]),
        q(&["E"], &["A", "B", "D"], &["C"]),
    ]
}

fn names(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[derive(Serialize)]
struct QueryResult<'a> {
    #[serde(flatten)]
    query: &'a IndependenceQuery,
    d_separated: bool,
    independent: bool,
    deviation: f64,
}

#[derive(Serialize)]
struct ScreeningResult<'a> {
    a: &'a str,
    b: &'a str,
    /// `null` when no screening set is needed.
    set: Option<Vec<String>>,
}

fn ccm(cfg: &ScenarioConfig, sink: &mut ArtifactSink, h: &mut Headlines) -> Result<(), CliError> {
    let p: CcmParams = cfg.parameters()?;
    let custom_dag = p.dag.is_some();
    let dag = p.dag.unwrap_or_else(example_dag);
    if !(p.tolerance > 0.0) {
        return Err(CliError::config("parameters.tolerance", "must be positive"));
    }
    let table = match p.table {
        Some(t) => t
            .permuted(&dag.names().iter().map(String::as_str).collect::<Vec<_>>())
            .map_err(|e| CliError::config("parameters.table", e))?,
        None => dag.random_markov_table(&mut rng::seeded(cfg.require_seed()?)),
    };
    let queries = match p.independencies {
        Some(q) => q,
        None if custom_dag => Vec::new(),
        None => example_queries(),
    };
    let screening = p.screening.unwrap_or_else(|| {
        if custom_dag {
            Vec::new()
        } else {
            vec![("B".into(), "C".into())]
        }
    });

    let markov = markov_check(&dag, &table).map_err(|e| CliError::config("parameters.table", e))?;
    let mut results = Vec::with_capacity(queries.len());
    for q in &queries {
        let sep = d_separated(&dag, &names(&q.x), &names(&q.y), &names(&q.given))
            .map_err(|e| CliError::config("parameters.independencies", e))?;
        let idx = |v: &[String]| {
            dag.resolve(&names(v))
                .map_err(|e| CliError::config("parameters.independencies", e))
        };
        let (x, y, z) = (idx(&q.x)?, idx(&q.y)?, idx(&q.given)?);
        let deviation = table.independence_deviation(&x, &y, &z);
        results.push(QueryResult {
            query: q,
            d_separated: sep,
            independent: deviation <= p.tolerance,
            deviation,
        });
    }
    let mut screens = Vec::with_capacity(screening.len());
    for (a, b) in &screening {
        let set = crccp_screening_set(&dag, &table, a, b).map_err(|e| match e {
            endqt::Error::InvalidModel(_) | endqt::Error::OverlappingSets(_) => {
                CliError::config("parameters.screening", e)
            }
            other => runtime(other),
        })?;
        screens.push(ScreeningResult { a, b, set });
    }

    sink.write_json("ccm_dag.json", &dag)?;
    sink.write_json("ccm_table.json", &table)?;
    sink.write_json(
        "ccm_report.json",
        &serde_json::json!({
            "markov": markov,
            "independencies": results,
            "screening": screens,
        }),
    )?;
    h.set("markov_holds", markov.holds)?;
    h.set("independencies_checked", results.len())?;
    h.set(
        "independencies_confirmed",
        results.iter().filter(|r| r.d_separated && r.independent).count(),
    )?;
    h.set(
        "screening_sets",
        screens
            .iter()
            .map(|s| (format!("{},{}", s.a, s.b), s.set.clone()))
            .collect::<BTreeMap<_, _>>(),
    )?;
    Ok(())
}
