//! Batch evaluation of the scenario battery and gate checking.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dfb::FilterBank;
use crate::error::Result;
use crate::metrics::{compute_errors, measure_response, ErrorLimits, ErrorRecord, Metric, StepEvent, StepReport, StepSeries};
use crate::sac::{EstimateFrame, SacOptions, SacState};
use crate::scenarios::{generate, ScenarioId, ScenarioSpec};
use crate::signal_model::SystemConfig;

/// One table row: a family of scenario runs aggregated by worst case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub name: String,
    pub id: ScenarioId,
    pub scenarios: Vec<ScenarioSpec>,
    /// Samples between reports for this case.
    pub stride: usize,
}

/// Evaluation windows shared by all cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    /// Start-up interval excluded from every run, seconds.
    pub warmup_s: f64,
    /// Half-width of the exclusion around ramp corners; one window when unset.
    pub ramp_exclusion_s: Option<f64>,
    /// Interval after a fault onset excluded from tracking errors, seconds.
    pub fault_settle_s: f64,
    pub limits: ErrorLimits,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { warmup_s: 1.0, ramp_exclusion_s: None, fault_settle_s: 0.1, limits: ErrorLimits::default() }
    }
}

/// Sweep of steady offsets from `-max_hz` to `max_hz` in `step_hz`
/// increments, endpoints included.
pub fn offset_sweep(max_hz: f64, step_hz: f64) -> Vec<f64> {
    let n = (max_hz / step_hz).round() as i64;
    (-n..=n).map(|i| i as f64 * step_hz).collect()
}

/// SplitMix64 finalizer over `(seed, salt)`, giving every run its own
/// noise realization.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Builds the standard battery: A1-A3 offset sweeps, B1-B3 dynamics, both
/// steps at stride 1 and the synthetic fault, each repeated per seed.
pub fn standard_cases(cfg: &SystemConfig, snr_db: Option<f64>, seeds: &[u64], sweep_step_hz: f64) -> Vec<TestCase> {
    let sweep = offset_sweep(15.0, sweep_step_hz);
    let seeded = |spec: ScenarioSpec| -> Vec<ScenarioSpec> {
        seeds.iter().map(|s| spec.clone().with_noise(snr_db, *s)).collect()
    };
    let mut salt = 0u64;
    let mut salted = |specs: Vec<ScenarioSpec>| -> Vec<ScenarioSpec> {
        specs
            .into_iter()
            .map(|mut s| {
                salt += 1;
                s.seed = mix_seed(s.seed, salt);
                s
            })
            .collect()
    };
    let steady = |id: ScenarioId, order: Option<usize>| -> Vec<ScenarioSpec> {
        sweep
            .iter()
            .flat_map(|f| {
                let mut s = ScenarioSpec::new(id).with_offset(*f);
                s.harmonic_order = order;
                seeded(s)
            })
            .collect()
    };
    let a2: Vec<ScenarioSpec> = (2..=cfg.harmonics + 1).flat_map(|h| steady(ScenarioId::A2, Some(h))).collect();
    let case = |name: &str, id, scenarios, stride| TestCase { name: name.into(), id, scenarios, stride };
    let stride = cfg.report_stride;
    vec![
        case("A1", ScenarioId::A1, salted(steady(ScenarioId::A1, None)), stride),
        case("A2", ScenarioId::A2, salted(a2), stride),
        case("A3", ScenarioId::A3, salted(steady(ScenarioId::A3, None)), stride),
        case("B1", ScenarioId::B1, salted(seeded(ScenarioSpec::new(ScenarioId::B1))), stride),
        case("B2", ScenarioId::B2, salted(seeded(ScenarioSpec::new(ScenarioId::B2))), stride),
        case("B3", ScenarioId::B3, salted(seeded(ScenarioSpec::new(ScenarioId::B3))), stride),
        case("STEP_AMP", ScenarioId::StepAmp, salted(seeded(ScenarioSpec::new(ScenarioId::StepAmp))), 1),
        case("STEP_PHASE", ScenarioId::StepPhase, salted(seeded(ScenarioSpec::new(ScenarioId::StepPhase))), 1),
        case("FAULT_SYNTH", ScenarioId::FaultSynth, salted(seeded(ScenarioSpec::new(ScenarioId::FaultSynth))), stride),
    ]
}

/// Outcome of one scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub spec: ScenarioSpec,
    pub frames: Vec<EstimateFrame>,
    /// Errors of frames inside the evaluation window.
    pub errors: Vec<ErrorRecord>,
    pub worst: ErrorRecord,
    pub step: Option<StepReport>,
}

fn excluded(spec: &ScenarioSpec, t: f64, window_s: f64, ev: &EvalSettings) -> bool {
    if t < ev.warmup_s {
        return true;
    }
    let near = |c: f64, before: f64, after: f64| t >= c - before && t <= c + after;
    match spec.id {
        ScenarioId::B1 => {
            let w = ev.ramp_exclusion_s.unwrap_or(window_s);
            near(spec.start_s(), w, w) || near(spec.ramp_end_s(), w, w)
        }
        ScenarioId::FaultSynth => near(spec.start_s(), window_s, ev.fault_settle_s),
        ScenarioId::StepAmp | ScenarioId::StepPhase => true,
        _ => false,
    }
}

/// Runs one scenario through a fresh channel.
pub fn run_scenario(
    spec: &ScenarioSpec,
    bank: &FilterBank,
    options: &SacOptions,
    cfg: &SystemConfig,
    ev: &EvalSettings,
) -> Result<RunResult> {
    let generated = generate(spec, cfg)?;
    let mut state = SacState::new(*cfg, bank.clone(), *options)?;
    let frames = state.run(&generated.stream)?;
    let window_s = cfg.window_len() as f64 * cfg.sample_period;

    let mut errors = Vec::new();
    let mut all = Vec::with_capacity(frames.len());
    for f in &frames {
        let truth = generated.truth.at(f.report_index).expect("truth covers every report");
        let e = compute_errors(f, truth)?;
        all.push(e);
        if !excluded(spec, f.time_s, window_s, ev) {
            errors.push(e);
        }
    }

    let step = if spec.id.is_step() {
        let (times, (errs, stepped)): (Vec<f64>, (Vec<ErrorRecord>, Vec<f64>)) = frames
            .iter()
            .zip(&all)
            .filter(|(f, _)| f.time_s >= ev.warmup_s)
            .map(|(f, e)| {
                let v = if spec.id == ScenarioId::StepAmp { f.amplitude() } else { f.phase() };
                (f.time_s, (*e, v))
            })
            .unzip();
        let size = spec.step_size();
        let final_value = if spec.id == ScenarioId::StepAmp { 1.0 + size } else { size };
        let series = StepSeries { times, errors: errs, stepped };
        let event = StepEvent { time_s: spec.start_s(), size, final_value };
        Some(measure_response(&series, &event, &ev.limits)?)
    } else {
        None
    };

    Ok(RunResult { worst: ErrorRecord::worst(&errors), spec: spec.clone(), frames, errors, step })
}

/// Worst-case aggregate of one test case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub id: ScenarioId,
    pub runs: usize,
    pub reports: usize,
    pub worst: ErrorRecord,
    /// Mean iterations per report after warm-up.
    pub mean_iterations: f64,
    /// Fraction of post-warm-up reports with at least one iteration.
    pub adaptation_fraction: f64,
    /// Fraction of post-warm-up reports that re-adapted the filters.
    pub filter_adaptation_fraction: f64,
    /// Largest iteration count on any report after the first of a run.
    pub max_iterations_after_first: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<StepReport>,
    pub seeds: Vec<u64>,
}

fn worst_step(a: StepReport, b: StepReport) -> StepReport {
    StepReport {
        overshoot_pct: a.overshoot_pct.max(b.overshoot_pct),
        t_res_tve: a.t_res_tve.max(b.t_res_tve),
        t_res_fe: a.t_res_fe.max(b.t_res_fe),
        t_res_de: a.t_res_de.max(b.t_res_de),
        t_res_rfe: a.t_res_rfe.max(b.t_res_rfe),
        t_res_rde: a.t_res_rde.max(b.t_res_rde),
    }
}

pub fn summarize(id: ScenarioId, runs: &[RunResult], ev: &EvalSettings) -> TestSummary {
    let late: Vec<&EstimateFrame> =
        runs.iter().flat_map(|r| r.frames.iter().filter(|f| f.time_s >= ev.warmup_s)).collect();
    let n = late.len().max(1) as f64;
    TestSummary {
        id,
        runs: runs.len(),
        reports: runs.iter().map(|r| r.frames.len()).sum(),
        worst: ErrorRecord::worst(runs.iter().map(|r| &r.worst)),
        mean_iterations: late.iter().map(|f| f.iterations as f64).sum::<f64>() / n,
        adaptation_fraction: late.iter().filter(|f| f.iterations > 0).count() as f64 / n,
        filter_adaptation_fraction: late.iter().filter(|f| f.adapted_filters).count() as f64 / n,
        max_iterations_after_first: runs
            .iter()
            .flat_map(|r| r.frames.iter().skip(1).map(|f| f.iterations))
            .max()
            .unwrap_or(0),
        step: runs.iter().filter_map(|r| r.step).reduce(worst_step),
        seeds: runs.iter().map(|r| r.spec.seed).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub config: SystemConfig,
    pub tests: BTreeMap<String, TestSummary>,
}

/// Runs all cases in parallel; results are independent of scheduling.
pub fn run_suite(
    cases: &[TestCase],
    bank: &FilterBank,
    options: &SacOptions,
    cfg: &SystemConfig,
    ev: &EvalSettings,
) -> Result<SuiteSummary> {
    let jobs: Vec<(usize, &ScenarioSpec)> =
        cases.iter().enumerate().flat_map(|(i, c)| c.scenarios.iter().map(move |s| (i, s))).collect();
    let results: Vec<(usize, RunResult)> = jobs
        .par_iter()
        .map(|(i, spec)| {
            let case_cfg = cfg.with_stride(cases[*i].stride);
            run_scenario(spec, bank, options, &case_cfg, ev).map(|r| (*i, RunResult { frames: thin(r.frames), ..r }))
        })
        .collect::<Result<_>>()?;

    let mut grouped: Vec<Vec<RunResult>> = vec![Vec::new(); cases.len()];
    for (i, r) in results {
        grouped[i].push(r);
    }
    let tests = cases
        .iter()
        .zip(grouped)
        .map(|(c, runs)| (c.name.clone(), summarize(c.id, &runs, ev)))
        .collect();
    Ok(SuiteSummary { config: *cfg, tests })
}

/// Drops per-frame traces kept only for diagnostics.
fn thin(mut frames: Vec<EstimateFrame>) -> Vec<EstimateFrame> {
    for f in &mut frames {
        f.prior_trace = Vec::new();
    }
    frames
}

impl SuiteSummary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per test with worst-case errors (TVE in percent) and the
    /// step response columns.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "test",
            "runs",
            "AE",
            "PE",
            "TVE_pct",
            "FE_hz",
            "DE_1_s",
            "RFE_hz_s",
            "RDE_1_s2",
            "mean_iterations",
            "adaptation_fraction",
            "overshoot_pct",
            "t_res_tve",
            "t_res_fe",
            "t_res_de",
            "t_res_rfe",
            "t_res_rde",
        ])?;
        for (name, t) in &self.tests {
            let e = &t.worst;
            let mut row = vec![
                name.clone(),
                t.runs.to_string(),
                e.ae.to_string(),
                e.pe.to_string(),
                (100.0 * e.tve).to_string(),
                e.fe.to_string(),
                e.de.to_string(),
                e.rfe.to_string(),
                e.rde.to_string(),
                t.mean_iterations.to_string(),
                t.adaptation_fraction.to_string(),
            ];
            match &t.step {
                Some(s) => row.extend(
                    [s.overshoot_pct, s.t_res_tve, s.t_res_fe, s.t_res_de, s.t_res_rfe, s.t_res_rde]
                        .iter()
                        .map(|v| v.to_string()),
                ),
                None => row.extend(std::iter::repeat_n(String::new(), 6)),
            }
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| crate::error::Error::Input(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Quantity a gate reads from a test summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "metric")]
pub enum GateQuantity {
    Worst(Metric),
    ResponseTime(Metric),
    Overshoot,
    MeanIterations,
    AdaptationFraction,
    IterationsAfterFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
    Within(f64, f64),
}

impl Bound {
    pub fn admits(&self, v: f64) -> bool {
        match *self {
            Bound::AtMost(x) => v <= x,
            Bound::AtLeast(x) => v >= x,
            Bound::Within(lo, hi) => v >= lo && v <= hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub test: String,
    pub quantity: GateQuantity,
    pub bound: Bound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub gate: Gate,
    /// `None` when the test or quantity is missing from the summary.
    pub value: Option<f64>,
    pub pass: bool,
}

impl Gate {
    fn new(test: &str, quantity: GateQuantity, bound: Bound) -> Self {
        Self { test: test.into(), quantity, bound }
    }

    pub fn read(&self, summary: &SuiteSummary) -> Option<f64> {
        let t = summary.tests.get(&self.test)?;
        match self.quantity {
            GateQuantity::Worst(m) => Some(t.worst.get(m)),
            GateQuantity::ResponseTime(m) => t.step.and_then(|s| s.response_time(m)),
            GateQuantity::Overshoot => t.step.map(|s| s.overshoot_pct),
            GateQuantity::MeanIterations => Some(t.mean_iterations),
            GateQuantity::AdaptationFraction => Some(t.adaptation_fraction),
            GateQuantity::IterationsAfterFirst => Some(t.max_iterations_after_first as f64),
        }
    }

    pub fn check(&self, summary: &SuiteSummary) -> GateOutcome {
        let value = self.read(summary);
        GateOutcome { gate: self.clone(), value, pass: value.is_some_and(|v| self.bound.admits(v)) }
    }
}

/// Worst-case limits for the standard battery at 75 dB SNR.
pub fn default_gates() -> Vec<Gate> {
    use Bound::*;
    use GateQuantity::*;
    vec![
        Gate::new("A1", Worst(Metric::Tve), AtMost(0.0005)),
        Gate::new("A1", Worst(Metric::Fe), AtMost(0.005)),
        Gate::new("A1", Worst(Metric::Rfe), AtMost(0.7)),
        Gate::new("A3", Worst(Metric::Tve), AtMost(0.0006)),
        Gate::new("A3", Worst(Metric::Fe), AtMost(0.03)),
        Gate::new("B1", Worst(Metric::Fe), AtMost(0.005)),
        Gate::new("B1", Worst(Metric::Tve), AtMost(0.0004)),
        Gate::new("B2", Worst(Metric::Tve), AtMost(0.0005)),
        Gate::new("B3", Worst(Metric::Tve), AtMost(0.0012)),
        Gate::new("B3", MeanIterations, Within(0.5, 1.5)),
        Gate::new("B3", AdaptationFraction, AtLeast(0.5)),
        Gate::new("STEP_AMP", ResponseTime(Metric::Tve), AtMost(0.020)),
        Gate::new("STEP_AMP", Overshoot, AtMost(5.0)),
        Gate::new("STEP_PHASE", ResponseTime(Metric::Tve), AtMost(0.020)),
        Gate::new("STEP_PHASE", Overshoot, AtMost(5.0)),
        Gate::new("STEP_PHASE", ResponseTime(Metric::Fe), AtMost(0.040)),
        Gate::new("FAULT_SYNTH", Worst(Metric::Tve), AtMost(0.0005)),
        Gate::new("FAULT_SYNTH", Worst(Metric::Fe), AtMost(0.005)),
        Gate::new("FAULT_SYNTH", Worst(Metric::De), AtMost(TAU * 0.005)),
    ]
}

pub fn check_gates(summary: &SuiteSummary, gates: &[Gate]) -> Vec<GateOutcome> {
    gates.iter().map(|g| g.check(summary)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_includes_endpoints() {
        let s = offset_sweep(15.0, 0.1);
        assert_eq!(s.len(), 301);
        assert_eq!(s[0], -15.0);
        assert_eq!(s[300], 15.0);
        assert_eq!(s[150], 0.0);
    }

    #[test]
    fn bounds() {
        assert!(Bound::Within(0.5, 1.5).admits(0.94));
        assert!(!Bound::AtLeast(0.5).admits(0.4));
        assert!(Bound::AtMost(1.0).admits(1.0));
    }

    #[test]
    fn missing_test_fails_gate() {
        let s = SuiteSummary { config: SystemConfig::default(), tests: BTreeMap::new() };
        let out = check_gates(&s, &default_gates());
        assert!(out.iter().all(|o| !o.pass && o.value.is_none()));
    }
}
