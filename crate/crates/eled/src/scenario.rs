//! Scenario files: a seed plus an ordered list of pipeline stages.
//!
//! Every stage is validated before the first one runs. Each stage draws its
//! randomness from `child_seed(seed, label)`, where the label is the stage
//! kind (suffixed `_2`, `_3`, … on repeats), so adding or removing a stage
//! leaves the other stages' outputs unchanged.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use eled_core::analysis::{self, analysis_settings, FssScan, GateReport, GateWindow};
use eled_core::cascade::{CoincidenceHistogram, SimulationConfig};
use eled_core::quantum::DensityMatrix4;
use eled_core::rng;
use eled_core::strain::{self, FitOptions, StressMap, TuningFit, TuningParams, TuningSample};
use eled_core::tomography::{self, MleResult, TomographyRecord};
use eled_core::yield_stats::{self, CalibrationTargets, PopulationModel, YieldFraction};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::formats::{self, DensityMatrixJson, HistogramSidecar, TableFormat};
use crate::parallel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub seed: u64,
    pub stages: Vec<Stage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Stage {
    Tuning(TuningStage),
    Correlations(CorrelationStage),
    Tomography(TomographyStage),
    Yield(YieldStage),
    FssScan(ScanStage),
}

impl Stage {
    pub fn kind(&self) -> &'static str {
        match self {
            Stage::Tuning(_) => "tuning",
            Stage::Correlations(_) => "correlations",
            Stage::Tomography(_) => "tomography",
            Stage::Yield(_) => "yield",
            Stage::FssScan(_) => "fss_scan",
        }
    }
}

/// Dot constants as either (s₀, θ₀) or (k, δ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DotSpec {
    #[serde(rename = "s0_ueV", default, skip_serializing_if = "Option::is_none")]
    pub s0: Option<f64>,
    #[serde(rename = "theta0_deg", default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
    #[serde(rename = "k_ueV", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(rename = "delta_ueV", default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(rename = "alpha_ueV")]
    pub alpha: f64,
    #[serde(rename = "beta_ueV", default)]
    pub beta: f64,
}

impl DotSpec {
    pub fn params(&self) -> eled_core::Result<TuningParams> {
        match (self.s0, self.theta0, self.k, self.delta) {
            (Some(s0), Some(t0), None, None) => TuningParams::from_s0_theta0(s0, t0, self.alpha, self.beta),
            (None, None, Some(k), Some(d)) => TuningParams::from_k_delta(k, d, self.alpha, self.beta),
            _ => Err(eled_core::Error::Validation(
                "give exactly one of the pairs (s0_ueV, theta0_deg) or (k_ueV, delta_ueV)".into(),
            )),
        }
    }
}

/// Evenly spaced actuator fields, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldGrid {
    pub from_kv_cm: f64,
    pub to_kv_cm: f64,
    pub n: usize,
}

impl FieldGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.from_kv_cm];
        }
        let last = (self.n - 1) as f64;
        // interpolate from both ends so the endpoints are exact
        (0..self.n).map(|i| (self.from_kv_cm * (last - i as f64) + self.to_kv_cm * i as f64) / last).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningStage {
    /// Generating dot; also reported as the reference for the fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dot: Option<DotSpec>,
    /// Measured curve to fit instead of a synthetic one; relative paths
    /// resolve against the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_csv: Option<PathBuf>,
    #[serde(default)]
    pub stress_map: StressMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<FieldGrid>,
    #[serde(rename = "s_noise_ueV", default = "default_s_noise")]
    pub s_noise: f64,
    #[serde(rename = "theta_noise_deg", default = "default_theta_noise")]
    pub theta_noise: f64,
    #[serde(default)]
    pub fit_beta: bool,
}

fn default_s_noise() -> f64 {
    0.2
}

fn default_theta_noise() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationStage {
    pub simulation: SimulationConfig,
    pub n_pulses: u64,
    /// Non-increasing gate widths; the first is usually the full period.
    pub gates_ns: Vec<f64>,
}

/// Werner-state counts for testing the reconstruction alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticState {
    /// Weight of the pure state; the rest is white noise.
    pub purity_weight: f64,
    pub phase_rad: f64,
    pub counts_per_setting: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographyStage {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_pulses: Option<u64>,
    #[serde(rename = "gate_ns", default = "default_tomo_gate")]
    pub gate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticState>,
}

fn default_tomo_gate() -> f64 {
    tomography::DEFAULT_GATE_NS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YieldStage {
    /// Fixed model; mutually exclusive with `calibrate`. Neither means the
    /// default calibrated model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PopulationModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<CalibrationTargets>,
    pub n_dots: usize,
    #[serde(rename = "thresholds_ueV", default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(rename = "upper_ueV", default = "default_upper")]
    pub upper: f64,
    #[serde(rename = "bin_width_ueV", default = "default_bin")]
    pub bin_width: f64,
}

fn default_thresholds() -> Vec<f64> {
    vec![yield_stats::LINEWIDTH_THRESHOLD, yield_stats::ENTANGLEMENT_THRESHOLD]
}

fn default_upper() -> f64 {
    40.0
}

fn default_bin() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanStage {
    pub simulation: SimulationConfig,
    #[serde(rename = "grid_ueV")]
    pub grid: Vec<f64>,
    pub n_pulses: u64,
    /// Full period when absent.
    #[serde(rename = "gate_ns", default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<f64>,
}

// ---- loading and validation -------------------------------------------------

/// Scenarios compiled into the binary.
pub const BUNDLED: [(&str, &str); 5] = [
    ("strain_tuning", include_str!("../scenarios/strain_tuning.json")),
    ("tomography_185MHz", include_str!("../scenarios/tomography_185MHz.json")),
    ("ensemble_yield", include_str!("../scenarios/ensemble_yield.json")),
    ("fidelity_vs_fss", include_str!("../scenarios/fidelity_vs_fss.json")),
    ("gating_400MHz", include_str!("../scenarios/gating_400MHz.json")),
];

pub fn bundled(name: &str) -> Option<CliResult<Scenario>> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(n, text)| parse(text, n))
}

pub fn parse(text: &str, origin: &str) -> CliResult<Scenario> {
    serde_json::from_str(text).map_err(|e| CliError::parse(Path::new(origin), e.line() as u64, e.to_string()))
}

/// A scenario plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub scenario: Scenario,
    pub base_dir: PathBuf,
}

/// Load a scenario file, or a bundled scenario when `spec` names one and is
/// not an existing path.
pub fn load(spec: &str) -> CliResult<Loaded> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        return Ok(Loaded { scenario: parse(&text, spec)?, base_dir });
    }
    match bundled(spec) {
        Some(s) => Ok(Loaded { scenario: s?, base_dir: PathBuf::from(".") }),
        None => Err(CliError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such scenario file or bundled scenario"),
        )),
    }
}

/// Stage labels in order: the kind, suffixed on repeats.
pub fn stage_labels(s: &Scenario) -> Vec<String> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    s.stages
        .iter()
        .map(|st| {
            let n = seen.entry(st.kind()).or_insert(0);
            *n += 1;
            if *n == 1 {
                st.kind().to_string()
            } else {
                format!("{}_{}", st.kind(), n)
            }
        })
        .collect()
}

fn stage_err(label: &str, field: &str, e: impl std::fmt::Display) -> CliError {
    CliError::invalid(format!("stage '{label}' field '{field}'"), e.to_string())
}

fn check_sim(label: &str, cfg: &SimulationConfig, n_pulses: u64, field: &str) -> CliResult<()> {
    cfg.validate().map_err(|e| stage_err(label, field, e))?;
    if n_pulses == 0 {
        return Err(stage_err(label, "n_pulses", "must be at least 1"));
    }
    Ok(())
}

fn check_gate(label: &str, field: &str, width: f64, period: f64) -> CliResult<()> {
    GateWindow::new(width).validate(period).map_err(|e| stage_err(label, field, e))
}

impl Loaded {
    /// Check every stage; nothing runs until this passes.
    pub fn validate(&self) -> CliResult<()> {
        let s = &self.scenario;
        if s.name.trim().is_empty() {
            return Err(CliError::invalid("scenario", "name is empty"));
        }
        if s.stages.is_empty() {
            return Err(CliError::invalid("scenario", "no stages"));
        }
        for (st, label) in s.stages.iter().zip(stage_labels(s)) {
            let label = label.as_str();
            match st {
                Stage::Tuning(t) => {
                    if let Some(d) = &t.dot {
                        d.params().map_err(|e| stage_err(label, "dot", e))?;
                    }
                    StressMap::new(t.stress_map.stress_per_field, t.stress_map.energy_shift_per_field)
                        .map_err(|e| stage_err(label, "stress_map", e))?;
                    match (&t.input_csv, &t.dot, &t.fields) {
                        (Some(p), _, _) => {
                            let samples = formats::ingest_tuning_csv(&self.base_dir.join(p))?;
                            if samples.len() < 3 {
                                return Err(stage_err(label, "input_csv", "needs at least 3 rows"));
                            }
                        }
                        (None, Some(_), Some(f)) => {
                            if f.n < 3 {
                                return Err(stage_err(label, "fields.n", "needs at least 3 points"));
                            }
                            if !(f.from_kv_cm.is_finite() && f.to_kv_cm.is_finite() && f.from_kv_cm < f.to_kv_cm) {
                                return Err(stage_err(label, "fields", "need finite from_kv_cm < to_kv_cm"));
                            }
                            if !(t.s_noise > 0.0 && t.theta_noise > 0.0) {
                                return Err(stage_err(label, "s_noise_ueV/theta_noise_deg", "must be positive"));
                            }
                        }
                        _ => return Err(stage_err(label, "input_csv", "give input_csv, or dot together with fields")),
                    }
                }
                Stage::Correlations(c) => {
                    check_sim(label, &c.simulation, c.n_pulses, "simulation")?;
                    if c.gates_ns.is_empty() {
                        return Err(stage_err(label, "gates_ns", "is empty"));
                    }
                    let period = c.simulation.drive.period();
                    for (i, &w) in c.gates_ns.iter().enumerate() {
                        check_gate(label, &format!("gates_ns[{i}]"), w, period)?;
                    }
                    if c.gates_ns.windows(2).any(|w| w[1] > w[0]) {
                        return Err(stage_err(label, "gates_ns", "widths must be non-increasing"));
                    }
                }
                Stage::Tomography(t) => match (&t.simulation, &t.synthetic) {
                    (Some(sim), None) => {
                        let n = t.n_pulses.ok_or_else(|| stage_err(label, "n_pulses", "required with simulation"))?;
                        check_sim(label, sim, n, "simulation")?;
                        check_gate(label, "gate_ns", t.gate, sim.drive.period())?;
                    }
                    (None, Some(syn)) => {
                        DensityMatrix4::werner(syn.purity_weight, syn.phase_rad)
                            .map_err(|e| stage_err(label, "synthetic", e))?;
                        if !(syn.counts_per_setting > 0.0 && syn.counts_per_setting.is_finite()) {
                            return Err(stage_err(label, "synthetic.counts_per_setting", "must be positive"));
                        }
                    }
                    _ => return Err(stage_err(label, "simulation", "give exactly one of simulation or synthetic")),
                },
                Stage::Yield(y) => {
                    if y.model.is_some() && y.calibrate.is_some() {
                        return Err(stage_err(label, "model", "model and calibrate are mutually exclusive"));
                    }
                    if let Some(m) = &y.model {
                        m.validate().map_err(|e| stage_err(label, "model", e))?;
                    }
                    if let Some(c) = &y.calibrate {
                        let ok = |f: f64| (0.0..=1.0).contains(&f);
                        if !(ok(c.frac_below_1uev) && ok(c.frac_below_3uev) && c.s0_mean > 0.0 && c.s0_mean.is_finite()) {
                            return Err(stage_err(label, "calibrate", "fractions must lie in [0, 1] and s0_mean_ueV be positive"));
                        }
                    }
                    if y.n_dots == 0 {
                        return Err(stage_err(label, "n_dots", "must be at least 1"));
                    }
                    if y.thresholds.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                        return Err(stage_err(label, "thresholds_ueV", "must be positive"));
                    }
                    if !(y.bin_width > 0.0 && y.upper > y.bin_width && y.upper.is_finite()) {
                        return Err(stage_err(label, "bin_width_ueV/upper_ueV", "need 0 < bin_width < upper"));
                    }
                }
                Stage::FssScan(f) => {
                    check_sim(label, &f.simulation, f.n_pulses, "simulation")?;
                    analysis::check_scan_grid(&f.grid).map_err(|e| stage_err(label, "grid_ueV", e))?;
                    if f.grid.len() < 4 {
                        return Err(stage_err(label, "grid_ueV", "the Lorentzian fit needs at least 4 points"));
                    }
                    if let Some(g) = f.gate {
                        check_gate(label, "gate_ns", g, f.simulation.drive.period())?;
                    }
                }
            }
        }
        Ok(())
    }
}

// ---- stage runners ----------------------------------------------------------

/// Fitted tuning parameters plus the generating dot, if any.
#[derive(Debug, Clone, Serialize)]
pub struct TuningReport {
    pub fit: TuningFit,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<TuningParams>,
    /// 2|k| of the reference dot.
    #[serde(rename = "reference_min_fss_ueV", skip_serializing_if = "Option::is_none")]
    pub reference_min_fss: Option<f64>,
    /// Actuator field of minimum splitting, from the fit.
    #[serde(rename = "fp_at_min_kv_cm", skip_serializing_if = "Option::is_none")]
    pub fp_at_min: Option<f64>,
    pub n_samples: usize,
}

pub fn tuning_samples(t: &TuningStage, base_dir: &Path, seed: u64) -> CliResult<Vec<TuningSample>> {
    if let Some(p) = &t.input_csv {
        return formats::ingest_tuning_csv(&base_dir.join(p));
    }
    let dot = t.dot.ok_or_else(|| CliError::invalid("tuning", "no dot"))?.params()?;
    let fields = t.fields.ok_or_else(|| CliError::invalid("tuning", "no fields"))?.values();
    let mut r = rng::stream(seed, "tuning/curve", 0);
    Ok(strain::synthesize_curve(&dot, &t.stress_map, &fields, t.s_noise, t.theta_noise, &mut r)?)
}

pub fn fit_report(samples: &[TuningSample], map: &StressMap, fit_beta: bool, reference: Option<TuningParams>) -> CliResult<TuningReport> {
    let fit = strain::fit_tuning_params(samples, map, &FitOptions { fit_beta, ..Default::default() })?;
    let fp_at_min = strain::stress_at_min(&fit.params).ok().map(|p| p / map.stress_per_field);
    Ok(TuningReport {
        reference,
        reference_min_fss: reference.and_then(|r| strain::min_fss(&r).ok()),
        fp_at_min,
        n_samples: samples.len(),
        fit,
    })
}

fn run_tuning(t: &TuningStage, base_dir: &Path, seed: u64, dir: &Path, format: TableFormat, out: &mut Vec<PathBuf>) -> CliResult<()> {
    let samples = tuning_samples(t, base_dir, seed)?;
    out.push(formats::write_tuning(dir, "tuning_curve", &samples, format)?);
    let reference = t.dot.map(|d| d.params()).transpose()?;
    let report = fit_report(&samples, &t.stress_map, t.fit_beta, reference)?;
    let p = dir.join("tuning_fit.json");
    formats::write_json(&p, &report)?;
    out.push(p);
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationReport {
    pub n_pulses: u64,
    pub gates: Vec<GateReport>,
}

fn run_correlations(c: &CorrelationStage, seed: u64, dir: &Path, format: TableFormat, out: &mut Vec<PathBuf>) -> CliResult<()> {
    let hists = parallel::simulate(&c.simulation, &analysis_settings(), c.n_pulses, seed)?;
    let side = HistogramSidecar::describe(&hists, Some(c.simulation), Some(seed))?;
    out.extend(formats::write_histograms(dir, &hists, &side, format)?);
    let gates = analysis::gate_scan(&hists, &c.gates_ns)?;
    out.push(formats::write_gate_table(dir, &gates, format)?);
    let p = dir.join("correlation_report.json");
    formats::write_json(&p, &CorrelationReport { n_pulses: c.n_pulses, gates })?;
    out.push(p);
    Ok(())
}

/// Metric block of a reconstructed state.
#[derive(Debug, Clone, Serialize)]
pub struct TomographyReport {
    pub fidelity_psi_plus: f64,
    pub concurrence: f64,
    pub tangle: f64,
    pub largest_eigenvalue: f64,
    pub peres_criterion: f64,
    pub phase_rad: f64,
    pub phase_over_pi: f64,
    pub log_likelihood: f64,
    pub chi_squared: f64,
    pub converged: bool,
    pub iterations: usize,
    pub total_counts: u64,
}

impl TomographyReport {
    pub fn new(mle: &MleResult, records: &[TomographyRecord]) -> CliResult<Self> {
        let m = mle.rho.metrics()?;
        Ok(Self {
            fidelity_psi_plus: m.fidelity_psi_plus,
            concurrence: m.concurrence,
            tangle: m.tangle,
            largest_eigenvalue: m.largest_eigenvalue,
            peres_criterion: m.peres_min_eig,
            phase_rad: m.most_probable_phase,
            phase_over_pi: m.most_probable_phase / std::f64::consts::PI,
            log_likelihood: mle.log_likelihood,
            chi_squared: mle.chi_squared,
            converged: mle.converged,
            iterations: mle.iterations,
            total_counts: records.iter().map(|r| r.counts).sum(),
        })
    }
}

/// Reconstruct and write `density_matrix.json` and `tomography_report.json`.
pub fn write_reconstruction(records: &[TomographyRecord], dir: &Path, out: &mut Vec<PathBuf>) -> CliResult<TomographyReport> {
    let mle = tomography::mle_reconstruct(records)?;
    let rho_path = dir.join("density_matrix.json");
    formats::write_json(&rho_path, &DensityMatrixJson::from(&mle.rho))?;
    out.push(rho_path);
    let report = TomographyReport::new(&mle, records)?;
    let p = dir.join("tomography_report.json");
    formats::write_json(&p, &report)?;
    out.push(p);
    Ok(report)
}

fn run_tomography(t: &TomographyStage, seed: u64, dir: &Path, format: TableFormat, out: &mut Vec<PathBuf>) -> CliResult<()> {
    let records = match (&t.simulation, &t.synthetic) {
        (Some(sim), _) => {
            let n = t.n_pulses.unwrap_or(1);
            let hists = parallel::simulate(sim, &tomography::canonical_settings(), n, seed)?;
            let side = HistogramSidecar::describe(&hists, Some(*sim), Some(seed))?;
            out.extend(formats::write_histograms(dir, &hists, &side, format)?);
            tomography::tomography_from_histograms(&hists, &GateWindow::new(t.gate))?
        }
        (None, Some(syn)) => {
            let rho = DensityMatrix4::werner(syn.purity_weight, syn.phase_rad)?;
            let mut r = rng::stream(seed, "tomography/synthetic", 0);
            tomography::synthetic_records(&rho, &tomography::canonical_settings(), syn.counts_per_setting, &mut r)?
        }
        (None, None) => return Err(CliError::invalid("tomography", "no record source")),
    };
    out.push(formats::write_records(dir, &records, format)?);
    write_reconstruction(&records, dir, out)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct YieldReport {
    pub model: PopulationModel,
    pub n_dots: usize,
    pub fractions: Vec<YieldFraction>,
    /// Model expectation at each threshold.
    pub expected_fractions: Vec<f64>,
    pub overflow: u64,
}

pub fn yield_model(y: &YieldStage) -> CliResult<PopulationModel> {
    Ok(match (&y.model, &y.calibrate) {
        (Some(m), _) => *m,
        (None, Some(c)) => yield_stats::calibrate_model(c)?,
        (None, None) => PopulationModel::default(),
    })
}

fn run_yield(y: &YieldStage, seed: u64, dir: &Path, format: TableFormat, out: &mut Vec<PathBuf>) -> CliResult<()> {
    let model = yield_model(y)?;
    let dots = yield_stats::sample_population(&model, y.n_dots, seed)?;
    let hist = yield_stats::smin_distribution_with(&dots, y.upper, y.bin_width)?;
    out.push(formats::write_yield_histogram(dir, &hist, format)?);
    let fractions = y.thresholds.iter().map(|&t| yield_stats::fraction_below(&dots, t)).collect::<eled_core::Result<Vec<_>>>()?;
    let report = YieldReport {
        model,
        n_dots: y.n_dots,
        expected_fractions: y.thresholds.iter().map(|&t| model.expected_fraction_below(t)).collect(),
        fractions,
        overflow: hist.overflow,
    };
    let p = dir.join("yield_report.json");
    formats::write_json(&p, &report)?;
    out.push(p);
    Ok(())
}

fn run_scan(f: &ScanStage, seed: u64, dir: &Path, format: TableFormat, out: &mut Vec<PathBuf>) -> CliResult<()> {
    let scan: FssScan = match parallel::fss_scan(&f.simulation, &f.grid, f.n_pulses, seed, f.gate) {
        Ok(s) => s,
        Err(eled_core::Error::CurveFit { cause, curve }) => {
            // keep the raw curve so the failure can be inspected
            let points: Vec<_> = curve.iter().map(|c| analysis::ScanPoint { fss: c[0], fidelity: c[1], fidelity_err: c[2] }).collect();
            out.push(formats::write_fss_curve(dir, &points, format)?);
            return Err(eled_core::Error::CurveFit { cause, curve }.into());
        }
        Err(e) => return Err(e.into()),
    };
    out.push(formats::write_fss_curve(dir, &scan.points, format)?);
    let p = dir.join("fss_fit.json");
    formats::write_json(&p, &scan.fit)?;
    out.push(p);
    Ok(())
}

/// Run one stage into `dir`, appending every written file to `out` (also on
/// failure).
pub fn run_stage(stage: &Stage, base_dir: &Path, seed: u64, dir: &Path, format: TableFormat, out: &mut Vec<PathBuf>) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    match stage {
        Stage::Tuning(t) => run_tuning(t, base_dir, seed, dir, format, out),
        Stage::Correlations(c) => run_correlations(c, seed, dir, format, out),
        Stage::Tomography(t) => run_tomography(t, seed, dir, format, out),
        Stage::Yield(y) => run_yield(y, seed, dir, format, out),
        Stage::FssScan(f) => run_scan(f, seed, dir, format, out),
    }
}

/// Seed of the stage with the given label.
pub fn stage_seed(seed: u64, label: &str) -> u64 {
    rng::child_seed(seed, label)
}

/// Histograms of a correlation or tomography stage's directory.
pub fn stage_histograms(dir: &Path) -> CliResult<Vec<CoincidenceHistogram>> {
    Ok(formats::ingest_histograms(dir)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse_and_validate() {
        for (name, _) in BUNDLED {
            let s = bundled(name).unwrap().unwrap();
            Loaded { scenario: s, base_dir: PathBuf::from(".") }.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn repeated_stage_kinds_get_suffixed_labels() {
        let y = Stage::Yield(YieldStage {
            model: None,
            calibrate: None,
            n_dots: 5,
            thresholds: default_thresholds(),
            upper: 40.0,
            bin_width: 1.0,
        });
        let s = Scenario { name: "x".into(), description: String::new(), seed: 1, stages: vec![y.clone(), y] };
        assert_eq!(stage_labels(&s), vec!["yield", "yield_2"]);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"name":"x","seed":1,"stages":[{"stage":"yield","n_dots":5,"n_dot":3}]}"#;
        assert!(parse(text, "x.json").is_err());
        let text = r#"{"name":"x","seed":1,"stages":[{"stage":"yield","n_dots":5}]}"#;
        assert!(parse(text, "x.json").is_ok());
    }

    #[test]
    fn validation_names_stage_and_field() {
        let text = r#"{"name":"x","seed":1,"stages":[
            {"stage":"yield","n_dots":5},
            {"stage":"correlations","simulation":{"drive":{"rep_rate_mhz":400.0}},"n_pulses":10,"gates_ns":[3.0]}]}"#;
        let l = Loaded { scenario: parse(text, "x.json").unwrap(), base_dir: PathBuf::from(".") };
        let e = l.validate().unwrap_err().to_string();
        assert!(e.contains("correlations") && e.contains("gates_ns[0]"), "{e}");
    }

    #[test]
    fn increasing_gates_are_rejected() {
        let text = r#"{"name":"x","seed":1,"stages":[
            {"stage":"correlations","simulation":{},"n_pulses":10,"gates_ns":[0.5, 1.0]}]}"#;
        let l = Loaded { scenario: parse(text, "x.json").unwrap(), base_dir: PathBuf::from(".") };
        assert!(l.validate().is_err());
    }

    #[test]
    fn dot_spec_needs_one_pair() {
        let d = DotSpec { s0: Some(20.0), theta0: Some(90.0), k: Some(1.0), delta: None, alpha: 1.0, beta: 0.0 };
        assert!(d.params().is_err());
        let d = DotSpec { s0: None, theta0: None, k: Some(0.28), delta: Some(-13.7), alpha: 1.47, beta: 0.0 };
        assert!((d.params().unwrap().k - 0.28).abs() < 1e-12);
    }

    #[test]
    fn stage_seeds_are_independent_of_other_stages() {
        assert_eq!(stage_seed(7, "yield"), stage_seed(7, "yield"));
        assert_ne!(stage_seed(7, "yield"), stage_seed(7, "tuning"));
    }
}
