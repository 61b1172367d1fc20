//! Command-line interface. Each subcommand works on files alone, so measured
//! data in the documented formats can replace any simulated stage.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use eled_core::analysis::{self, analysis_settings};
use eled_core::cascade::SimulationConfig;
use eled_core::quantum::MeasurementSetting;
use eled_core::strain::StressMap;
use eled_core::tomography::{self, TomographyRecord};
use eled_core::yield_stats::{CalibrationTargets, PopulationModel};
use eled_core::{analysis::GateWindow, rng};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::formats::{self, HistogramSidecar, TableFormat};
use crate::manifest::{self, Status};
use crate::parallel;
use crate::scenario::{self, YieldStage};

pub const OUTPUT_DIR_ENV: &str = "ELED_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "eled", version, about = "Entangled-light-emitting-diode simulation and analysis pipeline")]
pub struct Cli {
    /// Root seed; every random stream derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = TableFormat::Csv)]
    pub format: TableFormat,
    /// Output directory.
    #[arg(long, short = 'o', global = true, env = OUTPUT_DIR_ENV, default_value = "eled-out")]
    pub output_dir: PathBuf,
    /// More logging (-v info, -vv debug).
    #[arg(long, short = 'v', global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit (k, delta, alpha) to a tuning-curve CSV.
    Fit(FitArgs),
    /// Simulate coincidence histograms from a simulation config.
    Simulate(SimulateArgs),
    /// Correlations, fidelity and Bell parameters per gate from histograms.
    Analyze(AnalyzeArgs),
    /// Maximum-likelihood tomography from records or histograms.
    Tomo(TomoArgs),
    /// Sample a dot population and report the minimum-splitting yield.
    Yield(YieldArgs),
    /// Fidelity versus splitting with a Lorentzian fit.
    Scan(ScanArgs),
    /// Run, list or verify scenarios.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV with header fp_kv_cm,s_ueV,s_err,theta_deg,theta_err.
    pub input: PathBuf,
    /// Fit the shear coefficient beta as well.
    #[arg(long)]
    pub fit_beta: bool,
    /// JSON stress map; defaults to unit stress per kV/cm.
    #[arg(long)]
    pub stress_map: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SettingSet {
    /// HH, HV, DD, DA, RR, RL.
    Analysis,
    /// The sixteen tomography settings.
    Tomography,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// SimulationConfig JSON; omitted keys take defaults.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub n_pulses: u64,
    #[arg(long, value_enum, default_value_t = SettingSet::Analysis)]
    pub settings: SettingSet,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Directory holding histograms.csv and its histograms.json sidecar.
    pub histograms: PathBuf,
    /// Gate widths in ns, non-increasing; defaults to the full period.
    #[arg(long, value_delimiter = ',')]
    pub gates_ns: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct TomoArgs {
    /// records.csv, or a histogram directory.
    pub input: PathBuf,
    /// Gate width in ns when reading histograms.
    #[arg(long, default_value_t = tomography::DEFAULT_GATE_NS)]
    pub gate_ns: f64,
}

#[derive(Debug, Args)]
pub struct YieldArgs {
    #[arg(long, default_value_t = 82)]
    pub n_dots: usize,
    /// PopulationModel JSON.
    #[arg(long, conflicts_with = "calibrate")]
    pub model: Option<PathBuf>,
    /// Calibrate to the given fractions below 1 and 3 ueV, e.g. 0.11,0.33.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub calibrate: Option<Vec<f64>>,
    #[arg(long, default_value_t = 20.0)]
    pub s0_mean_uev: f64,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Splittings in ueV.
    #[arg(long, value_delimiter = ',', required = true)]
    pub grid_uev: Vec<f64>,
    #[arg(long)]
    pub n_pulses: u64,
    /// Gate width in ns; full period when omitted.
    #[arg(long)]
    pub gate_ns: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCommand {
    /// Run a scenario file or bundled scenario into <output-dir>/<name>.
    Run {
        scenario: String,
    },
    /// List bundled scenarios.
    List,
    /// Check output hashes against a manifest.
    Verify {
        manifest: PathBuf,
        /// Also re-run the scenario and compare the regenerated files.
        #[arg(long)]
        rerun: bool,
    },
}

fn print_json<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("report serializes"));
}

fn load_sim(path: &Path) -> CliResult<SimulationConfig> {
    let cfg: SimulationConfig = formats::read_json(path)?;
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Execute a parsed command line.
pub fn run(cli: &Cli) -> CliResult<()> {
    let out = cli.output_dir.as_path();
    let fmt = cli.format;
    match &cli.command {
        Command::Fit(a) => {
            let samples = formats::ingest_tuning_csv(&a.input)?;
            let map = match &a.stress_map {
                Some(p) => {
                    let m: StressMap = formats::read_json(p)?;
                    StressMap::new(m.stress_per_field, m.energy_shift_per_field)?
                }
                None => StressMap::default(),
            };
            let report = scenario::fit_report(&samples, &map, a.fit_beta, None)?;
            formats::write_json(&out.join("tuning_fit.json"), &report)?;
            print_json(&report);
        }
        Command::Simulate(a) => {
            let cfg = load_sim(&a.config)?;
            let settings: Vec<MeasurementSetting> = match a.settings {
                SettingSet::Analysis => analysis_settings().to_vec(),
                SettingSet::Tomography => tomography::canonical_settings().to_vec(),
            };
            let hists = parallel::simulate(&cfg, &settings, a.n_pulses, cli.seed)?;
            let side = HistogramSidecar::describe(&hists, Some(cfg), Some(cli.seed))?;
            for p in formats::write_histograms(out, &hists, &side, fmt)? {
                println!("{}", p.display());
            }
        }
        Command::Analyze(a) => {
            let (hists, side) = formats::ingest_histograms(&a.histograms)?;
            let gates = if a.gates_ns.is_empty() { vec![side.period_ns] } else { a.gates_ns.clone() };
            for &g in &gates {
                GateWindow::new(g).validate(side.period_ns)?;
            }
            let reports = analysis::gate_scan(&hists, &gates)?;
            ensure_dir(out)?;
            formats::write_gate_table(out, &reports, fmt)?;
            print_json(&reports);
        }
        Command::Tomo(a) => {
            let records: Vec<TomographyRecord> = if a.input.is_dir() {
                let (hists, side) = formats::ingest_histograms(&a.input)?;
                GateWindow::new(a.gate_ns).validate(side.period_ns)?;
                tomography::tomography_from_histograms(&hists, &GateWindow::new(a.gate_ns))?
            } else {
                formats::ingest_records(&a.input)?
            };
            ensure_dir(out)?;
            let mut written = Vec::new();
            if a.input.is_dir() {
                written.push(formats::write_records(out, &records, fmt)?);
            }
            let report = scenario::write_reconstruction(&records, out, &mut written)?;
            print_json(&report);
        }
        Command::Yield(a) => {
            let stage = YieldStage {
                model: a.model.as_deref().map(formats::read_json::<PopulationModel>).transpose()?,
                calibrate: a.calibrate.as_ref().map(|c| CalibrationTargets {
                    frac_below_1uev: c[0],
                    frac_below_3uev: c[1],
                    s0_mean: a.s0_mean_uev,
                }),
                n_dots: a.n_dots,
                thresholds: vec![eled_core::yield_stats::LINEWIDTH_THRESHOLD, eled_core::yield_stats::ENTANGLEMENT_THRESHOLD],
                upper: 40.0,
                bin_width: 1.0,
            };
            let s = scenario::Scenario {
                name: "yield".into(),
                description: String::new(),
                seed: cli.seed,
                stages: vec![scenario::Stage::Yield(stage)],
            };
            scenario::Loaded { scenario: s.clone(), base_dir: PathBuf::from(".") }.validate()?;
            let mut written = Vec::new();
            scenario::run_stage(&s.stages[0], Path::new("."), cli.seed, out, fmt, &mut written)?;
            let report: serde_json::Value = formats::read_json(&out.join("yield_report.json"))?;
            print_json(&report);
        }
        Command::Scan(a) => {
            let cfg = load_sim(&a.config)?;
            if let Some(g) = a.gate_ns {
                GateWindow::new(g).validate(cfg.drive.period())?;
            }
            let stage = scenario::Stage::FssScan(scenario::ScanStage {
                simulation: cfg,
                grid: a.grid_uev.clone(),
                n_pulses: a.n_pulses,
                gate: a.gate_ns,
            });
            let mut written = Vec::new();
            scenario::run_stage(&stage, Path::new("."), cli.seed, out, fmt, &mut written)?;
            let fit: serde_json::Value = formats::read_json(&out.join("fss_fit.json"))?;
            print_json(&fit);
        }
        Command::Scenario(sc) => return run_scenario_command(sc, out, fmt),
    }
    Ok(())
}

fn run_scenario_command(sc: &ScenarioCommand, out: &Path, fmt: TableFormat) -> CliResult<()> {
    match sc {
        ScenarioCommand::List => {
            for (name, text) in scenario::BUNDLED {
                let s = scenario::parse(text, name)?;
                println!("{name}\t{}", s.description);
            }
        }
        ScenarioCommand::Run { scenario: spec } => {
            let loaded = scenario::load(spec)?;
            let dir = out.join(&loaded.scenario.name);
            let outcome = manifest::run_scenario(&loaded, &dir, fmt)?;
            println!("{}", outcome.manifest_path.display());
            if let Some(e) = outcome.error {
                return Err(e);
            }
        }
        ScenarioCommand::Verify { manifest: path, rerun } => {
            let (m, mut bad) = manifest::verify_files(path)?;
            if *rerun {
                let scratch = std::env::temp_dir().join(format!("eled-verify-{}-{}", std::process::id(), rng::child_seed(m.seed, &m.scenario_name)));
                let res = manifest::verify_rerun(path, &scratch);
                let _ = std::fs::remove_dir_all(&scratch);
                bad.extend(res?.1);
            }
            if m.status == Status::Failed {
                log::warn!("manifest records a failed run: {}", m.error.as_deref().unwrap_or("unknown error"));
            }
            for b in &bad {
                println!("MISMATCH {} expected {} found {}", b.path, b.expected, b.found.as_deref().unwrap_or("<missing>"));
            }
            if !bad.is_empty() {
                return Err(CliError::invalid(path.display().to_string(), format!("{} file(s) do not match the manifest", bad.len())));
            }
            println!("OK {} files", m.files.len());
        }
    }
    Ok(())
}

/// Parse arguments, run, and return the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match parallel::with_threads(cli.threads, || run(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
