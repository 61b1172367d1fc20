//! On-disk formats. Tables are CSV (or a JSON array of the same rows) with
//! unit-suffixed headers; configs and reports are pretty-printed JSON.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use eled_core::analysis::{GateReport, ScanPoint};
use eled_core::cascade::{CoincidenceHistogram, SimulationConfig};
use eled_core::quantum::{DensityMatrix4, MeasurementSetting, Polarization};
use eled_core::strain::TuningSample;
use eled_core::tomography::TomographyRecord;
use eled_core::yield_stats::SminHistogram;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const HISTOGRAM_STEM: &str = "histograms";
pub const HISTOGRAM_SIDECAR: &str = "histograms.json";

/// Relative tolerance on bin spacing when ingesting histograms.
const SPACING_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Csv,
    Json,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Json => "json",
        }
    }

    fn of_path(path: &Path) -> TableFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => TableFormat::Json,
            _ => TableFormat::Csv,
        }
    }
}

/// Write `rows` to `dir/stem.{csv,json}` and return the path.
pub fn write_table<T: Serialize>(dir: &Path, stem: &str, rows: &[T], format: TableFormat) -> CliResult<PathBuf> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(|e| CliError::invalid(path.display().to_string(), e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::invalid(path.display().to_string(), e.to_string()))?;
            write_bytes(&path, &bytes)?;
        }
        TableFormat::Json => write_json(&path, &rows)?,
    }
    Ok(path)
}

/// Rows of a CSV or JSON-array table, each paired with its line (CSV) or
/// 1-based element index (JSON).
pub fn read_table<T: DeserializeOwned>(path: &Path, header: &[&str]) -> CliResult<Vec<(u64, T)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    match TableFormat::of_path(path) {
        TableFormat::Json => {
            let rows: Vec<serde_json::Value> =
                serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.line() as u64, e.to_string()))?;
            rows.into_iter()
                .enumerate()
                .map(|(i, v)| {
                    let row = serde_json::from_value(v).map_err(|e| CliError::parse(path, i as u64 + 1, e.to_string()))?;
                    Ok((i as u64 + 1, row))
                })
                .collect()
        }
        TableFormat::Csv => {
            let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
            let found = r.headers().map_err(|e| CliError::parse(path, 1, e.to_string()))?.clone();
            if found.iter().ne(header.iter().copied()) {
                return Err(CliError::parse(
                    path,
                    1,
                    format!("header is '{}', expected '{}'", found.iter().collect::<Vec<_>>().join(","), header.join(",")),
                ));
            }
            let mut out = Vec::new();
            for rec in r.records() {
                let rec = rec.map_err(|e| {
                    let line = e.position().map_or(0, |p| p.line());
                    CliError::parse(path, line, e.to_string())
                })?;
                let line = rec.position().map_or(0, |p| p.line());
                let row = rec.deserialize(Some(&found)).map_err(|e| CliError::parse(path, line, e.to_string()))?;
                out.push((line, row));
            }
            Ok(out)
        }
    }
}

/// Table path `dir/stem.csv`, falling back to `dir/stem.json`.
pub fn find_table(dir: &Path, stem: &str) -> CliResult<PathBuf> {
    for ext in ["csv", "json"] {
        let p = dir.join(format!("{stem}.{ext}"));
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(CliError::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, format!("no {stem}.csv or {stem}.json"))))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::invalid(path.display().to_string(), e.to_string()))?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, e.line() as u64, e.to_string()))
}

fn setting_of(path: &Path, line: u64, xx: &str, x: &str) -> CliResult<MeasurementSetting> {
    let p = |s: &str| s.parse::<Polarization>().map_err(|e| CliError::parse(path, line, e.to_string()));
    Ok(MeasurementSetting::new(p(xx)?, p(x)?))
}

fn count_of(path: &Path, line: u64, v: i64) -> CliResult<u64> {
    u64::try_from(v).map_err(|_| CliError::parse(path, line, format!("negative count {v}")))
}

/// Nine decimals keeps sub-picosecond precision and hides summation noise.
fn tidy(x: f64) -> f64 {
    let r = (x * 1e9).round() / 1e9;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

// ---- histograms -------------------------------------------------------------

pub const HISTOGRAM_HEADER: [&str; 4] = ["setting_xx", "setting_x", "bin_center_ns", "counts"];

#[derive(Debug, Serialize, Deserialize)]
struct HistogramRow {
    setting_xx: String,
    setting_x: String,
    bin_center_ns: f64,
    counts: i64,
}

/// Metadata the histogram table cannot carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSidecar {
    pub period_ns: f64,
    /// Pulses per setting; 0 when unknown.
    #[serde(default)]
    pub n_pulses: u64,
    /// Per-setting overrides of `n_pulses`, keyed like "HV".
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub n_pulses_by_setting: BTreeMap<String, u64>,
    /// Needed only when a setting has a single bin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_width_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<SimulationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl HistogramSidecar {
    pub fn describe(histograms: &[CoincidenceHistogram], config: Option<SimulationConfig>, seed: Option<u64>) -> CliResult<Self> {
        let first = histograms.first().ok_or_else(|| CliError::invalid("histograms", "nothing to write"))?;
        let mut by_setting = BTreeMap::new();
        for h in histograms {
            if h.period != first.period {
                return Err(CliError::invalid("histograms", "settings disagree on the excitation period"));
            }
            if h.n_pulses != first.n_pulses {
                by_setting.insert(h.setting.to_string(), h.n_pulses);
            }
        }
        Ok(Self {
            period_ns: first.period,
            n_pulses: first.n_pulses,
            n_pulses_by_setting: by_setting,
            bin_width_ns: Some(first.bin_width),
            config,
            seed,
        })
    }
}

/// Write `histograms.{csv,json}` plus the `histograms.json` sidecar (named
/// `histograms.meta.json` when the table itself is JSON).
pub fn write_histograms(dir: &Path, histograms: &[CoincidenceHistogram], sidecar: &HistogramSidecar, format: TableFormat) -> CliResult<Vec<PathBuf>> {
    let rows: Vec<HistogramRow> = histograms
        .iter()
        .flat_map(|h| {
            h.counts.iter().enumerate().map(move |(i, &c)| HistogramRow {
                setting_xx: h.setting.xx.to_string(),
                setting_x: h.setting.x.to_string(),
                bin_center_ns: tidy(h.bin_center(i)),
                counts: c as i64,
            })
        })
        .collect();
    let table = write_table(dir, HISTOGRAM_STEM, &rows, format)?;
    let meta = sidecar_path(dir, format);
    write_json(&meta, sidecar)?;
    Ok(vec![table, meta])
}

fn sidecar_path(dir: &Path, format: TableFormat) -> PathBuf {
    match format {
        TableFormat::Csv => dir.join(HISTOGRAM_SIDECAR),
        TableFormat::Json => dir.join("histograms.meta.json"),
    }
}

/// Load histograms and sidecar from a directory written by [`write_histograms`]
/// or assembled by hand from measured data.
pub fn ingest_histograms(dir: &Path) -> CliResult<(Vec<CoincidenceHistogram>, HistogramSidecar)> {
    let table = find_table(dir, HISTOGRAM_STEM)?;
    let meta = sidecar_path(dir, TableFormat::of_path(&table));
    let sidecar: HistogramSidecar = read_json(&meta)?;
    let rows: Vec<(u64, HistogramRow)> = read_table(&table, &HISTOGRAM_HEADER)?;
    if rows.is_empty() {
        return Err(CliError::parse(&table, 1, "no histogram rows"));
    }

    let mut order: Vec<MeasurementSetting> = Vec::new();
    let mut bins: BTreeMap<MeasurementSetting, Vec<(u64, f64, u64)>> = BTreeMap::new();
    for (line, r) in rows {
        let s = setting_of(&table, line, &r.setting_xx, &r.setting_x)?;
        if !r.bin_center_ns.is_finite() {
            return Err(CliError::parse(&table, line, "bin center is not finite"));
        }
        let c = count_of(&table, line, r.counts)?;
        bins.entry(s).or_insert_with(|| {
            order.push(s);
            Vec::new()
        });
        bins.get_mut(&s).expect("inserted above").push((line, r.bin_center_ns, c));
    }

    let mut out = Vec::with_capacity(order.len());
    for s in order {
        let b = &bins[&s];
        let width = match (b.len(), sidecar.bin_width_ns) {
            (1, Some(w)) => w,
            (1, None) => {
                return Err(CliError::parse(&table, b[0].0, format!("setting {s} has one bin and the sidecar gives no bin_width_ns")))
            }
            _ => (b[b.len() - 1].1 - b[0].1) / (b.len() - 1) as f64,
        };
        if width.is_nan() || width <= 0.0 {
            return Err(CliError::parse(&table, b[1].0, format!("bin centers of {s} are not increasing")));
        }
        for (k, pair) in b.windows(2).enumerate() {
            let step = pair[1].1 - pair[0].1;
            if step <= 0.0 {
                return Err(CliError::parse(&table, pair[1].0, format!("bin centers of {s} are not increasing")));
            }
            let expected = b[0].1 + (k + 1) as f64 * width;
            if (pair[1].1 - expected).abs() > SPACING_TOL * width.max(1.0) * (b.len() as f64) {
                return Err(CliError::parse(&table, pair[1].0, format!("bin centers of {s} are not uniformly spaced")));
            }
        }
        let n_pulses = sidecar.n_pulses_by_setting.get(&s.to_string()).copied().unwrap_or(sidecar.n_pulses);
        let origin = b[0].1 - width / 2.0;
        let h = CoincidenceHistogram::new(s, width, origin, b.iter().map(|t| t.2).collect(), n_pulses, sidecar.period_ns)?;
        out.push(h);
    }
    Ok((out, sidecar))
}

// ---- tuning curves ----------------------------------------------------------

pub const TUNING_HEADER: [&str; 5] = ["fp_kv_cm", "s_ueV", "s_err", "theta_deg", "theta_err"];

pub fn write_tuning(dir: &Path, stem: &str, samples: &[TuningSample], format: TableFormat) -> CliResult<PathBuf> {
    write_table(dir, stem, samples, format)
}

/// Tuning samples; every row is validated and reported by line.
pub fn ingest_tuning_csv(path: &Path) -> CliResult<Vec<TuningSample>> {
    let rows: Vec<(u64, TuningSample)> = read_table(path, &TUNING_HEADER)?;
    rows.into_iter()
        .map(|(line, s)| {
            s.validate().map_err(|e| CliError::parse(path, line, e.to_string()))?;
            Ok(s)
        })
        .collect()
}

// ---- tomography records -----------------------------------------------------

pub const RECORD_HEADER: [&str; 4] = ["setting_xx", "setting_x", "counts", "weight"];

#[derive(Debug, Serialize, Deserialize)]
struct RecordRow {
    setting_xx: String,
    setting_x: String,
    counts: i64,
    weight: f64,
}

pub fn write_records(dir: &Path, records: &[TomographyRecord], format: TableFormat) -> CliResult<PathBuf> {
    let rows: Vec<RecordRow> = records
        .iter()
        .map(|r| RecordRow {
            setting_xx: r.setting.xx.to_string(),
            setting_x: r.setting.x.to_string(),
            counts: r.counts as i64,
            weight: r.acquisition_weight,
        })
        .collect();
    write_table(dir, "records", &rows, format)
}

pub fn ingest_records(path: &Path) -> CliResult<Vec<TomographyRecord>> {
    let rows: Vec<(u64, RecordRow)> = read_table(path, &RECORD_HEADER)?;
    rows.into_iter()
        .map(|(line, r)| {
            let s = setting_of(path, line, &r.setting_xx, &r.setting_x)?;
            let c = count_of(path, line, r.counts)?;
            TomographyRecord::new(s, c, r.weight).map_err(|e| CliError::parse(path, line, e.to_string()))
        })
        .collect()
}

// ---- density matrices -------------------------------------------------------

pub const BASIS_ORDER: &str = "HH,HV,VH,VV";

/// Row-major `[re, im]` entries in the HH, HV, VH, VV basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityMatrixJson {
    pub basis: String,
    pub entries: Vec<[f64; 2]>,
}

impl From<&DensityMatrix4> for DensityMatrixJson {
    fn from(rho: &DensityMatrix4) -> Self {
        Self { basis: BASIS_ORDER.to_string(), entries: rho.to_entries().to_vec() }
    }
}

impl DensityMatrixJson {
    pub fn to_matrix(&self) -> eled_core::Result<DensityMatrix4> {
        if self.basis.replace(' ', "") != BASIS_ORDER {
            return Err(eled_core::Error::Input(format!("basis must be '{BASIS_ORDER}', got '{}'", self.basis)));
        }
        DensityMatrix4::from_entries(&self.entries)
    }
}

// ---- analysis tables --------------------------------------------------------

pub const FSS_CURVE_HEADER: [&str; 3] = ["fss_ueV", "fidelity", "fidelity_err"];

pub fn write_fss_curve(dir: &Path, points: &[ScanPoint], format: TableFormat) -> CliResult<PathBuf> {
    write_table(dir, "fss_curve", points, format)
}

pub fn ingest_fss_curve(path: &Path) -> CliResult<Vec<ScanPoint>> {
    let rows: Vec<(u64, ScanPoint)> = read_table(path, &FSS_CURVE_HEADER)?;
    Ok(rows.into_iter().map(|(_, p)| p).collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct YieldRow {
    #[serde(rename = "bin_lo_ueV")]
    bin_lo: f64,
    #[serde(rename = "bin_hi_ueV")]
    bin_hi: f64,
    count: u64,
}

pub fn write_yield_histogram(dir: &Path, h: &SminHistogram, format: TableFormat) -> CliResult<PathBuf> {
    let rows: Vec<YieldRow> = h.bins().map(|(lo, hi, count)| YieldRow { bin_lo: tidy(lo), bin_hi: tidy(hi), count }).collect();
    write_table(dir, "yield_histogram", &rows, format)
}

/// One row per gate width.
#[derive(Debug, Serialize, Deserialize)]
pub struct GateRow {
    pub gate_width_ns: f64,
    pub center_ns: f64,
    pub kept_fraction: f64,
    pub c_hv: f64,
    pub c_hv_err: f64,
    pub c_da: f64,
    pub c_da_err: f64,
    pub c_rl: f64,
    pub c_rl_err: f64,
    pub fidelity: f64,
    pub fidelity_err: f64,
    pub s_rd: f64,
    pub s_rd_err: f64,
    pub s_rc: f64,
    pub s_rc_err: f64,
    pub s_dc: f64,
    pub s_dc_err: f64,
}

impl From<&GateReport> for GateRow {
    fn from(g: &GateReport) -> Self {
        let c = &g.correlations;
        let b = &g.bell;
        Self {
            gate_width_ns: g.gate_width,
            center_ns: tidy(g.center),
            kept_fraction: g.kept_fraction,
            c_hv: c.c_hv,
            c_hv_err: c.sigma_hv,
            c_da: c.c_da,
            c_da_err: c.sigma_da,
            c_rl: c.c_rl,
            c_rl_err: c.sigma_rl,
            fidelity: g.fidelity.value,
            fidelity_err: g.fidelity.sigma,
            s_rd: b.s_rd,
            s_rd_err: b.sigma_rd,
            s_rc: b.s_rc,
            s_rc_err: b.sigma_rc,
            s_dc: b.s_dc,
            s_dc_err: b.sigma_dc,
        }
    }
}

pub fn write_gate_table(dir: &Path, reports: &[GateReport], format: TableFormat) -> CliResult<PathBuf> {
    let rows: Vec<GateRow> = reports.iter().map(GateRow::from).collect();
    write_table(dir, "gates", &rows, format)
}
