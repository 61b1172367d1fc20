//! Coincidence histograms to correlation, fidelity and Bell parameters.
//!
//! Gated counts integrate a window of total width Δτ centered on the zero
//! delay peak (or on k periods away for side peaks). g² divides the gated
//! zero-delay counts by the mean of the four side peaks at ±1 and ±2
//! periods. Uncertainties are Poisson on raw integrated counts, propagated
//! in quadrature.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use crate::cascade::{self, CoincidenceHistogram, SimulationConfig};
use crate::error::{Error, Result};
use crate::math;
use crate::optim::{levenberg_marquardt, LeastSquares, LmOptions};
use crate::quantum::{MeasurementSetting, Polarization};
use crate::rng;

/// Value with 1σ uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

impl Estimate {
    pub const fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }
}

/// Temporal post-selection window of total width Δτ.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GateWindow {
    #[cfg_attr(feature = "serde", serde(rename = "width_ns"))]
    pub width: f64,
    /// Window center; `None` centers on the detected zero-delay peak.
    #[cfg_attr(feature = "serde", serde(rename = "center_ns", default, skip_serializing_if = "Option::is_none"))]
    pub center: Option<f64>,
}

impl GateWindow {
    pub fn new(width: f64) -> Self {
        Self { width, center: None }
    }

    pub fn validate(&self, period: f64) -> Result<()> {
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::validation(format!("gate width {} ns must be positive", self.width)));
        }
        if self.width > period * (1.0 + 1e-9) {
            return Err(Error::validation(format!(
                "gate width {} ns exceeds the repetition period {period} ns",
                self.width
            )));
        }
        if self.center.is_some_and(|c| !c.is_finite()) {
            return Err(Error::validation("gate center must be finite"));
        }
        Ok(())
    }
}

/// The six settings needed for C_HV, C_DA and C_RL, as (co, cross) pairs.
pub const BASIS_PAIRS: [(MeasurementSetting, MeasurementSetting); 3] = {
    use Polarization::*;
    [
        (MeasurementSetting::new(H, H), MeasurementSetting::new(H, V)),
        (MeasurementSetting::new(D, D), MeasurementSetting::new(D, A)),
        (MeasurementSetting::new(R, R), MeasurementSetting::new(R, L)),
    ]
};

pub fn analysis_settings() -> [MeasurementSetting; 6] {
    let p = BASIS_PAIRS;
    [p[0].0, p[0].1, p[1].0, p[1].1, p[2].0, p[2].1]
}

const CENTER_THRESHOLD: f64 = 0.8;

/// Position of the zero-delay peak: weighted centroid of the contiguous bins
/// at ≥ 80 % of the maximum of the summed histograms within ±period/2.
/// Falls back to 0 when the central period is empty.
pub fn zero_delay_center(histograms: &[CoincidenceHistogram]) -> Result<f64> {
    let Some(first) = histograms.first() else {
        return Err(Error::input("no histograms to locate the zero-delay peak in"));
    };
    if let Some(bad) = histograms.iter().find(|h| !h.same_binning(first)) {
        return Err(Error::input(format!("histogram {} has a different binning", bad.setting)));
    }
    let n = first.counts.len();
    let sum: Vec<u64> = (0..n).map(|i| histograms.iter().map(|h| h.counts[i]).sum()).collect();
    let half = first.period / 2.0;
    let central: Vec<usize> = (0..n).filter(|&i| first.bin_center(i).abs() < half).collect();
    let Some(&imax) = central.iter().max_by_key(|&&i| (sum[i], core::cmp::Reverse(i))) else {
        return Ok(0.0);
    };
    if sum[imax] == 0 {
        return Ok(0.0);
    }
    let threshold = CENTER_THRESHOLD * sum[imax] as f64;
    let (lo_lim, hi_lim) = (central[0], *central.last().unwrap());
    let mut lo = imax;
    while lo > lo_lim && sum[lo - 1] as f64 >= threshold {
        lo -= 1;
    }
    let mut hi = imax;
    while hi < hi_lim && sum[hi + 1] as f64 >= threshold {
        hi += 1;
    }
    let (mut w, mut m) = (0.0, 0.0);
    for i in lo..=hi {
        w += sum[i] as f64;
        m += sum[i] as f64 * first.bin_center(i);
    }
    Ok(m / w)
}

/// Counts within the gate around `center + k·period`.
fn gated(h: &CoincidenceHistogram, width: f64, center: f64, k: i32) -> Result<f64> {
    let c = center + k as f64 * h.period;
    let (lo, hi) = (c - width / 2.0, c + width / 2.0);
    if !h.covers(lo, hi) {
        return Err(Error::input(format!(
            "histogram {} does not cover the window [{lo:.3}, {hi:.3}] ns",
            h.setting
        )));
    }
    Ok(h.integrate(lo, hi))
}

/// Gated zero-delay coincidences.
pub fn gated_zero_peak(h: &CoincidenceHistogram, width: f64, center: f64) -> Result<f64> {
    gated(h, width, center, 0)
}

/// Normalized zero-delay coincidence rate with its Poisson uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct G2 {
    pub value: f64,
    pub sigma: f64,
    pub zero_peak: f64,
    pub side_peak_mean: f64,
}

/// g² at zero delay: gated central counts over the mean of the gated side
/// peaks at ±1 and ±2 periods.
pub fn normalize_g2(h: &CoincidenceHistogram, gate: &GateWindow) -> Result<G2> {
    gate.validate(h.period)?;
    let center = gate.center.unwrap_or(0.0);
    let z = gated(h, gate.width, center, 0)?;
    let mut side = 0.0;
    for k in [-2, -1, 1, 2] {
        side += gated(h, gate.width, center, k)?;
    }
    if side <= 0.0 {
        return Err(Error::input(format!("side peaks of {} are empty; g² is undefined", h.setting)));
    }
    let mean = side / 4.0;
    let g = z / mean;
    let sigma = math::sqrt(z / (mean * mean) + g * g / side);
    Ok(G2 { value: g, sigma, zero_peak: z, side_peak_mean: mean })
}

/// C = (g_co − g_cross)/(g_co + g_cross).
pub fn degree_of_correlation(g2_co: f64, g2_cross: f64) -> Result<f64> {
    let s = g2_co + g2_cross;
    if !(s > 0.0) {
        return Err(Error::input("co- and cross-polarized g² are both zero; correlation undefined"));
    }
    Ok((g2_co - g2_cross) / s)
}

pub fn degree_of_correlation_est(co: Estimate, cross: Estimate) -> Result<Estimate> {
    let c = degree_of_correlation(co.value, cross.value)?;
    let s = co.value + cross.value;
    let sigma = 2.0 * math::sqrt(cross.value * cross.value * co.sigma * co.sigma + co.value * co.value * cross.sigma * cross.sigma) / (s * s);
    Ok(Estimate::new(c, sigma))
}

/// Degrees of correlation in the rectilinear, diagonal and circular bases.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorrelationSet {
    pub c_hv: f64,
    pub c_da: f64,
    pub c_rl: f64,
    pub sigma_hv: f64,
    pub sigma_da: f64,
    pub sigma_rl: f64,
}

impl CorrelationSet {
    pub fn new(c_hv: f64, c_da: f64, c_rl: f64, sigma_hv: f64, sigma_da: f64, sigma_rl: f64) -> Result<Self> {
        let s = Self { c_hv, c_da, c_rl, sigma_hv, sigma_da, sigma_rl };
        s.validate()?;
        Ok(s)
    }

    /// Exact values without uncertainties.
    pub fn exact(c_hv: f64, c_da: f64, c_rl: f64) -> Result<Self> {
        Self::new(c_hv, c_da, c_rl, 0.0, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (n, c) in [("C_HV", self.c_hv), ("C_DA", self.c_da), ("C_RL", self.c_rl)] {
            if !(c.abs() <= 1.0 + 1e-12) {
                return Err(Error::validation(format!("{n} = {c} outside [-1, 1]")));
            }
        }
        for s in [self.sigma_hv, self.sigma_da, self.sigma_rl] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::validation("correlation uncertainties must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// f⁺ = (1 + C_HV + C_DA − C_RL)/4.
pub fn fidelity_from_correlations(c: &CorrelationSet) -> Estimate {
    Estimate::new(
        (1.0 + c.c_hv + c.c_da - c.c_rl) / 4.0,
        math::sqrt(c.sigma_hv * c.sigma_hv + c.sigma_da * c.sigma_da + c.sigma_rl * c.sigma_rl) / 4.0,
    )
}

/// CHSH-type parameters for the three pairs of Poincaré-sphere planes.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BellParams {
    pub s_rd: f64,
    pub s_rc: f64,
    pub s_dc: f64,
    pub sigma_rd: f64,
    pub sigma_rc: f64,
    pub sigma_dc: f64,
}

/// S_RD = √2(C_HV + C_DA), S_RC = √2(C_HV − C_RL), S_DC = √2(C_DA − C_RL).
pub fn bell_parameters(c: &CorrelationSet) -> BellParams {
    let q = |a: f64, b: f64| math::SQRT_2 * math::sqrt(a * a + b * b);
    BellParams {
        s_rd: math::SQRT_2 * (c.c_hv + c.c_da),
        s_rc: math::SQRT_2 * (c.c_hv - c.c_rl),
        s_dc: math::SQRT_2 * (c.c_da - c.c_rl),
        sigma_rd: q(c.sigma_hv, c.sigma_da),
        sigma_rc: q(c.sigma_hv, c.sigma_rl),
        sigma_dc: q(c.sigma_da, c.sigma_rl),
    }
}

fn find(histograms: &[CoincidenceHistogram], s: MeasurementSetting) -> Result<&CoincidenceHistogram> {
    histograms
        .iter()
        .find(|h| h.setting == s)
        .ok_or_else(|| Error::input(format!("missing histogram for setting {s}")))
}

/// Correlation set from the six analysis histograms. The gate must carry an
/// explicit center (see [`zero_delay_center`]).
pub fn correlations(histograms: &[CoincidenceHistogram], gate: &GateWindow) -> Result<CorrelationSet> {
    let mut out = [Estimate::new(0.0, 0.0); 3];
    for (slot, (co, cross)) in BASIS_PAIRS.iter().enumerate() {
        let gc = normalize_g2(find(histograms, *co)?, gate)?;
        let gx = normalize_g2(find(histograms, *cross)?, gate)?;
        out[slot] = degree_of_correlation_est(Estimate::new(gc.value, gc.sigma), Estimate::new(gx.value, gx.sigma))?;
    }
    CorrelationSet::new(out[0].value, out[1].value, out[2].value, out[0].sigma, out[1].sigma, out[2].sigma)
}

/// Analysis at one gate width.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GateReport {
    #[cfg_attr(feature = "serde", serde(rename = "gate_width_ns"))]
    pub gate_width: f64,
    #[cfg_attr(feature = "serde", serde(rename = "center_ns"))]
    pub center: f64,
    pub correlations: CorrelationSet,
    pub fidelity: Estimate,
    pub bell: BellParams,
    /// Gated / full-period zero-delay coincidences, summed over settings.
    pub kept_fraction: f64,
}

/// Evaluate each gate width (non-increasing order) on the six analysis
/// histograms, centered on the detected zero-delay peak.
pub fn gate_scan(histograms: &[CoincidenceHistogram], widths: &[f64]) -> Result<Vec<GateReport>> {
    if widths.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::input("gate widths must be sorted in non-increasing order"));
    }
    let six: Vec<CoincidenceHistogram> =
        analysis_settings().iter().map(|&s| find(histograms, s).cloned()).collect::<Result<_>>()?;
    let period = six[0].period;
    for w in widths {
        GateWindow::new(*w).validate(period)?;
    }
    let center = zero_delay_center(&six)?;
    let mut full = 0.0;
    for h in &six {
        full += gated(h, period, center, 0)?;
    }
    widths
        .iter()
        .map(|&w| {
            let gate = GateWindow { width: w, center: Some(center) };
            let corr = correlations(&six, &gate)?;
            let mut kept = 0.0;
            for h in &six {
                kept += gated(h, w, center, 0)?;
            }
            Ok(GateReport {
                gate_width: w,
                center,
                correlations: corr,
                fidelity: fidelity_from_correlations(&corr),
                bell: bell_parameters(&corr),
                kept_fraction: if full > 0.0 { kept / full } else { 0.0 },
            })
        })
        .collect()
}

/// f(s) = f_bg + A / (1 + (2s/w)²)
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LorentzianFit {
    pub baseline: f64,
    pub amplitude: f64,
    #[cfg_attr(feature = "serde", serde(rename = "fwhm_ueV"))]
    pub fwhm: f64,
    pub baseline_err: f64,
    pub amplitude_err: f64,
    #[cfg_attr(feature = "serde", serde(rename = "fwhm_err_ueV"))]
    pub fwhm_err: f64,
    /// f_bg + A
    pub peak: f64,
    pub chi_squared: f64,
}

impl LorentzianFit {
    pub fn eval(&self, s: f64) -> f64 {
        let u = 2.0 * s / self.fwhm;
        self.baseline + self.amplitude / (1.0 + u * u)
    }
}

struct Lorentzian<'a> {
    pts: &'a [[f64; 3]],
}

impl LeastSquares for Lorentzian<'_> {
    fn n_params(&self) -> usize {
        3
    }
    fn n_residuals(&self) -> usize {
        self.pts.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for (i, [x, y, s]) in self.pts.iter().enumerate() {
            let u = 2.0 * x / p[2];
            out[i] = (y - p[0] - p[1] / (1.0 + u * u)) / s;
        }
    }
    fn jacobian(&self, p: &[f64], out: &mut [f64]) {
        for (i, [x, _, s]) in self.pts.iter().enumerate() {
            let u = 2.0 * x / p[2];
            let d = 1.0 + u * u;
            out[3 * i] = -1.0 / s;
            out[3 * i + 1] = -1.0 / (d * s);
            out[3 * i + 2] = -p[1] * 2.0 * u * u / (p[2] * d * d * s);
        }
    }
}

const MIN_SIGMA: f64 = 1e-3;

/// Weighted Lorentzian fit to `(s, f, σ)` points. Needs at least 4 points;
/// failures carry the raw curve.
pub fn fit_lorentzian(points: &[[f64; 3]]) -> Result<LorentzianFit> {
    let curve: Vec<[f64; 3]> = points.iter().map(|&[x, y, s]| [x, y, s.max(MIN_SIGMA)]).collect();
    let fail = |cause: Error| Error::CurveFit { cause: Box::new(cause), curve: points.to_vec() };
    if curve.len() < 4 {
        return Err(fail(Error::input(format!("Lorentzian fit needs at least 4 points, got {}", curve.len()))));
    }
    if curve.iter().flatten().any(|v| !v.is_finite()) {
        return Err(fail(Error::input("curve contains non-finite values")));
    }
    let mut sorted = curve.clone();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let y0 = sorted[0][1];
    let y_end = sorted.last().unwrap()[1];
    let base0 = y_end.min(y0);
    let amp0 = y0 - base0;
    let half = base0 + 0.5 * amp0;
    let mut w0 = sorted.last().unwrap()[0].abs().max(1e-3);
    for pair in sorted.windows(2) {
        if pair[0][1] >= half && pair[1][1] < half {
            let t = (pair[0][1] - half) / (pair[0][1] - pair[1][1]);
            w0 = 2.0 * (pair[0][0] + t * (pair[1][0] - pair[0][0])).abs().max(1e-3);
            break;
        }
    }
    let problem = Lorentzian { pts: &curve };
    let rep = levenberg_marquardt(&problem, &[base0, amp0, w0], &LmOptions::default()).map_err(fail)?;
    let e = rep.std_errors();
    let p = &rep.params;
    Ok(LorentzianFit {
        baseline: p[0],
        amplitude: p[1],
        fwhm: p[2].abs(),
        baseline_err: e[0],
        amplitude_err: e[1],
        fwhm_err: e[2],
        peak: p[0] + p[1],
        chi_squared: rep.chi_squared,
    })
}

/// One point of a fidelity-versus-splitting scan.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScanPoint {
    #[cfg_attr(feature = "serde", serde(rename = "fss_ueV"))]
    pub fss: f64,
    pub fidelity: f64,
    pub fidelity_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FssScan {
    pub points: Vec<ScanPoint>,
    pub fit: LorentzianFit,
}

/// Gate used by a scan: a width, or the full period when `None`.
pub fn scan_gate_width(cfg: &SimulationConfig, gate_width: Option<f64>) -> f64 {
    gate_width.unwrap_or_else(|| cfg.drive.period())
}

/// Seed of scan point `index`.
pub fn scan_point_seed(seed: u64, index: usize) -> u64 {
    rng::child_seed(seed, &format!("fss-scan/{index}"))
}

/// Simulate and analyze one splitting value.
pub fn scan_point(
    cfg: &SimulationConfig,
    fss: f64,
    n_pulses: u64,
    seed: u64,
    gate_width: Option<f64>,
    shards: u32,
) -> Result<ScanPoint> {
    let mut c = *cfg;
    c.emitter.fss = fss;
    let settings = analysis_settings();
    let hists = cascade::simulate_with(&c, &settings, n_pulses, seed, shards)?;
    let report = gate_scan(&hists, &[scan_gate_width(&c, gate_width)])?;
    Ok(ScanPoint { fss, fidelity: report[0].fidelity.value, fidelity_err: report[0].fidelity.sigma })
}

/// Validate the grid of a splitting scan.
pub fn check_scan_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::input("FSS grid is empty"));
    }
    if grid.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::validation("FSS grid values must be finite and non-negative"));
    }
    let max = grid.iter().copied().fold(0.0, f64::max);
    if max < 8.0 {
        log::warn!("FSS grid only reaches {max} μeV; the Lorentzian baseline is poorly constrained below 8 μeV");
    }
    Ok(())
}

/// Fit the Lorentzian to finished scan points.
pub fn finish_scan(points: Vec<ScanPoint>) -> Result<FssScan> {
    let raw: Vec<[f64; 3]> = points.iter().map(|p| [p.fss, p.fidelity, p.fidelity_err]).collect();
    let fit = fit_lorentzian(&raw)?;
    Ok(FssScan { points, fit })
}

/// Fidelity versus splitting with a Lorentzian fit (sequential driver).
pub fn fidelity_vs_fss_scan(
    cfg: &SimulationConfig,
    grid: &[f64],
    n_pulses: u64,
    seed: u64,
    gate_width: Option<f64>,
) -> Result<FssScan> {
    check_scan_grid(grid)?;
    cfg.validate()?;
    let points = grid
        .iter()
        .enumerate()
        .map(|(i, &s)| scan_point(cfg, s, n_pulses, scan_point_seed(seed, i), gate_width, 1))
        .collect::<Result<Vec<_>>>()?;
    finish_scan(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{DetectorConfig, DriveConfig, EmitterConfig, HistogramSpec, HBAR_UEV_NS};
    use proptest::prelude::*;

    fn cfg(fss: f64) -> SimulationConfig {
        SimulationConfig {
            emitter: EmitterConfig { fss, pair_prob: 0.8, ..Default::default() },
            drive: DriveConfig { rep_rate_mhz: 80.0, pulse_width: 0.3 },
            detector: DetectorConfig::ideal(),
            histogram: HistogramSpec::default(),
        }
    }

    #[test]
    fn correlation_examples() {
        assert_eq!(degree_of_correlation(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(degree_of_correlation(3.7, 0.0).unwrap(), 1.0);
        assert!(degree_of_correlation(0.0, 0.0).is_err());
    }

    #[test]
    fn fidelity_examples() {
        let f = |a, b, c| fidelity_from_correlations(&CorrelationSet::exact(a, b, c).unwrap()).value;
        assert!((f(0.67, 0.63, -0.78) - 0.77).abs() <= 0.005);
        assert!((f(0.74, 0.74, -0.84) - 0.83).abs() <= 0.005);
        assert_eq!(f(0.0, 0.0, 0.0), 0.25);
    }

    #[test]
    fn bell_examples() {
        let b = bell_parameters(&CorrelationSet::exact(0.74, 0.74, -0.84).unwrap());
        assert!((b.s_rd - 2.09).abs() <= 0.005);
        assert!((b.s_rc - 2.23).abs() <= 0.005);
        assert!((b.s_dc - 2.23).abs() <= 0.005);
        let t = bell_parameters(&CorrelationSet::exact(1.0, 1.0, -1.0).unwrap());
        for s in [t.s_rd, t.s_rc, t.s_dc] {
            assert!((s - 2.0 * math::SQRT_2).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_correlation_set() {
        assert!(CorrelationSet::exact(1.2, 0.0, 0.0).is_err());
        assert!(CorrelationSet::new(0.1, 0.0, 0.0, -0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn g2_of_uncorrelated_pairs_is_inverse_pair_probability() {
        // uncorrelated pairs per pulse: zero peak ∝ p, side peaks ∝ p²
        let mut c = cfg(0.0);
        c.emitter.background_frac = 1.0;
        let h = cascade::simulate_with(&c, &[MeasurementSetting::new(Polarization::H, Polarization::H)], 200_000, 3, 1)
            .unwrap()
            .remove(0);
        let g = normalize_g2(&h, &GateWindow { width: h.period, center: Some(0.0) }).unwrap();
        assert!((g.value - 1.0 / c.emitter.pair_prob).abs() < 4.0 * g.sigma, "{g:?}");
        let mut doubled = h.clone();
        doubled.counts.iter_mut().for_each(|c| *c *= 2);
        let g2 = normalize_g2(&doubled, &GateWindow { width: h.period, center: Some(0.0) }).unwrap();
        assert!((g2.value - g.value).abs() < 1e-12);
    }

    #[test]
    fn ideal_cascade_correlations() {
        let mut c = cfg(0.0);
        c.emitter.tau_x = 0.3;
        c.emitter.tau_xx = 0.3;
        let h = cascade::simulate_with(&c, &analysis_settings(), 50_000, 5, 1).unwrap();
        let r = gate_scan(&h, &[c.drive.period()]).unwrap().remove(0);
        assert!(r.correlations.c_hv > 0.999);
        assert!(r.correlations.c_rl < -0.999);
        let hv = normalize_g2(&h[1], &GateWindow { width: 2.0, center: Some(r.center) }).unwrap();
        assert!(hv.value < 1e-3);
        assert!((r.kept_fraction - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gate_errors() {
        let c = cfg(0.0);
        let h = cascade::simulate_with(&c, &analysis_settings(), 2000, 5, 1).unwrap();
        assert!(gate_scan(&h, &[c.drive.period() + 1.0]).is_err());
        assert!(gate_scan(&h, &[1.0, 2.0]).is_err());
        assert!(gate_scan(&h[..5], &[1.0]).is_err());
        let empty = CoincidenceHistogram::empty(h[0].setting, &HistogramSpec::default(), h[0].period);
        assert!(normalize_g2(&empty, &GateWindow::new(1.0)).is_err());
    }

    #[test]
    fn kept_fraction_is_monotone_and_fidelity_flat_without_dephasing() {
        let mut c = cfg(0.0);
        c.detector = DetectorConfig::default();
        let h = cascade::simulate_with(&c, &analysis_settings(), 100_000, 8, 1).unwrap();
        let gates = [c.drive.period(), 4.0, 2.0, 1.0, 0.5, 0.2, 0.1];
        let r = gate_scan(&h, &gates).unwrap();
        for w in r.windows(2) {
            assert!(w[1].kept_fraction <= w[0].kept_fraction);
        }
        let f0 = r[0].fidelity;
        for rep in &r {
            let s = math::sqrt(rep.fidelity.sigma * rep.fidelity.sigma + f0.sigma * f0.sigma);
            assert!((rep.fidelity.value - f0.value).abs() < 5.0 * s.max(1e-3), "{rep:?}");
        }
    }

    #[test]
    fn centering_tracks_peak() {
        let mut c = cfg(0.0);
        c.emitter.tau_x = 0.1;
        c.emitter.tau_xx = 0.1;
        let h = cascade::simulate_with(&c, &analysis_settings(), 20_000, 2, 1).unwrap();
        let center = zero_delay_center(&h).unwrap();
        assert!(center > 0.0 && center < 0.2, "{center}");
    }

    #[test]
    fn lorentzian_recovers_closed_form() {
        let pts: Vec<[f64; 3]> = (0..11)
            .map(|i| {
                let s = i as f64;
                [s, cascade::analytic_fidelity(s, 1.0, 0.0), 0.01]
            })
            .collect();
        let fit = fit_lorentzian(&pts).unwrap();
        assert!((fit.fwhm - 2.0 * HBAR_UEV_NS).abs() < 1e-6, "{fit:?}");
        assert!((fit.peak - 1.0).abs() < 1e-9);
        assert!((fit.baseline - 0.5).abs() < 1e-9);
    }

    #[test]
    fn lorentzian_rejects_short_curves() {
        match fit_lorentzian(&[[0.0, 1.0, 0.1]]) {
            Err(Error::CurveFit { curve, cause }) => {
                assert_eq!(curve.len(), 1);
                assert!(matches!(*cause, Error::Input(_)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn small_scan_matches_oracle() {
        let c = cfg(0.0);
        let grid = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0];
        let scan = fidelity_vs_fss_scan(&c, &grid, 40_000, 17, None).unwrap();
        for p in &scan.points {
            let expect = cascade::analytic_fidelity(p.fss, 1.0, 0.0);
            assert!((p.fidelity - expect).abs() < 0.03, "{p:?} vs {expect}");
        }
        assert!((scan.fit.fwhm - 2.0 * HBAR_UEV_NS).abs() < 0.3, "{:?}", scan.fit);
    }

    #[test]
    fn separable_source_is_classical() {
        let mut c = cfg(0.0);
        c.emitter.background_frac = 1.0;
        let h = cascade::simulate_with(&c, &analysis_settings(), 60_000, 21, 1).unwrap();
        let r = gate_scan(&h, &[c.drive.period()]).unwrap().remove(0);
        for (v, s) in [
            (r.correlations.c_hv, r.correlations.sigma_hv),
            (r.correlations.c_da, r.correlations.sigma_da),
            (r.correlations.c_rl, r.correlations.sigma_rl),
        ] {
            assert!(v.abs() < 5.0 * s, "{v} ± {s}");
        }
        assert!(r.fidelity.value <= 0.5 + 5.0 * r.fidelity.sigma);
        let b = r.bell;
        assert!(b.s_rd.abs() <= 2.0 + 5.0 * b.sigma_rd);
        assert!(b.s_rc.abs() <= 2.0 + 5.0 * b.sigma_rc);
        assert!(b.s_dc.abs() <= 2.0 + 5.0 * b.sigma_dc);
    }

    #[test]
    fn basis_sums_are_conserved() {
        let mut c = cfg(1.0);
        c.detector = DetectorConfig::default();
        let h = cascade::simulate_with(&c, &analysis_settings(), 100_000, 33, 1).unwrap();
        let center = zero_delay_center(&h).unwrap();
        let sums: Vec<f64> = BASIS_PAIRS
            .iter()
            .map(|(co, cr)| {
                gated_zero_peak(find(&h, *co).unwrap(), 4.0, center).unwrap()
                    + gated_zero_peak(find(&h, *cr).unwrap(), 4.0, center).unwrap()
            })
            .collect();
        for i in 0..3 {
            for j in i + 1..3 {
                assert!((sums[i] - sums[j]).abs() < 5.0 * (sums[i] + sums[j]).sqrt());
            }
        }
    }

    #[test]
    fn gate_window_validation() {
        assert!(GateWindow::new(0.0).validate(5.0).is_err());
        assert!(GateWindow::new(5.5).validate(5.0).is_err());
        assert!(GateWindow::new(5.0).validate(5.0).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn correlation_is_antisymmetric(a in 0.0f64..10.0, b in 0.0f64..10.0) {
            prop_assume!(a + b > 1e-9);
            let c = degree_of_correlation(a, b).unwrap();
            prop_assert!((c + degree_of_correlation(b, a).unwrap()).abs() < 1e-12);
            prop_assert!(c.abs() <= 1.0);
        }

        #[test]
        fn symmetric_set_fidelity(c in -1.0f64..1.0) {
            let f = fidelity_from_correlations(&CorrelationSet::exact(c, c, -c).unwrap()).value;
            prop_assert!((f - (1.0 + 3.0 * c) / 4.0).abs() < 1e-12);
        }

        #[test]
        fn bell_identity(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
            let p = bell_parameters(&CorrelationSet::exact(a, b, c).unwrap());
            let r2 = math::SQRT_2;
            prop_assert!((p.s_rd - r2 * (a + b)).abs() < 1e-12);
            prop_assert!((p.s_rc - r2 * (a - c)).abs() < 1e-12);
            prop_assert!((p.s_dc - r2 * (b - c)).abs() < 1e-12);
        }

        #[test]
        fn kept_fraction_monotone_on_random_histograms(
            counts in proptest::collection::vec(0u64..50, 400),
            w1 in 0.05f64..5.0, w2 in 0.05f64..5.0,
        ) {
            let period = 5.0;
            let spec = HistogramSpec { bin_width: 0.1, n_side_peaks: 3 };
            let n = spec.n_bins(period);
            let mut hs = Vec::new();
            for (k, s) in analysis_settings().iter().enumerate() {
                let c: Vec<u64> = (0..n).map(|i| counts[(i + 37 * k) % counts.len()] + 1).collect();
                hs.push(CoincidenceHistogram::new(*s, 0.1, -(n as f64) * 0.05, c, 1000, period).unwrap());
            }
            let (hi, lo) = if w1 >= w2 { (w1, w2) } else { (w2, w1) };
            let r = gate_scan(&hs, &[hi, lo]).unwrap();
            prop_assert!(r[1].kept_fraction <= r[0].kept_fraction + 1e-12);
        }
    }
}
