//! Monte Carlo of the biexciton–exciton cascade under pulsed drive.
//!
//! Each measurement setting is an independent acquisition of `n_pulses`
//! excitation pulses. Per pulse:
//!
//! * with probability `pair_prob` a cascade pair is emitted: the XX photon
//!   after t_exc + Exp(τ_XX), the X photon a further Δt ~ Exp(τ_X) later;
//!   its polarization state is |HH⟩ + e^{i(φ₀ + sΔt/ħ)}|VV⟩, or with
//!   probability `background_frac` an uncorrelated product of random
//!   polarizations;
//! * with probability `reexcite_prob` one extra XX and one extra X photon
//!   are emitted at independent uniform times within the period, with random
//!   polarizations;
//! * every photon passes its analyzer according to the Born rule, is
//!   detected with the detector efficiency and time-stamped with Gaussian
//!   jitter.
//!
//! All XX–X detection pairs within ±(n_side + ½) periods are histogrammed
//! (multi-start, multi-stop). Pairs outside the window are dropped.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::error::{Error, Result};
use crate::math;
use crate::quantum::{MeasurementSetting, PolarizationKet};
use crate::rng::{self, StreamRng};

/// Reduced Planck constant in μeV·ns.
pub const HBAR_UEV_NS: f64 = 0.6582119569;

pub fn hbar() -> f64 {
    HBAR_UEV_NS
}

/// FWHM-to-σ factor of a Gaussian, 2√(2 ln 2).
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;
/// Combined two-detector timing response (FWHM), ns.
pub const SYSTEM_RESPONSE_FWHM_NS: f64 = 0.4;

/// Quantum-dot emission model. Energies in μeV, times in ns.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EmitterConfig {
    #[cfg_attr(feature = "serde", serde(rename = "fss_ueV"))]
    pub fss: f64,
    #[cfg_attr(feature = "serde", serde(rename = "tau_xx_ns"))]
    pub tau_xx: f64,
    #[cfg_attr(feature = "serde", serde(rename = "tau_x_ns"))]
    pub tau_x: f64,
    pub pair_prob: f64,
    pub background_frac: f64,
    pub reexcite_prob: f64,
    #[cfg_attr(feature = "serde", serde(rename = "psi_phase0_rad"))]
    pub psi_phase0: f64,
    /// Std. dev. of a random rotation of the X photon's linear polarization
    /// axis, radians. Lowers C_HV and C_DA but leaves C_RL unchanged. Zero
    /// disables it.
    #[cfg_attr(feature = "serde", serde(rename = "x_axis_wobble_rad"))]
    pub x_axis_wobble: f64,
}

impl Default for EmitterConfig {
    fn default() -> Self {
        Self {
            fss: 0.0,
            tau_xx: 0.5,
            tau_x: 1.0,
            pair_prob: 0.5,
            background_frac: 0.0,
            reexcite_prob: 0.0,
            psi_phase0: 0.0,
            x_axis_wobble: 0.0,
        }
    }
}

fn probability(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::validation(format!("{name} = {v} must lie in [0, 1]")))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(format!("{name} = {v} must be positive and finite")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(format!("{name} = {v} must be non-negative and finite")))
    }
}

impl EmitterConfig {
    pub fn validate(&self) -> Result<()> {
        non_negative("fss_ueV", self.fss)?;
        positive("tau_xx_ns", self.tau_xx)?;
        positive("tau_x_ns", self.tau_x)?;
        probability("pair_prob", self.pair_prob)?;
        probability("background_frac", self.background_frac)?;
        probability("reexcite_prob", self.reexcite_prob)?;
        if !self.psi_phase0.is_finite() {
            return Err(Error::validation("psi_phase0_rad must be finite"));
        }
        non_negative("x_axis_wobble_rad", self.x_axis_wobble)
    }
}

/// Electrical pulse train.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DriveConfig {
    pub rep_rate_mhz: f64,
    #[cfg_attr(feature = "serde", serde(rename = "pulse_width_ns"))]
    pub pulse_width: f64,
}

impl DriveConfig {
    /// 185.2 MHz, 5.4 ns between pulses.
    pub const MHZ_185: DriveConfig = DriveConfig { rep_rate_mhz: 185.2, pulse_width: 0.3 };
    /// 400 MHz, 2.5 ns between pulses.
    pub const MHZ_400: DriveConfig = DriveConfig { rep_rate_mhz: 400.0, pulse_width: 0.3 };

    pub fn period(&self) -> f64 {
        1000.0 / self.rep_rate_mhz
    }

    pub fn validate(&self) -> Result<()> {
        positive("rep_rate_mhz", self.rep_rate_mhz)?;
        non_negative("pulse_width_ns", self.pulse_width)?;
        if self.period() <= self.pulse_width {
            return Err(Error::validation(format!(
                "repetition period {:.3} ns must exceed the pulse width {} ns",
                self.period(),
                self.pulse_width
            )));
        }
        Ok(())
    }
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self::MHZ_185
    }
}

/// Per-detector timing and efficiency.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DetectorConfig {
    /// Gaussian σ of each detector, ns.
    #[cfg_attr(feature = "serde", serde(rename = "jitter_sigma_ns"))]
    pub jitter_sigma: f64,
    pub efficiency: f64,
}

impl DetectorConfig {
    /// Per-detector σ such that the two-detector response has the given FWHM.
    pub fn from_system_fwhm(fwhm_ns: f64, efficiency: f64) -> Self {
        Self { jitter_sigma: fwhm_ns / (FWHM_PER_SIGMA * math::SQRT_2), efficiency }
    }

    pub fn ideal() -> Self {
        Self { jitter_sigma: 0.0, efficiency: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        non_negative("jitter_sigma_ns", self.jitter_sigma)?;
        probability("efficiency", self.efficiency)
    }
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self::from_system_fwhm(SYSTEM_RESPONSE_FWHM_NS, 1.0)
    }
}

/// Delay-histogram binning.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct HistogramSpec {
    #[cfg_attr(feature = "serde", serde(rename = "bin_width_ns"))]
    pub bin_width: f64,
    /// Side peaks kept on each side of zero delay.
    pub n_side_peaks: u32,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self { bin_width: 0.05, n_side_peaks: 3 }
    }
}

impl HistogramSpec {
    pub fn validate(&self) -> Result<()> {
        positive("bin_width_ns", self.bin_width)?;
        if self.n_side_peaks < 2 {
            return Err(Error::validation("n_side_peaks must be at least 2 for side-peak normalization"));
        }
        Ok(())
    }

    /// Half-width of the delay window, (n_side + ½)·period.
    pub fn half_window(&self, period: f64) -> f64 {
        (self.n_side_peaks as f64 + 0.5) * period
    }

    /// Odd bin count whose central bin is centered on zero delay.
    pub fn n_bins(&self, period: f64) -> usize {
        let half = math::ceil(self.half_window(period) / self.bin_width - 0.5) as usize;
        2 * half + 1
    }
}

/// XX–X coincidences versus delay τ = t_X − t_XX for one setting.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoincidenceHistogram {
    pub setting: MeasurementSetting,
    #[cfg_attr(feature = "serde", serde(rename = "bin_width_ns"))]
    pub bin_width: f64,
    /// Left edge of bin 0, ns.
    #[cfg_attr(feature = "serde", serde(rename = "origin_ns"))]
    pub origin: f64,
    pub counts: Vec<u64>,
    pub n_pulses: u64,
    /// Excitation period; positions of the side peaks.
    #[cfg_attr(feature = "serde", serde(rename = "period_ns"))]
    pub period: f64,
}

impl CoincidenceHistogram {
    pub fn new(
        setting: MeasurementSetting,
        bin_width: f64,
        origin: f64,
        counts: Vec<u64>,
        n_pulses: u64,
        period: f64,
    ) -> Result<Self> {
        let h = Self { setting, bin_width, origin, counts, n_pulses, period };
        h.validate()?;
        Ok(h)
    }

    pub fn empty(setting: MeasurementSetting, spec: &HistogramSpec, period: f64) -> Self {
        let n = spec.n_bins(period);
        Self { setting, bin_width: spec.bin_width, origin: -(n as f64) * spec.bin_width / 2.0, counts: vec![0; n], n_pulses: 0, period }
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.is_empty() {
            return Err(Error::validation("histogram has no bins"));
        }
        positive("bin_width_ns", self.bin_width)?;
        positive("period_ns", self.period)?;
        if !self.origin.is_finite() {
            return Err(Error::validation("histogram origin must be finite"));
        }
        // each pulse yields at most 2 XX and 2 X detections, and each may pair
        // with partners from every pulse the window spans; n_pulses = 0 marks
        // an unknown pulse count
        let pulses_spanned = math::ceil(self.span() / self.period) as u64 + 1;
        let bound = 4u64.saturating_mul(pulses_spanned).saturating_mul(self.n_pulses);
        if self.n_pulses > 0 && self.total() > bound {
            return Err(Error::validation(format!(
                "histogram {} holds {} counts, more than possible for {} pulses",
                self.setting,
                self.total(),
                self.n_pulses
            )));
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        self.counts.len() as f64 * self.bin_width
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.origin + (i as f64 + 0.5) * self.bin_width
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts in [lo, hi), splitting edge bins by overlap fraction.
    pub fn integrate(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let first = math::floor((lo - self.origin) / self.bin_width).max(0.0) as usize;
        let mut acc = 0.0;
        for i in first..self.counts.len() {
            let b_lo = self.origin + i as f64 * self.bin_width;
            let b_hi = b_lo + self.bin_width;
            if b_lo >= hi {
                break;
            }
            let overlap = (hi.min(b_hi) - lo.max(b_lo)).max(0.0);
            acc += self.counts[i] as f64 * overlap / self.bin_width;
        }
        acc
    }

    /// Whether [lo, hi) lies inside the histogram range.
    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        lo >= self.origin - 1e-9 && hi <= self.origin + self.span() + 1e-9
    }

    pub fn same_binning(&self, other: &Self) -> bool {
        self.counts.len() == other.counts.len()
            && (self.bin_width - other.bin_width).abs() < 1e-12
            && (self.origin - other.origin).abs() < 1e-9
            && (self.period - other.period).abs() < 1e-9
    }

    /// Add another acquisition of the same setting.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.setting != other.setting || !self.same_binning(other) {
            return Err(Error::input(format!("cannot merge histograms of {} and {}", self.setting, other.setting)));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.n_pulses += other.n_pulses;
        Ok(())
    }
}

/// Everything that defines an acquisition apart from the setting and seed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SimulationConfig {
    pub emitter: EmitterConfig,
    pub drive: DriveConfig,
    pub detector: DetectorConfig,
    pub histogram: HistogramSpec,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.emitter.validate()?;
        self.drive.validate()?;
        self.detector.validate()?;
        self.histogram.validate()
    }
}

/// A detection: pulse index and time offset from that pulse's trigger.
#[derive(Debug, Clone, Copy)]
struct Click {
    pulse: u64,
    offset: f64,
}

struct Samplers {
    exp_xx: Exp<f64>,
    exp_x: Exp<f64>,
    jitter: Option<Normal<f64>>,
    wobble: Option<Normal<f64>>,
}

impl Samplers {
    fn new(cfg: &SimulationConfig) -> Result<Self> {
        let e = &cfg.emitter;
        let err = |m: rand_distr::ExpError| Error::validation(format!("{m}"));
        Ok(Self {
            exp_xx: Exp::new(1.0 / e.tau_xx).map_err(err)?,
            exp_x: Exp::new(1.0 / e.tau_x).map_err(err)?,
            jitter: (cfg.detector.jitter_sigma > 0.0)
                .then(|| Normal::new(0.0, cfg.detector.jitter_sigma).expect("validated sigma")),
            wobble: (e.x_axis_wobble > 0.0).then(|| Normal::new(0.0, e.x_axis_wobble).expect("validated sigma")),
        })
    }
}

/// Born-rule probabilities of (XX passes, X passes) for the state
/// (|HH⟩ + e^{iφ}|VV⟩)/√2 and analyzer kets `a` (XX) and `b` (X).
fn bell_pass_probabilities(phase: f64, a: &PolarizationKet, b: &PolarizationKet) -> [f64; 4] {
    let e = Complex64::new(math::cos(phase), math::sin(phase));
    let amp = |u: &PolarizationKet, v: &PolarizationKet| {
        ((u.amp_h.conj() * v.amp_h.conj() + e * u.amp_v.conj() * v.amp_v.conj()) * math::FRAC_1_SQRT_2).norm_sqr()
    };
    let (a_perp, b_perp) = (a.orthogonal(), b.orthogonal());
    // order: (pass, pass), (pass, block), (block, pass), (block, block)
    [amp(a, b), amp(a, &b_perp), amp(&a_perp, b), amp(&a_perp, &b_perp)]
}

fn pick<R: Rng + ?Sized>(probs: &[f64; 4], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    3
}

/// Simulate pulses `[start, end)` of one setting's acquisition with the
/// given random stream. Coincidences across the range boundary are not
/// recorded, so shards are independent.
pub fn simulate_pulses(
    cfg: &SimulationConfig,
    setting: MeasurementSetting,
    start: u64,
    end: u64,
    rng: &mut StreamRng,
) -> Result<CoincidenceHistogram> {
    cfg.validate()?;
    let period = cfg.drive.period();
    let mut hist = CoincidenceHistogram::empty(setting, &cfg.histogram, period);
    hist.n_pulses = end.saturating_sub(start);
    let s = Samplers::new(cfg)?;
    let e = &cfg.emitter;
    let eta = cfg.detector.efficiency;
    let a = setting.xx.ket();
    let b = setting.x.ket();
    let omega = e.fss / HBAR_UEV_NS;

    let half = cfg.histogram.half_window(period);
    let max_tau = e.tau_xx.max(e.tau_x);
    let memory = (math::ceil(half / period) + 1.0 + math::ceil(10.0 * max_tau / period) + 1.0) as u64;
    let mut xx_clicks: Vec<Click> = Vec::new();
    let mut x_clicks: Vec<Click> = Vec::new();
    let inv_bw = 1.0 / hist.bin_width;
    let origin = hist.origin;
    let nbins = hist.counts.len();

    let jitter = |rng: &mut StreamRng| s.jitter.as_ref().map_or(0.0, |n| n.sample(rng));

    for pulse in start..end {
        let first_new_xx = xx_clicks.len();
        let first_new_x = x_clicks.len();

        if rng.random::<f64>() < e.pair_prob {
            let t_exc = e.pulse_width_offset(&cfg.drive, rng);
            let t_xx = t_exc + s.exp_xx.sample(rng);
            let dt = s.exp_x.sample(rng);
            let (xx_pass, x_pass) = if rng.random::<f64>() < e.background_frac {
                // |⟨k|u⟩|² is uniform on [0, 1] for a uniformly random |u⟩
                (rng.random::<f64>() < 0.5, rng.random::<f64>() < 0.5)
            } else {
                let b_eff = match &s.wobble {
                    Some(w) => b.rotate_linear(-w.sample(rng)),
                    None => b,
                };
                let probs = bell_pass_probabilities(e.psi_phase0 + omega * dt, &a, &b_eff);
                let k = pick(&probs, rng);
                (k < 2, k % 2 == 0)
            };
            if xx_pass && rng.random::<f64>() < eta {
                xx_clicks.push(Click { pulse, offset: t_xx + jitter(rng) });
            }
            if x_pass && rng.random::<f64>() < eta {
                x_clicks.push(Click { pulse, offset: t_xx + dt + jitter(rng) });
            }
        }

        if e.reexcite_prob > 0.0 && rng.random::<f64>() < e.reexcite_prob {
            let t_xx = rng.random::<f64>() * period + s.exp_xx.sample(rng);
            let t_x = rng.random::<f64>() * period + s.exp_x.sample(rng);
            if rng.random::<f64>() < 0.5 && rng.random::<f64>() < eta {
                xx_clicks.push(Click { pulse, offset: t_xx + jitter(rng) });
            }
            if rng.random::<f64>() < 0.5 && rng.random::<f64>() < eta {
                x_clicks.push(Click { pulse, offset: t_x + jitter(rng) });
            }
        }

        let mut record = |start_click: &Click, stop_click: &Click| {
            let tau = (stop_click.pulse as f64 - start_click.pulse as f64) * period + (stop_click.offset - start_click.offset);
            let idx = math::floor((tau - origin) * inv_bw);
            if idx >= 0.0 && (idx as usize) < nbins {
                hist.counts[idx as usize] += 1;
            }
        };
        // new starts against all stops (old and new), then old starts against new stops
        for xs in &xx_clicks[first_new_xx..] {
            for xc in &x_clicks {
                record(xs, xc);
            }
        }
        for xs in &xx_clicks[..first_new_xx] {
            for xc in &x_clicks[first_new_x..] {
                record(xs, xc);
            }
        }

        let horizon = pulse.saturating_sub(memory);
        if xx_clicks.first().is_some_and(|c| c.pulse < horizon) {
            xx_clicks.retain(|c| c.pulse >= horizon);
        }
        if x_clicks.first().is_some_and(|c| c.pulse < horizon) {
            x_clicks.retain(|c| c.pulse >= horizon);
        }
    }
    Ok(hist)
}

impl EmitterConfig {
    fn pulse_width_offset<R: Rng + ?Sized>(&self, drive: &DriveConfig, rng: &mut R) -> f64 {
        if drive.pulse_width > 0.0 {
            rng.random::<f64>() * drive.pulse_width
        } else {
            0.0
        }
    }
}

/// Stream label used for cascade simulations.
pub const STREAM_LABEL: &str = "cascade";

/// Pulse range of shard `shard` when `n_pulses` are split into `shards` parts.
pub fn shard_range(n_pulses: u64, shards: u32, shard: u32) -> (u64, u64) {
    let shards = shards.max(1) as u64;
    let shard = shard as u64;
    let base = n_pulses / shards;
    let extra = n_pulses % shards;
    let start = shard * base + shard.min(extra);
    let len = base + u64::from(shard < extra);
    (start, start + len)
}

/// RNG stream for (setting, shard).
pub fn shard_stream(seed: u64, setting: MeasurementSetting, shard: u32) -> StreamRng {
    rng::stream(seed, STREAM_LABEL, ((setting.code() as u64) << 32) | shard as u64)
}

/// One setting's acquisition split into `shards` independent pulse ranges.
pub fn simulate_setting(
    cfg: &SimulationConfig,
    setting: MeasurementSetting,
    n_pulses: u64,
    seed: u64,
    shards: u32,
) -> Result<CoincidenceHistogram> {
    let shards = shards.max(1);
    let mut total = CoincidenceHistogram::empty(setting, &cfg.histogram, cfg.drive.period());
    for shard in 0..shards {
        let (a, b) = shard_range(n_pulses, shards, shard);
        let h = simulate_pulses(cfg, setting, a, b, &mut shard_stream(seed, setting, shard))?;
        total.merge(&h)?;
    }
    Ok(total)
}

/// Simulate every setting as an independent acquisition of `n_pulses`.
pub fn simulate(
    emitter: &EmitterConfig,
    drive: &DriveConfig,
    detector: &DetectorConfig,
    settings: &[MeasurementSetting],
    n_pulses: u64,
    seed: u64,
) -> Result<Vec<CoincidenceHistogram>> {
    let cfg = SimulationConfig { emitter: *emitter, drive: *drive, detector: *detector, histogram: HistogramSpec::default() };
    simulate_with(&cfg, settings, n_pulses, seed, 1)
}

pub fn simulate_with(
    cfg: &SimulationConfig,
    settings: &[MeasurementSetting],
    n_pulses: u64,
    seed: u64,
    shards: u32,
) -> Result<Vec<CoincidenceHistogram>> {
    check_request(cfg, settings, n_pulses)?;
    settings.iter().map(|&s| simulate_setting(cfg, s, n_pulses, seed, shards)).collect()
}

/// Preconditions shared by sequential and parallel drivers.
pub fn check_request(cfg: &SimulationConfig, settings: &[MeasurementSetting], n_pulses: u64) -> Result<()> {
    cfg.validate()?;
    if n_pulses == 0 {
        return Err(Error::validation("n_pulses must be at least 1"));
    }
    if settings.is_empty() {
        return Err(Error::validation("at least one measurement setting is required"));
    }
    Ok(())
}

/// Fidelity to |Ψ+⟩ averaged over the exponential exciton delay:
/// (1−b)·½(1 + 1/(1 + (sτ/ħ)²)) + b/4.
pub fn analytic_fidelity(fss: f64, tau_x: f64, background_frac: f64) -> f64 {
    let x = fss * tau_x / HBAR_UEV_NS;
    (1.0 - background_frac) * 0.5 * (1.0 + 1.0 / (1.0 + x * x)) + 0.25 * background_frac
}
