//! Fine-structure splitting and exciton polarization angle under
//! anisotropic stress.
//!
//! With b = βp + k and a = αp + 2δ the splitting is s = √(4b² + a²) and the
//! polarization axis of the high-energy exciton line is θ = ½·atan2(−2b, a),
//! measured from [110]. At p = 0 this reproduces (s₀, θ₀) exactly when
//! k = −s₀ sin(2θ₀)/2 and δ = s₀ cos(2θ₀)/2. Angles are axes, so they live
//! in [0°, 180°) and residuals are taken modulo 180°.
//!
//! Stress is measured in arbitrary units proportional to the actuator field;
//! only the product α·stress_per_field is identifiable.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::math;
use crate::optim::{levenberg_marquardt, LeastSquares, LmOptions};

/// Typical far-from-minimum slope |ds/dF_p|, μeV per kV·cm⁻¹.
pub const DEFAULT_ALPHA: f64 = 2.0;
/// Usable actuator field range, kV·cm⁻¹.
pub const DEVICE_FIELD_RANGE: (f64, f64) = (-6.7, 28.0);
/// Emission energy shift over the full device range, meV.
pub const FULL_RANGE_ENERGY_SHIFT: f64 = 2.5;

const CONSISTENCY_TOL: f64 = 0.15;

/// Per-dot strain-tuning constants; all energies in μeV, angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TuningParams {
    #[cfg_attr(feature = "serde", serde(rename = "s0_ueV"))]
    pub s0: f64,
    #[cfg_attr(feature = "serde", serde(rename = "theta0_deg"))]
    pub theta0: f64,
    #[cfg_attr(feature = "serde", serde(rename = "k_ueV"))]
    pub k: f64,
    #[cfg_attr(feature = "serde", serde(rename = "delta_ueV"))]
    pub delta: f64,
    /// μeV per stress-unit.
    #[cfg_attr(feature = "serde", serde(rename = "alpha_ueV"))]
    pub alpha: f64,
    /// μeV per stress-unit; zero for stress along [110]/[1-10].
    #[cfg_attr(feature = "serde", serde(rename = "beta_ueV", default))]
    pub beta: f64,
}

/// k = −s₀ sin(2θ₀)/2, δ = s₀ cos(2θ₀)/2.
pub fn derive_k_delta(s0: f64, theta0_deg: f64) -> (f64, f64) {
    let t = 2.0 * math::to_radians(theta0_deg);
    (-0.5 * s0 * math::sin(t), 0.5 * s0 * math::cos(t))
}

/// Inverse of [`derive_k_delta`]: (s₀, θ₀) with θ₀ ∈ [0°, 180°).
pub fn s0_theta0_from_k_delta(k: f64, delta: f64) -> (f64, f64) {
    let s0 = 2.0 * math::sqrt(k * k + delta * delta);
    let theta = 0.5 * math::to_degrees(math::atan2(-2.0 * k, 2.0 * delta));
    (s0, math::wrap_positive(theta, 180.0))
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(format!("{name} must be finite")))
    }
}

impl TuningParams {
    /// Full constructor; (k, δ) must agree with (s₀, θ₀) within 0.15 μeV.
    pub fn new(s0: f64, theta0: f64, k: f64, delta: f64, alpha: f64, beta: f64) -> Result<Self> {
        for (n, v) in [("s0", s0), ("theta0", theta0), ("k", k), ("delta", delta), ("alpha", alpha), ("beta", beta)] {
            check_finite(n, v)?;
        }
        if s0 < 0.0 {
            return Err(Error::validation(format!("s0 = {s0} must be non-negative")));
        }
        if !(0.0..180.0).contains(&theta0) {
            return Err(Error::validation(format!("theta0 = {theta0}° must lie in [0, 180)")));
        }
        let (kd, dd) = derive_k_delta(s0, theta0);
        let mismatch = math::sqrt((kd - k) * (kd - k) + (dd - delta) * (dd - delta));
        if mismatch > CONSISTENCY_TOL {
            return Err(Error::validation(format!(
                "k = {k}, delta = {delta} disagree with s0 = {s0}, theta0 = {theta0} (expected {kd:.3}, {dd:.3})"
            )));
        }
        Ok(Self { s0, theta0, k, delta, alpha, beta })
    }

    pub fn from_s0_theta0(s0: f64, theta0: f64, alpha: f64, beta: f64) -> Result<Self> {
        check_finite("theta0", theta0)?;
        let theta0 = math::wrap_positive(theta0, 180.0);
        let (k, delta) = derive_k_delta(s0, theta0);
        Self::new(s0, theta0, k, delta, alpha, beta)
    }

    pub fn from_k_delta(k: f64, delta: f64, alpha: f64, beta: f64) -> Result<Self> {
        check_finite("k", k)?;
        check_finite("delta", delta)?;
        let (s0, theta0) = s0_theta0_from_k_delta(k, delta);
        Self::new(s0, theta0, k, delta, alpha, beta)
    }
}

/// Splitting (μeV) and high-energy polarization axis (degrees, [0, 180)) at stress `p`.
pub fn fss_and_angle(params: &TuningParams, p: f64) -> (f64, f64) {
    let b = params.beta * p + params.k;
    let a = params.alpha * p + 2.0 * params.delta;
    let s = math::sqrt(4.0 * b * b + a * a);
    let theta = 0.5 * math::to_degrees(math::atan2(-2.0 * b, a));
    (s, math::wrap_positive(theta, 180.0))
}

/// Evaluate a tuning curve with θ unwrapped so it is continuous along `ps`
/// (the first point is reported in [0, 180)).
pub fn tuning_curve(params: &TuningParams, ps: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(ps.len());
    let mut prev: Option<f64> = None;
    for &p in ps {
        let (s, mut theta) = fss_and_angle(params, p);
        if let Some(last) = prev {
            theta = last + math::wrap_centered(theta - last, 180.0);
        }
        prev = Some(theta);
        out.push((s, theta));
    }
    out
}

/// s_min = 2|k|, reached at p* = −2δ/α. Only defined for aligned stress.
pub fn min_fss(params: &TuningParams) -> Result<f64> {
    if params.beta != 0.0 {
        return Err(Error::Unsupported("closed-form minimum splitting requires beta = 0"));
    }
    Ok(2.0 * params.k.abs())
}

/// Stress p* = −2δ/α at which the splitting is minimal (β = 0, α ≠ 0).
pub fn stress_at_min(params: &TuningParams) -> Result<f64> {
    if params.beta != 0.0 {
        return Err(Error::Unsupported("closed-form minimum position requires beta = 0"));
    }
    if params.alpha == 0.0 {
        return Err(Error::Unsupported("splitting does not depend on stress when alpha = 0"));
    }
    Ok(-2.0 * params.delta / params.alpha)
}

/// Linear actuator-field calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StressMap {
    /// Stress-units per kV·cm⁻¹.
    #[cfg_attr(feature = "serde", serde(rename = "stress_per_kv_cm"))]
    pub stress_per_field: f64,
    /// meV per kV·cm⁻¹; positive field gives a blue shift.
    #[cfg_attr(feature = "serde", serde(rename = "energy_shift_mev_per_kv_cm"))]
    pub energy_shift_per_field: f64,
}

impl Default for StressMap {
    fn default() -> Self {
        Self {
            stress_per_field: 1.0,
            energy_shift_per_field: FULL_RANGE_ENERGY_SHIFT / (DEVICE_FIELD_RANGE.1 - DEVICE_FIELD_RANGE.0),
        }
    }
}

impl StressMap {
    pub fn new(stress_per_field: f64, energy_shift_per_field: f64) -> Result<Self> {
        check_finite("stress_per_field", stress_per_field)?;
        check_finite("energy_shift_per_field", energy_shift_per_field)?;
        if stress_per_field == 0.0 {
            return Err(Error::validation("stress_per_field must be non-zero"));
        }
        if energy_shift_per_field < 0.0 {
            return Err(Error::validation("energy_shift_per_field must be non-negative (positive field blue-shifts)"));
        }
        Ok(Self { stress_per_field, energy_shift_per_field })
    }

    fn warn_range(fp: f64) {
        if fp < DEVICE_FIELD_RANGE.0 || fp > DEVICE_FIELD_RANGE.1 {
            log::warn!(
                "field {fp} kV/cm is outside the device range [{}, {}]",
                DEVICE_FIELD_RANGE.0,
                DEVICE_FIELD_RANGE.1
            );
        }
    }

    pub fn field_to_stress(&self, fp: f64) -> f64 {
        Self::warn_range(fp);
        self.stress_per_field * fp
    }

    /// Emission energy shift in meV.
    pub fn energy_shift(&self, fp: f64) -> f64 {
        Self::warn_range(fp);
        self.energy_shift_per_field * fp
    }
}

/// One point of a measured tuning curve.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TuningSample {
    #[cfg_attr(feature = "serde", serde(rename = "fp_kv_cm"))]
    pub fp: f64,
    #[cfg_attr(feature = "serde", serde(rename = "s_ueV"))]
    pub s: f64,
    #[cfg_attr(feature = "serde", serde(rename = "s_err"))]
    pub s_err: f64,
    #[cfg_attr(feature = "serde", serde(rename = "theta_deg"))]
    pub theta: f64,
    #[cfg_attr(feature = "serde", serde(rename = "theta_err"))]
    pub theta_err: f64,
}

impl TuningSample {
    pub fn validate(&self) -> Result<()> {
        for (n, v) in [("fp", self.fp), ("s", self.s), ("s_err", self.s_err), ("theta", self.theta), ("theta_err", self.theta_err)] {
            check_finite(n, v)?;
        }
        if self.s < 0.0 {
            return Err(Error::input(format!("negative splitting {} at fp = {}", self.s, self.fp)));
        }
        if self.s_err <= 0.0 || self.theta_err <= 0.0 {
            return Err(Error::input(format!("uncertainties must be positive at fp = {}", self.fp)));
        }
        Ok(())
    }
}

/// Noisy samples of a tuning curve at the given fields.
pub fn synthesize_curve<R: Rng + ?Sized>(
    params: &TuningParams,
    map: &StressMap,
    fields: &[f64],
    s_noise: f64,
    theta_noise: f64,
    rng: &mut R,
) -> Result<Vec<TuningSample>> {
    if !(s_noise > 0.0 && theta_noise > 0.0) {
        return Err(Error::validation("noise levels must be positive (they become the sample uncertainties)"));
    }
    let ns = Normal::new(0.0, s_noise).map_err(|e| Error::validation(format!("{e}")))?;
    let nt = Normal::new(0.0, theta_noise).map_err(|e| Error::validation(format!("{e}")))?;
    let ps: Vec<f64> = fields.iter().map(|&f| map.field_to_stress(f)).collect();
    let curve = tuning_curve(params, &ps);
    Ok(fields
        .iter()
        .zip(curve)
        .map(|(&fp, (s, theta))| TuningSample {
            fp,
            s: (s + ns.sample(rng)).abs(),
            s_err: s_noise,
            theta: math::wrap_positive(theta + nt.sample(rng), 180.0),
            theta_err: theta_noise,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    /// Fit β as a free parameter instead of fixing it to zero.
    pub fit_beta: bool,
    pub lm: LmOptions,
}

/// Fitted tuning parameters with 1σ uncertainties.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TuningFit {
    pub params: TuningParams,
    #[cfg_attr(feature = "serde", serde(rename = "k_err_ueV"))]
    pub k_err: f64,
    #[cfg_attr(feature = "serde", serde(rename = "delta_err_ueV"))]
    pub delta_err: f64,
    #[cfg_attr(feature = "serde", serde(rename = "alpha_err_ueV"))]
    pub alpha_err: f64,
    #[cfg_attr(feature = "serde", serde(rename = "beta_err_ueV"))]
    pub beta_err: Option<f64>,
    #[cfg_attr(feature = "serde", serde(rename = "s0_err_ueV"))]
    pub s0_err: f64,
    #[cfg_attr(feature = "serde", serde(rename = "theta0_err_deg"))]
    pub theta0_err: f64,
    /// 2|k| (β fixed) or the numerical minimum over the sampled range (β free).
    #[cfg_attr(feature = "serde", serde(rename = "s_min_ueV"))]
    pub s_min: f64,
    #[cfg_attr(feature = "serde", serde(rename = "s_min_err_ueV"))]
    pub s_min_err: f64,
    pub chi_squared: f64,
    pub residual_norm: f64,
    pub dof: usize,
    pub iterations: usize,
}

struct TuningProblem<'a> {
    samples: &'a [TuningSample],
    stress: Vec<f64>,
    fit_beta: bool,
}

impl TuningProblem<'_> {
    fn params(&self, v: &[f64]) -> TuningParams {
        // s0/theta0 are not used by fss_and_angle
        TuningParams {
            s0: 0.0,
            theta0: 0.0,
            k: v[0],
            delta: v[1],
            alpha: v[2],
            beta: if self.fit_beta { v[3] } else { 0.0 },
        }
    }
}

impl LeastSquares for TuningProblem<'_> {
    fn n_params(&self) -> usize {
        if self.fit_beta {
            4
        } else {
            3
        }
    }

    fn n_residuals(&self) -> usize {
        2 * self.samples.len()
    }

    fn residuals(&self, v: &[f64], out: &mut [f64]) {
        let tp = self.params(v);
        for (i, (smp, &p)) in self.samples.iter().zip(&self.stress).enumerate() {
            let (s, theta) = fss_and_angle(&tp, p);
            out[2 * i] = (s - smp.s) / smp.s_err;
            out[2 * i + 1] = math::wrap_centered(theta - smp.theta, 180.0) / smp.theta_err;
        }
    }

    fn jacobian(&self, v: &[f64], out: &mut [f64]) {
        let tp = self.params(v);
        let n = self.n_params();
        let deg = 180.0 / math::PI;
        for (i, (smp, &p)) in self.samples.iter().zip(&self.stress).enumerate() {
            let b = tp.beta * p + tp.k;
            let a = tp.alpha * p + 2.0 * tp.delta;
            let s = math::sqrt(4.0 * b * b + a * a).max(1e-12);
            let s2 = s * s;
            let ds = [4.0 * b / s, 2.0 * a / s, a * p / s, 4.0 * b * p / s];
            let dt = [-a / s2, 2.0 * b / s2, b * p / s2, -a * p / s2];
            for j in 0..n {
                out[(2 * i) * n + j] = ds[j] / smp.s_err;
                out[(2 * i + 1) * n + j] = deg * dt[j] / smp.theta_err;
            }
        }
    }
}

/// Weighted least-squares fit of (k, δ, α[, β]) jointly to s(F_p) and θ(F_p).
pub fn fit_tuning_params(samples: &[TuningSample], map: &StressMap, opts: &FitOptions) -> Result<TuningFit> {
    if samples.len() < 3 {
        return Err(Error::input(format!("tuning fit needs at least 3 samples, got {}", samples.len())));
    }
    for s in samples {
        s.validate()?;
    }
    let stress: Vec<f64> = samples.iter().map(|s| map.field_to_stress(s.fp)).collect();
    let problem = TuningProblem { samples, stress: stress.clone(), fit_beta: opts.fit_beta };

    // start: (k, δ) from the sample nearest zero field, |α| from the steeper end slope
    let nearest = samples
        .iter()
        .min_by(|a, b| a.fp.abs().total_cmp(&b.fp.abs()))
        .expect("at least three samples");
    let (k0, d0) = derive_k_delta(nearest.s, math::wrap_positive(nearest.theta, 180.0));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&i, &j| stress[i].total_cmp(&stress[j]));
    let slope = |i: usize, j: usize| {
        let dp = stress[j] - stress[i];
        if dp.abs() < 1e-12 {
            0.0
        } else {
            ((samples[j].s - samples[i].s) / dp).abs()
        }
    };
    let m = order.len();
    let alpha_mag = slope(order[0], order[1]).max(slope(order[m - 2], order[m - 1])).max(1e-3);

    let mut best: Option<(crate::optim::LmReport, f64)> = None;
    let mut last_err = None;
    for sign in [1.0, -1.0] {
        let mut p0 = vec![k0, d0, sign * alpha_mag];
        if opts.fit_beta {
            p0.push(0.0);
        }
        match levenberg_marquardt(&problem, &p0, &opts.lm) {
            Ok(rep) => {
                let c = rep.chi_squared;
                if best.as_ref().map_or(true, |(_, bc)| c < *bc) {
                    best = Some((rep, c));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some((rep, chi2)) = best else {
        return Err(last_err.expect("both starts failed"));
    };

    let v = &rep.params;
    let errs = rep.std_errors();
    let beta = if opts.fit_beta { v[3] } else { 0.0 };
    let (s0, theta0) = s0_theta0_from_k_delta(v[0], v[1]);
    let params = TuningParams::new(s0, theta0, v[0], v[1], v[2], beta)?;

    // propagate (k, δ) covariance to s₀ and θ₀
    let n = problem.n_params();
    let cov = |i: usize, j: usize| rep.covariance.get(i * n + j).copied().unwrap_or(f64::NAN);
    let (k, d) = (v[0], v[1]);
    let r2 = (k * k + d * d).max(1e-300);
    let gs = [2.0 * k / math::sqrt(r2), 2.0 * d / math::sqrt(r2)];
    let gt = [-d / r2 * math::to_degrees(1.0), k / r2 * math::to_degrees(1.0)];
    let quad = |g: [f64; 2]| {
        math::sqrt((g[0] * g[0] * cov(0, 0) + 2.0 * g[0] * g[1] * cov(0, 1) + g[1] * g[1] * cov(1, 1)).max(0.0))
    };
    let (s_min, s_min_err) = if opts.fit_beta {
        let lo = stress[order[0]];
        let hi = stress[order[m - 1]];
        let s_lo = (0..=2000)
            .map(|i| fss_and_angle(&params, lo + (hi - lo) * i as f64 / 2000.0).0)
            .fold(f64::INFINITY, f64::min);
        (s_lo, 2.0 * errs[0])
    } else {
        (2.0 * k.abs(), 2.0 * errs[0])
    };
    let dof = problem.n_residuals().saturating_sub(n);
    Ok(TuningFit {
        params,
        k_err: errs[0],
        delta_err: errs[1],
        alpha_err: errs[2],
        beta_err: opts.fit_beta.then(|| errs[3]),
        s0_err: quad(gs),
        theta0_err: quad(gt),
        s_min,
        s_min_err,
        chi_squared: chi2,
        residual_norm: math::sqrt(chi2),
        dof,
        iterations: rep.iterations,
    })
}
