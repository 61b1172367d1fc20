//! Sixteen-setting two-qubit state tomography.
//!
//! Settings follow the standard table ordering (HH, HV, VV, VH, RH, ...).
//! Linear inversion solves the 16×16 real design system directly; maximum
//! likelihood parameterizes ρ = T†T / Tr(T†T) with lower-triangular T and
//! minimizes the Poisson negative log-likelihood with the global count scale
//! profiled out.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::analysis::{self, GateWindow};
use crate::cascade::CoincidenceHistogram;
use crate::error::{Error, Result};
use crate::math;
use crate::optim::{bfgs, BfgsOptions};
use crate::quantum::{cholesky, DensityMatrix4, Mat4, MeasurementSetting, Polarization};

/// Gate width used when none is given, in ns.
pub const DEFAULT_GATE_NS: f64 = 1.8;

/// Eigenvalue floor applied to the linear-inversion estimate before it seeds
/// the likelihood search.
const SEED_FLOOR: f64 = 1e-6;

/// Gated coincidences for one analyzer setting.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TomographyRecord {
    pub setting: MeasurementSetting,
    pub counts: u64,
    /// Relative integration time.
    pub acquisition_weight: f64,
}

impl TomographyRecord {
    pub fn new(setting: MeasurementSetting, counts: u64, acquisition_weight: f64) -> Result<Self> {
        if !(acquisition_weight > 0.0 && acquisition_weight.is_finite()) {
            return Err(Error::validation(format!(
                "acquisition weight for {setting} must be positive, got {acquisition_weight}"
            )));
        }
        Ok(Self { setting, counts, acquisition_weight })
    }
}

/// The 16 settings, in table order.
pub fn canonical_settings() -> [MeasurementSetting; 16] {
    use Polarization::*;
    [
        (H, H), (H, V), (V, V), (V, H),
        (R, H), (R, V), (D, V), (D, H),
        (D, R), (D, D), (R, D), (H, D),
        (V, D), (V, L), (H, L), (R, L),
    ]
    .map(|(a, b)| MeasurementSetting::new(a, b))
}

/// Real coordinates of a Hermitian matrix: 4 diagonal entries, then
/// (Re, Im) of each upper off-diagonal entry in row order.
const OFF_DIAG: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Row of the design matrix: p = row · x for the coordinates above.
fn design_row(ket: &[Complex64; 4]) -> [f64; 16] {
    let mut row = [0.0; 16];
    for j in 0..4 {
        row[j] = ket[j].norm_sqr();
    }
    for (n, &(j, k)) in OFF_DIAG.iter().enumerate() {
        // ⟨ψ|ρ|ψ⟩ picks up 2 Re(ψ_j* ψ_k ρ_jk)
        let c = ket[j].conj() * ket[k];
        row[4 + 2 * n] = 2.0 * c.re;
        row[5 + 2 * n] = -2.0 * c.im;
    }
    row
}

/// 16×16 row-major design matrix of the given settings.
pub fn design_matrix(settings: &[MeasurementSetting]) -> Vec<f64> {
    settings.iter().flat_map(|s| design_row(&s.ket())).collect()
}

fn from_coordinates(x: &[f64]) -> Mat4 {
    let mut m = Mat4::zeros();
    for j in 0..4 {
        m.0[j][j] = Complex64::new(x[j], 0.0);
    }
    for (n, &(j, k)) in OFF_DIAG.iter().enumerate() {
        let v = Complex64::new(x[4 + 2 * n], x[5 + 2 * n]);
        m.0[j][k] = v;
        m.0[k][j] = v.conj();
    }
    m
}

/// Records reordered to the canonical list; rejects gaps, duplicates and
/// foreign settings.
fn canonical_order(records: &[TomographyRecord]) -> Result<[TomographyRecord; 16]> {
    let settings = canonical_settings();
    let mut out: [Option<TomographyRecord>; 16] = [None; 16];
    for r in records {
        let Some(i) = settings.iter().position(|s| *s == r.setting) else {
            return Err(Error::input(format!("setting {} is not one of the 16 tomography settings", r.setting)));
        };
        if out[i].is_some() {
            return Err(Error::input(format!("duplicate record for setting {}", r.setting)));
        }
        if !(r.acquisition_weight > 0.0 && r.acquisition_weight.is_finite()) {
            return Err(Error::validation(format!("acquisition weight for {} must be positive", r.setting)));
        }
        out[i] = Some(*r);
    }
    let missing: Vec<String> =
        settings.iter().zip(&out).filter(|(_, r)| r.is_none()).map(|(s, _)| format!("{s}")).collect();
    if !missing.is_empty() {
        return Err(Error::input(format!("missing tomography settings: {}", missing.join(", "))));
    }
    Ok(out.map(|r| r.unwrap()))
}

/// Least-squares inversion of the design system against weight-normalized
/// frequencies, rescaled to unit trace. The result may be non-physical.
pub fn linear_inversion(records: &[TomographyRecord]) -> Result<Mat4> {
    let recs = canonical_order(records)?;
    if recs.iter().all(|r| r.counts == 0) {
        return Err(Error::input("tomography records contain no counts"));
    }
    let a = design_matrix(&canonical_settings());
    let b: Vec<f64> = recs.iter().map(|r| r.counts as f64 / r.acquisition_weight).collect();
    let x = math::solve(&a, &b, 16).ok_or_else(|| Error::Numerical("tomography design matrix is singular".into()))?;
    let m = from_coordinates(&x);
    let tr = m.trace().re;
    if !(tr > 0.0) {
        return Err(Error::Numerical(format!("linear inversion produced non-positive trace {tr}")));
    }
    Ok(m.scale(1.0 / tr))
}

/// Maximum-likelihood estimate with fit diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MleResult {
    pub rho: DensityMatrix4,
    /// Poisson log-likelihood at the optimum, including the ln n! terms.
    pub log_likelihood: f64,
    /// Fitted expected counts per unit acquisition weight at unit probability.
    pub scale: f64,
    /// Pearson χ² of the fitted expectations against the counts.
    pub chi_squared: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// T from its 16 real parameters: real diagonal, then (Re, Im) of the
/// strictly lower entries in row order.
const LOWER: [(usize, usize); 6] = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)];

fn t_from_params(p: &[f64]) -> Mat4 {
    let mut t = Mat4::zeros();
    for j in 0..4 {
        t.0[j][j] = Complex64::new(p[j], 0.0);
    }
    for (n, &(j, k)) in LOWER.iter().enumerate() {
        t.0[j][k] = Complex64::new(p[4 + 2 * n], p[5 + 2 * n]);
    }
    t
}

fn params_from_t(t: &Mat4) -> [f64; 16] {
    let mut p = [0.0; 16];
    for j in 0..4 {
        p[j] = t.0[j][j].re;
    }
    for (n, &(j, k)) in LOWER.iter().enumerate() {
        p[4 + 2 * n] = t.0[j][k].re;
        p[5 + 2 * n] = t.0[j][k].im;
    }
    p
}

fn rho_from_t(t: &Mat4) -> Result<DensityMatrix4> {
    let m = t.adjoint() * *t;
    let m = (m + m.adjoint()).scale(0.5);
    let tr = m.trace().re;
    if !(tr > 0.0 && tr.is_finite()) {
        return Err(Error::Numerical("likelihood search collapsed to a zero matrix".into()));
    }
    DensityMatrix4::new(m.scale(1.0 / tr))
}

/// Lower-triangular T with T†T = ρ. With J the index reversal, the Cholesky
/// factor L of JρJ gives T = (JLJ)†.
fn t_from_rho(rho: &Mat4) -> Result<Mat4> {
    let mut rev = Mat4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            rev.0[i][j] = rho.0[3 - i][3 - j];
        }
    }
    let l = cholesky(&rev)?;
    let mut u = Mat4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            u.0[i][j] = l.0[3 - i][3 - j];
        }
    }
    Ok(u.adjoint())
}

/// Profiled negative log-likelihood up to a constant,
/// N·ln(Σ wᵢqᵢ) − Σ nᵢ ln qᵢ with qᵢ = ‖Tψᵢ‖², and its gradient.
struct Objective {
    kets: [[Complex64; 4]; 16],
    counts: [f64; 16],
    weights: [f64; 16],
    total: f64,
}

impl Objective {
    fn eval(&self, p: &[f64], grad: &mut [f64]) -> f64 {
        let t = t_from_params(p);
        let mut tpsi = [[Complex64::new(0.0, 0.0); 4]; 16];
        let mut q = [0.0; 16];
        let mut wq = 0.0;
        for i in 0..16 {
            tpsi[i] = t.apply(&self.kets[i]);
            q[i] = tpsi[i].iter().map(|c| c.norm_sqr()).sum();
            wq += self.weights[i] * q[i];
        }
        if !(wq > 0.0) {
            return f64::INFINITY;
        }
        let mut value = self.total * math::ln(wq);
        for i in 0..16 {
            if self.counts[i] > 0.0 {
                if q[i] <= 0.0 {
                    return f64::INFINITY;
                }
                value -= self.counts[i] * math::ln(q[i]);
            }
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..16 {
            // ∂f/∂qᵢ
            let c = self.total * self.weights[i] / wq - if self.counts[i] > 0.0 { self.counts[i] / q[i] } else { 0.0 };
            let (a, psi) = (&tpsi[i], &self.kets[i]);
            for j in 0..4 {
                grad[j] += c * 2.0 * (a[j].conj() * psi[j]).re;
            }
            for (n, &(j, k)) in LOWER.iter().enumerate() {
                let z = a[j].conj() * psi[k];
                grad[4 + 2 * n] += c * 2.0 * z.re;
                grad[5 + 2 * n] -= c * 2.0 * z.im;
            }
        }
        value
    }
}

/// Physical maximum-likelihood reconstruction. Exhausting the iteration
/// budget returns the best iterate with `converged = false`.
pub fn mle_reconstruct(records: &[TomographyRecord]) -> Result<MleResult> {
    mle_reconstruct_with(records, &BfgsOptions::default())
}

pub fn mle_reconstruct_with(records: &[TomographyRecord], opts: &BfgsOptions) -> Result<MleResult> {
    let recs = canonical_order(records)?;
    let linear = linear_inversion(&recs)?;
    let seed = DensityMatrix4::project_physical(&linear, SEED_FLOOR)?;
    let t0 = t_from_rho(seed.matrix())?;
    let obj = Objective {
        kets: recs.map(|r| r.setting.ket()),
        counts: recs.map(|r| r.counts as f64),
        weights: recs.map(|r| r.acquisition_weight),
        total: recs.iter().map(|r| r.counts as f64).sum(),
    };
    // the objective is invariant under T → cT, so measure the gradient
    // tolerance at unit Frobenius norm, where T†T has unit trace
    let report = bfgs(|p, g| obj.eval(p, g), &params_from_t(&t0), opts)?;
    let rho = rho_from_t(&t_from_params(&report.x))?;
    let probs = canonical_settings().map(|s| rho.projection_probability(s));
    let wp: f64 = probs.iter().zip(&obj.weights).map(|(p, w)| p * w).sum();
    let scale = obj.total / wp;
    let (mut ll, mut chi2) = (0.0, 0.0);
    for i in 0..16 {
        let mu = scale * obj.weights[i] * probs[i];
        let n = obj.counts[i];
        ll += if n > 0.0 { n * math::ln(mu) } else { 0.0 } - mu - math::lgamma(n + 1.0);
        if mu > 0.0 {
            chi2 += (n - mu) * (n - mu) / mu;
        }
    }
    if !report.converged {
        log::warn!(
            "tomography likelihood search stopped after {} iterations with gradient {:.2e}",
            report.iterations,
            report.gradient_norm
        );
    }
    Ok(MleResult {
        rho,
        log_likelihood: ll,
        scale,
        chi_squared: chi2,
        converged: report.converged,
        iterations: report.iterations,
    })
}

/// Pearson χ² of `counts` against the expectations `scale·w·p(ρ)`.
pub fn pearson_chi_squared(records: &[TomographyRecord], rho: &DensityMatrix4, scale: f64) -> f64 {
    records
        .iter()
        .map(|r| {
            let mu = scale * r.acquisition_weight * rho.projection_probability(r.setting);
            let d = r.counts as f64 - mu;
            if mu > 0.0 { d * d / mu } else { 0.0 }
        })
        .sum()
}

/// Poisson counts with mean `4 · counts_per_setting · p(ρ)`, so an
/// unpolarized source yields `counts_per_setting` on every setting.
pub fn synthetic_records<R: Rng + ?Sized>(
    rho: &DensityMatrix4,
    settings: &[MeasurementSetting],
    counts_per_setting: f64,
    rng: &mut R,
) -> Result<Vec<TomographyRecord>> {
    if !(counts_per_setting > 0.0 && counts_per_setting.is_finite()) {
        return Err(Error::validation(format!("counts per setting must be positive, got {counts_per_setting}")));
    }
    settings
        .iter()
        .map(|&s| {
            let mean = 4.0 * counts_per_setting * rho.projection_probability(s);
            let counts = if mean > 0.0 {
                let d = Poisson::new(mean).map_err(|e| Error::Numerical(format!("{e}")))?;
                d.sample(rng) as u64
            } else {
                0
            };
            TomographyRecord::new(s, counts, 1.0)
        })
        .collect()
}

/// Gated zero-delay counts for each canonical setting. Without an explicit
/// center the gate follows the zero-delay peak of the summed histograms.
pub fn tomography_from_histograms(histograms: &[CoincidenceHistogram], gate: &GateWindow) -> Result<Vec<TomographyRecord>> {
    let settings = canonical_settings();
    let missing: Vec<String> = settings
        .iter()
        .filter(|s| !histograms.iter().any(|h| h.setting == **s))
        .map(|s| format!("{s}"))
        .collect();
    if !missing.is_empty() {
        return Err(Error::input(format!("missing histograms for tomography settings: {}", missing.join(", "))));
    }
    let chosen: Vec<CoincidenceHistogram> = settings
        .iter()
        .map(|s| histograms.iter().find(|h| h.setting == *s).unwrap().clone())
        .collect();
    gate.validate(chosen[0].period)?;
    let center = match gate.center {
        Some(c) => c,
        None => analysis::zero_delay_center(&chosen)?,
    };
    // equal weights unless every histogram records its pulse count
    let max_pulses = chosen.iter().map(|h| h.n_pulses).max().unwrap_or(0);
    let known = chosen.iter().all(|h| h.n_pulses > 0);
    chosen
        .iter()
        .map(|h| {
            let n = analysis::gated_zero_peak(h, gate.width, center)?;
            let w = if known { h.n_pulses as f64 / max_pulses as f64 } else { 1.0 };
            TomographyRecord::new(h.setting, math::round(n) as u64, w)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::bell_psi_plus;
    use crate::rng;
    use proptest::prelude::*;

    const PI: f64 = math::PI;

    fn exact_records(rho: &DensityMatrix4, pairs: f64) -> Vec<TomographyRecord> {
        canonical_settings()
            .iter()
            .map(|&s| TomographyRecord::new(s, math::round(pairs * rho.projection_probability(s)) as u64, 1.0).unwrap())
            .collect()
    }

    /// Born probabilities as pseudo-counts (f64 precision kept via the weight).
    fn frequency_records(rho: &DensityMatrix4) -> Vec<TomographyRecord> {
        // counts = 1e12 · p keeps rounding below 1e-12 relative
        exact_records(rho, 1e12)
    }

    #[test]
    fn canonical_list_is_complete() {
        let s = canonical_settings();
        for i in 0..16 {
            for j in i + 1..16 {
                assert_ne!(s[i], s[j]);
            }
        }
        assert_eq!(math::rank(&design_matrix(&s), 16, 16, 1e-10), 16);
        use Polarization::*;
        for (a, b) in [(H, H), (H, V), (V, V), (V, H)] {
            assert!(s.contains(&MeasurementSetting::new(a, b)));
        }
    }

    #[test]
    fn design_rows_reproduce_born_rule() {
        let rho = DensityMatrix4::werner(0.6, 0.7).unwrap();
        let x = {
            let m = rho.matrix();
            let mut x = [0.0; 16];
            for j in 0..4 {
                x[j] = m.0[j][j].re;
            }
            for (n, &(j, k)) in OFF_DIAG.iter().enumerate() {
                x[4 + 2 * n] = m.0[j][k].re;
                x[5 + 2 * n] = m.0[j][k].im;
            }
            x
        };
        for s in Polarization::ALL.iter().flat_map(|&a| Polarization::ALL.map(|b| MeasurementSetting::new(a, b))) {
            let row = design_row(&s.ket());
            let p: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
            assert!((p - rho.projection_probability(s)).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_inversion_of_exact_frequencies() {
        for rho in [bell_psi_plus(0.0).density(), DensityMatrix4::maximally_mixed()] {
            let m = linear_inversion(&frequency_records(&rho)).unwrap();
            assert!((m - *rho.matrix()).max_abs() < 1e-10);
        }
    }

    #[test]
    fn linear_inversion_of_finite_counts() {
        let truth = DensityMatrix4::werner(0.7, 0.3).unwrap();
        let mut r = rng::stream(4, "test", 0);
        let recs = synthetic_records(&truth, &canonical_settings(), 1e4, &mut r).unwrap();
        let est = DensityMatrix4::project_physical(&linear_inversion(&recs).unwrap(), 0.0).unwrap();
        let d = truth.trace_distance(&est).unwrap();
        assert!(d <= 0.05, "{d}");
    }

    #[test]
    fn record_errors() {
        let rho = DensityMatrix4::maximally_mixed();
        let mut recs = exact_records(&rho, 100.0);
        assert!(linear_inversion(&recs[..15]).is_err());
        recs[3] = recs[2];
        let err = linear_inversion(&recs).unwrap_err();
        assert!(format!("{err}").contains("duplicate"), "{err}");
        let zero: Vec<_> = canonical_settings().iter().map(|&s| TomographyRecord::new(s, 0, 1.0).unwrap()).collect();
        assert!(linear_inversion(&zero).is_err());
        assert!(TomographyRecord::new(canonical_settings()[0], 1, 0.0).is_err());
    }

    #[test]
    fn cholesky_seed_round_trips() {
        let rho = DensityMatrix4::project_physical(DensityMatrix4::werner(0.8, 1.1).unwrap().matrix(), 1e-6).unwrap();
        let t = t_from_rho(rho.matrix()).unwrap();
        for i in 0..4 {
            for j in i + 1..4 {
                assert_eq!(t.0[i][j], Complex64::new(0.0, 0.0));
            }
        }
        let back = rho_from_t(&t_from_params(&params_from_t(&t))).unwrap();
        assert!((*back.matrix() - *rho.matrix()).max_abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let truth = DensityMatrix4::werner(0.6, -0.4).unwrap();
        let recs = exact_records(&truth, 1000.0);
        let obj = Objective {
            kets: canonical_settings().map(|s| s.ket()),
            counts: core::array::from_fn(|i| recs[i].counts as f64),
            weights: [1.0; 16],
            total: recs.iter().map(|r| r.counts as f64).sum(),
        };
        let p: Vec<f64> = (0..16).map(|i| 0.3 + 0.05 * i as f64 * if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let mut g = [0.0; 16];
        obj.eval(&p, &mut g);
        let mut scratch = [0.0; 16];
        for i in 0..16 {
            let h = 1e-6;
            let (mut up, mut dn) = (p.clone(), p.clone());
            up[i] += h;
            dn[i] -= h;
            let fd = (obj.eval(&up, &mut scratch) - obj.eval(&dn, &mut scratch)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-4 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn noiseless_bell_state() {
        let res = mle_reconstruct(&exact_records(&bell_psi_plus(0.0).density(), 1e5)).unwrap();
        assert!(res.rho.fidelity_to_psi_plus() >= 0.999, "{}", res.rho.fidelity_to_psi_plus());
    }

    #[test]
    fn mle_is_physical_when_inversion_is_not() {
        // a near-pure state with counts pushing inversion below zero
        let truth = bell_psi_plus(0.0).density();
        let mut recs = exact_records(&truth, 1000.0);
        recs[1].counts += 40;
        recs[3].counts = 0;
        let lin = linear_inversion(&recs).unwrap();
        assert!(lin.hermitian_eigen().unwrap().values[3] < 0.0);
        let res = mle_reconstruct(&recs).unwrap();
        assert!(res.rho.eigenvalues().unwrap()[3] >= -1e-9);
    }

    #[test]
    fn werner_round_trip_phase() {
        let truth = DensityMatrix4::werner(0.85, -0.11 * PI).unwrap();
        let mut r = rng::stream(11, "test", 0);
        let recs = synthetic_records(&truth, &canonical_settings(), 1e5, &mut r).unwrap();
        let res = mle_reconstruct(&recs).unwrap();
        assert!(res.converged);
        let m = res.rho.metrics().unwrap();
        assert!((m.most_probable_phase + 0.11 * PI).abs() <= 0.02 * PI, "{}", m.most_probable_phase / PI);
        assert!((m.tangle - m.concurrence * m.concurrence).abs() <= 1e-9);
        assert!(truth.trace_distance(&res.rho).unwrap() <= 0.05);
    }

    #[test]
    fn held_out_chi_squared_is_statistical() {
        // 16 settings against 15 state parameters plus a scale leave no
        // in-sample degrees of freedom, so test predictions on a replicate
        let truth = DensityMatrix4::werner(0.7, 0.5).unwrap();
        let mut r = rng::stream(5, "test", 0);
        let fit = synthetic_records(&truth, &canonical_settings(), 2e4, &mut r).unwrap();
        let replicate = synthetic_records(&truth, &canonical_settings(), 2e4, &mut r).unwrap();
        let res = mle_reconstruct(&fit).unwrap();
        let per_dof = pearson_chi_squared(&replicate, &res.rho, res.scale) / 16.0;
        assert!((0.2..=5.0).contains(&per_dof), "{per_dof}");
    }

    #[test]
    fn error_contracts_with_counts() {
        let truth = DensityMatrix4::werner(0.75, 0.2).unwrap();
        let mean_distance = |pairs: f64| {
            let mut total = 0.0;
            for k in 0..6 {
                let mut r = rng::stream(k, "contract", pairs as u64);
                let recs = synthetic_records(&truth, &canonical_settings(), pairs, &mut r).unwrap();
                total += truth.trace_distance(&mle_reconstruct(&recs).unwrap().rho).unwrap();
            }
            total / 6.0
        };
        let d = [mean_distance(1e3), mean_distance(1e4), mean_distance(1e5)];
        assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let truth = DensityMatrix4::werner(0.6, 0.2).unwrap();
        let mut r = rng::stream(3, "test", 0);
        let recs = synthetic_records(&truth, &canonical_settings(), 1e4, &mut r).unwrap();
        let res = mle_reconstruct_with(&recs, &BfgsOptions { max_iterations: 1, gradient_tol: 1e-12 }).unwrap();
        assert!(!res.converged);
        assert!(res.rho.eigenvalues().unwrap()[3] >= -1e-9);
    }

    fn tomo_config() -> crate::cascade::SimulationConfig {
        use crate::cascade::*;
        SimulationConfig {
            emitter: EmitterConfig { fss: 1.0, tau_x: 0.5, tau_xx: 0.3, pair_prob: 0.5, ..Default::default() },
            drive: DriveConfig::MHZ_185,
            detector: DetectorConfig::default(),
            histogram: HistogramSpec::default(),
        }
    }

    #[test]
    fn records_from_histograms() {
        let cfg = tomo_config();
        let settings = canonical_settings();
        let h1 = crate::cascade::simulate_with(&cfg, &settings, 20_000, 6, 1).unwrap();
        let h2 = crate::cascade::simulate_with(&cfg, &settings, 40_000, 7, 1).unwrap();
        let gate = GateWindow::new(DEFAULT_GATE_NS);
        let r1 = tomography_from_histograms(&h1, &gate).unwrap();
        let r2 = tomography_from_histograms(&h2, &gate).unwrap();
        for (a, b) in r1.iter().zip(&r2) {
            let (a, b) = (a.counts as f64, b.counts as f64);
            assert!((b - 2.0 * a).abs() <= 5.0 * (b + 4.0 * a).sqrt().max(1.0), "{a} {b}");
        }
        let wide = GateWindow::new(cfg.drive.period() + 0.5);
        assert!(tomography_from_histograms(&h1, &wide).is_err());
        let err = tomography_from_histograms(&h1[..14], &gate).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("HL") && msg.contains("RL"), "{msg}");
        let res = mle_reconstruct(&r1).unwrap();
        let m = res.rho.metrics().unwrap();
        assert!((m.tangle - m.concurrence * m.concurrence).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn mle_is_permutation_invariant(seed in 0u64..10_000, shift in 1usize..16) {
            let truth = DensityMatrix4::werner(0.8, 0.4).unwrap();
            let mut r = rng::stream(seed, "perm", 0);
            let recs = synthetic_records(&truth, &canonical_settings(), 5e3, &mut r).unwrap();
            let mut rotated = recs.clone();
            rotated.rotate_left(shift);
            let a = mle_reconstruct(&recs).unwrap();
            let b = mle_reconstruct(&rotated).unwrap();
            prop_assert_eq!(a.rho, b.rho);
        }

        #[test]
        fn tangle_identity_on_reconstructions(seed in 0u64..10_000, p in 0.0f64..1.0, phase in -PI..PI) {
            let truth = DensityMatrix4::werner(p, phase).unwrap();
            let mut r = rng::stream(seed, "tangle", 0);
            let recs = synthetic_records(&truth, &canonical_settings(), 2e3, &mut r).unwrap();
            let rho = mle_reconstruct(&recs).unwrap().rho;
            let c = rho.concurrence().unwrap();
            prop_assert!((rho.tangle().unwrap() - c * c).abs() <= 1e-9);
            prop_assert!(rho.eigenvalues().unwrap()[3] >= -1e-9);
        }
    }
}
