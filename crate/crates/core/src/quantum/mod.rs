//! Two-photon polarization algebra and entanglement measures.
//!
//! The biexciton (XX) photon is always the first tensor factor and the
//! product basis is ordered (HH, HV, VH, VV). Circular kets follow
//! R = (H + iV)/√2 and L = (H − iV)/√2; see [`CIRCULAR_SIGN`].

mod matrix;

use alloc::format;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::math;

pub use matrix::{HermitianEigen, Mat4};
pub use num_complex::Complex64;
pub(crate) use matrix::{cholesky, ONE, ZERO};

/// Sign of the V amplitude's imaginary part in |R⟩. |L⟩ carries the opposite sign.
pub const CIRCULAR_SIGN: f64 = 1.0;

const NORM_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-9;
const DEGENERACY_TOL: f64 = 1e-9;

/// Single-photon polarization state a_H|H⟩ + a_V|V⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolarizationKet {
    pub amp_h: Complex64,
    pub amp_v: Complex64,
}

impl PolarizationKet {
    pub fn new(amp_h: Complex64, amp_v: Complex64) -> Result<Self> {
        let n = amp_h.norm_sqr() + amp_v.norm_sqr();
        if !n.is_finite() || (n - 1.0).abs() > NORM_TOL {
            return Err(Error::validation(format!("polarization ket has norm² {n}, expected 1")));
        }
        Ok(Self { amp_h, amp_v })
    }

    /// Ket at polar angle `theta` and azimuth `phi` on the Poincaré sphere,
    /// with H at the north pole and D at (π/2, 0).
    pub fn from_bloch(theta: f64, phi: f64) -> Self {
        let h = math::cos(0.5 * theta);
        let v = math::sin(0.5 * theta);
        Self {
            amp_h: Complex64::new(h, 0.0),
            amp_v: Complex64::new(v * math::cos(phi), v * math::sin(phi)),
        }
    }

    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amp_h.conj() * other.amp_h + self.amp_v.conj() * other.amp_v
    }

    /// The ket orthogonal to `self` (unique up to phase).
    pub fn orthogonal(&self) -> Self {
        Self { amp_h: -self.amp_v.conj(), amp_v: self.amp_h.conj() }
    }

    /// Rotate a linear polarization axis by `angle` radians. Circular
    /// components pick up only a phase.
    pub fn rotate_linear(&self, angle: f64) -> Self {
        let (s, c) = (math::sin(angle), math::cos(angle));
        Self { amp_h: self.amp_h * c - self.amp_v * s, amp_v: self.amp_h * s + self.amp_v * c }
    }

    pub fn as_array(&self) -> [Complex64; 2] {
        [self.amp_h, self.amp_v]
    }
}

/// The six canonical analyzer settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Polarization {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl Polarization {
    pub const ALL: [Polarization; 6] =
        [Polarization::H, Polarization::V, Polarization::D, Polarization::A, Polarization::R, Polarization::L];

    pub fn ket(self) -> PolarizationKet {
        let r = math::FRAC_1_SQRT_2;
        let (h, v) = match self {
            Polarization::H => (ONE, ZERO),
            Polarization::V => (ZERO, ONE),
            Polarization::D => (Complex64::new(r, 0.0), Complex64::new(r, 0.0)),
            Polarization::A => (Complex64::new(r, 0.0), Complex64::new(-r, 0.0)),
            Polarization::R => (Complex64::new(r, 0.0), Complex64::new(0.0, CIRCULAR_SIGN * r)),
            Polarization::L => (Complex64::new(r, 0.0), Complex64::new(0.0, -CIRCULAR_SIGN * r)),
        };
        PolarizationKet { amp_h: h, amp_v: v }
    }

    /// Orthogonal partner in the same basis.
    pub fn partner(self) -> Self {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
            Polarization::D => Polarization::A,
            Polarization::A => Polarization::D,
            Polarization::R => Polarization::L,
            Polarization::L => Polarization::R,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarization::H => "H",
            Polarization::V => "V",
            Polarization::D => "D",
            Polarization::A => "A",
            Polarization::R => "R",
            Polarization::L => "L",
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "H" | "h" => Ok(Polarization::H),
            "V" | "v" => Ok(Polarization::V),
            "D" | "d" => Ok(Polarization::D),
            "A" | "a" => Ok(Polarization::A),
            "R" | "r" => Ok(Polarization::R),
            "L" | "l" => Ok(Polarization::L),
            other => Err(Error::input(format!("unknown polarization '{other}'"))),
        }
    }
}

/// Ordered analyzer pair: `xx` acts on the biexciton photon, `x` on the exciton photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeasurementSetting {
    pub xx: Polarization,
    pub x: Polarization,
}

impl MeasurementSetting {
    pub const fn new(xx: Polarization, x: Polarization) -> Self {
        Self { xx, x }
    }

    /// Setting with the X analyzer flipped to its orthogonal partner.
    pub fn cross(self) -> Self {
        Self { xx: self.xx, x: self.x.partner() }
    }

    /// Dense index in 0..36.
    pub fn code(self) -> usize {
        6 * self.xx.index() + self.x.index()
    }

    pub fn ket(self) -> [Complex64; 4] {
        product_amplitudes(&self.xx.ket(), &self.x.ket())
    }
}

impl fmt::Display for MeasurementSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.xx, self.x)
    }
}

impl FromStr for MeasurementSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mut chars = s.chars();
        match (chars.next(), chars.next(), chars.next()) {
            (Some(a), Some(b), None) => {
                let mut buf = [0u8; 4];
                let xx = a.encode_utf8(&mut buf).parse()?;
                let x = b.encode_utf8(&mut buf).parse()?;
                Ok(Self { xx, x })
            }
            _ => Err(Error::input(format!("measurement setting '{s}' must be two letters, e.g. HV"))),
        }
    }
}

fn product_amplitudes(a: &PolarizationKet, b: &PolarizationKet) -> [Complex64; 4] {
    [a.amp_h * b.amp_h, a.amp_h * b.amp_v, a.amp_v * b.amp_h, a.amp_v * b.amp_v]
}

/// Pure two-photon polarization state.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TwoPhotonState {
    amplitudes: [Complex64; 4],
}

impl TwoPhotonState {
    pub fn new(amplitudes: [Complex64; 4]) -> Result<Self> {
        let n: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if !n.is_finite() || (n - 1.0).abs() > NORM_TOL {
            return Err(Error::validation(format!("two-photon state has norm² {n}, expected 1")));
        }
        Ok(Self { amplitudes })
    }

    /// Normalizes `amplitudes`; fails only on the zero vector.
    pub fn normalized(amplitudes: [Complex64; 4]) -> Result<Self> {
        let n = math::sqrt(amplitudes.iter().map(|a| a.norm_sqr()).sum());
        if n <= 1e-300 || !n.is_finite() {
            return Err(Error::validation("cannot normalize a zero state vector"));
        }
        Ok(Self { amplitudes: amplitudes.map(|a| a / n) })
    }

    pub fn product(xx: &PolarizationKet, x: &PolarizationKet) -> Self {
        Self { amplitudes: product_amplitudes(xx, x) }
    }

    pub fn amplitudes(&self) -> &[Complex64; 4] {
        &self.amplitudes
    }

    pub fn inner(&self, other: &Self) -> Complex64 {
        (0..4).map(|i| self.amplitudes[i].conj() * other.amplitudes[i]).sum()
    }

    /// Relative phase arg(a_VV / a_HH), in (−π, π].
    pub fn hh_vv_phase(&self) -> f64 {
        (self.amplitudes[3] * self.amplitudes[0].conj()).arg()
    }

    pub fn density(&self) -> DensityMatrix4 {
        DensityMatrix4 { m: Mat4::outer(&self.amplitudes, &self.amplitudes) }
    }
}

/// (|HH⟩ + e^{iφ}|VV⟩)/√2
pub fn bell_psi_plus(phase: f64) -> TwoPhotonState {
    let r = math::FRAC_1_SQRT_2;
    TwoPhotonState {
        amplitudes: [
            Complex64::new(r, 0.0),
            ZERO,
            ZERO,
            Complex64::new(r * math::cos(phase), r * math::sin(phase)),
        ],
    }
}

/// Physical two-photon density matrix. Construction enforces Hermiticity,
/// unit trace and positivity (to the tolerances below), so every accessor
/// can assume a valid state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix4 {
    m: Mat4,
}

impl DensityMatrix4 {
    pub fn new(m: Mat4) -> Result<Self> {
        if m.0.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::validation("density matrix has non-finite entries"));
        }
        let defect = m.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::validation(format!("density matrix is not Hermitian (defect {defect:.3e})")));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::validation(format!("density matrix trace is {:.12}, expected 1", tr.re)));
        }
        let min = m.hermitian_eigen()?.values[3];
        if min < -PSD_TOL {
            return Err(Error::validation(format!("density matrix has negative eigenvalue {min:.3e}")));
        }
        Ok(Self { m })
    }

    /// Hermitize, clip the spectrum to be non-negative and rescale to unit
    /// trace. Used to turn noisy estimates into valid states.
    pub fn project_physical(m: &Mat4, floor: f64) -> Result<Self> {
        let herm = (*m + m.adjoint()).scale(0.5);
        let e = herm.hermitian_eigen()?;
        let mut vals = e.values.map(|v| v.max(floor));
        let total: f64 = vals.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::Numerical("cannot project a matrix with no positive spectrum".into()));
        }
        vals.iter_mut().for_each(|v| *v /= total);
        let mut out = Mat4::from_spectrum(&vals, &e.vectors);
        out = (out + out.adjoint()).scale(0.5);
        Self::new(out)
    }

    pub fn maximally_mixed() -> Self {
        Self { m: Mat4::identity().scale(0.25) }
    }

    /// p|Ψ+⟩⟨Ψ+| + (1−p)I/4 with |Ψ+⟩ carrying `phase`.
    pub fn werner(p: f64, phase: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::validation(format!("Werner weight {p} outside [0, 1]")));
        }
        Ok(Self::mixture(p, &bell_psi_plus(phase).density(), &Self::maximally_mixed()))
    }

    /// w·a + (1−w)·b; convex combinations of states are states.
    pub fn mixture(w: f64, a: &Self, b: &Self) -> Self {
        let w = w.clamp(0.0, 1.0);
        Self { m: a.m.scale(w) + b.m.scale(1.0 - w) }
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.m
    }

    /// Row-major `[re, im]` pairs.
    pub fn to_entries(&self) -> [[f64; 2]; 16] {
        let mut out = [[0.0; 2]; 16];
        for (k, z) in self.m.0.iter().flatten().enumerate() {
            out[k] = [z.re, z.im];
        }
        out
    }

    pub fn from_entries(entries: &[[f64; 2]]) -> Result<Self> {
        if entries.len() != 16 {
            return Err(Error::input(format!("density matrix needs 16 entries, got {}", entries.len())));
        }
        let mut m = Mat4::zeros();
        for (k, e) in entries.iter().enumerate() {
            m.0[k / 4][k % 4] = Complex64::new(e[0], e[1]);
        }
        Self::new(m)
    }

    /// Tr(ρ|ψ⟩⟨ψ|) for a normalized two-photon ket.
    pub fn expectation_ket(&self, ket: &[Complex64; 4]) -> f64 {
        self.m.expectation(ket).re.clamp(0.0, 1.0)
    }

    pub fn projection_probability(&self, setting: MeasurementSetting) -> f64 {
        self.expectation_ket(&setting.ket())
    }

    pub fn projection_probability_kets(&self, xx: &PolarizationKet, x: &PolarizationKet) -> f64 {
        self.expectation_ket(&product_amplitudes(xx, x))
    }

    pub fn fidelity_to_psi_plus(&self) -> f64 {
        self.fidelity_to_pure(&bell_psi_plus(0.0))
    }

    pub fn fidelity_to_pure(&self, psi: &TwoPhotonState) -> f64 {
        self.expectation_ket(psi.amplitudes())
    }

    /// Spectrum clipped to [−1e-9, 1+1e-9] and renormalized.
    fn regularized_spectrum(&self) -> Result<HermitianEigen> {
        let mut e = self.m.hermitian_eigen()?;
        e.values.iter_mut().for_each(|v| *v = v.clamp(-PSD_TOL, 1.0 + PSD_TOL));
        let total: f64 = e.values.iter().sum();
        e.values.iter_mut().for_each(|v| *v /= total);
        Ok(e)
    }

    pub fn eigenvalues(&self) -> Result<[f64; 4]> {
        Ok(self.regularized_spectrum()?.values)
    }

    /// Wootters concurrence.
    pub fn concurrence(&self) -> Result<f64> {
        let e = self.regularized_spectrum()?;
        let sqrt_rho = Mat4::from_spectrum(&e.values.map(|v| math::sqrt(v.max(0.0))), &e.vectors);
        let rho = Mat4::from_spectrum(&e.values, &e.vectors);
        let yy = sigma_y_sigma_y();
        let flipped = yy * rho.conj() * yy;
        let mut r = sqrt_rho * flipped * sqrt_rho;
        r = (r + r.adjoint()).scale(0.5);
        let lam = r.hermitian_eigen()?.values.map(|v| math::sqrt(v.max(0.0)));
        Ok((lam[0] - lam[1] - lam[2] - lam[3]).clamp(0.0, 1.0))
    }

    pub fn tangle(&self) -> Result<f64> {
        let c = self.concurrence()?;
        Ok(c * c)
    }

    /// Smallest eigenvalue of the partial transpose on the X photon.
    pub fn peres_criterion(&self) -> Result<f64> {
        let e = self.regularized_spectrum()?;
        let pt = Mat4::from_spectrum(&e.values, &e.vectors).partial_transpose_second();
        Ok(pt.hermitian_eigen()?.values[3])
    }

    /// Dominant eigenvector (HH amplitude made real and non-negative) and its
    /// eigenvalue.
    pub fn most_probable_state(&self) -> Result<(TwoPhotonState, f64)> {
        let e = self.regularized_spectrum()?;
        if e.values[0] - e.values[1] < DEGENERACY_TOL {
            return Err(Error::Ambiguous(format!(
                "largest eigenvalue is degenerate ({:.6} vs {:.6})",
                e.values[0], e.values[1]
            )));
        }
        let mut v = e.vectors[0];
        let anchor = if v[0].norm() > 1e-12 { v[0] } else { v.iter().copied().fold(ZERO, |a, z| if z.norm() > a.norm() { z } else { a }) };
        let phase = anchor.conj() / anchor.norm();
        v.iter_mut().for_each(|z| *z *= phase);
        Ok((TwoPhotonState::normalized(v)?, e.values[0]))
    }

    pub fn metrics(&self) -> Result<EntanglementMetrics> {
        let concurrence = self.concurrence()?;
        let (state, largest) = match self.most_probable_state() {
            Ok(v) => v,
            Err(Error::Ambiguous(_)) => {
                let e = self.regularized_spectrum()?;
                (TwoPhotonState::normalized(e.vectors[0])?, e.values[0])
            }
            Err(e) => return Err(e),
        };
        Ok(EntanglementMetrics {
            fidelity_psi_plus: self.fidelity_to_psi_plus(),
            concurrence,
            tangle: concurrence * concurrence,
            largest_eigenvalue: largest,
            peres_min_eig: self.peres_criterion()?,
            most_probable_phase: state.hh_vv_phase(),
        })
    }

    /// ½‖ρ − σ‖₁
    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        let d = self.m - other.m;
        Ok(0.5 * d.hermitian_eigen()?.values.iter().map(|v| v.abs()).sum::<f64>())
    }
}

fn sigma_y_sigma_y() -> Mat4 {
    let sy = [[ZERO, Complex64::new(0.0, -1.0)], [Complex64::new(0.0, 1.0), ZERO]];
    Mat4::kron(&sy, &sy)
}

/// Summary block for a reconstructed or simulated state.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EntanglementMetrics {
    pub fidelity_psi_plus: f64,
    pub concurrence: f64,
    pub tangle: f64,
    pub largest_eigenvalue: f64,
    pub peres_min_eig: f64,
    /// arg(a_VV/a_HH) of the most probable state, radians.
    pub most_probable_phase: f64,
}
