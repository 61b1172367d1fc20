use core::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::math;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense 4×4 complex matrix in the (HH, HV, VH, VV) product basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat4(pub [[Complex64; 4]; 4]);

impl Mat4 {
    pub const fn zeros() -> Self {
        Mat4([[ZERO; 4]; 4])
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            m.0[i][i] = ONE;
        }
        m
    }

    /// |u⟩⟨v|
    pub fn outer(u: &[Complex64; 4], v: &[Complex64; 4]) -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = u[i] * v[j].conj();
            }
        }
        m
    }

    pub fn diagonal(d: [f64; 4]) -> Self {
        let mut m = Self::zeros();
        for (i, v) in d.into_iter().enumerate() {
            m.0[i][i] = Complex64::new(v, 0.0);
        }
        m
    }

    /// Kronecker product of two 2×2 matrices, first factor = XX photon.
    pub fn kron(a: &[[Complex64; 2]; 2], b: &[[Complex64; 2]; 2]) -> Self {
        let mut m = Self::zeros();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        m.0[2 * i + k][2 * j + l] = a[i][j] * b[k][l];
                    }
                }
            }
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = self.0[j][i].conj();
            }
        }
        m
    }

    pub fn conj(&self) -> Self {
        let mut m = *self;
        m.0.iter_mut().flatten().for_each(|z| *z = z.conj());
        m
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        m.0.iter_mut().flatten().for_each(|z| *z *= s);
        m
    }

    pub fn trace(&self) -> Complex64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }

    pub fn apply(&self, v: &[Complex64; 4]) -> [Complex64; 4] {
        let mut out = [ZERO; 4];
        for i in 0..4 {
            out[i] = (0..4).map(|j| self.0[i][j] * v[j]).sum();
        }
        out
    }

    /// ⟨v|M|v⟩
    pub fn expectation(&self, v: &[Complex64; 4]) -> Complex64 {
        let mv = self.apply(v);
        (0..4).map(|i| v[i].conj() * mv[i]).sum()
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in i..4 {
                worst = worst.max((self.0[i][j] - self.0[j][i].conj()).norm());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0f64, |acc, z| acc.max(z.norm()))
    }

    /// Partial transpose on the second (X photon) factor.
    pub fn partial_transpose_second(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..2 {
            for k in 0..2 {
                for j in 0..2 {
                    for l in 0..2 {
                        m.0[2 * i + k][2 * j + l] = self.0[2 * i + l][2 * j + k];
                    }
                }
            }
        }
        m
    }

    /// Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi
    /// rotations. Eigenvalues are returned in descending order together with
    /// the matching orthonormal eigenvectors.
    pub fn hermitian_eigen(&self) -> Result<HermitianEigen> {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        if self.hermiticity_defect() > 1e-10 * scale.max(1.0) {
            return Err(Error::Numerical(alloc::format!(
                "eigen-decomposition requires a Hermitian matrix (defect {:.3e})",
                self.hermiticity_defect()
            )));
        }
        let mut a = *self;
        let mut v = Mat4::identity();
        let mut converged = false;
        for _sweep in 0..64 {
            let off: f64 = (0..4)
                .flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a.0[i][j].norm_sqr())
                .sum();
            if math::sqrt(off) <= 1e-15 * scale {
                converged = true;
                break;
            }
            for p in 0..3 {
                for q in p + 1..4 {
                    let apq = a.0[p][q];
                    let r = apq.norm();
                    if r <= 1e-300 {
                        continue;
                    }
                    let phase = apq / r;
                    let alpha = a.0[p][p].re;
                    let beta = a.0[q][q].re;
                    let zeta = (beta - alpha) / (2.0 * r);
                    let t = if zeta >= 0.0 {
                        1.0 / (zeta + math::sqrt(1.0 + zeta * zeta))
                    } else {
                        -1.0 / (-zeta + math::sqrt(1.0 + zeta * zeta))
                    };
                    let c = 1.0 / math::sqrt(1.0 + t * t);
                    let s = t * c;
                    // G = diag(1, e^{-iφ}) · [[c, s], [-s, c]] embedded in the (p, q) plane
                    let mut g = Mat4::identity();
                    g.0[p][p] = Complex64::new(c, 0.0);
                    g.0[p][q] = Complex64::new(s, 0.0);
                    g.0[q][p] = -phase.conj() * s;
                    g.0[q][q] = phase.conj() * c;
                    a = g.adjoint() * a * g;
                    v = v * g;
                }
            }
        }
        if !converged {
            return Err(Error::Numerical("Jacobi eigen-decomposition did not converge".into()));
        }
        let mut order = [0usize, 1, 2, 3];
        order.sort_by(|&i, &j| a.0[j][j].re.total_cmp(&a.0[i][i].re));
        let mut values = [0.0; 4];
        let mut vectors = [[ZERO; 4]; 4];
        for (slot, &idx) in order.iter().enumerate() {
            values[slot] = a.0[idx][idx].re;
            for row in 0..4 {
                vectors[slot][row] = v.0[row][idx];
            }
        }
        Ok(HermitianEigen { values, vectors })
    }

    /// Rebuild Σ λ_i |v_i⟩⟨v_i| from a spectral decomposition.
    pub fn from_spectrum(values: &[f64; 4], vectors: &[[Complex64; 4]; 4]) -> Self {
        let mut m = Self::zeros();
        for k in 0..4 {
            let p = Mat4::outer(&vectors[k], &vectors[k]).scale(values[k]);
            m = m + p;
        }
        m
    }
}

/// Spectrum of a Hermitian matrix, descending.
#[derive(Debug, Clone, Copy)]
pub struct HermitianEigen {
    pub values: [f64; 4],
    /// `vectors[k]` is the eigenvector for `values[k]`.
    pub vectors: [[Complex64; 4]; 4],
}

impl Index<(usize, usize)> for Mat4 {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.0[i][j]
    }
}

impl IndexMut<(usize, usize)> for Mat4 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.0[i][j]
    }
}

impl Mul for Mat4 {
    type Output = Mat4;

    fn mul(self, rhs: Mat4) -> Mat4 {
        let mut m = Mat4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = (0..4).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        m
    }
}

impl Add for Mat4 {
    type Output = Mat4;

    fn add(self, rhs: Mat4) -> Mat4 {
        let mut m = self;
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] += rhs.0[i][j];
            }
        }
        m
    }
}

impl Sub for Mat4 {
    type Output = Mat4;

    fn sub(self, rhs: Mat4) -> Mat4 {
        let mut m = self;
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] -= rhs.0[i][j];
            }
        }
        m
    }
}

/// Cholesky factor `L` (lower) with `A = L L†` for a positive definite
/// Hermitian matrix.
pub(crate) fn cholesky(a: &Mat4) -> Result<Mat4> {
    let mut l = Mat4::zeros();
    for j in 0..4 {
        let mut d = a.0[j][j].re;
        for k in 0..j {
            d -= l.0[j][k].norm_sqr();
        }
        if d <= 0.0 {
            return Err(Error::Numerical("matrix is not positive definite".into()));
        }
        let djj = math::sqrt(d);
        l.0[j][j] = Complex64::new(djj, 0.0);
        for i in j + 1..4 {
            let mut s = a.0[i][j];
            for k in 0..j {
                s -= l.0[i][k] * l.0[j][k].conj();
            }
            l.0[i][j] = s / djj;
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_hermitian() -> Mat4 {
        let mut m = Mat4::zeros();
        let vals = [
            [1.0, 0.0, 0.3, 0.1, -0.2, 0.5, 0.0, 0.4],
            [0.0, 0.0, 2.0, 0.0, 0.1, -0.3, 0.7, 0.2],
            [0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.25, -0.6],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0],
        ];
        for i in 0..4 {
            for j in i..4 {
                let z = Complex64::new(vals[i][2 * j], vals[i][2 * j + 1]);
                m.0[i][j] = if i == j { Complex64::new(z.re, 0.0) } else { z };
                m.0[j][i] = m.0[i][j].conj();
            }
        }
        m
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let m = sample_hermitian();
        let e = m.hermitian_eigen().unwrap();
        let back = Mat4::from_spectrum(&e.values, &e.vectors);
        assert!((back - m).max_abs() < 1e-12);
        for w in e.values.windows(2) {
            assert!(w[0] >= w[1]);
        }
        let trace: f64 = e.values.iter().sum();
        assert!((trace - m.trace().re).abs() < 1e-12);
    }

    #[test]
    fn eigenvectors_are_orthonormal() {
        let e = sample_hermitian().hermitian_eigen().unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let ip: Complex64 = (0..4).map(|i| e.vectors[a][i].conj() * e.vectors[b][i]).sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((ip - Complex64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_factor() {
        let m = sample_hermitian() + Mat4::identity().scale(3.0);
        let l = cholesky(&m).unwrap();
        assert!((l * l.adjoint() - m).max_abs() < 1e-12);
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let mut m = Mat4::identity();
        m.0[0][1] = Complex64::new(1.0, 0.0);
        assert!(m.hermitian_eigen().is_err());
    }
}
