//! Scalar math through `libm` and small dense real linear algebra.
//!
//! Everything here works on row-major `&[f64]` slices so the optimisers and
//! the tomography inversion can share it without pulling in a matrix crate.

use alloc::vec;
use alloc::vec::Vec;

pub use core::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn asin(x: f64) -> f64 {
    libm::asin(x)
}

#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

#[inline]
pub fn lgamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[inline]
pub fn to_radians(deg: f64) -> f64 {
    deg * PI / 180.0
}

#[inline]
pub fn to_degrees(rad: f64) -> f64 {
    rad * 180.0 / PI
}

/// Reduce `x` into `[0, period)`.
#[inline]
pub fn wrap_positive(x: f64, period: f64) -> f64 {
    let r = x - period * floor(x / period);
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Reduce `x` into `[-period/2, period/2)`.
#[inline]
pub fn wrap_centered(x: f64, period: f64) -> f64 {
    wrap_positive(x + 0.5 * period, period) - 0.5 * period
}

/// Standard normal cumulative distribution.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z * FRAC_1_SQRT_2))
}

/// Solve `a x = b` for square `a` (n×n, row-major) with partial pivoting.
/// Returns `None` when the matrix is numerically singular.
pub fn solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap();
        if m[pivot * n + col].abs() <= 1e-14 * scale {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(pivot * n + k, col * n + k);
            }
            x.swap(pivot, col);
        }
        let diag = m[col * n + col];
        for row in col + 1..n {
            let factor = m[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[row * n + k] -= factor * m[col * n + k];
            }
            x[row] -= factor * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for k in col + 1..n {
            acc -= m[col * n + k] * x[k];
        }
        x[col] = acc / m[col * n + col];
    }
    Some(x)
}

/// Inverse of a square matrix, or `None` if singular.
pub fn invert(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for col in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[col] = 1.0;
        let x = solve(a, &e, n)?;
        for row in 0..n {
            inv[row * n + col] = x[row];
        }
    }
    Some(inv)
}

/// Numerical rank of an `rows × cols` matrix by Gaussian elimination with
/// full pivoting; entries below `tol · max|a|` count as zero.
pub fn rank(a: &[f64], rows: usize, cols: usize, tol: f64) -> usize {
    let mut m = a.to_vec();
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let mut rank = 0;
    let mut used_cols = vec![false; cols];
    while rank < rows.min(cols) {
        // largest remaining entry
        let mut best = (0usize, 0usize, 0.0f64);
        for i in rank..rows {
            for j in 0..cols {
                if !used_cols[j] && m[i * cols + j].abs() > best.2 {
                    best = (i, j, m[i * cols + j].abs());
                }
            }
        }
        if best.2 <= tol * scale {
            break;
        }
        let (pi, pj, _) = best;
        for k in 0..cols {
            m.swap(pi * cols + k, rank * cols + k);
        }
        used_cols[pj] = true;
        let pivot = m[rank * cols + pj];
        for i in rank + 1..rows {
            let factor = m[i * cols + pj] / pivot;
            for k in 0..cols {
                m[i * cols + k] -= factor * m[rank * cols + k];
            }
        }
        rank += 1;
    }
    rank
}

/// Composite Simpson rule over `[a, b]` with `intervals` (rounded up to even).
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals.max(2) + intervals % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Regularized lower incomplete gamma function P(a, x) for a > 0: series
/// below x = a + 1, Lentz continued fraction above.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let log_prefactor = a * ln(x) - x - lgamma(a);
    if x < a + 1.0 {
        let (mut term, mut sum, mut n) = (1.0 / a, 1.0 / a, a);
        for _ in 0..10_000 {
            n += 1.0;
            term *= x / n;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        (sum * exp(log_prefactor)).min(1.0)
    } else {
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (1.0 - exp(log_prefactor) * h).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_p_closed_forms() {
        // P(1, x) = 1 − e^{−x}; P(1/2, x) = erf(√x)
        for x in [0.01, 0.5, 1.0, 2.0, 7.5, 30.0] {
            assert!((gamma_p(1.0, x) - (1.0 - exp(-x))).abs() < 1e-14);
            assert!((gamma_p(0.5, x) - erf(sqrt(x))).abs() < 1e-13);
        }
        // P(2, x) = 1 − (1 + x) e^{−x}
        assert!((gamma_p(2.0, 3.0) - (1.0 - 4.0 * exp(-3.0))).abs() < 1e-14);
        assert_eq!(gamma_p(3.0, 0.0), 0.0);
    }

    #[test]
    fn solve_small_system() {
        let a = [2.0, 1.0, 1.0, 3.0];
        let x = solve(&a, &[3.0, 5.0], 2).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14);
        assert!((x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = [1.0, 2.0, 2.0, 4.0];
        assert!(solve(&a, &[1.0, 1.0], 2).is_none());
        assert_eq!(rank(&a, 2, 2, 1e-12), 1);
    }

    #[test]
    fn inverse_round_trip() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let inv = invert(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wrapping() {
        assert!((wrap_positive(-10.0, 180.0) - 170.0).abs() < 1e-12);
        assert!((wrap_centered(179.0, 180.0) + 1.0).abs() < 1e-12);
        assert!((wrap_centered(91.0, 180.0) + 89.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_integrates_cubic_exactly() {
        let v = simpson(|x| x * x * x - x, 0.0, 2.0, 10);
        assert!((v - 2.0).abs() < 1e-12);
    }
}
