//! Closed-form exponentials of 2×2 Hermitian generators.
//!
//! A Hermitian generator is written `s·I + b·σ` with real scalar `s` and real
//! Bloch vector `b`. Its propagator over a time `τ` is
//!
//! ```text
//! exp(-iτ(s·I + b·σ)) = e^{-iτs} (cos(τ|b|) I − i sin(τ|b|) b̂·σ)
//! ```
//!
//! which is unitary to rounding for every `τ`, so no renormalisation is ever
//! needed.

use num_complex::Complex64;

pub type Amplitudes = [Complex64; 2];
pub type Mat2 = [[Complex64; 2]; 2];

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `sin(x)/x`, accurate through the removable singularity.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// `(cos x − sinc x) / x²`, the second-order coefficient of the derivative of
/// `sin(τ|b|)/|b|`. Tends to −1/3 at the origin.
fn sinc_slope(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        let x2 = x * x;
        -1.0 / 3.0 + x2 / 30.0 - x2 * x2 / 840.0
    } else {
        (x.cos() - sinc(x)) / (x * x)
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `v·σ` as a matrix.
pub fn pauli_dot(v: [f64; 3]) -> Mat2 {
    [
        [Complex64::new(v[2], 0.0), Complex64::new(v[0], -v[1])],
        [Complex64::new(v[0], v[1]), Complex64::new(-v[2], 0.0)],
    ]
}

/// `exp(-iτ(s·I + b·σ))`.
pub fn exp_matrix(scalar: f64, b: [f64; 3], tau: f64) -> Mat2 {
    let norm = dot(b, b).sqrt();
    let x = tau * norm;
    let c = x.cos();
    let s = tau * sinc(x);
    let phase = Complex64::from_polar(1.0, -tau * scalar);
    [
        [
            phase * Complex64::new(c, -s * b[2]),
            phase * Complex64::new(-s * b[1], -s * b[0]),
        ],
        [
            phase * Complex64::new(s * b[1], -s * b[0]),
            phase * Complex64::new(c, s * b[2]),
        ],
    ]
}

/// Applies `exp(-iτ b·σ)` to a state vector without forming the matrix.
#[inline]
pub fn apply_exp(b: [f64; 3], tau: f64, psi: Amplitudes) -> Amplitudes {
    let x = tau * dot(b, b).sqrt();
    let c = x.cos();
    let s = tau * sinc(x);
    let u00 = Complex64::new(c, -s * b[2]);
    let u11 = Complex64::new(c, s * b[2]);
    let u01 = Complex64::new(-s * b[1], -s * b[0]);
    let u10 = Complex64::new(s * b[1], -s * b[0]);
    [u00 * psi[0] + u01 * psi[1], u10 * psi[0] + u11 * psi[1]]
}

/// Applies the inverse `exp(+iτ b·σ)`.
#[inline]
pub fn apply_exp_adjoint(b: [f64; 3], tau: f64, psi: Amplitudes) -> Amplitudes {
    apply_exp(b, -tau, psi)
}

/// Derivative of `exp(-iτ b·σ)` along the direction `db` of the Bloch vector.
pub fn exp_derivative(b: [f64; 3], db: [f64; 3], tau: f64) -> Mat2 {
    let norm = dot(b, b).sqrt();
    let x = tau * norm;
    let bdb = dot(b, db);
    let s = tau * sinc(x);
    // d cos(τ|b|) = −τ² sinc(x) (b·db);  d[sin(τ|b|)/|b|] = τ³ g(x) (b·db)
    let dc = -tau * tau * sinc(x) * bdb;
    let ds = tau * tau * tau * sinc_slope(x) * bdb;
    let coeff = [ds * b[0] + s * db[0], ds * b[1] + s * db[1], ds * b[2] + s * db[2]];
    let sig = pauli_dot(coeff);
    [
        [Complex64::new(dc, 0.0) - I * sig[0][0], -I * sig[0][1]],
        [-I * sig[1][0], Complex64::new(dc, 0.0) - I * sig[1][1]],
    ]
}

pub fn mat_vec(m: &Mat2, v: Amplitudes) -> Amplitudes {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn adjoint(m: &Mat2) -> Mat2 {
    [[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn max_diff(a: &Mat2, b: &Mat2) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                m = m.max((a[i][j] - b[i][j]).norm());
            }
        }
        m
    }

    /// Taylor-series exponential of -iτ(b·σ), summed to convergence.
    fn taylor_exp(b: [f64; 3], tau: f64) -> Mat2 {
        let h = pauli_dot(b);
        let gen: Mat2 = [
            [-I * tau * h[0][0], -I * tau * h[0][1]],
            [-I * tau * h[1][0], -I * tau * h[1][1]],
        ];
        let one = Complex64::new(1.0, 0.0);
        let mut term: Mat2 = [[one, ZERO], [ZERO, one]];
        let mut sum = term;
        for k in 1..60 {
            term = mat_mul(&term, &gen);
            let inv = 1.0 / k as f64;
            for row in term.iter_mut() {
                for c in row.iter_mut() {
                    *c *= inv;
                }
            }
            for i in 0..2 {
                for j in 0..2 {
                    sum[i][j] += term[i][j];
                }
            }
        }
        sum
    }

    #[test]
    fn closed_form_matches_taylor_series() {
        for &(b, tau) in &[
            ([0.3, -0.2, 0.5], 0.7),
            ([1.0, 0.0, 0.0], std::f64::consts::PI),
            ([0.0, 0.0, 0.0], 2.0),
            ([1e-9, 2e-9, -1e-9], 0.1),
            ([-1.3, 0.4, 2.2], 1.9),
        ] {
            let closed = exp_matrix(0.0, b, tau);
            assert!(max_diff(&closed, &taylor_exp(b, tau)) < 1e-12);
        }
    }

    #[test]
    fn exponential_is_unitary() {
        let u = exp_matrix(0.4, [2.0, -1.0, 0.3], 17.3);
        let p = mat_mul(&adjoint(&u), &u);
        assert_abs_diff_eq!(p[0][0].re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p[1][1].re, 1.0, epsilon = 1e-14);
        assert!(p[0][1].norm() < 1e-14);
    }

    #[test]
    fn apply_matches_matrix() {
        let b = [0.2, 0.9, -0.4];
        let psi = [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)];
        let direct = apply_exp(b, 0.37, psi);
        let via = mat_vec(&exp_matrix(0.0, b, 0.37), psi);
        assert!((direct[0] - via[0]).norm() < 1e-15);
        assert!((direct[1] - via[1]).norm() < 1e-15);
        let back = apply_exp_adjoint(b, 0.37, direct);
        assert!((back[0] - psi[0]).norm() < 1e-15);
    }

    #[test]
    fn derivative_matches_central_differences() {
        for &(b, db, tau) in &[
            ([0.3, 0.0, 0.5], [1.0, 0.0, 0.7], 0.05),
            ([1.5, 0.0, -0.2], [1.0, 0.0, 0.7], 0.8),
            ([0.0, 0.0, 0.0], [1.0, 0.0, 0.7], 0.3),
            ([2e-4, 0.0, 1e-4], [0.3, 0.1, 0.2], 1.1),
        ] {
            let eps = 1e-6;
            let plus = exp_matrix(0.0, [b[0] + eps * db[0], b[1] + eps * db[1], b[2] + eps * db[2]], tau);
            let minus = exp_matrix(0.0, [b[0] - eps * db[0], b[1] - eps * db[1], b[2] - eps * db[2]], tau);
            let analytic = exp_derivative(b, db, tau);
            for i in 0..2 {
                for j in 0..2 {
                    let fd = (plus[i][j] - minus[i][j]) / (2.0 * eps);
                    assert!((fd - analytic[i][j]).norm() < 1e-8, "{b:?} {i}{j}");
                }
            }
        }
    }
}
