//! Small dense complex linear-algebra helpers.
//!
//! The spectral quantities here (largest singular value and its singular
//! vectors) are computed by repeated squaring of the normalized Gram matrix
//! followed by a short power-iteration polish. At the array sizes this crate
//! works with (tens of elements) that is both fast and insensitive to small
//! spectral gaps.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

const MAX_SQUARINGS: usize = 48;
const POLISH_STEPS: usize = 4;

/// Squared Frobenius norm.
pub fn fro_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm_sq(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm1(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm()).sum()
}

/// Inner product `a^H b`.
pub fn dot_h(a: &CVec, b: &CVec) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Largest singular value together with unit-norm left and right singular
/// vectors: `A v = sigma u`, `A^H u = sigma v`.
///
/// Returns `None` for an empty or all-zero matrix.
pub fn top_singular(a: &CMat) -> Option<(f64, CVec, CVec)> {
    if a.nrows() == 0 || a.ncols() == 0 || fro_sq(a) == 0.0 {
        return None;
    }
    if a.ncols() <= a.nrows() {
        let gram = a.adjoint() * a;
        let v = top_eigvec(&gram);
        let av = a * &v;
        let sigma = av.norm();
        if sigma == 0.0 {
            return None;
        }
        Some((sigma, av / Complex64::from(sigma), v))
    } else {
        let gram = a * a.adjoint();
        let u = top_eigvec(&gram);
        let ahu = a.adjoint() * &u;
        let sigma = ahu.norm();
        if sigma == 0.0 {
            return None;
        }
        Some((sigma, u, ahu / Complex64::from(sigma)))
    }
}

/// Spectral norm (largest singular value); zero for a zero matrix.
pub fn spectral_norm(a: &CMat) -> f64 {
    top_singular(a).map_or(0.0, |(s, _, _)| s)
}

/// Dominant eigenvector of a Hermitian positive semidefinite matrix.
fn top_eigvec(g: &CMat) -> CVec {
    let n = g.nrows();
    let trace = |m: &CMat| (0..n).map(|i| m[(i, i)].re).sum::<f64>();

    let mut p = g.clone();
    let t = trace(&p);
    p /= Complex64::from(t);
    for _ in 0..MAX_SQUARINGS {
        let mut next = &p * &p;
        // keep it exactly Hermitian so rounding cannot drift the spectrum
        next = (&next + next.adjoint()) * Complex64::from(0.5);
        let t = trace(&next);
        if !(t > 0.0) {
            break;
        }
        next /= Complex64::from(t);
        let purity = fro_sq(&next);
        p = next;
        if 1.0 - purity < 1e-15 {
            break;
        }
    }

    // the column with the largest norm has the largest overlap with the top eigenspace
    let best = (0..n)
        .max_by(|&i, &j| {
            let ni = p.column(i).norm_squared();
            let nj = p.column(j).norm_squared();
            ni.partial_cmp(&nj).unwrap()
        })
        .unwrap_or(0);
    let mut x: CVec = p.column(best).into_owned();
    let nx = x.norm();
    if nx == 0.0 {
        x = CVec::from_element(n, Complex64::from(1.0 / (n as f64).sqrt()));
    } else {
        x /= Complex64::from(nx);
    }
    for _ in 0..POLISH_STEPS {
        let y = g * &x;
        let ny = y.norm();
        if ny == 0.0 {
            break;
        }
        x = y / Complex64::from(ny);
    }
    x
}
