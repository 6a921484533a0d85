//! Dense Hermitian evolution for random-matrix steps.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative tolerance on `|H - H^dagger|` accepted as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// `max |H_jk - conj(H_kj)|`.
pub fn hermitian_deviation(h: &DMatrix<Complex64>) -> f64 {
    let n = h.nrows();
    let mut dev = 0.0f64;
    for j in 0..n {
        for k in j..n {
            dev = dev.max((h[(j, k)] - h[(k, j)].conj()).norm());
        }
    }
    dev
}

fn check_hermitian(h: &DMatrix<Complex64>) -> Result<()> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch { expected: h.nrows(), got: h.ncols() });
    }
    let scale = h.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    let deviation = hermitian_deviation(h);
    if deviation > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(())
}

/// `exp(-i H dt / hbar) phi` through the eigendecomposition of `H`.
pub fn evolve_dense(
    phi: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    dt: f64,
    hbar: f64,
) -> Result<DVector<Complex64>> {
    check_hermitian(h)?;
    if phi.len() != h.nrows() {
        return Err(Error::DimensionMismatch { expected: h.nrows(), got: phi.len() });
    }
    let eig = h.clone().symmetric_eigen();
    let mut coeffs = eig.eigenvectors.ad_mul(phi);
    for (c, lambda) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
        *c *= Complex64::from_polar(1.0, -lambda * dt / hbar);
    }
    Ok(&eig.eigenvectors * coeffs)
}

/// `exp(-i H dt / hbar) phi` by a truncated Taylor series applied to the
/// vector. Substeps keep `|H|_1 |dt| / hbar <= 1` per substep, so no term
/// exceeds the input norm; each series stops once a term falls below
/// `1e-17 |phi|`. Costs `O(N^2)` per term instead of one `O(N^3)` eigensolve.
pub fn evolve_taylor(
    phi: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    dt: f64,
    hbar: f64,
) -> Result<DVector<Complex64>> {
    check_hermitian(h)?;
    if phi.len() != h.nrows() {
        return Err(Error::DimensionMismatch { expected: h.nrows(), got: phi.len() });
    }
    let one_norm = (0..h.ncols()).map(|k| h.column(k).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0f64, f64::max);
    let x = one_norm * dt.abs() / hbar;
    let substeps = x.ceil().max(1.0) as usize;
    let factor = Complex64::new(0.0, -dt / (hbar * substeps as f64));
    let floor = 1e-17 * phi.norm();
    let mut out = phi.clone();
    for _ in 0..substeps {
        let mut term = out.clone();
        let mut k = 1.0;
        loop {
            term = (h * &term) * (factor / k);
            out += &term;
            if term.norm() <= floor || k > 60.0 {
                break;
            }
            k += 1.0;
        }
    }
    Ok(out)
}
