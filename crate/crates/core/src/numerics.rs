//! Dense Hermitian linear algebra and scalar root bracketing.
//!
//! Both block solvers spend almost all of their time evaluating
//! `(H + s·I)† b` for a fixed Hermitian `H` and a varying scalar shift `s`.
//! [`HermitianEig`] factors `H` once so every shifted solve is two
//! matrix-vector products and a diagonal scaling.

use nalgebra::linalg::SymmetricEigen;
use nalgebra::DVector;
use num_complex::Complex64;

use crate::{CMat, CVec, Error, Result};

/// Eigenvalues below this fraction of the largest one are treated as zero by
/// the pseudo-inverse.
pub const RANK_TOL: f64 = 1e-12;

/// Negative eigenvalues down to `-PSD_TOL·‖H‖` are accepted as round-off when
/// the caller asserts positive semidefiniteness.
pub const PSD_TOL: f64 = 1e-8;

/// Maximum number of bracket doublings attempted by [`bisect`].
pub const MAX_EXPANSIONS: usize = 60;

const MAX_BISECTIONS: usize = 400;

/// `H = Q·diag(λ)·Qᴴ` with eigenvalues sorted in descending order.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: CMat,
}

impl HermitianEig {
    pub fn new(h: &CMat) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::InvalidInput(format!(
                "hermitian_eig needs a square matrix, got {}x{}",
                h.nrows(),
                h.ncols()
            )));
        }
        if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let n = h.nrows();
        if n == 0 {
            return Ok(Self {
                eigenvalues: DVector::zeros(0),
                eigenvectors: CMat::zeros(0, 0),
            });
        }
        let sym = (h + h.adjoint()).scale(0.5);
        let eig = SymmetricEigen::new(sym);

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut eigenvectors = CMat::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    /// Like [`HermitianEig::new`] but rejects matrices with an eigenvalue
    /// below `-PSD_TOL·‖H‖_F`.
    pub fn new_psd(h: &CMat) -> Result<Self> {
        let eig = Self::new(h)?;
        let tolerance = PSD_TOL * h.norm();
        if let Some(&min) = eig.eigenvalues.as_slice().last() {
            if min < -tolerance {
                return Err(Error::NotPositiveSemidefinite {
                    min_eigenvalue: min,
                    tolerance,
                });
            }
        }
        Ok(eig)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.as_slice().first().copied().unwrap_or(0.0)
    }

    /// Coordinates of `b` in the eigenbasis, `Qᴴ b`.
    pub fn project(&self, b: &CVec) -> CVec {
        self.eigenvectors.ad_mul(b)
    }

    /// `Q (Λ + shift·I)† y` for `y` already expressed in the eigenbasis.
    pub fn solve_projected(&self, y: &CVec, shift: f64) -> CVec {
        let cutoff = RANK_TOL * (self.max_eigenvalue().max(0.0) + shift);
        let scaled = DVector::from_iterator(
            y.len(),
            self.eigenvalues.iter().zip(y.iter()).map(|(&l, &yi)| {
                let d = l + shift;
                if d <= cutoff {
                    Complex64::new(0.0, 0.0)
                } else {
                    yi / d
                }
            }),
        );
        &self.eigenvectors * scaled
    }

    /// `(H + shift·I)† b`.
    pub fn solve_shifted(&self, b: &CVec, shift: f64) -> CVec {
        self.solve_projected(&self.project(b), shift)
    }

    pub fn reconstruct(&self) -> CMat {
        let n = self.dim();
        let mut scaled = self.eigenvectors.clone();
        for j in 0..n {
            let l = self.eigenvalues[j];
            scaled.column_mut(j).scale_mut(l);
        }
        scaled * self.eigenvectors.adjoint()
    }
}

pub fn hermitian_eig(h: &CMat) -> Result<HermitianEig> {
    HermitianEig::new(h)
}

/// Largest eigenvalue of a Hermitian PSD matrix.
pub fn max_eigenvalue(h: &CMat) -> Result<f64> {
    Ok(HermitianEig::new_psd(h)?.max_eigenvalue().max(0.0))
}

/// `(H + shift·I)† b` through an eigendecomposition of `H`.
pub fn psd_solve(h: &CMat, b: &CVec, shift: f64) -> Result<CVec> {
    if shift < 0.0 || !shift.is_finite() {
        return Err(Error::InvalidInput(format!(
            "shift must be finite and >= 0, got {shift}"
        )));
    }
    if b.len() != h.nrows() {
        return Err(Error::InvalidInput(format!(
            "rhs length {} does not match matrix order {}",
            b.len(),
            h.nrows()
        )));
    }
    Ok(HermitianEig::new_psd(h)?.solve_shifted(b, shift))
}

/// Finds `x` in `[lo, hi]` with `f(x) ≈ target` for a non-increasing `f`.
///
/// Requires `f(lo) >= target`. When `f(hi) > target` the upper end is doubled
/// (the old `hi` becoming the new `lo`) up to [`MAX_EXPANSIONS`] times. The
/// returned point is the final upper end, so `f(x) <= target` always holds,
/// and the bracket width at termination is at most `tol` (or has reached
/// floating-point resolution).
pub fn bisect<F>(mut f: F, target: f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(lo.is_finite() && hi.is_finite() && tol > 0.0) || hi < lo {
        return Err(Error::InvalidInput(format!(
            "bisect needs finite lo <= hi and tol > 0 (lo={lo}, hi={hi}, tol={tol})"
        )));
    }
    let f_lo = f(lo);
    if f_lo < target {
        return Err(Error::BracketFailure {
            target,
            f_lo,
            f_hi: f_lo,
            hi: lo,
        });
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let mut f_hi = f(hi);
    let mut expansions = 0;
    while f_hi > target {
        if expansions == MAX_EXPANSIONS {
            return Err(Error::BracketFailure { target, f_lo, f_hi, hi });
        }
        lo = hi;
        hi *= 2.0;
        f_hi = f(hi);
        expansions += 1;
    }
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
