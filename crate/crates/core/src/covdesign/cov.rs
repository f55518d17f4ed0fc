use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{eig_hermitian, CMatrix, HermitianMatrix, PSD_TOLERANCE};

/// Perturbation covariance across the K users.
///
/// Correlated covariances are zero-sum (`u^H R u = 0` for the all-ones `u`);
/// the uncorrelated baseline is diagonal and carries no zero-sum property.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    base: HermitianMatrix,
    zero_sum: bool,
}

impl CovMatrix {
    /// Validates PSD and `|u^H R u| <= 1e-9 trace(R)`.
    pub fn zero_sum(base: HermitianMatrix) -> Result<Self> {
        check_psd(&base)?;
        let tr = base.trace();
        let s = base.entry_sum();
        if s.abs() > 1e-9 * tr.max(0.0) + f64::MIN_POSITIVE {
            return Err(Error::InvalidInput(format!(
                "covariance is not zero-sum: entry sum {s:e} vs trace {tr:e}"
            )));
        }
        Ok(Self { base, zero_sum: true })
    }

    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        if variances.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidInput("diagonal variances must be non-negative".into()));
        }
        Ok(Self {
            base: HermitianMatrix::from_diagonal(variances),
            zero_sum: false,
        })
    }

    /// The all-zero covariance (no perturbation); trivially zero-sum.
    pub fn none(k: usize) -> Self {
        Self {
            base: HermitianMatrix::zeros(k),
            zero_sum: true,
        }
    }

    /// Zero-sum covariance with every variance equal to `a`:
    /// `R = a K/(K-1) I - a/(K-1) J`, spectrum `{a K/(K-1)} x (K-1)` and `0`.
    pub fn equicorrelated(k: usize, a: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::SingleUserDegenerate);
        }
        if !(a >= 0.0) {
            return Err(Error::InvalidInput("variance must be non-negative".into()));
        }
        let off = Complex64::new(-a / (k - 1) as f64, 0.0);
        let mut m = CMatrix::from_element(k, k, off);
        for i in 0..k {
            m[(i, i)] = Complex64::new(a, 0.0);
        }
        Self::zero_sum(HermitianMatrix::new(m)?)
    }

    pub fn is_zero_sum(&self) -> bool {
        self.zero_sum
    }

    pub fn as_hermitian(&self) -> &HermitianMatrix {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn diagonal_entries(&self) -> Vec<f64> {
        self.base.diagonal()
    }

    /// `||R u||` for the all-ones `u`.
    pub fn null_residual(&self) -> f64 {
        let m = self.base.as_matrix();
        (0..self.dim())
            .map(|i| m.row(i).iter().sum::<Complex64>().norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

fn check_psd(m: &HermitianMatrix) -> Result<()> {
    let eig = eig_hermitian(m)?;
    let max = eig.max_value().max(0.0);
    if eig.min_value() < -PSD_TOLERANCE * max - f64::MIN_POSITIVE {
        return Err(Error::NotPsd {
            min_eigenvalue: eig.min_value(),
        });
    }
    Ok(())
}

/// Orthonormal basis of the complement of the all-ones vector (Helmert
/// contrasts): column `j` is `(1, .., 1, -j, 0, .., 0) / sqrt(j (j + 1))`.
///
/// Every PSD `R` with `u^H R u = 0` has `R u = 0` and can be written
/// `R = V S V^H` with `S` PSD of size `K - 1`.
pub fn reduce_zero_sum(k: usize) -> Result<CMatrix> {
    if k < 2 {
        return Err(Error::SingleUserDegenerate);
    }
    let mut v = CMatrix::zeros(k, k - 1);
    for j in 1..k {
        let c = 1.0 / ((j * (j + 1)) as f64).sqrt();
        for i in 0..j {
            v[(i, j - 1)] = Complex64::new(c, 0.0);
        }
        v[(j, j - 1)] = Complex64::new(-(j as f64) * c, 0.0);
    }
    Ok(v)
}

/// `V S V^H` as a Hermitian matrix.
pub fn lift(v: &CMatrix, s: &CMatrix) -> HermitianMatrix {
    HermitianMatrix::new(v * s * v.adjoint()).expect("lift of finite matrices is finite")
}
