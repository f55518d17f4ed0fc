use num_complex::Complex64;

use super::hermitian::{CMatrix, HermitianMatrix};
use crate::error::{Error, Result};

/// Relative eigenvalue tolerance for positive semidefiniteness: eigenvalues in
/// `[-PSD_TOLERANCE * lambda_max, 0)` are treated as zero, anything more
/// negative is rejected.
pub const PSD_TOLERANCE: f64 = 1e-10;

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition `m = V diag(values) V^H` with eigenvalues sorted in
/// descending order and the columns of `vectors` orthonormal.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn max_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn min_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Rebuilds `V diag(f(lambda)) V^H`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> HermitianMatrix {
        let n = self.values.len();
        let mut out = CMatrix::zeros(n, n);
        for (k, &lambda) in self.values.iter().enumerate() {
            let w = f(lambda);
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let vi = self.vectors[(i, k)] * w;
                for j in 0..n {
                    out[(i, j)] += vi * self.vectors[(j, k)].conj();
                }
            }
        }
        HermitianMatrix::new(out).expect("reconstruction of finite eigenpairs is finite")
    }
}

/// Cyclic complex Jacobi eigenvalue iteration.
///
/// Each pivot `(p, q)` is first rotated to a real off-diagonal entry by a
/// diagonal phase and then annihilated with a real Givens rotation.
pub fn eig_hermitian(m: &HermitianMatrix) -> Result<HermitianEigen> {
    let n = m.dim();
    let mut a = m.as_matrix().clone();
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidInput("non-finite matrix entry".into()));
    }
    let mut v = CMatrix::identity(n, n);
    let fro = m.frobenius_norm();

    if fro > 0.0 {
        for _ in 0..MAX_SWEEPS {
            if off_diagonal_norm(&a) <= 1e-15 * fro {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    rotate(&mut a, &mut v, p, q, fro);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));

    let values = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    Ok(HermitianEigen { values, vectors })
}

fn off_diagonal_norm(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize, fro: f64) {
    let apq = a[(p, q)];
    let r = apq.norm();
    if r <= 1e-18 * fro {
        return;
    }
    let phase = apq / r;
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (2.0 * r);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // U = diag(1, conj(phase)) * [[c, s], [-s, c]] restricted to (p, q).
    let u_pp = Complex64::new(c, 0.0);
    let u_pq = Complex64::new(s, 0.0);
    let u_qp = phase.conj() * (-s);
    let u_qq = phase.conj() * c;

    let n = a.nrows();
    for i in 0..n {
        let aip = a[(i, p)];
        let aiq = a[(i, q)];
        a[(i, p)] = aip * u_pp + aiq * u_qp;
        a[(i, q)] = aip * u_pq + aiq * u_qq;
        let vip = v[(i, p)];
        let viq = v[(i, q)];
        v[(i, p)] = vip * u_pp + viq * u_qp;
        v[(i, q)] = vip * u_pq + viq * u_qq;
    }
    for j in 0..n {
        let apj = a[(p, j)];
        let aqj = a[(q, j)];
        a[(p, j)] = u_pp.conj() * apj + u_qp.conj() * aqj;
        a[(q, j)] = u_pq.conj() * apj + u_qq.conj() * aqj;
    }
    a[(p, q)] = Complex64::new(0.0, 0.0);
    a[(q, p)] = Complex64::new(0.0, 0.0);
    a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);
}

fn check_psd(eig: &HermitianEigen) -> Result<()> {
    let max = eig.max_value().max(0.0);
    let min = eig.min_value();
    if min < -PSD_TOLERANCE * max || (max == 0.0 && min < 0.0) {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(())
}

/// Principal square root of a PSD matrix; tiny negative eigenvalues are clamped.
pub fn psd_sqrt(m: &HermitianMatrix) -> Result<HermitianMatrix> {
    let eig = eig_hermitian(m)?;
    check_psd(&eig)?;
    Ok(eig.reconstruct_with(|l| l.max(0.0).sqrt()))
}

/// Frobenius-nearest PSD matrix (negative eigenvalues set to zero).
pub fn psd_project(m: &HermitianMatrix) -> Result<HermitianMatrix> {
    let eig = eig_hermitian(m)?;
    Ok(eig.reconstruct_with(|l| l.max(0.0)))
}
