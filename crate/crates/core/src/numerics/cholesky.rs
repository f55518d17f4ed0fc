use num_complex::Complex64;

use super::hermitian::CMatrix;

/// `A = L L^H` for Hermitian positive definite `A`.
///
/// Pivots are checked on their real part, so an indefinite input is reported
/// instead of silently producing complex square roots.
#[derive(Debug, Clone)]
pub struct HermitianCholesky {
    l: CMatrix,
}

impl HermitianCholesky {
    /// `None` unless every pivot is strictly positive and finite.
    pub fn new(a: &CMatrix) -> Option<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return None;
        }
        let mut l = CMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[(j, j)] = Complex64::new(djj, 0.0);
            for i in j + 1..n {
                let mut v = a[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = v / djj;
            }
        }
        Some(Self { l })
    }

    pub fn l(&self) -> &CMatrix {
        &self.l
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.l.nrows()).map(|i| self.l[(i, i)].re.ln()).sum::<f64>()
    }

    /// Solves `A X = B`.
    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        let n = self.l.nrows();
        let mut x = b.clone();
        for c in 0..x.ncols() {
            // forward: L y = b
            for i in 0..n {
                let mut v = x[(i, c)];
                for k in 0..i {
                    v -= self.l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = v / self.l[(i, i)];
            }
            // backward: L^H x = y
            for i in (0..n).rev() {
                let mut v = x[(i, c)];
                for k in i + 1..n {
                    v -= self.l[(k, i)].conj() * x[(k, c)];
                }
                x[(i, c)] = v / self.l[(i, i)];
            }
        }
        x
    }

    pub fn inverse(&self) -> CMatrix {
        let n = self.l.nrows();
        self.solve(&CMatrix::identity(n, n))
    }
}
