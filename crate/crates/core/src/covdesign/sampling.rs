use num_complex::Complex64;

use super::p1::RoundPlan;
use crate::error::Result;
use crate::numerics::{psd_sqrt, CMatrix, RngStream};

/// `N = R^{1/2} W` with `W` a `K x d` matrix of `CN(0, 1)` entries.
///
/// For zero-sum plans the columns are re-centred afterwards, which only
/// removes the rounding left by the eigen-decomposition.
pub fn sample_perturbations(plan: &RoundPlan, d: usize, rng: &mut RngStream) -> Result<CMatrix> {
    let k = plan.users();
    let r = plan.covariance.as_hermitian();
    if r.frobenius_norm() == 0.0 {
        return Ok(CMatrix::zeros(k, d));
    }
    let root = psd_sqrt(r)?;
    let w = CMatrix::from_fn(k, d, |_, _| rng.complex_gaussian(1.0));
    let mut n = root.as_matrix() * w;
    if plan.covariance.is_zero_sum() {
        let scale = Complex64::new(1.0 / k as f64, 0.0);
        for mut col in n.column_iter_mut() {
            let mean = col.iter().sum::<Complex64>() * scale;
            col.add_scalar_mut(-mean);
        }
    }
    Ok(n)
}
