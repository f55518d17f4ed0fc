//! Over-the-air uplink: real gradients are packed into complex symbols,
//! pre-scaled by `sqrt(eta) / h_k`, superposed by the channel and de-scaled at
//! the server. The same transmissions reach the adversary through `g_k`.

use num_complex::Complex64;

use crate::channel::H_MIN;
use crate::covdesign::RoundPlan;
use crate::error::{Error, Result};
use crate::numerics::{CVector, RngStream};

/// Relative slack on the per-user power budget.
pub const POWER_TOLERANCE: f64 = 1e-6;

/// Number of complex symbols carrying a real vector of length `d`.
pub fn complex_dim(d: usize) -> usize {
    d.div_ceil(2)
}

/// Entry `i` is `g_i + j g_{i + d_c}`; an odd `d` is padded with a zero.
pub fn split_to_complex(g: &[f64]) -> CVector {
    let half = complex_dim(g.len());
    CVector::from_fn(half, |i, _| {
        let im = g.get(i + half).copied().unwrap_or(0.0);
        Complex64::new(g[i], im)
    })
}

/// Inverse of [`split_to_complex`], dropping the padding.
pub fn de_split(z: &CVector, d: usize) -> Result<Vec<f64>> {
    let half = z.len();
    if complex_dim(d) != half {
        return Err(Error::InvalidInput(format!(
            "{half} symbols cannot carry a vector of length {d}"
        )));
    }
    let mut out: Vec<f64> = z.iter().map(|c| c.re).collect();
    out.extend(z.iter().map(|c| c.im));
    out.truncate(d);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TxSignal {
    pub user: usize,
    /// `x_k = alpha_k (split(grad) + n_k)`.
    pub symbols: CVector,
    /// `alpha_k n_k`, kept apart so receivers can expose the noise they see.
    pub perturbation: CVector,
    /// `eta/|h_k|^2 (||grad||^2 + ||n_k||^2)` for the realized draw, cross term left out.
    pub power_used: f64,
    /// `eta/|h_k|^2 (||grad||^2 + d_c R_kk)`, the quantity the plan bounds.
    pub expected_power: f64,
}

/// Transmit signal of user `user` (zero-based).
///
/// The power check uses the expectation over the perturbation with the actual
/// gradient norm: a single draw of `||n_k||^2` may exceed its mean.
pub fn build_tx(plan: &RoundPlan, user: usize, gradient: &[f64], perturbation: &CVector, h_k: Complex64) -> Result<TxSignal> {
    let k = plan.users();
    if user >= k {
        return Err(Error::IndexOutOfRange { index: user + 1, len: k });
    }
    if h_k.norm() < H_MIN {
        return Err(Error::ChannelOutage {
            user,
            magnitude: h_k.norm(),
        });
    }
    let s = split_to_complex(gradient);
    if s.len() != perturbation.len() {
        return Err(Error::InvalidInput(format!(
            "gradient needs {} symbols, perturbation has {}",
            s.len(),
            perturbation.len()
        )));
    }
    let alpha = plan.eta.sqrt() / h_k;
    let scale = plan.eta / h_k.norm_sqr();
    let grad2: f64 = gradient.iter().map(|x| x * x).sum();
    let pert2 = perturbation.norm_squared();
    let r_kk = plan.covariance.as_hermitian().get(user, user).re;
    let expected_power = scale * (grad2 + s.len() as f64 * r_kk);
    if expected_power > plan.power * (1.0 + POWER_TOLERANCE) {
        return Err(Error::PowerViolation {
            user,
            power: expected_power,
            budget: plan.power,
        });
    }
    Ok(TxSignal {
        user,
        symbols: (s + perturbation) * alpha,
        perturbation: perturbation * alpha,
        power_used: scale * (grad2 + pert2),
        expected_power,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Receiver {
    Server,
    Adversary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RxSignal {
    pub receiver: Receiver,
    pub symbols: CVector,
    pub noise_variance: f64,
    /// Realized receiver noise `z`.
    pub noise: CVector,
    /// `sum_k gain_k alpha_k n_k`: what the perturbations add at this receiver.
    pub perturbation: CVector,
}

impl RxSignal {
    /// Everything other than the superposed gradients.
    pub fn effective_noise(&self) -> CVector {
        &self.perturbation + &self.noise
    }
}

fn superpose(receiver: Receiver, signals: &[TxSignal], gains: &CVector, noise: CVector, noise_variance: f64) -> Result<RxSignal> {
    if signals.len() != gains.len() {
        return Err(Error::InvalidInput(format!(
            "{} signals for {} users",
            signals.len(),
            gains.len()
        )));
    }
    for (k, s) in signals.iter().enumerate() {
        if s.user != k {
            return Err(Error::InvalidInput(format!("signal {k} belongs to user {}", s.user)));
        }
        if s.symbols.len() != noise.len() {
            return Err(Error::InvalidInput("signal lengths differ".into()));
        }
    }
    let mut symbols = noise.clone();
    let mut perturbation = CVector::zeros(noise.len());
    for (s, gain) in signals.iter().zip(gains.iter()) {
        symbols.axpy(*gain, &s.symbols, Complex64::new(1.0, 0.0));
        perturbation.axpy(*gain, &s.perturbation, Complex64::new(1.0, 0.0));
    }
    Ok(RxSignal {
        receiver,
        symbols,
        noise_variance,
        noise,
        perturbation,
    })
}

fn symbols_of(signals: &[TxSignal]) -> usize {
    signals.first().map_or(0, |s| s.symbols.len())
}

/// `y = sum_k h_k x_k + z`, `z ~ CN(0, n0 I)`.
pub fn server_receive(signals: &[TxSignal], h: &CVector, n0: f64, rng: &mut RngStream) -> Result<RxSignal> {
    let z = rng.sample_complex_gaussian(symbols_of(signals), n0);
    superpose(Receiver::Server, signals, h, z, n0)
}

/// [`server_receive`] with a given noise realization.
pub fn server_receive_with_noise(signals: &[TxSignal], h: &CVector, z: CVector, n0: f64) -> Result<RxSignal> {
    superpose(Receiver::Server, signals, h, z, n0)
}

/// `y_a = sum_k g_k x_k + z_a`, `z_a ~ CN(0, n_a I)`.
pub fn adversary_receive(signals: &[TxSignal], g: &CVector, n_a: f64, rng: &mut RngStream) -> Result<RxSignal> {
    let z = rng.sample_complex_gaussian(symbols_of(signals), n_a);
    superpose(Receiver::Adversary, signals, g, z, n_a)
}

/// [`adversary_receive`] with a given noise realization.
pub fn adversary_receive_with_noise(signals: &[TxSignal], g: &CVector, z: CVector, n_a: f64) -> Result<RxSignal> {
    superpose(Receiver::Adversary, signals, g, z, n_a)
}

/// `de_split(y) / (K sqrt(eta))`.
pub fn estimate_global_gradient(rx: &RxSignal, eta: f64, k: usize, d: usize) -> Result<Vec<f64>> {
    if rx.receiver != Receiver::Server {
        return Err(Error::InvalidInput("gradient estimate needs the server signal".into()));
    }
    if !(eta > 0.0) || k == 0 {
        return Err(Error::InvalidInput(format!("eta = {eta}, K = {k}")));
    }
    let scale = 1.0 / (k as f64 * eta.sqrt());
    Ok(de_split(&rx.symbols, d)?.into_iter().map(|x| x * scale).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covdesign::{lift, reduce_zero_sum, sample_perturbations, CovMatrix};
    use crate::numerics::{CMatrix, HermitianMatrix};

    fn plan(cov: CovMatrix, eta: f64, symbols: usize) -> RoundPlan {
        // budget checks are exercised separately
        let mut p = RoundPlan::unperturbed(cov.dim(), 1.0 / eta, 1e9, symbols);
        p.covariance = cov;
        p
    }

    fn random_zero_sum(k: usize, rng: &mut RngStream) -> CovMatrix {
        let v = reduce_zero_sum(k).unwrap();
        let a = CMatrix::from_fn(k - 1, k - 1, |_, _| rng.complex_gaussian(1.0));
        CovMatrix::zero_sum(lift(&v, &(&a * a.adjoint()))).unwrap()
    }

    fn gradients(k: usize, d: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
        (0..k).map(|_| (0..d).map(|_| rng.standard_normal()).collect()).collect()
    }

    fn transmit(p: &RoundPlan, grads: &[Vec<f64>], n: &CMatrix, h: &CVector) -> Vec<TxSignal> {
        grads
            .iter()
            .enumerate()
            .map(|(k, g)| build_tx(p, k, g, &n.row(k).transpose(), h[k]).unwrap())
            .collect()
    }

    fn unit_channel(k: usize) -> CVector {
        CVector::from_element(k, Complex64::new(1.0, 0.0))
    }

    #[test]
    fn split_examples() {
        let z = split_to_complex(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(z.as_slice(), &[Complex64::new(1.0, 3.0), Complex64::new(2.0, 4.0)]);
        let z = split_to_complex(&[1.0, 2.0, 3.0]);
        assert_eq!(z.as_slice(), &[Complex64::new(1.0, 3.0), Complex64::new(2.0, 0.0)]);
        assert_eq!(de_split(&z, 3).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(de_split(&z, 5).is_err());
    }

    #[test]
    fn split_round_trip() {
        let mut rng = RngStream::new(1, "split");
        for i in 0..1000 {
            let d = 1 + i % 17;
            let g: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
            assert_eq!(de_split(&split_to_complex(&g), d).unwrap(), g);
        }
    }

    #[test]
    fn unit_effective_scaling() {
        let eta: f64 = 0.3;
        let p = RoundPlan::unperturbed(1, 1.0 / eta, 10.0, 2);
        let g = [0.5, -1.0, 0.25, 2.0];
        let tx = build_tx(&p, 0, &g, &CVector::zeros(2), Complex64::new(eta.sqrt(), 0.0)).unwrap();
        let s = split_to_complex(&g);
        for (a, b) in tx.symbols.iter().zip(s.iter()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_gradient_power_is_perturbation_power() {
        let mut rng = RngStream::new(2, "pow");
        let cov = random_zero_sum(3, &mut rng);
        let p = plan(cov, 0.01, 4);
        let n = rng.sample_complex_gaussian(4, 1.0);
        let h = Complex64::new(0.6, -0.8) * 2.0;
        let tx = build_tx(&p, 1, &[0.0; 8], &n, h).unwrap();
        let expect = 0.01 * n.norm_squared() / h.norm_sqr();
        assert!((tx.symbols.norm_squared() - expect).abs() <= 1e-14 * expect);
        assert!((tx.power_used - expect).abs() <= 1e-14 * expect);
    }

    #[test]
    fn power_violation_and_outage() {
        let p = RoundPlan::unperturbed(2, 1.0, 1.0, 1);
        let big = [2.0, 0.0];
        assert!(matches!(
            build_tx(&p, 0, &big, &CVector::zeros(1), Complex64::new(1.0, 0.0)),
            Err(Error::PowerViolation { .. })
        ));
        assert!(matches!(
            build_tx(&p, 0, &[0.1, 0.0], &CVector::zeros(1), Complex64::new(1e-4, 0.0)),
            Err(Error::ChannelOutage { .. })
        ));
        assert!(build_tx(&p, 2, &[0.1, 0.0], &CVector::zeros(1), Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn expected_power_matches_monte_carlo() {
        // ||grad|| = G_k: realized power averages eta (G^2 + d_c R_kk) / |h|^2
        let mut rng = RngStream::new(3, "mc");
        let k = 4;
        let d = 10;
        let cov = random_zero_sum(k, &mut rng);
        let r_max = cov.diagonal_entries().into_iter().fold(0.0, f64::max);
        let p = plan(cov.clone(), 1.0 / (10.0 * r_max * d as f64), d / 2);
        let h = Complex64::new(0.9, 0.4);
        let mut g = vec![0.0; d];
        g[0] = 1.5;
        let draws = 10_000;
        let mut acc = vec![0.0; k];
        for _ in 0..draws {
            let n = sample_perturbations(&p, d / 2, &mut rng).unwrap();
            for (user, a) in acc.iter_mut().enumerate() {
                *a += build_tx(&p, user, &g, &n.row(user).transpose(), h).unwrap().power_used;
            }
        }
        for (user, a) in acc.iter().enumerate() {
            let mean = a / draws as f64;
            let expect = p.eta * (2.25 + (d / 2) as f64 * cov.diagonal_entries()[user]) / h.norm_sqr();
            assert!((mean - expect).abs() <= 0.02 * expect, "user {user}: {mean} vs {expect}");
        }
    }

    #[test]
    fn zero_sum_cancels_at_server() {
        let mut rng = RngStream::new(4, "cancel");
        for k in 2..=8 {
            let d = 9;
            let cov = random_zero_sum(k, &mut rng);
            let p = plan(cov, 0.05, complex_dim(d));
            let grads = gradients(k, d, &mut rng);
            let n = sample_perturbations(&p, complex_dim(d), &mut rng).unwrap();
            let h = CVector::from_fn(k, |_, _| rng.complex_gaussian(1.0) + Complex64::new(1.0, 0.0));
            let tx = transmit(&p, &grads, &n, &h);
            let rx = server_receive_with_noise(&tx, &h, CVector::zeros(complex_dim(d)), 0.0).unwrap();
            let clean: CVector = grads.iter().map(|g| split_to_complex(g)).fold(CVector::zeros(complex_dim(d)), |a, b| a + b)
                * Complex64::new(p.eta.sqrt(), 0.0);
            assert!((&rx.symbols - &clean).norm() <= 1e-9 * clean.norm());
            let est = estimate_global_gradient(&rx, p.eta, k, d).unwrap();
            for i in 0..d {
                let mean: f64 = grads.iter().map(|g| g[i]).sum::<f64>() / k as f64;
                assert!((est[i] - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
            }
        }
    }

    #[test]
    fn uncorrelated_perturbation_survives() {
        let mut rng = RngStream::new(5, "uncorr");
        let k = 5;
        let p = plan(CovMatrix::diagonal(&[0.1; 5]).unwrap(), 0.05, 3);
        let grads = gradients(k, 6, &mut rng);
        let n = sample_perturbations(&p, 3, &mut rng).unwrap();
        let h = unit_channel(k);
        let tx = transmit(&p, &grads, &n, &h);
        let rx = server_receive_with_noise(&tx, &h, CVector::zeros(3), 0.0).unwrap();
        let clean: CVector = grads.iter().map(|g| split_to_complex(g)).fold(CVector::zeros(3), |a, b| a + b);
        let residual = &rx.symbols - clean * Complex64::new(p.eta.sqrt(), 0.0);
        let sum_n: CVector = (0..k).fold(CVector::zeros(3), |a, u| a + n.row(u).transpose());
        assert!((&residual - sum_n * Complex64::new(p.eta.sqrt(), 0.0)).norm() < 1e-12);
        assert!(residual.norm() > 1e-3);
    }

    #[test]
    fn single_user_recovers_gradient() {
        let p = RoundPlan::unperturbed(1, 4.0, 1.0, 2);
        let g = vec![0.1, 0.2, -0.3];
        let h = CVector::from_element(1, Complex64::new(0.0, 1.0));
        let tx = vec![build_tx(&p, 0, &g, &CVector::zeros(2), h[0]).unwrap()];
        let rx = server_receive_with_noise(&tx, &h, CVector::zeros(2), 0.0).unwrap();
        let est = estimate_global_gradient(&rx, p.eta, 1, 3).unwrap();
        for (a, b) in est.iter().zip(&g) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn aligned_adversary_sees_only_its_noise() {
        let mut rng = RngStream::new(6, "aligned");
        let k = 4;
        let p = plan(random_zero_sum(k, &mut rng), 0.02, 3);
        let grads = gradients(k, 6, &mut rng);
        let n = sample_perturbations(&p, 3, &mut rng).unwrap();
        let h = CVector::from_fn(k, |_, _| rng.complex_gaussian(1.0) + Complex64::new(1.0, 0.0));
        let tx = transmit(&p, &grads, &n, &h);
        let z = rng.sample_complex_gaussian(3, 0.5);
        let rx = adversary_receive_with_noise(&tx, &h, z.clone(), 0.5).unwrap();
        assert!(rx.perturbation.norm() <= 1e-12);
        assert!((rx.effective_noise() - z).norm() <= 1e-12);
    }

    #[test]
    fn orthogonal_adversary_noise_variance() {
        // h = (1, 1), g = (1, -1), R = sigma^2 [[1, -1], [-1, 1]]: variance 4 eta sigma^2 + N_a
        let mut rng = RngStream::new(7, "orth");
        let sigma2 = 0.7;
        let eta = 0.3;
        let n_a = 0.2;
        let r = HermitianMatrix::from_real(&nalgebra::DMatrix::from_row_slice(2, 2, &[sigma2, -sigma2, -sigma2, sigma2])).unwrap();
        let p = plan(CovMatrix::zero_sum(r.clone()).unwrap(), eta, 1000);
        let h = unit_channel(2);
        let g = CVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]);
        let zeros = vec![vec![0.0; 2000]; 2];
        let n = sample_perturbations(&p, 1000, &mut rng).unwrap();
        let tx = transmit(&p, &zeros, &n, &h);
        let mut total = 0.0;
        let reps = 50;
        for _ in 0..reps {
            let rx = adversary_receive(&tx, &g, n_a, &mut rng).unwrap();
            total += rx.effective_noise().norm_squared() / 1000.0;
        }
        let rho = CVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]);
        let oracle = crate::privacy::effective_noise_variance(eta, &rho, &r, n_a).unwrap();
        assert!((oracle - (4.0 * eta * sigma2 + n_a)).abs() < 1e-12);
        // the perturbation draw is shared across reps, so compare loosely
        assert!((total / reps as f64 - oracle).abs() <= 0.1 * oracle, "{} vs {oracle}", total / reps as f64);
    }

    #[test]
    fn no_perturbation_adversary_sees_rho_weighted_sum() {
        let mut rng = RngStream::new(8, "noperturb");
        let k = 3;
        let p = RoundPlan::unperturbed(k, 2.0, 10.0, 2);
        let grads = gradients(k, 4, &mut rng);
        let h = CVector::from_fn(k, |_, _| rng.complex_gaussian(1.0) + Complex64::new(1.5, 0.0));
        let g = CVector::from_fn(k, |_, _| rng.complex_gaussian(1.0));
        let tx = transmit(&p, &grads, &CMatrix::zeros(k, 2), &h);
        let z = rng.sample_complex_gaussian(2, 0.1);
        let rx = adversary_receive_with_noise(&tx, &g, z.clone(), 0.1).unwrap();
        let mut expect = z;
        for u in 0..k {
            expect += split_to_complex(&grads[u]) * (g[u] / h[u] * p.eta.sqrt());
        }
        assert!((rx.symbols - expect).norm() < 1e-12);
    }

    #[test]
    fn receive_is_linear() {
        let mut rng = RngStream::new(9, "linear");
        let k = 4;
        let p = plan(random_zero_sum(k, &mut rng), 0.01, 3);
        let h = CVector::from_fn(k, |_, _| rng.complex_gaussian(1.0) + Complex64::new(1.0, 0.0));
        let a = gradients(k, 6, &mut rng);
        let b = gradients(k, 6, &mut rng);
        let sum: Vec<Vec<f64>> = a.iter().zip(&b).map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + v).collect()).collect();
        let n = CMatrix::zeros(k, 3);
        let zero = CVector::zeros(3);
        let ra = server_receive_with_noise(&transmit(&p, &a, &n, &h), &h, zero.clone(), 0.0).unwrap();
        let rb = server_receive_with_noise(&transmit(&p, &b, &n, &h), &h, zero.clone(), 0.0).unwrap();
        let rs = server_receive_with_noise(&transmit(&p, &sum, &n, &h), &h, zero, 0.0).unwrap();
        assert!((rs.symbols - ra.symbols - rb.symbols).norm() < 1e-12);
    }

    #[test]
    fn estimator_noise_variance() {
        let mut rng = RngStream::new(10, "estvar");
        let (k, n0, eta) = (5, 0.4, 0.25);
        let p = RoundPlan::unperturbed(k, 1.0 / eta, 10.0, 1);
        let h = unit_channel(k);
        let tx = transmit(&p, &vec![vec![0.0; 2]; k], &CMatrix::zeros(k, 1), &h);
        let draws = 100_000;
        let mut sum2 = 0.0;
        for _ in 0..draws {
            let rx = server_receive(&tx, &h, n0, &mut rng).unwrap();
            let e = estimate_global_gradient(&rx, eta, k, 2).unwrap();
            sum2 += e[0] * e[0] + e[1] * e[1];
        }
        let var = sum2 / (2.0 * draws as f64);
        let oracle = n0 / (2.0 * (k * k) as f64 * eta);
        assert!((var - oracle).abs() <= 0.02 * oracle, "{var} vs {oracle}");
    }
}
