use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::hermitian::CVector;

/// Seeded, labelled random stream.
///
/// The generator state is derived from `SHA-256(seed || label)`, so identical
/// `(seed, label)` pairs replay identical sequences and distinct labels give
/// unrelated streams. Child streams are derived by extending the label,
/// independent of how much of the parent has been consumed.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    label: String,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, label: impl Into<String>) -> Self {
        let label = label.into();
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(label.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        Self {
            seed,
            label,
            rng: ChaCha20Rng::from_seed(digest),
        }
    }

    pub fn derive(&self, sub: &str) -> Self {
        Self::new(self.seed, format!("{}/{}", self.label, sub))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// One circularly-symmetric complex Gaussian draw with `E|z|^2 = variance`.
    pub fn complex_gaussian(&mut self, variance: f64) -> Complex64 {
        let s = (variance / 2.0).sqrt();
        Complex64::new(s * self.standard_normal(), s * self.standard_normal())
    }

    /// `dim` i.i.d. `CN(0, variance)` entries; real and imaginary parts each
    /// carry half the variance.
    pub fn sample_complex_gaussian(&mut self, dim: usize, variance: f64) -> CVector {
        assert!(variance >= 0.0, "variance must be non-negative");
        if variance == 0.0 {
            return CVector::zeros(dim);
        }
        CVector::from_fn(dim, |_, _| self.complex_gaussian(variance))
    }

    pub fn inner(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_variance_gives_zero_vector() {
        let mut rng = RngStream::new(1, "z");
        assert!(rng.sample_complex_gaussian(8, 0.0).iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn same_seed_and_label_replay() {
        let a = RngStream::new(42, "x").sample_complex_gaussian(16, 1.0);
        let b = RngStream::new(42, "x").sample_complex_gaussian(16, 1.0);
        assert_eq!(a, b);
        let c = RngStream::new(42, "y").sample_complex_gaussian(16, 1.0);
        assert_ne!(a, c);
    }

    #[test]
    fn derived_stream_ignores_parent_consumption() {
        let parent = RngStream::new(3, "root");
        let mut used = parent.clone();
        used.standard_normal();
        assert_eq!(
            parent.derive("c").sample_complex_gaussian(4, 1.0),
            used.derive("c").sample_complex_gaussian(4, 1.0)
        );
    }

    #[test]
    fn variance_and_component_split() {
        let n = 1_000_000;
        let mut rng = RngStream::new(7, "var");
        let v = rng.sample_complex_gaussian(n, 1.0);
        let total = v.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        let re = v.iter().map(|z| z.re * z.re).sum::<f64>() / n as f64;
        assert!((0.99..=1.01).contains(&total), "{total}");
        assert!((re - 0.5).abs() < 0.01, "{re}");
    }

    #[test]
    fn distinct_labels_are_uncorrelated() {
        let n = 1_000_000;
        let a = RngStream::new(9, "a").sample_complex_gaussian(n, 1.0);
        let b = RngStream::new(9, "b").sample_complex_gaussian(n, 1.0);
        let cross: Complex64 = a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum::<Complex64>() / n as f64;
        assert!(cross.norm() < 0.01, "{cross}");
    }
}
