//! Random Fourier features for the Gaussian kernel.

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};

/// ChaCha stream reserved for frequency sampling.
const BASIS_STREAM: u64 = 0x5246;

/// Shared frequency matrix. Every agent must use the same instance.
#[derive(Debug, Clone, PartialEq)]
pub struct RfBasis {
    omega: Array2<f64>,
    sigma: f64,
    seed: u64,
}

impl RfBasis {
    /// Draws `l_count` frequency vectors from `N(0, sigma^-2 I)`.
    pub fn sample(l_count: usize, dim: usize, sigma: f64, seed: u64) -> Result<Self> {
        if l_count == 0 || dim == 0 {
            return Err(Error::InvalidParameter(format!(
                "basis needs l_count >= 1 and dim >= 1 (got {l_count}, {dim})"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("kernel bandwidth must be positive, got {sigma}")));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(BASIS_STREAM);
        let omega = Array2::from_shape_simple_fn((l_count, dim), || {
            let g: f64 = StandardNormal.sample(&mut rng);
            g / sigma
        });
        Ok(RfBasis { omega, sigma, seed })
    }

    pub fn l_count(&self) -> usize {
        self.omega.nrows()
    }

    pub fn dim(&self) -> usize {
        self.omega.ncols()
    }

    /// Length of a mapped vector, `2L`.
    pub fn feature_len(&self) -> usize {
        2 * self.l_count()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn omega(&self) -> &Array2<f64> {
        &self.omega
    }

    /// Maps `x` to `sqrt(1/L) [cos(w_1.x), sin(w_1.x), ..., cos(w_L.x), sin(w_L.x)]`.
    pub fn map(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_len("feature map input", self.dim(), x.len())?;
        let scale = (1.0 / self.l_count() as f64).sqrt();
        let mut z = Array1::zeros(self.feature_len());
        for (l, w) in self.omega.rows().into_iter().enumerate() {
            let (s, c) = w.dot(&x).sin_cos();
            z[2 * l] = scale * c;
            z[2 * l + 1] = scale * s;
        }
        Ok(z)
    }

    /// Random-feature estimate of the kernel, `map(x) . map(x')`.
    pub fn kernel_estimate(&self, x: ArrayView1<f64>, x2: ArrayView1<f64>) -> Result<f64> {
        Ok(self.map(x)?.dot(&self.map(x2)?))
    }
}

/// Exact Gaussian kernel `exp(-|x - x'|^2 / (2 sigma^2))`.
pub fn gaussian_kernel(x: ArrayView1<f64>, x2: ArrayView1<f64>, sigma: f64) -> f64 {
    let sq: f64 = x.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
    (-sq / (2.0 * sigma * sigma)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Axis};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sampling_is_deterministic() {
        let a = RfBasis::sample(16, 3, 0.7, 5).unwrap();
        let b = RfBasis::sample(16, 3, 0.7, 5).unwrap();
        assert_eq!(a, b);
        let c = RfBasis::sample(16, 3, 0.7, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn frequency_moments() {
        let basis = RfBasis::sample(100_000, 3, 0.5, 2024).unwrap();
        let omega = basis.omega();
        let mean = omega.mean_axis(Axis(0)).unwrap();
        let var = omega.var_axis(Axis(0), 1.0);
        for k in 0..3 {
            assert!(mean[k].abs() < 0.02, "mean[{k}] = {}", mean[k]);
            assert!((var[k] - 4.0).abs() < 0.2, "var[{k}] = {}", var[k]);
        }
    }

    #[test]
    fn origin_maps_to_cosine_ones() {
        let basis = RfBasis::sample(4, 2, 1.0, 1).unwrap();
        let z = basis.map(array![0.0, 0.0].view()).unwrap();
        let s = 0.5;
        assert_eq!(z, array![s, 0.0, s, 0.0, s, 0.0, s, 0.0]);
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let basis = RfBasis::sample(4, 2, 1.0, 1).unwrap();
        assert!(matches!(
            basis.map(array![1.0].view()),
            Err(Error::DimensionMismatch { expected: 2, got: 1, .. })
        ));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(RfBasis::sample(0, 2, 1.0, 1).is_err());
        assert!(RfBasis::sample(2, 0, 1.0, 1).is_err());
        assert!(RfBasis::sample(2, 2, 0.0, 1).is_err());
    }

    #[test]
    fn approximates_gaussian_kernel() {
        let basis = RfBasis::sample(2000, 5, 0.5, 77).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = Array1::from_shape_simple_fn(5, || rng.random::<f64>());
            let y = Array1::from_shape_simple_fn(5, || rng.random::<f64>());
            let est = basis.kernel_estimate(x.view(), y.view()).unwrap();
            assert!((est - gaussian_kernel(x.view(), y.view(), 0.5)).abs() <= 0.1);
        }
    }

    proptest! {
        #[test]
        fn mapped_vectors_have_unit_norm(xs in prop::collection::vec(-10.0f64..10.0, 4)) {
            let basis = RfBasis::sample(37, 4, 0.8, 12).unwrap();
            let z = basis.map(Array1::from(xs).view()).unwrap();
            prop_assert!((z.dot(&z) - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn estimate_is_shift_invariant(
            x in prop::collection::vec(0.0f64..1.0, 3),
            y in prop::collection::vec(0.0f64..1.0, 3),
            c in prop::collection::vec(-2.0f64..2.0, 3),
        ) {
            let basis = RfBasis::sample(64, 3, 0.5, 8).unwrap();
            let (x, y, c) = (Array1::from(x), Array1::from(y), Array1::from(c));
            let base = basis.kernel_estimate(x.view(), y.view()).unwrap();
            let shifted = basis
                .kernel_estimate((&x + &c).view(), (&y + &c).view())
                .unwrap();
            prop_assert!((base - shifted).abs() <= 1e-9);
        }
    }
}
