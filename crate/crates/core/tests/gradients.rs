use ndarray::Array1;
use odkla::losses::{LossKind, LossSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Central differences with step h have O(h^2) truncation error; h = 1e-6
// keeps both truncation and cancellation far below 1e-5 relative.
fn central_difference(spec: &LossSpec, theta: &Array1<f64>, z: &Array1<f64>, y: f64) -> Array1<f64> {
    let h = 1e-6;
    Array1::from_shape_fn(theta.len(), |k| {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[k] += h;
        minus[k] -= h;
        (spec.cost(plus.view(), z.view(), y).unwrap() - spec.cost(minus.view(), z.view(), y).unwrap()) / (2.0 * h)
    })
}

fn relative_error(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let diff = (a - b).mapv(|v| v * v).sum().sqrt();
    let scale = a.mapv(|v| v * v).sum().sqrt().max(b.mapv(|v| v * v).sum().sqrt()).max(1e-8);
    diff / scale
}

fn check(kind: LossKind, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let dim = rng.random_range(2..=20);
        let n = rng.random_range(1..=10);
        let lambda = rng.random_range(0.0..1.0);
        let spec = LossSpec::new(kind, lambda, n).unwrap();
        let theta = Array1::from_shape_fn(dim, |_| rng.random_range(-2.0..2.0));
        let z = Array1::from_shape_fn(dim, |_| rng.random_range(-1.0..1.0));
        let y = match kind {
            LossKind::Squared => rng.random_range(-3.0..3.0),
            _ => {
                if rng.random_bool(0.5) {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        let analytic = spec.gradient(theta.view(), z.view(), y).unwrap();
        let numeric = central_difference(&spec, &theta, &z, y);
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

#[test]
fn squared_gradient_matches_finite_differences() {
    let worst = check(LossKind::Squared, 11);
    assert!(worst <= 1e-5, "worst relative error {worst}");
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let worst = check(LossKind::Logistic, 12);
    assert!(worst <= 1e-5, "worst relative error {worst}");
}

#[test]
fn hinge_gradient_matches_away_from_the_kink() {
    let spec = LossSpec::new(LossKind::Hinge, 0.3, 2).unwrap();
    let theta = Array1::from_vec(vec![0.4, -0.2, 0.1]);
    let z = Array1::from_vec(vec![1.0, 0.5, -0.5]);
    for y in [1.0, -1.0] {
        let analytic = spec.gradient(theta.view(), z.view(), y).unwrap();
        let numeric = central_difference(&spec, &theta, &z, y);
        assert!(relative_error(&analytic, &numeric) <= 1e-5);
    }
}
