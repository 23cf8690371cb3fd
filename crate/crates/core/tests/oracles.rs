use ndarray::{Array1, Array2};
use odkla::config::{DatasetSource, RunConfig, SyntheticSpec};
use odkla::data::shuffle_partition;
use odkla::engine::{Algorithm, Simulation};
use odkla::experiment::{simulate, Experiment};
use odkla::features::RfBasis;
use odkla::losses::LossSpec;
use odkla::metrics::{centralized_oracle, design_matrix, regret, ridge_solve, MetricsAccumulator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn ridge_solution_is_stationary() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let z = Array2::from_shape_fn((20, 8), |_| rng.random_range(-0.5..0.5));
        let y = Array1::from_shape_fn(20, |_| rng.random_range(-1.0..1.0));
        let lambda = rng.random_range(1e-4..1.0);
        let theta = ridge_solve(&z, &y, lambda).unwrap();
        let grad = z.t().dot(&(z.dot(&theta) - &y)) * 2.0 + &theta * (2.0 * lambda);
        let norm = grad.dot(&grad).sqrt();
        assert!(norm <= 1e-8, "{norm}");
    }
}

#[test]
fn oracle_minimizes_the_summed_local_costs() {
    let ds = odkla::data::synthesize(60, 3, 0.5, 0.1, 4).unwrap();
    let streams = shuffle_partition(&ds, 3, 4).unwrap();
    let basis = RfBasis::sample(4, 3, 0.5, 4).unwrap();
    let loss = LossSpec::squared(0.3, 3);
    let star = centralized_oracle(&streams, &basis, &loss).unwrap();
    let (z, y) = design_matrix(&streams, &basis).unwrap();
    // sum_{i,t} grad L_{i,t}(star) must vanish
    let mut grad = Array1::<f64>::zeros(star.len());
    for (row, label) in z.rows().into_iter().zip(y.iter()) {
        grad += &loss.gradient(star.view(), row, *label).unwrap();
    }
    assert!(grad.dot(&grad).sqrt() <= 1e-8);
}

fn short_config() -> RunConfig {
    RunConfig {
        algorithm: Algorithm::QcOdkla,
        n_agents: 3,
        dataset: DatasetSource::Synthetic(SyntheticSpec {
            samples: 600,
            dim: 4,
            sigma: 0.5,
            noise_std: 0.1,
            seed: 8,
        }),
        t_max: Some(200),
        ..RunConfig::default()
    }
    .with_qc(true)
}

trait WithQc {
    fn with_qc(self, on: bool) -> Self;
}

impl WithQc for RunConfig {
    fn with_qc(mut self, on: bool) -> Self {
        self.censor.enabled = on;
        self.quantizer.enabled = on;
        self
    }
}

#[test]
fn streaming_regret_matches_brute_force() {
    let config = short_config();
    let exp = Experiment::prepare(&config).unwrap();
    assert_eq!(exp.horizon(), 200);
    let loss = exp.hyper.loss;
    let star = centralized_oracle(&exp.streams, &exp.basis, &loss).unwrap();

    let mut sim = Simulation::new(config.algorithm, exp.topology.clone(), exp.hyper, exp.basis.feature_len()).unwrap();
    let mut acc = MetricsAccumulator::new(loss, Some(star.clone()), 0.0);
    let mut trajectory = Vec::new();
    let mut streamed = Vec::new();
    for samples in &exp.rounds {
        trajectory.push(sim.agents().iter().map(|a| a.theta.clone()).collect::<Vec<_>>());
        let report = sim.step(samples).unwrap();
        streamed.push(acc.record(&report, samples, 0.0).regret_cum);
    }

    // plain double loop over (t, i), costs written out by hand
    let lam = loss.lambda / 3.0;
    let mut brute = 0.0;
    for (t, thetas) in trajectory.iter().enumerate() {
        for (i, theta) in thetas.iter().enumerate() {
            let (x, y) = exp.streams.streams[i].sample(t);
            let z = exp.basis.map(x).unwrap();
            let c = |th: &Array1<f64>| (th.dot(&z) - y).powi(2) + lam * th.dot(th);
            brute += c(theta) - c(&star);
        }
        assert!((brute - streamed[t]).abs() <= 1e-10, "t={t}: {brute} vs {}", streamed[t]);
    }
    let curve = regret(&trajectory, &exp.streams, &exp.basis, &star, &loss).unwrap();
    assert!((curve[199] - brute).abs() <= 1e-10);
    assert!(brute >= -1e-9);
}

#[test]
fn running_mse_is_the_mean_of_instantaneous_mse() {
    let config = short_config();
    let exp = Experiment::prepare(&config).unwrap();
    let out = simulate(&config, &exp).unwrap();
    let mut sum = 0.0;
    for (k, r) in out.records.iter().enumerate() {
        sum += r.mse_inst;
        assert!((r.mse_running - sum / (k + 1) as f64).abs() <= 1e-12);
    }
}

#[test]
fn final_regret_is_nonnegative() {
    for algorithm in Algorithm::ALL {
        let mut config = short_config().with_qc(algorithm == Algorithm::QcOdkla);
        config.algorithm = algorithm;
        let out = odkla::experiment::run(&config).unwrap();
        assert!(out.summary.regret >= -1e-9, "{algorithm}: {}", out.summary.regret);
    }
}
