use ndarray::{array, Array1};
use odkla::comm::{round_exchange, CensorSpec, CommSpec, Payload, QuantizerSpec};
use odkla::engine::AgentState;
use odkla::graph::Topology;
use proptest::prelude::*;

fn agents_for(topology: &Topology, dim: usize) -> Vec<AgentState> {
    (0..topology.n())
        .map(|i| AgentState::new(dim, topology.neighbors(i)))
        .collect()
}

fn qc_spec(bits: u32) -> CommSpec {
    CommSpec {
        censor: CensorSpec::new(1.0, 0.5).unwrap(),
        quantizer: Some(QuantizerSpec::symmetric(bits, 4.0).unwrap()),
    }
}

#[test]
fn single_transmitter_on_a_path() {
    let topology = Topology::path(3).unwrap();
    let mut agents = agents_for(&topology, 4);
    // only the middle agent moves far enough to beat alpha * beta = 0.5
    agents[1].theta = array![1.0, -1.0, 0.6, 0.0];
    agents[0].theta = array![0.1, 0.0, 0.0, 0.0];
    let spec = qc_spec(3);
    let out = round_exchange(&mut agents, &topology, &spec, 1).unwrap();
    assert_eq!(out.counters.triggers, 1);
    assert_eq!(out.counters.bits, 2 * 2 * 3);
    assert_eq!(out.messages.len(), 1);
    assert_eq!(out.messages[0].sender, 1);
    assert!(matches!(out.messages[0].payload, Payload::Codes(_)));

    let expected = array![1.5, -0.5, 0.5, 0.5];
    assert_eq!(agents[1].theta_hat_self, expected);
    assert_eq!(agents[0].theta_hat_neighbors[&1], expected);
    assert_eq!(agents[2].theta_hat_neighbors[&1], expected);
    // the censored agent's copy stays at zero everywhere
    assert_eq!(agents[0].theta_hat_self, Array1::<f64>::zeros(4));
    assert_eq!(agents[1].theta_hat_neighbors[&0], Array1::<f64>::zeros(4));
}

#[test]
fn fully_censored_round_is_a_no_op() {
    let topology = Topology::ring(4).unwrap();
    let mut agents = agents_for(&topology, 3);
    for (i, a) in agents.iter_mut().enumerate() {
        a.theta = Array1::from_elem(3, 0.01 * i as f64);
    }
    let before: Vec<_> = agents.iter().map(|a| (a.theta_hat_self.clone(), a.theta_hat_neighbors.clone())).collect();
    let out = round_exchange(&mut agents, &topology, &qc_spec(3), 1).unwrap();
    assert_eq!(out.counters.triggers, 0);
    assert_eq!(out.counters.bits, 0);
    assert!(out.messages.is_empty());
    let after: Vec<_> = agents.iter().map(|a| (a.theta_hat_self.clone(), a.theta_hat_neighbors.clone())).collect();
    assert_eq!(before, after);
}

#[test]
fn lossless_exchange_copies_states() {
    let topology = Topology::complete(3).unwrap();
    let mut agents = agents_for(&topology, 2);
    for (i, a) in agents.iter_mut().enumerate() {
        a.theta = array![i as f64 + 0.123456789, -1e-300];
    }
    let out = round_exchange(&mut agents, &topology, &CommSpec::lossless(), 1).unwrap();
    assert_eq!(out.counters.triggers, 3);
    assert_eq!(out.counters.bits, 3 * 2 * 32);
    for i in 0..3 {
        assert_eq!(agents[i].theta_hat_self, agents[i].theta);
        for (&j, copy) in &agents[i].theta_hat_neighbors {
            assert_eq!(copy, &agents[j].theta);
        }
    }
}

proptest! {
    /// Every receiver's copy of a sender equals the sender's own record, and
    /// bits are exactly 2 L b per trigger, over many random rounds.
    #[test]
    fn tables_stay_consistent(seed in 0u64..500, rounds in 1usize..15, bits in 1u32..6) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let topology = odkla::graph::random_connected_graph(5, 0.5, seed).unwrap();
        let dim = 6;
        let mut agents = agents_for(&topology, dim);
        let spec = CommSpec {
            censor: CensorSpec::new(0.8, 0.9).unwrap(),
            quantizer: Some(QuantizerSpec::symmetric(bits, 2.0).unwrap()),
        };
        let mut triggers = 0;
        let mut total_bits = 0;
        for t in 1..=rounds {
            for a in agents.iter_mut() {
                for v in a.theta.iter_mut() {
                    *v += rng.random_range(-1.0..1.0);
                }
            }
            let out = round_exchange(&mut agents, &topology, &spec, t).unwrap();
            triggers += out.counters.triggers;
            total_bits += out.counters.bits;
            for i in 0..agents.len() {
                for (&j, copy) in &agents[i].theta_hat_neighbors {
                    prop_assert_eq!(copy, &agents[j].theta_hat_self);
                }
            }
        }
        prop_assert_eq!(total_bits, triggers * dim as u64 * bits as u64);
    }
}
