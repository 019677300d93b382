//! Cross-topology equivalence: the federated protocol with one client and
//! the identity sentinel must walk the exact trajectory of the centralized
//! trainer, and privacy accounting must be topology independent.

use gswgan::config::{DatasetSpec, TrainConfig};
use gswgan::federated::{clients_from_partition, server_train};
use gswgan::tensor::Tensor;
use gswgan::trainer::{train_observed, train_reference};

fn ring() -> DatasetSpec {
    DatasetSpec::Ring {
        modes: 4,
        n_per_mode: 16,
        radius: 2.0,
        std: 0.05,
        seed: 21,
    }
}

fn base_config() -> TrainConfig {
    TrainConfig {
        gamma: 1.0,
        sigma: 0.0,
        non_private: true,
        clip_bound: f64::INFINITY,
        warm_iters: 3,
        steps: 12,
        n_dis: 3,
        batch: 8,
        eta_d: 5e-3,
        eta_g: 5e-3,
        latent_dim: 4,
        gen_hidden: vec![12],
        disc_hidden: vec![12],
        metrics_every: 5,
        seed: 77,
        ..TrainConfig::default()
    }
}

fn bits(params: &[Tensor]) -> Vec<u64> {
    params
        .iter()
        .flat_map(|t| t.data().iter().map(|v| v.to_bits()))
        .collect()
}

#[test]
fn federated_k1_identity_matches_centralized_bitwise() {
    let config = base_config();

    let mut central_steps = Vec::new();
    let _ = train_observed(&ring(), &config, |_, pair| {
        central_steps.push(bits(&pair.gen_params));
        true
    })
    .unwrap();

    let mut fed_steps = Vec::new();
    let mut clients = clients_from_partition(&ring(), &config).unwrap();
    let _ = server_train(&mut clients, &ring(), &config, |_, gen_params| {
        fed_steps.push(bits(gen_params));
        true
    })
    .unwrap();

    assert_eq!(central_steps.len(), fed_steps.len());
    for (i, (c, f)) in central_steps.iter().zip(&fed_steps).enumerate() {
        assert_eq!(c, f, "trajectories diverge at step {}", i + 1);
    }
}

#[test]
fn federated_k1_noisy_matches_centralized_bitwise() {
    // With one client the noise stream roots coincide as well, so even the
    // sigma > 0 trajectories agree bit for bit.
    let mut config = base_config();
    config.sigma = 1.07;
    config.non_private = false;
    config.clip_bound = 1.0;

    let mut central_steps = Vec::new();
    let _ = train_observed(&ring(), &config, |_, pair| {
        central_steps.push(bits(&pair.gen_params));
        true
    })
    .unwrap();

    let mut fed_steps = Vec::new();
    let mut clients = clients_from_partition(&ring(), &config).unwrap();
    let _ = server_train(&mut clients, &ring(), &config, |_, gen_params| {
        fed_steps.push(bits(gen_params));
        true
    })
    .unwrap();

    assert_eq!(central_steps, fed_steps);
}

#[test]
fn federated_ledger_equals_centralized_ledger() {
    let mut config = base_config();
    config.gamma = 0.25;
    config.sigma = 1.07;
    config.non_private = false;
    config.clip_bound = 1.0;
    config.warm_iters = 1;
    config.steps = 9;

    let central = gswgan::trainer::train(&ring(), &config).unwrap();
    let mut clients = clients_from_partition(&ring(), &config).unwrap();
    let fed = server_train(&mut clients, &ring(), &config, |_, _| true).unwrap();

    assert_eq!(central.ledger.steps(), fed.ledger.steps());
    assert_eq!(central.ledger.gamma(), fed.ledger.gamma());
    for order in central.ledger.orders().to_vec() {
        let c = central.ledger.eps_at(order).unwrap();
        let f = fed.ledger.eps_at(order).unwrap();
        assert_eq!(c.to_bits(), f.to_bits(), "ledger differs at order {order}");
    }
    let (ec, oc) = central.ledger.to_dp(config.delta).unwrap();
    let (ef, of) = fed.ledger.to_dp(config.delta).unwrap();
    assert_eq!(ec.to_bits(), ef.to_bits());
    assert_eq!(oc, of);
}

#[test]
fn gs_wgan_identity_equals_reference_wgan_gp() {
    // The identity-sanitizer equivalence at integration scope; the
    // acceptance suite runs the full 500-step version.
    let config = base_config();

    let mut gs = Vec::new();
    let _ = train_observed(&ring(), &config, |_, pair| {
        gs.push(bits(&pair.gen_params));
        true
    })
    .unwrap();

    let mut reference = Vec::new();
    let _ = train_reference(&ring(), &config, |_, pair| {
        reference.push(bits(&pair.gen_params));
        true
    })
    .unwrap();

    assert_eq!(gs, reference);
}
