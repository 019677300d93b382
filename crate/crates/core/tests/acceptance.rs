//! Acceptance suite: one test per criterion, each printing a pass line.
//! Run with `cargo test --test acceptance -- --nocapture` to see them.

mod common;

use common::{amplify_oracle, rel_err};
use gswgan::accountant::{amplify, rdp_to_dp_single, step_rdp, PrivacyLedger};
use gswgan::config::{DatasetSpec, TrainConfig};
use gswgan::data::{mode_coverage, ring_centers};
use gswgan::federated::{
    bug_scenario, clients_from_partition, conservation_holds, server_train, welch_t_test,
    FRAME_OVERHEAD_BYTES,
};
use gswgan::gan::{
    g_loss_upstream, generate, sample_labels, sample_latent, GanPair,
};
use gswgan::network::{
    forward, grad, grad_of_grad_norm, penalty_value, Activation, NetworkSpec, Wrt,
};
use gswgan::rng::seeded;
use gswgan::sanitizer::clip;
use gswgan::tensor::{l2_distance, Tensor};
use gswgan::trainer::{disc_spec_for, gen_spec_for, train_observed, train_reference, warm_start};
use rand::Rng;
use std::time::Instant;

fn ring_dataset() -> DatasetSpec {
    DatasetSpec::Ring {
        modes: 8,
        n_per_mode: 128,
        radius: 2.0,
        std: 0.1,
        seed: 1,
    }
}

fn desk_config() -> TrainConfig {
    TrainConfig {
        batch: 32,
        eta_d: 0.03,
        eta_g: 0.03,
        gen_hidden: vec![32, 32],
        disc_hidden: vec![32, 32],
        metrics_every: 100_000,
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn criterion_01_gradient_correctness() {
    let start = Instant::now();
    let mut rng = seeded(1001);
    let h = 1e-5;

    // 120 first-order networks.
    for net in 0..120 {
        let hidden: Vec<usize> = (0..rng.random_range(1..3))
            .map(|_| rng.random_range(3..9))
            .collect();
        let act = if net % 2 == 0 {
            Activation::Tanh
        } else {
            Activation::Softplus
        };
        let input_dim = rng.random_range(2..5);
        let spec = NetworkSpec::mlp(input_dim, 0, &hidden, 1, act);
        let params = spec.init_params(&mut rng);
        let input_data: Vec<f64> = (0..input_dim).map(|_| rng.random::<f64>() - 0.5).collect();
        let input = Tensor::row_vector(&input_data);

        let mut pass = forward(&spec, &params, &input).unwrap();
        let grads = grad(&mut pass, Wrt::Params).unwrap();
        for (pi, g) in grads.iter().enumerate() {
            for j in 0..g.len() {
                let mut plus = params.clone();
                plus[pi].data_mut()[j] += h;
                let mut minus = params.clone();
                minus[pi].data_mut()[j] -= h;
                let fp = forward(&spec, &plus, &input)
                    .unwrap()
                    .output_value()
                    .scalar_value();
                let fm = forward(&spec, &minus, &input)
                    .unwrap()
                    .output_value()
                    .scalar_value();
                let fd = (fp - fm) / (2.0 * h);
                assert!(
                    (g.data()[j] - fd).abs() / fd.abs().max(1e-3) <= 1e-5,
                    "net {net} param {pi}[{j}]: ad {} vs fd {fd}",
                    g.data()[j]
                );
            }
        }
    }

    // 80 second-order networks: parameter gradient of the penalty scalar.
    for net in 0..80 {
        let hidden = vec![rng.random_range(3..7)];
        let act = if net % 2 == 0 {
            Activation::Tanh
        } else {
            Activation::Softplus
        };
        let input_dim = rng.random_range(2..4);
        let spec = NetworkSpec::mlp(input_dim, 0, &hidden, 1, act);
        let params = spec.init_params(&mut rng);
        let point_data: Vec<f64> = (0..input_dim).map(|_| rng.random::<f64>() - 0.5).collect();
        let point = Tensor::row_vector(&point_data);

        let grads = grad_of_grad_norm(&spec, &params, &point).unwrap();
        for (pi, g) in grads.iter().enumerate() {
            for j in 0..g.len() {
                let mut plus = params.clone();
                plus[pi].data_mut()[j] += h;
                let mut minus = params.clone();
                minus[pi].data_mut()[j] -= h;
                let fp = penalty_value(&spec, &plus, &point).unwrap();
                let fm = penalty_value(&spec, &minus, &point).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                assert!(
                    (g.data()[j] - fd).abs() / fd.abs().max(1e-2) <= 1e-4,
                    "net {net} param {pi}[{j}]: ad {} vs fd {fd}",
                    g.data()[j]
                );
            }
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed <= 60.0, "gradient check took {elapsed:.1}s");
    println!("criterion 1 (gradient correctness, 200 networks, {elapsed:.1}s): PASS");
}

#[test]
fn criterion_02_sensitivity_bound() {
    let c = 1.0;
    let mut rng = seeded(2002);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let dim = rng.random_range(1..8);
        let b = rng.random_range(1..6);
        // Adversarial scales spanning tiny to huge, plus sign flips and
        // near-boundary norms.
        let scale = 10f64.powi(rng.random_range(-6..7));
        let batch: Vec<Tensor> = (0..b)
            .map(|_| {
                Tensor::new(
                    vec![1, dim],
                    (0..dim)
                        .map(|_| scale * (rng.random::<f64>() - 0.5))
                        .collect(),
                )
            })
            .collect();
        let mut other = batch.clone();
        let idx = rng.random_range(0..b);
        let style = rng.random_range(0..3);
        other[idx] = match style {
            // Opposite direction, huge magnitude.
            0 => other[idx].affine(-1e9, 0.0),
            // Unrelated direction.
            1 => Tensor::new(
                vec![1, dim],
                (0..dim)
                    .map(|_| 1e6 * (rng.random::<f64>() - 0.5))
                    .collect(),
            ),
            // Exactly at the clip boundary, flipped.
            _ => {
                let norm = other[idx].l2_norm().max(1e-300);
                other[idx].affine(-c / norm, 0.0)
            }
        };
        let flat = |bt: &[Tensor]| -> Vec<f64> {
            bt.iter().flat_map(|t| clip(t, c).data().to_vec()).collect()
        };
        let d = l2_distance(&flat(&batch), &flat(&other));
        worst = worst.max(d);
        assert!(
            d <= 2.0 * c + 1e-9,
            "sensitivity {d} exceeds 2C"
        );
    }
    println!("criterion 2 (sensitivity <= 2C over 1e4 adversarial pairs, worst {worst:.12}): PASS");
}

#[test]
fn criterion_03_identity_sanitizer_equivalence() {
    let config = TrainConfig {
        gamma: 1.0,
        sigma: 0.0,
        non_private: true,
        clip_bound: f64::INFINITY,
        warm_iters: 5,
        steps: 500,
        n_dis: 2,
        batch: 8,
        eta_d: 0.01,
        eta_g: 0.01,
        latent_dim: 4,
        gen_hidden: vec![12],
        disc_hidden: vec![12],
        metrics_every: 100_000,
        seed: 33,
        ..TrainConfig::default()
    };
    let ring = DatasetSpec::Ring {
        modes: 4,
        n_per_mode: 16,
        radius: 2.0,
        std: 0.05,
        seed: 7,
    };

    let bits = |pair: &GanPair| -> Vec<u64> {
        pair.gen_params
            .iter()
            .chain(pair.disc_params.iter())
            .flat_map(|t| t.data().iter().map(|v| v.to_bits()))
            .collect()
    };

    let mut gs = Vec::new();
    let _ = train_observed(&ring, &config, |_, pair| {
        gs.push(bits(pair));
        true
    })
    .unwrap();
    let mut reference = Vec::new();
    let _ = train_reference(&ring, &config, |_, pair| {
        reference.push(bits(pair));
        true
    })
    .unwrap();

    assert_eq!(gs.len(), 500);
    assert_eq!(reference.len(), 500);
    for (i, (a, b)) in gs.iter().zip(&reference).enumerate() {
        assert_eq!(a, b, "trajectories diverge at step {}", i + 1);
    }
    println!("criterion 3 (identity-sanitizer trajectory bit-identical for 500 steps): PASS");
}

#[test]
fn criterion_04_accountant_oracle_equivalence() {
    // Amplification against the 256-bit oracle.
    for &(batch, sigma) in &[(1u32, 10.0), (32u32, 50.0)] {
        let base = move |j: u32| step_rdp(batch, sigma, j).unwrap();
        for &gamma in &[1e-3, 1e-2, 0.1] {
            for order in 2..=32 {
                let ours = amplify(gamma, base, order).unwrap();
                let oracle = amplify_oracle(gamma, base, order);
                assert!(
                    rel_err(ours, oracle) <= 1e-10,
                    "order {order} gamma {gamma} B {batch} sigma {sigma}: {ours} vs {oracle}"
                );
            }
        }
    }

    // Composition is additive per order: two single steps equal one double
    // step exactly; chunked accumulation agrees to 64-bit rounding.
    let fresh = PrivacyLedger::new(0.01, 1.07, 32).unwrap();
    let mut two_ones = fresh.clone();
    two_ones.accumulate(1);
    two_ones.accumulate(1);
    let mut one_two = fresh.clone();
    one_two.accumulate(2);
    for order in fresh.orders().to_vec() {
        assert_eq!(
            two_ones.eps_at(order).unwrap().to_bits(),
            one_two.eps_at(order).unwrap().to_bits()
        );
    }
    let mut chunked = fresh.clone();
    for _ in 0..10 {
        chunked.accumulate(7);
    }
    let mut bulk = fresh.clone();
    bulk.accumulate(70);
    for order in fresh.orders().to_vec() {
        assert!(
            rel_err(
                chunked.eps_at(order).unwrap(),
                bulk.eps_at(order).unwrap()
            ) < 1e-12
        );
    }

    // Hand-computed conversion: eps_RDP 1 at order 101, delta 1e-5.
    let eps = rdp_to_dp_single(1.0, 101, 1e-5);
    assert!((eps - 1.11513).abs() <= 1e-5, "{eps}");
    println!("criterion 4 (amplification matches 256-bit oracle to 1e-10; additive composition; hand conversion): PASS");
}

#[test]
fn criterion_05_accountant_monotonicity() {
    let batches = [8u32, 32, 64];
    let gammas = [0.01, 0.1, 0.5];
    let sigmas = [0.8, 1.07, 2.0];
    let steps = [100u64, 1000, 5000];
    let deltas = [1e-6, 1e-5, 1e-3];

    let eps_of = |gamma: f64, sigma: f64, batch: u32, t: u64, delta: f64| -> f64 {
        let mut l = PrivacyLedger::new(gamma, sigma, batch).unwrap();
        l.accumulate(t);
        l.to_dp(delta).unwrap().0
    };

    for &b in &batches {
        for &g in &gammas {
            for &s in &sigmas {
                // Non-decreasing in T.
                let mut last = 0.0;
                for &t in &steps {
                    let e = eps_of(g, s, b, t, 1e-5);
                    assert!(e >= last, "not monotone in T at B={b} g={g} s={s}");
                    last = e;
                }
                // Non-increasing in delta.
                let mut last = f64::INFINITY;
                for &d in &deltas {
                    let e = eps_of(g, s, b, 1000, d);
                    assert!(e <= last, "not monotone in delta at B={b} g={g} s={s}");
                    last = e;
                }
            }
        }
    }
    // Non-decreasing in B.
    for &g in &gammas {
        for &s in &sigmas {
            let mut last = 0.0;
            for &b in &batches {
                let e = eps_of(g, s, b, 1000, 1e-5);
                assert!(e >= last, "not monotone in B at g={g} s={s}");
                last = e;
            }
        }
    }
    // Non-decreasing in gamma.
    for &b in &batches {
        for &s in &sigmas {
            let mut last = 0.0;
            for &g in &gammas {
                let e = eps_of(g, s, b, 1000, 1e-5);
                assert!(e >= last, "not monotone in gamma at B={b} s={s}");
                last = e;
            }
        }
    }
    // Non-increasing in sigma.
    for &b in &batches {
        for &g in &gammas {
            let mut last = f64::INFINITY;
            for &s in &sigmas {
                let e = eps_of(g, s, b, 1000, 1e-5);
                assert!(e <= last, "not monotone in sigma at B={b} g={g}");
                last = e;
            }
        }
    }
    println!("criterion 5 (epsilon monotone in T, B, gamma; anti-monotone in sigma, delta): PASS");
}

#[test]
fn criterion_06_norm_concentration() {
    let probe = |lambda_gp: f64| -> (f64, f64) {
        let ring = ring_dataset();
        let ds = ring.build().unwrap();
        let config = TrainConfig {
            gamma: 1.0,
            sigma: 0.0,
            non_private: true,
            clip_bound: f64::INFINITY,
            warm_iters: 200,
            lambda_gp,
            ..desk_config()
        };
        let all: Vec<usize> = (0..ds.len()).collect();
        let (disc, gen) = warm_start(&ds, &all, 0, &config, config.seed).unwrap();
        let pair = GanPair::new(
            gen_spec_for(&config, &ds),
            disc_spec_for(&config, &ds),
            gen,
            disc,
            lambda_gp,
        )
        .unwrap();
        let mut rng = seeded(777);
        let mut norms = Vec::with_capacity(256);
        for _ in 0..4 {
            let z = sample_latent(64, pair.latent_dim(), &mut rng);
            let labels = sample_labels(64, pair.num_classes(), &mut rng);
            let (ups, _) = g_loss_upstream(&pair, &z, &labels).unwrap();
            norms.extend(ups.iter().map(|u| u.grad.l2_norm()));
        }
        let mean = norms.iter().sum::<f64>() / norms.len() as f64;
        let var = norms.iter().map(|n| (n - mean) * (n - mean)).sum::<f64>() / norms.len() as f64;
        (mean, var.sqrt())
    };

    let (mean_gp, std_gp) = probe(10.0);
    let (_, std_free) = probe(0.0);
    assert!(
        (0.5..=1.5).contains(&mean_gp),
        "mean upstream norm {mean_gp} outside [0.5, 1.5]"
    );
    assert!(
        std_free >= 3.0 * std_gp,
        "std without penalty {std_free} not 3x larger than {std_gp}"
    );
    println!(
        "criterion 6 (norm concentration: mean {mean_gp:.3}, std ratio {:.1}): PASS",
        std_free / std_gp
    );
}

#[test]
fn criterion_07_desk_scale_utility() {
    let centers = ring_centers(8, 2.0);
    let capture = 0.8;
    let eval = |pair: &GanPair| -> (u32, f64) {
        let mut rng = seeded(999);
        let z = sample_latent(1000, pair.latent_dim(), &mut rng);
        let labels = sample_labels(1000, pair.num_classes(), &mut rng);
        let s = generate(pair, &z, &labels).unwrap();
        mode_coverage(&s, &centers, capture)
    };

    // Non-private WGAN-GP: >= 7/8 modes at >= 0.7 high-quality fraction
    // within 20k steps.
    let start = Instant::now();
    let config = TrainConfig {
        gamma: 1.0,
        sigma: 0.0,
        non_private: true,
        clip_bound: f64::INFINITY,
        warm_iters: 0,
        steps: 20_000,
        ..desk_config()
    };
    let mut best = (0u32, 0.0f64);
    let mut reached_at = None;
    let _ = train_reference(&ring_dataset(), &config, |step, pair| {
        if step % 250 == 0 {
            let (cov, hq) = eval(pair);
            if cov > best.0 || (cov == best.0 && hq > best.1) {
                best = (cov, hq);
            }
            if cov >= 7 && hq >= 0.7 {
                reached_at = Some(step);
                return false;
            }
        }
        true
    })
    .unwrap();
    let np_time = start.elapsed().as_secs_f64();
    assert!(
        reached_at.is_some(),
        "non-private run peaked at {}/8 modes, hq {:.3}",
        best.0,
        best.1
    );
    assert!(np_time <= 300.0, "non-private run took {np_time:.0}s");

    // Sanitized training: sigma 0.5, K = 10, B = 32; floor 5/8 modes.
    let start = Instant::now();
    let config = TrainConfig {
        gamma: 0.1,
        sigma: 0.5,
        clip_bound: 1.0,
        warm_iters: 200,
        steps: 20_000,
        ..desk_config()
    };
    let mut best_priv = 0u32;
    let mut reached_priv = None;
    let _ = train_observed(&ring_dataset(), &config, |step, pair| {
        if step % 250 == 0 {
            let (cov, _) = eval(pair);
            best_priv = best_priv.max(cov);
            if cov >= 5 {
                reached_priv = Some(step);
                return false;
            }
        }
        true
    })
    .unwrap();
    let priv_time = start.elapsed().as_secs_f64();
    assert!(
        reached_priv.is_some(),
        "sanitized run peaked at {best_priv}/8 modes"
    );
    println!(
        "criterion 7 (utility: non-private {}/8 hq {:.2} at step {} in {:.0}s; sanitized 5/8 floor at step {} in {:.0}s): PASS",
        best.0,
        best.1,
        reached_at.unwrap(),
        np_time,
        reached_priv.unwrap(),
        priv_time
    );
}

#[test]
fn criterion_08_federated_consistency() {
    // K = 1 with the sigma = 0 sentinel: bit-identical to centralized.
    let config = TrainConfig {
        gamma: 1.0,
        sigma: 0.0,
        non_private: true,
        clip_bound: f64::INFINITY,
        warm_iters: 3,
        steps: 40,
        n_dis: 3,
        batch: 8,
        eta_d: 5e-3,
        eta_g: 5e-3,
        latent_dim: 4,
        gen_hidden: vec![12],
        disc_hidden: vec![12],
        metrics_every: 100_000,
        seed: 91,
        ..TrainConfig::default()
    };
    let ring = DatasetSpec::Ring {
        modes: 4,
        n_per_mode: 16,
        radius: 2.0,
        std: 0.05,
        seed: 9,
    };

    let mut central_steps = Vec::new();
    let _ = train_observed(&ring, &config, |_, pair| {
        central_steps.push(
            pair.gen_params
                .iter()
                .flat_map(|t| t.data().iter().map(|v| v.to_bits()))
                .collect::<Vec<u64>>(),
        );
        true
    })
    .unwrap();
    let mut fed_steps = Vec::new();
    let mut clients = clients_from_partition(&ring, &config).unwrap();
    let _ = server_train(&mut clients, &ring, &config, |_, gen| {
        fed_steps.push(
            gen.iter()
                .flat_map(|t| t.data().iter().map(|v| v.to_bits()))
                .collect::<Vec<u64>>(),
        );
        true
    })
    .unwrap();
    assert_eq!(central_steps, fed_steps, "K=1 sentinel trajectories differ");

    // Ledger equality for matched (gamma, sigma, B, T) at K = 4.
    let mut config = config;
    config.gamma = 0.25;
    config.sigma = 1.07;
    config.non_private = false;
    config.clip_bound = 1.0;
    config.steps = 25;
    let central = gswgan::trainer::train(&ring, &config).unwrap();
    let mut clients = clients_from_partition(&ring, &config).unwrap();
    let fed = server_train(&mut clients, &ring, &config, |_, _| true).unwrap();
    assert_eq!(central.ledger.steps(), fed.ledger.steps());
    for order in central.ledger.orders().to_vec() {
        assert_eq!(
            central.ledger.eps_at(order).unwrap().to_bits(),
            fed.ledger.eps_at(order).unwrap().to_bits(),
            "ledger differs at order {order}"
        );
    }
    println!("criterion 8 (federated K=1 bit-identity; topology-independent ledger): PASS");
}

#[test]
fn criterion_09_communication_accounting() {
    let config = TrainConfig {
        gamma: 0.5,
        sigma: 1.07,
        clip_bound: 1.0,
        warm_iters: 2,
        steps: 12,
        n_dis: 3,
        batch: 32,
        latent_dim: 8,
        gen_hidden: vec![24, 24],
        disc_hidden: vec![24, 24],
        metrics_every: 100_000,
        seed: 17,
        ..TrainConfig::default()
    };
    let ring = ring_dataset();
    let mut clients = clients_from_partition(&ring, &config).unwrap();
    let out = server_train(&mut clients, &ring, &config, |_, _| true).unwrap();

    // Exact payload bytes per generator step: B * d_out * 8 + header.
    let b = config.batch as u64;
    let d_out = 2u64;
    let expect_payload = b * d_out * 8 + FRAME_OVERHEAD_BYTES;
    assert_eq!(out.wire.per_step.len(), config.steps as usize);
    for t in &out.wire.per_step {
        assert_eq!(t.client_to_server_bytes, expect_payload);
    }
    assert!(conservation_holds(&out.wire, &clients));

    // Payload-to-parameter-gradient ratio matches the analytic count for
    // the configured networks.
    let disc_params = clients[0].disc_param_count() as f64;
    let analytic = (b as f64 * d_out as f64) / disc_params;
    let measured_reals_per_payload = (expect_payload - FRAME_OVERHEAD_BYTES) as f64 / 8.0;
    let measured = measured_reals_per_payload / disc_params;
    assert!(
        (measured - analytic).abs() < 1e-15,
        "{measured} vs {analytic}"
    );
    // The protocol's point: payloads are much smaller than parameter
    // gradients would be.
    assert!(analytic < 0.1, "payload not smaller than param grads?");
    println!(
        "criterion 9 (payload bytes exact: {expect_payload} per step; ratio {measured:.5} analytic): PASS"
    );
}

#[test]
fn criterion_10_bug_scenario() {
    let config = TrainConfig {
        sigma: 0.5,
        clip_bound: 1.0,
        warm_iters: 100,
        steps: 3000,
        seed: 11,
        ..desk_config()
    };

    let (flipped, _, _) = bug_scenario(&config, 4, 64, 4, 0.02, 1.0).unwrap();
    assert!(
        flipped.opposite_sides_of_half,
        "flip=1 pools on the same side of 0.5: suspected {:.3}, clean {:.3}",
        flipped.suspected_mean_intensity,
        flipped.clean_mean_intensity
    );

    let (null, _, _) = bug_scenario(&config, 4, 64, 4, 0.02, 0.0).unwrap();
    assert!(
        null.p_value > 0.01,
        "flip=0 pools separated at alpha 0.01 (p = {})",
        null.p_value
    );
    println!(
        "criterion 10 (bug scenario: flip=1 means {:.3}/{:.3} opposite; flip=0 p {:.3}): PASS",
        flipped.suspected_mean_intensity, flipped.clean_mean_intensity, null.p_value
    );
}

// Not one of the numbered criteria: the mixed-pool operation example,
// 80% of suspected clients flipped, must flag bimodality or an inverted
// mean.
#[test]
fn mixed_pool_flags_bimodality_or_inversion() {
    let config = TrainConfig {
        sigma: 0.5,
        clip_bound: 1.0,
        warm_iters: 100,
        steps: 3000,
        seed: 11,
        ..desk_config()
    };
    let (report, _, _) = bug_scenario(&config, 5, 64, 4, 0.02, 0.8).unwrap();
    assert!(
        report.suspected_bimodal || report.opposite_sides_of_half,
        "mixed pool flagged neither bimodality nor inversion: {report:?}"
    );
    println!(
        "mixed pool example (suspected {:.3}, clean {:.3}, bimodal {}): PASS",
        report.suspected_mean_intensity, report.clean_mean_intensity, report.suspected_bimodal
    );
}

// Downstream-utility analogue: a logistic probe fit on generated labeled
// data must classify held-out real data far above chance.
#[test]
fn generated_data_trains_usable_probe() {
    use gswgan::data::{logistic_probe, LabeledDataset};
    let config = TrainConfig {
        gamma: 1.0,
        sigma: 0.0,
        non_private: true,
        clip_bound: f64::INFINITY,
        warm_iters: 0,
        steps: 4000,
        ..desk_config()
    };
    let centers = ring_centers(8, 2.0);
    let mut snapshot = None;
    let _ = train_reference(&ring_dataset(), &config, |step, pair| {
        if step % 250 == 0 {
            let mut rng = seeded(999);
            let z = sample_latent(1000, pair.latent_dim(), &mut rng);
            let labels = sample_labels(1000, pair.num_classes(), &mut rng);
            let s = generate(pair, &z, &labels).unwrap();
            let (cov, hq) = mode_coverage(&s, &centers, 0.8);
            if cov >= 7 && hq >= 0.7 {
                snapshot = Some((pair.gen_spec.clone(), pair.gen_params.clone()));
                return false;
            }
        }
        true
    })
    .unwrap();
    let (spec, params) = snapshot.expect("reference run never converged");

    let mut rng = seeded(31337);
    let n = 800;
    let z = sample_latent(n, spec.input_dim, &mut rng);
    let labels = sample_labels(n, spec.cond_width as u32, &mut rng);
    let samples = gswgan::gan::generate_from(&spec, &params, &z, &labels).unwrap();
    let generated = LabeledDataset {
        points: samples,
        labels,
        num_classes: 8,
        provenance: "generated".into(),
    };
    let held_out = gswgan::data::make_ring(8, 64, 2.0, 0.1, 999).unwrap();
    let acc = logistic_probe(&generated, &held_out).unwrap();
    assert!(acc >= 0.5, "probe accuracy {acc} (chance is 0.125)");
    println!("generated-data probe accuracy on held-out real data: {acc:.3}: PASS");
}

// Also exercised here because the full run is expensive: the statistical
// noise check from the sanitizer examples at one million draws.
#[test]
fn sanitizer_noise_std_at_paper_scale() {
    use gswgan::sanitizer::{sanitize, Mechanism};
    let m = Mechanism::new(1.0, 1.07, 90210).unwrap();
    let g = Tensor::zeros(1, 4);
    let n = 250_000u64; // 4 coordinates per draw -> 1e6 noise samples
    let mut sum_sq = 0.0;
    for i in 0..n {
        for v in sanitize(&g, &m, i).data() {
            sum_sq += v * v;
        }
    }
    let std = (sum_sq / (4 * n) as f64).sqrt();
    assert!(
        (std - 1.07).abs() / 1.07 < 0.01,
        "empirical std {std} vs 1.07"
    );
    println!("sanitizer noise std over 1e6 draws: {std:.4} (target 1.07): PASS");
}

// Welch's test sanity at acceptance scope: it rejects separated samples
// and accepts identical distributions.
#[test]
fn welch_test_behaves() {
    let mut rng = seeded(606);
    let a: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
    let b: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
    let (_, p_same) = welch_t_test(&a, &b);
    assert!(p_same > 0.01);
    let c: Vec<f64> = a.iter().map(|v| v + 1.0).collect();
    let (_, p_diff) = welch_t_test(&a, &c);
    assert!(p_diff < 1e-10);
}
