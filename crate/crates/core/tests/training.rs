use std::time::Instant;

use mixmatch_core::retrieval::{train, MatchModelParams, TrainConfig};
use mixmatch_core::synth::{heldout_auc, two_cluster, SyntheticConfig};

#[test]
fn two_cluster_recovery() {
    let data = two_cluster(&SyntheticConfig {
        seed: 7,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let start = Instant::now();
    let config = TrainConfig {
        epochs: 50,
        seed: 7,
        ..TrainConfig::default()
    };
    let outcome = train(&data.store, &config).unwrap();
    let init = MatchModelParams::init(&data.store, config.latent_dim, config.seed).unwrap();
    let before = heldout_auc(&data, &init).unwrap();
    let after = heldout_auc(&data, &outcome.params).unwrap();
    println!("auc before {before:.4} after {after:.4} in {:?}", start.elapsed());
    assert!(after > 0.9, "held-out AUC {after}");
    let losses = &outcome.epoch_losses;
    assert!(losses.last().unwrap() < losses.first().unwrap());
}

#[test]
fn same_seed_same_checkpoint_bytes() {
    let data = two_cluster(&SyntheticConfig {
        tops: 20,
        bottoms: 10,
        queries: 20,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let config = TrainConfig {
        epochs: 5,
        latent_dim: 8,
        seed: 3,
        ..TrainConfig::default()
    };
    let a = train(&data.store, &config).unwrap().params.to_bytes().unwrap();
    let b = train(&data.store, &config).unwrap().params.to_bytes().unwrap();
    assert_eq!(a, b);
    let other = train(&data.store, &TrainConfig { seed: 4, ..config }).unwrap();
    assert_ne!(a, other.params.to_bytes().unwrap());
}

#[test]
fn zero_epochs_is_initialisation() {
    let data = two_cluster(&SyntheticConfig {
        tops: 10,
        bottoms: 4,
        queries: 6,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let config = TrainConfig {
        epochs: 0,
        latent_dim: 4,
        seed: 11,
        ..TrainConfig::default()
    };
    let outcome = train(&data.store, &config).unwrap();
    assert_eq!(outcome.params, MatchModelParams::init(&data.store, 4, 11).unwrap());
    assert!(outcome.epoch_losses.is_empty());
}
