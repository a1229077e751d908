mod common;

use common::*;
use rand::Rng;
use tdefumi::dsrf::FrequencyGrid;
use tdefumi::io::{read_model, write_model};
use tdefumi::solvers::Dictionary;
use tdefumi::td_efumi::{
    bag_accuracy, classify_alarm, delta_n, latent_posterior, separable_instance, train, BagLabel,
    DataStats, Pooling, TrainConfig,
};

fn background_only(d: &Dictionary) -> Dictionary {
    let raw: Vec<f64> = d
        .nontarget_range()
        .flat_map(|k| d.atom(k).to_vec())
        .collect();
    Dictionary::from_raw(d.dim(), 0, raw).unwrap()
}

#[test]
fn posterior_follows_enumerated_background_residual() {
    let mut r = rng(21);
    for _ in 0..30 {
        let d = random_dictionary(&mut r, 6, 6, 2);
        let x = gaussian(&mut r, 6);
        let cfg = TrainConfig {
            lambda: r.random_range(0.05..0.5),
            beta: r.random_range(0.1..2.0),
            solver_tolerance: 1e-15,
            solver_max_iters: 1_000_000,
            ..TrainConfig::default()
        };
        let bg = background_only(&d);
        let (w, _) = enumerate_elastic_net(&x, &bg, cfg.lambda, 0.0);
        let r2: f64 = bg.residual(&x, &w).iter().map(|v| v * v).sum();
        let p = latent_posterior(&x, &d, &cfg, BagLabel::Positive).unwrap();
        let expected = (-cfg.beta * r2).exp();
        assert!((p.p0 - expected).abs() <= 1e-10, "{} vs {expected}", p.p0);
        assert!((p.p0 + p.p1 - 1.0).abs() <= 1e-15);
    }
}

#[test]
fn positive_points_are_reweighted_by_bag_balance() {
    let stats = DataStats {
        mu0: vec![0.0; 2],
        n_target: 40,
        n_background: 160,
    };
    assert_eq!(delta_n(true, &stats, 0.5).unwrap(), 2.0);
    assert_eq!(delta_n(false, &stats, 0.5).unwrap(), 1.0);
    let none = DataStats {
        n_target: 0,
        ..stats
    };
    assert!(delta_n(true, &none, 1.0).is_err());
}

#[test]
fn separable_instances_are_learned_exactly() {
    let grid = FrequencyGrid::default_wideband();
    for seed in 1..=3 {
        let bags = separable_instance(&grid, seed).unwrap();
        let model = train(&bags, &grid, &TrainConfig::default()).unwrap();
        assert_eq!(
            bag_accuracy(&model, &bags, 0.5).unwrap(),
            1.0,
            "seed {seed}"
        );
        let log = &model.log;
        assert!(log.iter().all(|v| v.is_finite()));
        assert!(log.last().unwrap() < log.first().unwrap());
    }
}

#[test]
fn training_is_reproducible_and_seed_dependent() {
    let grid = FrequencyGrid::default_wideband();
    let bags = separable_instance(&grid, 7).unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    let a = train(&bags, &grid, &cfg).unwrap();
    let b = train(&bags, &grid, &cfg).unwrap();
    assert_eq!(a, b);
    let c = train(
        &bags,
        &grid,
        &TrainConfig {
            seed: cfg.seed + 1,
            ..cfg
        },
    )
    .unwrap();
    assert_ne!(a.dictionary, c.dictionary);
}

#[test]
fn saved_model_scores_identically() {
    let grid = FrequencyGrid::default_wideband();
    let bags = separable_instance(&grid, 9).unwrap();
    let model = train(
        &bags,
        &grid,
        &TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let mut buf = Vec::new();
    write_model(&model, &mut buf).unwrap();
    let loaded = read_model(buf.as_slice()).unwrap();
    assert_eq!(loaded, model);
    for bag in &bags {
        for pooling in [Pooling::Max, Pooling::Mean] {
            let s = classify_alarm(&bag.points, &model, pooling).unwrap();
            assert_eq!(
                s.to_bits(),
                classify_alarm(&bag.points, &loaded, pooling)
                    .unwrap()
                    .to_bits()
            );
        }
    }
}

#[test]
fn degenerate_training_sets_are_rejected() {
    let grid = FrequencyGrid::default_wideband();
    let bags = separable_instance(&grid, 1).unwrap();
    let negatives: Vec<_> = bags.iter().filter(|b| !b.is_positive()).cloned().collect();
    assert!(train(&negatives, &grid, &TrainConfig::default()).is_err());
    let mut hollow = bags.clone();
    hollow[0].points.clear();
    assert!(train(&hollow, &grid, &TrainConfig::default()).is_err());
    assert!(train(
        &bags,
        &grid,
        &TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        }
    )
    .is_err());
}
