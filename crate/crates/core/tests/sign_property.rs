//! The sign lemma behind null-class detection: with SGD and a relu-activated
//! penultimate layer, training on a single class can only push the other
//! classes' target-layer rows down. Holds per step, hence for any number of
//! local steps.

use decaf_core::attack::GradientChange;
use decaf_core::data::generate_synthetic;
use decaf_core::fl::{local_train, LocalTrainOpts};
use decaf_core::nn::Model;
use decaf_core::rng;
use proptest::prelude::*;

fn check_single_class_signs(seed: u64, alpha: f64, epochs: usize, batch_size: usize) {
    let mut r = rng::stream(seed, "sign-case", &[]);
    let classes = rand::Rng::gen_range(&mut r, 3..8usize);
    let dim = rand::Rng::gen_range(&mut r, 4..12usize);
    let hidden = rand::Rng::gen_range(&mut r, 4..16usize);
    let target_class = rand::Rng::gen_range(&mut r, 0..classes);

    let pool = generate_synthetic::<f64>(classes, dim, 12, 4.0, seed ^ 0x5eed).unwrap();
    let ix: Vec<usize> = (0..pool.len())
        .filter(|&i| pool.labels()[i] == target_class)
        .collect();
    let victim = pool.subset(&ix);

    let global = Model::dense(dim, &[hidden], classes, &mut r).unwrap();
    let opts = LocalTrainOpts {
        learning_rate: alpha,
        epochs,
        batch_size,
        dropout: None,
    };
    let mut train_rng = rng::stream(seed, "sign-train", &[]);
    let local = local_train(&global, &victim, &opts, &mut train_rng).unwrap();
    let g = GradientChange::extract(&local, &global, alpha, 0, 1).unwrap();

    let mut in_class_positive = false;
    for class in 0..classes {
        let block = g.class_block(class, classes);
        if class == target_class {
            in_class_positive = block.iter().any(|&v| v > 0.0);
        } else {
            for (j, &v) in block.iter().enumerate() {
                assert!(
                    v <= 0.0,
                    "seed {seed}: off-class {class} entry {j} positive: {v}"
                );
            }
        }
    }
    assert!(
        in_class_positive,
        "seed {seed}: trained class {target_class} shows no positive change"
    );
}

#[test]
fn single_class_training_never_lifts_other_rows() {
    for seed in 0..40u64 {
        let alpha = 0.02 + 0.01 * (seed % 7) as f64;
        let epochs = 1 + (seed % 3) as usize;
        let batch_size = 3 + (seed % 5) as usize;
        check_single_class_signs(seed, alpha, epochs, batch_size);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Randomized analogue over seeds and step sizes.
    #[test]
    fn sign_lemma_randomized(seed in 0u64..10_000, alpha in 0.005f64..0.3, epochs in 1usize..3) {
        check_single_class_signs(seed, alpha, epochs, 4);
    }
}

/// Mixed batches: a class with zero samples in the victim's data can never be
/// flagged present at threshold zero, no matter the mixture.
#[test]
fn absent_classes_stay_nonpositive_under_mixtures() {
    for seed in 0..20u64 {
        let mut r = rng::stream(seed, "sign-mixed", &[]);
        let classes = 6usize;
        let dim = 10usize;
        let pool = generate_synthetic::<f64>(classes, dim, 20, 4.0, seed).unwrap();

        // Keep a random nonempty subset of classes.
        let mut kept: Vec<usize> = (0..classes)
            .filter(|_| rand::Rng::gen_bool(&mut r, 0.6))
            .collect();
        if kept.is_empty() {
            kept.push(rand::Rng::gen_range(&mut r, 0..classes));
        }
        let ix: Vec<usize> = (0..pool.len())
            .filter(|&i| kept.contains(&pool.labels()[i]))
            .collect();
        let victim = pool.subset(&ix);

        let global = Model::dense(dim, &[8], classes, &mut r).unwrap();
        let opts = LocalTrainOpts {
            learning_rate: 0.05,
            epochs: 2,
            batch_size: 8,
            dropout: None,
        };
        let mut train_rng = rng::stream(seed, "sign-mixed-train", &[]);
        let local = local_train(&global, &victim, &opts, &mut train_rng).unwrap();
        let g = GradientChange::extract(&local, &global, 0.05, 0, 1).unwrap();

        for class in 0..classes {
            if kept.contains(&class) {
                continue;
            }
            let block = g.class_block(class, classes);
            assert!(
                block.iter().all(|&v| v <= 0.0),
                "seed {seed}: absent class {class} shows positive change"
            );
        }
    }
}
