//! Scratch harness for picking reference-config knobs. Not part of the API.

use decaf_core::attack::{attack_single_round, AttackParams};
use decaf_core::data::{generate_synthetic, partition, reserve_auxiliary, CompositionSpec};
use decaf_core::fl::{run, FlConfig};
use decaf_core::nn::Model;
use decaf_core::{defense::DefenseConfig, rng};

fn table_specs(total: usize) -> Vec<CompositionSpec> {
    let rows: Vec<Vec<f64>> = vec![
        vec![10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0],
        vec![6.67, 10.0, 8.33, 7.5, 13.33, 15.83, 5.83, 10.0, 12.5, 10.0],
        vec![15.0, 15.83, 7.5, 5.0, 15.0, 12.5, 13.33, 6.67, 4.17, 5.0],
        vec![13.33, 3.33, 2.5, 18.33, 10.0, 13.33, 5.83, 1.67, 8.33, 23.33],
        vec![5.0, 18.33, 0.0, 8.33, 10.0, 12.5, 25.0, 8.33, 6.67, 5.83],
        vec![6.67, 10.83, 15.0, 5.0, 16.67, 0.0, 12.5, 8.33, 25.0, 0.0],
        vec![16.67, 7.5, 13.33, 0.0, 7.5, 25.0, 0.0, 0.0, 26.67, 3.33],
        vec![0.0, 0.0, 33.33, 5.0, 0.0, 0.0, 26.67, 3.33, 0.0, 31.67],
        vec![0.0, 0.0, 0.0, 41.67, 0.0, 8.33, 0.0, 0.0, 0.0, 50.0],
        vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 100.0, 0.0, 0.0],
    ];
    rows.into_iter()
        .map(|weights| CompositionSpec::Proportions { weights, total })
        .collect()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let alpha: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let hidden: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(32);
    let beta: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(42);
    let aux_k: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(10);
    let epochs: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let batch: usize = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(32);
    let total: usize = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(1200);

    let n = 10usize;
    let dim = 20usize;
    let pool = generate_synthetic::<f64>(n, dim, total * 10 / 6, 4.0, seed).unwrap();
    let (aux, rest) = reserve_auxiliary(&pool, aux_k, seed).unwrap();
    let users = partition(&rest, &table_specs(total), seed).unwrap();
    let truths: Vec<_> = users.iter().map(|u| u.composition().unwrap()).collect();

    let mut init_rng = rng::stream(seed, "init", &[]);
    let init = Model::dense(dim, &[hidden], n, &mut init_rng).unwrap();
    let cfg = FlConfig {
        rounds: 5,
        local_epochs: 1,
        batch_size: batch,
        learning_rate: alpha,
        seed,
        defense: DefenseConfig::None,
    };
    let t0 = std::time::Instant::now();
    let history = run(&init, &users, &cfg).unwrap();
    println!("fl run: {:?}", t0.elapsed());

    let params = AttackParams {
        step_size: beta,
        epochs,
        ..AttackParams::default()
    };
    for round_ix in [1usize, 2, 3, 4] {
        let record = &history[round_ix];
        let mut l1s = vec![];
        let mut linfs = vec![];
        let mut cmiss_ok = 0;
        for user in 0..users.len() {
            let mut entry = attack_single_round(record, user, &aux, alpha, &params).unwrap();
            entry.score_against(&truths[user]).unwrap();
            let d = entry.distances.unwrap();
            l1s.push(d.l1);
            linfs.push(d.linf);
            if entry.c_miss_correct == Some(true) {
                cmiss_ok += 1;
            } else {
                let truth_nulls = truths[user].nulls();
                let false_null: Vec<_> = entry.c_miss.difference(&truth_nulls).collect();
                let missed_null: Vec<_> = truth_nulls.difference(&entry.c_miss).collect();
                println!(
                    "    user {user}: false-null {false_null:?} missed-null {missed_null:?} (truth counts {:?})",
                    users[user].class_counts()
                );
            }
        }
        let fmt = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.3}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        println!(
            "round {}: cmiss {}/10  L1 [{}]  Linf [{}]",
            record.round,
            cmiss_ok,
            fmt(&l1s),
            fmt(&linfs)
        );
    }
    println!("total: {:?}", t0.elapsed());
}
