//! Scratch harness for ablation and defense directions. Not part of the API.

use decaf_core::attack::{attack_single_round, AttackParams};
use decaf_core::data::{generate_synthetic, partition, reserve_auxiliary, CompositionSpec};
use decaf_core::defense::DefenseConfig;
use decaf_core::fl::{run, FlConfig};
use decaf_core::nn::Model;
use decaf_core::rng;

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

struct Summary {
    mean_l1_null_users: f64,
    mean_l1_even_user: f64,
    mean_l1_all: f64,
    cmiss_frac: f64,
}

fn run_case(seed: u64, hidden: usize, aux_k: usize, defense: DefenseConfig<f64>, params: AttackParams<f64>) -> Summary {
    let n = 10usize;
    let dim = 20usize;
    let alpha = 0.015;
    let pool = generate_synthetic::<f64>(n, dim, 2200, 4.0, seed).unwrap();
    let (aux, rest) = reserve_auxiliary(&pool, aux_k, seed).unwrap();
    let users = partition(&rest, &table_specs(1200), seed).unwrap();
    let truths: Vec<_> = users.iter().map(|u| u.composition().unwrap()).collect();
    let mut init_rng = rng::stream(seed, "init", &[]);
    let init = Model::dense(dim, &[hidden], n, &mut init_rng).unwrap();
    let cfg = FlConfig {
        rounds: 4,
        local_epochs: 1,
        batch_size: 32,
        learning_rate: alpha,
        seed,
        defense,
    };
    let history = run(&init, &users, &cfg).unwrap();

    let mut l1_null = vec![];
    let mut l1_even = vec![];
    let mut l1_all = vec![];
    let mut cm_ok = 0usize;
    let mut cm_n = 0usize;
    for record in &history[1..4] {
        for user in 0..users.len() {
            match attack_single_round(record, user, &aux, alpha, &params) {
                Ok(mut entry) => {
                    entry.score_against(&truths[user]).unwrap();
                    let l1 = entry.distances.unwrap().l1;
                    l1_all.push(l1);
                    if user >= 4 {
                        l1_null.push(l1);
                    }
                    if user == 0 {
                        l1_even.push(l1);
                    }
                    cm_n += 1;
                    if entry.c_miss == truths[user].nulls() {
                        cm_ok += 1;
                    }
                }
                Err(_) => {
                    l1_all.push(2.0);
                    if user >= 4 {
                        l1_null.push(2.0);
                    }
                    if user == 0 {
                        l1_even.push(2.0);
                    }
                    cm_n += 1;
                }
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Summary {
        mean_l1_null_users: mean(&l1_null),
        mean_l1_even_user: mean(&l1_even),
        mean_l1_all: mean(&l1_all),
        cmiss_frac: cm_ok as f64 / cm_n as f64,
    }
}

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "ablate".into());
    let seed: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(42);
    let beta: f64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let epochs: usize = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let params = AttackParams {
        step_size: beta,
        epochs,
        ..AttackParams::default()
    };
    match mode.as_str() {
        "ablate" => {
            let base = run_case(seed, 32, 30, DefenseConfig::None, params);
            println!(
                "baseline: null-users L1 {:.4}, even L1 {:.4}, all {:.4}, cmiss {:.3}",
                base.mean_l1_null_users, base.mean_l1_even_user, base.mean_l1_all, base.cmiss_frac
            );
            let mut p = params;
            p.null_removal = false;
            let nr = run_case(seed, 32, 30, DefenseConfig::None, p);
            println!(
                "no-null-removal: null-users L1 {:.4} (x{:.2}), even L1 {:.4}",
                nr.mean_l1_null_users,
                nr.mean_l1_null_users / base.mean_l1_null_users,
                nr.mean_l1_even_user
            );
            let mut p = params;
            p.use_calibrator = false;
            let nc = run_case(seed, 32, 30, DefenseConfig::None, p);
            println!(
                "no-calibrator: even L1 {:.4} (x{:.2}), null-users L1 {:.4}, all {:.4}",
                nc.mean_l1_even_user,
                nc.mean_l1_even_user / base.mean_l1_even_user,
                nc.mean_l1_null_users,
                nc.mean_l1_all
            );
        }
        "width" => {
            for hidden in [128usize, 256, 512, 1024] {
                let s = run_case(seed, hidden, 30, DefenseConfig::None, params);
                println!("width {hidden}: mean L1 {:.4}, cmiss {:.3}", s.mean_l1_all, s.cmiss_frac);
            }
        }
        "aux" => {
            for aux_k in [2usize, 10, 30] {
                let s = run_case(seed, 32, aux_k, DefenseConfig::None, params);
                println!("aux {aux_k}: mean L1 {:.4}, cmiss {:.3}", s.mean_l1_all, s.cmiss_frac);
            }
        }
        "defense" => {
            let base = run_case(seed, 32, 30, DefenseConfig::None, params);
            println!("baseline: all L1 {:.4}, cmiss {:.3}", base.mean_l1_all, base.cmiss_frac);
            let drop = run_case(seed, 32, 30, DefenseConfig::Dropout { rate: 0.2 }, params);
            println!(
                "dropout 0.2: all L1 {:.4} (x{:.2}), cmiss {:.3}",
                drop.mean_l1_all,
                drop.mean_l1_all / base.mean_l1_all,
                drop.cmiss_frac
            );
            let dp = run_case(
                seed,
                32,
                30,
                DefenseConfig::Dp { noise_multiplier: 16.0, clip_norm: 1.0 },
                params,
            );
            println!(
                "dp sigma=16: all L1 {:.4} (x{:.2}), cmiss {:.3}",
                dp.mean_l1_all,
                dp.mean_l1_all / base.mean_l1_all,
                dp.cmiss_frac
            );
        }
        other => panic!("unknown mode {other}"),
    }
}
