//! Scratch probe: where does the decomposition error come from?

use decaf_core::attack::{construct_gradient_bases, decompose, DecomposeOpts, GradientChange};
use decaf_core::data::{generate_synthetic, partition, reserve_auxiliary, CompositionSpec};
use decaf_core::fl::{local_train, run, FlConfig, LocalTrainOpts};
use decaf_core::nn::Model;
use decaf_core::{defense::DefenseConfig, rng};
use std::collections::BTreeSet;

fn solve_ls(gram: &[Vec<f64>], lin: &[f64]) -> Vec<f64> {
    // Gaussian elimination with tiny ridge.
    let n = lin.len();
    let mut a: Vec<Vec<f64>> = gram.iter().cloned().collect();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1e-12;
        row.push(lin[i]);
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()).unwrap();
        a.swap(col, piv);
        let d = a[col][col];
        for j in col..=n {
            a[col][j] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = a[i][col];
                for j in col..=n {
                    a[i][j] -= f * a[col][j];
                }
            }
        }
    }
    (0..n).map(|i| a[i][n]).collect()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let alpha: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let batch: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1200);
    let aux_k: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(30);
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(42);
    let round_ix: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(2);

    let n = 10usize;
    let dim = 20usize;
    let pool = generate_synthetic::<f64>(n, dim, 2200, 4.0, seed).unwrap();
    let (aux, rest) = reserve_auxiliary(&pool, aux_k, seed).unwrap();
    let weights = vec![13.33, 3.33, 2.5, 18.33, 10.0, 13.33, 5.83, 1.67, 8.33, 23.33];
    let truth_spec = CompositionSpec::Proportions { weights, total: 1200 };
    let users = partition(&rest, &[truth_spec], seed).unwrap();
    let victim = &users[0];
    let truth = victim.composition().unwrap();

    let mut init_rng = rng::stream(seed, "init", &[]);
    let init = Model::dense(dim, &[32], n, &mut init_rng).unwrap();
    // Warm up the global model a couple of rounds on the victim alone.
    let cfg = FlConfig {
        rounds: round_ix,
        local_epochs: 1,
        batch_size: batch,
        learning_rate: alpha,
        seed,
        defense: DefenseConfig::None,
    };
    let history = run(&init, std::slice::from_ref(victim), &cfg).unwrap();
    let global = &history.last().unwrap().global_before;

    let opts = LocalTrainOpts {
        learning_rate: alpha,
        epochs: 1,
        batch_size: batch,
        dropout: None,
    };
    let mut train_rng = rng::stream(seed, "debug-train", &[]);
    let local = local_train(global, victim, &opts, &mut train_rng).unwrap();
    let g = GradientChange::extract(&local, global, alpha, 0, 1).unwrap();
    let bases = construct_gradient_bases(global, &aux, &BTreeSet::new(), alpha).unwrap();

    // Gram system over per-class bases + calibrator.
    let k = bases.per_class.len();
    let len = g.values.len();
    let cols: Vec<&[f64]> = bases
        .per_class
        .iter()
        .map(|b| b.values.as_slice())
        .chain(std::iter::once(bases.unified.as_slice()))
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / len as f64;
    let gram: Vec<Vec<f64>> = cols.iter().map(|ci| cols.iter().map(|cj| dot(ci, cj)).collect()).collect();
    let lin: Vec<f64> = cols.iter().map(|ci| dot(ci, &g.values)).collect();

    let ls = solve_ls(&gram, &lin);
    let r_of = |eta: &[f64], eta_u: f64| -> Vec<f64> {
        let denom: f64 = eta.iter().sum::<f64>() + k as f64 * eta_u;
        eta.iter().map(|&e| (e + eta_u) / denom).collect()
    };
    println!("truth:    {:?}", truth.as_slice().iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());
    println!("LS eta:   {:?} eta_u={:.4}", ls[..k].iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(), ls[k]);
    let r_ls = r_of(&ls[..k], ls[k]);
    println!("LS r:     {:?}", r_ls.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());

    let dec = decompose(&g, &bases, n, &BTreeSet::new(), &DecomposeOpts::default()).unwrap();
    println!("PGD r:    {:?} loss={:.3e} backoffs={}", dec.composition.as_slice().iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(), dec.loss, dec.backoffs);
    let linf_ls = truth.as_slice().iter().zip(&r_ls).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let linf_pgd = truth.as_slice().iter().zip(dec.composition.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("Linf LS={linf_ls:.4}  PGD={linf_pgd:.4}");

    // How well do the aux bases explain the victim's per-class signal?
    // Compare victim single-class full-batch steps to the aux bases.
    for c in [0usize, 3, 9] {
        let ix: Vec<usize> = (0..victim.len()).filter(|&i| victim.labels()[i] == c).collect();
        let vb = victim.subset(&ix);
        let mut r2 = rng::stream(seed, "probe", &[c as u64]);
        let vlocal = local_train(global, &vb, &LocalTrainOpts { learning_rate: alpha, epochs: 1, batch_size: vb.len(), dropout: None }, &mut r2).unwrap();
        let vg = GradientChange::extract(&vlocal, global, alpha, 0, 1).unwrap();
        let basis = &bases.per_class[c].values;
        let cos = dot(&vg.values, basis) / (dot(&vg.values, &vg.values).sqrt() * dot(basis, basis).sqrt());
        let scale = dot(&vg.values, basis) / dot(basis, basis);
        println!("class {c}: victim-vs-aux basis cosine {cos:.5}, scale {scale:.4}");
    }
}
