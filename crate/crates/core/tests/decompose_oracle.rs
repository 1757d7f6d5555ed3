//! Decomposition solver against analytic ratios and a brute-force grid oracle.
//!
//! Instances are built so the target is an exact nonnegative combination of
//! independent bases and the calibrator equals the sum of the bases. Every
//! zero-loss solution then satisfies `eta_c + eta_u = a_c`, so the recovered
//! ratio must equal `a_c / sum(a)` no matter how the fit splits mass between
//! the per-class factors and the calibrator.

use decaf_core::attack::{
    decompose, decomposition_loss, ClassBasis, DecomposeOpts, GradientBasisSet, GradientChange,
};
use decaf_core::rng;
use rand::Rng;

struct Instance {
    g: GradientChange<f64>,
    bases: GradientBasisSet<f64>,
    coeffs: Vec<f64>,
}

fn build_instance(seed: u64, k: usize) -> Instance {
    let mut r = rng::stream(seed, "decompose-oracle", &[]);
    let block = 4usize;
    let len = k * block;

    let mut per_class = Vec::with_capacity(k);
    for c in 0..k {
        let mut values = vec![0.0f64; len];
        for (j, v) in values.iter_mut().enumerate() {
            let own_block = j / block == c;
            *v = if own_block {
                r.gen_range(1.0..2.0)
            } else {
                r.gen_range(0.0..0.2)
            };
        }
        per_class.push(ClassBasis { class: c, values });
    }
    let mut unified = vec![0.0f64; len];
    for basis in &per_class {
        for (u, &v) in unified.iter_mut().zip(&basis.values) {
            *u += v;
        }
    }

    let coeffs: Vec<f64> = (0..k).map(|_| r.gen_range(0.5..1.5)).collect();
    let mut target = vec![0.0f64; len];
    for (basis, &a) in per_class.iter().zip(&coeffs) {
        for (t, &v) in target.iter_mut().zip(&basis.values) {
            *t += a * v;
        }
    }

    Instance {
        g: GradientChange {
            values: target,
            user: 0,
            round: 1,
        },
        bases: GradientBasisSet { per_class, unified },
        coeffs,
    }
}

/// Exhaustive search over an eta grid, returning the best (eta, eta_u, loss).
fn grid_oracle(inst: &Instance, step: f64, max: f64) -> (Vec<f64>, f64, f64) {
    let k = inst.bases.per_class.len();
    let points = (max / step).round() as usize + 1;
    let mut best = (vec![0.0; k], 0.0, f64::INFINITY);
    let mut eta = vec![0.0f64; k];
    let mut counters = vec![0usize; k + 1];
    loop {
        for (i, &c) in counters.iter().take(k).enumerate() {
            eta[i] = c as f64 * step;
        }
        let eta_u = counters[k] as f64 * step;
        let loss = decomposition_loss(&inst.g, &inst.bases, &eta, eta_u);
        if loss < best.2 {
            best = (eta.clone(), eta_u, loss);
        }
        // Odometer increment.
        let mut pos = 0;
        loop {
            counters[pos] += 1;
            if counters[pos] < points {
                break;
            }
            counters[pos] = 0;
            pos += 1;
            if pos > k {
                return best;
            }
        }
    }
}

fn ratios(eta: &[f64], eta_u: f64) -> Vec<f64> {
    let k = eta.len() as f64;
    let denom: f64 = eta.iter().sum::<f64>() + k * eta_u;
    eta.iter().map(|&e| (e + eta_u) / denom).collect()
}

#[test]
fn solver_matches_analytic_ratios_and_grid_oracle() {
    let step = 0.08;
    let max = 1.6;
    for seed in 0..20u64 {
        let k = 2 + (seed % 2) as usize;
        let inst = build_instance(seed, k);
        let total: f64 = inst.coeffs.iter().sum();
        let analytic: Vec<f64> = inst.coeffs.iter().map(|&a| a / total).collect();

        let result = decompose(
            &inst.g,
            &inst.bases,
            k,
            &Default::default(),
            &DecomposeOpts::default(),
        )
        .unwrap();

        for (c, (&got, &want)) in result
            .composition
            .as_slice()
            .iter()
            .zip(&analytic)
            .enumerate()
        {
            assert!(
                (got - want).abs() <= 1e-3,
                "seed {seed} class {c}: solver {got} vs analytic {want}"
            );
        }

        let (grid_eta, grid_eta_u, grid_loss) = grid_oracle(&inst, step, max);
        let grid_r = ratios(&grid_eta, grid_eta_u);
        // One grid cell of eta error translates to roughly 2*step/total in
        // ratio space.
        let tol = 2.0 * step / total;
        for (c, (&got, &gr)) in result
            .composition
            .as_slice()
            .iter()
            .zip(&grid_r)
            .enumerate()
        {
            assert!(
                (got - gr).abs() <= tol,
                "seed {seed} class {c}: solver {got} vs grid {gr} (tol {tol})"
            );
        }
        // The solver may never end up worse than the best grid point.
        assert!(
            result.loss <= grid_loss + 1e-9,
            "seed {seed}: solver loss {} vs grid loss {grid_loss}",
            result.loss
        );
    }
}
