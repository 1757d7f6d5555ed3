//! Distance metrics between inferred and true compositions, plus the
//! random-guess baseline they are compared against.

use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result, Scalar};

/// Which Lp norm to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
    LInf,
}

/// `L_p(x, y) = (sum |x_m - y_m|^p)^(1/p)`; `p = inf` is the max absolute
/// difference.
pub fn lp_distance<F: Scalar>(x: &[F], y: &[F], norm: Norm) -> Result<F> {
    if x.len() != y.len() {
        return Err(Error::config(format!(
            "lp_distance length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let diffs = x.iter().zip(y.iter()).map(|(&a, &b)| (a - b).abs());
    Ok(match norm {
        Norm::L1 => diffs.sum(),
        Norm::L2 => diffs.map(|d| d * d).sum::<F>().sqrt(),
        Norm::LInf => diffs.fold(F::zero(), F::max),
    })
}

/// The three distances the reports carry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceTriple<F> {
    pub l1: F,
    pub l2: F,
    pub linf: F,
}

impl<F: Scalar> DistanceTriple<F> {
    pub fn between(x: &[F], y: &[F]) -> Result<Self> {
        Ok(DistanceTriple {
            l1: lp_distance(x, y, Norm::L1)?,
            l2: lp_distance(x, y, Norm::L2)?,
            linf: lp_distance(x, y, Norm::LInf)?,
        })
    }
}

/// Mean Lp distances of uniform-simplex guesses against `truth`.
///
/// Each trial draws a composition uniformly from the full simplex (Dirichlet
/// with unit concentration, via normalized exponentials); the guesser is not
/// told which classes are null.
pub fn random_guess_baseline<F: Scalar>(
    truth: &[F],
    trials: usize,
    seed: u64,
) -> Result<DistanceTriple<F>> {
    if truth.is_empty() {
        return Err(Error::config("truth composition must be nonempty"));
    }
    if trials == 0 {
        return Err(Error::config("trials must be >= 1"));
    }
    let mut guess_rng = rng::stream(seed, "guess", &[]);
    let mut acc = DistanceTriple {
        l1: F::zero(),
        l2: F::zero(),
        linf: F::zero(),
    };
    let mut guess = vec![F::zero(); truth.len()];
    for _ in 0..trials {
        let mut sum = 0.0f64;
        for g in guess.iter_mut() {
            let u: f64 = rand::Rng::gen_range(&mut guess_rng, f64::MIN_POSITIVE..1.0);
            let e = -u.ln();
            *g = F::from_f64_lossy(e);
            sum += e;
        }
        let inv = F::from_f64_lossy(1.0 / sum);
        for g in guess.iter_mut() {
            *g = *g * inv;
        }
        let d = DistanceTriple::between(&guess, truth)?;
        acc.l1 = acc.l1 + d.l1;
        acc.l2 = acc.l2 + d.l2;
        acc.linf = acc.linf + d.linf;
    }
    let inv_trials = F::one() / F::from_usize_lossy(trials);
    Ok(DistanceTriple {
        l1: acc.l1 * inv_trials,
        l2: acc.l2 * inv_trials,
        linf: acc.linf * inv_trials,
    })
}
