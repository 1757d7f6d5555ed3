//! Update perturbations a user may apply before the server sees the model.
//!
//! Two mechanisms: Gaussian noise on the clipped whole-model update, and
//! training-time dropout on hidden activations. Dropout is consumed inside
//! local training; the noise mechanism acts on the finished round update.

use serde::{Deserialize, Serialize};

use crate::nn::Model;
use crate::{rng, Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DefenseConfig<F> {
    None,
    /// Mask hidden activations during local training at the given rate.
    Dropout { rate: F },
    /// Clip the round update to L2 norm `clip_norm`, then add Gaussian noise
    /// with per-entry standard deviation `noise_multiplier * clip_norm`.
    Dp { noise_multiplier: F, clip_norm: F },
}

impl<F> Default for DefenseConfig<F> {
    fn default() -> Self {
        DefenseConfig::None
    }
}

impl<F: Scalar> DefenseConfig<F> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DefenseConfig::None => Ok(()),
            DefenseConfig::Dropout { rate } => {
                if rate >= F::zero() && rate < F::one() {
                    Ok(())
                } else {
                    Err(Error::config("dropout rate must lie in [0, 1)"))
                }
            }
            DefenseConfig::Dp {
                noise_multiplier,
                clip_norm,
            } => {
                if noise_multiplier < F::zero() {
                    return Err(Error::config("noise multiplier must be >= 0"));
                }
                if !(clip_norm > F::zero()) {
                    return Err(Error::config("clip norm must be > 0"));
                }
                Ok(())
            }
        }
    }

    /// Dropout rate to use inside local training, if any.
    pub fn dropout_rate(&self) -> Option<F> {
        match *self {
            DefenseConfig::Dropout { rate } if rate > F::zero() => Some(rate),
            _ => None,
        }
    }
}

/// Clips a parameter delta to global L2 norm `clip_norm` and adds independent
/// Gaussian noise of standard deviation `noise_multiplier * clip_norm` per
/// entry. With `noise_multiplier = 0` and an in-norm delta this is the
/// identity.
pub fn apply_dp<F: Scalar>(
    delta: &mut [F],
    noise_multiplier: F,
    clip_norm: F,
    seed: u64,
    indices: &[u64],
) -> Result<()> {
    if noise_multiplier < F::zero() || !(clip_norm > F::zero()) {
        return Err(Error::config("invalid dp parameters"));
    }
    let norm = delta
        .iter()
        .map(|&v| v * v)
        .fold(F::zero(), |a, b| a + b)
        .sqrt();
    if norm > clip_norm {
        let scale = clip_norm / norm;
        for v in delta.iter_mut() {
            *v = *v * scale;
        }
    }
    if noise_multiplier > F::zero() {
        let sigma = (noise_multiplier * clip_norm).to_f64().unwrap();
        let mut noise_rng = rng::stream(seed, "dp", indices);
        let normal = rand_distr::StandardNormal;
        for v in delta.iter_mut() {
            let z: f64 = rand::Rng::sample(&mut noise_rng, normal);
            *v = *v + F::from_f64_lossy(sigma * z);
        }
    }
    Ok(())
}

/// Applies the noise mechanism to a trained local model, returning what the
/// server observes. `None` and `Dropout` pass the model through untouched
/// (dropout acted during training).
pub fn defend_update<F: Scalar>(
    local: &Model<F>,
    global: &Model<F>,
    config: &DefenseConfig<F>,
    seed: u64,
    user: usize,
    round: usize,
) -> Result<Model<F>> {
    match *config {
        DefenseConfig::Dp {
            noise_multiplier,
            clip_norm,
        } => {
            let global_flat = global.params_flat();
            let mut delta: Vec<F> = local
                .params_flat()
                .iter()
                .zip(&global_flat)
                .map(|(&l, &g)| l - g)
                .collect();
            apply_dp(
                &mut delta,
                noise_multiplier,
                clip_norm,
                seed,
                &[user as u64, round as u64],
            )?;
            let defended: Vec<F> = global_flat
                .iter()
                .zip(&delta)
                .map(|(&g, &d)| g + d)
                .collect();
            local.with_params_flat(&defended)
        }
        _ => Ok(local.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_small_delta_is_identity() {
        let mut delta = vec![0.3f64, -0.4, 0.0];
        let original = delta.clone();
        apply_dp(&mut delta, 0.0, 1.0, 1, &[]).unwrap();
        assert_eq!(delta, original);
    }

    #[test]
    fn oversized_delta_clips_to_exact_norm() {
        // Norm 2C with C = 1.
        let mut delta = vec![2.0f64, 0.0, 0.0];
        apply_dp(&mut delta, 0.0, 1.0, 1, &[]).unwrap();
        let norm: f64 = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(delta[0], 1.0);
    }

    #[test]
    fn clipping_never_grows_the_norm() {
        for seed in 0..20u64 {
            let mut r = crate::rng::stream(seed, "dp-test", &[]);
            let mut delta: Vec<f64> = (0..16).map(|_| rand::Rng::gen_range(&mut r, -2.0..2.0)).collect();
            let before: f64 = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
            apply_dp(&mut delta, 0.0, 0.7, seed, &[]).unwrap();
            let after: f64 = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(after <= before + 1e-12);
            assert!(after <= 0.7 + 1e-12);
        }
    }

    #[test]
    fn noise_energy_matches_expectation() {
        // E[||noise||^2] = sigma^2 * dim with sigma = multiplier * clip.
        let dim = 20_000usize;
        let mut delta = vec![0.0f64; dim];
        apply_dp(&mut delta, 0.5, 2.0, 99, &[]).unwrap();
        let energy: f64 = delta.iter().map(|v| v * v).sum();
        let expected = 0.25 * 4.0 * dim as f64;
        assert!(
            (energy - expected).abs() / expected < 0.1,
            "noise energy {energy} vs expected {expected}"
        );
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let mut a = vec![0.0f64; 8];
        let mut b = vec![0.0f64; 8];
        apply_dp(&mut a, 1.0, 1.0, 5, &[2, 3]).unwrap();
        apply_dp(&mut b, 1.0, 1.0, 5, &[2, 3]).unwrap();
        assert_eq!(a, b);
        let mut c = vec![0.0f64; 8];
        apply_dp(&mut c, 1.0, 1.0, 5, &[2, 4]).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn config_validation() {
        assert!(DefenseConfig::Dropout { rate: 0.5f64 }.validate().is_ok());
        assert!(DefenseConfig::Dropout { rate: 1.0f64 }.validate().is_err());
        assert!(DefenseConfig::Dp {
            noise_multiplier: 0.0f64,
            clip_norm: 0.0
        }
        .validate()
        .is_err());
    }
}
