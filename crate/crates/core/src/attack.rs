//! The decomposition attack pipeline.
//!
//! From a recorded round the server extracts the victim's target-layer
//! gradient change, removes null classes by the sign test, builds per-class
//! gradient bases plus a unified calibrator basis from its auxiliary set, and
//! solves a nonnegative least-squares fit whose scalar factors map to class
//! proportions. Everything is a pure function of the recorded history; the
//! pipeline never feeds anything back into the simulation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{AuxiliarySet, Composition};
use crate::fl::RoundRecord;
use crate::metrics::DistanceTriple;
use crate::nn::{self, Model};
use crate::{Error, Result, Scalar};

/// Flattened change of the final-layer weights, `(local - global) / alpha`,
/// row-major by class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientChange<F> {
    pub values: Vec<F>,
    pub user: usize,
    pub round: usize,
}

impl<F: Scalar> GradientChange<F> {
    /// Extracts the target-layer gradient change of one recorded local model.
    pub fn extract(
        local: &Model<F>,
        global_prev: &Model<F>,
        alpha: F,
        user: usize,
        round: usize,
    ) -> Result<Self> {
        if !(alpha > F::zero()) {
            return Err(Error::config("extraction requires a positive learning rate"));
        }
        if !local.shape_congruent(global_prev) {
            return Err(Error::config("local and global models are not shape-congruent"));
        }
        let local_flat = nn::target_layer_flat(local);
        let global_flat = nn::target_layer_flat(global_prev);
        let values = local_flat
            .iter()
            .zip(&global_flat)
            .map(|(&l, &g)| (l - g) / alpha)
            .collect();
        Ok(GradientChange { values, user, round })
    }

    /// Entries belonging to class `i`'s rows, i.e. indices `[i*m, (i+1)*m)`.
    pub fn class_block(&self, class: usize, class_count: usize) -> &[F] {
        let m = self.values.len() / class_count;
        &self.values[class * m..(class + 1) * m]
    }
}

/// Outcome of the null-class sign test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NullClassReport<F> {
    pub missing: BTreeSet<usize>,
    pub threshold: F,
}

/// Flags class `i` as missing iff no entry of its block exceeds `threshold`.
///
/// Under SGD with a relu-activated penultimate layer a class the user never
/// trained on cannot produce a positive entry, so with threshold 0 a truly
/// null class is never reported present. An update where every class fails
/// the test (for example a zero update) is rejected as degenerate rather
/// than reported.
pub fn remove_null_classes<F: Scalar>(
    g: &GradientChange<F>,
    class_count: usize,
    threshold: F,
) -> Result<NullClassReport<F>> {
    if class_count == 0 || g.values.len() % class_count != 0 || g.values.is_empty() {
        return Err(Error::config(format!(
            "gradient change length {} is not divisible into {class_count} class blocks",
            g.values.len()
        )));
    }
    if !(threshold >= F::zero()) {
        return Err(Error::config("null-class threshold must be >= 0"));
    }
    let mut missing = BTreeSet::new();
    for class in 0..class_count {
        let block = g.class_block(class, class_count);
        if !block.iter().any(|&v| v > threshold) {
            missing.insert(class);
        }
    }
    if missing.len() == class_count {
        return Err(Error::DegenerateUpdate);
    }
    Ok(NullClassReport { missing, threshold })
}

/// One per-class gradient basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassBasis<F> {
    pub class: usize,
    pub values: Vec<F>,
}

/// Per-class bases for every non-null class plus the unified calibrator
/// basis, all computed from the same broadcast global model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientBasisSet<F> {
    pub per_class: Vec<ClassBasis<F>>,
    pub unified: Vec<F>,
}

impl<F: Scalar> GradientBasisSet<F> {
    /// Number of bases including the calibrator.
    pub fn len(&self) -> usize {
        self.per_class.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        self.per_class.is_empty()
    }
}

/// Simulates one full-batch SGD step per non-null class on the auxiliary
/// samples and extracts each step's target-layer change, plus the same for
/// the union of all non-null auxiliary samples (the calibrator).
pub fn construct_gradient_bases<F: Scalar>(
    global_prev: &Model<F>,
    aux: &AuxiliarySet<F>,
    c_miss: &BTreeSet<usize>,
    alpha: F,
) -> Result<GradientBasisSet<F>> {
    let class_count = global_prev.class_count();
    if aux.class_count() != class_count {
        return Err(Error::config(format!(
            "auxiliary set covers {} classes, model has {class_count}",
            aux.class_count()
        )));
    }
    let non_null: BTreeSet<usize> = (0..class_count).filter(|c| !c_miss.contains(c)).collect();
    if non_null.is_empty() {
        return Err(Error::config("no non-null classes left to decompose"));
    }

    let simulate = |batch: &nn::Batch<F>| -> Result<Vec<F>> {
        let (_, grads) = nn::loss_and_gradients(global_prev, batch)?;
        let stepped = nn::sgd_step(global_prev, &grads, alpha)?;
        Ok(GradientChange::extract(&stepped, global_prev, alpha, 0, 0)?.values)
    };

    let mut per_class = Vec::with_capacity(non_null.len());
    for &class in &non_null {
        let batch = aux.class_batch(class)?;
        per_class.push(ClassBasis {
            class,
            values: simulate(&batch)?,
        });
    }
    // The union step's magnitude depends on the batch-loss reduction
    // convention (a mean-reduced loss divides the class contributions by K).
    // Rescale by the class count so the calibrator equals the sum of the
    // per-class bases, the form the proportion formula expects.
    let union = aux.union_batch(&non_null)?;
    let scale = F::from_usize_lossy(non_null.len());
    let unified = simulate(&union)?.into_iter().map(|v| v * scale).collect();
    Ok(GradientBasisSet { per_class, unified })
}

/// Knobs for the scalar-factor fit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecomposeOpts<F> {
    /// Gradient-descent step size `beta`.
    pub step_size: F,
    /// Fixed iteration count.
    pub epochs: usize,
    /// When false the calibrator basis is dropped from the objective
    /// (ablation mode) and proportions come from the per-class factors alone.
    pub use_calibrator: bool,
}

impl<F: Scalar> Default for DecomposeOpts<F> {
    fn default() -> Self {
        DecomposeOpts {
            step_size: F::from_f64_lossy(0.05),
            epochs: 1000,
            use_calibrator: true,
        }
    }
}

/// Result of the constrained decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionResult<F> {
    /// Length-N proportions with exact zeros on the removed classes.
    pub composition: Composition<F>,
    /// Final per-class scalar factors, aligned with the basis set's order.
    pub eta: Vec<F>,
    /// Final calibrator factor (zero when the calibrator is disabled).
    pub eta_u: F,
    /// Final mean-squared residual of the fit.
    pub loss: F,
    /// Times the step size was halved after a loss increase; a nonzero value
    /// is a step-size diagnostic, not an error.
    pub backoffs: usize,
}

/// Mean squared residual of `sum_c eta_c g_c + eta_u g_u - g_target`,
/// evaluated directly. Used as an independent check of the quadratic-form
/// objective the solver iterates on.
pub fn decomposition_loss<F: Scalar>(
    g_target: &GradientChange<F>,
    bases: &GradientBasisSet<F>,
    eta: &[F],
    eta_u: F,
) -> F {
    let len = g_target.values.len();
    let mut acc = F::zero();
    for k in 0..len {
        let mut h = eta_u * bases.unified[k];
        for (basis, &e) in bases.per_class.iter().zip(eta) {
            h = h + e * basis.values[k];
        }
        let r = h - g_target.values[k];
        acc = acc + r * r;
    }
    acc / F::from_usize_lossy(len)
}

/// Fits `g_target` as a nonnegative combination of the bases by projected
/// gradient descent on the mean-squared error, then maps the factors to
/// proportions: `r_c = (eta_c + eta_u) / sum_c (eta_c + eta_u)`.
///
/// Factors start at `1 / (K + 1)` and are clamped to zero after every step.
/// If a step increases the objective it is retried with the step size halved,
/// at most ten times per run.
pub fn decompose<F: Scalar>(
    g_target: &GradientChange<F>,
    bases: &GradientBasisSet<F>,
    class_count: usize,
    c_miss: &BTreeSet<usize>,
    opts: &DecomposeOpts<F>,
) -> Result<DecompositionResult<F>> {
    if opts.epochs == 0 {
        return Err(Error::config("decomposition needs at least one epoch"));
    }
    if !(opts.step_size > F::zero()) {
        return Err(Error::config("step size must be > 0"));
    }
    let len = g_target.values.len();
    if bases.per_class.is_empty() {
        return Err(Error::config("basis set is empty"));
    }
    if bases.unified.len() != len || bases.per_class.iter().any(|b| b.values.len() != len) {
        return Err(Error::config("bases are not congruent with the gradient change"));
    }

    // Stack the active bases; the calibrator is the last column when enabled.
    let k = bases.per_class.len();
    let factors = if opts.use_calibrator { k + 1 } else { k };
    let columns: Vec<&[F]> = bases
        .per_class
        .iter()
        .map(|b| b.values.as_slice())
        .chain(opts.use_calibrator.then_some(bases.unified.as_slice()))
        .collect();

    // The objective is quadratic, so iterate on its Gram form:
    // loss = eta' G eta - 2 b' eta + c, grad = 2 (G eta - b).
    let inv_len = F::one() / F::from_usize_lossy(len);
    let mut gram = vec![F::zero(); factors * factors];
    let mut lin = vec![F::zero(); factors];
    for i in 0..factors {
        for j in i..factors {
            let dot: F = columns[i]
                .iter()
                .zip(columns[j])
                .map(|(&a, &b)| a * b)
                .sum::<F>()
                * inv_len;
            gram[i * factors + j] = dot;
            gram[j * factors + i] = dot;
        }
        lin[i] = columns[i]
            .iter()
            .zip(&g_target.values)
            .map(|(&a, &b)| a * b)
            .sum::<F>()
            * inv_len;
    }
    let constant: F = g_target.values.iter().map(|&v| v * v).sum::<F>() * inv_len;

    let objective = |eta: &[F]| -> F {
        let mut quad = F::zero();
        let mut cross = F::zero();
        for i in 0..factors {
            let mut gi = F::zero();
            for j in 0..factors {
                gi = gi + gram[i * factors + j] * eta[j];
            }
            quad = quad + eta[i] * gi;
            cross = cross + lin[i] * eta[i];
        }
        quad - (cross + cross) + constant
    };

    let init = F::one() / F::from_usize_lossy(k + 1);
    let mut eta = vec![init; factors];
    let mut beta = opts.step_size;
    let mut backoffs = 0usize;
    let mut loss = objective(&eta);
    let mut grad = vec![F::zero(); factors];
    let mut candidate = vec![F::zero(); factors];
    for _ in 0..opts.epochs {
        for i in 0..factors {
            let mut gi = F::zero();
            for j in 0..factors {
                gi = gi + gram[i * factors + j] * eta[j];
            }
            grad[i] = (gi - lin[i]) + (gi - lin[i]);
        }
        loop {
            for i in 0..factors {
                candidate[i] = (eta[i] - beta * grad[i]).max(F::zero());
            }
            let candidate_loss = objective(&candidate);
            if candidate_loss <= loss || backoffs >= 10 {
                eta.copy_from_slice(&candidate);
                loss = candidate_loss;
                break;
            }
            beta = beta * F::from_f64_lossy(0.5);
            backoffs += 1;
        }
    }

    if eta.iter().all(|&e| e == F::zero()) {
        return Err(Error::DegenerateDecomposition);
    }

    let eta_u = if opts.use_calibrator { eta[k] } else { F::zero() };
    let class_eta = &eta[..k];
    let denom: F = class_eta.iter().cloned().sum::<F>() + F::from_usize_lossy(k) * eta_u;
    let mut proportions = vec![F::zero(); class_count];
    for (basis, &e) in bases.per_class.iter().zip(class_eta) {
        proportions[basis.class] = (e + eta_u) / denom;
    }
    for &c in c_miss {
        proportions[c] = F::zero();
    }
    Ok(DecompositionResult {
        composition: Composition::new(proportions)?,
        eta: class_eta.to_vec(),
        eta_u,
        loss: loss.max(F::zero()),
        backoffs,
    })
}

/// Attack knobs carried through the pipeline.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AttackParams<F> {
    /// Null-class detection threshold; zero is the strict sign test.
    pub threshold: F,
    pub step_size: F,
    pub epochs: usize,
    /// Ablation flag: skip the null-class removal stage.
    pub null_removal: bool,
    /// Ablation flag: drop the calibrator basis.
    pub use_calibrator: bool,
}

impl<F: Scalar> Default for AttackParams<F> {
    fn default() -> Self {
        AttackParams {
            threshold: F::zero(),
            step_size: F::from_f64_lossy(0.05),
            epochs: 1000,
            null_removal: true,
            use_calibrator: true,
        }
    }
}

/// One user/round attack outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackEntry<F> {
    pub user: usize,
    pub round: usize,
    pub c_miss: BTreeSet<usize>,
    pub composition: Composition<F>,
    pub eta: Vec<F>,
    pub eta_u: F,
    pub loss: F,
    /// Distances against the ground truth, when the caller knows it.
    pub distances: Option<DistanceTriple<F>>,
    /// Whether the recovered null set equals the true one.
    pub c_miss_correct: Option<bool>,
}

impl<F: Scalar> AttackEntry<F> {
    /// Fills in the distance metrics and null-set verdict for a known truth.
    pub fn score_against(&mut self, truth: &Composition<F>) -> Result<()> {
        self.distances = Some(DistanceTriple::between(
            self.composition.as_slice(),
            truth.as_slice(),
        )?);
        self.c_miss_correct = Some(self.c_miss == truth.nulls());
        Ok(())
    }
}

/// Runs the full pipeline against one user in one recorded round: extract,
/// null-class removal, basis construction, decomposition.
pub fn attack_single_round<F: Scalar>(
    record: &RoundRecord<F>,
    user: usize,
    aux: &AuxiliarySet<F>,
    alpha: F,
    params: &AttackParams<F>,
) -> Result<AttackEntry<F>> {
    let local = record
        .locals
        .get(user)
        .ok_or_else(|| Error::config(format!("round {} has no user {user}", record.round)))?;
    let class_count = record.global_before.class_count();
    let g = GradientChange::extract(local, &record.global_before, alpha, user, record.round)?;
    let c_miss = if params.null_removal {
        remove_null_classes(&g, class_count, params.threshold)?.missing
    } else {
        BTreeSet::new()
    };
    let bases = construct_gradient_bases(&record.global_before, aux, &c_miss, alpha)?;
    let opts = DecomposeOpts {
        step_size: params.step_size,
        epochs: params.epochs,
        use_calibrator: params.use_calibrator,
    };
    let result = decompose(&g, &bases, class_count, &c_miss, &opts)?;
    Ok(AttackEntry {
        user,
        round: record.round,
        c_miss,
        composition: result.composition,
        eta: result.eta,
        eta_u: result.eta_u,
        loss: result.loss,
        distances: None,
        c_miss_correct: None,
    })
}

/// Fuses several single-round results for one user: entrywise mean of the
/// compositions, renormalized. Classes null in every entry stay exactly zero.
pub fn attack_multi_round<F: Scalar>(entries: &[AttackEntry<F>]) -> Result<Composition<F>> {
    let first = entries
        .first()
        .ok_or_else(|| Error::config("multi-round fusion needs at least one entry"))?;
    if entries.iter().any(|e| e.user != first.user) {
        return Err(Error::config("multi-round fusion mixes different users"));
    }
    let n = first.composition.len();
    if entries.iter().any(|e| e.composition.len() != n) {
        return Err(Error::config("multi-round fusion mixes class counts"));
    }
    if entries.len() == 1 {
        return Ok(first.composition.clone());
    }
    let inv = F::one() / F::from_usize_lossy(entries.len());
    let mut mean = vec![F::zero(); n];
    for entry in entries {
        for (m, &v) in mean.iter_mut().zip(entry.composition.as_slice()) {
            *m = *m + v * inv;
        }
    }
    Composition::new(mean)
}
