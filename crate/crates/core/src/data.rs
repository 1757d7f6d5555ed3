//! Datasets, per-user composition specs and partitioning.
//!
//! A simulated federation starts from one labeled pool. The server first
//! reserves a small per-class auxiliary set, then each user receives exactly
//! the per-class counts their [`CompositionSpec`] asks for, sampled without
//! replacement. A class with count 0 is a null class for that user and the
//! partition guarantees the user holds no sample of it.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::nn::Batch;
use crate::{rng, Error, Result, Scalar};

/// Ratio between the noise standard deviation and `spread` in
/// [`generate_synthetic`]; keeps classes linearly separable at any scale.
const NOISE_RATIO: f64 = 0.125;

/// A labeled feature set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset<F> {
    features: Matrix<F>,
    labels: Vec<usize>,
    class_count: usize,
}

impl<F: Scalar> Dataset<F> {
    pub fn new(features: Matrix<F>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::config(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::config(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &Matrix<F> {
        &self.features
    }

    /// Number of samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Ground-truth composition of this dataset.
    pub fn composition(&self) -> Result<Composition<F>> {
        Composition::from_counts(&self.class_counts())
    }

    /// Copies the selected rows into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Dataset<F> {
        let mut features = Matrix::zeros(indices.len(), self.feature_dim());
        let mut labels = Vec::with_capacity(indices.len());
        for (r, &ix) in indices.iter().enumerate() {
            features.row_mut(r).copy_from_slice(self.features.row(ix));
            labels.push(self.labels[ix]);
        }
        Dataset {
            features,
            labels,
            class_count: self.class_count,
        }
    }

    /// Copies the selected rows into a training batch.
    pub fn gather_batch(&self, indices: &[usize]) -> Batch<F> {
        let ds = self.subset(indices);
        Batch::new(ds.features, ds.labels).expect("subset of nonempty index list")
    }

    /// The whole dataset as one batch.
    pub fn to_batch(&self) -> Result<Batch<F>> {
        Batch::new(self.features.clone(), self.labels.clone())
    }

    /// Export summary for run manifests.
    pub fn manifest(&self, seed: Option<u64>, source: &str) -> DatasetManifest {
        DatasetManifest {
            class_counts: self.class_counts(),
            seed,
            source: source.to_string(),
        }
    }
}

/// JSON manifest describing where a dataset came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub class_counts: Vec<usize>,
    pub seed: Option<u64>,
    pub source: String,
}

/// A nonnegative per-class proportion vector summing to one. Null classes
/// are exact zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Composition<F>(Vec<F>);

impl<F: Scalar> Composition<F> {
    /// Validates nonnegativity and normalizes to sum 1. Zero entries stay
    /// exactly zero.
    pub fn new(values: Vec<F>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("composition must be nonempty"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < F::zero()) {
            return Err(Error::config("composition entries must be finite and >= 0"));
        }
        let sum: F = values.iter().cloned().sum();
        if sum <= F::zero() {
            return Err(Error::config("composition must have a positive entry"));
        }
        Ok(Composition(values.into_iter().map(|v| v / sum).collect()))
    }

    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        Composition::new(counts.iter().map(|&c| F::from_usize_lossy(c)).collect())
    }

    pub fn uniform(len: usize) -> Self {
        let v = F::one() / F::from_usize_lossy(len);
        Composition(vec![v; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[F] {
        &self.0
    }

    /// Classes with exactly zero proportion.
    pub fn nulls(&self) -> BTreeSet<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == F::zero())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Declarative per-class sample demand for one user.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositionSpec {
    /// Exact per-class sample counts.
    Counts(Vec<usize>),
    /// Per-class weights, converted to counts summing to `total` with the
    /// largest-remainder method. A zero weight stays an exact zero count.
    Proportions { weights: Vec<f64>, total: usize },
}

impl CompositionSpec {
    pub fn class_count(&self) -> usize {
        match self {
            CompositionSpec::Counts(c) => c.len(),
            CompositionSpec::Proportions { weights, .. } => weights.len(),
        }
    }

    pub fn validate(&self, class_count: usize) -> Result<()> {
        if self.class_count() != class_count {
            return Err(Error::config(format!(
                "composition spec covers {} classes, dataset has {class_count}",
                self.class_count()
            )));
        }
        match self {
            CompositionSpec::Counts(counts) => {
                if counts.iter().all(|&c| c == 0) {
                    return Err(Error::config("composition spec must request at least one sample"));
                }
            }
            CompositionSpec::Proportions { weights, total } => {
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::config("proportion weights must be finite and >= 0"));
                }
                if weights.iter().all(|&w| w == 0.0) || *total == 0 {
                    return Err(Error::config("composition spec must request at least one sample"));
                }
            }
        }
        Ok(())
    }

    /// Resolves the spec to exact per-class counts.
    pub fn counts(&self) -> Result<Vec<usize>> {
        match self {
            CompositionSpec::Counts(counts) => Ok(counts.clone()),
            CompositionSpec::Proportions { weights, total } => {
                self.validate(weights.len())?;
                Ok(largest_remainder(weights, *total))
            }
        }
    }
}

/// Largest-remainder rounding of `weights / sum(weights) * total`. The result
/// sums to `total` exactly and each count is within one of its real-valued
/// target.
pub fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let targets: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = targets[a] - targets[a].floor();
        let fb = targets[b] - targets[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &ix in order.iter().take(total - assigned) {
        counts[ix] += 1;
    }
    counts
}

/// Synthetic Gaussian blobs: class `c` is centered on axis `c mod dim`
/// scaled by `spread`, with isotropic noise of standard deviation
/// `spread * 0.125`. With `spread = 0` every sample equals its class mean.
pub fn generate_synthetic<F: Scalar>(
    class_count: usize,
    dim: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset<F>> {
    if class_count == 0 || dim == 0 || per_class == 0 {
        return Err(Error::config("class_count, dim and per_class must be positive"));
    }
    if !spread.is_finite() || spread < 0.0 {
        return Err(Error::config("spread must be finite and >= 0"));
    }
    let mut rng = rng::stream(seed, "synthetic", &[]);
    let normal = rand_distr::StandardNormal;
    let sigma = spread * NOISE_RATIO;

    let mut features = Matrix::zeros(class_count * per_class, dim);
    let mut labels = Vec::with_capacity(class_count * per_class);
    for c in 0..class_count {
        let axis = c % dim;
        for k in 0..per_class {
            let row = features.row_mut(c * per_class + k);
            for (j, v) in row.iter_mut().enumerate() {
                let noise: f64 = rand::Rng::sample(&mut rng, normal);
                let mean = if j == axis { spread } else { 0.0 };
                *v = F::from_f64_lossy(mean + sigma * noise);
            }
            labels.push(c);
        }
    }
    Dataset::new(features, labels, class_count)
}

/// The server's tiny per-class sample pool, disjoint from every user's data.
#[derive(Debug, Clone)]
pub struct AuxiliarySet<F> {
    classes: Vec<Matrix<F>>,
    per_class: usize,
    class_count: usize,
}

impl<F: Scalar> AuxiliarySet<F> {
    pub fn per_class(&self) -> usize {
        self.per_class
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn total(&self) -> usize {
        self.per_class * self.class_count
    }

    /// All samples of one class as a single-class batch.
    pub fn class_batch(&self, class: usize) -> Result<Batch<F>> {
        if class >= self.class_count {
            return Err(Error::config(format!("auxiliary has no class {class}")));
        }
        Batch::new(self.classes[class].clone(), vec![class; self.per_class])
    }

    /// Union of the listed classes, in ascending class order.
    pub fn union_batch(&self, classes: &BTreeSet<usize>) -> Result<Batch<F>> {
        if classes.is_empty() {
            return Err(Error::config("auxiliary union of zero classes"));
        }
        let dim = self.classes[0].cols();
        let mut features = Matrix::zeros(classes.len() * self.per_class, dim);
        let mut labels = Vec::with_capacity(classes.len() * self.per_class);
        for (i, &c) in classes.iter().enumerate() {
            if c >= self.class_count {
                return Err(Error::config(format!("auxiliary has no class {c}")));
            }
            for k in 0..self.per_class {
                features
                    .row_mut(i * self.per_class + k)
                    .copy_from_slice(self.classes[c].row(k));
                labels.push(c);
            }
        }
        Batch::new(features, labels)
    }
}

/// Draws `per_class` samples of every class for the server's auxiliary set
/// and returns it with the disjoint remainder of the pool.
pub fn reserve_auxiliary<F: Scalar>(
    ds: &Dataset<F>,
    per_class: usize,
    seed: u64,
) -> Result<(AuxiliarySet<F>, Dataset<F>)> {
    if per_class == 0 {
        return Err(Error::config("auxiliary per_class must be positive"));
    }
    let mut taken = vec![false; ds.len()];
    let mut classes = Vec::with_capacity(ds.class_count());
    for c in 0..ds.class_count() {
        let mut pool: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == c).collect();
        if pool.len() < per_class {
            return Err(Error::Capacity {
                class: c,
                requested: per_class,
                available: pool.len(),
            });
        }
        let mut class_rng = rng::stream(seed, "aux", &[c as u64]);
        pool.shuffle(&mut class_rng);
        let mut features = Matrix::zeros(per_class, ds.feature_dim());
        for (r, &ix) in pool[..per_class].iter().enumerate() {
            features.row_mut(r).copy_from_slice(ds.features.row(ix));
            taken[ix] = true;
        }
        classes.push(features);
    }
    let remainder_ix: Vec<usize> = (0..ds.len()).filter(|&i| !taken[i]).collect();
    let remainder = ds.subset(&remainder_ix);
    Ok((
        AuxiliarySet {
            classes,
            per_class,
            class_count: ds.class_count(),
        },
        remainder,
    ))
}

/// Splits the pool across users according to their composition specs,
/// without replacement. Fails with a capacity error naming the class when the
/// combined demand exceeds the pool.
pub fn partition<F: Scalar>(
    ds: &Dataset<F>,
    specs: &[CompositionSpec],
    seed: u64,
) -> Result<Vec<Dataset<F>>> {
    for spec in specs {
        spec.validate(ds.class_count())?;
    }
    let counts: Vec<Vec<usize>> = specs.iter().map(|s| s.counts()).collect::<Result<_>>()?;

    let mut user_indices: Vec<Vec<usize>> = vec![Vec::new(); specs.len()];
    for c in 0..ds.class_count() {
        let requested: usize = counts.iter().map(|u| u[c]).sum();
        let mut pool: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == c).collect();
        if requested > pool.len() {
            return Err(Error::Capacity {
                class: c,
                requested,
                available: pool.len(),
            });
        }
        let mut class_rng = rng::stream(seed, "partition", &[c as u64]);
        pool.shuffle(&mut class_rng);
        let mut cursor = 0;
        for (u, user_counts) in counts.iter().enumerate() {
            user_indices[u].extend_from_slice(&pool[cursor..cursor + user_counts[c]]);
            cursor += user_counts[c];
        }
    }
    Ok(user_indices.iter().map(|ix| ds.subset(ix)).collect())
}

pub mod idx {
    //! Reader for the classic big-endian IDX image/label format.

    use std::fs::File;
    use std::io::Read;
    use std::path::Path;

    use byteorder::{BigEndian, ReadBytesExt};

    use super::Dataset;
    use crate::matrix::Matrix;
    use crate::{Error, Result, Scalar};

    const IMAGES_MAGIC: u32 = 0x0000_0803;
    const LABELS_MAGIC: u32 = 0x0000_0801;

    fn read_all(path: &Path) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        File::open(path)?.read_to_end(&mut buf)?;
        Ok(buf)
    }

    fn truncated(path: &Path, context: &str) -> Error {
        Error::IdxTruncated {
            path: path.display().to_string(),
            context: context.to_string(),
        }
    }

    /// Loads an IDX image file and its label file into a dataset with
    /// features scaled to `[0, 1]` by dividing raw bytes by 255.
    pub fn load_idx<F: Scalar>(
        images_path: impl AsRef<Path>,
        labels_path: impl AsRef<Path>,
    ) -> Result<Dataset<F>> {
        let images_path = images_path.as_ref();
        let labels_path = labels_path.as_ref();

        let bytes = read_all(images_path)?;
        let mut cur = std::io::Cursor::new(&bytes);
        let magic = cur
            .read_u32::<BigEndian>()
            .map_err(|_| truncated(images_path, "missing magic"))?;
        if magic != IMAGES_MAGIC {
            return Err(Error::IdxMagic {
                path: images_path.display().to_string(),
                found: magic,
                expected: IMAGES_MAGIC,
            });
        }
        let count = cur
            .read_u32::<BigEndian>()
            .map_err(|_| truncated(images_path, "missing count"))? as usize;
        let rows = cur
            .read_u32::<BigEndian>()
            .map_err(|_| truncated(images_path, "missing row size"))? as usize;
        let cols = cur
            .read_u32::<BigEndian>()
            .map_err(|_| truncated(images_path, "missing column size"))? as usize;
        let dim = rows * cols;
        let payload = &bytes[cur.position() as usize..];
        if payload.len() < count * dim {
            return Err(truncated(
                images_path,
                &format!("expected {} pixel bytes, found {}", count * dim, payload.len()),
            ));
        }
        let scale = F::from_f64_lossy(1.0 / 255.0);
        let data: Vec<F> = payload[..count * dim]
            .iter()
            .map(|&b| F::from_usize_lossy(b as usize) * scale)
            .collect();
        let features = Matrix::from_vec(count, dim, data);

        let bytes = read_all(labels_path)?;
        let mut cur = std::io::Cursor::new(&bytes);
        let magic = cur
            .read_u32::<BigEndian>()
            .map_err(|_| truncated(labels_path, "missing magic"))?;
        if magic != LABELS_MAGIC {
            return Err(Error::IdxMagic {
                path: labels_path.display().to_string(),
                found: magic,
                expected: LABELS_MAGIC,
            });
        }
        let label_count = cur
            .read_u32::<BigEndian>()
            .map_err(|_| truncated(labels_path, "missing count"))? as usize;
        if label_count != count {
            return Err(Error::IdxCountMismatch {
                images: count,
                labels: label_count,
            });
        }
        let payload = &bytes[cur.position() as usize..];
        if payload.len() < label_count {
            return Err(truncated(
                labels_path,
                &format!("expected {label_count} label bytes, found {}", payload.len()),
            ));
        }
        let labels: Vec<usize> = payload[..label_count].iter().map(|&b| b as usize).collect();
        let class_count = labels.iter().max().map_or(0, |&m| m + 1);
        if class_count == 0 {
            return Err(Error::config("IDX label file holds zero items"));
        }
        Dataset::new(features, labels, class_count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type D64 = Dataset<f64>;

    #[test]
    fn synthetic_counts_per_class() {
        let ds: D64 = generate_synthetic(2, 4, 5, 4.0, 1).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.class_counts(), vec![5, 5]);
    }

    #[test]
    fn zero_spread_collapses_to_class_mean() {
        let ds: D64 = generate_synthetic(3, 4, 4, 0.0, 9).unwrap();
        for i in 0..ds.len() {
            assert!(ds.features().row(i).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn synthetic_rejects_degenerate_arguments() {
        assert!(generate_synthetic::<f64>(0, 4, 5, 4.0, 1).is_err());
        assert!(generate_synthetic::<f64>(2, 0, 5, 4.0, 1).is_err());
        assert!(generate_synthetic::<f64>(2, 4, 0, 4.0, 1).is_err());
        assert!(generate_synthetic::<f64>(2, 4, 5, -1.0, 1).is_err());
    }

    #[test]
    fn nearest_centroid_oracle_confirms_separability() {
        let ds: D64 = generate_synthetic(10, 10, 100, 4.0, 77).unwrap();
        // Independent 1-nearest-centroid classifier.
        let dim = ds.feature_dim();
        let mut centroids = vec![vec![0.0f64; dim]; 10];
        let counts = ds.class_counts();
        for i in 0..ds.len() {
            let c = ds.labels()[i];
            for (j, v) in ds.features().row(i).iter().enumerate() {
                centroids[c][j] += v / counts[c] as f64;
            }
        }
        let mut correct = 0usize;
        for i in 0..ds.len() {
            let row = ds.features().row(i);
            let mut best = (f64::INFINITY, 0usize);
            for (c, centroid) in centroids.iter().enumerate() {
                let d: f64 = row
                    .iter()
                    .zip(centroid.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d < best.0 {
                    best = (d, c);
                }
            }
            if best.1 == ds.labels()[i] {
                correct += 1;
            }
        }
        let acc = correct as f64 / ds.len() as f64;
        assert!(acc >= 0.99, "nearest-centroid accuracy {acc}");
    }

    #[test]
    fn composition_normalizes_and_keeps_nulls_exact() {
        let comp = Composition::<f64>::from_counts(&[1, 0, 3]).unwrap();
        assert_eq!(comp.as_slice(), &[0.25, 0.0, 0.75]);
        assert_eq!(comp.nulls().into_iter().collect::<Vec<_>>(), vec![1]);
        assert!(Composition::<f64>::from_counts(&[0, 0]).is_err());
    }

    #[test]
    fn largest_remainder_matches_paper_style_targets() {
        // 1200 samples split as percentages; every count within one of the
        // real-valued target and the total exact.
        let weights = [6.67, 10.0, 8.33, 7.5, 13.33, 15.83, 5.83, 10.0, 12.5, 10.0];
        let counts = largest_remainder(&weights, 1200);
        assert_eq!(counts.iter().sum::<usize>(), 1200);
        let sum: f64 = weights.iter().sum();
        for (c, w) in counts.iter().zip(weights.iter()) {
            let target = w / sum * 1200.0;
            assert!((*c as f64 - target).abs() <= 1.0, "count {c} vs target {target}");
        }
    }

    #[test]
    fn partition_single_user_gets_everything() {
        let ds: D64 = generate_synthetic(3, 4, 6, 4.0, 3).unwrap();
        let spec = CompositionSpec::Counts(ds.class_counts());
        let users = partition(&ds, &[spec], 5).unwrap();
        assert_eq!(users.len(), 1);
        assert_eq!(users[0].len(), ds.len());
        assert_eq!(users[0].class_counts(), ds.class_counts());
    }

    #[test]
    fn null_class_spec_yields_no_samples_of_that_class() {
        let ds: D64 = generate_synthetic(5, 5, 20, 4.0, 4).unwrap();
        let spec = CompositionSpec::Counts(vec![5, 5, 5, 0, 5]);
        let users = partition(&ds, &[spec], 6).unwrap();
        assert_eq!(users[0].class_counts()[3], 0);
        assert!(users[0].labels().iter().all(|&l| l != 3));
    }

    #[test]
    fn partition_capacity_error_names_the_class() {
        let ds: D64 = generate_synthetic(3, 3, 4, 4.0, 8).unwrap();
        let spec = CompositionSpec::Counts(vec![2, 5, 1]);
        match partition(&ds, &[spec], 0) {
            Err(Error::Capacity { class, requested, available }) => {
                assert_eq!(class, 1);
                assert_eq!(requested, 5);
                assert_eq!(available, 4);
            }
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn partition_conserves_and_is_deterministic() {
        let ds: D64 = generate_synthetic(4, 6, 30, 4.0, 11).unwrap();
        let specs = vec![
            CompositionSpec::Counts(vec![10, 0, 5, 3]),
            CompositionSpec::Proportions {
                weights: vec![0.5, 0.25, 0.0, 0.25],
                total: 40,
            },
        ];
        let a = partition(&ds, &specs, 21).unwrap();
        let b = partition(&ds, &specs, 21).unwrap();
        for (ua, ub) in a.iter().zip(b.iter()) {
            assert_eq!(ua.labels(), ub.labels());
            assert_eq!(ua.features().as_slice(), ub.features().as_slice());
        }
        // Conservation per class: assigned counts never exceed the pool.
        let totals = ds.class_counts();
        for c in 0..4 {
            let assigned: usize = a.iter().map(|u| u.class_counts()[c]).sum();
            assert!(assigned <= totals[c]);
        }
    }

    #[test]
    fn auxiliary_reservation_is_disjoint_and_counted() {
        let ds: D64 = generate_synthetic(10, 6, 12, 4.0, 13).unwrap();
        let (aux, rest) = reserve_auxiliary(&ds, 2, 17).unwrap();
        assert_eq!(aux.total(), 20);
        assert_eq!(rest.len(), ds.len() - 20);

        // Exhaustive disjointness check on feature rows.
        let key = |row: &[f64]| -> Vec<u64> { row.iter().map(|v| v.to_bits()).collect() };
        let mut aux_rows = BTreeSet::new();
        for c in 0..10 {
            let batch = aux.class_batch(c).unwrap();
            for r in 0..batch.inputs.rows() {
                aux_rows.insert(key(batch.inputs.row(r)));
            }
        }
        for r in 0..rest.len() {
            assert!(!aux_rows.contains(&key(rest.features().row(r))));
        }
    }

    #[test]
    fn auxiliary_capacity_error() {
        let ds: D64 = generate_synthetic(3, 3, 2, 4.0, 1).unwrap();
        match reserve_auxiliary(&ds, 3, 0) {
            Err(Error::Capacity { class: 0, .. }) => {}
            other => panic!("expected capacity error on class 0, got {other:?}"),
        }
    }

    #[test]
    fn union_batch_orders_by_class() {
        let ds: D64 = generate_synthetic(4, 4, 5, 4.0, 2).unwrap();
        let (aux, _) = reserve_auxiliary(&ds, 2, 3).unwrap();
        let classes: BTreeSet<usize> = [3, 1].into_iter().collect();
        let batch = aux.union_batch(&classes).unwrap();
        assert_eq!(batch.labels, vec![1, 1, 3, 3]);
    }

    mod idx_tests {
        use super::super::idx::load_idx;
        use crate::Error;
        use std::io::Write;

        fn write_file(bytes: &[u8]) -> tempfile::NamedTempFile {
            let mut f = tempfile::NamedTempFile::new().unwrap();
            f.write_all(bytes).unwrap();
            f
        }

        fn images_bytes(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
            let mut b = Vec::new();
            b.extend_from_slice(&0x0000_0803u32.to_be_bytes());
            b.extend_from_slice(&count.to_be_bytes());
            b.extend_from_slice(&rows.to_be_bytes());
            b.extend_from_slice(&cols.to_be_bytes());
            b.extend_from_slice(pixels);
            b
        }

        fn labels_bytes(count: u32, labels: &[u8]) -> Vec<u8> {
            let mut b = Vec::new();
            b.extend_from_slice(&0x0000_0801u32.to_be_bytes());
            b.extend_from_slice(&count.to_be_bytes());
            b.extend_from_slice(labels);
            b
        }

        #[test]
        fn loads_images_and_scales_bytes() {
            let pixels: Vec<u8> = (0..10 * 4).map(|i| if i == 0 { 255 } else { 7 }).collect();
            let img = write_file(&images_bytes(10, 2, 2, &pixels));
            let lbl = write_file(&labels_bytes(10, &[0, 1, 2, 3, 4, 0, 1, 2, 3, 4]));
            let ds = load_idx::<f64>(img.path(), lbl.path()).unwrap();
            assert_eq!(ds.len(), 10);
            assert_eq!(ds.feature_dim(), 4);
            assert_eq!(ds.class_count(), 5);
            assert_eq!(ds.features().get(0, 0), 1.0);
            assert!((ds.features().get(0, 1) - 7.0 / 255.0).abs() < 1e-12);
        }

        #[test]
        fn rejects_bad_magic() {
            let mut bytes = images_bytes(1, 1, 1, &[0]);
            bytes[3] = 0x07;
            let img = write_file(&bytes);
            let lbl = write_file(&labels_bytes(1, &[0]));
            match load_idx::<f64>(img.path(), lbl.path()) {
                Err(Error::IdxMagic { found, .. }) => assert_eq!(found, 0x0000_0807),
                other => panic!("expected magic error, got {other:?}"),
            }
            // Swapped files: label magic where images expected.
            let img = write_file(&labels_bytes(1, &[0]));
            let lbl = write_file(&bytes);
            assert!(matches!(
                load_idx::<f64>(img.path(), lbl.path()),
                Err(Error::IdxMagic { .. })
            ));
        }

        #[test]
        fn rejects_truncation_and_count_mismatch() {
            let img = write_file(&images_bytes(4, 2, 2, &[0u8; 7]));
            let lbl = write_file(&labels_bytes(4, &[0, 1, 0, 1]));
            assert!(matches!(
                load_idx::<f64>(img.path(), lbl.path()),
                Err(Error::IdxTruncated { .. })
            ));

            let img = write_file(&images_bytes(2, 2, 2, &[0u8; 8]));
            let lbl = write_file(&labels_bytes(3, &[0, 1, 0]));
            assert!(matches!(
                load_idx::<f64>(img.path(), lbl.path()),
                Err(Error::IdxCountMismatch { images: 2, labels: 3 })
            ));
        }
    }
}
