//! Label-noise synthesis and auxiliary pool construction.

use std::io::{Read, Write};

use rand::seq::index;
use rand::Rng;

use crate::error::{LabError, Result};
use crate::netcore::{self, NetworkParams};

/// Features plus observed labels and the hidden true labels.
///
/// `true_labels[i]` is `None` for rows whose features were replaced by an
/// open-set instance; those rows form the open-set mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    k: usize,
    features: Vec<f64>,
    observed_labels: Vec<usize>,
    true_labels: Vec<Option<usize>>,
}

impl LabeledDataset {
    pub fn new(
        dim: usize,
        k: usize,
        features: Vec<f64>,
        observed_labels: Vec<usize>,
        true_labels: Vec<Option<usize>>,
    ) -> Result<Self> {
        if dim == 0 || k == 0 {
            return Err(LabError::config(
                "dimension and class count must be positive",
            ));
        }
        let n = observed_labels.len();
        if features.len() != n * dim || true_labels.len() != n {
            return Err(LabError::input(format!(
                "dataset shape mismatch: {} feature values, {} observed, {} true labels, d={dim}",
                features.len(),
                n,
                true_labels.len()
            )));
        }
        if observed_labels.iter().any(|&y| y >= k) || true_labels.iter().flatten().any(|&y| y >= k)
        {
            return Err(LabError::input(format!("label out of range for k={k}")));
        }
        Ok(Self {
            dim,
            k,
            features,
            observed_labels,
            true_labels,
        })
    }

    /// Clean dataset: observed labels equal true labels.
    pub fn clean(dim: usize, k: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        let truth = labels.iter().map(|&y| Some(y)).collect();
        Self::new(dim, k, features, labels, truth)
    }

    pub fn len(&self) -> usize {
        self.observed_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn observed_labels(&self) -> &[usize] {
        &self.observed_labels
    }

    pub fn true_labels(&self) -> &[Option<usize>] {
        &self.true_labels
    }

    pub fn open_set_mask(&self) -> Vec<bool> {
        self.true_labels.iter().map(Option::is_none).collect()
    }

    /// Row carries a wrong label: open-set row or observed ≠ true.
    pub fn is_noisy(&self, i: usize) -> bool {
        self.true_labels[i] != Some(self.observed_labels[i])
    }

    pub fn noisy_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_noisy(i)).count()
    }

    /// New dataset holding the given rows, in order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut features = Vec::with_capacity(rows.len() * self.dim);
        for &i in rows {
            features.extend_from_slice(self.row(i));
        }
        Self {
            dim: self.dim,
            k: self.k,
            features,
            observed_labels: rows.iter().map(|&i| self.observed_labels[i]).collect(),
            true_labels: rows.iter().map(|&i| self.true_labels[i]).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("f{j}")).collect();
        header.extend(["observed_label", "true_label", "open_set"].map(String::from));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(f64::to_string).collect();
            rec.push(self.observed_labels[i].to_string());
            match self.true_labels[i] {
                Some(y) => {
                    rec.push(y.to_string());
                    rec.push("0".into());
                }
                None => {
                    rec.push("-1".into());
                    rec.push("1".into());
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV layout written by [`LabeledDataset::write_csv`]. The
    /// class count is not stored in the file and must be supplied.
    pub fn read_csv<R: Read>(reader: R, k: usize) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(reader);
        let header = r.headers()?.clone();
        let dim = header.iter().filter(|h| h.starts_with('f')).count();
        if header.len() != dim + 3 {
            return Err(LabError::Parse(format!(
                "unexpected dataset header {header:?}"
            )));
        }
        let mut features = Vec::new();
        let mut observed = Vec::new();
        let mut truth = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            for j in 0..dim {
                features.push(parse_f64(&rec[j])?);
            }
            observed.push(parse_usize(&rec[dim])?);
            let t: i64 = rec[dim + 1]
                .trim()
                .parse()
                .map_err(|e| LabError::Parse(format!("true_label: {e}")))?;
            let open = rec[dim + 2].trim() == "1";
            truth.push(if open || t < 0 {
                None
            } else {
                Some(t as usize)
            });
        }
        Self::new(dim, k, features, observed, truth)
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|e| LabError::Parse(format!("bad number {s:?}: {e}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|e| LabError::Parse(format!("bad label {s:?}: {e}")))
}

/// Unlabeled auxiliary instances, optionally carrying permanent labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryPool {
    dim: usize,
    features: Vec<f64>,
    fixed_labels: Option<Vec<usize>>,
    mix_alpha: f64,
}

impl AuxiliaryPool {
    pub fn new(dim: usize, features: Vec<f64>, mix_alpha: f64) -> Result<Self> {
        if dim == 0 || features.len() % dim != 0 {
            return Err(LabError::input("pool features do not form whole rows"));
        }
        if !(0.0..=1.0).contains(&mix_alpha) {
            return Err(LabError::config("mix alpha must lie in [0, 1]"));
        }
        Ok(Self {
            dim,
            features,
            fixed_labels: None,
            mix_alpha,
        })
    }

    pub fn with_fixed_labels(mut self, labels: Vec<usize>, k: usize) -> Result<Self> {
        if labels.len() != self.len() || labels.iter().any(|&y| y >= k) {
            return Err(LabError::input(
                "fixed labels must cover the pool and lie in [0, k)",
            ));
        }
        self.fixed_labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn fixed_labels(&self) -> Option<&[usize]> {
        self.fixed_labels.as_deref()
    }

    pub fn mix_alpha(&self) -> f64 {
        self.mix_alpha
    }

    /// First `m` instances (pools are generated in random order).
    pub fn take(&self, m: usize) -> Self {
        let m = m.min(self.len());
        Self {
            dim: self.dim,
            features: self.features[..m * self.dim].to_vec(),
            fixed_labels: self.fixed_labels.as_ref().map(|l| l[..m].to_vec()),
            mix_alpha: self.mix_alpha,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("f{j}")).collect();
        if self.fixed_labels.is_some() {
            header.push("fixed_label".into());
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(f64::to_string).collect();
            if let Some(labels) = &self.fixed_labels {
                rec.push(labels[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, k: usize) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(reader);
        let header = r.headers()?.clone();
        let has_labels = header.iter().any(|h| h == "fixed_label");
        let dim = header.len() - usize::from(has_labels);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            for j in 0..dim {
                features.push(parse_f64(&rec[j])?);
            }
            if has_labels {
                labels.push(parse_usize(&rec[dim])?);
            }
        }
        let pool = Self::new(dim, features, 0.0)?;
        if has_labels {
            pool.with_fixed_labels(labels, k)
        } else {
            Ok(pool)
        }
    }
}

/// Row-stochastic matrix; entry (i, j) = P(observed = j | true = i).
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    k: usize,
    values: Vec<f64>,
}

impl TransitionMatrix {
    pub fn from_rows(k: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != k * k {
            return Err(LabError::config("transition matrix must be k x k"));
        }
        let t = Self { k, values };
        t.validate()?;
        Ok(t)
    }

    pub fn identity(k: usize) -> Self {
        let mut values = vec![0.0; k * k];
        for i in 0..k {
            values[i * k + i] = 1.0;
        }
        Self { k, values }
    }

    /// Closed form of symmetric noise: 1 − r on the diagonal, r/(k−1) elsewhere.
    pub fn symmetric(k: usize, rate: f64) -> Self {
        let off = if k > 1 { rate / (k - 1) as f64 } else { 0.0 };
        let mut values = vec![off; k * k];
        for i in 0..k {
            values[i * k + i] = if k > 1 { 1.0 - rate } else { 1.0 };
        }
        Self { k, values }
    }

    /// Closed form of circular noise: (1 − r) I + r S with S the cyclic shift.
    pub fn circular(k: usize, rate: f64) -> Self {
        let mut values = vec![0.0; k * k];
        for i in 0..k {
            values[i * k + i] += 1.0 - rate;
            values[i * k + (i + 1) % k] += rate;
        }
        Self { k, values }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..self.k {
            let row = self.row(i);
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(LabError::config(format!(
                    "transition row {i} has invalid entries"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(LabError::config(format!("transition row {i} sums to {s}")));
            }
        }
        Ok(())
    }

    /// q = Tᵀ p, i.e. q_j = Σ_i T_ij p_i.
    pub fn apply_transpose(&self, probs: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.k];
        for (i, p) in probs.iter().enumerate() {
            for (qj, t) in q.iter_mut().zip(self.row(i)) {
                *qj += t * p;
            }
        }
        q
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(LabError::config(format!(
            "noise rate {rate} outside [0, 1)"
        )));
    }
    Ok(())
}

/// With probability `rate`, replace each observed label by a uniform draw
/// over the k − 1 other classes.
pub fn corrupt_symmetric<R: Rng + ?Sized>(
    dataset: &LabeledDataset,
    rate: f64,
    rng: &mut R,
) -> Result<LabeledDataset> {
    check_rate(rate)?;
    let k = dataset.k;
    if k < 2 {
        return Err(LabError::config(
            "symmetric noise needs at least two classes",
        ));
    }
    let mut out = dataset.clone();
    for y in &mut out.observed_labels {
        if rng.gen::<f64>() < rate {
            let draw = rng.gen_range(0..k - 1);
            *y = if draw >= *y { draw + 1 } else { draw };
        }
    }
    Ok(out)
}

/// With probability `rate`, label c becomes (c + 1) mod k.
pub fn corrupt_circular<R: Rng + ?Sized>(
    dataset: &LabeledDataset,
    rate: f64,
    rng: &mut R,
) -> Result<LabeledDataset> {
    check_rate(rate)?;
    let k = dataset.k;
    let mut out = dataset.clone();
    for y in &mut out.observed_labels {
        if rng.gen::<f64>() < rate {
            *y = (*y + 1) % k;
        }
    }
    Ok(out)
}

/// Confidence margin of the weak model: p(true) − max over other classes.
pub fn weak_margin(weak: &NetworkParams, x: &[f64], true_label: usize) -> Result<(f64, usize)> {
    let trace = netcore::forward(weak, x)?;
    let probs = trace.probs();
    let mut runner_up = usize::MAX;
    for (j, p) in probs.iter().enumerate() {
        if j != true_label && (runner_up == usize::MAX || *p > probs[runner_up]) {
            runner_up = j;
        }
    }
    Ok((probs[true_label] - probs[runner_up], runner_up))
}

/// Feature-dependent noise surrogate: the round(rate·N) samples with the
/// smallest weak-model margin take the weak model's top incorrect class.
pub fn corrupt_instance_dependent<R: Rng + ?Sized>(
    dataset: &LabeledDataset,
    rate: f64,
    weak_params: &NetworkParams,
    _rng: &mut R,
) -> Result<LabeledDataset> {
    check_rate(rate)?;
    if weak_params.input_dim() != dataset.dim || weak_params.num_classes() != dataset.k {
        return Err(LabError::config(format!(
            "weak model shape {:?} does not fit data with d={} k={}",
            weak_params.layer_sizes(),
            dataset.dim,
            dataset.k
        )));
    }
    if dataset.k < 2 {
        return Err(LabError::config(
            "instance-dependent noise needs at least two classes",
        ));
    }
    let mut scored = Vec::with_capacity(dataset.len());
    for i in 0..dataset.len() {
        let truth = dataset.true_labels[i].ok_or_else(|| {
            LabError::config("instance-dependent noise requires known true labels")
        })?;
        let (margin, runner_up) = weak_margin(weak_params, dataset.row(i), truth)?;
        scored.push((margin, i, runner_up));
    }
    // stable: equal margins keep index order
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let count = (rate * dataset.len() as f64).round() as usize;
    let mut out = dataset.clone();
    for &(_, i, runner_up) in scored.iter().take(count) {
        out.observed_labels[i] = runner_up;
    }
    Ok(out)
}

/// Replaces exactly round(rate·N) uniformly chosen rows with distinct pool
/// instances. Observed labels stay; the rows become open-set.
pub fn inject_open_set<R: Rng + ?Sized>(
    dataset: &LabeledDataset,
    rate: f64,
    pool: &AuxiliaryPool,
    rng: &mut R,
) -> Result<LabeledDataset> {
    check_rate(rate)?;
    if pool.dim != dataset.dim {
        return Err(LabError::config("pool and dataset dimensions differ"));
    }
    let count = (rate * dataset.len() as f64).round() as usize;
    if pool.len() < count {
        return Err(LabError::config(format!(
            "pool has {} instances, {count} needed",
            pool.len()
        )));
    }
    let rows = index::sample(rng, dataset.len(), count);
    let sources = index::sample(rng, pool.len(), count);
    let mut out = dataset.clone();
    let d = dataset.dim;
    for (row, src) in rows.iter().zip(sources.iter()) {
        out.features[row * d..(row + 1) * d].copy_from_slice(pool.row(src));
        out.true_labels[row] = None;
    }
    Ok(out)
}

/// Convex mix (1 − α)·open + α·closed. Each open instance is paired with a
/// uniformly drawn closed instance; the result keeps the open pool's size.
pub fn mix_auxiliary<R: Rng + ?Sized>(
    open_pool: &AuxiliaryPool,
    closed_pool: &AuxiliaryPool,
    alpha: f64,
    rng: &mut R,
) -> Result<AuxiliaryPool> {
    if open_pool.dim != closed_pool.dim {
        return Err(LabError::config(
            "open and closed pools differ in dimension",
        ));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(LabError::config("alpha must lie in [0, 1]"));
    }
    if closed_pool.is_empty() {
        return Err(LabError::config("closed pool is empty"));
    }
    let mut features = Vec::with_capacity(open_pool.features.len());
    for i in 0..open_pool.len() {
        let partner = closed_pool.row(rng.gen_range(0..closed_pool.len()));
        features.extend(
            open_pool
                .row(i)
                .iter()
                .zip(partner)
                .map(|(u, v)| (1.0 - alpha) * u + alpha * v),
        );
    }
    AuxiliaryPool::new(open_pool.dim, features, alpha)
}

/// Gives every pool instance one permanent uniform label in [0, k).
pub fn assign_fixed_labels<R: Rng + ?Sized>(
    pool: &AuxiliaryPool,
    k: usize,
    rng: &mut R,
) -> Result<AuxiliaryPool> {
    if pool.fixed_labels.is_some() {
        return Err(LabError::config("pool already carries fixed labels"));
    }
    if k == 0 {
        return Err(LabError::config("k must be positive"));
    }
    let labels = (0..pool.len()).map(|_| rng.gen_range(0..k)).collect();
    pool.clone().with_fixed_labels(labels, k)
}

/// Exact transition matrix from known true labels. Classes absent from the
/// data get uniform rows.
pub fn empirical_transition_matrix(dataset: &LabeledDataset) -> Result<TransitionMatrix> {
    let k = dataset.k;
    let mut counts = vec![0usize; k * k];
    for (obs, truth) in dataset.observed_labels.iter().zip(&dataset.true_labels) {
        let truth = truth.ok_or_else(|| {
            LabError::config("transition matrix undefined with open-set rows present")
        })?;
        counts[truth * k + obs] += 1;
    }
    let mut values = vec![0.0; k * k];
    for i in 0..k {
        let total: usize = counts[i * k..(i + 1) * k].iter().sum();
        for j in 0..k {
            values[i * k + j] = if total == 0 {
                1.0 / k as f64
            } else {
                counts[i * k + j] as f64 / total as f64
            };
        }
    }
    TransitionMatrix::from_rows(k, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn toy(n: usize, k: usize, d: usize) -> LabeledDataset {
        let features = (0..n * d).map(|i| i as f64 * 0.01).collect();
        let labels = (0..n).map(|i| i % k).collect();
        LabeledDataset::clean(d, k, features, labels).unwrap()
    }

    #[test]
    fn zero_rate_is_identity() {
        let data = toy(200, 5, 2);
        let mut r = rng::stream(1, "t");
        assert_eq!(corrupt_symmetric(&data, 0.0, &mut r).unwrap(), data);
        assert_eq!(corrupt_circular(&data, 0.0, &mut r).unwrap(), data);
        let pool = AuxiliaryPool::new(2, vec![9.0; 20], 0.0).unwrap();
        assert_eq!(inject_open_set(&data, 0.0, &pool, &mut r).unwrap(), data);
        let weak = NetworkParams::zeros(&[2, 5]).unwrap();
        assert_eq!(
            corrupt_instance_dependent(&data, 0.0, &weak, &mut r).unwrap(),
            data
        );
    }

    #[test]
    fn symmetric_requires_two_classes() {
        let data = toy(10, 1, 2);
        let mut r = rng::stream(1, "t");
        assert!(matches!(
            corrupt_symmetric(&data, 0.2, &mut r),
            Err(LabError::Config(_))
        ));
    }

    #[test]
    fn symmetric_flip_never_keeps_label_in_binary_case() {
        // with k = 2 every flip event lands on the other class
        let data = toy(4000, 2, 1);
        let mut r = rng::stream(2, "t");
        let noisy = corrupt_symmetric(&data, 0.5, &mut r).unwrap();
        let flipped = noisy.noisy_count() as f64 / 4000.0;
        assert!((flipped - 0.5).abs() < 3.0 * (0.25f64 / 4000.0).sqrt());
        assert_eq!(noisy.true_labels(), data.true_labels());
        assert_eq!(noisy.features(), data.features());
    }

    #[test]
    fn circular_wraps_last_class() {
        let data = toy(1000, 10, 1);
        let mut r = rng::stream(3, "t");
        let noisy = corrupt_circular(&data, 0.4, &mut r).unwrap();
        for i in 0..noisy.len() {
            let t = noisy.true_labels()[i].unwrap();
            let o = noisy.observed_labels()[i];
            assert!(o == t || o == (t + 1) % 10);
            if t == 9 && o != t {
                assert_eq!(o, 0);
            }
        }
    }

    #[test]
    fn open_set_injection_bookkeeping() {
        let data = toy(1000, 4, 2);
        let pool_features: Vec<f64> = (0..600 * 2).map(|i| 100.0 + i as f64).collect();
        let pool = AuxiliaryPool::new(2, pool_features, 0.0).unwrap();
        let mut r = rng::stream(4, "t");
        let out = inject_open_set(&data, 0.4, &pool, &mut r).unwrap();
        let mask = out.open_set_mask();
        assert_eq!(mask.iter().filter(|m| **m).count(), 400);
        let mut used = std::collections::HashSet::new();
        for i in 0..out.len() {
            if mask[i] {
                let src = (0..pool.len())
                    .find(|&s| pool.row(s) == out.row(i))
                    .unwrap();
                assert!(used.insert(src), "pool row reused");
                assert_eq!(out.observed_labels()[i], data.observed_labels()[i]);
            } else {
                assert_eq!(out.row(i), data.row(i));
                assert_eq!(out.true_labels()[i], data.true_labels()[i]);
            }
        }
        let small = pool.take(100);
        assert!(matches!(
            inject_open_set(&data, 0.4, &small, &mut r),
            Err(LabError::Config(_))
        ));
    }

    #[test]
    fn instance_dependent_flips_exact_count_to_wrong_labels() {
        let mut r = rng::stream(5, "t");
        let n = 1000;
        let features: Vec<f64> = (0..n * 2).map(|_| r.gen_range(-1.0..1.0)).collect();
        let labels = (0..n).map(|i| i % 3).collect();
        let data = LabeledDataset::clean(2, 3, features, labels).unwrap();
        let weak = NetworkParams::init(&[2, 8, 3], &mut r).unwrap();
        let out = corrupt_instance_dependent(&data, 0.4, &weak, &mut r).unwrap();
        let changed: Vec<usize> = (0..n)
            .filter(|&i| out.observed_labels()[i] != data.observed_labels()[i])
            .collect();
        assert_eq!(changed.len(), 400);
        for &i in &changed {
            assert_ne!(Some(out.observed_labels()[i]), out.true_labels()[i]);
        }
        let margin = |rows: &[usize]| {
            rows.iter()
                .map(|&i| {
                    weak_margin(&weak, data.row(i), data.true_labels()[i].unwrap())
                        .unwrap()
                        .0
                })
                .sum::<f64>()
                / rows.len() as f64
        };
        let kept: Vec<usize> = (0..n).filter(|i| !changed.contains(i)).collect();
        assert!(margin(&changed) < margin(&kept));

        let wrong = NetworkParams::zeros(&[3, 3]).unwrap();
        assert!(matches!(
            corrupt_instance_dependent(&data, 0.4, &wrong, &mut r),
            Err(LabError::Config(_))
        ));
    }

    #[test]
    fn mix_endpoints_and_midpoint() {
        let open = AuxiliaryPool::new(2, vec![0.0, 0.0, 2.0, 4.0], 0.0).unwrap();
        let closed = AuxiliaryPool::new(2, vec![10.0, 20.0], 0.0).unwrap();
        let mut r = rng::stream(6, "t");
        assert_eq!(
            mix_auxiliary(&open, &closed, 0.0, &mut r)
                .unwrap()
                .features(),
            open.features()
        );
        assert_eq!(
            mix_auxiliary(&open, &closed, 1.0, &mut r)
                .unwrap()
                .features(),
            &[10.0, 20.0, 10.0, 20.0]
        );
        let mid = mix_auxiliary(&open, &closed, 0.5, &mut r).unwrap();
        assert_eq!(mid.features(), &[5.0, 10.0, 6.0, 12.0]);
        assert_eq!(mid.mix_alpha(), 0.5);
        let other = AuxiliaryPool::new(3, vec![0.0; 3], 0.0).unwrap();
        assert!(mix_auxiliary(&open, &other, 0.5, &mut r).is_err());
    }

    #[test]
    fn fixed_labels_single_class_and_reproducible() {
        let pool = AuxiliaryPool::new(1, (0..50).map(f64::from).collect(), 0.0).unwrap();
        let one = assign_fixed_labels(&pool, 1, &mut rng::stream(1, "l")).unwrap();
        assert!(one.fixed_labels().unwrap().iter().all(|&y| y == 0));
        let a = assign_fixed_labels(&pool, 7, &mut rng::stream(9, "l")).unwrap();
        let b = assign_fixed_labels(&pool, 7, &mut rng::stream(9, "l")).unwrap();
        assert_eq!(a, b);
        assert!(assign_fixed_labels(&a, 7, &mut rng::stream(9, "l")).is_err());
    }

    #[test]
    fn transition_matrix_of_clean_data_is_identity() {
        let data = toy(100, 4, 1);
        assert_eq!(
            empirical_transition_matrix(&data).unwrap(),
            TransitionMatrix::identity(4)
        );
    }

    #[test]
    fn transition_matrix_rows_are_stochastic() {
        let data = toy(997, 6, 1);
        let noisy = corrupt_symmetric(&data, 0.3, &mut rng::stream(3, "t")).unwrap();
        let t = empirical_transition_matrix(&noisy).unwrap();
        for i in 0..6 {
            assert!((t.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        // a class with no rows falls back to a uniform row
        let sparse = LabeledDataset::clean(1, 3, vec![0.0, 1.0], vec![0, 0]).unwrap();
        let t = empirical_transition_matrix(&sparse).unwrap();
        assert_eq!(t.row(2), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn closed_form_matrices_validate() {
        TransitionMatrix::symmetric(10, 0.4).validate().unwrap();
        TransitionMatrix::circular(10, 0.4).validate().unwrap();
        assert!(TransitionMatrix::from_rows(2, vec![0.5, 0.6, 0.0, 1.0]).is_err());
    }

    #[test]
    fn dataset_csv_roundtrip_marks_open_set_rows() {
        let data = toy(20, 3, 2);
        let pool = AuxiliaryPool::new(2, vec![-5.5; 40], 0.0).unwrap();
        let data = inject_open_set(&data, 0.25, &pool, &mut rng::stream(1, "t")).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("f0,f1,observed_label,true_label,open_set\n"));
        assert_eq!(text.matches(",-1,1\n").count(), 5);
        assert_eq!(LabeledDataset::read_csv(&buf[..], 3).unwrap(), data);

        let labeled = assign_fixed_labels(&pool, 3, &mut rng::stream(2, "l")).unwrap();
        let mut buf = Vec::new();
        labeled.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("f0,f1,fixed_label\n"));
        assert_eq!(AuxiliaryPool::read_csv(&buf[..], 3).unwrap(), labeled);
    }
}
