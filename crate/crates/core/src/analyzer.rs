//! Gradient-noise identities and loss-landscape slices.
//!
//! For cross entropy, a one-hot target j on an auxiliary input x̃ yields the
//! gradient −∇_θ f̃_j / f̃_j. Drawing j uniformly therefore injects noise whose
//! mean is −(1/k) Σ_j ∇_θ f̃_j / f̃_j, which is also the (deterministic) bias
//! of the uniform-target Outlier Exposure term. Gaussian label perturbation
//! (SLN) instead injects zero-mean noise with covariance σ²·M where
//! M = Σ_j (∇_θ log f_j)(∇_θ log f_j)ᵀ.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::netcore::{
    self, backward, ce_logit_gradient, output_jacobian, GradientVector, NetworkParams,
    TargetDistribution, PROB_FLOOR,
};
use crate::noisegen::LabeledDataset;

/// Relative tolerance of the built-in dual-path check.
pub const DUAL_PATH_TOLERANCE: f64 = 1e-9;

/// Full covariance is only formed up to this many parameters.
pub const MAX_FULL_COVARIANCE: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSource {
    Odnl,
    Sln,
    OeBias,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSample {
    pub z: GradientVector,
    pub source: NoiseSource,
    pub class: Option<usize>,
    /// f̃_j fell below the probability floor; the Jacobian route was clamped
    /// and the dual-path check skipped.
    pub clamped: bool,
}

/// max_i |a_i − b_i| / max(max_i |b_i|, tiny).
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = b.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Noise injected by auxiliary input `aux_x` with label `j`, computed by
/// backpropagating the one-hot cross entropy and, independently, as
/// −(∇_θ f̃_j)/f̃_j from the output Jacobian. The two must agree.
pub fn odnl_noise_vector(params: &NetworkParams, aux_x: &[f64], j: usize) -> Result<NoiseSample> {
    let k = params.num_classes();
    if j >= k {
        return Err(LabError::input(format!("class {j} out of range for k={k}")));
    }
    let trace = netcore::forward(params, aux_x)?;
    let via_loss = backward(params, &trace, &TargetDistribution::one_hot(k, j));
    let fj = trace.probs()[j];
    let clamped = fj < PROB_FLOOR;
    if clamped {
        log::warn!("f̃_{j} = {fj:e} below floor; Jacobian route clamped");
    } else {
        let row = &output_jacobian(params, &trace)[j];
        let via_jacobian: Vec<f64> = row.0.iter().map(|g| -g / fj.max(PROB_FLOOR)).collect();
        let err = relative_error(&via_jacobian, &via_loss.0);
        if err > DUAL_PATH_TOLERANCE {
            return Err(LabError::numeric(
                format!("odnl noise, class {j}"),
                format!("loss and Jacobian routes disagree (relative error {err:e})"),
            ));
        }
    }
    Ok(NoiseSample {
        z: via_loss,
        source: NoiseSource::Odnl,
        class: Some(j),
        clamped,
    })
}

/// Exact mean of [`odnl_noise_vector`] over j = 0..k−1.
pub fn odnl_noise_expectation(params: &NetworkParams, aux_x: &[f64]) -> Result<GradientVector> {
    let k = params.num_classes();
    let mut mean = GradientVector::zeros(params.len());
    for j in 0..k {
        mean.add_scaled(&odnl_noise_vector(params, aux_x, j)?.z, 1.0 / k as f64);
    }
    Ok(mean)
}

/// Gradient of −(1/k) Σ_j log f̃_j, from one backward pass with the uniform target.
pub fn oe_bias_vector(params: &NetworkParams, aux_x: &[f64]) -> Result<GradientVector> {
    let trace = netcore::forward(params, aux_x)?;
    Ok(backward(
        params,
        &trace,
        &TargetDistribution::uniform(params.num_classes()),
    ))
}

/// SLN noise for a given perturbation draw: ∇ℓ(f, e^y + σ·draw) − ∇ℓ(f, e^y),
/// which by linearity is the gradient of ℓ(f, σ·draw).
pub fn sln_noise_from_draw(
    params: &NetworkParams,
    x: &[f64],
    sigma: f64,
    draw: &[f64],
) -> Result<GradientVector> {
    let trace = netcore::forward(params, x)?;
    if draw.len() != trace.probs().len() {
        return Err(LabError::input("perturbation draw must have length k"));
    }
    let target = TargetDistribution::from_values(draw.iter().map(|z| sigma * z).collect());
    let mut grad = GradientVector::zeros(params.len());
    netcore::backward_logits_into(
        params,
        &trace,
        &ce_logit_gradient(trace.probs(), &target),
        1.0,
        &mut grad.0,
    );
    Ok(grad)
}

/// One SLN noise realization with a fresh standard normal draw. The label
/// `y` cancels out of the difference; it is kept for the call signature.
pub fn sln_noise_sample<R: Rng + ?Sized>(
    params: &NetworkParams,
    x: &[f64],
    y: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<NoiseSample> {
    if !(sigma > 0.0) {
        return Err(LabError::config("sigma must be positive"));
    }
    let k = params.num_classes();
    if y >= k {
        return Err(LabError::input(format!("label {y} out of range for k={k}")));
    }
    let draw: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    Ok(NoiseSample {
        z: sln_noise_from_draw(params, x, sigma, &draw)?,
        source: NoiseSource::Sln,
        class: None,
        clamped: false,
    })
}

/// M = Σ_j (∇_θ f_j / f_j)(∇_θ f_j / f_j)ᵀ as a row-major p×p matrix.
pub fn sln_covariance_factor(params: &NetworkParams, x: &[f64]) -> Result<Vec<f64>> {
    let p = params.len();
    if p > MAX_FULL_COVARIANCE {
        return Err(LabError::config(format!(
            "full covariance limited to p ≤ {MAX_FULL_COVARIANCE}, got {p}"
        )));
    }
    let trace = netcore::forward(params, x)?;
    let rows = output_jacobian(params, &trace);
    let mut m = vec![0.0; p * p];
    for (row, fj) in rows.iter().zip(trace.probs()) {
        let v: Vec<f64> = row.0.iter().map(|g| g / fj.max(PROB_FLOOR)).collect();
        for a in 0..p {
            for b in 0..p {
                m[a * p + b] += v[a] * v[b];
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    /// Row-major p×p.
    Full(Vec<f64>),
    Diagonal(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseStats {
    pub count: usize,
    pub mean: GradientVector,
    pub covariance: Covariance,
    /// Standard error of the mean per coordinate.
    pub standard_error: Vec<f64>,
}

impl NoiseStats {
    /// Sample mean and unbiased covariance; full when p ≤ 200.
    pub fn from_samples(samples: &[GradientVector]) -> Result<Self> {
        let count = samples.len();
        if count < 2 {
            return Err(LabError::input("need at least two noise samples"));
        }
        let p = samples[0].len();
        let mut mean = GradientVector::zeros(p);
        for s in samples {
            mean.add_scaled(s, 1.0 / count as f64);
        }
        let denom = (count - 1) as f64;
        let covariance = if p <= MAX_FULL_COVARIANCE {
            let mut c = vec![0.0; p * p];
            let mut centered = vec![0.0; p];
            for s in samples {
                for (d, (v, m)) in centered.iter_mut().zip(s.0.iter().zip(&mean.0)) {
                    *d = v - m;
                }
                for a in 0..p {
                    let ca = centered[a];
                    if ca == 0.0 {
                        continue;
                    }
                    for b in a..p {
                        c[a * p + b] += ca * centered[b];
                    }
                }
            }
            for a in 0..p {
                for b in a..p {
                    let v = c[a * p + b] / denom;
                    c[a * p + b] = v;
                    c[b * p + a] = v;
                }
            }
            Covariance::Full(c)
        } else {
            let mut d = vec![0.0; p];
            for s in samples {
                for (acc, (v, m)) in d.iter_mut().zip(s.0.iter().zip(&mean.0)) {
                    *acc += (v - m) * (v - m);
                }
            }
            Covariance::Diagonal(d.into_iter().map(|v| v / denom).collect())
        };
        let variances: Vec<f64> = match &covariance {
            Covariance::Full(c) => (0..p).map(|a| c[a * p + a]).collect(),
            Covariance::Diagonal(d) => d.clone(),
        };
        let standard_error = variances
            .iter()
            .map(|v| (v / count as f64).sqrt())
            .collect();
        Ok(Self {
            count,
            mean,
            covariance,
            standard_error,
        })
    }
}

/// ‖A − B‖_F / ‖B‖_F.
pub fn frobenius_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Landscape directions with per-layer filter normalization: each layer's
/// block of a random direction is rescaled to the norm of that layer's
/// parameters.
pub fn random_directions<R: Rng + ?Sized>(params: &NetworkParams, rng: &mut R) -> [Vec<f64>; 2] {
    let mut draw = || {
        let mut d: Vec<f64> = (0..params.len())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        for span in params.spans() {
            let range = span.weight_offset..span.end();
            let target: f64 = params.values()[range.clone()]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            let block = &mut d[range];
            let norm: f64 = block.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in block.iter_mut() {
                    *v *= target / norm;
                }
            }
        }
        d
    };
    let first = draw();
    let second = draw();
    [first, second]
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeSlice {
    pub directions: [Vec<f64>; 2],
    pub resolution: usize,
    pub radius: f64,
    /// Row-major `resolution × resolution`; index (i, j) ↔ (a_i, b_j).
    pub losses: Vec<f64>,
}

impl LandscapeSlice {
    pub fn coordinate(&self, i: usize) -> f64 {
        if self.resolution == 1 {
            0.0
        } else {
            -self.radius + 2.0 * self.radius * i as f64 / (self.resolution - 1) as f64
        }
    }

    pub fn loss(&self, i: usize, j: usize) -> f64 {
        self.losses[i * self.resolution + j]
    }

    pub fn center_loss(&self) -> f64 {
        let c = self.resolution / 2;
        self.loss(c, c)
    }

    /// Max grid loss minus center loss.
    pub fn sharpness(&self) -> f64 {
        self.losses
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            - self.center_loss()
    }

    /// Center not above any of its (up to 8) grid neighbours.
    pub fn center_is_local_min(&self) -> bool {
        let c = (self.resolution / 2) as isize;
        let r = self.resolution as isize;
        let center = self.center_loss();
        for di in -1..=1 {
            for dj in -1..=1 {
                let (i, j) = (c + di, c + dj);
                if (di, dj) != (0, 0) && (0..r).contains(&i) && (0..r).contains(&j) {
                    if self.loss(i as usize, j as usize) < center {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "j", "a", "b", "loss"])?;
        for i in 0..self.resolution {
            for j in 0..self.resolution {
                w.write_record([
                    i.to_string(),
                    j.to_string(),
                    self.coordinate(i).to_string(),
                    self.coordinate(j).to_string(),
                    self.loss(i, j).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean CE over the whole dataset against observed labels.
pub fn dataset_loss(params: &NetworkParams, dataset: &LabeledDataset) -> Result<f64> {
    let k = params.num_classes();
    let mut total = 0.0;
    for i in 0..dataset.len() {
        let target = TargetDistribution::one_hot(k, dataset.observed_labels()[i]);
        total += netcore::loss_at(params, dataset.row(i), &target)?;
    }
    Ok(total / dataset.len().max(1) as f64)
}

/// Loss grid over θ + a·d1 + b·d2 with (a, b) ∈ [−radius, radius]², using
/// the supplied directions so slices of different models stay comparable.
pub fn landscape_slice_with_directions(
    params: &NetworkParams,
    dataset: &LabeledDataset,
    directions: [Vec<f64>; 2],
    resolution: usize,
    radius: f64,
) -> Result<LandscapeSlice> {
    if resolution % 2 == 0 {
        return Err(LabError::config("landscape resolution must be odd"));
    }
    if !(radius > 0.0) {
        return Err(LabError::config("landscape radius must be positive"));
    }
    if directions.iter().any(|d| d.len() != params.len()) {
        return Err(LabError::input(
            "direction length differs from parameter count",
        ));
    }
    let mut slice = LandscapeSlice {
        directions,
        resolution,
        radius,
        losses: Vec::with_capacity(resolution * resolution),
    };
    for i in 0..resolution {
        for j in 0..resolution {
            let (a, b) = (slice.coordinate(i), slice.coordinate(j));
            let moved = params
                .offset_by(&slice.directions[0], a)
                .offset_by(&slice.directions[1], b);
            slice.losses.push(dataset_loss(&moved, dataset)?);
        }
    }
    Ok(slice)
}

pub fn landscape_slice<R: Rng + ?Sized>(
    params: &NetworkParams,
    dataset: &LabeledDataset,
    resolution: usize,
    radius: f64,
    rng: &mut R,
) -> Result<LandscapeSlice> {
    let directions = random_directions(params, rng);
    landscape_slice_with_directions(params, dataset, directions, resolution, radius)
}

/// One line of the noise-check report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    pub fn at_most(name: &str, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            measured,
            tolerance,
            passed: measured <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseReport {
    pub samples: usize,
    pub mean_norm: f64,
    pub checks: Vec<CheckResult>,
}

impl NoiseReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Runs the three identities on one network/input pair:
/// the dual-path noise formula on every class, expectation = OE bias, and
/// SLN mean and covariance from `samples` Monte-Carlo draws.
pub fn noise_report<R: Rng + ?Sized>(
    params: &NetworkParams,
    aux_x: &[f64],
    x: &[f64],
    sigma: f64,
    samples: usize,
    rng: &mut R,
) -> Result<NoiseReport> {
    let k = params.num_classes();
    let mut dual = 0.0f64;
    for j in 0..k {
        let trace = netcore::forward(params, aux_x)?;
        let fj = trace.probs()[j];
        let row = &output_jacobian(params, &trace)[j];
        let via_jacobian: Vec<f64> = row.0.iter().map(|g| -g / fj.max(PROB_FLOOR)).collect();
        let via_loss = odnl_noise_vector(params, aux_x, j)?;
        dual = dual.max(relative_error(&via_jacobian, &via_loss.z.0));
    }
    let expectation = odnl_noise_expectation(params, aux_x)?;
    let bias = oe_bias_vector(params, aux_x)?;
    let bias_gap = expectation
        .0
        .iter()
        .zip(&bias.0)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));

    let draws: Vec<GradientVector> = (0..samples)
        .map(|_| sln_noise_sample(params, x, 0, sigma, rng).map(|s| s.z))
        .collect::<Result<_>>()?;
    let stats = NoiseStats::from_samples(&draws)?;
    let worst_se = stats
        .mean
        .0
        .iter()
        .zip(&stats.standard_error)
        .filter(|(_, se)| **se > 0.0)
        .fold(0.0f64, |m, (mu, se)| m.max(mu.abs() / se));
    let mut checks = vec![
        CheckResult::at_most("odnl_dual_path_relative_error", dual, DUAL_PATH_TOLERANCE),
        CheckResult::at_most("oe_bias_minus_odnl_expectation", bias_gap, 1e-12),
        CheckResult::at_most("sln_mean_max_standard_errors", worst_se, 4.0),
    ];
    if let Covariance::Full(cov) = &stats.covariance {
        let m = sln_covariance_factor(params, x)?;
        let scaled: Vec<f64> = m.iter().map(|v| sigma * sigma * v).collect();
        checks.push(CheckResult::at_most(
            "sln_covariance_frobenius_relative_error",
            frobenius_relative_error(cov, &scaled),
            0.05,
        ));
    }
    Ok(NoiseReport {
        samples,
        mean_norm: stats.mean.norm(),
        checks,
    })
}
