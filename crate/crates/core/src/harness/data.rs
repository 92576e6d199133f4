//! Synthetic stand-ins for the in-distribution data and the auxiliary pools.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{LabError, Result};
use crate::noisegen::{AuxiliaryPool, LabeledDataset};
use crate::rng::{self, StreamRng};

/// Open-set instances must sit at least this many σ from every class mean.
pub const OPEN_SET_MIN_SIGMAS: f64 = 4.0;

const MAX_REJECTION_ATTEMPTS: usize = 1000;

/// Isotropic Gaussian mixture with k equally weighted classes.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub k: usize,
    pub dim: usize,
    pub separation: f64,
    pub sigma: f64,
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.dim == 0 {
            return Err(LabError::config("k and d must be positive"));
        }
        if !(self.separation > 0.0) || !(self.sigma > 0.0) {
            return Err(LabError::config("separation and sigma must be positive"));
        }
        if self.dim == 1 && self.k > 2 {
            return Err(LabError::config("d = 1 supports at most two classes"));
        }
        if self.dim > 2 && self.k > self.dim {
            return Err(LabError::config(format!(
                "simplex means need k ≤ d (k={}, d={})",
                self.k, self.dim
            )));
        }
        Ok(())
    }

    /// Class means at distance `separation` from the origin: on a circle for
    /// d = 2, on centered simplex vertices for d > 2.
    pub fn means(&self) -> Vec<Vec<f64>> {
        let (k, d, r) = (self.k, self.dim, self.separation);
        if k == 1 {
            return vec![vec![0.0; d]];
        }
        match d {
            1 => vec![vec![-r], vec![r]],
            2 => (0..k)
                .map(|c| {
                    let angle = 2.0 * PI * c as f64 / k as f64;
                    vec![r * angle.cos(), r * angle.sin()]
                })
                .collect(),
            _ => (0..k)
                .map(|c| {
                    let mut v = vec![-1.0 / k as f64; d];
                    for x in v.iter_mut().skip(k) {
                        *x = 0.0;
                    }
                    v[c] += 1.0;
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.into_iter().map(|x| x * r / norm).collect()
                })
                .collect(),
        }
    }

    fn sample_around(&self, mean: &[f64], rng: &mut StreamRng, out: &mut Vec<f64>) {
        for m in mean {
            let z: f64 = rng.sample(StandardNormal);
            out.push(m + self.sigma * z);
        }
    }

    /// Smallest distance from `x` to any class mean, in units of σ.
    pub fn min_mahalanobis(&self, x: &[f64]) -> f64 {
        self.means()
            .iter()
            .map(|m| {
                m.iter()
                    .zip(x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
                    / self.sigma
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Radius bounds of the open-set annulus. The inner edge clears the
    /// typical σ√d scatter radius of the blobs by 4σ.
    pub fn ring_radii(&self) -> (f64, f64) {
        let inner = self.separation + self.sigma * (OPEN_SET_MIN_SIGMAS + (self.dim as f64).sqrt());
        (inner, inner + 4.0 * self.sigma)
    }
}

/// Balanced blobs, n / k points per class, rows in random order.
pub fn generate_blobs(spec: &BlobSpec, n: usize, seed: u64) -> Result<LabeledDataset> {
    spec.validate()?;
    if n == 0 || n % spec.k != 0 {
        return Err(LabError::config(format!(
            "n = {n} must be a positive multiple of k = {}",
            spec.k
        )));
    }
    let means = spec.means();
    let mut labels: Vec<usize> = (0..n).map(|i| i % spec.k).collect();
    labels.shuffle(&mut rng::stream(seed, "blob_order"));
    let mut points = rng::stream(seed, "blob_points");
    let mut features = Vec::with_capacity(n * spec.dim);
    for &y in &labels {
        spec.sample_around(&means[y], &mut points, &mut features);
    }
    LabeledDataset::clean(spec.dim, spec.k, features, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpenSetKind {
    /// Uniform on a spherical shell enclosing the blobs.
    Ring,
    /// Uniform on a bounding box, blob cores rejected.
    Uniform,
}

impl OpenSetKind {
    pub fn name(self) -> &'static str {
        match self {
            OpenSetKind::Ring => "ring",
            OpenSetKind::Uniform => "uniform",
        }
    }
}

impl fmt::Display for OpenSetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpenSetKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" | "open_ring" => Ok(OpenSetKind::Ring),
            "uniform" | "open_uniform" => Ok(OpenSetKind::Uniform),
            _ => Err(LabError::Parse(format!("unknown open-set kind {s:?}"))),
        }
    }
}

/// Half-width of the box used by [`OpenSetKind::Uniform`].
pub fn uniform_box_half_width(spec: &BlobSpec) -> f64 {
    spec.ring_radii().1
}

/// M open-set points, each at least 4σ from every class mean.
pub fn generate_openset_pool(
    kind: OpenSetKind,
    m: usize,
    spec: &BlobSpec,
    seed: u64,
) -> Result<AuxiliaryPool> {
    spec.validate()?;
    let d = spec.dim;
    let mut rng = rng::stream(seed, &format!("openset_{}", kind.name()));
    let (inner, outer) = spec.ring_radii();
    let half = uniform_box_half_width(spec);
    let mut features = Vec::with_capacity(m * d);
    let mut point = vec![0.0; d];
    let budget = MAX_REJECTION_ATTEMPTS * m.max(1);
    let (mut accepted, mut attempts) = (0, 0);
    while accepted < m {
        if attempts == budget {
            return Err(LabError::config(format!(
                "open-set rejection sampling gave up after {attempts} attempts"
            )));
        }
        attempts += 1;
        match kind {
            OpenSetKind::Ring => {
                for v in point.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let norm = point.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    continue;
                }
                // radius density ∝ r^(d−1) on [inner, outer]
                let u: f64 = rng.gen();
                let lo = inner.powi(d as i32);
                let hi = outer.powi(d as i32);
                let radius = (lo + u * (hi - lo)).powf(1.0 / d as f64);
                for v in point.iter_mut() {
                    *v *= radius / norm;
                }
            }
            OpenSetKind::Uniform => {
                for v in point.iter_mut() {
                    *v = rng.gen_range(-half..half);
                }
            }
        }
        if spec.min_mahalanobis(&point) >= OPEN_SET_MIN_SIGMAS {
            features.extend_from_slice(&point);
            accepted += 1;
        }
    }
    AuxiliaryPool::new(d, features, 0.0)
}

/// Fresh draws from the training mixture (closed-set control pool).
pub fn generate_closedset_pool(m: usize, spec: &BlobSpec, seed: u64) -> Result<AuxiliaryPool> {
    spec.validate()?;
    let means = spec.means();
    let mut rng = rng::stream(seed, "closedset");
    let mut features = Vec::with_capacity(m * spec.dim);
    for _ in 0..m {
        let c = rng.gen_range(0..spec.k);
        spec.sample_around(&means[c], &mut rng, &mut features);
    }
    AuxiliaryPool::new(spec.dim, features, 1.0)
}
