use noisylab::harness::data::{
    generate_blobs, generate_closedset_pool, generate_openset_pool, uniform_box_half_width,
    BlobSpec, OpenSetKind, OPEN_SET_MIN_SIGMAS,
};
use noisylab::noisegen::{AuxiliaryPool, LabeledDataset};
use noisylab::training::{evaluate_dataset, train, TrainConfig, TrainData};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn planar(separation: f64) -> BlobSpec {
    BlobSpec {
        k: 4,
        dim: 2,
        separation,
        sigma: 1.0,
    }
}

fn nearest_mean_distance(spec: &BlobSpec, x: &[f64]) -> (usize, f64) {
    spec.means()
        .iter()
        .enumerate()
        .map(|(c, m)| {
            let d = m
                .iter()
                .zip(x)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            (c, d)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

/// Two-sample Kolmogorov-Smirnov statistic.
fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let ecdf = |v: &[f64], x: f64| v.partition_point(|s| *s <= x) as f64 / v.len() as f64;
    a.iter()
        .chain(&b)
        .map(|&x| (ecdf(&a, x) - ecdf(&b, x)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn well_separated_blobs_are_linearly_separable() {
    let spec = planar(6.0);
    let train_set = generate_blobs(&spec, 2000, 1).unwrap();
    let test = generate_blobs(&spec, 1000, 2).unwrap();
    let mut cfg = TrainConfig::default();
    cfg.hidden = vec![];
    cfg.epochs = 30;
    cfg.lr.decay_epochs = vec![20];
    let out = train(&cfg, TrainData::new(&train_set).with_test(&test)).unwrap();
    let acc = evaluate_dataset(&out.params, &test).unwrap().accuracy;
    assert!(acc >= 0.99, "linear probe accuracy {acc}");
}

#[test]
fn closed_pool_class_proportions_are_balanced() {
    let spec = planar(6.0);
    let m = 20_000;
    let pool = generate_closedset_pool(m, &spec, 11).unwrap();
    let mut counts = [0usize; 4];
    for i in 0..pool.len() {
        counts[nearest_mean_distance(&spec, pool.row(i)).0] += 1;
    }
    // at separation 6σ nearest-mean assignment recovers the component almost surely
    let p = 0.25;
    let sd = (m as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!(
            (c as f64 - m as f64 * p).abs() <= 3.0 * sd + 0.002 * m as f64,
            "{counts:?}"
        );
    }
}

#[test]
fn closed_pool_matches_in_distribution_scatter() {
    let spec = planar(4.0);
    let pool = generate_closedset_pool(3000, &spec, 5).unwrap();
    let fresh = generate_blobs(&spec, 3000, 6).unwrap();
    let a: Vec<f64> = (0..pool.len())
        .map(|i| nearest_mean_distance(&spec, pool.row(i)).1)
        .collect();
    let b: Vec<f64> = (0..fresh.len())
        .map(|i| nearest_mean_distance(&spec, fresh.row(i)).1)
        .collect();
    let (n, m) = (a.len() as f64, b.len() as f64);
    let critical = 1.628 * ((n + m) / (n * m)).sqrt();
    let d = ks_statistic(a, b);
    assert!(d < critical, "KS statistic {d} ≥ {critical}");
}

#[test]
fn uniform_open_set_pool_is_uniform_on_admissible_region() {
    let spec = planar(4.0);
    let pool = generate_openset_pool(OpenSetKind::Uniform, 100_000, &spec, 9).unwrap();
    let half = uniform_box_half_width(&spec);
    let cells = 8usize;
    let width = 2.0 * half / cells as f64;

    // admissible area per cell from a fine deterministic lattice
    let sub = 60usize;
    let mut weight = vec![0.0; cells * cells];
    for cx in 0..cells {
        for cy in 0..cells {
            let mut ok = 0;
            for sx in 0..sub {
                for sy in 0..sub {
                    let x = -half + width * (cx as f64 + (sx as f64 + 0.5) / sub as f64);
                    let y = -half + width * (cy as f64 + (sy as f64 + 0.5) / sub as f64);
                    if spec.min_mahalanobis(&[x, y]) >= OPEN_SET_MIN_SIGMAS {
                        ok += 1;
                    }
                }
            }
            weight[cx * cells + cy] = ok as f64;
        }
    }
    let total_weight: f64 = weight.iter().sum();

    let mut counts = vec![0.0; cells * cells];
    for i in 0..pool.len() {
        let r = pool.row(i);
        let cx = (((r[0] + half) / width) as usize).min(cells - 1);
        let cy = (((r[1] + half) / width) as usize).min(cells - 1);
        counts[cx * cells + cy] += 1.0;
    }
    let n = pool.len() as f64;
    let mut chi2 = 0.0;
    let mut dof = 0usize;
    for (obs, w) in counts.iter().zip(&weight) {
        let expected = n * w / total_weight;
        if expected < 20.0 {
            // boundary cells whose admissible area the lattice cannot resolve
            continue;
        }
        chi2 += (obs - expected).powi(2) / expected;
        dof += 1;
    }
    let limit = ChiSquared::new((dof - 1) as f64)
        .unwrap()
        .inverse_cdf(0.999);
    assert!(chi2 < limit, "chi-square {chi2} over {dof} cells ≥ {limit}");
}

#[test]
fn ring_pool_in_high_dimension_respects_bounds() {
    let spec = BlobSpec {
        k: 4,
        dim: 8,
        separation: 3.5,
        sigma: 1.0,
    };
    let pool = generate_openset_pool(OpenSetKind::Ring, 5000, &spec, 3).unwrap();
    let (inner, outer) = spec.ring_radii();
    for i in 0..pool.len() {
        let r = pool.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(r >= inner - 1e-9 && r <= outer + 1e-9);
        assert!(spec.min_mahalanobis(pool.row(i)) >= OPEN_SET_MIN_SIGMAS);
    }
}

#[test]
fn generators_are_deterministic_to_the_byte() {
    let spec = planar(4.0);
    let render = |seed: u64| {
        let mut bytes = Vec::new();
        generate_blobs(&spec, 400, seed)
            .unwrap()
            .write_csv(&mut bytes)
            .unwrap();
        generate_openset_pool(OpenSetKind::Ring, 300, &spec, seed)
            .unwrap()
            .write_csv(&mut bytes)
            .unwrap();
        generate_closedset_pool(300, &spec, seed)
            .unwrap()
            .write_csv(&mut bytes)
            .unwrap();
        bytes
    };
    assert_eq!(render(21), render(21));
    assert_ne!(render(21), render(22));
}

#[test]
fn csv_interfaces_roundtrip() {
    let spec = planar(4.0);
    let data = generate_blobs(&spec, 40, 0).unwrap();
    let mut bytes = Vec::new();
    data.write_csv(&mut bytes).unwrap();
    let text = String::from_utf8(bytes.clone()).unwrap();
    assert!(text.starts_with("f0,f1,observed_label,true_label,open_set\n"));
    assert_eq!(LabeledDataset::read_csv(bytes.as_slice(), 4).unwrap(), data);

    let pool = generate_openset_pool(OpenSetKind::Uniform, 25, &spec, 0).unwrap();
    let mut bytes = Vec::new();
    pool.write_csv(&mut bytes).unwrap();
    let back = AuxiliaryPool::read_csv(bytes.as_slice(), 4).unwrap();
    assert_eq!(back.features(), pool.features());
    assert!(back.fixed_labels().is_none());
}
