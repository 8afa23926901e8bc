use nalgebra::DMatrix;
use proptest::prelude::*;

use sbbts_core::evaluation::{acf, classification_metrics, correlation_matrix, quantile, sharpe, var_es};
use sbbts_core::factors::{gmm2_fit, pca_fit, reconstruction_error};
use sbbts_core::io::{paths_from_csv, paths_to_csv};
use sbbts_core::sbbts::{checkpoint_from_bytes, checkpoint_to_bytes, train, SBBTSConfig, ScalerState};
use sbbts_core::stochastic::{GaussianNoise, RandomSource, TimeGrid};
use sbbts_core::TimeSeriesDataset;

fn random_walks(seed: u64, n_paths: usize, n_dates: usize, dim: usize, positive: bool) -> TimeSeriesDataset {
    let mut rng = RandomSource::new(seed).rng();
    let mut values = Vec::with_capacity(n_paths * n_dates * dim);
    for _ in 0..n_paths {
        let mut x: Vec<f64> = (0..dim).map(|j| 1.0 + j as f64).collect();
        for _ in 0..n_dates {
            values.extend_from_slice(&x);
            for v in x.iter_mut() {
                let e = 0.1 * rng.standard_normal();
                *v = if positive { *v * e.exp() } else { *v + e };
            }
        }
    }
    TimeSeriesDataset::new(n_paths, n_dates, dim, TimeSeriesDataset::default_names(dim), values).unwrap()
}

fn normals(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = RandomSource::new(seed).rng();
    (0..n).map(|_| rng.standard_normal()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scaler_round_trips_and_standardizes(seed in 0u64..1000, dim in 1usize..4, log in any::<bool>(), horizon in 0.1f64..5.0) {
        let data = random_walks(seed, 20, 6, dim, true);
        let grid = TimeGrid::uniform(5, horizon).unwrap();
        let flags = vec![log; dim];
        let s = ScalerState::fit_with_log(&data, &grid, &flags).unwrap();
        let scaled = s.apply(&data, &grid).unwrap();
        let back = s.invert(&scaled, &grid).unwrap();
        for (a, b) in back.values().iter().zip(data.values()) {
            prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
        // Pooled increment variance equals the interval length.
        let dt = grid.dt(0);
        for j in 0..dim {
            let mut inc = Vec::new();
            for m in 0..scaled.n_paths() {
                let x = scaled.series(m, j);
                inc.extend(x.windows(2).map(|w| w[1] - w[0]));
            }
            let mean = inc.iter().sum::<f64>() / inc.len() as f64;
            let var = inc.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / inc.len() as f64;
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((var - dt).abs() < 1e-9 * dt.max(1.0), "var {var} dt {dt}");
        }
    }

    #[test]
    fn acf_is_bounded_with_unit_lag_zero(seed in 0u64..1000, squared in any::<bool>()) {
        let x = normals(seed, 60);
        let a = acf(&x, 10, squared).unwrap();
        prop_assert!((a.values[0] - 1.0).abs() < 1e-12);
        prop_assert!(a.values.iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn correlation_matrix_is_a_correlation(seed in 0u64..1000, d in 1usize..5) {
        let z = normals(seed, 40 * d);
        let rows: Vec<Vec<f64>> = z.chunks(d).map(|r| r.to_vec()).collect();
        let c = correlation_matrix(&rows).unwrap();
        for i in 0..d {
            prop_assert!((c.values[i][i] - 1.0).abs() < 1e-12);
            for k in 0..d {
                prop_assert!((c.values[i][k] - c.values[k][i]).abs() < 1e-15);
                prop_assert!(c.values[i][k].abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn quantiles_monotone_and_es_beyond_var(seed in 0u64..1000, p in 0.0f64..1.0, q in 0.0f64..1.0) {
        let x = normals(seed, 200);
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(quantile(&x, lo).unwrap() <= quantile(&x, hi).unwrap());
        let (var, es) = var_es(&x, 0.95).unwrap();
        prop_assert!(es >= var);
    }

    #[test]
    fn sharpe_is_scale_invariant(seed in 0u64..1000, c in 1e-3f64..1e3) {
        let x: Vec<f64> = normals(seed, 50).iter().map(|v| v + 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| c * v).collect();
        let (a, _) = sharpe(&x);
        let (b, _) = sharpe(&y);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn auc_flips_with_scores(seed in 0u64..1000) {
        let z = normals(seed, 80);
        let labels: Vec<u8> = z[..40].iter().map(|v| u8::from(*v > 0.0)).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let p: Vec<f64> = z[40..].iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect();
        let flipped: Vec<f64> = p.iter().map(|v| 1.0 - v).collect();
        let a = classification_metrics(&p, &labels).unwrap();
        let b = classification_metrics(&flipped, &labels).unwrap();
        prop_assert!((a.roc_auc + b.roc_auc - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a.accuracy));
    }

    #[test]
    fn pca_identities(seed in 0u64..1000, d in 2usize..6, standardize in any::<bool>()) {
        let z = normals(seed, 30 * d);
        let x = DMatrix::from_row_slice(30, d, &z);
        let full = pca_fit(&x, d, standardize).unwrap();
        let back = full.inverse(&full.transform(&x).unwrap()).unwrap();
        prop_assert!((back - &x).amax() < 1e-8);
        let m = d - 1;
        let part = pca_fit(&x, m, standardize).unwrap();
        let discarded: f64 = part.eigenvalues[m..].iter().sum();
        prop_assert!((reconstruction_error(&part, &x).unwrap() - discarded).abs() < 1e-8);
    }

    #[test]
    fn em_never_decreases_likelihood(seed in 0u64..1000, sep in 0.0f64..4.0) {
        let z = normals(seed, 120);
        let xs: Vec<f64> = z.iter().enumerate().map(|(k, v)| if k % 3 == 0 { v + sep } else { *v }).collect();
        let fit = gmm2_fit(&xs).unwrap();
        for w in fit.log_likelihoods.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-10 * w[0].abs());
        }
    }

    #[test]
    fn path_csv_round_trips(values in prop::collection::vec(-1e300f64..1e300, 12)) {
        let ds = TimeSeriesDataset::new(2, 3, 2, TimeSeriesDataset::default_names(2), values).unwrap();
        let back = paths_from_csv(paths_to_csv(&ds).as_bytes(), std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back.values(), ds.values());
    }
}

#[test]
fn checkpoint_bytes_round_trip() {
    let data = random_walks(4, 12, 5, 2, true);
    let cfg = SBBTSConfig {
        outer_iterations: 2,
        n_epoch: 2,
        batch_size: 4,
        d_model: 8,
        n_head: 2,
        n_pi: 3,
        log_transform: vec!["x0".into()],
        ..SBBTSConfig::default()
    };
    let model = train(&data, &cfg, RandomSource::new(1)).unwrap().model;
    let bytes = checkpoint_to_bytes(&model).unwrap();
    let back = checkpoint_from_bytes(&bytes).unwrap();
    assert_eq!(checkpoint_to_bytes(&back).unwrap(), bytes);
    assert_eq!(back.scaler, model.scaler);
    assert_eq!(back.scaler.log, vec![true, false]);
}

#[test]
fn log_dimension_must_be_positive() {
    let walk = random_walks(4, 12, 5, 1, false);
    let shifted = walk.values().iter().map(|v| v - 1.0).collect();
    let data = TimeSeriesDataset::new(12, 5, 1, TimeSeriesDataset::default_names(1), shifted).unwrap();
    let cfg = SBBTSConfig { log_transform: vec!["x0".into()], n_epoch: 1, d_model: 8, n_head: 2, ..SBBTSConfig::default() };
    assert!(matches!(train(&data, &cfg, RandomSource::new(1)), Err(sbbts_core::Error::Data(_))));
    let cfg = SBBTSConfig { log_transform: vec!["nope".into()], ..cfg };
    assert!(matches!(train(&data, &cfg, RandomSource::new(1)), Err(sbbts_core::Error::Config(_))));
}
