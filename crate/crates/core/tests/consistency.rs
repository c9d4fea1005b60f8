use nalgebra::DMatrix;

use scoreplot_core::experiments::{convergence_metrics, wishart_eigvec_variance};
use scoreplot_core::limit::{build_w, predict_dual_eigenvector, wishart_asymptotics};
use scoreplot_core::model::{Block, BlockSpec, CovarianceModel, SignalStrengths, SpikeSpec};
use scoreplot_core::pca::{pca_decompose, Divisor, Normalization};
use scoreplot_core::simulate::{generate_dataset, ScoreDistribution};

const NORMAL: ScoreDistribution = ScoreDistribution::StandardNormal;

fn sorted_desc(m: DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

#[test]
fn dual_matches_primal() {
    let model: CovarianceModel = SpikeSpec::new(vec![5.0, 2.0], 1.0, 150, 40).unwrap().into();
    let ds = generate_dataset(&model, 40, NORMAL, 11).unwrap();
    for norm in [Normalization::default(), Normalization::sample_covariance()] {
        let r = pca_decompose(&ds.x, 10, norm).unwrap();
        let xc = scoreplot_core::pca::prepare(&ds.x, norm);
        let cov = &xc * xc.transpose() / norm.divisor_value(40);
        let dense = sorted_desc(cov);
        for j in 0..r.eigenvalues.len().min(30) {
            let rel = (r.eigenvalues[j] - dense[j]).abs() / dense[0];
            assert!(rel < 1e-9, "j = {j}: {} vs {}", r.eigenvalues[j], dense[j]);
        }
        let u = &r.dual_vectors;
        let v = r.primal_vectors(&ds.x);
        for a in 0..10 {
            for b in 0..10 {
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((u.column(a).dot(&u.column(b)) - target).abs() < 1e-10);
                assert!((v.column(a).dot(&v.column(b)) - target).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn block_eigenvalues_grow_linearly() {
    let blocks = vec![
        Block {
            fraction: 0.3,
            rho: 0.8,
        },
        Block {
            fraction: 0.2,
            rho: 0.5,
        },
    ];
    let sigma2 = 2.0;
    for (b, j) in blocks.iter().zip(0..) {
        let limit = sigma2 * b.rho * b.fraction;
        let dev: Vec<f64> = [100usize, 1000, 10_000]
            .iter()
            .map(|&p| {
                let s = BlockSpec::new(sigma2, blocks.clone(), p).unwrap();
                (s.eigenvalues().spikes[j] / p as f64 - limit).abs() / limit
            })
            .collect();
        assert!(dev[2] < 0.02, "{dev:?}");
        assert!(dev[0] > dev[1] && dev[1] > dev[2], "{dev:?}");
    }
}

#[test]
fn empirical_covariance_is_consistent() {
    let spec = BlockSpec::new(
        1.5,
        vec![
            Block {
                fraction: 0.4,
                rho: 0.6,
            },
            Block {
                fraction: 0.2,
                rho: 0.3,
            },
        ],
        30,
    )
    .unwrap();
    let model: CovarianceModel = spec.clone().into();
    let n = 100_000;
    let ds = generate_dataset(&model, n, NORMAL, 5).unwrap();
    let sigma = spec.materialize(100).unwrap();
    let emp = &ds.x * ds.x.transpose() / n as f64;
    let err = (&emp - &sigma).abs().max() / sigma.abs().max();
    assert!(err < 0.05, "{err}");
}

#[test]
fn limit_converges_with_p() {
    let spec = SpikeSpec::new(vec![12.0, 8.0], 1.0, 500, 50).unwrap();
    let metrics: Vec<_> = [500usize, 5000, 50_000]
        .iter()
        .map(|&p| {
            let s = spec.with_dim(p).unwrap();
            let ds = generate_dataset(&s.clone().into(), 50, NORMAL, 21).unwrap();
            convergence_metrics(&ds, s.strengths(), 1.0).unwrap()
        })
        .collect();
    assert!(metrics
        .windows(2)
        .all(|w| w[1].max_abs < w[0].max_abs && w[1].rmse < w[0].rmse));
    assert!(metrics[2].max_abs < 0.05);
}

#[test]
fn dual_eigenvectors_align_with_limit() {
    let s = SpikeSpec::new(vec![12.0, 8.0], 1.0, 50_000, 50).unwrap();
    let ds = generate_dataset(&s.clone().into(), 50, NORMAL, 8).unwrap();
    let r = pca_decompose(
        &ds.x,
        2,
        Normalization {
            centered: false,
            divisor: Divisor::N,
        },
    )
    .unwrap();
    let we = build_w(&ds.top_scores(2), s.strengths()).unwrap();
    for j in 0..2 {
        let u = predict_dual_eigenvector(&we, j).unwrap();
        let cos: f64 = (0..50).map(|i| u[i] * r.dual_vectors[(i, j)]).sum();
        assert!(cos.abs() > 0.99, "component {j}: {cos}");
    }
    for a in 0..2 {
        for b in 0..2 {
            let ua = predict_dual_eigenvector(&we, a).unwrap();
            let ub = predict_dual_eigenvector(&we, b).unwrap();
            let d: f64 = ua.iter().zip(&ub).map(|(x, y)| x * y).sum();
            assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-8);
        }
    }
}

#[test]
fn wishart_eigenvector_variance() {
    let s = SignalStrengths::new(vec![4.0, 1.0]).unwrap();
    let theory = wishart_asymptotics(&s, 0).unwrap();
    assert!((theory.eigvec_cov_diag[1] - 4.0 / 9.0).abs() < 1e-12);
    let mc = wishart_eigvec_variance(&s, 0, 10_000, 2_000, 17).unwrap();
    let rel = (mc[1] - theory.eigvec_cov_diag[1]).abs() / theory.eigvec_cov_diag[1];
    assert!(rel < 0.1, "{} vs {}", mc[1], theory.eigvec_cov_diag[1]);
}
