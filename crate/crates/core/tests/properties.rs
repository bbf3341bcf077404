mod common;

use proptest::prelude::*;

use common::{dr_product, sample, BUYER, SELLERS};
use datavalue_core::linalg::{center_columns, covariance, projected_variance, sym_eig, CovarianceMatrix};
use datavalue_core::valuation::{
    diversity, relevance, select_components, weighted_diversity, weighted_relevance, SpectrumPair,
};
use datavalue_core::{valuate, valuate_covariances, DataMatrix, ValuationConfig};

fn spectrum(max_dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_dim).prop_flat_map(|d| {
        let v = prop::collection::vec(-3.0f64..3.0, d).prop_map(|e| e.into_iter().map(|x| 10f64.powf(x)).collect::<Vec<_>>());
        (v.clone(), v)
    })
}

/// Orthogonal matrix from Gram-Schmidt on a random square matrix.
fn orthogonal(d: usize, entries: &[f64]) -> Option<Vec<Vec<f64>>> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
    for i in 0..d {
        let mut v = entries[i * d..(i + 1) * d].to_vec();
        for _ in 0..2 {
            for b in &q {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n < 1e-3 {
            return None;
        }
        q.push(v.into_iter().map(|x| x / n).collect());
    }
    Some(q)
}

fn rotate(x: &DataMatrix, q: &[Vec<f64>]) -> DataMatrix {
    let rows: Vec<Vec<f64>> = x
        .iter_rows()
        .map(|r| q.iter().map(|qi| qi.iter().zip(r).map(|(a, b)| a * b).sum()).collect())
        .collect();
    DataMatrix::from_rows(&rows).unwrap()
}

fn data(rows: usize, cols: usize) -> impl Strategy<Value = DataMatrix> {
    prop::collection::vec(-5.0f64..5.0, rows * cols).prop_map(move |v| DataMatrix::new(rows, cols, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn estimators_match_product_form((l, h) in spectrum(24)) {
        let pair = SpectrumPair::new(l.clone(), h.clone()).unwrap();
        let (d, r) = dr_product(&l, &h);
        prop_assert!((diversity(&pair).unwrap() - d).abs() <= 1e-12);
        prop_assert!((relevance(&pair).unwrap() - r).abs() <= 1e-12);
    }

    #[test]
    fn unit_weights_change_nothing((l, h) in spectrum(24)) {
        let pair = SpectrumPair::new(l.clone(), h).unwrap();
        let w = vec![1.0; l.len()];
        prop_assert_eq!(weighted_diversity(&pair, &w).unwrap(), diversity(&pair).unwrap());
        prop_assert_eq!(weighted_relevance(&pair, &w).unwrap(), relevance(&pair).unwrap());
    }

    #[test]
    fn weights_only_shrink((l, h) in spectrum(16), seed in any::<u64>()) {
        let pair = SpectrumPair::new(l.clone(), h).unwrap();
        let w: Vec<f64> = (0..l.len()).map(|i| ((seed.rotate_left(i as u32 * 7) % 1000) as f64 + 1.0) / 1001.0).collect();
        prop_assert!(weighted_diversity(&pair, &w).unwrap() <= diversity(&pair).unwrap() + 1e-15);
        prop_assert!(weighted_relevance(&pair, &w).unwrap() <= relevance(&pair).unwrap() + 1e-15);
    }

    #[test]
    fn swapping_roles_is_symmetric((l, h) in spectrum(24)) {
        let a = SpectrumPair::new(l.clone(), h.clone()).unwrap();
        let b = SpectrumPair::new(h, l).unwrap();
        prop_assert_eq!(diversity(&a).unwrap(), diversity(&b).unwrap());
        prop_assert_eq!(relevance(&a).unwrap(), relevance(&b).unwrap());
    }

    #[test]
    fn rotation_leaves_scores_unchanged(
        b in data(40, 3),
        s in data(40, 3),
        q in prop::collection::vec(-1.0f64..1.0, 9),
    ) {
        let Some(q) = orthogonal(3, &q) else { return Ok(()) };
        let config = ValuationConfig::default().with_threshold(1e-6);
        let plain = valuate(&b, &s, &config);
        let turned = valuate(&rotate(&b, &q), &rotate(&s, &q), &config);
        if let (Ok(p), Ok(t)) = (plain, turned) {
            prop_assert!((p.diversity - t.diversity).abs() <= 1e-6, "{} vs {}", p.diversity, t.diversity);
            prop_assert!((p.relevance - t.relevance).abs() <= 1e-6, "{} vs {}", p.relevance, t.relevance);
        }
    }

    #[test]
    fn feature_and_row_order_do_not_matter(b in data(30, 4), s in data(25, 4), shift in 1usize..4) {
        let config = ValuationConfig::default();
        let permute = |x: &DataMatrix| {
            let rows: Vec<Vec<f64>> = x.to_rows().into_iter().rev().map(|r| (0..4).map(|j| r[(j + shift) % 4]).collect()).collect();
            DataMatrix::from_rows(&rows).unwrap()
        };
        let a = valuate(&b, &s, &config).unwrap();
        let p = valuate(&permute(&b), &permute(&s), &config).unwrap();
        prop_assert!((a.diversity - p.diversity).abs() <= 1e-9);
        prop_assert!((a.relevance - p.relevance).abs() <= 1e-9);
    }

    #[test]
    fn same_data_always_scores_zero_and_one(b in data(20, 3)) {
        let r = valuate(&b, &b, &ValuationConfig::default().with_threshold(1e-9));
        if let Ok(r) = r {
            prop_assert_eq!((r.diversity, r.relevance), (0.0, 1.0));
        }
    }

    #[test]
    fn eigen_invariants_hold(x in data(12, 6)) {
        let c = covariance(&center_columns(&x).unwrap());
        let spec = sym_eig(&c).unwrap();
        let lam = spec.eigenvalues();
        prop_assert!(lam.windows(2).all(|w| w[0] >= w[1]));
        for i in 0..6 {
            let u = spec.eigenvector(i);
            let pv = projected_variance(&c, u).unwrap();
            prop_assert!((pv - lam[i]).abs() <= 1e-9 * lam[0].max(1.0));
            let cu = c.mul_vec(u);
            let res = cu.iter().zip(u).map(|(a, b)| (a - lam[i] * b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(res <= 1e-8 * lam[0].max(1.0));
        }
    }

    #[test]
    fn rotated_covariance_keeps_its_spectrum(
        diag in prop::collection::vec(0.0f64..10.0, 4),
        q in prop::collection::vec(-1.0f64..1.0, 16),
    ) {
        let Some(q) = orthogonal(4, &q) else { return Ok(()) };
        // C = Q^T diag Q
        let mut c = vec![0.0; 16];
        for r in 0..4 {
            for s in 0..4 {
                c[r * 4 + s] = (0..4).map(|k| q[k][r] * diag[k] * q[k][s]).sum();
            }
        }
        let spec = sym_eig(&CovarianceMatrix::from_values(4, c).unwrap()).unwrap();
        let mut want = diag.clone();
        want.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (g, w) in spec.eigenvalues().iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-9, "{:?} vs {:?}", spec.eigenvalues(), want);
        }
    }

    #[test]
    fn scaling_data_scales_projected_variance(x in data(15, 3), s in 0.1f64..10.0) {
        let c = covariance(&center_columns(&x).unwrap());
        let scaled = DataMatrix::new(15, 3, x.as_slice().iter().map(|v| v * s).collect()).unwrap();
        let cs = covariance(&center_columns(&scaled).unwrap());
        let u = [0.6, 0.0, 0.8];
        let a = projected_variance(&c, &u).unwrap() * s * s;
        let b = projected_variance(&cs, &u).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }
}

#[test]
fn scaled_spectra_approach_the_corner() {
    let l = vec![3.0, 1.0, 0.2];
    let mut prev = (0.0, 1.0);
    for t in [1.5, 10.0, 100.0, 1e3, 1e6] {
        let pair = SpectrumPair::new(l.clone(), l.iter().map(|x| x * t).collect()).unwrap();
        let (d, r) = (diversity(&pair).unwrap(), relevance(&pair).unwrap());
        assert!(d > prev.0 && r < prev.1);
        prev = (d, r);
    }
    assert!(prev.0 > 0.999_99 && prev.1 < 1e-5);
}

#[test]
fn selection_is_a_prefix_of_sorted_components() {
    let sel = select_components(&[5.0, 1.0, 0.02, 0.01, 0.0], 1e-2).unwrap();
    assert_eq!(sel, vec![0, 1, 2]);
}

#[test]
fn sampled_sellers_keep_the_analytic_ordering_across_seeds() {
    // seller 2 more diverse than seller 3 more diverse than seller 1, on
    // smaller samples and several seeds
    for seed in 0..5 {
        let buyer = sample(BUYER, 4_000, 100 + seed);
        let d: Vec<f64> = [0usize, 2, 1]
            .iter()
            .map(|&k| valuate(&buyer, &sample(SELLERS[k], 4_000, 200 + seed * 10 + k as u64), &ValuationConfig::default()).unwrap().diversity)
            .collect();
        assert!(d[0] < d[1] && d[1] < d[2], "seed {seed}: {d:?}");
    }
}

#[test]
fn covariance_entry_point_matches_data_entry_point_in_the_limit() {
    let buyer = sample(BUYER, 50_000, 1);
    let seller = sample(SELLERS[2], 50_000, 2);
    let from_data = valuate(&buyer, &seller, &ValuationConfig::default()).unwrap();
    let exact = valuate_covariances(
        &CovarianceMatrix::from_rows(&BUYER).unwrap(),
        &CovarianceMatrix::from_rows(&SELLERS[2]).unwrap(),
        &ValuationConfig::default(),
    )
    .unwrap();
    assert!((from_data.diversity - exact.diversity).abs() < 0.03);
    assert!((from_data.relevance - exact.relevance).abs() < 0.03);
}
