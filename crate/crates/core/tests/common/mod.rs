//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use datavalue_core::datasets::{sample_gaussian, GaussianSpec};
use datavalue_core::linalg::CovarianceMatrix;
use datavalue_core::DataMatrix;

pub const BUYER: [[f64; 2]; 2] = [[1.0, 0.1], [0.1, 0.25]];
pub const SELLERS: [[[f64; 2]; 2]; 5] = [
    [[0.9, 0.2], [0.2, 0.15]],
    [[0.1, 0.05], [0.05, 2.0]],
    [[0.5, 0.1], [0.1, 0.5]],
    [[1.0, 0.1], [0.1, 0.25]],
    [[50.0, 0.0], [0.0, 50.0]],
];

/// Closed-form eigenpairs of `[[a, b], [b, c]]`, largest first, each vector
/// with a positive leading component.
pub fn eig2(m: [[f64; 2]; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    let (a, b, c) = (m[0][0], m[0][1], m[1][1]);
    let mid = 0.5 * (a + c);
    let rad = (0.5 * (a - c)).hypot(b);
    let l1 = mid + rad;
    let l2 = mid - rad;
    let u1 = if b == 0.0 {
        if a >= c { [1.0, 0.0] } else { [0.0, 1.0] }
    } else {
        let v = [b, l1 - a];
        let n = v[0].hypot(v[1]);
        let v = [v[0] / n, v[1] / n];
        if v[0] < 0.0 { [-v[0], -v[1]] } else { v }
    };
    let mut u2 = [-u1[1], u1[0]];
    if u2[0] < 0.0 || (u2[0] == 0.0 && u2[1] < 0.0) {
        u2 = [-u2[0], -u2[1]];
    }
    ([l1, l2], [u1, u2])
}

/// `‖Σu‖` for a 2x2 `Σ`.
pub fn proj2(s: [[f64; 2]; 2], u: [f64; 2]) -> f64 {
    let v = [s[0][0] * u[0] + s[0][1] * u[1], s[1][0] * u[0] + s[1][1] * u[1]];
    v[0].hypot(v[1])
}

/// Diversity and relevance as plain products raised to `1/d`.
pub fn dr_product(lambda: &[f64], lambda_hat: &[f64]) -> (f64, f64) {
    let d = lambda.len() as f64;
    let mut pd = 1.0;
    let mut pr = 1.0;
    for (&l, &h) in lambda.iter().zip(lambda_hat) {
        let hi = l.max(h);
        pd *= (l - h).abs() / hi;
        pr *= l.min(h) / hi;
    }
    (pd.powf(1.0 / d), pr.powf(1.0 / d))
}

/// Analytic (D, R) of a 2x2 seller covariance against the buyer's.
pub fn analytic(seller: [[f64; 2]; 2]) -> (f64, f64) {
    let (l, u) = eig2(BUYER);
    let h = [proj2(seller, u[0]), proj2(seller, u[1])];
    dr_product(&l, &h)
}

pub fn cov(m: [[f64; 2]; 2]) -> CovarianceMatrix {
    CovarianceMatrix::from_rows(&m).unwrap()
}

pub fn sample(m: [[f64; 2]; 2], n: usize, seed: u64) -> DataMatrix {
    sample_gaussian(&GaussianSpec { covariance: cov(m), n, seed }).unwrap()
}
