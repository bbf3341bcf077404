use serde::{Deserialize, Serialize};

use super::CovarianceMatrix;
use crate::error::{Error, Result};

/// Sweep budget for the cyclic Jacobi iteration.
pub const MAX_SWEEPS: usize = 100;

/// Convergence when the off-diagonal Frobenius norm drops to this fraction
/// of the full Frobenius norm.
pub const OFF_DIAGONAL_RTOL: f64 = 1e-12;

/// Eigenvalues below `-NEGATIVE_TOL * max(1, |λ|max)` mean the input was
/// not positive semi-definite; anything above that is clamped to zero.
const NEGATIVE_TOL: f64 = 1e-10;

const SIGN_TOL: f64 = 1e-12;

/// Descending eigenvalues with their orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSpectrum {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
}

impl EigenSpectrum {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn eigenvector(&self, i: usize) -> &[f64] {
        &self.vectors[i]
    }

    pub fn eigenvectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues come back sorted non-increasing (a stable sort, so ties keep
/// the diagonal order the rotations left them in) and clamped at zero. Each
/// eigenvector is flipped so its first component with magnitude above
/// `1e-12` is positive. The result depends only on the input bits.
pub fn sym_eig(c: &CovarianceMatrix) -> Result<EigenSpectrum> {
    let n = c.dim();
    let mut a = c.as_slice().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let total = frobenius(&a);
    let tol = OFF_DIAGONAL_RTOL * total;
    let mut converged = off_diagonal(&a, n) <= tol;
    let mut sweep = 0;
    while !converged && sweep < MAX_SWEEPS {
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, n, p, q);
            }
        }
        sweep += 1;
        converged = off_diagonal(&a, n) <= tol;
    }
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "Jacobi iteration did not converge in {MAX_SWEEPS} sweeps (d = {n})"
        )));
    }

    let raw: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| raw[j].total_cmp(&raw[i]));

    let scale = raw.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for &k in &order {
        let lambda = raw[k];
        if lambda < -NEGATIVE_TOL * scale {
            return Err(Error::InvalidCovariance(format!(
                "eigenvalue {lambda} is negative; matrix is not positive semi-definite"
            )));
        }
        values.push(lambda.max(0.0));
        let mut u: Vec<f64> = (0..n).map(|r| v[r * n + k]).collect();
        if let Some(lead) = u.iter().find(|x| x.abs() > SIGN_TOL) {
            if *lead < 0.0 {
                u.iter_mut().for_each(|x| *x = -*x);
            }
        }
        vectors.push(u);
    }
    Ok(EigenSpectrum { values, vectors })
}

fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn off_diagonal(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Annihilates `a[p][q]` with one plane rotation, accumulating it into `v`.
fn rotate(a: &mut [f64], v: &mut [f64], n: usize, p: usize, q: usize) {
    let apq = a[p * n + q];
    if apq == 0.0 {
        return;
    }
    let app = a[p * n + p];
    let aqq = a[q * n + q];
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);

    a[p * n + p] = app - t * apq;
    a[q * n + q] = aqq + t * apq;
    a[p * n + q] = 0.0;
    a[q * n + p] = 0.0;
    for r in 0..n {
        if r == p || r == q {
            continue;
        }
        let arp = a[r * n + p];
        let arq = a[r * n + q];
        let new_rp = arp - s * (arq + tau * arp);
        let new_rq = arq + s * (arp - tau * arq);
        a[r * n + p] = new_rp;
        a[p * n + r] = new_rp;
        a[r * n + q] = new_rq;
        a[q * n + r] = new_rq;
    }
    for r in 0..n {
        let vrp = v[r * n + p];
        let vrq = v[r * n + q];
        v[r * n + p] = vrp - s * (vrq + tau * vrp);
        v[r * n + q] = vrq + s * (vrp - tau * vrq);
    }
}
