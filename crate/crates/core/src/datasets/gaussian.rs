//! Seeded Gaussian synthesis and noise injection.
//!
//! All randomness comes from [`rng_from_seed`]: ChaCha8 (`rand_chacha`)
//! seeded through `SeedableRng::seed_from_u64`, with standard normals drawn
//! by `rand_distr::StandardNormal`. Both are portable, so a seed reproduces
//! the same matrix on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CovarianceMatrix, DataMatrix};

/// Diagonal pivots at or below this fraction of the largest diagonal entry
/// are treated as zero, which makes the factorization rank-revealing.
pub const PIVOT_TOL: f64 = 1e-12;

pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    pub covariance: CovarianceMatrix,
    pub n: usize,
    pub seed: u64,
}

/// On-disk covariance description: `{"dim": d, "cov": [[...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpecFile {
    pub dim: usize,
    pub cov: Vec<Vec<f64>>,
}

impl CovarianceSpecFile {
    pub fn parse(text: &str) -> Result<CovarianceMatrix> {
        let spec: CovarianceSpecFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line() as u64,
            message: e.to_string(),
        })?;
        spec.to_covariance()
    }

    pub fn to_covariance(&self) -> Result<CovarianceMatrix> {
        if self.dim == 0 || self.cov.len() != self.dim || self.cov.iter().any(|r| r.len() != self.dim) {
            return Err(Error::InvalidCovariance(format!(
                "\"cov\" must be a {0}x{0} matrix",
                self.dim
            )));
        }
        for i in 0..self.dim {
            for j in 0..i {
                let (a, b) = (self.cov[i][j], self.cov[j][i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::InvalidCovariance(format!(
                        "entries ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        CovarianceMatrix::from_rows(&self.cov)
    }
}

/// Lower-triangular `L` with `L·Lᵀ = Σ`, row-major.
///
/// Semi-definite input is supported: a zero pivot zeroes its whole column.
#[derive(Debug, Clone)]
struct PsdFactor {
    dim: usize,
    lower: Vec<f64>,
}

impl PsdFactor {
    fn new(c: &CovarianceMatrix) -> Result<Self> {
        let n = c.dim();
        let scale = (0..n).fold(0.0_f64, |m, i| m.max(c.get(i, i).abs()));
        let tol = PIVOT_TOL * scale;
        let off_tol = PIVOT_TOL.sqrt() * scale;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let dot_jj: f64 = (0..j).map(|k| l[j * n + k] * l[j * n + k]).sum();
            let pivot = c.get(j, j) - dot_jj;
            if pivot < -tol {
                return Err(Error::InvalidCovariance(format!(
                    "not positive semi-definite (pivot {pivot} at index {j})"
                )));
            }
            if pivot <= tol {
                for i in (j + 1)..n {
                    let dot: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
                    let residual = c.get(i, j) - dot;
                    if residual.abs() > off_tol {
                        return Err(Error::InvalidCovariance(format!(
                            "not positive semi-definite (zero pivot at index {j} with coupling {residual})"
                        )));
                    }
                }
                continue;
            }
            let root = pivot.sqrt();
            l[j * n + j] = root;
            for i in (j + 1)..n {
                let dot: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
                l[i * n + j] = (c.get(i, j) - dot) / root;
            }
        }
        Ok(Self { dim: n, lower: l })
    }

    fn sample_into<R: Rng>(&self, rng: &mut R, z: &mut [f64], out: &mut Vec<f64>) {
        let n = self.dim;
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i + 1];
            out.push(row.iter().zip(&z[..=i]).fold(0.0, |acc, (a, b)| acc + a * b));
        }
    }
}

/// `n` zero-mean samples with covariance `Σ = L·Lᵀ`, as `L·z` for seeded
/// standard-normal `z`.
pub fn sample_gaussian(spec: &GaussianSpec) -> Result<DataMatrix> {
    let factor = PsdFactor::new(&spec.covariance)?;
    let d = spec.covariance.dim();
    let mut rng = rng_from_seed(spec.seed);
    let mut z = vec![0.0; d];
    let mut values = Vec::with_capacity(spec.n * d);
    for _ in 0..spec.n {
        factor.sample_into(&mut rng, &mut z, &mut values);
    }
    DataMatrix::new(spec.n, d, values)
}

/// `x + sigma·N` with `N` i.i.d. standard normal from the seeded generator.
pub fn add_noise(x: &DataMatrix, sigma: f64, seed: u64) -> Result<DataMatrix> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::InvalidData(format!(
            "noise level must be finite and non-negative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let mut rng = rng_from_seed(seed);
    let values = x
        .as_slice()
        .iter()
        .map(|v| {
            let e: f64 = rng.sample(StandardNormal);
            v + sigma * e
        })
        .collect();
    DataMatrix::new(x.rows(), x.cols(), values)
}

/// Equal-weight mixture of zero-mean Gaussian classes.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    factors: Vec<PsdFactor>,
    dim: usize,
}

impl GaussianMixture {
    pub fn new(components: &[CovarianceMatrix]) -> Result<Self> {
        let dim = components
            .first()
            .map(CovarianceMatrix::dim)
            .ok_or_else(|| Error::InvalidData("mixture needs at least one component".into()))?;
        if components.iter().any(|c| c.dim() != dim) {
            return Err(Error::Dimension("mixture components differ in dimension".into()));
        }
        let factors = components.iter().map(PsdFactor::new).collect::<Result<_>>()?;
        Ok(Self { factors, dim })
    }

    /// Ten classes in ten features. Class `k` has variance `4 + k/2` along
    /// feature `k` on top of an isotropic floor of `0.05`, so each class
    /// contributes its own dominant direction.
    pub fn ten_class_analog() -> Self {
        const CLASSES: usize = 10;
        const FLOOR: f64 = 0.05;
        let components: Vec<CovarianceMatrix> = (0..CLASSES)
            .map(|k| {
                let mut v = vec![0.0; CLASSES * CLASSES];
                for i in 0..CLASSES {
                    v[i * CLASSES + i] = FLOOR;
                }
                v[k * CLASSES + k] += 4.0 + 0.5 * k as f64;
                CovarianceMatrix::from_values(CLASSES, v).expect("static covariance")
            })
            .collect();
        Self::new(&components).expect("static mixture is PSD")
    }

    pub fn num_classes(&self) -> usize {
        self.factors.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `n` samples, each from a class drawn uniformly from `classes`.
    pub fn sample(&self, classes: &[usize], n: usize, seed: u64) -> Result<DataMatrix> {
        if classes.is_empty() {
            return Err(Error::InvalidData("no classes to sample from".into()));
        }
        if let Some(&bad) = classes.iter().find(|&&c| c >= self.factors.len()) {
            return Err(Error::InvalidData(format!(
                "class {bad} does not exist in a {}-class mixture",
                self.factors.len()
            )));
        }
        let mut rng = rng_from_seed(seed);
        let mut z = vec![0.0; self.dim];
        let mut values = Vec::with_capacity(n * self.dim);
        for _ in 0..n {
            let class = classes[rng.random_range(0..classes.len())];
            self.factors[class].sample_into(&mut rng, &mut z, &mut values);
        }
        DataMatrix::new(n, self.dim, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{center_columns, covariance, sym_eig};

    fn cov(rows: &[&[f64]]) -> CovarianceMatrix {
        CovarianceMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn zero_covariance_gives_zero_samples() {
        let spec = GaussianSpec { covariance: cov(&[&[0.0, 0.0], &[0.0, 0.0]]), n: 50, seed: 3 };
        let x = sample_gaussian(&spec).unwrap();
        assert!(x.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_covariance_converges() {
        let spec = GaussianSpec { covariance: cov(&[&[1.0, 0.0], &[0.0, 1.0]]), n: 100_000, seed: 11 };
        let c = covariance(&center_columns(&sample_gaussian(&spec).unwrap()).unwrap());
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((c.get(i, j) - expect).abs() < 0.02, "{:?}", c);
            }
        }
    }

    #[test]
    fn buyer_spectrum_from_samples() {
        let spec = GaussianSpec { covariance: cov(&[&[1.0, 0.1], &[0.1, 0.25]]), n: 10_000, seed: 5 };
        let c = covariance(&center_columns(&sample_gaussian(&spec).unwrap()).unwrap());
        let l = sym_eig(&c).unwrap();
        assert!((l.eigenvalues()[0] - 1.0131).abs() < 0.03);
        assert!((l.eigenvalues()[1] - 0.2369).abs() < 0.03);
    }

    #[test]
    fn sampled_covariance_tracks_target() {
        let target = cov(&[&[1.0, 0.1], &[0.1, 0.25]]);
        let spec = GaussianSpec { covariance: target.clone(), n: 10_000, seed: 42 };
        let c = covariance(&center_columns(&sample_gaussian(&spec).unwrap()).unwrap());
        for i in 0..2 {
            for j in 0..2 {
                assert!((c.get(i, j) - target.get(i, j)).abs() < 0.05);
            }
        }
    }

    #[test]
    fn rank_deficient_covariance_is_supported() {
        // rank one: x2 = 2 * x1
        let spec = GaussianSpec { covariance: cov(&[&[1.0, 2.0], &[2.0, 4.0]]), n: 200, seed: 9 };
        let x = sample_gaussian(&spec).unwrap();
        for row in x.iter_rows() {
            assert!((row[1] - 2.0 * row[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn indefinite_covariance_is_rejected() {
        for c in [cov(&[&[0.0, 1.0], &[1.0, 0.0]]), cov(&[&[1.0, 2.0], &[2.0, 1.0]]), cov(&[&[-1.0]])] {
            let spec = GaussianSpec { covariance: c, n: 10, seed: 0 };
            assert!(matches!(sample_gaussian(&spec), Err(Error::InvalidCovariance(_))));
        }
    }

    #[test]
    fn seeded_determinism() {
        let spec = GaussianSpec { covariance: cov(&[&[2.0, 0.3], &[0.3, 1.0]]), n: 100, seed: 77 };
        assert_eq!(sample_gaussian(&spec).unwrap(), sample_gaussian(&spec).unwrap());
        let x = sample_gaussian(&spec).unwrap();
        assert_eq!(add_noise(&x, 1.0, 4).unwrap(), add_noise(&x, 1.0, 4).unwrap());
        assert_ne!(add_noise(&x, 1.0, 4).unwrap(), add_noise(&x, 1.0, 5).unwrap());
    }

    #[test]
    fn zero_noise_is_identity() {
        let x = DataMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(add_noise(&x, 0.0, 1).unwrap(), x);
        assert!(add_noise(&x, -1.0, 1).is_err());
    }

    #[test]
    fn pure_noise_is_isotropic() {
        let x = DataMatrix::zeros(100_000, 4).unwrap();
        let c = covariance(&center_columns(&add_noise(&x, 1.0, 8).unwrap()).unwrap());
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((c.get(i, j) - expect).abs() < 0.02);
            }
        }
    }

    #[test]
    fn spec_file_parsing() {
        let c = CovarianceSpecFile::parse(r#"{"dim": 2, "cov": [[1, 0.1], [0.1, 0.25]]}"#).unwrap();
        assert_eq!(c.get(0, 1), 0.1);
        assert!(matches!(
            CovarianceSpecFile::parse(r#"{"dim": 3, "cov": [[1, 0.1], [0.1, 0.25]]}"#),
            Err(Error::InvalidCovariance(_))
        ));
        assert!(matches!(
            CovarianceSpecFile::parse(r#"{"dim": 2, "cov": [[1, 0.1], [0.2, 0.25]]}"#),
            Err(Error::InvalidCovariance(_))
        ));
        assert!(matches!(CovarianceSpecFile::parse("{not json"), Err(Error::Parse { .. })));
    }

    #[test]
    fn mixture_sampling() {
        let m = GaussianMixture::ten_class_analog();
        assert_eq!((m.num_classes(), m.dim()), (10, 10));
        let x = m.sample(&[0, 1, 2], 500, 1).unwrap();
        assert_eq!((x.rows(), x.cols()), (500, 10));
        assert_eq!(x, m.sample(&[0, 1, 2], 500, 1).unwrap());
        assert!(m.sample(&[10], 5, 1).is_err());
        assert!(m.sample(&[], 5, 1).is_err());
    }
}
