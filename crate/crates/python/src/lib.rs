//! Python bindings. Matrices are sequences of rows (lists of lists or 2-D
//! numpy arrays); rows are samples and columns are features.

use pyo3::exceptions::{PyConnectionError, PyTimeoutError, PyValueError};
use pyo3::prelude::*;

use datavalue_core::datasets::{sample_gaussian as sample, GaussianSpec};
use datavalue_core::linalg::{sym_eig as eig, CovarianceMatrix};
use datavalue_core::protocol::run_session as session;
use datavalue_core::valuation::{self, SpectrumPair};
use datavalue_core::{DataMatrix, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Transport(m) => PyConnectionError::new_err(m),
        Error::Timeout(m) => PyTimeoutError::new_err(m),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DataMatrix> {
    DataMatrix::from_rows(&rows).map_err(to_py)
}

fn cov(rows: Vec<Vec<f64>>) -> PyResult<CovarianceMatrix> {
    CovarianceMatrix::from_rows(&rows).map_err(to_py)
}

#[pyclass(name = "ValuationConfig", module = "datavalue", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: valuation::ValuationConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (threshold = valuation::DEFAULT_COMPONENT_THRESHOLD, weights = None, alpha = None))]
    fn new(threshold: f64, weights: Option<Vec<f64>>, alpha: Option<f64>) -> PyResult<Self> {
        let inner = valuation::ValuationConfig { component_threshold: threshold, weights, alpha };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.component_threshold
    }

    #[getter]
    fn weights(&self) -> Option<Vec<f64>> {
        self.inner.weights.clone()
    }

    #[getter]
    fn alpha(&self) -> Option<f64> {
        self.inner.alpha
    }

    fn __repr__(&self) -> String {
        let weights = self.inner.weights.as_ref().map_or_else(|| "None".to_owned(), |w| format!("{w:?}"));
        let alpha = self.inner.alpha.map_or_else(|| "None".to_owned(), |a| format!("{a:?}"));
        format!(
            "ValuationConfig(threshold={:?}, weights={weights}, alpha={alpha})",
            self.inner.component_threshold
        )
    }
}

#[pyclass(name = "ValuationReport", module = "datavalue", frozen)]
struct PyReport {
    inner: datavalue_core::ValuationReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn diversity(&self) -> f64 {
        self.inner.diversity
    }

    #[getter]
    fn relevance(&self) -> f64 {
        self.inner.relevance
    }

    #[getter]
    fn combined(&self) -> Option<f64> {
        self.inner.combined
    }

    #[getter]
    fn selected_components(&self) -> Vec<usize> {
        self.inner.selected_components.clone()
    }

    fn __repr__(&self) -> String {
        let combined = self.inner.combined.map_or_else(|| "None".to_owned(), |c| format!("{c:?}"));
        format!(
            "ValuationReport(diversity={:?}, relevance={:?}, combined={combined})",
            self.inner.diversity, self.inner.relevance
        )
    }
}

fn config_of(config: Option<PyRef<'_, PyConfig>>) -> valuation::ValuationConfig {
    config.map(|c| c.inner.clone()).unwrap_or_default()
}

/// Diversity and relevance of `seller` data against `buyer` data.
#[pyfunction]
#[pyo3(signature = (buyer, seller, config = None))]
fn valuate(buyer: Vec<Vec<f64>>, seller: Vec<Vec<f64>>, config: Option<PyRef<'_, PyConfig>>) -> PyResult<PyReport> {
    let inner = datavalue_core::valuate(&matrix(buyer)?, &matrix(seller)?, &config_of(config)).map_err(to_py)?;
    Ok(PyReport { inner })
}

/// Same as `valuate`, from known covariance matrices.
#[pyfunction]
#[pyo3(signature = (buyer_cov, seller_cov, config = None))]
fn valuate_covariances(
    buyer_cov: Vec<Vec<f64>>,
    seller_cov: Vec<Vec<f64>>,
    config: Option<PyRef<'_, PyConfig>>,
) -> PyResult<PyReport> {
    let inner = datavalue_core::valuate_covariances(&cov(buyer_cov)?, &cov(seller_cov)?, &config_of(config))
        .map_err(to_py)?;
    Ok(PyReport { inner })
}

/// Runs the buyer/seller/broker exchange in-process, one report per seller.
#[pyfunction]
#[pyo3(signature = (buyer, sellers, decoys = 0, config = None, seed = 0))]
fn run_session(
    buyer: Vec<Vec<f64>>,
    sellers: Vec<Vec<Vec<f64>>>,
    decoys: usize,
    config: Option<PyRef<'_, PyConfig>>,
    seed: u64,
) -> PyResult<Vec<PyReport>> {
    let sellers = sellers.into_iter().map(matrix).collect::<PyResult<Vec<_>>>()?;
    let outcomes = session(&matrix(buyer)?, &sellers, decoys, &config_of(config), seed).map_err(to_py)?;
    Ok(outcomes.into_iter().map(|o| PyReport { inner: o.report }).collect())
}

/// Diversity of two equal-length spectra.
#[pyfunction]
fn diversity(buyer: Vec<f64>, seller: Vec<f64>) -> PyResult<f64> {
    valuation::diversity(&SpectrumPair::new(buyer, seller).map_err(to_py)?).map_err(to_py)
}

/// Relevance of two equal-length spectra.
#[pyfunction]
fn relevance(buyer: Vec<f64>, seller: Vec<f64>) -> PyResult<f64> {
    valuation::relevance(&SpectrumPair::new(buyer, seller).map_err(to_py)?).map_err(to_py)
}

/// Eigenvalues (descending) and eigenvectors (one per row) of a symmetric
/// PSD matrix.
#[pyfunction]
fn sym_eig(c: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let spec = eig(&cov(c)?).map_err(to_py)?;
    Ok((spec.eigenvalues().to_vec(), spec.eigenvectors().to_vec()))
}

/// `n` seeded zero-mean Gaussian samples with the given covariance.
#[pyfunction]
#[pyo3(signature = (covariance, n, seed = 0))]
fn sample_gaussian(covariance: Vec<Vec<f64>>, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let x = sample(&GaussianSpec { covariance: cov(covariance)?, n, seed }).map_err(to_py)?;
    Ok(x.to_rows())
}

#[pymodule]
fn datavalue(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(valuate, m)?)?;
    m.add_function(wrap_pyfunction!(valuate_covariances, m)?)?;
    m.add_function(wrap_pyfunction!(run_session, m)?)?;
    m.add_function(wrap_pyfunction!(diversity, m)?)?;
    m.add_function(wrap_pyfunction!(relevance, m)?)?;
    m.add_function(wrap_pyfunction!(sym_eig, m)?)?;
    m.add_function(wrap_pyfunction!(sample_gaussian, m)?)?;
    Ok(())
}
