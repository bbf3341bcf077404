//! Diversity and relevance of a seller's data against a buyer baseline.

mod estimators;

pub use estimators::{
    combined_value, diversity, diversity_partial, relevance, relevance_partial,
    select_components, weighted_diversity, weighted_diversity_partial, weighted_relevance,
    weighted_relevance_partial, SpectrumPair, VARIANCE_MATCH_RTOL,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    center_columns, covariance, projected_variance, sym_eig, CovarianceMatrix, DataMatrix,
};

pub const DEFAULT_COMPONENT_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationConfig {
    /// Buyer components with eigenvalue at or below this are ignored.
    pub component_threshold: f64,
    /// Optional per-component weights in `[0, 1]`, indexed by buyer
    /// component (descending eigenvalue order).
    pub weights: Option<Vec<f64>>,
    /// Optional diversity share for the combined value.
    pub alpha: Option<f64>,
}

impl Default for ValuationConfig {
    fn default() -> Self {
        Self {
            component_threshold: DEFAULT_COMPONENT_THRESHOLD,
            weights: None,
            alpha: None,
        }
    }
}

impl ValuationConfig {
    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.component_threshold = threshold;
        self
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.component_threshold.is_finite() || self.component_threshold < 0.0 {
            return Err(Error::InvalidData(format!(
                "component threshold must be a finite non-negative number, got {}",
                self.component_threshold
            )));
        }
        if let Some(w) = &self.weights {
            estimators::validate_weights(w)?;
        }
        if let Some(a) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::InvalidAlpha(a));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationReport {
    pub diversity: f64,
    pub relevance: f64,
    pub combined: Option<f64>,
    /// Buyer component indices (0-based) the estimate was computed over.
    pub selected_components: Vec<usize>,
    pub config: ValuationConfig,
}

/// Scores a spectrum pair that has already been restricted to the selected
/// components. `selected[k]` is the buyer component index of entry `k`, used
/// to look up weights.
pub fn assess(
    pair: &SpectrumPair,
    selected: &[usize],
    config: &ValuationConfig,
) -> Result<ValuationReport> {
    config.validate()?;
    if selected.len() != pair.dim() {
        return Err(Error::Dimension(format!(
            "{} selected components for a spectrum of length {}",
            selected.len(),
            pair.dim()
        )));
    }
    let all: Vec<usize> = (0..pair.dim()).collect();
    let (diversity, relevance) = match &config.weights {
        None => (
            diversity_partial(pair, &all)?,
            relevance_partial(pair, &all)?,
        ),
        Some(weights) => {
            let picked = selected
                .iter()
                .map(|&i| {
                    weights.get(i).copied().ok_or_else(|| {
                        Error::Dimension(format!(
                            "no weight for component {i}; {} weights supplied",
                            weights.len()
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            (
                weighted_diversity_partial(pair, &all, &picked)?,
                weighted_relevance_partial(pair, &all, &picked)?,
            )
        }
    };
    let combined = config
        .alpha
        .map(|a| combined_value(diversity, relevance, a))
        .transpose()?;
    Ok(ValuationReport {
        diversity,
        relevance,
        combined,
        selected_components: selected.to_vec(),
        config: config.clone(),
    })
}

/// End-to-end valuation with both datasets in one place.
///
/// Both matrices are column-centered, the buyer covariance is decomposed,
/// components above the threshold are kept, and the seller's variance along
/// each kept component is compared with the buyer's eigenvalue.
pub fn valuate(
    buyer: &DataMatrix,
    seller: &DataMatrix,
    config: &ValuationConfig,
) -> Result<ValuationReport> {
    config.validate()?;
    if buyer.cols() != seller.cols() {
        return Err(Error::Dimension(format!(
            "buyer has {} features, seller has {}",
            buyer.cols(),
            seller.cols()
        )));
    }
    if let Some(w) = &config.weights {
        if w.len() != buyer.cols() {
            return Err(Error::Dimension(format!(
                "{} weights for {} features",
                w.len(),
                buyer.cols()
            )));
        }
    }
    valuate_covariances(
        &covariance(&center_columns(buyer)?),
        &covariance(&center_columns(seller)?),
        config,
    )
}

/// Valuation from the two covariance matrices directly, for when the
/// population covariances are known and no sampling is wanted.
pub fn valuate_covariances(
    buyer: &CovarianceMatrix,
    seller: &CovarianceMatrix,
    config: &ValuationConfig,
) -> Result<ValuationReport> {
    config.validate()?;
    if buyer.dim() != seller.dim() {
        return Err(Error::Dimension(format!(
            "buyer covariance is {0}x{0}, seller covariance is {1}x{1}",
            buyer.dim(),
            seller.dim()
        )));
    }
    if let Some(w) = &config.weights {
        if w.len() != buyer.dim() {
            return Err(Error::Dimension(format!("{} weights for {} features", w.len(), buyer.dim())));
        }
    }
    let spectrum = sym_eig(buyer)?;
    let selected = select_components(spectrum.eigenvalues(), config.component_threshold)?;
    let lambdas = selected.iter().map(|&i| spectrum.eigenvalues()[i]).collect();
    let lambda_hats = selected
        .iter()
        .map(|&i| projected_variance(seller, spectrum.eigenvector(i)))
        .collect::<Result<Vec<_>>>()?;
    assess(&SpectrumPair::new(lambdas, lambda_hats)?, &selected, config)
}
