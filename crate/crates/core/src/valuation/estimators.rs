//! Geometric-mean diversity and relevance estimators over paired spectra.
//!
//! For buyer variance `λ` and seller variance `λ̂` along one buyer
//! component, the diversity factor is `|λ - λ̂| / max(λ, λ̂)` and the
//! relevance factor is `min(λ, λ̂) / max(λ, λ̂)`. The estimators are the
//! geometric means of these factors over a set of components.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two variances closer than this fraction of the larger one count as equal.
///
/// `‖C·u‖` for an eigenvector `u` of `C` reproduces the eigenvalue only up to
/// roundoff, so identical data would otherwise score a diversity of
/// `(1e-16)^(1/d)` instead of zero. Equal pairs (including `0 = 0`) give a
/// diversity factor of 0 and a relevance factor of 1.
pub const VARIANCE_MATCH_RTOL: f64 = 1e-9;

/// Buyer eigenvalues `λ` paired with seller projected variances `λ̂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPair {
    buyer: Vec<f64>,
    seller: Vec<f64>,
}

impl SpectrumPair {
    pub fn new(buyer: Vec<f64>, seller: Vec<f64>) -> Result<Self> {
        if buyer.len() != seller.len() {
            return Err(Error::Dimension(format!(
                "{} buyer eigenvalues but {} seller variances",
                buyer.len(),
                seller.len()
            )));
        }
        if buyer.is_empty() {
            return Err(Error::InvalidData("spectrum pair is empty".into()));
        }
        for (side, vals) in [("buyer", &buyer), ("seller", &seller)] {
            if let Some((i, v)) = vals.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
                return Err(Error::InvalidData(format!(
                    "{side} variance {v} at index {i} is not a finite non-negative number"
                )));
            }
        }
        Ok(Self { buyer, seller })
    }

    pub fn dim(&self) -> usize {
        self.buyer.len()
    }

    pub fn buyer(&self) -> &[f64] {
        &self.buyer
    }

    pub fn seller(&self) -> &[f64] {
        &self.seller
    }

    fn factors(&self, i: usize) -> Factors {
        Factors::of(self.buyer[i], self.seller[i])
    }
}

#[derive(Debug, Clone, Copy)]
struct Factors {
    diversity: f64,
    relevance: f64,
    both_zero: bool,
}

impl Factors {
    fn of(lambda: f64, lambda_hat: f64) -> Self {
        let hi = lambda.max(lambda_hat);
        let lo = lambda.min(lambda_hat);
        let both_zero = hi == 0.0;
        if hi - lo <= VARIANCE_MATCH_RTOL * hi {
            return Self { diversity: 0.0, relevance: 1.0, both_zero };
        }
        Self {
            diversity: (hi - lo) / hi,
            relevance: lo / hi,
            both_zero,
        }
    }
}

/// Geometric mean computed as `exp(mean(ln f))`; any zero factor gives 0.
fn geometric_mean(factors: impl Iterator<Item = f64>) -> f64 {
    let mut log_sum = 0.0;
    let mut count = 0usize;
    for f in factors {
        if f == 0.0 {
            return 0.0;
        }
        log_sum += f.ln();
        count += 1;
    }
    (log_sum / count as f64).exp()
}

fn check_subset(pair: &SpectrumPair, subset: &[usize]) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::EmptySelection("component subset is empty".into()));
    }
    let mut seen = vec![false; pair.dim()];
    for &i in subset {
        if i >= pair.dim() {
            return Err(Error::Dimension(format!(
                "component index {i} out of range for dimension {}",
                pair.dim()
            )));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidData(format!("component index {i} repeated")));
        }
    }
    if subset.iter().all(|&i| pair.factors(i).both_zero) {
        return Err(Error::DegenerateSpectrum);
    }
    Ok(())
}

fn check_weights(pair: &SpectrumPair, weights: &[f64]) -> Result<()> {
    if weights.len() != pair.dim() {
        return Err(Error::Dimension(format!(
            "{} weights for dimension {}",
            weights.len(),
            pair.dim()
        )));
    }
    validate_weights(weights)
}

pub(crate) fn validate_weights(weights: &[f64]) -> Result<()> {
    match weights.iter().enumerate().find(|(_, w)| !(0.0..=1.0).contains(*w)) {
        Some((index, &value)) => Err(Error::InvalidWeight { index, value }),
        None => Ok(()),
    }
}

fn all_indices(pair: &SpectrumPair) -> Vec<usize> {
    (0..pair.dim()).collect()
}

pub fn diversity(pair: &SpectrumPair) -> Result<f64> {
    diversity_partial(pair, &all_indices(pair))
}

pub fn relevance(pair: &SpectrumPair) -> Result<f64> {
    relevance_partial(pair, &all_indices(pair))
}

/// Diversity restricted to the components in `subset` (0-based indices).
pub fn diversity_partial(pair: &SpectrumPair, subset: &[usize]) -> Result<f64> {
    check_subset(pair, subset)?;
    Ok(geometric_mean(subset.iter().map(|&i| pair.factors(i).diversity)))
}

/// Relevance restricted to the components in `subset` (0-based indices).
pub fn relevance_partial(pair: &SpectrumPair, subset: &[usize]) -> Result<f64> {
    check_subset(pair, subset)?;
    Ok(geometric_mean(subset.iter().map(|&i| pair.factors(i).relevance)))
}

/// Diversity with each component's factor scaled by its weight in `[0, 1]`.
pub fn weighted_diversity(pair: &SpectrumPair, weights: &[f64]) -> Result<f64> {
    weighted_diversity_partial(pair, &all_indices(pair), weights)
}

/// Relevance with each component's factor scaled by its weight in `[0, 1]`.
pub fn weighted_relevance(pair: &SpectrumPair, weights: &[f64]) -> Result<f64> {
    weighted_relevance_partial(pair, &all_indices(pair), weights)
}

pub fn weighted_diversity_partial(
    pair: &SpectrumPair,
    subset: &[usize],
    weights: &[f64],
) -> Result<f64> {
    check_weights(pair, weights)?;
    check_subset(pair, subset)?;
    Ok(geometric_mean(
        subset.iter().map(|&i| weights[i] * pair.factors(i).diversity),
    ))
}

pub fn weighted_relevance_partial(
    pair: &SpectrumPair,
    subset: &[usize],
    weights: &[f64],
) -> Result<f64> {
    check_weights(pair, weights)?;
    check_subset(pair, subset)?;
    Ok(geometric_mean(
        subset.iter().map(|&i| weights[i] * pair.factors(i).relevance),
    ))
}

/// Indices (0-based, ascending) of the buyer components whose eigenvalue
/// exceeds `threshold`.
pub fn select_components(lambdas: &[f64], threshold: f64) -> Result<Vec<usize>> {
    if !threshold.is_finite() || threshold < 0.0 {
        return Err(Error::InvalidData(format!(
            "component threshold must be a finite non-negative number, got {threshold}"
        )));
    }
    let selected: Vec<usize> = lambdas
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > threshold)
        .map(|(i, _)| i)
        .collect();
    if selected.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no buyer eigenvalue exceeds the threshold {threshold}"
        )));
    }
    Ok(selected)
}

/// `α·diversity + (1 - α)·relevance`.
pub fn combined_value(diversity: f64, relevance: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidAlpha(alpha));
    }
    for (name, v) in [("diversity", diversity), ("relevance", relevance)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidData(format!("{name} {v} is outside [0, 1]")));
        }
    }
    Ok(alpha * diversity + (1.0 - alpha) * relevance)
}
