//! Buyer / seller / broker exchange.
//!
//! 1. The buyer decomposes its covariance, keeps the components above the
//!    threshold, mixes in `k` random decoy directions and shuffles them into a
//!    [`DirectionQuery`]. Positions and eigenvalues of the real components stay
//!    in a [`BuyerSecret`].
//! 2. The seller answers every direction with its projected variance
//!    ([`VarianceResponse`]). It cannot tell decoys from components.
//! 3. The buyer reveals the secret to the broker, which drops the decoy
//!    answers and scores the rest ([`broker_valuate`]).
//!
//! The seller never sees eigenvalues; the broker never sees raw rows.
//! [`net`] runs the same exchange over TCP.

pub mod net;
pub mod wire;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datasets::rng_from_seed;
use crate::error::{Error, Result};
use crate::linalg::{
    center_columns, covariance, norm, projected_variance, sym_eig, DataMatrix, UNIT_NORM_TOL,
};
use crate::valuation::{assess, select_components, SpectrumPair, ValuationConfig, ValuationReport};

/// Directions sent to sellers: real principal components and decoys, shuffled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionQuery {
    pub session_id: String,
    pub directions: Vec<Vec<f64>>,
}

impl DirectionQuery {
    pub fn dim(&self) -> usize {
        self.directions.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Every direction must be a finite unit vector of the same length.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.is_empty() || d == 0 {
            return Err(Error::ProtocolViolation("query carries no directions".into()));
        }
        for (i, u) in self.directions.iter().enumerate() {
            if u.len() != d {
                return Err(Error::ProtocolViolation(format!(
                    "direction {i} has length {}, expected {d}",
                    u.len()
                )));
            }
            let n = norm(u);
            if !n.is_finite() || (n - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::ProtocolViolation(format!(
                    "direction {i} has norm {n}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// What the buyer keeps back until the reveal step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuyerSecret {
    pub session_id: String,
    /// `real_indices[c]` is the query position of buyer component `c`.
    pub real_indices: Vec<usize>,
    /// `eigenvalues[c]` is the eigenvalue of buyer component `c`.
    pub eigenvalues: Vec<f64>,
    pub query_len: usize,
}

impl BuyerSecret {
    pub fn validate(&self) -> Result<()> {
        if self.real_indices.is_empty() || self.real_indices.len() != self.eigenvalues.len() {
            return Err(Error::ProtocolViolation(format!(
                "{} real indices with {} eigenvalues",
                self.real_indices.len(),
                self.eigenvalues.len()
            )));
        }
        let mut seen = vec![false; self.query_len];
        for &i in &self.real_indices {
            if i >= self.query_len {
                return Err(Error::ProtocolViolation(format!(
                    "real index {i} outside a query of {} directions",
                    self.query_len
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::ProtocolViolation(format!("real index {i} repeated")));
            }
        }
        if let Some(l) = self.eigenvalues.iter().find(|l| !l.is_finite() || **l < 0.0) {
            return Err(Error::ProtocolViolation(format!("invalid eigenvalue {l}")));
        }
        Ok(())
    }
}

/// Seller's projected variance for each queried direction, in query order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceResponse {
    pub session_id: String,
    pub variances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationOutcome {
    pub session_id: String,
    pub report: ValuationReport,
}

fn random_unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Builds the shuffled direction query and the matching secret.
///
/// Decoys are uniform on the unit sphere, independent of the buyer's data.
/// The same seed always yields the same session id, decoys and ordering.
pub fn buyer_prepare_query(
    buyer: &DataMatrix,
    k_decoys: usize,
    config: &ValuationConfig,
    seed: u64,
) -> Result<(DirectionQuery, BuyerSecret)> {
    config.validate()?;
    let spectrum = sym_eig(&covariance(&center_columns(buyer)?))?;
    let selected = select_components(spectrum.eigenvalues(), config.component_threshold)?;
    // eigenvalues are sorted, so the kept components are a prefix
    debug_assert!(selected.iter().enumerate().all(|(k, &i)| k == i));

    let mut rng = rng_from_seed(seed);
    let session_id = format!("{:016x}", rng.next_u64());

    let mut pool: Vec<Vec<f64>> = selected
        .iter()
        .map(|&i| spectrum.eigenvector(i).to_vec())
        .collect();
    for _ in 0..k_decoys {
        pool.push(random_unit_vector(&mut rng, buyer.cols()));
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut rng);

    let mut position = vec![0; pool.len()];
    for (pos, &item) in order.iter().enumerate() {
        position[item] = pos;
    }
    let directions = order.iter().map(|&item| pool[item].clone()).collect();
    let secret = BuyerSecret {
        session_id: session_id.clone(),
        real_indices: position[..selected.len()].to_vec(),
        eigenvalues: selected.iter().map(|&i| spectrum.eigenvalues()[i]).collect(),
        query_len: pool.len(),
    };
    Ok((DirectionQuery { session_id, directions }, secret))
}

/// Projected variance of the centered seller data along every queried
/// direction, decoys included.
pub fn seller_respond(seller: &DataMatrix, query: &DirectionQuery) -> Result<VarianceResponse> {
    if seller.cols() != query.dim() {
        return Err(Error::Dimension(format!(
            "seller has {} features, query directions have {}",
            seller.cols(),
            query.dim()
        )));
    }
    let cov = covariance(&center_columns(seller)?);
    let variances = query
        .directions
        .iter()
        .map(|u| projected_variance(&cov, u))
        .collect::<Result<Vec<_>>>()?;
    Ok(VarianceResponse { session_id: query.session_id.clone(), variances })
}

/// Discards decoy answers and scores the real components in buyer order.
pub fn broker_valuate(
    secret: &BuyerSecret,
    response: &VarianceResponse,
    config: &ValuationConfig,
) -> Result<ValuationOutcome> {
    if secret.session_id != response.session_id {
        return Err(Error::Session(format!(
            "secret belongs to session {:?}, response to {:?}",
            secret.session_id, response.session_id
        )));
    }
    secret.validate()?;
    if response.variances.len() != secret.query_len {
        return Err(Error::ProtocolViolation(format!(
            "{} variances for a query of {} directions",
            response.variances.len(),
            secret.query_len
        )));
    }
    if let Some(v) = response.variances.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::ProtocolViolation(format!("invalid variance {v}")));
    }
    let lambda_hats = secret.real_indices.iter().map(|&i| response.variances[i]).collect();
    let pair = SpectrumPair::new(secret.eigenvalues.clone(), lambda_hats)?;
    let selected: Vec<usize> = (0..pair.dim()).collect();
    let report = assess(&pair, &selected, config)?;
    Ok(ValuationOutcome { session_id: secret.session_id.clone(), report })
}

/// One query shared by every seller; one outcome per seller, in order.
pub fn run_session(
    buyer: &DataMatrix,
    sellers: &[DataMatrix],
    k_decoys: usize,
    config: &ValuationConfig,
    seed: u64,
) -> Result<Vec<ValuationOutcome>> {
    if sellers.is_empty() {
        return Ok(Vec::new());
    }
    let (query, secret) = buyer_prepare_query(buyer, k_decoys, config, seed)?;
    sellers
        .iter()
        .map(|s| broker_valuate(&secret, &seller_respond(s, &query)?, config))
        .collect()
}
