//! Newline-delimited JSON messages.
//!
//! Every line is one object `{"type": ..., "session": ..., "payload": {...}}`
//! with `type` one of `HELLO`, `QUERY`, `VARIANCES`, `REVEAL`, `VALUATION`
//! or `ERROR`. Numbers are written in shortest round-trip form, so every
//! `f64` parses back to the identical value.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BuyerSecret, DirectionQuery, VarianceResponse};
use crate::error::Error;
use crate::valuation::{ValuationConfig, ValuationReport};

pub mod codes {
    pub const MALFORMED: &str = "malformed";
    pub const UNKNOWN_TYPE: &str = "unknown_type";
    pub const BAD_PAYLOAD: &str = "bad_payload";
    pub const UNEXPECTED: &str = "unexpected";
    pub const PROTOCOL_VIOLATION: &str = "protocol_violation";
    pub const SESSION: &str = "session";
    pub const TIMEOUT: &str = "timeout";
    pub const ABORTED: &str = "aborted";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Buyer,
    Seller,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloPayload {
    pub role: Role,
    /// Seller's display name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seller: Option<String>,
    /// Number of sellers the buyer waits for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sellers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryPayload {
    pub dim: usize,
    pub directions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariancesPayload {
    pub variances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevealPayload {
    pub real_indices: Vec<usize>,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationPayload {
    pub diversity: f64,
    pub relevance: f64,
    pub combined: Option<f64>,
    pub selected: Vec<usize>,
    /// Which seller this valuation belongs to (set on messages to the buyer).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seller: Option<String>,
}

impl ValuationPayload {
    pub fn from_report(report: &ValuationReport, seller: Option<String>) -> Self {
        Self {
            diversity: report.diversity,
            relevance: report.relevance,
            combined: report.combined,
            selected: report.selected_components.clone(),
            seller,
        }
    }

    pub fn into_report(self, config: ValuationConfig) -> ValuationReport {
        ValuationReport {
            diversity: self.diversity,
            relevance: self.relevance,
            combined: self.combined,
            selected_components: self.selected,
            config,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello(HelloPayload),
    Query(QueryPayload),
    Variances(VariancesPayload),
    Reveal(RevealPayload),
    Valuation(ValuationPayload),
    Error(ErrorPayload),
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello(_) => "HELLO",
            Message::Query(_) => "QUERY",
            Message::Variances(_) => "VARIANCES",
            Message::Reveal(_) => "REVEAL",
            Message::Valuation(_) => "VALUATION",
            Message::Error(_) => "ERROR",
        }
    }

    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        Message::Error(ErrorPayload { code: code.to_owned(), detail: detail.into() })
    }

    fn payload(&self) -> Value {
        let v = match self {
            Message::Hello(p) => serde_json::to_value(p),
            Message::Query(p) => serde_json::to_value(p),
            Message::Variances(p) => serde_json::to_value(p),
            Message::Reveal(p) => serde_json::to_value(p),
            Message::Valuation(p) => serde_json::to_value(p),
            Message::Error(p) => serde_json::to_value(p),
        };
        v.expect("payloads serialize to JSON objects")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Envelope {
    #[serde(rename = "type")]
    kind: String,
    session: String,
    #[serde(default)]
    payload: Value,
}

/// A decoding failure, carrying the `ERROR` code to answer with.
#[derive(Debug, Clone, PartialEq)]
pub struct WireError {
    pub code: &'static str,
    pub detail: String,
}

impl From<WireError> for Error {
    fn from(e: WireError) -> Self {
        Error::ProtocolViolation(format!("{}: {}", e.code, e.detail))
    }
}

/// One line of JSON, without the trailing newline.
pub fn encode(session: &str, message: &Message) -> String {
    let env = Envelope {
        kind: message.kind().to_owned(),
        session: session.to_owned(),
        payload: message.payload(),
    };
    serde_json::to_string(&env).expect("envelope serializes")
}

pub fn decode(line: &str) -> Result<(String, Message), WireError> {
    let env: Envelope = serde_json::from_str(line.trim_end_matches(['\r', '\n'])).map_err(|e| {
        WireError { code: codes::MALFORMED, detail: e.to_string() }
    })?;
    fn typed<T: serde::de::DeserializeOwned>(v: Value) -> Result<T, WireError> {
        serde_json::from_value(v).map_err(|e| WireError { code: codes::BAD_PAYLOAD, detail: e.to_string() })
    }
    let msg = match env.kind.as_str() {
        "HELLO" => Message::Hello(typed(env.payload)?),
        "QUERY" => Message::Query(typed(env.payload)?),
        "VARIANCES" => Message::Variances(typed(env.payload)?),
        "REVEAL" => Message::Reveal(typed(env.payload)?),
        "VALUATION" => Message::Valuation(typed(env.payload)?),
        "ERROR" => Message::Error(typed(env.payload)?),
        other => {
            return Err(WireError {
                code: codes::UNKNOWN_TYPE,
                detail: format!("unknown message type {other:?}"),
            })
        }
    };
    Ok((env.session, msg))
}

impl From<&DirectionQuery> for QueryPayload {
    fn from(q: &DirectionQuery) -> Self {
        Self { dim: q.dim(), directions: q.directions.clone() }
    }
}

impl QueryPayload {
    pub fn into_query(self, session_id: String) -> Result<DirectionQuery, Error> {
        if self.directions.iter().any(|u| u.len() != self.dim) {
            return Err(Error::ProtocolViolation(format!(
                "QUERY declares dim {} but carries directions of other lengths",
                self.dim
            )));
        }
        let q = DirectionQuery { session_id, directions: self.directions };
        q.validate()?;
        Ok(q)
    }
}

impl From<&VarianceResponse> for VariancesPayload {
    fn from(r: &VarianceResponse) -> Self {
        Self { variances: r.variances.clone() }
    }
}

impl From<&BuyerSecret> for RevealPayload {
    fn from(s: &BuyerSecret) -> Self {
        Self { real_indices: s.real_indices.clone(), eigenvalues: s.eigenvalues.clone() }
    }
}

impl RevealPayload {
    pub fn into_secret(self, session_id: String, query_len: usize) -> BuyerSecret {
        BuyerSecret {
            session_id,
            real_indices: self.real_indices,
            eigenvalues: self.eigenvalues,
            query_len,
        }
    }
}
