//! NLI scorers: a deterministic lexical baseline and an HTTP client.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::ConfidenceTriple;
use crate::error::{Error, Result};
use crate::text::tokenize_folded;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliInput {
    pub claim: String,
    pub context: String,
}

/// Scores (claim, context) pairs. Implementations must tolerate concurrent calls
/// up to [`NliScorer::max_concurrency`].
pub trait NliScorer: Send + Sync {
    fn score_batch(&self, batch: &[NliInput]) -> Result<Vec<ConfidenceTriple>>;

    fn max_concurrency(&self) -> Option<usize> {
        None
    }
}

/// Claim-token containment in the context, mapped to a triple.
///
/// With `c = |claim ∩ context| / |claim|` over case-folded token sets the triple
/// is `(c, 0, 1 - c)`, or `(0, c, 1 - c)` when the claim carries a negation word
/// that the context lacks.
#[derive(Debug, Clone)]
pub struct LexicalOverlapScorer {
    negations: BTreeSet<String>,
}

impl Default for LexicalOverlapScorer {
    fn default() -> Self {
        let words = ["not", "no", "never", "none", "nobody", "ne", "není", "nebyl", "nebyla", "nebylo", "nikdy", "žádný"];
        LexicalOverlapScorer { negations: words.iter().map(|w| w.to_string()).collect() }
    }
}

impl LexicalOverlapScorer {
    pub fn score_one(&self, claim: &str, context: &str) -> ConfidenceTriple {
        let c: BTreeSet<String> = tokenize_folded(claim).into_iter().collect();
        let x: BTreeSet<String> = tokenize_folded(context).into_iter().collect();
        if c.is_empty() {
            return ConfidenceTriple::new(0.0, 0.0, 1.0);
        }
        let coverage = c.intersection(&x).count() as f64 / c.len() as f64;
        let negated = c.iter().any(|t| self.negations.contains(t) && !x.contains(t));
        if negated {
            ConfidenceTriple::new(0.0, coverage, 1.0 - coverage)
        } else {
            ConfidenceTriple::new(coverage, 0.0, 1.0 - coverage)
        }
    }
}

impl NliScorer for LexicalOverlapScorer {
    fn score_batch(&self, batch: &[NliInput]) -> Result<Vec<ConfidenceTriple>> {
        Ok(batch.iter().map(|p| self.score_one(&p.claim, &p.context)).collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub pairs: Vec<NliInput>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub triples: Vec<ConfidenceTriple>,
}

/// Client for a scorer served at `POST {base}/score`.
pub struct RemoteScorer {
    endpoint: String,
    client: reqwest::blocking::Client,
    concurrency: Option<usize>,
}

impl RemoteScorer {
    pub fn new(base_url: &str, concurrency: Option<usize>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Remote(e.to_string()))?;
        Ok(RemoteScorer { endpoint: format!("{}/score", base_url.trim_end_matches('/')), client, concurrency })
    }
}

impl NliScorer for RemoteScorer {
    fn score_batch(&self, batch: &[NliInput]) -> Result<Vec<ConfidenceTriple>> {
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&ScoreRequest { pairs: batch.to_vec() })
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| Error::Remote(e.to_string()))?;
        let body: ScoreResponse = resp.json().map_err(|e| Error::Remote(e.to_string()))?;
        if body.triples.len() != batch.len() {
            return Err(Error::Remote(format!("scorer returned {} triples for {} pairs", body.triples.len(), batch.len())));
        }
        for t in &body.triples {
            t.validate()?;
        }
        Ok(body.triples)
    }

    fn max_concurrency(&self) -> Option<usize> {
        self.concurrency
    }
}

/// Serves any scorer at `POST /score`.
pub fn scoring_router(scorer: Arc<dyn NliScorer>) -> Router {
    async fn score(
        State(scorer): State<Arc<dyn NliScorer>>,
        Json(req): Json<ScoreRequest>,
    ) -> std::result::Result<Json<ScoreResponse>, (axum::http::StatusCode, String)> {
        let pairs = req.pairs;
        tokio::task::spawn_blocking(move || scorer.score_batch(&pairs))
            .await
            .map_err(|e| (axum::http::StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
            .map(|triples| Json(ScoreResponse { triples }))
            .map_err(|e| (axum::http::StatusCode::BAD_REQUEST, e.to_string()))
    }
    Router::new().route("/score", post(score)).with_state(scorer)
}
