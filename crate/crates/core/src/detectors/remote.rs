use serde::{Deserialize, Serialize};

use super::{DetectorError, PairScorer};
use crate::http::{HttpError, HttpSettings, JsonClient};

#[derive(Serialize)]
struct ScoreRequest<'a> {
    question: &'a str,
    candidate: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    score: f64,
}

/// Scorer served over HTTP:
/// `POST {"question", "candidate"}` -> `{"score": f64}`.
#[derive(Debug)]
pub struct RemoteScorer {
    client: JsonClient,
    url: String,
}

impl RemoteScorer {
    pub fn new(url: impl Into<String>, settings: HttpSettings) -> Result<Self, HttpError> {
        Ok(Self {
            client: JsonClient::new(settings, None)?,
            url: url.into(),
        })
    }
}

impl PairScorer for RemoteScorer {
    fn score(&self, question: &str, candidate: &str) -> Result<f64, DetectorError> {
        let resp: ScoreResponse = self.client.post_json(
            &self.url,
            &ScoreRequest {
                question,
                candidate,
            },
        )?;
        Ok(resp.score)
    }
}
