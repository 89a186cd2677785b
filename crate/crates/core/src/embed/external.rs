use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Embedding, EmbeddingProvider, ModelNames, ProviderConfig, ProviderError, MAX_BATCH};
use crate::model::{ImageKind, Modality};

#[derive(Serialize)]
struct EmbedRequest<'a> {
    modality: &'static str,
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct ClassifyRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct ClassifyResponse {
    labels: Vec<String>,
}

/// Client for a model server speaking the `/embed` + `/classify` JSON contract.
///
/// The model name for each modality goes out in the `x-model` header. Returned
/// vectors are re-normalized on receipt.
pub struct ExternalProvider {
    endpoint: String,
    models: ModelNames,
    agent: ureq::Agent,
}

impl ExternalProvider {
    pub const NAME: &'static str = "external";

    pub fn new(endpoint: impl Into<String>, models: ModelNames) -> Result<Self, ProviderError> {
        let endpoint = endpoint.into().trim_end_matches('/').to_owned();
        if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
            return Err(ProviderError::Config(format!(
                "endpoint must be an http(s) URL, got `{endpoint}`"
            )));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        Ok(ExternalProvider {
            endpoint,
            models,
            agent,
        })
    }

    fn transport(&self, err: ureq::Error) -> ProviderError {
        let status = match &err {
            ureq::Error::StatusCode(s) => Some(*s),
            _ => None,
        };
        ProviderError::Transport {
            endpoint: self.endpoint.clone(),
            status,
            message: err.to_string(),
        }
    }

    fn bad(&self, message: impl Into<String>) -> ProviderError {
        ProviderError::BadResponse {
            endpoint: self.endpoint.clone(),
            message: message.into(),
        }
    }

    fn post<Req: Serialize, Resp: serde::de::DeserializeOwned>(
        &self,
        path: &str,
        model: Option<&str>,
        body: &Req,
    ) -> Result<Resp, ProviderError> {
        let mut req = self.agent.post(format!("{}{path}", self.endpoint));
        if let Some(m) = model {
            req = req.header("x-model", m);
        }
        let mut resp = req.send_json(body).map_err(|e| self.transport(e))?;
        resp.body_mut()
            .read_json::<Resp>()
            .map_err(|e| self.bad(e.to_string()))
    }

    fn embed_chunk(&self, texts: &[&str], modality: Modality) -> Result<Vec<Embedding>, ProviderError> {
        let resp: EmbedResponse = self.post(
            "/embed",
            Some(self.models.for_modality(modality)),
            &EmbedRequest {
                modality: modality.as_str(),
                texts,
            },
        )?;
        if resp.vectors.len() != texts.len() {
            return Err(self.bad(format!(
                "expected {} vectors, got {}",
                texts.len(),
                resp.vectors.len()
            )));
        }
        resp.vectors
            .iter()
            .map(|v| {
                if v.len() != resp.dim || resp.dim == 0 {
                    return Err(self.bad(format!("vector length {} != dim {}", v.len(), resp.dim)));
                }
                Embedding::normalized(v, modality).ok_or_else(|| self.bad("zero or non-finite vector"))
            })
            .collect()
    }
}

impl EmbeddingProvider for ExternalProvider {
    fn config(&self) -> ProviderConfig {
        ProviderConfig::ExternalService {
            endpoint: self.endpoint.clone(),
            models: self.models.clone(),
        }
    }

    fn embed_batch(&self, texts: &[&str], modality: Modality) -> Result<Vec<Embedding>, ProviderError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(ProviderError::EmptyText);
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(MAX_BATCH) {
            out.extend(self.embed_chunk(chunk, modality)?);
        }
        Ok(out)
    }

    fn classify_image_kind(&self, image_context: &str) -> Result<ImageKind, ProviderError> {
        let resp: ClassifyResponse = self.post("/classify", None, &ClassifyRequest { texts: &[image_context] })?;
        let label = resp
            .labels
            .first()
            .ok_or_else(|| self.bad("no labels returned"))?;
        label.parse().map_err(|e: String| self.bad(e))
    }
}
