//! Service configuration: a flat TOML file, overridden by `SARCH_*` environment variables.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! index_path = "data/index.bin"
//! provider = "hash"            # or "external"
//! hash_dim = 256
//! provider_endpoint = "http://localhost:9000"
//! text_model = "all-MiniLM-L6-v2"
//! image_model = "clip-vit-base-patch32"
//! table_model = "tapas-base"
//! stopwords = "stopwords.txt"
//! default_k = 10
//! static_dir = "ui/dist"
//! cors_origin = "*"
//! ```
//!
//! Every key may be set as `SARCH_<KEY>` (upper case), e.g. `SARCH_DEFAULT_K=5`.
//! Without a `provider` key the provider recorded in the index is used.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use archsearch_core::embed::{ModelNames, ProviderConfig};
use serde::Deserialize;
use thiserror::Error;

pub const ENV_PREFIX: &str = "SARCH_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_owned(),
        message: message.into(),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    listen: Option<String>,
    index_path: Option<PathBuf>,
    provider: Option<String>,
    hash_dim: Option<usize>,
    provider_endpoint: Option<String>,
    text_model: Option<String>,
    image_model: Option<String>,
    table_model: Option<String>,
    stopwords: Option<PathBuf>,
    default_k: Option<usize>,
    static_dir: Option<PathBuf>,
    cors_origin: Option<String>,
}

impl RawConfig {
    fn set(&mut self, key: &str, value: String) -> Result<(), ConfigError> {
        let num = |v: &str| v.trim().parse::<usize>().map_err(|_| invalid(key, format!("`{v}` is not a non-negative integer")));
        match key {
            "listen" => self.listen = Some(value),
            "index_path" => self.index_path = Some(value.into()),
            "provider" => self.provider = Some(value),
            "hash_dim" => self.hash_dim = Some(num(&value)?),
            "provider_endpoint" => self.provider_endpoint = Some(value),
            "text_model" => self.text_model = Some(value),
            "image_model" => self.image_model = Some(value),
            "table_model" => self.table_model = Some(value),
            "stopwords" => self.stopwords = Some(value.into()),
            "default_k" => self.default_k = Some(num(&value)?),
            "static_dir" => self.static_dir = Some(value.into()),
            "cors_origin" => self.cors_origin = Some(value),
            _ => return Err(invalid(&format!("{ENV_PREFIX}{}", key.to_uppercase()), "unknown setting")),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub index_path: PathBuf,
    /// `None` means the provider the index was built with.
    pub provider: Option<ProviderConfig>,
    pub stopwords: Option<PathBuf>,
    pub default_k: usize,
    pub static_dir: Option<PathBuf>,
    /// `None` or `*` allows any origin.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            index_path: PathBuf::from("index.bin"),
            provider: None,
            stopwords: None,
            default_k: 10,
            static_dir: None,
            cors_origin: None,
        }
    }
}

impl ServiceConfig {
    /// Reads `path` (if any), then applies `SARCH_*` entries from `env`.
    /// Relative paths in the file resolve against the file's directory.
    pub fn load<I>(path: Option<&Path>, env: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut raw = RawConfig::default();
        let mut base = None;
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
                path: path.to_owned(),
                message: e.to_string(),
            })?;
            raw = Self::parse_raw(&text).map_err(|message| ConfigError::Parse {
                path: path.to_owned(),
                message,
            })?;
            base = path.parent().map(Path::to_owned);
        }
        let rebase = |p: Option<PathBuf>| match (&base, p) {
            (Some(b), Some(p)) if p.is_relative() => Some(b.join(p)),
            (_, p) => p,
        };
        raw.index_path = rebase(raw.index_path.take());
        raw.stopwords = rebase(raw.stopwords.take());
        raw.static_dir = rebase(raw.static_dir.take());

        let mut overrides: Vec<(String, String)> = env
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|k| (k.to_lowercase(), v)))
            .collect();
        overrides.sort();
        for (k, v) in overrides {
            raw.set(&k, v)?;
        }
        Self::from_raw(raw)
    }

    /// Configuration from the process environment alone or with a file.
    pub fn from_env(path: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load(path, std::env::vars())
    }

    fn parse_raw(text: &str) -> Result<RawConfig, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let d = ServiceConfig::default();
        let listen = match raw.listen {
            Some(s) => s
                .parse()
                .map_err(|_| invalid("listen", format!("`{s}` is not a socket address")))?,
            None => d.listen,
        };
        let default_k = raw.default_k.unwrap_or(d.default_k);
        if default_k == 0 {
            return Err(invalid("default_k", "must be at least 1"));
        }
        let models = ModelNames::default();
        let provider = match raw.provider.as_deref() {
            None => None,
            Some("hash") => Some(ProviderConfig::DeterministicHash {
                dim: raw.hash_dim.unwrap_or(archsearch_core::embed::DEFAULT_HASH_DIM),
            }),
            Some("external") => Some(ProviderConfig::ExternalService {
                endpoint: raw
                    .provider_endpoint
                    .ok_or_else(|| invalid("provider_endpoint", "required when provider = \"external\""))?,
                models: ModelNames {
                    text: raw.text_model.unwrap_or(models.text),
                    image: raw.image_model.unwrap_or(models.image),
                    table: raw.table_model.unwrap_or(models.table),
                },
            }),
            Some(other) => return Err(invalid("provider", format!("unknown provider `{other}` (hash, external)"))),
        };
        Ok(ServiceConfig {
            listen,
            index_path: raw.index_path.unwrap_or(d.index_path),
            provider,
            stopwords: raw.stopwords,
            default_k,
            static_dir: raw.static_dir,
            cors_origin: raw.cors_origin.filter(|o| !o.trim().is_empty()),
        })
    }
}
