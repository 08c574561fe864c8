use std::path::{Path, PathBuf};

use loracomp_core::tasks::Lang;
use serde::{Deserialize, Serialize};

use crate::error::ServerError;

pub const DEFAULT_QUEUE_DEPTH: usize = 8;

/// Service configuration. Loaded from a TOML file, then overridden by
/// `LORACOMP_*` environment variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
    /// Directory in the layout written by `loracomp` training commands.
    pub artifacts: PathBuf,
    /// Target mappings to serve; each needs its own adapters.
    pub langs: Vec<Lang>,
    /// Seeds the dialogue emulator.
    pub seed: u64,
    /// Requests allowed to wait behind the one being served.
    pub queue_depth: usize,
    pub max_new_tokens: usize,
    /// JSON-lines request log; none disables it.
    pub request_log: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            artifacts: PathBuf::from("artifacts"),
            langs: vec![Lang::Es],
            seed: 0,
            queue_depth: DEFAULT_QUEUE_DEPTH,
            max_new_tokens: 24,
            request_log: None,
        }
    }
}

fn bad(key: &str, value: &str) -> ServerError {
    ServerError::Config(format!("bad value {value:?} for {key}"))
}

impl ServerConfig {
    pub fn from_file(path: &Path) -> Result<Self, ServerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServerError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ServerError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies overrides from `(name, value)` pairs, normally
    /// `std::env::vars()`. Unrelated names are ignored.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), ServerError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (k, v) in vars {
            let (k, v) = (k.as_ref(), v.as_ref());
            match k {
                "LORACOMP_HOST" => self.host = v.to_string(),
                "LORACOMP_PORT" => self.port = v.parse().map_err(|_| bad(k, v))?,
                "LORACOMP_ARTIFACTS" => self.artifacts = PathBuf::from(v),
                "LORACOMP_SEED" => self.seed = v.parse().map_err(|_| bad(k, v))?,
                "LORACOMP_QUEUE_DEPTH" => self.queue_depth = v.parse().map_err(|_| bad(k, v))?,
                "LORACOMP_REQUEST_LOG" => self.request_log = Some(PathBuf::from(v)),
                "LORACOMP_LANGS" => {
                    self.langs = v
                        .split(',')
                        .map(|l| l.trim().parse())
                        .collect::<Result<_, _>>()
                        .map_err(|_| bad(k, v))?
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// File (if any) plus process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ServerError> {
        let mut c = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        c.apply_env(std::env::vars())?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ServerError> {
        if self.queue_depth == 0 {
            return Err(ServerError::Config("queue_depth must be at least 1".into()));
        }
        if self.langs.is_empty() {
            return Err(ServerError::Config("at least one target language is required".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(ServerError::Config("max_new_tokens must be at least 1".into()));
        }
        Ok(())
    }
}
