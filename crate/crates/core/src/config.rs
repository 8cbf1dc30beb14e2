//! Service settings, read from flags or `PARLEY_*` environment variables.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;

use crate::classifier::{
    Classifier, Lexicon, LlmAdapter, RuleOracle, TemplateSet, DEFAULT_MAX_IN_FLIGHT,
};
use crate::persistence::{FileStore, MemoryStore, Store};
use crate::transport::Liveness;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BackendChoice {
    /// Deterministic lexicon-driven backend; needs no network.
    RuleOracle,
    /// OpenAI-compatible chat-completions endpoint.
    Llm,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Settings {
    #[arg(long, env = "PARLEY_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Store directory; without it everything lives in memory.
    #[arg(long, env = "PARLEY_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    #[arg(long, env = "PARLEY_BACKEND", value_enum, default_value_t = BackendChoice::RuleOracle)]
    pub backend: BackendChoice,
    #[arg(long, env = "PARLEY_LLM_ENDPOINT")]
    pub llm_endpoint: Option<String>,
    #[arg(long, env = "PARLEY_LLM_MODEL")]
    pub llm_model: Option<String>,
    #[arg(long, env = "PARLEY_LLM_API_KEY", hide_env_values = true)]
    pub llm_api_key: Option<String>,
    #[arg(long, env = "PARLEY_BACKEND_TIMEOUT_MS", default_value_t = 5000)]
    pub backend_timeout_ms: u64,
    #[arg(long, env = "PARLEY_LLM_MAX_IN_FLIGHT", default_value_t = DEFAULT_MAX_IN_FLIGHT)]
    pub max_in_flight: usize,
    /// Replacement rule-oracle lexicon.
    #[arg(long, env = "PARLEY_LEXICON_PATH")]
    pub lexicon_path: Option<PathBuf>,
    /// Directory of `<lang>/<mode>.<feature>.txt` template overrides.
    #[arg(long, env = "PARLEY_TEMPLATE_DIR")]
    pub template_dir: Option<PathBuf>,
    /// Purge rooms idle this many days; unset keeps everything.
    #[arg(long, env = "PARLEY_RETENTION_DAYS")]
    pub retention_days: Option<u32>,
    #[arg(long, env = "PARLEY_HEARTBEAT_SECS", default_value_t = 20)]
    pub heartbeat_secs: u64,
    #[arg(long, env = "PARLEY_IDLE_SECS", default_value_t = 60)]
    pub idle_secs: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: None,
            backend: BackendChoice::RuleOracle,
            llm_endpoint: None,
            llm_model: None,
            llm_api_key: None,
            backend_timeout_ms: 5000,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            lexicon_path: None,
            template_dir: None,
            retention_days: None,
            heartbeat_secs: 20,
            idle_secs: 60,
        }
    }
}

impl Settings {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.backend_timeout_ms)
    }

    pub fn liveness(&self) -> Liveness {
        Liveness {
            heartbeat: Duration::from_secs(self.heartbeat_secs.max(1)),
            idle: Duration::from_secs(self.idle_secs.max(1)),
        }
    }

    pub fn classifier(&self) -> anyhow::Result<Classifier> {
        let backend: Arc<dyn crate::classifier::CompletionBackend> = match self.backend {
            BackendChoice::RuleOracle => {
                let lexicon = match &self.lexicon_path {
                    Some(p) => std::fs::read_to_string(p)
                        .with_context(|| format!("reading lexicon {}", p.display()))?
                        .parse::<Lexicon>()?,
                    None => Lexicon::default(),
                };
                Arc::new(RuleOracle::new(lexicon))
            }
            BackendChoice::Llm => {
                let endpoint = self
                    .llm_endpoint
                    .clone()
                    .context("PARLEY_LLM_ENDPOINT is required for the llm backend")?;
                let model = self
                    .llm_model
                    .clone()
                    .context("PARLEY_LLM_MODEL is required for the llm backend")?;
                Arc::new(LlmAdapter::new(
                    endpoint,
                    model,
                    self.llm_api_key.clone(),
                    self.timeout(),
                ))
            }
        };
        let mut templates = TemplateSet::builtin();
        if let Some(dir) = &self.template_dir {
            templates = templates
                .load_dir(dir)
                .with_context(|| format!("loading templates from {}", dir.display()))?;
        }
        Ok(Classifier::new(backend)
            .with_timeout(self.timeout())
            .with_max_in_flight(self.max_in_flight)
            .with_templates(templates))
    }

    pub fn store(&self) -> anyhow::Result<Arc<dyn Store>> {
        Ok(match &self.data_dir {
            Some(dir) => Arc::new(
                FileStore::open(dir)
                    .with_context(|| format!("opening store in {}", dir.display()))?,
            ),
            None => Arc::new(MemoryStore::new()),
        })
    }
}
