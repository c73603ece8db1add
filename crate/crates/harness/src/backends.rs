//! Backend selection from `--backend-config`.
//!
//! The argument is either `perfect`, or a TOML file. A file with
//! `kind = "replay"` replays a recorded transcript by prompt digest;
//! any other file configures the hosted chat endpoint.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use perceptom_core::backend::{Backend, BackendConfig, ChatClient, PerfectResponder, ScriptedBackend, Transcript};
use perceptom_core::item::BenchmarkItem;

use crate::HarnessError;

#[derive(Clone, Debug, PartialEq)]
pub enum BackendChoice {
    Perfect,
    Http(BackendConfig),
    Replay { id: String, transcript: PathBuf },
}

#[derive(Deserialize)]
struct ReplayConfig {
    id: String,
    transcript: PathBuf,
}

impl BackendChoice {
    pub fn parse_arg(arg: &str) -> Result<Self, HarnessError> {
        if arg == "perfect" {
            return Ok(BackendChoice::Perfect);
        }
        let path = Path::new(arg);
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| HarnessError::Config(format!("{arg}: {e}")))?;
        let kind = table.remove("kind");
        match kind.as_ref().and_then(|k| k.as_str()).unwrap_or("http") {
            "http" => table
                .try_into()
                .map(BackendChoice::Http)
                .map_err(|e| HarnessError::Config(format!("{arg}: {e}"))),
            "replay" => {
                let cfg: ReplayConfig = table
                    .try_into()
                    .map_err(|e| HarnessError::Config(format!("{arg}: {e}")))?;
                let transcript = match path.parent() {
                    Some(dir) if cfg.transcript.is_relative() => dir.join(&cfg.transcript),
                    _ => cfg.transcript,
                };
                Ok(BackendChoice::Replay { id: cfg.id, transcript })
            }
            other => Err(HarnessError::Config(format!("{arg}: unknown backend kind `{other}`"))),
        }
    }

    pub fn id(&self) -> String {
        match self {
            BackendChoice::Perfect => "perfect".to_string(),
            BackendChoice::Http(cfg) => cfg.id.clone().unwrap_or_else(|| cfg.model.clone()),
            BackendChoice::Replay { id, .. } => id.clone(),
        }
    }

    /// Live backends vary in latency, so only they get timing fields.
    pub fn is_live(&self) -> bool {
        matches!(self, BackendChoice::Http(_))
    }

    pub fn build(&self, items: &[BenchmarkItem]) -> Result<LoadedBackend, HarnessError> {
        Ok(match self {
            BackendChoice::Perfect => LoadedBackend::Perfect(PerfectResponder::new(items.iter().cloned())),
            BackendChoice::Http(cfg) => {
                let mut cfg = cfg.clone();
                cfg.id = Some(self.id());
                LoadedBackend::Http(ChatClient::from_env(cfg).map_err(|e| HarnessError::Config(e.to_string()))?)
            }
            BackendChoice::Replay { id, transcript } => {
                let file = File::open(transcript).map_err(|e| HarnessError::io(transcript, e))?;
                let entries = Transcript::read_jsonl(BufReader::new(file)).map_err(|e| HarnessError::io(transcript, e))?;
                LoadedBackend::Replay(ScriptedBackend::from_transcript(id, &entries))
            }
        })
    }
}

pub enum LoadedBackend {
    Perfect(PerfectResponder),
    Http(ChatClient),
    Replay(ScriptedBackend),
}

impl LoadedBackend {
    pub fn backend(&self) -> &dyn Backend {
        match self {
            LoadedBackend::Perfect(b) => b,
            LoadedBackend::Http(b) => b,
            LoadedBackend::Replay(b) => b,
        }
    }

    pub fn transcript(&self) -> &Transcript {
        match self {
            LoadedBackend::Perfect(b) => b.transcript(),
            LoadedBackend::Http(b) => b.transcript(),
            LoadedBackend::Replay(b) => b.transcript(),
        }
    }
}
