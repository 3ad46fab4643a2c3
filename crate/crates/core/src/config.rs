//! Runtime configuration: server command, coq-lsp extension method names,
//! timeouts and load-path settings. Loadable from TOML.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::Error;

/// Environment variable naming the language-server binary.
pub const SERVER_ENV: &str = "COQNAV_SERVER";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub server: ServerConfig,
    pub methods: ExtensionMethods,
    pub timeouts: Timeouts,
    pub workspace: WorkspaceConfig,
    pub edit: EditConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            server: ServerConfig::default(),
            methods: ExtensionMethods::default(),
            timeouts: Timeouts::default(),
            workspace: WorkspaceConfig::default(),
            edit: EditConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    /// Program and arguments. Empty means `$COQNAV_SERVER`, then `coq-lsp`.
    pub command: Vec<String>,
    /// Sent as `initializationOptions`.
    pub init_options: Value,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            command: vec![],
            init_options: json!({"eager_diagnostics": false, "show_coq_info_messages": false}),
        }
    }
}

impl ServerConfig {
    pub fn resolved_command(&self) -> Vec<String> {
        if !self.command.is_empty() {
            return self.command.clone();
        }
        match std::env::var(SERVER_ENV) {
            Ok(bin) if !bin.trim().is_empty() => vec![bin],
            _ => vec!["coq-lsp".to_string()],
        }
    }
}

/// How `proof/goals` interprets a position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GoalMode {
    /// State before the sentence at the position.
    Prev,
    /// State after the sentence at the position.
    After,
}

/// Names of the coq-lsp specific requests. Newer or older server releases
/// only need a config change here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtensionMethods {
    pub goals: String,
    pub document: String,
    pub save_vo: String,
    pub file_progress: String,
}

impl Default for ExtensionMethods {
    fn default() -> Self {
        Self {
            goals: "proof/goals".into(),
            document: "coq/getDocument".into(),
            save_vo: "coq/saveVo".into(),
            file_progress: "$/coq/fileProgress".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Timeouts {
    pub request_secs: f64,
    /// Upper bound for one file in the extractor.
    pub file_secs: f64,
}

impl Default for Timeouts {
    fn default() -> Self {
        Self { request_secs: 60.0, file_secs: 300.0 }
    }
}

impl Timeouts {
    pub fn request(&self) -> Duration {
        Duration::from_secs_f64(self.request_secs)
    }

    pub fn file(&self) -> Duration {
        Duration::from_secs_f64(self.file_secs)
    }
}

/// A `-Q dir Prefix` / `-R dir Prefix` binding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadPathBinding {
    pub dir: PathBuf,
    pub prefix: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkspaceConfig {
    /// Bindings in addition to those read from `_CoqProject`.
    pub bindings: Vec<LoadPathBinding>,
    /// Installed library sources, e.g. the standard library's `theories`
    /// directory bound to `Coq`.
    pub library_roots: Vec<LoadPathBinding>,
    /// Where harvested library contexts are cached. `None` disables the disk cache.
    pub cache_dir: Option<PathBuf>,
    pub harvest_jobs: usize,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        Self { bindings: vec![], library_roots: vec![], cache_dir: None, harvest_jobs: 4 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EditConfig {
    /// Never write edits back to disk.
    pub in_memory: bool,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn with_command<I, S>(mut self, command: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.server.command = command.into_iter().map(Into::into).collect();
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_coq_lsp_protocol() {
        let c = Config::default();
        assert_eq!(c.methods.goals, "proof/goals");
        assert_eq!(c.methods.document, "coq/getDocument");
        assert_eq!(c.methods.save_vo, "coq/saveVo");
        assert_eq!(c.timeouts.request(), Duration::from_secs(60));
        assert_eq!(c.timeouts.file(), Duration::from_secs(300));
    }

    #[test]
    fn partial_toml_overrides() {
        let c = Config::from_toml(
            r#"
            [server]
            command = ["coq-lsp", "--bt"]
            [methods]
            goals = "coq/goals"
            [timeouts]
            request_secs = 5
            [[workspace.library_roots]]
            dir = "/usr/lib/coq/theories"
            prefix = "Coq"
            "#,
        )
        .unwrap();
        assert_eq!(c.server.resolved_command(), vec!["coq-lsp", "--bt"]);
        assert_eq!(c.methods.goals, "coq/goals");
        assert_eq!(c.methods.document, "coq/getDocument");
        assert_eq!(c.timeouts.request(), Duration::from_secs(5));
        assert_eq!(c.workspace.library_roots[0].prefix, "Coq");
    }

    #[test]
    fn bad_toml_is_config_error() {
        assert!(matches!(Config::from_toml("server = 3"), Err(Error::Config(_))));
    }
}
