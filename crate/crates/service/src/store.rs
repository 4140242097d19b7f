//! On-disk layout of a session: one directory holding the config it started
//! with, append-only JSON-lines logs and the latest analytics report.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use negotiator_core::protocol::{SessionConfig, SessionStatus, TranscriptEntry};
use negotiator_core::reflection::{ChangeLogEntry, JudgmentRecord};
use negotiator_core::session::{DecisionPolicy, RunSummary};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CONFIG_FILE: &str = "config.json";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const CHANGELOG_FILE: &str = "changelog.jsonl";
pub const JUDGMENTS_FILE: &str = "judgments.jsonl";
pub const ANALYTICS_FILE: &str = "analytics.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}:{line}: truncated line", path.display())]
    Truncated { path: PathBuf, line: usize },
    #[error("{}: invalid session config: {}", path.display(), problems.join("; "))]
    Invalid { path: PathBuf, problems: Vec<String> },
}

impl StoreError {
    fn io(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
        move |source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectionSettings {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Scripted stand-in for the human; required for headless runs with
    /// reflection on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<DecisionPolicy>,
}

impl Default for ReflectionSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            policy: None,
        }
    }
}

/// What a session is started from, both on the command line and over HTTP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub session: SessionConfig,
    #[serde(default)]
    pub reflection: ReflectionSettings,
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, StoreError> {
        let run: RunConfig = serde_json::from_str(text).map_err(|e| StoreError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let problems = run.session.problems();
        if !problems.is_empty() {
            return Err(StoreError::Invalid {
                path: path.to_path_buf(),
                problems,
            });
        }
        Ok(run)
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let text = fs::read_to_string(path).map_err(StoreError::io(path))?;
        Self::parse(&text, path)
    }
}

/// What the service knows about one stored session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub config: SessionConfig,
    pub transcript: PathBuf,
    pub changelog: PathBuf,
    pub status: SessionStatus,
}

/// Reads one JSON value per line. A last line without its newline that does
/// not parse is reported as truncated.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let text = fs::read_to_string(path).map_err(StoreError::io(path))?;
    let complete = text.is_empty() || text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut items = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let number = i + 1;
        match serde_json::from_str(line) {
            Ok(item) => items.push(item),
            Err(_) if !complete && number == lines.len() => {
                return Err(StoreError::Truncated {
                    path: path.to_path_buf(),
                    line: number,
                })
            }
            Err(e) => {
                return Err(StoreError::Parse {
                    path: path.to_path_buf(),
                    line: number,
                    column: e.column(),
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(items)
}

fn read_optional_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    if path.exists() {
        read_jsonl(path)
    } else {
        Ok(Vec::new())
    }
}

/// Everything persisted for one session.
#[derive(Debug, Clone)]
pub struct StoredSession {
    pub run: RunConfig,
    pub transcript: Vec<TranscriptEntry>,
    pub changelog: Vec<ChangeLogEntry>,
    pub judgments: Vec<JudgmentRecord>,
}

#[derive(Debug, Clone)]
pub struct SessionFiles {
    dir: PathBuf,
}

impl SessionFiles {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// Lays out a fresh session directory. Refuses to reuse one that already
    /// holds a session.
    pub fn create(dir: impl Into<PathBuf>, run: &RunConfig) -> Result<Self, StoreError> {
        let files = Self::new(dir);
        fs::create_dir_all(&files.dir).map_err(StoreError::io(&files.dir))?;
        let config = files.config();
        let text = serde_json::to_string_pretty(run).expect("config serializes") + "\n";
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&config)
            .map_err(StoreError::io(&config))?;
        f.write_all(text.as_bytes()).map_err(StoreError::io(&config))?;
        for path in [files.transcript(), files.changelog()] {
            File::create(&path).map_err(StoreError::io(&path))?;
        }
        Ok(files)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config(&self) -> PathBuf {
        self.dir.join(CONFIG_FILE)
    }

    pub fn transcript(&self) -> PathBuf {
        self.dir.join(TRANSCRIPT_FILE)
    }

    pub fn changelog(&self) -> PathBuf {
        self.dir.join(CHANGELOG_FILE)
    }

    pub fn judgments(&self) -> PathBuf {
        self.dir.join(JUDGMENTS_FILE)
    }

    pub fn analytics(&self) -> PathBuf {
        self.dir.join(ANALYTICS_FILE)
    }

    pub fn append<T: Serialize>(&self, path: &Path, items: &[T]) -> Result<(), StoreError> {
        if items.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for item in items {
            serde_json::to_writer(&mut buf, item).expect("log entries serialize");
            buf.push(b'\n');
        }
        let mut f = OpenOptions::new()
            .append(true)
            .create(true)
            .open(path)
            .map_err(StoreError::io(path))?;
        f.write_all(&buf).map_err(StoreError::io(path))?;
        f.sync_data().map_err(StoreError::io(path))
    }

    /// Replaces the analytics report through a rename, so readers never see
    /// half of it.
    pub fn write_analytics(&self, summary: &RunSummary) -> Result<(), StoreError> {
        let path = self.analytics();
        let tmp = self.dir.join(format!("{ANALYTICS_FILE}.tmp"));
        let text = serde_json::to_string_pretty(summary).expect("summary serializes") + "\n";
        fs::write(&tmp, text).map_err(StoreError::io(&tmp))?;
        fs::rename(&tmp, &path).map_err(StoreError::io(&path))
    }

    pub fn read_analytics(&self) -> Result<Option<RunSummary>, StoreError> {
        let path = self.analytics();
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(StoreError::io(&path))?;
        serde_json::from_str(&text).map(Some).map_err(|e| StoreError::Parse {
            path,
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(&self) -> Result<StoredSession, StoreError> {
        Ok(StoredSession {
            run: RunConfig::load(&self.config())?,
            transcript: read_jsonl(&self.transcript())?,
            changelog: read_optional_jsonl(&self.changelog())?,
            judgments: read_optional_jsonl(&self.judgments())?,
        })
    }
}
