//! Append-only session event logs, one JSONL file per session.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::session::SessionEvent;

#[derive(Clone, Debug, Default)]
pub struct EventStore {
    dir: Option<PathBuf>,
}

impl EventStore {
    /// A store that keeps nothing; sessions die with the process.
    pub fn in_memory() -> Self {
        Self { dir: None }
    }

    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir: Some(dir) })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn path(dir: &Path, session_id: &str) -> PathBuf {
        dir.join(format!("{session_id}.jsonl"))
    }

    /// Appends one event and syncs it to disk before returning.
    pub fn append(&self, session_id: &str, event: &SessionEvent) -> io::Result<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let mut line = serde_json::to_string(event)?;
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(Self::path(dir, session_id))?;
        f.write_all(line.as_bytes())?;
        f.sync_data()
    }

    /// Every stored log, ordered by session id. A torn last line (a crash
    /// mid-write) is dropped; corruption anywhere else is an error.
    pub fn load(&self) -> io::Result<Vec<(String, Vec<SessionEvent>)>> {
        let Some(dir) = &self.dir else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let text = fs::read_to_string(&path)?;
            let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
            let mut events = Vec::with_capacity(lines.len());
            for (i, line) in lines.iter().enumerate() {
                match serde_json::from_str(line) {
                    Ok(e) => events.push(e),
                    Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {}
                    Err(e) => {
                        return Err(io::Error::new(
                            io::ErrorKind::InvalidData,
                            format!("{}:{}: {e}", path.display(), i + 1),
                        ))
                    }
                }
            }
            out.push((id.to_owned(), events));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }
}
