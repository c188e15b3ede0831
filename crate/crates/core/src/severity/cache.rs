//! Append-only JSON-lines cache of remote scorer answers.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BBox, NUM_CATEGORIES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub(crate) enum Record {
    Logits {
        key: String,
        logits: [f64; NUM_CATEGORIES],
    },
    Boxes {
        key: String,
        boxes: Vec<BBox>,
    },
}

impl Record {
    fn key(&self) -> &str {
        match self {
            Record::Logits { key, .. } | Record::Boxes { key, .. } => key,
        }
    }
}

/// Thread-safe cache keyed by `SHA-256(patch PNG ‖ prompt ‖ model)`.
pub struct ResponseCache {
    path: PathBuf,
    entries: Mutex<HashMap<String, Record>>,
    file: Mutex<File>,
}

impl ResponseCache {
    /// Opens (or creates) a cache file, loading any existing records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for (n, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Record>(&line) {
                    Ok(rec) => {
                        entries.insert(rec.key().to_string(), rec);
                    }
                    Err(e) => log::warn!("{}:{}: skipping bad cache record: {e}", path.display(), n + 1),
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            entries: Mutex::new(entries),
            file: Mutex::new(file),
        })
    }

    pub fn key(payload: &[u8], prompt: &str, model: &str) -> String {
        let mut h = Sha256::new();
        h.update(payload);
        h.update(prompt.as_bytes());
        h.update(model.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn logits(&self, key: &str) -> Option<[f64; NUM_CATEGORIES]> {
        match self.entries.lock().unwrap().get(key) {
            Some(Record::Logits { logits, .. }) => Some(*logits),
            _ => None,
        }
    }

    pub fn boxes(&self, key: &str) -> Option<Vec<BBox>> {
        match self.entries.lock().unwrap().get(key) {
            Some(Record::Boxes { boxes, .. }) => Some(boxes.clone()),
            _ => None,
        }
    }

    pub fn put_logits(&self, key: &str, logits: [f64; NUM_CATEGORIES]) -> Result<()> {
        self.put(Record::Logits {
            key: key.to_string(),
            logits,
        })
    }

    pub fn put_boxes(&self, key: &str, boxes: &[BBox]) -> Result<()> {
        self.put(Record::Boxes {
            key: key.to_string(),
            boxes: boxes.to_vec(),
        })
    }

    fn put(&self, rec: Record) -> Result<()> {
        let mut line = serde_json::to_string(&rec).expect("cache records serialize");
        line.push('\n');
        {
            let mut f = self.file.lock().unwrap();
            f.write_all(line.as_bytes())
                .and_then(|_| f.flush())
                .map_err(|e| Error::io(&self.path, e))?;
        }
        self.entries
            .lock()
            .unwrap()
            .insert(rec.key().to_string(), rec);
        Ok(())
    }
}
