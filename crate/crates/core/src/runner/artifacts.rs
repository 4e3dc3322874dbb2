use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::seed::sha256_hex;

#[derive(Debug, thiserror::Error)]
#[error("{path}: {source}")]
pub struct ArtifactError {
    pub path: String,
    #[source]
    pub source: io::Error,
}

pub(crate) fn at(path: &Path) -> impl Fn(io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError {
        path: path.display().to_string(),
        source,
    }
}

/// Writes through a temporary file in the target directory.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ArtifactError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(at(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(at(path))?;
    tmp.write_all(bytes).map_err(at(path))?;
    tmp.persist(path).map_err(|e| at(path)(e.error))?;
    Ok(())
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| at(path)(io::Error::other(e)))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ArtifactError> {
    let text = fs::read_to_string(path).map_err(at(path))?;
    serde_json::from_str(&text).map_err(|e| at(path)(io::Error::new(io::ErrorKind::InvalidData, e)))
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ArtifactError> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).map_err(|e| at(path)(io::Error::other(e)))?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ArtifactError> {
    let f = fs::File::open(path).map_err(at(path))?;
    let mut rows = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(at(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| {
            at(path)(io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1)))
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// sha256 of the canonical (key-sorted) JSON form.
pub(crate) fn fingerprint_of<T: Serialize + ?Sized>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("fingerprint input serializes");
    sha256_hex(v.to_string().as_bytes())
}

const COMPLETE: &str = "COMPLETE";

/// A cached stage: `<root>/stages/<name>-<fingerprint prefix>/`.
#[derive(Debug, Clone)]
pub struct StageDir {
    pub name: &'static str,
    pub fingerprint: String,
    pub dir: PathBuf,
}

impl StageDir {
    pub(crate) fn new(root: &Path, name: &'static str, fingerprint: String) -> Self {
        let dir = root.join("stages").join(format!("{name}-{}", &fingerprint[..16]));
        StageDir {
            name,
            fingerprint,
            dir,
        }
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    /// The marker matches and every listed file exists.
    pub(crate) fn is_complete(&self, files: &[&str]) -> bool {
        let marker = fs::read_to_string(self.path(COMPLETE)).unwrap_or_default();
        marker.trim() == self.fingerprint && files.iter().all(|f| self.path(f).exists())
    }

    pub(crate) fn create(&self) -> Result<(), ArtifactError> {
        fs::create_dir_all(&self.dir).map_err(at(&self.dir))
    }

    pub(crate) fn mark_complete(&self) -> Result<(), ArtifactError> {
        write_atomic(&self.path(COMPLETE), format!("{}\n", self.fingerprint).as_bytes())
    }
}

pub(crate) fn file_sha(path: &Path) -> Result<String, ArtifactError> {
    Ok(sha256_hex(&fs::read(path).map_err(at(path))?))
}
