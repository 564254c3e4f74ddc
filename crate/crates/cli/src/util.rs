//! Output helpers shared by the subcommands.
//!
//! All file outputs go through an atomic temp-write-then-rename so an
//! interrupted run never leaves a half-written file. Every run also writes a
//! manifest of the resolved parameters and seed next to its output; manifests
//! contain no timestamps, so repeated runs with equal inputs are
//! byte-identical.

use std::path::{Path, PathBuf};

use overmix::{Error, Result};

/// Writes `text` to `path` atomically (temp file in the same directory,
/// renamed into place on success).
pub fn write_text_atomic(path: &Path, text: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let dir = dir.unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let io_err = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    std::io::Write::write_all(&mut tmp.as_file(), text.as_bytes()).map_err(io_err)?;
    tmp.persist(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

/// Collects resolved parameters for the run manifest.
#[derive(Debug, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.put("command", command);
        m.put("tool_version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn put(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn put_path(&mut self, key: &str, value: &Path) {
        self.put(key, value.display());
    }

    pub fn put_opt(&mut self, key: &str, value: Option<impl ToString>) {
        match value {
            Some(v) => self.put(key, v),
            None => self.put(key, "-"),
        }
    }

    /// Writes `key\tvalue` lines sorted by key.
    pub fn write(mut self, path: &Path) -> Result<()> {
        self.entries.sort();
        let mut text = String::new();
        for (k, v) in &self.entries {
            text.push_str(k);
            text.push('\t');
            text.push_str(v);
            text.push('\n');
        }
        write_text_atomic(path, &text)
    }
}

/// Manifest location for an output file: a `.manifest.tsv` sibling.
pub fn manifest_for_file(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.tsv");
    out.with_file_name(name)
}

/// Manifest location for an output directory.
pub fn manifest_for_dir(out: &Path) -> PathBuf {
    out.join("manifest.tsv")
}

/// Sorted stems of the `.wav` files directly inside `dir`.
pub fn wav_stems(dir: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut stems = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("wav") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    Ok(stems)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_is_sorted_and_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.tsv");
        let mut m = Manifest::new("pair");
        m.put("seed", 7u64);
        m.put_opt("jobs", None::<u64>);
        m.write(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let keys: Vec<&str> = text.lines().map(|l| l.split('\t').next().unwrap()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(text.contains("command\tpair\n"));
        assert!(text.contains("jobs\t-\n"));
    }

    #[test]
    fn atomic_write_and_stem_listing() {
        let dir = tempfile::tempdir().unwrap();
        let nested = dir.path().join("a/b/out.tsv");
        write_text_atomic(&nested, "x\n").unwrap();
        assert_eq!(std::fs::read_to_string(&nested).unwrap(), "x\n");

        std::fs::write(dir.path().join("b.wav"), b"").unwrap();
        std::fs::write(dir.path().join("a.wav"), b"").unwrap();
        std::fs::write(dir.path().join("c.txt"), b"").unwrap();
        assert_eq!(wav_stems(dir.path()).unwrap(), vec!["a", "b"]);
    }
}
