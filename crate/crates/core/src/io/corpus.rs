//! Deterministic index of the PCM16 WAV files under a directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::wav::read_wav;
use crate::error::{Error, Result};
use crate::signal::Signal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub path: PathBuf,
    pub sample_rate: f64,
    pub duration_s: f64,
    pub speaker: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub root: PathBuf,
    pub entries: Vec<CorpusEntry>,
    /// Files with a `.wav` extension that could not be read as PCM16.
    pub skipped: Vec<PathBuf>,
}

/// Reads an override manifest mapping file paths (absolute or relative to the
/// corpus root) to speaker ids. Accepts a JSON object, a list of
/// `[path, speaker]` pairs, or a list of `{"path", "speaker"}` objects.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Pair(String, String),
        Named { path: String, speaker: String },
    }
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Manifest {
        Map(BTreeMap<String, String>),
        List(Vec<Entry>),
    }
    let text = std::fs::read_to_string(path)?;
    Ok(match serde_json::from_str(&text)? {
        Manifest::Map(m) => m,
        Manifest::List(v) => v
            .into_iter()
            .map(|e| match e {
                Entry::Pair(p, s) | Entry::Named { path: p, speaker: s } => (p, s),
            })
            .collect(),
    })
}

fn is_wav(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

impl CorpusIndex {
    /// Indexes every readable WAV under `root`, sorted by path. The speaker
    /// is the top-level directory below `root` unless the manifest names one.
    pub fn build(root: impl AsRef<Path>, manifest: Option<&BTreeMap<String, String>>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        if !root.is_dir() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{} is not a directory", root.display()),
            )));
        }
        let mut files: Vec<PathBuf> = walkdir::WalkDir::new(&root)
            .follow_links(true)
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_file() && is_wav(e.path()))
            .map(|e| e.into_path())
            .collect();
        files.sort();
        let probed: Vec<(PathBuf, Result<Signal<f64>>)> = files.into_par_iter().map(|p| {
            let s = read_wav(&p);
            (p, s)
        }).collect();
        let mut entries = Vec::new();
        let mut skipped = Vec::new();
        for (path, res) in probed {
            match res {
                Ok(sig) => {
                    let rel = path.strip_prefix(&root).unwrap_or(&path);
                    let from_manifest = manifest.and_then(|m| {
                        m.get(&rel.to_string_lossy().into_owned()).or_else(|| m.get(&path.to_string_lossy().into_owned()))
                    });
                    let speaker = from_manifest.cloned().or_else(|| {
                        let mut parts = rel.components();
                        let first = parts.next()?;
                        parts.next()?;
                        Some(first.as_os_str().to_string_lossy().into_owned())
                    });
                    entries.push(CorpusEntry { sample_rate: sig.sample_rate(), duration_s: sig.duration_s(), speaker, path });
                }
                Err(e) => {
                    log::warn!("skipping {}: {e}", path.display());
                    skipped.push(path);
                }
            }
        }
        Ok(Self { root, entries, skipped })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Loads every indexed file, in index order.
    pub fn load(&self) -> Result<Vec<Signal<f64>>> {
        let loaded: Vec<Result<Signal<f64>>> = self.entries.par_iter().map(|e| read_wav(&e.path)).collect();
        loaded.into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_wav;

    #[test]
    fn speakers_sorting_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        for (sub, name) in [("spk2", "b.wav"), ("spk1", "z.wav"), ("spk1", "a.wav")] {
            std::fs::create_dir_all(root.join(sub)).unwrap();
            write_wav(root.join(sub).join(name), &Signal::new(vec![0.1; 80], 8000.0).unwrap()).unwrap();
        }
        write_wav(root.join("loose.wav"), &Signal::new(vec![0.1; 80], 8000.0).unwrap()).unwrap();
        std::fs::write(root.join("bad.wav"), b"not audio").unwrap();

        let idx = CorpusIndex::build(root, None).unwrap();
        let rel: Vec<String> =
            idx.entries.iter().map(|e| e.path.strip_prefix(root).unwrap().to_string_lossy().into_owned()).collect();
        assert_eq!(rel, ["loose.wav", "spk1/a.wav", "spk1/z.wav", "spk2/b.wav"]);
        let spk: Vec<Option<&str>> = idx.entries.iter().map(|e| e.speaker.as_deref()).collect();
        assert_eq!(spk, [None, Some("spk1"), Some("spk1"), Some("spk2")]);
        assert_eq!(idx.skipped.len(), 1);
        assert!((idx.entries[0].duration_s - 0.01).abs() < 1e-12);

        let manifest: BTreeMap<String, String> = [("spk1/a.wav".to_string(), "alice".to_string())].into();
        let idx = CorpusIndex::build(root, Some(&manifest)).unwrap();
        assert_eq!(idx.entries[1].speaker.as_deref(), Some("alice"));
    }

    #[test]
    fn manifest_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let want: BTreeMap<String, String> =
            [("a.wav".to_string(), "x".to_string()), ("b.wav".to_string(), "y".to_string())].into();
        for text in [
            r#"{"a.wav": "x", "b.wav": "y"}"#,
            r#"[["a.wav", "x"], ["b.wav", "y"]]"#,
            r#"[{"path": "a.wav", "speaker": "x"}, {"path": "b.wav", "speaker": "y"}]"#,
        ] {
            let p = dir.path().join("m.json");
            std::fs::write(&p, text).unwrap();
            assert_eq!(read_manifest(&p).unwrap(), want);
        }
        std::fs::write(dir.path().join("m.json"), "[1, 2]").unwrap();
        assert!(read_manifest(dir.path().join("m.json")).is_err());
    }
}
