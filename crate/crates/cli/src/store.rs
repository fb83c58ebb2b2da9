//! File-backed document store. Each `<id>.tsv` in the data directory is one
//! document; readers get immutable snapshots, writers are serialized per
//! document and must present the version token of the snapshot they edited.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use sha2::{Digest, Sha256};

use zhsnacs::corpus::{validate_document, Violation};
use zhsnacs::{parse_document, write_document, AnnotatedDocument, Hierarchy};

/// Hex SHA-256 of a document's TSV text.
pub fn version_token(tsv: &str) -> String {
    hex::encode(Sha256::digest(tsv.as_bytes()))
}

#[derive(Debug)]
pub struct Snapshot {
    pub id: String,
    pub doc: AnnotatedDocument,
    pub version: String,
}

#[derive(Debug)]
pub enum UpdateError {
    NotFound,
    Conflict { current: String },
    /// The edit itself was malformed.
    Rejected(String),
    Invalid(Vec<Violation>),
    Io(std::io::Error),
}

pub struct Store {
    dir: PathBuf,
    docs: RwLock<BTreeMap<String, Arc<Snapshot>>>,
    write_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl Store {
    /// Load every `.tsv` file in `dir`. Files that fail to parse or validate
    /// are skipped and returned alongside the store.
    pub fn open(dir: &Path, h: &Hierarchy) -> std::io::Result<(Store, Vec<(PathBuf, String)>)> {
        let mut docs = BTreeMap::new();
        let mut skipped = Vec::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "tsv") && p.is_file())
            .collect();
        paths.sort();
        for path in paths {
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).filter(|s| valid_id(s)) else {
                skipped.push((path, "unsupported file name".to_string()));
                continue;
            };
            let id = id.to_string();
            let text = match std::fs::read_to_string(&path) {
                Ok(t) => t,
                Err(e) => {
                    skipped.push((path, e.to_string()));
                    continue;
                }
            };
            let doc = match parse_document(&text, h) {
                Ok(d) => d,
                Err(e) => {
                    skipped.push((path, e.to_string()));
                    continue;
                }
            };
            let violations = validate_document(&doc, h);
            if let Some(v) = violations.first() {
                skipped.push((path, format!("{}: {}", v.code, v.message)));
                continue;
            }
            let version = version_token(&text);
            docs.insert(id.clone(), Arc::new(Snapshot { id, doc, version }));
        }
        let store = Store {
            dir: dir.to_path_buf(),
            docs: RwLock::new(docs),
            write_locks: Mutex::new(HashMap::new()),
        };
        Ok((store, skipped))
    }

    pub fn list(&self) -> Vec<Arc<Snapshot>> {
        self.docs.read().values().cloned().collect()
    }

    pub fn get(&self, id: &str) -> Option<Arc<Snapshot>> {
        self.docs.read().get(id).cloned()
    }

    fn path_of(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.tsv"))
    }

    fn write_lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.write_locks.lock().entry(id.to_string()).or_default().clone()
    }

    /// Apply `edit` to a copy of document `id` holding version `expected`,
    /// validate the result, and persist it as canonical TSV.
    pub fn update<T>(
        &self,
        id: &str,
        expected: &str,
        h: &Hierarchy,
        edit: impl FnOnce(&mut AnnotatedDocument) -> Result<T, UpdateError>,
    ) -> Result<(Arc<Snapshot>, T), UpdateError> {
        let lock = self.write_lock(id);
        let _guard = lock.lock();
        let current = self.get(id).ok_or(UpdateError::NotFound)?;
        if current.version != expected {
            return Err(UpdateError::Conflict {
                current: current.version.clone(),
            });
        }
        let mut doc = current.doc.clone();
        let result = edit(&mut doc)?;
        doc.canonicalize();
        let violations = validate_document(&doc, h);
        if !violations.is_empty() {
            return Err(UpdateError::Invalid(violations));
        }
        let tsv = write_document(&doc);
        match parse_document(&tsv, h) {
            Ok(back) if back == doc => {}
            _ => return Err(UpdateError::Rejected("document does not survive serialization".into())),
        }
        self.persist(id, &tsv).map_err(UpdateError::Io)?;
        let snapshot = Arc::new(Snapshot {
            id: id.to_string(),
            doc,
            version: version_token(&tsv),
        });
        self.docs.write().insert(id.to_string(), snapshot.clone());
        Ok((snapshot, result))
    }

    fn persist(&self, id: &str, tsv: &str) -> std::io::Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(tsv.as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(self.path_of(id)).map_err(|e| e.error)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use zhsnacs::{Construal, Label, Language, Sentence, TargetAnnotation, TargetKind};

    fn sample() -> AnnotatedDocument {
        let mut d = AnnotatedDocument::new("d", Language::Zh);
        d.sentences.push(Sentence::from_tagged("s1", &[("在", "P"), ("家", "NN"), ("住", "VV")]));
        d
    }

    fn target(scene: &str) -> TargetAnnotation {
        TargetAnnotation {
            sentence_id: "s1".into(),
            token_indices: vec![1],
            kind: TargetKind::Coverb,
            label: Label::Construal(Construal::new(scene, "Locus")),
            annotator: "a".into(),
            group: 1,
            np_span: None,
        }
    }

    fn open_with(doc: &AnnotatedDocument) -> (tempfile::TempDir, Store) {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.tsv"), write_document(doc)).unwrap();
        std::fs::write(dir.path().join("broken.tsv"), "not a document").unwrap();
        let (store, skipped) = Store::open(dir.path(), &Hierarchy::builtin()).unwrap();
        assert_eq!(skipped.len(), 1);
        (dir, store)
    }

    #[test]
    fn update_persists_canonical_tsv() {
        let h = Hierarchy::builtin();
        let (dir, store) = open_with(&sample());
        let v0 = store.get("d").unwrap().version.clone();
        let (snap, ()) = store
            .update("d", &v0, &h, |d| {
                d.annotations.push(target("Locus"));
                Ok(())
            })
            .unwrap();
        let on_disk = std::fs::read_to_string(dir.path().join("d.tsv")).unwrap();
        assert_eq!(on_disk, write_document(&snap.doc));
        assert_eq!(snap.version, version_token(&on_disk));
        assert_ne!(snap.version, v0);
    }

    #[test]
    fn stale_and_invalid_writes_change_nothing() {
        let h = Hierarchy::builtin();
        let (dir, store) = open_with(&sample());
        let before = std::fs::read_to_string(dir.path().join("d.tsv")).unwrap();
        let err = store.update("d", "stale", &h, |_| Ok(())).unwrap_err();
        assert!(matches!(err, UpdateError::Conflict { .. }));
        let v = store.get("d").unwrap().version.clone();
        let err = store
            .update("d", &v, &h, |d| {
                d.annotations.push(target("Nowhere"));
                Ok(())
            })
            .unwrap_err();
        assert!(matches!(err, UpdateError::Invalid(ref v) if v.len() == 1));
        assert_eq!(std::fs::read_to_string(dir.path().join("d.tsv")).unwrap(), before);
        assert_eq!(store.get("d").unwrap().version, v);
        assert!(matches!(store.update("x", &v, &h, |_| Ok(())), Err(UpdateError::NotFound)));
    }

    #[test]
    fn ids_are_plain_file_names() {
        assert!(valid_id("lpp_zh.ch1"));
        assert!(!valid_id("../etc"));
        assert!(!valid_id(".hidden"));
        assert!(!valid_id(""));
    }
}
