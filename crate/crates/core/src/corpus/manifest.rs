//! CSV manifest `path,identity,gender,split,modality` with open-set
//! validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Voice,
    Face,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub identity: usize,
    pub gender: u8,
    pub split: Split,
    pub modality: Modality,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
}

/// File line of the `i`-th data record (the header is line 1).
fn row_of(i: usize) -> usize {
    i + 2
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Manifest("manifest has no entries".into()));
        }
        let mut first_seen: BTreeMap<usize, (usize, Split, u8)> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.gender > 1 {
                return Err(Error::ManifestRow {
                    row: row_of(i),
                    message: format!("gender must be 0 or 1, got {}", e.gender),
                });
            }
            if e.path.trim().is_empty() {
                return Err(Error::ManifestRow {
                    row: row_of(i),
                    message: "empty path".into(),
                });
            }
            match first_seen.get(&e.identity) {
                None => {
                    first_seen.insert(e.identity, (i, e.split, e.gender));
                }
                Some(&(j, split, gender)) => {
                    if split != e.split {
                        return Err(Error::ManifestRow {
                            row: row_of(i),
                            message: format!(
                                "identity {} is in split {} but row {} puts it in {}; splits must be disjoint",
                                e.identity,
                                e.split,
                                row_of(j),
                                split
                            ),
                        });
                    }
                    if gender != e.gender {
                        return Err(Error::ManifestRow {
                            row: row_of(i),
                            message: format!(
                                "identity {} has gender {} but row {} says {}",
                                e.identity,
                                e.gender,
                                row_of(j),
                                gender
                            ),
                        });
                    }
                }
            }
        }
        if let Some(missing) = (0..first_seen.len()).find(|l| !first_seen.contains_key(l)) {
            return Err(Error::Manifest(format!(
                "identity labels must be dense in 0..{}; label {missing} is missing",
                first_seen.len()
            )));
        }
        let manifest = DatasetManifest { entries };
        for id in manifest.identities(Split::Train) {
            for m in [Modality::Voice, Modality::Face] {
                if !manifest.entries.iter().any(|e| e.identity == id && e.modality == m) {
                    return Err(Error::Manifest(format!("train identity {id} has no {m:?} entries")));
                }
            }
        }
        Ok(manifest)
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted identity labels of one split.
    pub fn identities(&self, split: Split) -> Vec<usize> {
        let set: BTreeSet<usize> = self.entries.iter().filter(|e| e.split == split).map(|e| e.identity).collect();
        set.into_iter().collect()
    }

    pub fn identity_count(&self) -> usize {
        self.entries.iter().map(|e| e.identity).collect::<BTreeSet<_>>().len()
    }

    pub fn select(&self, split: Split, modality: Modality) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split && e.modality == modality)
    }

    pub fn gender_of(&self, identity: usize) -> Option<u8> {
        self.entries.iter().find(|e| e.identity == identity).map(|e| e.gender)
    }

    /// Classifier indices: rank of each train identity.
    pub fn class_map(&self) -> ClassMap {
        ClassMap {
            identities: self.identities(Split::Train),
        }
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            w.serialize(e).map_err(|e| Error::Manifest(e.to_string()))?;
        }
        w.into_inner().map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
        let headers = reader.headers().map_err(|e| Error::Manifest(e.to_string()))?.clone();
        let expected = ["path", "identity", "gender", "split", "modality"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Manifest(format!(
                "header must be `{}`, found `{}`",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut entries = Vec::new();
        for (i, record) in reader.deserialize::<ManifestEntry>().enumerate() {
            entries.push(record.map_err(|e| Error::ManifestRow {
                row: e.position().map(|p| p.line() as usize).unwrap_or(row_of(i)),
                message: e.to_string(),
            })?);
        }
        Self::new(entries)
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(Error::Manifest(format!("{} is empty", path.display())));
    }
    DatasetManifest::from_csv(&bytes)
}

/// Mapping between train identity labels and classifier indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassMap {
    identities: Vec<usize>,
}

impl ClassMap {
    pub fn len(&self) -> usize {
        self.identities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.identities.is_empty()
    }

    pub fn class_of(&self, identity: usize) -> Option<usize> {
        self.identities.binary_search(&identity).ok()
    }

    pub fn identity_of(&self, class: usize) -> usize {
        self.identities[class]
    }
}
