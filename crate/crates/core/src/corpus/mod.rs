//! Content-addressed seed storage with provenance metadata.
//!
//! A corpus directory holds `manifest.json` plus one `seeds/<id>.bin` file
//! per seed, where `id` is the SHA-256 of the seed bytes.

mod elf;
mod seedfile;
mod stats;

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::isa::StreamError;

pub use elf::{extract_text_section, is_elf, ElfError};
pub use seedfile::{load_seed_file, parse_seed_bytes, SeedFileError, SeedFormat};
pub use stats::{corpus_stats, stats_from_seeds, CorpusStats, SeedStats};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCHEMA_VERSION: u32 = 1;

/// Hex SHA-256 of the seed bytes.
pub fn content_id(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    HistoricalBug,
    Generated,
    Mutant,
}

impl Origin {
    pub fn name(self) -> &'static str {
        match self {
            Origin::HistoricalBug => "historical-bug",
            Origin::Generated => "generated",
            Origin::Mutant => "mutant",
        }
    }
}

/// How a bug report supplied its test case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResourceClass {
    Executable,
    PartialSnippet,
    DescriptionOnly,
}

impl ResourceClass {
    pub fn name(self) -> &'static str {
        match self {
            ResourceClass::Executable => "executable",
            ResourceClass::PartialSnippet => "partial-snippet",
            ResourceClass::DescriptionOnly => "description-only",
        }
    }
}

/// Provenance supplied when adding a seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedMeta {
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_processor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource_class: Option<ResourceClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    /// Test case was reconstructed by hand rather than taken from a report.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub manual: bool,
}

impl SeedMeta {
    pub fn new(origin: Origin) -> Self {
        SeedMeta {
            origin,
            source_processor: None,
            report_url: None,
            resource_class: None,
            parent_id: None,
            manual: false,
        }
    }

    pub fn mutant_of(parent_id: impl Into<String>) -> Self {
        SeedMeta {
            parent_id: Some(parent_id.into()),
            ..SeedMeta::new(Origin::Mutant)
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.origin == Origin::Mutant && self.parent_id.is_none() {
            return Err(CorpusError::MutantWithoutParent);
        }
        if self.origin == Origin::HistoricalBug && self.report_url.is_none() && !self.manual {
            return Err(CorpusError::MissingProvenance);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub id: String,
    /// Path of the seed bytes relative to the corpus directory.
    pub path: String,
    #[serde(flatten)]
    pub meta: SeedMeta,
}

/// A report the importer could not turn into seed bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_processor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource_class: Option<ResourceClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub records: Vec<SeedRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pending: Vec<PendingReport>,
}

impl Default for CorpusManifest {
    fn default() -> Self {
        CorpusManifest {
            schema_version: SCHEMA_VERSION,
            records: Vec::new(),
            pending: Vec::new(),
        }
    }
}

impl CorpusManifest {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let manifest: CorpusManifest = serde_json::from_str(text)?;
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(CorpusError::SchemaVersion(manifest.schema_version));
        }
        let mut ids = HashSet::new();
        for record in &manifest.records {
            if !ids.insert(record.id.as_str()) {
                return Err(CorpusError::DuplicateId(record.id.clone()));
            }
            record.meta.validate()?;
        }
        Ok(manifest)
    }

    pub fn find(&self, id: &str) -> Option<&SeedRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    SeedFile(#[from] SeedFileError),
    #[error("mutant seeds must carry a parent id")]
    MutantWithoutParent,
    #[error("historical-bug seeds need a report URL or the manual marker")]
    MissingProvenance,
    #[error("duplicate seed id {0} in manifest")]
    DuplicateId(String),
    #[error("unsupported manifest schema version {0}")]
    SchemaVersion(u32),
    #[error("seed {id} points at missing file {path}")]
    MissingSeedFile { id: String, path: PathBuf },
    #[error("seed file {path} does not hash to its id {id}")]
    HashMismatch { id: String, path: PathBuf },
    #[error("import line {line}: {message}")]
    Import { line: usize, message: String },
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A corpus directory opened for reading and writing.
///
/// Writes go through `&mut self`, so concurrent writers must share the
/// corpus behind a lock.
#[derive(Debug)]
pub struct Corpus {
    root: PathBuf,
    manifest: CorpusManifest,
}

/// Outcome of importing a crawler record file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ImportSummary {
    pub added: Vec<String>,
    pub duplicates: Vec<String>,
    pub pending: usize,
}

/// One line of a crawler import file (JSON Lines).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportRecord {
    #[serde(default = "default_origin")]
    pub origin: Origin,
    #[serde(default)]
    pub source_processor: Option<String>,
    #[serde(default)]
    pub report_url: Option<String>,
    #[serde(default)]
    pub resource_class: Option<ResourceClass>,
    /// Seed artifact, relative to the import file's directory.
    #[serde(default)]
    pub seed_path: Option<String>,
    #[serde(default)]
    pub needs_manual_testcase: bool,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub manual: bool,
}

fn default_origin() -> Origin {
    Origin::HistoricalBug
}

impl Corpus {
    /// Opens `root`, starting an empty manifest if none exists yet.
    pub fn open(root: impl Into<PathBuf>) -> Result<Corpus, CorpusError> {
        let root = root.into();
        let path = root.join(MANIFEST_FILE);
        let manifest = if path.exists() {
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            CorpusManifest::from_json(&text)?
        } else {
            CorpusManifest::default()
        };
        Ok(Corpus { root, manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn records(&self) -> &[SeedRecord] {
        &self.manifest.records
    }

    /// Stores `bytes` under its content hash. Adding bytes that are already
    /// present returns the existing record unchanged.
    pub fn add_seed(&mut self, bytes: &[u8], meta: SeedMeta) -> Result<SeedRecord, CorpusError> {
        if !bytes.len().is_multiple_of(4) {
            return Err(StreamError::TrailingBytes { len: bytes.len() }.into());
        }
        meta.validate()?;
        let id = content_id(bytes);
        if let Some(existing) = self.manifest.find(&id) {
            return Ok(existing.clone());
        }
        let rel = format!("seeds/{id}.bin");
        let path = self.root.join(&rel);
        let dir = path.parent().expect("seed path has a parent");
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_atomic(&path, bytes)?;

        tracing::debug!(%id, origin = meta.origin.name(), "stored seed");
        let record = SeedRecord {
            id,
            path: rel,
            meta,
        };
        self.manifest.records.push(record.clone());
        self.save()?;
        Ok(record)
    }

    pub fn seed_path(&self, record: &SeedRecord) -> PathBuf {
        self.root.join(&record.path)
    }

    pub fn read_seed(&self, record: &SeedRecord) -> Result<Vec<u8>, CorpusError> {
        let path = self.seed_path(record);
        fs::read(&path).map_err(io_err(&path))
    }

    /// Checks that every record's file exists and hashes to its id.
    pub fn verify(&self) -> Result<(), CorpusError> {
        for record in &self.manifest.records {
            let path = self.seed_path(record);
            if !path.is_file() {
                return Err(CorpusError::MissingSeedFile {
                    id: record.id.clone(),
                    path,
                });
            }
            if content_id(&self.read_seed(record)?) != record.id {
                return Err(CorpusError::HashMismatch {
                    id: record.id.clone(),
                    path,
                });
            }
        }
        Ok(())
    }

    /// Imports a JSON Lines record file produced by the bug-report crawler.
    ///
    /// Records with a seed artifact become seeds; records flagged
    /// `needs_manual_testcase` (or without an artifact) are kept as pending.
    pub fn import(&mut self, import_file: &Path) -> Result<ImportSummary, CorpusError> {
        let text = fs::read_to_string(import_file).map_err(io_err(import_file))?;
        let base = import_file.parent().unwrap_or(Path::new("."));
        let mut summary = ImportSummary::default();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: ImportRecord =
                serde_json::from_str(line).map_err(|e| CorpusError::Import {
                    line: line_no,
                    message: e.to_string(),
                })?;
            let seed_path = match (&record.seed_path, record.needs_manual_testcase) {
                (Some(path), false) => base.join(path),
                _ => {
                    let pending = PendingReport {
                        source_processor: record.source_processor,
                        report_url: record.report_url,
                        resource_class: record.resource_class,
                        title: record.title,
                    };
                    if !self.manifest.pending.contains(&pending) {
                        self.manifest.pending.push(pending);
                    }
                    summary.pending += 1;
                    continue;
                }
            };
            let bytes = load_seed_file(&seed_path, SeedFormat::Auto)?;
            let meta = SeedMeta {
                origin: record.origin,
                source_processor: record.source_processor,
                report_url: record.report_url,
                resource_class: record.resource_class,
                parent_id: None,
                manual: record.manual,
            };
            let known = self.manifest.find(&content_id(&bytes)).is_some();
            let added = self.add_seed(&bytes, meta).map_err(|e| match e {
                CorpusError::MissingProvenance | CorpusError::MutantWithoutParent => {
                    CorpusError::Import {
                        line: line_no,
                        message: e.to_string(),
                    }
                }
                other => other,
            })?;
            if known {
                summary.duplicates.push(added.id);
            } else {
                summary.added.push(added.id);
            }
        }
        self.save()?;
        tracing::info!(
            added = summary.added.len(),
            duplicates = summary.duplicates.len(),
            pending = summary.pending,
            "import finished"
        );
        Ok(summary)
    }

    pub fn stats(&self) -> CorpusStats {
        corpus_stats(&self.manifest, &self.root)
    }

    pub fn save(&self) -> Result<(), CorpusError> {
        fs::create_dir_all(&self.root).map_err(io_err(&self.root))?;
        write_atomic(
            &self.root.join(MANIFEST_FILE),
            self.manifest.to_json().as_bytes(),
        )
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| CorpusError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}
