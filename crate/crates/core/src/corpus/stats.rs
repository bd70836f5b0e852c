//! Corpus summary: provenance counts, instruction-class histograms, CTI density.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::{CorpusManifest, Origin, ResourceClass};
use crate::isa::{decode_stream, Entry, OpClass, Unit};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedStats {
    pub id: String,
    pub words: usize,
    pub instructions: usize,
    pub ctis: usize,
    /// CTIs per decodable instruction; 0 for a seed with none.
    pub cti_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub seeds: usize,
    pub pending: usize,
    pub by_origin: BTreeMap<&'static str, usize>,
    /// Records without a resource class are counted under "unspecified".
    pub by_resource_class: BTreeMap<&'static str, usize>,
    pub total_words: usize,
    pub instructions: usize,
    pub opaque: usize,
    pub by_opclass: BTreeMap<&'static str, usize>,
    pub by_unit: BTreeMap<&'static str, usize>,
    pub per_seed: Vec<SeedStats>,
    /// Ids whose seed file could not be read or decoded.
    pub unreadable: Vec<String>,
}

impl CorpusStats {
    fn empty() -> Self {
        let origins = [Origin::HistoricalBug, Origin::Generated, Origin::Mutant];
        let classes = [
            ResourceClass::Executable,
            ResourceClass::PartialSnippet,
            ResourceClass::DescriptionOnly,
        ];
        let mut by_resource_class: BTreeMap<_, _> = classes.iter().map(|c| (c.name(), 0)).collect();
        by_resource_class.insert("unspecified", 0);
        CorpusStats {
            seeds: 0,
            pending: 0,
            by_origin: origins.iter().map(|o| (o.name(), 0)).collect(),
            by_resource_class,
            total_words: 0,
            instructions: 0,
            opaque: 0,
            by_opclass: OpClass::ALL.iter().map(|c| (c.name(), 0)).collect(),
            by_unit: Unit::ALL.iter().map(|u| (u.name(), 0)).collect(),
            per_seed: Vec::new(),
            unreadable: Vec::new(),
        }
    }

    fn add_seed_bytes(&mut self, id: &str, bytes: &[u8]) -> bool {
        let Ok(stream) = decode_stream(bytes) else {
            return false;
        };
        let mut seed = SeedStats {
            id: id.to_string(),
            words: stream.len(),
            instructions: 0,
            ctis: 0,
            cti_density: 0.0,
        };
        for entry in &stream.entries {
            match entry {
                Entry::Inst(inst) => {
                    seed.instructions += 1;
                    seed.ctis += usize::from(inst.is_cti());
                    *self
                        .by_opclass
                        .get_mut(inst.opclass.name())
                        .expect("all classes present") += 1;
                    *self
                        .by_unit
                        .get_mut(inst.unit.name())
                        .expect("all units present") += 1;
                }
                Entry::Opaque(_) => self.opaque += 1,
            }
        }
        if seed.instructions > 0 {
            seed.cti_density = seed.ctis as f64 / seed.instructions as f64;
        }
        self.total_words += seed.words;
        self.instructions += seed.instructions;
        self.per_seed.push(seed);
        true
    }
}

/// Summarizes `manifest`, reading seed files relative to `root`.
pub fn corpus_stats(manifest: &CorpusManifest, root: &Path) -> CorpusStats {
    stats_from_seeds(manifest, |path| std::fs::read(root.join(path)).ok())
}

/// Like [`corpus_stats`] with a caller-supplied seed reader.
pub fn stats_from_seeds(
    manifest: &CorpusManifest,
    mut read: impl FnMut(&str) -> Option<Vec<u8>>,
) -> CorpusStats {
    let mut stats = CorpusStats::empty();
    stats.seeds = manifest.records.len();
    stats.pending = manifest.pending.len();
    for record in &manifest.records {
        *stats
            .by_origin
            .get_mut(record.meta.origin.name())
            .expect("origin present") += 1;
        let class = record
            .meta
            .resource_class
            .map_or("unspecified", ResourceClass::name);
        *stats
            .by_resource_class
            .get_mut(class)
            .expect("class present") += 1;
        let ok = read(&record.path).is_some_and(|bytes| stats.add_seed_bytes(&record.id, &bytes));
        if !ok {
            stats.unreadable.push(record.id.clone());
        }
    }
    stats
}
