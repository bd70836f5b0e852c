//! Block segmentation and similarity-guided block mutation.
//!
//! A seed is split into blocks that each end at a control-transfer
//! instruction. Mutation rewrites instructions inside block bodies only;
//! terminators and opaque words are never touched, so the block structure
//! and byte length of a seed survive every mutation.

mod operators;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{content_id, SeedRecord};
use crate::isa::{decode_stream, DecodedStream, Entry, Instruction, StreamError};
use crate::similarity::{block_similarity, SimilarityConfig};

pub use operators::{mutate_instruction, Mutated, Operator, OperatorWeights};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub body: Vec<Entry>,
    /// Absent only for a trailing block that runs off the end of the seed.
    pub terminator: Option<Instruction>,
    pub start_offset: usize,
}

impl Block {
    /// Number of entries including the terminator.
    pub fn len(&self) -> usize {
        self.body.len() + usize::from(self.terminator.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Body entries followed by the terminator.
    pub fn entries(&self) -> impl Iterator<Item = Entry> + '_ {
        self.body
            .iter()
            .copied()
            .chain(self.terminator.map(Entry::Inst))
    }

    pub fn words(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries().map(|e| e.word())
    }

    /// Body positions holding decodable instructions.
    pub fn mutable_positions(&self) -> Vec<usize> {
        self.body
            .iter()
            .enumerate()
            .filter(|(_, e)| matches!(e, Entry::Inst(inst) if !inst.is_cti()))
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seed {
    pub blocks: Vec<Block>,
    pub id: String,
    pub meta: Option<SeedRecord>,
}

impl Seed {
    pub fn from_blocks(blocks: Vec<Block>) -> Seed {
        let mut seed = Seed {
            blocks,
            id: String::new(),
            meta: None,
        };
        seed.id = content_id(&reassemble(&seed));
        seed
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Seed, StreamError> {
        Ok(segment_seed(&decode_stream(bytes)?))
    }

    pub fn entry_count(&self) -> usize {
        self.blocks.iter().map(Block::len).sum()
    }

    pub fn terminator_words(&self) -> Vec<Option<u32>> {
        self.blocks
            .iter()
            .map(|b| b.terminator.map(|t| t.word))
            .collect()
    }
}

/// Greedy left-to-right split: every CTI closes the block it ends.
pub fn segment_seed(stream: &DecodedStream) -> Seed {
    let mut blocks = Vec::new();
    let mut body = Vec::new();
    let mut start = 0;
    for (offset, entry) in stream.offsets() {
        match entry {
            Entry::Inst(inst) if inst.is_cti() => {
                blocks.push(Block {
                    body: std::mem::take(&mut body),
                    terminator: Some(*inst),
                    start_offset: start,
                });
                start = offset + 4;
            }
            other => body.push(*other),
        }
    }
    if !body.is_empty() {
        blocks.push(Block {
            body,
            terminator: None,
            start_offset: start,
        });
    }
    Seed::from_blocks(blocks)
}

/// Little-endian serialization of all blocks in order.
pub fn reassemble(seed: &Seed) -> Vec<u8> {
    seed.blocks
        .iter()
        .flat_map(Block::words)
        .flat_map(u32::to_le_bytes)
        .collect()
}

/// Independent generator for mutant `round` of the seed with id `seed_id`.
///
/// Derived by hashing, so the stream does not depend on how many other
/// seeds or rounds are processed or in which order.
pub fn mutant_rng(rng_seed: u64, seed_id: &str, round: u32) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(rng_seed.to_le_bytes());
    h.update(seed_id.as_bytes());
    h.update(round.to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptPolarity {
    /// Accept a mutant when block similarity < T.
    #[default]
    BelowThreshold,
    /// Accept a mutant when block similarity >= T.
    AboveThreshold,
}

impl AcceptPolarity {
    pub fn accepts(self, similarity: f64, threshold: f64) -> bool {
        match self {
            AcceptPolarity::BelowThreshold => similarity < threshold,
            AcceptPolarity::AboveThreshold => similarity >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MutationConfig {
    pub threshold: f64,
    pub retries: u32,
    pub mutations_per_instruction_max: u32,
    pub rng_seed: u64,
    pub operator_weights: OperatorWeights,
    pub accept_polarity: AcceptPolarity,
    /// Restrict operator outputs to instructions the built-in interpreter
    /// executes.
    pub executable_only: bool,
}

impl Default for MutationConfig {
    fn default() -> Self {
        MutationConfig {
            threshold: 0.5,
            retries: 10,
            mutations_per_instruction_max: 4,
            rng_seed: 0,
            operator_weights: OperatorWeights::default(),
            accept_polarity: AcceptPolarity::BelowThreshold,
            executable_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MutationConfigError {
    #[error("threshold {0} is outside [0, 1]")]
    Threshold(f64),
    #[error("mutations_per_instruction_max must be positive")]
    ZeroMutations,
    #[error("operator weights must be nonnegative and not all zero")]
    OperatorWeights,
}

impl MutationConfig {
    pub fn validate(&self) -> Result<(), MutationConfigError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(MutationConfigError::Threshold(self.threshold));
        }
        if self.mutations_per_instruction_max == 0 {
            return Err(MutationConfigError::ZeroMutations);
        }
        if !self.operator_weights.is_valid() {
            return Err(MutationConfigError::OperatorWeights);
        }
        Ok(())
    }
}

/// One instruction replaced inside a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorTrace {
    /// Position within the block body.
    pub position: usize,
    pub operator: Operator,
    pub before: u32,
    pub after: u32,
}

/// Mutates between 1 and `mutations_per_instruction_max` body instructions.
/// Terminator and opaque entries are copied unchanged.
pub fn block_mutation<R: Rng>(
    block: &Block,
    cfg: &MutationConfig,
    rng: &mut R,
) -> (Block, Vec<OperatorTrace>) {
    let positions = block.mutable_positions();
    let limit = positions
        .len()
        .min(cfg.mutations_per_instruction_max as usize);
    if limit == 0 {
        return (block.clone(), Vec::new());
    }
    let k = rng.gen_range(1..=limit);
    let mut chosen: Vec<usize> = index::sample(rng, positions.len(), k)
        .into_iter()
        .map(|i| positions[i])
        .collect();
    chosen.sort_unstable();

    let mut out = block.clone();
    let mut trace = Vec::with_capacity(k);
    for position in chosen {
        let Entry::Inst(inst) = block.body[position] else {
            unreachable!("mutable positions hold instructions")
        };
        let Mutated {
            inst: new,
            operator,
        } = mutate_instruction(&inst, cfg, rng);
        out.body[position] = Entry::Inst(new);
        trace.push(OperatorTrace {
            position,
            operator,
            before: inst.word,
            after: new.word,
        });
    }
    (out, trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub index: usize,
    pub attempts: u32,
    pub accepted: bool,
    /// Similarity of the accepted mutant, or of the last rejected one.
    pub similarity: Option<f64>,
    pub changed: bool,
    pub operators: Vec<OperatorTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationReport {
    pub seed_id: String,
    pub mutant_id: String,
    pub blocks: Vec<BlockReport>,
    pub blocks_changed: usize,
    pub blocks_total: usize,
}

/// Similarity-guided mutation of one seed.
///
/// Each block gets up to `cfg.retries` attempts; the first mutant whose
/// block similarity satisfies the acceptance predicate replaces the block,
/// otherwise the original block is kept.
pub fn mutate_seed<R: Rng>(
    seed: &Seed,
    cfg: &MutationConfig,
    simcfg: &SimilarityConfig,
    rng: &mut R,
) -> (Seed, MutationReport) {
    let mut blocks = Vec::with_capacity(seed.blocks.len());
    let mut reports = Vec::with_capacity(seed.blocks.len());
    for (index, original) in seed.blocks.iter().enumerate() {
        let mut report = BlockReport {
            index,
            attempts: 0,
            accepted: false,
            similarity: None,
            changed: false,
            operators: Vec::new(),
        };
        let mut current = original.clone();
        if !original.is_empty() {
            for _ in 0..cfg.retries {
                report.attempts += 1;
                let (candidate, trace) = block_mutation(original, cfg, rng);
                let sim = block_similarity(original, &candidate, simcfg).expect("non-empty blocks");
                report.similarity = Some(sim);
                if cfg.accept_polarity.accepts(sim, cfg.threshold) {
                    report.accepted = true;
                    report.changed = candidate != *original;
                    report.operators = trace;
                    current = candidate;
                    break;
                }
            }
        }
        blocks.push(current);
        reports.push(report);
    }

    let mut mutant = Seed::from_blocks(blocks);
    mutant.meta = seed.meta.clone();
    let report = MutationReport {
        seed_id: seed.id.clone(),
        mutant_id: mutant.id.clone(),
        blocks_changed: reports.iter().filter(|r| r.changed).count(),
        blocks_total: reports.len(),
        blocks: reports,
    };
    (mutant, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{assemble, decode, Operands};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn word(m: &str, ops: Operands) -> u32 {
        assemble(m, ops).unwrap().word
    }

    fn add() -> u32 {
        word("add", Operands::rrr(1, 2, 3))
    }

    fn stream(words: &[u32]) -> DecodedStream {
        DecodedStream::from_words(words.iter().copied())
    }

    fn beq() -> u32 {
        word("beq", Operands::ssi(1, 2, 8))
    }

    fn jal() -> u32 {
        word("jal", Operands::ri(1, 16))
    }

    #[test]
    fn segments_at_ctis() {
        let seed = segment_seed(&stream(&[add(), add(), beq(), add(), jal()]));
        assert_eq!(seed.blocks.len(), 2);
        assert_eq!(seed.blocks[0].body.len(), 2);
        assert_eq!(seed.blocks[0].terminator.unwrap().mnemonic(), "beq");
        assert_eq!(seed.blocks[0].start_offset, 0);
        assert_eq!(seed.blocks[1].body.len(), 1);
        assert_eq!(seed.blocks[1].terminator.unwrap().mnemonic(), "jal");
        assert_eq!(seed.blocks[1].start_offset, 12);
    }

    #[test]
    fn trailing_block_has_no_terminator() {
        let seed = segment_seed(&stream(&[add(), add()]));
        assert_eq!(seed.blocks.len(), 1);
        assert!(seed.blocks[0].terminator.is_none());
    }

    #[test]
    fn lone_cti_block() {
        let seed = segment_seed(&stream(&[jal()]));
        assert_eq!(seed.blocks.len(), 1);
        assert!(seed.blocks[0].body.is_empty());
        assert_eq!(seed.blocks[0].len(), 1);
    }

    #[test]
    fn empty_stream_has_no_blocks() {
        let seed = segment_seed(&DecodedStream::default());
        assert!(seed.blocks.is_empty());
        assert!(reassemble(&seed).is_empty());
    }

    #[test]
    fn opaque_words_are_block_content() {
        let seed = segment_seed(&stream(&[0, add(), 0xffff_ffff, beq()]));
        assert_eq!(seed.blocks.len(), 1);
        assert_eq!(seed.blocks[0].body.len(), 3);
        assert_eq!(seed.blocks[0].mutable_positions(), vec![1]);
    }

    #[test]
    fn block_mutation_preserves_terminator_and_opaque() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = MutationConfig::default();
        let seed = segment_seed(&stream(&[add(), 0xdead_0000, add(), add(), beq()]));
        let block = &seed.blocks[0];
        for _ in 0..200 {
            let (out, trace) = block_mutation(block, &cfg, &mut rng);
            assert_eq!(out.len(), block.len());
            assert_eq!(out.terminator, block.terminator);
            assert_eq!(out.body[1], Entry::Opaque(0xdead_0000));
            assert!(!trace.is_empty() && trace.len() <= 3);
            for t in &trace {
                assert_eq!(out.body[t.position].word(), t.after);
            }
        }
    }

    #[test]
    fn all_opaque_body_is_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let seed = segment_seed(&stream(&[0, 4, beq()]));
        let (out, trace) = block_mutation(&seed.blocks[0], &MutationConfig::default(), &mut rng);
        assert_eq!(out, seed.blocks[0]);
        assert!(trace.is_empty());
    }

    #[test]
    fn zero_retries_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = MutationConfig {
            retries: 0,
            ..MutationConfig::default()
        };
        let seed = segment_seed(&stream(&[add(), add(), beq(), add()]));
        let (out, report) = mutate_seed(&seed, &cfg, &SimilarityConfig::default(), &mut rng);
        assert_eq!(reassemble(&out), reassemble(&seed));
        assert_eq!(out.id, seed.id);
        assert_eq!(report.blocks_changed, 0);
        assert!(report.blocks.iter().all(|b| b.attempts == 0));
    }

    #[test]
    fn accepted_blocks_satisfy_predicate() {
        let simcfg = SimilarityConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let words: Vec<u32> = (0..6)
            .map(|i| word("addi", Operands::rri(i + 1, i, i as i64)))
            .chain([beq()])
            .chain((0..3).map(|_| add()))
            .collect();
        let seed = segment_seed(&stream(&words));
        for polarity in [
            AcceptPolarity::BelowThreshold,
            AcceptPolarity::AboveThreshold,
        ] {
            let cfg = MutationConfig {
                accept_polarity: polarity,
                ..MutationConfig::default()
            };
            for _ in 0..50 {
                let (out, report) = mutate_seed(&seed, &cfg, &simcfg, &mut rng);
                assert_eq!(out.terminator_words(), seed.terminator_words());
                for b in &report.blocks {
                    assert!(b.attempts <= cfg.retries);
                    if b.accepted {
                        let sim =
                            block_similarity(&seed.blocks[b.index], &out.blocks[b.index], &simcfg)
                                .unwrap();
                        assert!(polarity.accepts(sim, cfg.threshold));
                        assert_eq!(Some(sim), b.similarity);
                    } else {
                        assert_eq!(out.blocks[b.index], seed.blocks[b.index]);
                    }
                }
            }
        }
    }

    #[test]
    fn mutation_is_deterministic() {
        let simcfg = SimilarityConfig::default();
        let cfg = MutationConfig::default();
        let seed = segment_seed(&stream(&[add(), add(), add(), beq(), add(), add()]));
        let run = |s: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            reassemble(&mutate_seed(&seed, &cfg, &simcfg, &mut rng).0)
        };
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn config_validation() {
        assert!(MutationConfig::default().validate().is_ok());
        let bad = MutationConfig {
            threshold: 1.5,
            ..MutationConfig::default()
        };
        assert_eq!(bad.validate(), Err(MutationConfigError::Threshold(1.5)));
        let bad = MutationConfig {
            mutations_per_instruction_max: 0,
            ..MutationConfig::default()
        };
        assert_eq!(bad.validate(), Err(MutationConfigError::ZeroMutations));
    }

    #[test]
    fn decoded_terminators_match_words() {
        let seed = segment_seed(&stream(&[add(), beq()]));
        let t = seed.blocks[0].terminator.unwrap();
        assert_eq!(decode(t.word), Some(t));
    }
}
