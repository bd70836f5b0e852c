//! Four-component instruction similarity (type, opcode, sub-semantic,
//! field) and the block similarity used to accept or reject mutations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{Entry, Format, Instruction, OpClass};
use crate::mutation::Block;

/// Per-field weights for the field-level component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldWeights {
    pub funct3: f64,
    pub funct7: f64,
    pub funct2: f64,
    pub operands: f64,
}

impl Default for FieldWeights {
    fn default() -> Self {
        FieldWeights {
            funct3: 0.3,
            funct7: 0.15,
            funct2: 0.05,
            operands: 0.5,
        }
    }
}

impl FieldWeights {
    fn sum(&self) -> f64 {
        self.funct3 + self.funct7 + self.funct2 + self.operands
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimilarityConfig {
    pub w_tp: f64,
    pub w_op: f64,
    pub w_sm: f64,
    pub w_f: f64,
    pub field_weights: FieldWeights,
    pub opcode_same_category: f64,
    pub opcode_unrelated: f64,
    pub unit_same_base: f64,
    pub opkind_match_bonus: f64,
    pub unit_different: f64,
    /// Rows and columns in R, I, S, B, U, J order.
    pub format_overlap_table: [[f64; 6]; 6],
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            w_tp: 0.2,
            w_op: 0.3,
            w_sm: 0.3,
            w_f: 0.2,
            field_weights: FieldWeights::default(),
            opcode_same_category: 0.5,
            opcode_unrelated: 0.1,
            unit_same_base: 0.6,
            opkind_match_bonus: 0.4,
            unit_different: 0.1,
            format_overlap_table: layout_overlap_table(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("`{name}` = {value} is outside [0, 1]")]
    OutOfUnitRange { name: String, value: f64 },
    #[error("{what} sum to {sum}, expected 1")]
    WeightsDoNotSumToOne { what: &'static str, sum: f64 },
    #[error("format_overlap_table must be symmetric with unit diagonal (entry [{row}][{col}])")]
    BadOverlapTable { row: usize, col: usize },
    #[error("unit_same_base + opkind_match_bonus = {0} exceeds 1")]
    UnitScalarsExceedOne(f64),
}

const SUM_TOLERANCE: f64 = 1e-9;

impl SimilarityConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fw = &self.field_weights;
        let scalars = [
            ("w_tp", self.w_tp),
            ("w_op", self.w_op),
            ("w_sm", self.w_sm),
            ("w_f", self.w_f),
            ("field_weights.funct3", fw.funct3),
            ("field_weights.funct7", fw.funct7),
            ("field_weights.funct2", fw.funct2),
            ("field_weights.operands", fw.operands),
            ("opcode_same_category", self.opcode_same_category),
            ("opcode_unrelated", self.opcode_unrelated),
            ("unit_same_base", self.unit_same_base),
            ("opkind_match_bonus", self.opkind_match_bonus),
            ("unit_different", self.unit_different),
        ];
        for (name, value) in scalars {
            check_unit(name, value)?;
        }
        for (row, values) in self.format_overlap_table.iter().enumerate() {
            for (col, &value) in values.iter().enumerate() {
                check_unit(&format!("format_overlap_table[{row}][{col}]"), value)?;
                let mirrored = self.format_overlap_table[col][row];
                if (row == col && value != 1.0) || value != mirrored {
                    return Err(ConfigError::BadOverlapTable { row, col });
                }
            }
        }
        let sum = self.component_weight_sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(ConfigError::WeightsDoNotSumToOne {
                what: "w_tp + w_op + w_sm + w_f",
                sum,
            });
        }
        let sum = fw.sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(ConfigError::WeightsDoNotSumToOne {
                what: "field_weights",
                sum,
            });
        }
        let combined = self.unit_same_base + self.opkind_match_bonus;
        if combined > 1.0 + SUM_TOLERANCE {
            return Err(ConfigError::UnitScalarsExceedOne(combined));
        }
        Ok(())
    }

    fn component_weight_sum(&self) -> f64 {
        self.w_tp + self.w_op + self.w_sm + self.w_f
    }
}

fn check_unit(name: &str, value: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ConfigError::OutOfUnitRange {
            name: name.to_string(),
            value,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Funct7,
    Rs2,
    Rs1,
    Funct3,
    Rd,
    Imm,
}

/// Role of each bit 31..=7 (index 0 is bit 31) in a format's layout.
fn role_layout(format: Format) -> [Role; 25] {
    use Role::*;
    let mut layout = [Imm; 25];
    let mut fill = |hi: usize, lo: usize, role: Role| {
        for bit in lo..=hi {
            layout[31 - bit] = role;
        }
    };
    match format {
        Format::R => {
            fill(31, 25, Funct7);
            fill(24, 20, Rs2);
            fill(19, 15, Rs1);
            fill(14, 12, Funct3);
            fill(11, 7, Rd);
        }
        Format::I => {
            fill(31, 20, Imm);
            fill(19, 15, Rs1);
            fill(14, 12, Funct3);
            fill(11, 7, Rd);
        }
        Format::S | Format::B => {
            fill(31, 25, Imm);
            fill(24, 20, Rs2);
            fill(19, 15, Rs1);
            fill(14, 12, Funct3);
            fill(11, 7, Imm);
        }
        Format::U | Format::J => {
            fill(31, 12, Imm);
            fill(11, 7, Rd);
        }
    }
    layout
}

/// Fraction of bits 31..7 whose field role agrees between two layouts.
pub fn layout_overlap(a: Format, b: Format) -> f64 {
    let (la, lb) = (role_layout(a), role_layout(b));
    let same = la.iter().zip(&lb).filter(|(x, y)| x == y).count();
    same as f64 / 25.0
}

pub fn layout_overlap_table() -> [[f64; 6]; 6] {
    let mut table = [[0.0; 6]; 6];
    for a in Format::ALL {
        for b in Format::ALL {
            table[a.index()][b.index()] = layout_overlap(a, b);
        }
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Category {
    Arithmetic,
    Memory,
    Control,
    Floating,
    System,
}

fn category(class: OpClass) -> Category {
    use OpClass::*;
    match class {
        Op | OpImm | Op32 | OpImm32 | Lui | Auipc => Category::Arithmetic,
        Load | Store | LoadFp | StoreFp | Amo | MiscMem => Category::Memory,
        Branch | Jal | Jalr => Category::Control,
        FpOp | Fma => Category::Floating,
        System => Category::System,
    }
}

pub fn type_similarity(a: &Instruction, b: &Instruction, cfg: &SimilarityConfig) -> f64 {
    cfg.format_overlap_table[a.format.index()][b.format.index()]
}

pub fn opcode_similarity(a: &Instruction, b: &Instruction, cfg: &SimilarityConfig) -> f64 {
    if a.opcode == b.opcode {
        1.0
    } else if category(a.opclass) == category(b.opclass) {
        cfg.opcode_same_category
    } else {
        cfg.opcode_unrelated
    }
}

pub fn subsemantic_similarity(a: &Instruction, b: &Instruction, cfg: &SimilarityConfig) -> f64 {
    if a.unit != b.unit {
        cfg.unit_different
    } else if a.opkind == b.opkind {
        cfg.unit_same_base + cfg.opkind_match_bonus
    } else {
        cfg.unit_same_base
    }
}

/// Hamming distance between two `width`-bit values, divided by `width`.
fn normalized_hamming(x: u64, y: u64, width: u32) -> f64 {
    ((x ^ y).count_ones()) as f64 / width as f64
}

/// Registers both instructions define, concatenated as rd||rs1||rs2.
fn shared_operands(a: &Instruction, b: &Instruction) -> Option<(u64, u64, u32)> {
    let mut bits_a = 0u64;
    let mut bits_b = 0u64;
    let mut width = 0;
    for (ra, rb) in [(a.rd, b.rd), (a.rs1, b.rs1), (a.rs2, b.rs2)] {
        if let (Some(ra), Some(rb)) = (ra, rb) {
            bits_a = bits_a << 5 | ra as u64;
            bits_b = bits_b << 5 | rb as u64;
            width += 5;
        }
    }
    (width > 0).then_some((bits_a, bits_b, width))
}

/// Weighted field agreement over the fields both instructions define,
/// with weights renormalized over that shared subset.
pub fn field_similarity(a: &Instruction, b: &Instruction, cfg: &SimilarityConfig) -> f64 {
    let fw = &cfg.field_weights;
    let mut terms: [Option<(f64, f64)>; 4] = [None; 4];
    if let (Some(x), Some(y)) = (a.funct3, b.funct3) {
        terms[0] = Some((fw.funct3, normalized_hamming(x as u64, y as u64, 3)));
    }
    if let (Some(x), Some(y)) = (a.funct7, b.funct7) {
        terms[1] = Some((fw.funct7, normalized_hamming(x as u64, y as u64, 7)));
    }
    if let (Some(x), Some(y)) = (a.funct2, b.funct2) {
        terms[2] = Some((fw.funct2, normalized_hamming(x as u64, y as u64, 2)));
    }
    if let Some((x, y, width)) = shared_operands(a, b) {
        terms[3] = Some((fw.operands, normalized_hamming(x, y, width)));
    }

    let mut weighted = 0.0;
    let mut total = 0.0;
    for (weight, distance) in terms.into_iter().flatten() {
        weighted += weight * (1.0 - distance);
        total += weight;
    }
    if total > 0.0 {
        weighted / total
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    #[serde(rename = "type")]
    pub type_: f64,
    pub opcode: f64,
    pub subsemantic: f64,
    pub field: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub value: f64,
    pub breakdown: Breakdown,
}

impl SimilarityScore {
    /// Weighted combination of the four components under `cfg`.
    pub fn combine(breakdown: Breakdown, cfg: &SimilarityConfig) -> f64 {
        let weighted = cfg.w_tp * breakdown.type_
            + cfg.w_op * breakdown.opcode
            + cfg.w_sm * breakdown.subsemantic
            + cfg.w_f * breakdown.field;
        let total = cfg.component_weight_sum();
        if total > 0.0 {
            weighted / total
        } else {
            0.0
        }
    }
}

pub fn instruction_similarity(
    a: &Instruction,
    b: &Instruction,
    cfg: &SimilarityConfig,
) -> SimilarityScore {
    let breakdown = Breakdown {
        type_: type_similarity(a, b, cfg),
        opcode: opcode_similarity(a, b, cfg),
        subsemantic: subsemantic_similarity(a, b, cfg),
        field: field_similarity(a, b, cfg),
    };
    SimilarityScore {
        value: SimilarityScore::combine(breakdown, cfg),
        breakdown,
    }
}

/// Similarity of two stream entries; Opaque words only match themselves.
pub fn entry_similarity(a: &Entry, b: &Entry, cfg: &SimilarityConfig) -> f64 {
    match (a, b) {
        (Entry::Inst(x), Entry::Inst(y)) => instruction_similarity(x, y, cfg).value,
        _ if a.word() == b.word() => 1.0,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("block similarity is undefined for an empty block")]
pub struct EmptyBlock;

/// Mean, over the common prefix, of instruction similarity at positions
/// whose words differ. Identical blocks score 0.
pub fn block_similarity(b1: &Block, b2: &Block, cfg: &SimilarityConfig) -> Result<f64, EmptyBlock> {
    let size = b1.len().min(b2.len());
    if size == 0 {
        return Err(EmptyBlock);
    }
    let sim: f64 = b1
        .entries()
        .zip(b2.entries())
        .filter(|(x, y)| x.word() != y.word())
        .map(|(x, y)| entry_similarity(&x, &y, cfg))
        .sum();
    Ok(sim / size as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{assemble, decode, Operands};

    fn asm(m: &str, ops: Operands) -> Instruction {
        assemble(m, ops).unwrap()
    }

    fn add() -> Instruction {
        asm("add", Operands::rrr(1, 2, 3))
    }

    #[test]
    fn defaults_validate() {
        SimilarityConfig::default().validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut cfg = SimilarityConfig::default();
        cfg.w_tp = 0.3;
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::WeightsDoNotSumToOne { .. })
        ));

        let mut cfg = SimilarityConfig::default();
        cfg.field_weights.funct2 = 0.2;
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::WeightsDoNotSumToOne {
                what: "field_weights",
                ..
            })
        ));

        let mut cfg = SimilarityConfig::default();
        cfg.format_overlap_table[0][1] = 0.9;
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::BadOverlapTable { .. })
        ));

        let mut cfg = SimilarityConfig::default();
        cfg.opkind_match_bonus = 0.5;
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::UnitScalarsExceedOne(_))
        ));

        let mut cfg = SimilarityConfig::default();
        cfg.unit_different = -0.1;
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::OutOfUnitRange { .. })
        ));
    }

    #[test]
    fn type_similarity_examples() {
        let cfg = SimilarityConfig::default();
        let addi = asm("addi", Operands::rri(1, 2, 3));
        let lui = asm("lui", Operands::ri(1, 0x1000));
        let jal = asm("jal", Operands::ri(1, 8));
        assert_eq!(type_similarity(&add(), &add(), &cfg), 1.0);
        assert_eq!(type_similarity(&add(), &addi, &cfg), 13.0 / 25.0);
        assert_eq!(type_similarity(&lui, &jal, &cfg), 1.0);
    }

    #[test]
    fn opcode_similarity_examples() {
        let cfg = SimilarityConfig::default();
        let sub = asm("sub", Operands::rrr(1, 2, 3));
        let lw = asm("lw", Operands::rri(1, 2, 0));
        let sw = asm("sw", Operands::ssi(2, 1, 0));
        assert_eq!(opcode_similarity(&add(), &sub, &cfg), 1.0);
        assert_eq!(opcode_similarity(&lw, &sw, &cfg), 0.5);
        assert_eq!(opcode_similarity(&add(), &lw, &cfg), 0.1);
    }

    #[test]
    fn subsemantic_examples() {
        let cfg = SimilarityConfig::default();
        let addw = asm("addw", Operands::rrr(1, 2, 3));
        let and = asm("and", Operands::rrr(1, 2, 3));
        let lw = asm("lw", Operands::rri(1, 2, 0));
        assert_eq!(subsemantic_similarity(&add(), &addw, &cfg), 1.0);
        assert_eq!(subsemantic_similarity(&add(), &and, &cfg), 0.6);
        assert_eq!(subsemantic_similarity(&add(), &lw, &cfg), 0.1);
    }

    #[test]
    fn field_similarity_examples() {
        let cfg = SimilarityConfig::default();
        assert_eq!(field_similarity(&add(), &add(), &cfg), 1.0);

        // Only rs2 differs by one bit out of 15 operand bits.
        let other = asm("add", Operands::rrr(1, 2, 7));
        let w_operands = 0.5 / 0.95;
        let expected = 1.0 - w_operands / 15.0;
        assert!((field_similarity(&add(), &other, &cfg) - expected).abs() < 1e-12);

        // funct3 000 vs 001 on two I-type ALU ops with equal operands.
        let addi = asm("addi", Operands::rri(1, 2, 0));
        let slli = asm("slli", Operands::rri(1, 2, 0));
        let w3 = 0.3 / 0.8;
        let expected = w3 * (1.0 - 1.0 / 3.0) + (1.0 - w3);
        assert!((field_similarity(&addi, &slli, &cfg) - expected).abs() < 1e-12);
    }

    #[test]
    fn no_shared_fields_is_zero() {
        let cfg = SimilarityConfig::default();
        // U-type has no funct fields; S-type has no rd: nothing shared.
        let lui = asm("lui", Operands::ri(1, 0x1000));
        let sw = asm("sw", Operands::ssi(2, 1, 0));
        assert_eq!(field_similarity(&lui, &sw, &cfg), 0.0);
    }

    #[test]
    fn add_vs_sub_total() {
        let cfg = SimilarityConfig::default();
        let sub = asm("sub", Operands::rrr(1, 2, 3));
        let score = instruction_similarity(&add(), &sub, &cfg);
        assert_eq!(score.breakdown.type_, 1.0);
        assert_eq!(score.breakdown.opcode, 1.0);
        assert_eq!(score.breakdown.subsemantic, 1.0);
        assert!((score.breakdown.field - 130.0 / 133.0).abs() < 1e-12);
        assert!((score.value - 662.0 / 665.0).abs() < 1e-12);
    }

    #[test]
    fn opaque_similarity() {
        let cfg = SimilarityConfig::default();
        let nop = Entry::Inst(decode(0x13).unwrap());
        assert_eq!(
            entry_similarity(&Entry::Opaque(5), &Entry::Opaque(5), &cfg),
            1.0
        );
        assert_eq!(
            entry_similarity(&Entry::Opaque(5), &Entry::Opaque(6), &cfg),
            0.0
        );
        assert_eq!(entry_similarity(&Entry::Opaque(0), &nop, &cfg), 0.0);
    }
}
