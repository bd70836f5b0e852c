//! RISC-V RV64G instruction model: bit-exact decode/encode of the six
//! 32-bit formats plus opcode-class and execution-unit classification.

mod disasm;
mod stream;
pub mod table;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use disasm::disasm;
pub use stream::{decode_stream, parse_hex_text, to_hex_text, DecodedStream, StreamError};
pub use table::OpSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Format {
    R,
    I,
    S,
    B,
    U,
    J,
}

impl Format {
    pub const ALL: [Format; 6] = [
        Format::R,
        Format::I,
        Format::S,
        Format::B,
        Format::U,
        Format::J,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Major opcode groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum OpClass {
    Load,
    Store,
    OpImm,
    Op,
    OpImm32,
    Op32,
    Branch,
    Jal,
    Jalr,
    Lui,
    Auipc,
    System,
    MiscMem,
    Amo,
    LoadFp,
    StoreFp,
    FpOp,
    #[serde(rename = "FMA-family")]
    Fma,
}

impl OpClass {
    pub const ALL: [OpClass; 18] = [
        OpClass::Load,
        OpClass::Store,
        OpClass::OpImm,
        OpClass::Op,
        OpClass::OpImm32,
        OpClass::Op32,
        OpClass::Branch,
        OpClass::Jal,
        OpClass::Jalr,
        OpClass::Lui,
        OpClass::Auipc,
        OpClass::System,
        OpClass::MiscMem,
        OpClass::Amo,
        OpClass::LoadFp,
        OpClass::StoreFp,
        OpClass::FpOp,
        OpClass::Fma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpClass::Load => "LOAD",
            OpClass::Store => "STORE",
            OpClass::OpImm => "OP-IMM",
            OpClass::Op => "OP",
            OpClass::OpImm32 => "OP-IMM-32",
            OpClass::Op32 => "OP-32",
            OpClass::Branch => "BRANCH",
            OpClass::Jal => "JAL",
            OpClass::Jalr => "JALR",
            OpClass::Lui => "LUI",
            OpClass::Auipc => "AUIPC",
            OpClass::System => "SYSTEM",
            OpClass::MiscMem => "MISC-MEM",
            OpClass::Amo => "AMO",
            OpClass::LoadFp => "LOAD-FP",
            OpClass::StoreFp => "STORE-FP",
            OpClass::FpOp => "FP-OP",
            OpClass::Fma => "FMA-family",
        }
    }
}

/// Primary execution unit an instruction is dispatched to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Unit {
    Alu,
    MulDiv,
    Lsu,
    Bru,
    Fpu,
    SysCsr,
}

impl Unit {
    pub const ALL: [Unit; 6] = [
        Unit::Alu,
        Unit::MulDiv,
        Unit::Lsu,
        Unit::Bru,
        Unit::Fpu,
        Unit::SysCsr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Unit::Alu => "ALU",
            Unit::MulDiv => "MULDIV",
            Unit::Lsu => "LSU",
            Unit::Bru => "BRU",
            Unit::Fpu => "FPU",
            Unit::SysCsr => "SYSCSR",
        }
    }
}

/// Operation kind within an execution unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    AddSub,
    Logic,
    Shift,
    Compare,
    LuiAuipc,
    Mul,
    Div,
    Rem,
    Load,
    Store,
    Amo,
    Fence,
    Branch,
    Jump,
    FpArith,
    FpFma,
    FpSignInject,
    FpMinMax,
    FpCompare,
    FpConvert,
    FpMove,
    FpClassify,
    Csr,
    Env,
    Ret,
}

/// Index into the static instruction table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpId(u16);

impl OpId {
    pub fn spec(self) -> &'static OpSpec {
        &table::OPS[self.0 as usize]
    }

    pub fn from_mnemonic(mnemonic: &str) -> Option<OpId> {
        table::by_mnemonic(mnemonic).map(OpId)
    }

    pub fn all() -> impl Iterator<Item = OpId> {
        (0..table::OPS.len() as u16).map(OpId)
    }
}

/// A decoded 32-bit instruction.
///
/// Optional fields are present exactly when the instruction's format
/// defines them. FMA encodings carry `funct2` and `rs3` in place of
/// `funct7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub word: u32,
    pub format: Format,
    pub opcode: u8,
    pub funct3: Option<u8>,
    pub funct7: Option<u8>,
    pub funct2: Option<u8>,
    pub rd: Option<u8>,
    pub rs1: Option<u8>,
    pub rs2: Option<u8>,
    pub rs3: Option<u8>,
    pub imm: Option<i64>,
    pub opclass: OpClass,
    pub unit: Unit,
    pub opkind: OpKind,
    pub op: OpId,
}

impl Instruction {
    pub fn mnemonic(&self) -> &'static str {
        self.op.spec().mnemonic
    }

    pub fn is_cti(&self) -> bool {
        is_cti(self)
    }
}

/// One 32-bit slot of a test case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Entry {
    Inst(Instruction),
    /// Unsupported or non-32-bit encoding, carried verbatim.
    Opaque(u32),
}

impl Entry {
    pub fn from_word(word: u32) -> Entry {
        match decode(word) {
            Some(inst) => Entry::Inst(inst),
            None => Entry::Opaque(word),
        }
    }

    pub fn word(&self) -> u32 {
        match self {
            Entry::Inst(inst) => inst.word,
            Entry::Opaque(word) => *word,
        }
    }

    pub fn as_inst(&self) -> Option<&Instruction> {
        match self {
            Entry::Inst(inst) => Some(inst),
            Entry::Opaque(_) => None,
        }
    }

    pub fn is_cti(&self) -> bool {
        self.as_inst().is_some_and(is_cti)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("immediate {imm} out of range for {format:?}-type encoding")]
    ImmOutOfRange { format: Format, imm: i64 },
    #[error("{format:?}-type encoding requires field `{field}`")]
    MissingField { format: Format, field: &'static str },
    #[error("field `{field}` value {value} does not fit in {bits} bits")]
    FieldOutOfRange {
        field: &'static str,
        value: u32,
        bits: u32,
    },
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("operands do not form a valid `{0}` encoding")]
    InvalidEncoding(&'static str),
}

#[inline]
fn bits(word: u32, hi: u32, lo: u32) -> u32 {
    (word >> lo) & ((1u32 << (hi - lo + 1)) - 1)
}

#[inline]
fn sign_extend(value: u32, width: u32) -> i64 {
    let shift = 64 - width;
    ((value as i64) << shift) >> shift
}

/// Reassembles the format-specific immediate, sign-extended to 64 bits.
pub fn decode_imm(word: u32, format: Format) -> Option<i64> {
    match format {
        Format::R => None,
        Format::I => Some(sign_extend(bits(word, 31, 20), 12)),
        Format::S => Some(sign_extend(bits(word, 31, 25) << 5 | bits(word, 11, 7), 12)),
        Format::B => Some(sign_extend(
            bits(word, 31, 31) << 12
                | bits(word, 7, 7) << 11
                | bits(word, 30, 25) << 5
                | bits(word, 11, 8) << 1,
            13,
        )),
        Format::U => Some((word & 0xffff_f000) as i32 as i64),
        Format::J => Some(sign_extend(
            bits(word, 31, 31) << 20
                | bits(word, 19, 12) << 12
                | bits(word, 20, 20) << 11
                | bits(word, 30, 21) << 1,
            21,
        )),
    }
}

/// Decodes one word; `None` means the word is Opaque.
pub fn decode(word: u32) -> Option<Instruction> {
    let op = OpId(table::lookup(word)?);
    let spec = op.spec();
    let format = spec.format;
    let rd = Some(bits(word, 11, 7) as u8);
    let rs1 = Some(bits(word, 19, 15) as u8);
    let rs2 = Some(bits(word, 24, 20) as u8);
    let funct3 = Some(bits(word, 14, 12) as u8);
    let fma = spec.opclass == OpClass::Fma;

    let mut inst = Instruction {
        word,
        format,
        opcode: (word & 0x7f) as u8,
        funct3: None,
        funct7: None,
        funct2: None,
        rd: None,
        rs1: None,
        rs2: None,
        rs3: None,
        imm: decode_imm(word, format),
        opclass: spec.opclass,
        unit: spec.unit,
        opkind: spec.opkind,
        op,
    };
    match format {
        Format::R => {
            inst.rd = rd;
            inst.rs1 = rs1;
            inst.rs2 = rs2;
            inst.funct3 = funct3;
            if fma {
                inst.funct2 = Some(bits(word, 26, 25) as u8);
                inst.rs3 = Some(bits(word, 31, 27) as u8);
            } else {
                inst.funct7 = Some(bits(word, 31, 25) as u8);
            }
        }
        Format::I => {
            inst.rd = rd;
            inst.rs1 = rs1;
            inst.funct3 = funct3;
        }
        Format::S | Format::B => {
            inst.rs1 = rs1;
            inst.rs2 = rs2;
            inst.funct3 = funct3;
        }
        Format::U | Format::J => {
            inst.rd = rd;
        }
    }
    Some(inst)
}

fn require<T>(value: Option<T>, format: Format, field: &'static str) -> Result<T, EncodeError> {
    value.ok_or(EncodeError::MissingField { format, field })
}

fn field(value: u8, bits: u32, name: &'static str) -> Result<u32, EncodeError> {
    let value = value as u32;
    if value >> bits != 0 {
        return Err(EncodeError::FieldOutOfRange {
            field: name,
            value,
            bits,
        });
    }
    Ok(value)
}

fn reg(value: Option<u8>, format: Format, name: &'static str) -> Result<u32, EncodeError> {
    field(require(value, format, name)?, 5, name)
}

/// Packs the instruction's fields back into a word.
///
/// Only the structural fields (opcode, funct*, registers, imm) are read;
/// `word`, `opclass`, `unit` and `opkind` are ignored.
pub fn encode(inst: &Instruction) -> Result<u32, EncodeError> {
    let format = inst.format;
    let opcode = field(inst.opcode, 7, "opcode")?;
    let out_of_range = |imm: i64| EncodeError::ImmOutOfRange { format, imm };
    let word = match format {
        Format::R => {
            let rd = reg(inst.rd, format, "rd")?;
            let rs1 = reg(inst.rs1, format, "rs1")?;
            let rs2 = reg(inst.rs2, format, "rs2")?;
            let funct3 = field(require(inst.funct3, format, "funct3")?, 3, "funct3")?;
            let top = match inst.funct2 {
                Some(funct2) => reg(inst.rs3, format, "rs3")? << 2 | field(funct2, 2, "funct2")?,
                None => field(require(inst.funct7, format, "funct7")?, 7, "funct7")?,
            };
            top << 25 | rs2 << 20 | rs1 << 15 | funct3 << 12 | rd << 7 | opcode
        }
        Format::I => {
            let rd = reg(inst.rd, format, "rd")?;
            let rs1 = reg(inst.rs1, format, "rs1")?;
            let funct3 = field(require(inst.funct3, format, "funct3")?, 3, "funct3")?;
            let imm = require(inst.imm, format, "imm")?;
            if !(-2048..=2047).contains(&imm) {
                return Err(out_of_range(imm));
            }
            (imm as u32 & 0xfff) << 20 | rs1 << 15 | funct3 << 12 | rd << 7 | opcode
        }
        Format::S => {
            let rs1 = reg(inst.rs1, format, "rs1")?;
            let rs2 = reg(inst.rs2, format, "rs2")?;
            let funct3 = field(require(inst.funct3, format, "funct3")?, 3, "funct3")?;
            let imm = require(inst.imm, format, "imm")?;
            if !(-2048..=2047).contains(&imm) {
                return Err(out_of_range(imm));
            }
            let imm = imm as u32;
            bits(imm, 11, 5) << 25
                | rs2 << 20
                | rs1 << 15
                | funct3 << 12
                | bits(imm, 4, 0) << 7
                | opcode
        }
        Format::B => {
            let rs1 = reg(inst.rs1, format, "rs1")?;
            let rs2 = reg(inst.rs2, format, "rs2")?;
            let funct3 = field(require(inst.funct3, format, "funct3")?, 3, "funct3")?;
            let imm = require(inst.imm, format, "imm")?;
            if !(-4096..=4094).contains(&imm) || imm % 2 != 0 {
                return Err(out_of_range(imm));
            }
            let imm = imm as u32;
            bits(imm, 12, 12) << 31
                | bits(imm, 10, 5) << 25
                | rs2 << 20
                | rs1 << 15
                | funct3 << 12
                | bits(imm, 4, 1) << 8
                | bits(imm, 11, 11) << 7
                | opcode
        }
        Format::U => {
            let rd = reg(inst.rd, format, "rd")?;
            let imm = require(inst.imm, format, "imm")?;
            if imm & 0xfff != 0 || imm < i32::MIN as i64 || imm > i32::MAX as i64 {
                return Err(out_of_range(imm));
            }
            (imm as u32 & 0xffff_f000) | rd << 7 | opcode
        }
        Format::J => {
            let rd = reg(inst.rd, format, "rd")?;
            let imm = require(inst.imm, format, "imm")?;
            if !(-(1 << 20)..(1 << 20)).contains(&imm) || imm % 2 != 0 {
                return Err(out_of_range(imm));
            }
            let imm = imm as u32;
            bits(imm, 20, 20) << 31
                | bits(imm, 10, 1) << 21
                | bits(imm, 11, 11) << 20
                | bits(imm, 19, 12) << 12
                | rd << 7
                | opcode
        }
    };
    Ok(word)
}

/// True for branches, jumps and the environment/return instructions that
/// end a block.
pub fn is_cti(inst: &Instruction) -> bool {
    matches!(inst.opclass, OpClass::Branch | OpClass::Jal | OpClass::Jalr)
        || matches!(inst.opkind, OpKind::Env | OpKind::Ret)
}

/// Register and immediate operands used by [`assemble`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Operands {
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub rs3: u8,
    pub imm: i64,
    /// Rounding mode for FP entries; defaults to dynamic (0b111).
    pub rm: Option<u8>,
}

impl Operands {
    pub fn rrr(rd: u8, rs1: u8, rs2: u8) -> Self {
        Operands {
            rd,
            rs1,
            rs2,
            ..Default::default()
        }
    }

    pub fn rri(rd: u8, rs1: u8, imm: i64) -> Self {
        Operands {
            rd,
            rs1,
            imm,
            ..Default::default()
        }
    }

    /// Store/branch shape: two sources and an offset.
    pub fn ssi(rs1: u8, rs2: u8, imm: i64) -> Self {
        Operands {
            rs1,
            rs2,
            imm,
            ..Default::default()
        }
    }

    pub fn ri(rd: u8, imm: i64) -> Self {
        Operands {
            rd,
            imm,
            ..Default::default()
        }
    }
}

/// Builds an instruction from a mnemonic and operands.
///
/// Operand positions the mnemonic fixes (e.g. rs2 of `fsqrt.s`, the upper
/// immediate bits of `srai`) are taken from the table, except that shift
/// amounts are passed as the plain shamt in `imm`.
pub fn assemble(mnemonic: &str, ops: Operands) -> Result<Instruction, EncodeError> {
    let op = OpId::from_mnemonic(mnemonic)
        .ok_or_else(|| EncodeError::UnknownMnemonic(mnemonic.to_string()))?;
    let spec = op.spec();
    let funct3 = match (spec.rounding, ops.rm) {
        (true, rm) => Some(rm.unwrap_or(0b111)),
        (false, _) => Some(((spec.matches >> 12) & 0b111) as u8),
    };
    let imm = match spec.opkind {
        // Shift-immediates: merge shamt with the fixed upper bits.
        OpKind::Shift if spec.format == Format::I => {
            let fixed = decode_imm(spec.matches, Format::I).unwrap_or(0);
            let shamt_bits = if spec.opclass == OpClass::OpImm32 {
                5
            } else {
                6
            };
            if ops.imm < 0 || ops.imm >= 1 << shamt_bits {
                return Err(EncodeError::ImmOutOfRange {
                    format: Format::I,
                    imm: ops.imm,
                });
            }
            fixed | ops.imm
        }
        _ => ops.imm,
    };
    let draft = Instruction {
        word: 0,
        format: spec.format,
        opcode: spec.opcode(),
        funct3,
        funct7: Some(((spec.matches >> 25) & 0x7f) as u8),
        funct2: (spec.opclass == OpClass::Fma).then_some(((spec.matches >> 25) & 0b11) as u8),
        rd: Some(ops.rd),
        rs1: Some(ops.rs1),
        rs2: Some(ops.rs2),
        rs3: Some(ops.rs3),
        imm: Some(imm),
        opclass: spec.opclass,
        unit: spec.unit,
        opkind: spec.opkind,
        op,
    };
    let packed = encode(&draft)?;
    // Force the bits the mnemonic fixes, then confirm the table agrees.
    let word = (packed & !spec.mask) | spec.matches;
    match decode(word) {
        Some(inst) if inst.op == op => Ok(inst),
        _ => Err(EncodeError::InvalidEncoding(spec.mnemonic)),
    }
}
