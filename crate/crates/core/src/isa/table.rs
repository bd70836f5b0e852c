//! Mask/match table of every 32-bit encoding the decoder accepts.
//!
//! An entry matches a word when `word & mask == matches`. Bits outside the
//! mask are operand bits (registers, immediates, rounding modes, AMO
//! ordering flags) and may take any value, with one exception: entries with
//! `rounding` set require funct3 to be a defined rounding mode.

use once_cell::sync::Lazy;

use super::{Format, OpClass, OpKind, Unit};

pub const LOAD: u8 = 0x03;
pub const LOAD_FP: u8 = 0x07;
pub const MISC_MEM: u8 = 0x0f;
pub const OP_IMM: u8 = 0x13;
pub const AUIPC: u8 = 0x17;
pub const OP_IMM_32: u8 = 0x1b;
pub const STORE: u8 = 0x23;
pub const STORE_FP: u8 = 0x27;
pub const AMO: u8 = 0x2f;
pub const OP: u8 = 0x33;
pub const LUI: u8 = 0x37;
pub const OP_32: u8 = 0x3b;
pub const MADD: u8 = 0x43;
pub const MSUB: u8 = 0x47;
pub const NMSUB: u8 = 0x4b;
pub const NMADD: u8 = 0x4f;
pub const OP_FP: u8 = 0x53;
pub const BRANCH: u8 = 0x63;
pub const JALR: u8 = 0x67;
pub const JAL: u8 = 0x6f;
pub const SYSTEM: u8 = 0x73;

/// Static description of one mnemonic.
#[derive(Debug, PartialEq, Eq)]
pub struct OpSpec {
    pub mnemonic: &'static str,
    pub mask: u32,
    pub matches: u32,
    pub format: Format,
    pub opclass: OpClass,
    pub unit: Unit,
    pub opkind: OpKind,
    /// funct3 holds a floating-point rounding mode.
    pub rounding: bool,
}

impl OpSpec {
    pub fn opcode(&self) -> u8 {
        (self.matches & 0x7f) as u8
    }

    /// Bits the entry leaves free for operands.
    pub fn free_bits(&self) -> u32 {
        !self.mask
    }
}

/// Rounding modes 0b101 and 0b110 are reserved.
pub fn valid_rounding_mode(rm: u32) -> bool {
    !matches!(rm, 0b101 | 0b110)
}

const R_MASK: u32 = 0xfe00_707f;
const I_MASK: u32 = 0x0000_707f;
const U_MASK: u32 = 0x0000_007f;

const fn opclass_of(opcode: u8) -> OpClass {
    match opcode {
        LOAD => OpClass::Load,
        LOAD_FP => OpClass::LoadFp,
        MISC_MEM => OpClass::MiscMem,
        OP_IMM => OpClass::OpImm,
        AUIPC => OpClass::Auipc,
        OP_IMM_32 => OpClass::OpImm32,
        STORE => OpClass::Store,
        STORE_FP => OpClass::StoreFp,
        AMO => OpClass::Amo,
        OP => OpClass::Op,
        LUI => OpClass::Lui,
        OP_32 => OpClass::Op32,
        MADD | MSUB | NMSUB | NMADD => OpClass::Fma,
        OP_FP => OpClass::FpOp,
        BRANCH => OpClass::Branch,
        JALR => OpClass::Jalr,
        JAL => OpClass::Jal,
        _ => OpClass::System,
    }
}

const fn unit_of(kind: OpKind) -> Unit {
    use OpKind::*;
    match kind {
        AddSub | Logic | Shift | Compare | LuiAuipc => Unit::Alu,
        Mul | Div | Rem => Unit::MulDiv,
        Load | Store | Amo | Fence => Unit::Lsu,
        Branch | Jump => Unit::Bru,
        FpArith | FpFma | FpSignInject | FpMinMax | FpCompare | FpConvert | FpMove | FpClassify => {
            Unit::Fpu
        }
        Csr | Env | Ret => Unit::SysCsr,
    }
}

const fn entry(
    mnemonic: &'static str,
    mask: u32,
    matches: u32,
    format: Format,
    kind: OpKind,
    rounding: bool,
) -> OpSpec {
    OpSpec {
        mnemonic,
        mask,
        matches,
        format,
        opclass: opclass_of((matches & 0x7f) as u8),
        unit: unit_of(kind),
        opkind: kind,
        rounding,
    }
}

const fn r(m: &'static str, opcode: u8, f3: u32, f7: u32, kind: OpKind) -> OpSpec {
    entry(
        m,
        R_MASK,
        f7 << 25 | f3 << 12 | opcode as u32,
        Format::R,
        kind,
        false,
    )
}

/// R-type with the rs2 field fixed (unary FP operations).
const fn r_rs2(m: &'static str, f3: u32, f7: u32, rs2: u32, kind: OpKind) -> OpSpec {
    entry(
        m,
        R_MASK | 0x01f0_0000,
        f7 << 25 | rs2 << 20 | f3 << 12 | OP_FP as u32,
        Format::R,
        kind,
        false,
    )
}

/// FP R-type with a rounding mode in funct3.
const fn r_rm(m: &'static str, f7: u32, kind: OpKind) -> OpSpec {
    entry(
        m,
        R_MASK & !0x7000,
        f7 << 25 | OP_FP as u32,
        Format::R,
        kind,
        true,
    )
}

const fn r_rs2_rm(m: &'static str, f7: u32, rs2: u32, kind: OpKind) -> OpSpec {
    entry(
        m,
        (R_MASK | 0x01f0_0000) & !0x7000,
        f7 << 25 | rs2 << 20 | OP_FP as u32,
        Format::R,
        kind,
        true,
    )
}

const fn r4(m: &'static str, opcode: u8, f2: u32) -> OpSpec {
    entry(
        m,
        0x0600_007f,
        f2 << 25 | opcode as u32,
        Format::R,
        OpKind::FpFma,
        true,
    )
}

/// AMO with aq/rl left free.
const fn amo(m: &'static str, f3: u32, f5: u32) -> OpSpec {
    entry(
        m,
        0xf800_707f,
        f5 << 27 | f3 << 12 | AMO as u32,
        Format::R,
        OpKind::Amo,
        false,
    )
}

/// LR also fixes rs2 to zero.
const fn lr(m: &'static str, f3: u32) -> OpSpec {
    entry(
        m,
        0xf9f0_707f,
        0b00010 << 27 | f3 << 12 | AMO as u32,
        Format::R,
        OpKind::Amo,
        false,
    )
}

const fn i(m: &'static str, opcode: u8, f3: u32, kind: OpKind) -> OpSpec {
    entry(m, I_MASK, f3 << 12 | opcode as u32, Format::I, kind, false)
}

/// RV64 shift-immediate: imm[11:6] fixed, 6-bit shamt.
const fn shift64(m: &'static str, f3: u32, f6: u32) -> OpSpec {
    entry(
        m,
        0xfc00_707f,
        f6 << 26 | f3 << 12 | OP_IMM as u32,
        Format::I,
        OpKind::Shift,
        false,
    )
}

/// Word shift-immediate: imm[11:5] fixed, 5-bit shamt.
const fn shift32(m: &'static str, f3: u32, f7: u32) -> OpSpec {
    entry(
        m,
        R_MASK,
        f7 << 25 | f3 << 12 | OP_IMM_32 as u32,
        Format::I,
        OpKind::Shift,
        false,
    )
}

const fn s(m: &'static str, opcode: u8, f3: u32) -> OpSpec {
    entry(
        m,
        I_MASK,
        f3 << 12 | opcode as u32,
        Format::S,
        OpKind::Store,
        false,
    )
}

const fn b(m: &'static str, f3: u32) -> OpSpec {
    entry(
        m,
        I_MASK,
        f3 << 12 | BRANCH as u32,
        Format::B,
        OpKind::Branch,
        false,
    )
}

const fn exact(m: &'static str, word: u32, kind: OpKind) -> OpSpec {
    entry(m, 0xffff_ffff, word, Format::I, kind, false)
}

pub static OPS: &[OpSpec] = {
    use OpKind::*;
    &[
        entry("lui", U_MASK, LUI as u32, Format::U, LuiAuipc, false),
        entry("auipc", U_MASK, AUIPC as u32, Format::U, LuiAuipc, false),
        entry("jal", U_MASK, JAL as u32, Format::J, Jump, false),
        i("jalr", JALR, 0b000, Jump),
        b("beq", 0b000),
        b("bne", 0b001),
        b("blt", 0b100),
        b("bge", 0b101),
        b("bltu", 0b110),
        b("bgeu", 0b111),
        i("lb", LOAD, 0b000, Load),
        i("lh", LOAD, 0b001, Load),
        i("lw", LOAD, 0b010, Load),
        i("ld", LOAD, 0b011, Load),
        i("lbu", LOAD, 0b100, Load),
        i("lhu", LOAD, 0b101, Load),
        i("lwu", LOAD, 0b110, Load),
        s("sb", STORE, 0b000),
        s("sh", STORE, 0b001),
        s("sw", STORE, 0b010),
        s("sd", STORE, 0b011),
        i("addi", OP_IMM, 0b000, AddSub),
        i("slti", OP_IMM, 0b010, Compare),
        i("sltiu", OP_IMM, 0b011, Compare),
        i("xori", OP_IMM, 0b100, Logic),
        i("ori", OP_IMM, 0b110, Logic),
        i("andi", OP_IMM, 0b111, Logic),
        shift64("slli", 0b001, 0b000000),
        shift64("srli", 0b101, 0b000000),
        shift64("srai", 0b101, 0b010000),
        r("add", OP, 0b000, 0b0000000, AddSub),
        r("sub", OP, 0b000, 0b0100000, AddSub),
        r("sll", OP, 0b001, 0b0000000, Shift),
        r("slt", OP, 0b010, 0b0000000, Compare),
        r("sltu", OP, 0b011, 0b0000000, Compare),
        r("xor", OP, 0b100, 0b0000000, Logic),
        r("srl", OP, 0b101, 0b0000000, Shift),
        r("sra", OP, 0b101, 0b0100000, Shift),
        r("or", OP, 0b110, 0b0000000, Logic),
        r("and", OP, 0b111, 0b0000000, Logic),
        i("addiw", OP_IMM_32, 0b000, AddSub),
        shift32("slliw", 0b001, 0b0000000),
        shift32("srliw", 0b101, 0b0000000),
        shift32("sraiw", 0b101, 0b0100000),
        r("addw", OP_32, 0b000, 0b0000000, AddSub),
        r("subw", OP_32, 0b000, 0b0100000, AddSub),
        r("sllw", OP_32, 0b001, 0b0000000, Shift),
        r("srlw", OP_32, 0b101, 0b0000000, Shift),
        r("sraw", OP_32, 0b101, 0b0100000, Shift),
        i("fence", MISC_MEM, 0b000, Fence),
        i("fence.i", MISC_MEM, 0b001, Fence),
        exact("ecall", 0x0000_0073, Env),
        exact("ebreak", 0x0010_0073, Env),
        exact("sret", 0x1020_0073, Ret),
        exact("mret", 0x3020_0073, Ret),
        exact("wfi", 0x1050_0073, Env),
        i("csrrw", SYSTEM, 0b001, Csr),
        i("csrrs", SYSTEM, 0b010, Csr),
        i("csrrc", SYSTEM, 0b011, Csr),
        i("csrrwi", SYSTEM, 0b101, Csr),
        i("csrrsi", SYSTEM, 0b110, Csr),
        i("csrrci", SYSTEM, 0b111, Csr),
        r("mul", OP, 0b000, 0b0000001, Mul),
        r("mulh", OP, 0b001, 0b0000001, Mul),
        r("mulhsu", OP, 0b010, 0b0000001, Mul),
        r("mulhu", OP, 0b011, 0b0000001, Mul),
        r("div", OP, 0b100, 0b0000001, Div),
        r("divu", OP, 0b101, 0b0000001, Div),
        r("rem", OP, 0b110, 0b0000001, Rem),
        r("remu", OP, 0b111, 0b0000001, Rem),
        r("mulw", OP_32, 0b000, 0b0000001, Mul),
        r("divw", OP_32, 0b100, 0b0000001, Div),
        r("divuw", OP_32, 0b101, 0b0000001, Div),
        r("remw", OP_32, 0b110, 0b0000001, Rem),
        r("remuw", OP_32, 0b111, 0b0000001, Rem),
        lr("lr.w", 0b010),
        amo("sc.w", 0b010, 0b00011),
        amo("amoswap.w", 0b010, 0b00001),
        amo("amoadd.w", 0b010, 0b00000),
        amo("amoxor.w", 0b010, 0b00100),
        amo("amoand.w", 0b010, 0b01100),
        amo("amoor.w", 0b010, 0b01000),
        amo("amomin.w", 0b010, 0b10000),
        amo("amomax.w", 0b010, 0b10100),
        amo("amominu.w", 0b010, 0b11000),
        amo("amomaxu.w", 0b010, 0b11100),
        lr("lr.d", 0b011),
        amo("sc.d", 0b011, 0b00011),
        amo("amoswap.d", 0b011, 0b00001),
        amo("amoadd.d", 0b011, 0b00000),
        amo("amoxor.d", 0b011, 0b00100),
        amo("amoand.d", 0b011, 0b01100),
        amo("amoor.d", 0b011, 0b01000),
        amo("amomin.d", 0b011, 0b10000),
        amo("amomax.d", 0b011, 0b10100),
        amo("amominu.d", 0b011, 0b11000),
        amo("amomaxu.d", 0b011, 0b11100),
        i("flw", LOAD_FP, 0b010, Load),
        s("fsw", STORE_FP, 0b010),
        i("fld", LOAD_FP, 0b011, Load),
        s("fsd", STORE_FP, 0b011),
        r4("fmadd.s", MADD, 0b00),
        r4("fmsub.s", MSUB, 0b00),
        r4("fnmsub.s", NMSUB, 0b00),
        r4("fnmadd.s", NMADD, 0b00),
        r4("fmadd.d", MADD, 0b01),
        r4("fmsub.d", MSUB, 0b01),
        r4("fnmsub.d", NMSUB, 0b01),
        r4("fnmadd.d", NMADD, 0b01),
        r_rm("fadd.s", 0b0000000, FpArith),
        r_rm("fsub.s", 0b0000100, FpArith),
        r_rm("fmul.s", 0b0001000, FpArith),
        r_rm("fdiv.s", 0b0001100, FpArith),
        r_rs2_rm("fsqrt.s", 0b0101100, 0, FpArith),
        r("fsgnj.s", OP_FP, 0b000, 0b0010000, FpSignInject),
        r("fsgnjn.s", OP_FP, 0b001, 0b0010000, FpSignInject),
        r("fsgnjx.s", OP_FP, 0b010, 0b0010000, FpSignInject),
        r("fmin.s", OP_FP, 0b000, 0b0010100, FpMinMax),
        r("fmax.s", OP_FP, 0b001, 0b0010100, FpMinMax),
        r_rs2_rm("fcvt.w.s", 0b1100000, 0, FpConvert),
        r_rs2_rm("fcvt.wu.s", 0b1100000, 1, FpConvert),
        r_rs2_rm("fcvt.l.s", 0b1100000, 2, FpConvert),
        r_rs2_rm("fcvt.lu.s", 0b1100000, 3, FpConvert),
        r_rs2("fmv.x.w", 0b000, 0b1110000, 0, FpMove),
        r("feq.s", OP_FP, 0b010, 0b1010000, FpCompare),
        r("flt.s", OP_FP, 0b001, 0b1010000, FpCompare),
        r("fle.s", OP_FP, 0b000, 0b1010000, FpCompare),
        r_rs2("fclass.s", 0b001, 0b1110000, 0, FpClassify),
        r_rs2_rm("fcvt.s.w", 0b1101000, 0, FpConvert),
        r_rs2_rm("fcvt.s.wu", 0b1101000, 1, FpConvert),
        r_rs2_rm("fcvt.s.l", 0b1101000, 2, FpConvert),
        r_rs2_rm("fcvt.s.lu", 0b1101000, 3, FpConvert),
        r_rs2("fmv.w.x", 0b000, 0b1111000, 0, FpMove),
        r_rm("fadd.d", 0b0000001, FpArith),
        r_rm("fsub.d", 0b0000101, FpArith),
        r_rm("fmul.d", 0b0001001, FpArith),
        r_rm("fdiv.d", 0b0001101, FpArith),
        r_rs2_rm("fsqrt.d", 0b0101101, 0, FpArith),
        r("fsgnj.d", OP_FP, 0b000, 0b0010001, FpSignInject),
        r("fsgnjn.d", OP_FP, 0b001, 0b0010001, FpSignInject),
        r("fsgnjx.d", OP_FP, 0b010, 0b0010001, FpSignInject),
        r("fmin.d", OP_FP, 0b000, 0b0010101, FpMinMax),
        r("fmax.d", OP_FP, 0b001, 0b0010101, FpMinMax),
        r_rs2_rm("fcvt.s.d", 0b0100000, 1, FpConvert),
        r_rs2_rm("fcvt.d.s", 0b0100001, 0, FpConvert),
        r("feq.d", OP_FP, 0b010, 0b1010001, FpCompare),
        r("flt.d", OP_FP, 0b001, 0b1010001, FpCompare),
        r("fle.d", OP_FP, 0b000, 0b1010001, FpCompare),
        r_rs2("fclass.d", 0b001, 0b1110001, 0, FpClassify),
        r_rs2_rm("fcvt.w.d", 0b1100001, 0, FpConvert),
        r_rs2_rm("fcvt.wu.d", 0b1100001, 1, FpConvert),
        r_rs2_rm("fcvt.l.d", 0b1100001, 2, FpConvert),
        r_rs2_rm("fcvt.lu.d", 0b1100001, 3, FpConvert),
        r_rs2("fmv.x.d", 0b000, 0b1110001, 0, FpMove),
        r_rs2_rm("fcvt.d.w", 0b1101001, 0, FpConvert),
        r_rs2_rm("fcvt.d.wu", 0b1101001, 1, FpConvert),
        r_rs2_rm("fcvt.d.l", 0b1101001, 2, FpConvert),
        r_rs2_rm("fcvt.d.lu", 0b1101001, 3, FpConvert),
        r_rs2("fmv.d.x", 0b000, 0b1111001, 0, FpMove),
    ]
};

/// Table indices grouped by major opcode.
static BY_OPCODE: Lazy<Vec<Vec<u16>>> = Lazy::new(|| {
    let mut buckets = vec![Vec::new(); 128];
    for (idx, op) in OPS.iter().enumerate() {
        buckets[op.opcode() as usize].push(idx as u16);
    }
    buckets
});

/// Finds the table entry a word encodes, if any.
pub fn lookup(word: u32) -> Option<u16> {
    if word & 0b11 != 0b11 {
        return None;
    }
    BY_OPCODE[(word & 0x7f) as usize]
        .iter()
        .copied()
        .find(|&idx| {
            let op = &OPS[idx as usize];
            word & op.mask == op.matches
                && (!op.rounding || valid_rounding_mode((word >> 12) & 0b111))
        })
}

pub fn by_mnemonic(mnemonic: &str) -> Option<u16> {
    OPS.iter()
        .position(|op| op.mnemonic == mnemonic)
        .map(|idx| idx as u16)
}
