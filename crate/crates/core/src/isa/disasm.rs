use super::{Entry, Format, Instruction, OpClass, OpKind, Unit};

fn is_fp_dest(inst: &Instruction) -> bool {
    let m = inst.mnemonic();
    match inst.opclass {
        OpClass::LoadFp | OpClass::Fma => true,
        OpClass::FpOp => {
            !(matches!(inst.opkind, OpKind::FpCompare | OpKind::FpClassify)
                || m.starts_with("fcvt.w")
                || m.starts_with("fcvt.l")
                || m.starts_with("fmv.x"))
        }
        _ => false,
    }
}

fn is_fp_src1(inst: &Instruction) -> bool {
    let m = inst.mnemonic();
    inst.unit == Unit::Fpu
        && !(m.ends_with(".w") && m.starts_with("fcvt")
            || m.ends_with(".wu")
            || m.ends_with(".l") && m.starts_with("fcvt")
            || m.ends_with(".lu")
            || m.starts_with("fmv.w")
            || m.starts_with("fmv.d"))
}

fn is_fp_src2(inst: &Instruction) -> bool {
    inst.unit == Unit::Fpu || inst.opclass == OpClass::StoreFp
}

/// Minimal assembly-like rendering for listings and reports.
pub fn disasm(entry: &Entry) -> String {
    let inst = match entry {
        Entry::Inst(inst) => inst,
        Entry::Opaque(word) => return format!(".word 0x{word:08x}"),
    };
    let m = inst.mnemonic();
    let x = |r: Option<u8>| format!("x{}", r.unwrap_or(0));
    let f = |r: Option<u8>| format!("f{}", r.unwrap_or(0));
    let rd = if is_fp_dest(inst) {
        f(inst.rd)
    } else {
        x(inst.rd)
    };
    let rs1 = if is_fp_src1(inst) {
        f(inst.rs1)
    } else {
        x(inst.rs1)
    };
    let rs2 = if is_fp_src2(inst) {
        f(inst.rs2)
    } else {
        x(inst.rs2)
    };
    let imm = inst.imm.unwrap_or(0);

    match (inst.opkind, inst.format) {
        (OpKind::Env | OpKind::Ret, _) => m.to_string(),
        (OpKind::Fence, _) => m.to_string(),
        (OpKind::Load, _) => format!("{m} {rd}, {imm}({})", x(inst.rs1)),
        (OpKind::Store, _) => format!("{m} {rs2}, {imm}({})", x(inst.rs1)),
        (OpKind::Amo, _) => format!("{m} {rd}, {}, ({})", x(inst.rs2), x(inst.rs1)),
        (OpKind::Csr, _) => {
            let src = if inst.funct3.unwrap_or(0) & 0b100 != 0 {
                inst.rs1.unwrap_or(0).to_string()
            } else {
                x(inst.rs1)
            };
            format!("{m} {rd}, 0x{:03x}, {src}", imm & 0xfff)
        }
        (OpKind::Shift, Format::I) => {
            let width = if inst.opclass == OpClass::OpImm32 {
                0x1f
            } else {
                0x3f
            };
            format!("{m} {rd}, {rs1}, {}", imm & width)
        }
        (OpKind::FpFma, _) => format!("{m} {rd}, {rs1}, {rs2}, {}", f(inst.rs3)),
        (_, Format::R) if inst.unit == Unit::Fpu && inst.op.spec().mask & 0x01f0_0000 != 0 => {
            format!("{m} {rd}, {rs1}")
        }
        (_, Format::R) => format!("{m} {rd}, {rs1}, {rs2}"),
        (_, Format::I) => format!("{m} {rd}, {rs1}, {imm}"),
        (_, Format::S | Format::B) => format!("{m} {rs1}, {rs2}, {imm}"),
        (_, Format::U) => format!("{m} {rd}, 0x{:x}", (imm >> 12) & 0xfffff),
        (_, Format::J) => format!("{m} {rd}, {imm}"),
    }
}
