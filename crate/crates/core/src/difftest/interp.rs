//! Built-in RV64IM interpreter used as the reference executor.
//!
//! Conventions: the program is loaded at address 0 of a flat little-endian
//! memory, execution starts at pc 0 with all registers zero. `ecall` commits
//! and then halts. Any trap halts before the faulting instruction commits.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{trap, ArchState, CommitRecord, CommitTrace, HaltCause, Limits, Writeback};
use crate::isa::{decode, Instruction, OpClass, OpId};

/// Whether the interpreter executes `op` (as opposed to trapping illegal).
pub fn supports(op: OpId) -> bool {
    let spec = op.spec();
    match spec.opclass {
        OpClass::Load
        | OpClass::Store
        | OpClass::OpImm
        | OpClass::Op
        | OpClass::OpImm32
        | OpClass::Op32
        | OpClass::Branch
        | OpClass::Jal
        | OpClass::Jalr
        | OpClass::Lui
        | OpClass::Auipc
        | OpClass::MiscMem => true,
        OpClass::System => spec.mnemonic == "ecall",
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InjectedBug {
    /// ADDIW keeps the low 32 bits without sign extension.
    AddiwNoSext,
    /// SLTU writes the inverted comparison.
    SltuFlip,
    /// SLLIW/SRLIW/SRAIW with shamt bit 5 set execute with that bit masked
    /// instead of trapping.
    ImmRangeUnchecked,
    /// JALR jumps to misaligned or out-of-range targets without faulting.
    JalrMisalignedOk,
}

impl InjectedBug {
    pub const ALL: [InjectedBug; 4] = [
        InjectedBug::AddiwNoSext,
        InjectedBug::SltuFlip,
        InjectedBug::ImmRangeUnchecked,
        InjectedBug::JalrMisalignedOk,
    ];

    pub fn id(self) -> &'static str {
        match self {
            InjectedBug::AddiwNoSext => "addiw-no-sext",
            InjectedBug::SltuFlip => "sltu-flip",
            InjectedBug::ImmRangeUnchecked => "imm-range-unchecked",
            InjectedBug::JalrMisalignedOk => "jalr-misaligned-ok",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown bug id `{0}` (known: addiw-no-sext, sltu-flip, imm-range-unchecked, jalr-misaligned-ok)")]
pub struct UnknownBugId(pub String);

impl FromStr for InjectedBug {
    type Err = UnknownBugId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InjectedBug::ALL
            .into_iter()
            .find(|b| b.id() == s)
            .ok_or_else(|| UnknownBugId(s.to_string()))
    }
}

impl std::fmt::Display for InjectedBug {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

pub fn run_reference(bytes: &[u8], limits: &Limits) -> CommitTrace {
    Machine::new(bytes, limits, None).run(limits.max_steps)
}

pub fn run_reference_with_bug(bytes: &[u8], limits: &Limits, bug: InjectedBug) -> CommitTrace {
    Machine::new(bytes, limits, Some(bug)).run(limits.max_steps)
}

/// Text form of a trace: one `commit` line per record and a final `halt` line.
pub fn format_trace(trace: &CommitTrace) -> String {
    let mut out = String::new();
    for r in &trace.records {
        let _ = writeln!(out, "{r}");
    }
    let cause = trace
        .final_state
        .halt_cause
        .map_or("none".to_string(), |c| c.to_string());
    let _ = writeln!(out, "halt pc={:#018x} cause={cause}", trace.final_state.pc);
    out
}

struct Machine {
    pc: u64,
    x: [u64; 32],
    mem: Vec<u8>,
    bug: Option<InjectedBug>,
}

enum Step {
    Next(Option<Writeback>, u64),
    Halt(HaltCause),
}

fn sext32(v: u64) -> u64 {
    v as u32 as i32 as i64 as u64
}

impl Machine {
    fn new(bytes: &[u8], limits: &Limits, bug: Option<InjectedBug>) -> Machine {
        let mut mem = vec![0u8; limits.memory_bytes.max(bytes.len())];
        mem[..bytes.len()].copy_from_slice(bytes);
        Machine {
            pc: 0,
            x: [0; 32],
            mem,
            bug,
        }
    }

    fn bug(&self, b: InjectedBug) -> bool {
        self.bug == Some(b)
    }

    fn range(&self, addr: u64, len: usize) -> Option<std::ops::Range<usize>> {
        let start = usize::try_from(addr).ok()?;
        let end = start.checked_add(len)?;
        (end <= self.mem.len()).then_some(start..end)
    }

    fn load(&self, addr: u64, len: usize) -> Option<u64> {
        let r = self.range(addr, len)?;
        let mut buf = [0u8; 8];
        buf[..len].copy_from_slice(&self.mem[r]);
        Some(u64::from_le_bytes(buf))
    }

    fn store(&mut self, addr: u64, len: usize, value: u64) -> bool {
        match self.range(addr, len) {
            Some(r) => {
                self.mem[r].copy_from_slice(&value.to_le_bytes()[..len]);
                true
            }
            None => false,
        }
    }

    fn run(mut self, max_steps: u64) -> CommitTrace {
        let mut records = Vec::new();
        let cause = loop {
            if records.len() as u64 >= max_steps {
                break HaltCause::MaxSteps;
            }
            if !self.pc.is_multiple_of(4) {
                break HaltCause::Trap(trap::MISALIGNED_FETCH);
            }
            let Some(word) = self.load(self.pc, 4) else {
                break HaltCause::Trap(trap::FETCH_FAULT);
            };
            let word = word as u32;
            match self.execute(word) {
                Step::Halt(cause) => break cause,
                Step::Next(writeback, next_pc) => {
                    if let Some(wb) = writeback {
                        self.x[wb.reg as usize] = wb.value;
                    }
                    records.push(CommitRecord {
                        step: records.len() as u64,
                        pc: self.pc,
                        instr: word,
                        writeback,
                    });
                    let is_ecall = word == 0x0000_0073;
                    if is_ecall {
                        break HaltCause::Ecall;
                    }
                    self.pc = next_pc;
                }
            }
        };
        CommitTrace {
            records,
            final_state: ArchState {
                pc: self.pc,
                xregs: self.x,
                halted: true,
                halt_cause: Some(cause),
            },
        }
    }

    fn decode_word(&self, word: u32) -> Option<Instruction> {
        let shamt5_set =
            word & 0x7f == 0x1b && matches!((word >> 12) & 7, 1 | 5) && word & (1 << 25) != 0;
        if shamt5_set && self.bug(InjectedBug::ImmRangeUnchecked) {
            let mut inst = decode(word & !(1 << 25))?;
            inst.word = word;
            return Some(inst);
        }
        decode(word)
    }

    fn execute(&mut self, word: u32) -> Step {
        let illegal = Step::Halt(HaltCause::Trap(trap::ILLEGAL));
        let Some(inst) = self.decode_word(word) else {
            return illegal;
        };
        if !supports(inst.op) && inst.mnemonic() != "ebreak" {
            return illegal;
        }
        let pc = self.pc;
        let rd = inst.rd.unwrap_or(0);
        let a = self.x[inst.rs1.unwrap_or(0) as usize];
        let b = self.x[inst.rs2.unwrap_or(0) as usize];
        let imm = inst.imm.unwrap_or(0);
        let uimm = imm as u64;
        let shamt = (word >> 20) & 0x3f;
        let next = pc.wrapping_add(4);
        let write = |value: u64| {
            let wb = (rd != 0).then_some(Writeback { reg: rd, value });
            Step::Next(wb, next)
        };
        let mnemonic = inst.mnemonic();

        match inst.opclass {
            OpClass::Lui => write(uimm),
            OpClass::Auipc => write(pc.wrapping_add(uimm)),
            OpClass::Jal => {
                let target = pc.wrapping_add(uimm);
                if !target.is_multiple_of(4) {
                    return Step::Halt(HaltCause::Trap(trap::MISALIGNED_FETCH));
                }
                Step::Next(
                    (rd != 0).then_some(Writeback {
                        reg: rd,
                        value: next,
                    }),
                    target,
                )
            }
            OpClass::Jalr => {
                let target = a.wrapping_add(uimm) & !1;
                if !self.bug(InjectedBug::JalrMisalignedOk) {
                    if !target.is_multiple_of(4) {
                        return Step::Halt(HaltCause::Trap(trap::MISALIGNED_FETCH));
                    }
                    if self.range(target, 4).is_none() {
                        return Step::Halt(HaltCause::Trap(trap::FETCH_FAULT));
                    }
                }
                Step::Next(
                    (rd != 0).then_some(Writeback {
                        reg: rd,
                        value: next,
                    }),
                    target,
                )
            }
            OpClass::Branch => {
                let taken = match mnemonic {
                    "beq" => a == b,
                    "bne" => a != b,
                    "blt" => (a as i64) < (b as i64),
                    "bge" => (a as i64) >= (b as i64),
                    "bltu" => a < b,
                    "bgeu" => a >= b,
                    _ => return illegal,
                };
                if !taken {
                    return Step::Next(None, next);
                }
                let target = pc.wrapping_add(uimm);
                if !target.is_multiple_of(4) {
                    return Step::Halt(HaltCause::Trap(trap::MISALIGNED_FETCH));
                }
                Step::Next(None, target)
            }
            OpClass::Load => {
                let addr = a.wrapping_add(uimm);
                let (len, signed) = match mnemonic {
                    "lb" => (1, true),
                    "lh" => (2, true),
                    "lw" => (4, true),
                    "ld" => (8, false),
                    "lbu" => (1, false),
                    "lhu" => (2, false),
                    "lwu" => (4, false),
                    _ => return illegal,
                };
                let Some(raw) = self.load(addr, len) else {
                    return Step::Halt(HaltCause::Trap(trap::LOAD_FAULT));
                };
                let value = if signed {
                    let shift = 64 - 8 * len as u32;
                    (((raw << shift) as i64) >> shift) as u64
                } else {
                    raw
                };
                write(value)
            }
            OpClass::Store => {
                let addr = a.wrapping_add(uimm);
                let len = match mnemonic {
                    "sb" => 1,
                    "sh" => 2,
                    "sw" => 4,
                    "sd" => 8,
                    _ => return illegal,
                };
                if !self.store(addr, len, b) {
                    return Step::Halt(HaltCause::Trap(trap::STORE_FAULT));
                }
                Step::Next(None, next)
            }
            OpClass::OpImm => write(match mnemonic {
                "addi" => a.wrapping_add(uimm),
                "slti" => u64::from((a as i64) < imm),
                "sltiu" => u64::from(a < uimm),
                "xori" => a ^ uimm,
                "ori" => a | uimm,
                "andi" => a & uimm,
                "slli" => a << shamt,
                "srli" => a >> shamt,
                "srai" => ((a as i64) >> shamt) as u64,
                _ => return illegal,
            }),
            OpClass::OpImm32 => {
                let sh = shamt & 0x1f;
                write(match mnemonic {
                    "addiw" => {
                        let sum = a.wrapping_add(uimm);
                        if self.bug(InjectedBug::AddiwNoSext) {
                            sum & 0xffff_ffff
                        } else {
                            sext32(sum)
                        }
                    }
                    "slliw" => sext32(a << sh),
                    "srliw" => sext32(((a as u32) >> sh) as u64),
                    "sraiw" => ((a as i32) >> sh) as i64 as u64,
                    _ => return illegal,
                })
            }
            OpClass::Op => write(match mnemonic {
                "add" => a.wrapping_add(b),
                "sub" => a.wrapping_sub(b),
                "sll" => a << (b & 63),
                "slt" => u64::from((a as i64) < (b as i64)),
                "sltu" => u64::from((a < b) != self.bug(InjectedBug::SltuFlip)),
                "xor" => a ^ b,
                "srl" => a >> (b & 63),
                "sra" => ((a as i64) >> (b & 63)) as u64,
                "or" => a | b,
                "and" => a & b,
                "mul" => a.wrapping_mul(b),
                "mulh" => ((a as i64 as i128 * b as i64 as i128) >> 64) as u64,
                "mulhsu" => ((a as i64 as i128 * b as i128) >> 64) as u64,
                "mulhu" => ((a as u128 * b as u128) >> 64) as u64,
                "div" => match (a as i64, b as i64) {
                    (_, 0) => u64::MAX,
                    (x, y) => x.wrapping_div(y) as u64,
                },
                "divu" => a.checked_div(b).unwrap_or(u64::MAX),
                "rem" => match (a as i64, b as i64) {
                    (x, 0) => x as u64,
                    (x, y) => x.wrapping_rem(y) as u64,
                },
                "remu" => a.checked_rem(b).unwrap_or(a),
                _ => return illegal,
            }),
            OpClass::Op32 => {
                let (x, y) = (a as u32, b as u32);
                let sh = y & 31;
                write(match mnemonic {
                    "addw" => sext32(x.wrapping_add(y) as u64),
                    "subw" => sext32(x.wrapping_sub(y) as u64),
                    "sllw" => sext32((x << sh) as u64),
                    "srlw" => sext32((x >> sh) as u64),
                    "sraw" => ((x as i32) >> sh) as i64 as u64,
                    "mulw" => sext32(x.wrapping_mul(y) as u64),
                    "divw" => match (x as i32, y as i32) {
                        (_, 0) => u64::MAX,
                        (p, q) => p.wrapping_div(q) as i64 as u64,
                    },
                    "divuw" => x.checked_div(y).map_or(u64::MAX, |v| sext32(v as u64)),
                    "remw" => match (x as i32, y as i32) {
                        (p, 0) => p as i64 as u64,
                        (p, q) => p.wrapping_rem(q) as i64 as u64,
                    },
                    "remuw" => sext32(x.checked_rem(y).unwrap_or(x) as u64),
                    _ => return illegal,
                })
            }
            OpClass::MiscMem => Step::Next(None, next),
            OpClass::System => match mnemonic {
                "ecall" => Step::Next(None, next),
                "ebreak" => Step::Halt(HaltCause::Trap(trap::BREAKPOINT)),
                _ => illegal,
            },
            _ => illegal,
        }
    }
}
