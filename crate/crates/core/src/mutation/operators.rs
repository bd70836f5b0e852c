//! Instruction-level mutation operators.
//!
//! Every operator works on raw words: it edits operand bits or swaps the
//! fixed bits of one table entry for another, then re-decodes. Outputs are
//! always decodable and never control-transfer instructions.

use std::collections::HashMap;

use once_cell::sync::Lazy;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::difftest::interp;
use crate::isa::{self, decode, Format, Instruction, OpClass, OpId, Unit};

use super::MutationConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    OperandScramble,
    FunctWalk,
    UnitPeerSwap,
    FreshDraw,
}

impl Operator {
    pub const ALL: [Operator; 4] = [
        Operator::OperandScramble,
        Operator::FunctWalk,
        Operator::UnitPeerSwap,
        Operator::FreshDraw,
    ];
}

/// Relative selection weights of the four operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorWeights {
    pub operand_scramble: f64,
    pub funct_walk: f64,
    pub unit_peer_swap: f64,
    pub fresh_draw: f64,
}

impl Default for OperatorWeights {
    fn default() -> Self {
        OperatorWeights {
            operand_scramble: 0.4,
            funct_walk: 0.2,
            unit_peer_swap: 0.2,
            fresh_draw: 0.2,
        }
    }
}

impl OperatorWeights {
    pub fn weight(&self, op: Operator) -> f64 {
        match op {
            Operator::OperandScramble => self.operand_scramble,
            Operator::FunctWalk => self.funct_walk,
            Operator::UnitPeerSwap => self.unit_peer_swap,
            Operator::FreshDraw => self.fresh_draw,
        }
    }

    pub fn is_valid(&self) -> bool {
        let weights = Operator::ALL.map(|op| self.weight(op));
        weights.iter().all(|w| w.is_finite() && *w >= 0.0) && weights.iter().any(|w| *w > 0.0)
    }

    fn pick<R: Rng>(&self, rng: &mut R) -> Operator {
        let total: f64 = Operator::ALL.iter().map(|&op| self.weight(op)).sum();
        let mut point = rng.gen::<f64>() * total;
        for op in Operator::ALL {
            let w = self.weight(op);
            if point < w {
                return op;
            }
            point -= w;
        }
        // Rounding left `point` at the top edge; take the last weighted one.
        *Operator::ALL
            .iter()
            .rev()
            .find(|&&op| self.weight(op) > 0.0)
            .unwrap_or(&Operator::FreshDraw)
    }
}

/// Candidate instruction sets a mutation may draw from.
struct Pool {
    all: Vec<OpId>,
    by_opclass: HashMap<OpClass, Vec<OpId>>,
    by_unit: HashMap<Unit, Vec<OpId>>,
}

impl Pool {
    fn build(filter: impl Fn(OpId) -> bool) -> Pool {
        let mut pool = Pool {
            all: Vec::new(),
            by_opclass: HashMap::new(),
            by_unit: HashMap::new(),
        };
        for op in OpId::all() {
            let spec = op.spec();
            if is_cti_spec(op) || !filter(op) {
                continue;
            }
            pool.all.push(op);
            pool.by_opclass.entry(spec.opclass).or_default().push(op);
            pool.by_unit.entry(spec.unit).or_default().push(op);
        }
        pool
    }

    fn contains(&self, op: OpId) -> bool {
        self.all.contains(&op)
    }
}

fn is_cti_spec(op: OpId) -> bool {
    // CTI-ness is a property of the table entry, so decoding its match
    // pattern answers it.
    decode(op.spec().matches).is_some_and(|inst| inst.is_cti())
}

static FULL_POOL: Lazy<Pool> = Lazy::new(|| Pool::build(|_| true));
static EXECUTABLE_POOL: Lazy<Pool> = Lazy::new(|| Pool::build(interp::supports));

fn pool(cfg: &MutationConfig) -> &'static Pool {
    if cfg.executable_only {
        &EXECUTABLE_POOL
    } else {
        &FULL_POOL
    }
}

const RD: u32 = 0x1f << 7;
const RS1: u32 = 0x1f << 15;
const RS2: u32 = 0x1f << 20;
const RS3: u32 = 0x1f << 27;

fn imm_bits(format: Format) -> u32 {
    match format {
        Format::R => 0,
        Format::I => 0xfff0_0000,
        Format::S | Format::B => 0xfe00_0f80,
        Format::U | Format::J => 0xffff_f000,
    }
}

/// Result of one instruction-level mutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mutated {
    pub inst: Instruction,
    pub operator: Operator,
}

/// Attempts per operator before falling back to a fresh draw.
const ATTEMPTS: usize = 32;

/// Replaces `inst` with a related instruction chosen by a weighted-random
/// operator. `inst` must not be a control-transfer instruction.
pub fn mutate_instruction<R: Rng>(
    inst: &Instruction,
    cfg: &MutationConfig,
    rng: &mut R,
) -> Mutated {
    debug_assert!(!inst.is_cti());
    let pool = pool(cfg);
    for _ in 0..ATTEMPTS {
        let operator = cfg.operator_weights.pick(rng);
        let candidate = match operator {
            Operator::OperandScramble => operand_scramble(inst, rng),
            Operator::FunctWalk => funct_walk(inst, pool, rng),
            Operator::UnitPeerSwap => unit_peer_swap(inst, pool, rng),
            Operator::FreshDraw => Some(fresh_draw(pool, rng)),
        };
        if let Some(out) = candidate {
            if !out.is_cti() && pool.contains(out.op) {
                return Mutated {
                    inst: out,
                    operator,
                };
            }
        }
    }
    Mutated {
        inst: fresh_draw(pool, rng),
        operator: Operator::FreshDraw,
    }
}

/// Randomizes one or more operand fields within the entry's free bits.
fn operand_scramble<R: Rng>(inst: &Instruction, rng: &mut R) -> Option<Instruction> {
    let free = inst.op.spec().free_bits();
    let mut fields: Vec<u32> = [
        (inst.rd.is_some(), RD),
        (inst.rs1.is_some(), RS1),
        (inst.rs2.is_some(), RS2),
        (inst.rs3.is_some(), RS3),
        (inst.imm.is_some(), imm_bits(inst.format)),
    ]
    .into_iter()
    .filter(|&(present, _)| present)
    .map(|(_, mask)| mask & free)
    .filter(|&mask| mask != 0)
    .collect();
    if fields.is_empty() {
        return None;
    }
    fields.shuffle(rng);
    let count = rng.gen_range(1..=fields.len());
    let mask = fields[..count].iter().fold(0, |acc, m| acc | m);
    for _ in 0..ATTEMPTS {
        let word = (inst.word & !mask) | (rng.gen::<u32>() & mask);
        if word != inst.word {
            return decode(word);
        }
    }
    None
}

/// Moves to another entry of the same opcode class, keeping operand bits.
fn funct_walk<R: Rng>(inst: &Instruction, pool: &Pool, rng: &mut R) -> Option<Instruction> {
    let peers: Vec<OpId> = pool
        .by_opclass
        .get(&inst.opclass)?
        .iter()
        .copied()
        .filter(|&op| op != inst.op)
        .collect();
    let target = peers.choose(rng)?.spec();
    decode((inst.word & !target.mask) | target.matches)
}

/// Moves to another entry of the same execution unit, carrying register
/// and immediate operands over where the target format has them.
fn unit_peer_swap<R: Rng>(inst: &Instruction, pool: &Pool, rng: &mut R) -> Option<Instruction> {
    let peers: Vec<OpId> = pool
        .by_unit
        .get(&inst.unit)?
        .iter()
        .copied()
        .filter(|&op| op != inst.op)
        .collect();
    let target = *peers.choose(rng)?;
    let spec = target.spec();
    let mut draft = decode(spec.matches | (rng.gen::<u32>() & spec.free_bits()))?;

    let carry = |dst: &mut Option<u8>, src: Option<u8>| {
        if let (Some(d), Some(s)) = (dst.as_mut(), src) {
            *d = s;
        }
    };
    carry(&mut draft.rd, inst.rd);
    carry(&mut draft.rs1, inst.rs1);
    carry(&mut draft.rs2, inst.rs2);
    carry(&mut draft.rs3, inst.rs3);
    if spec.rounding {
        carry(&mut draft.funct3, inst.funct3);
    }
    let random_imm = draft.imm;
    if draft.imm.is_some() && inst.imm.is_some() {
        draft.imm = inst.imm;
    }
    let word = isa::encode(&draft).or_else(|_| {
        draft.imm = random_imm;
        isa::encode(&draft)
    });
    decode((word.ok()? & !spec.mask) | spec.matches)
}

/// Uniformly random entry from the pool with random operands.
fn fresh_draw<R: Rng>(pool: &Pool, rng: &mut R) -> Instruction {
    loop {
        let spec = pool
            .all
            .choose(rng)
            .expect("mutation pool is never empty")
            .spec();
        // Only reserved rounding modes can make this fail.
        if let Some(inst) = decode(spec.matches | (rng.gen::<u32>() & spec.free_bits())) {
            return inst;
        }
    }
}
