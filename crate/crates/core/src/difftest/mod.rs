//! Differential execution: commit traces, executors, and lockstep comparison.

pub mod campaign;
pub mod external;
pub mod interp;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use campaign::{
    run_campaign, Backend, BackendError, CampaignConfig, CampaignReport, SeedInput,
};
pub use external::{run_external, BackendConfig, ExternalError};
pub use interp::{format_trace, run_reference, run_reference_with_bug, InjectedBug, UnknownBugId};

/// Exception codes used for trap halts.
pub mod trap {
    pub const MISALIGNED_FETCH: u8 = 0;
    pub const FETCH_FAULT: u8 = 1;
    pub const ILLEGAL: u8 = 2;
    pub const BREAKPOINT: u8 = 3;
    pub const LOAD_FAULT: u8 = 5;
    pub const STORE_FAULT: u8 = 7;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HaltCause {
    Ecall,
    MaxSteps,
    Trap(u8),
}

impl fmt::Display for HaltCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HaltCause::Ecall => f.write_str("ecall"),
            HaltCause::MaxSteps => f.write_str("max_steps"),
            HaltCause::Trap(code) => write!(f, "trap({code})"),
        }
    }
}

impl FromStr for HaltCause {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ecall" => Ok(HaltCause::Ecall),
            "max_steps" => Ok(HaltCause::MaxSteps),
            _ => s
                .strip_prefix("trap(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|c| c.parse().ok())
                .map(HaltCause::Trap)
                .ok_or_else(|| format!("unknown halt cause `{s}`")),
        }
    }
}

impl Serialize for HaltCause {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HaltCause {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[derive(Default)]
pub struct ArchState {
    pub pc: u64,
    pub xregs: [u64; 32],
    pub halted: bool,
    pub halt_cause: Option<HaltCause>,
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Writeback {
    pub reg: u8,
    pub value: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CommitRecord {
    pub step: u64,
    pub pc: u64,
    pub instr: u32,
    pub writeback: Option<Writeback>,
}

impl fmt::Display for CommitRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "commit step={} pc={:#018x} instr={:#010x}",
            self.step, self.pc, self.instr
        )?;
        if let Some(wb) = self.writeback {
            write!(f, " x{}={:#018x}", wb.reg, wb.value)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitTrace {
    pub records: Vec<CommitRecord>,
    #[serde(rename = "final")]
    pub final_state: ArchState,
}

impl CommitTrace {
    /// Register file obtained by applying every writeback to all-zero registers.
    pub fn replay_xregs(&self) -> [u64; 32] {
        let mut xregs = [0u64; 32];
        for wb in self.records.iter().filter_map(|r| r.writeback) {
            if wb.reg != 0 {
                xregs[wb.reg as usize & 31] = wb.value;
            }
        }
        xregs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Field {
    Pc,
    Instruction,
    Writeback,
    FinalState,
    TraceLength,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::Pc => "pc",
            Field::Instruction => "instruction",
            Field::Writeback => "writeback",
            Field::FinalState => "final-state",
            Field::TraceLength => "trace-length",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub step: u64,
    pub field: Field,
    /// Pc of the first divergent record (from A when it has one).
    pub pc: u64,
    pub a: String,
    pub b: String,
    pub context_a: Vec<CommitRecord>,
    pub context_b: Vec<CommitRecord>,
}

/// Which fields `compare` checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Policy {
    pub pc: bool,
    pub instruction: bool,
    pub writeback: bool,
    pub trace_length: bool,
    /// Compare final pc, registers and halt cause after matching traces.
    pub final_state: bool,
}

impl Default for Policy {
    fn default() -> Self {
        Policy {
            pc: true,
            instruction: true,
            writeback: true,
            trace_length: true,
            final_state: false,
        }
    }
}

impl Policy {
    pub fn with_final_state() -> Self {
        Policy {
            final_state: true,
            ..Policy::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Limits {
    pub max_steps: u64,
    pub memory_bytes: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_steps: 10_000,
            memory_bytes: 1 << 20,
        }
    }
}

const CONTEXT: usize = 4;

fn window(records: &[CommitRecord], at: usize) -> Vec<CommitRecord> {
    let lo = at.saturating_sub(CONTEXT);
    let hi = (at + CONTEXT + 1).min(records.len());
    records.get(lo..hi).map(<[_]>::to_vec).unwrap_or_default()
}

fn wb_text(wb: Option<Writeback>) -> String {
    match wb {
        Some(wb) => format!("x{}={:#018x}", wb.reg, wb.value),
        None => "none".to_string(),
    }
}

fn state_text(s: &ArchState) -> String {
    let cause = s.halt_cause.map_or("none".to_string(), |c| c.to_string());
    format!("pc={:#018x} cause={cause}", s.pc)
}

/// Lockstep comparison of two traces; `None` when nothing enabled differs.
pub fn compare(a: &CommitTrace, b: &CommitTrace, policy: &Policy) -> Option<Divergence> {
    let make = |i: usize, field: Field, va: String, vb: String| {
        let pc = a
            .records
            .get(i)
            .or(b.records.get(i))
            .map_or(a.final_state.pc, |r| r.pc);
        Divergence {
            step: i as u64,
            field,
            pc,
            a: va,
            b: vb,
            context_a: window(&a.records, i),
            context_b: window(&b.records, i),
        }
    };
    for (i, (ra, rb)) in a.records.iter().zip(&b.records).enumerate() {
        if policy.pc && ra.pc != rb.pc {
            return Some(make(
                i,
                Field::Pc,
                format!("{:#018x}", ra.pc),
                format!("{:#018x}", rb.pc),
            ));
        }
        if policy.instruction && ra.instr != rb.instr {
            return Some(make(
                i,
                Field::Instruction,
                format!("{:#010x}", ra.instr),
                format!("{:#010x}", rb.instr),
            ));
        }
        if policy.writeback && ra.writeback != rb.writeback {
            return Some(make(
                i,
                Field::Writeback,
                wb_text(ra.writeback),
                wb_text(rb.writeback),
            ));
        }
    }
    let (la, lb) = (a.records.len(), b.records.len());
    if policy.trace_length && la != lb {
        return Some(make(
            la.min(lb),
            Field::TraceLength,
            la.to_string(),
            lb.to_string(),
        ));
    }
    if policy.final_state {
        let (fa, fb) = (&a.final_state, &b.final_state);
        if fa.pc != fb.pc || fa.halt_cause != fb.halt_cause {
            return Some(make(
                la.min(lb),
                Field::FinalState,
                state_text(fa),
                state_text(fb),
            ));
        }
        if let Some(r) = (0..32).find(|&r| fa.xregs[r] != fb.xregs[r]) {
            return Some(make(
                la.min(lb),
                Field::FinalState,
                format!("x{r}={:#018x}", fa.xregs[r]),
                format!("x{r}={:#018x}", fb.xregs[r]),
            ));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: u64, pc: u64, instr: u32, wb: Option<(u8, u64)>) -> CommitRecord {
        CommitRecord {
            step,
            pc,
            instr,
            writeback: wb.map(|(reg, value)| Writeback { reg, value }),
        }
    }

    fn trace(records: Vec<CommitRecord>) -> CommitTrace {
        let mut t = CommitTrace {
            records,
            final_state: ArchState::default(),
        };
        t.final_state.xregs = t.replay_xregs();
        t
    }

    #[test]
    fn reflexive() {
        let t = trace(vec![
            rec(0, 0, 0x13, None),
            rec(1, 4, 0x00500093, Some((1, 5))),
        ]);
        assert_eq!(compare(&t, &t, &Policy::with_final_state()), None);
    }

    #[test]
    fn extra_trailing_commits() {
        let base: Vec<_> = (0..5).map(|i| rec(i, i * 4, 0x13, None)).collect();
        let a = trace(base.clone());
        let b = trace(base[..2].to_vec());
        let d = compare(&a, &b, &Policy::default()).unwrap();
        assert_eq!(d.field, Field::TraceLength);
        assert_eq!(d.step, 2);
        assert_eq!(d.context_a.len(), 5);
        assert_eq!(d.context_b.len(), 2);
    }

    #[test]
    fn field_priority_and_policy() {
        let a = trace(vec![rec(0, 0, 0x13, Some((1, 1)))]);
        let b = trace(vec![rec(0, 0, 0x13, Some((1, 2)))]);
        assert_eq!(
            compare(&a, &b, &Policy::default()).unwrap().field,
            Field::Writeback
        );
        let off = Policy {
            writeback: false,
            ..Policy::default()
        };
        assert_eq!(compare(&a, &b, &off), None);
        let fin = Policy {
            writeback: false,
            ..Policy::with_final_state()
        };
        assert_eq!(compare(&a, &b, &fin).unwrap().field, Field::FinalState);
    }

    #[test]
    fn halt_cause_text_round_trip() {
        for c in [HaltCause::Ecall, HaltCause::MaxSteps, HaltCause::Trap(7)] {
            assert_eq!(c.to_string().parse::<HaltCause>().unwrap(), c);
        }
        assert!("trap(x)".parse::<HaltCause>().is_err());
    }
}
