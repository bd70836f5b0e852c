//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fail.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rvfuzz_core::difftest::external::BackendConfig;
use rvfuzz_core::difftest::{
    compare, interp, run_campaign, run_external, run_reference, run_reference_with_bug, Backend,
    CampaignConfig, Field, InjectedBug, Limits, Policy, SeedInput,
};
use rvfuzz_core::isa::{decode, encode, parse_hex_text, Entry, OpId};
use rvfuzz_core::mutation::{mutant_rng, mutate_seed, reassemble, Block, MutationConfig, Seed};
use rvfuzz_core::similarity::{
    block_similarity, entry_similarity, instruction_similarity, SimilarityConfig, SimilarityScore,
};

type Outcome = Result<String, String>;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
}

fn bytes_of(words: &[u32]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_le_bytes()).collect()
}

/// A random valid encoding of `op`.
fn fill(op: OpId, rng: &mut impl Rng) -> u32 {
    let spec = op.spec();
    loop {
        let w = spec.matches | (rng.gen::<u32>() & !spec.mask);
        if decode(w).is_some_and(|i| i.op == op) {
            return w;
        }
    }
}

fn random_inst_word(ops: &[OpId], rng: &mut impl Rng) -> u32 {
    fill(ops[rng.gen_range(0..ops.len())], rng)
}

fn round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0usize;
    let mut failures = Vec::new();
    for op in OpId::all() {
        for _ in 0..1000 {
            let w = fill(op, &mut rng);
            let inst = decode(w).expect("fill decodes");
            match encode(&inst) {
                Ok(back) if back == w => {}
                other => failures.push(format!("{} {w:#010x} -> {other:?}", op.spec().mnemonic)),
            }
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    if !failures.is_empty() {
        return Err(format!(
            "{} failures, first: {}",
            failures.len(),
            failures[0]
        ));
    }
    if elapsed > Duration::from_secs(60) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!(
        "{checked} words over {} encodings in {elapsed:.2?}",
        OpId::all().count()
    ))
}

fn similarity_laws() -> Outcome {
    let cfg = SimilarityConfig::default();
    let ops: Vec<OpId> = OpId::all().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in 0..10_000 {
        let a = decode(random_inst_word(&ops, &mut rng)).unwrap();
        let b = decode(random_inst_word(&ops, &mut rng)).unwrap();
        let ab = instruction_similarity(&a, &b, &cfg);
        let ba = instruction_similarity(&b, &a, &cfg);
        if ab != ba {
            return Err(format!(
                "pair {n}: asymmetric {:#010x} {:#010x}",
                a.word, b.word
            ));
        }
        if instruction_similarity(&a, &a, &cfg).value != 1.0 {
            return Err(format!("pair {n}: S(i,i) != 1 for {:#010x}", a.word));
        }
        let parts = [
            ab.value,
            ab.breakdown.type_,
            ab.breakdown.opcode,
            ab.breakdown.subsemantic,
            ab.breakdown.field,
        ];
        if parts.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(format!("pair {n}: out of range {parts:?}"));
        }
        let bd = ab.breakdown;
        let recomputed = (cfg.w_tp * bd.type_
            + cfg.w_op * bd.opcode
            + cfg.w_sm * bd.subsemantic
            + cfg.w_f * bd.field)
            / (cfg.w_tp + cfg.w_op + cfg.w_sm + cfg.w_f);
        if (recomputed - ab.value).abs() > 1e-12 || SimilarityScore::combine(bd, &cfg) != ab.value {
            return Err(format!(
                "pair {n}: breakdown sum {recomputed} vs {}",
                ab.value
            ));
        }
    }
    Ok("10000 pairs: symmetric, S(i,i)=1, in [0,1], breakdown consistent".into())
}

fn random_block(len: usize, ops: &[OpId], rng: &mut impl Rng) -> Block {
    let body = (0..len)
        .map(|_| {
            if rng.gen_bool(0.1) {
                Entry::Opaque(rng.gen::<u32>() & !0x7f)
            } else {
                Entry::from_word(random_inst_word(ops, rng))
            }
        })
        .collect();
    Block {
        body,
        terminator: None,
        start_offset: 0,
    }
}

/// Straight-line transcription of the block similarity algorithm.
fn oracle(b1: &[Entry], b2: &[Entry], cfg: &SimilarityConfig) -> f64 {
    let size = b1.len().min(b2.len());
    let mut sim = 0.0;
    for i in 0..size {
        let differs = if b1[i].word() != b2[i].word() {
            1.0
        } else {
            0.0
        };
        if differs == 1.0 {
            sim += differs * entry_similarity(&b1[i], &b2[i], cfg);
        }
    }
    sim / size as f64
}

fn block_fidelity() -> Outcome {
    let cfg = SimilarityConfig::default();
    let ops: Vec<OpId> = OpId::all().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 0..1000 {
        let b1 = random_block(rng.gen_range(1..=16), &ops, &mut rng);
        let mut b2 = random_block(rng.gen_range(1..=16), &ops, &mut rng);
        // Share some positions so the difference indicator matters.
        for (i, e) in b1.body.iter().enumerate() {
            if i < b2.body.len() && rng.gen_bool(0.3) {
                b2.body[i] = *e;
            }
        }
        let got = block_similarity(&b1, &b2, &cfg).map_err(|e| e.to_string())?;
        let want = oracle(&b1.body, &b2.body, &cfg);
        if got != want {
            return Err(format!("pair {n}: {got} != oracle {want}"));
        }
        if block_similarity(&b1, &b1, &cfg) != Ok(0.0) {
            return Err(format!("pair {n}: identical blocks score nonzero"));
        }
    }
    Ok("1000 random pairs equal the oracle; identical blocks score 0".into())
}

fn random_seed(rng: &mut impl Rng, ops: &[OpId]) -> Vec<u8> {
    let ctis: Vec<OpId> = ops
        .iter()
        .copied()
        .filter(|op| decode(op.spec().matches).is_some_and(|i| i.is_cti()))
        .collect();
    let plain: Vec<OpId> = ops
        .iter()
        .copied()
        .filter(|op| !ctis.contains(op))
        .collect();
    let words: Vec<u32> = (0..rng.gen_range(1..=48))
        .map(|_| match rng.gen_range(0..10) {
            0 => rng.gen::<u32>() & !0x7f,
            1 | 2 => random_inst_word(&ctis, rng),
            _ => random_inst_word(&plain, rng),
        })
        .collect();
    bytes_of(&words)
}

fn mutation_fidelity() -> Outcome {
    let simcfg = SimilarityConfig::default();
    let cfg = MutationConfig {
        threshold: 0.5,
        rng_seed: 4,
        ..MutationConfig::default()
    };
    let zero = MutationConfig {
        retries: 0,
        ..cfg.clone()
    };
    let ops: Vec<OpId> = OpId::all().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut accepted = 0;
    for n in 0..500 {
        let bytes = random_seed(&mut rng, &ops);
        let seed = Seed::from_bytes(&bytes).unwrap();
        let (mutant, report) = mutate_seed(
            &seed,
            &cfg,
            &simcfg,
            &mut mutant_rng(cfg.rng_seed, &seed.id, 0),
        );
        let out = reassemble(&mutant);
        if mutant.blocks.len() != seed.blocks.len() || out.len() != bytes.len() {
            return Err(format!("seed {n}: shape changed"));
        }
        if mutant.terminator_words() != seed.terminator_words() {
            return Err(format!("seed {n}: terminators changed"));
        }
        for br in &report.blocks {
            let (orig, new) = (&seed.blocks[br.index], &mutant.blocks[br.index]);
            if br.accepted {
                accepted += 1;
                let sim = block_similarity(orig, new, &simcfg).unwrap();
                if !cfg.accept_polarity.accepts(sim, cfg.threshold) || Some(sim) != br.similarity {
                    return Err(format!(
                        "seed {n} block {}: accepted with similarity {sim}",
                        br.index
                    ));
                }
            } else if orig != new {
                return Err(format!(
                    "seed {n} block {}: rejected block was modified",
                    br.index
                ));
            }
        }
        let (same, _) = mutate_seed(&seed, &zero, &simcfg, &mut mutant_rng(0, &seed.id, 0));
        if reassemble(&same) != bytes {
            return Err(format!("seed {n}: R=0 changed the seed"));
        }
    }
    Ok(format!(
        "500 seeds, {accepted} accepted blocks rechecked; shape and CTIs preserved; R=0 identity"
    ))
}

fn executable_seed(rng: &mut impl Rng, exec: &[OpId]) -> Vec<u8> {
    let mut words: Vec<u32> = (0..rng.gen_range(2..24))
        .map(|_| random_inst_word(exec, rng))
        .collect();
    words.push(0x0000_0073);
    bytes_of(&words)
}

fn differential_soundness() -> Outcome {
    let start = Instant::now();
    let exec: Vec<OpId> = OpId::all()
        .filter(|op| {
            interp::supports(*op) && !decode(op.spec().matches).is_some_and(|i| i.is_cti())
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let seeds: Vec<SeedInput> = (0..20)
        .map(|i| SeedInput {
            id: format!("s{i}"),
            bytes: executable_seed(&mut rng, &exec),
        })
        .collect();
    let cfg = CampaignConfig {
        rounds: 10,
        mutation: MutationConfig {
            executable_only: true,
            rng_seed: 5,
            ..MutationConfig::default()
        },
        ..CampaignConfig::default()
    };
    let report = run_campaign(&seeds, &cfg, &Backend::Reference, &Backend::Reference);
    if report.mutants != 200 || report.unique_divergences != 0 || report.errors != 0 {
        return Err(format!(
            "clean vs clean: {} mutants, {} divergences, {} errors",
            report.mutants, report.unique_divergences, report.errors
        ));
    }

    let expected = [
        (InjectedBug::AddiwNoSext, Field::Writeback),
        (InjectedBug::SltuFlip, Field::Writeback),
        (InjectedBug::ImmRangeUnchecked, Field::TraceLength),
        (InjectedBug::JalrMisalignedOk, Field::TraceLength),
    ];
    let limits = Limits::default();
    for (bug, field) in expected {
        let text = std::fs::read_to_string(fixture(&format!("probes/{}.hex", bug.id())))
            .map_err(|e| e.to_string())?;
        let program = bytes_of(&parse_hex_text(&text).map_err(|e| e.to_string())?);
        let d = compare(
            &run_reference(&program, &limits),
            &run_reference_with_bug(&program, &limits, bug),
            &Policy::default(),
        );
        match d {
            Some(d) if d.field == field => {}
            other => {
                return Err(format!(
                    "{bug}: expected {field}, got {:?}",
                    other.map(|d| d.field)
                ))
            }
        }
        let probe = SeedInput {
            id: bug.id().into(),
            bytes: program,
        };
        let campaign = run_campaign(
            &[probe],
            &CampaignConfig {
                rounds: 5,
                ..cfg.clone()
            },
            &Backend::Reference,
            &Backend::Bug(bug),
        );
        if campaign.mutants != 5 {
            return Err(format!("{bug}: campaign ran {} mutants", campaign.mutants));
        }
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(120) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!(
        "200 clean mutants, 0 divergences; 4/4 probes diverge on the expected field; {elapsed:.2?}"
    ))
}

fn fuzz_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<Vec<u8>, String> {
        let report = dir.path().join(name);
        let mut args: Vec<String> = [
            "--rng-seed",
            "21",
            "fuzz",
            "--backend-b",
            "bug:sltu-flip",
            "--rounds",
            "10",
            "--report",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        args.push(report.display().to_string());
        args.push(fixture("seeds/mixed.hex").display().to_string());
        for bug in InjectedBug::ALL {
            args.push(
                fixture(&format!("probes/{}.hex", bug.id()))
                    .display()
                    .to_string(),
            );
        }
        let out = Command::new(env!("CARGO_BIN_EXE_rvfuzz"))
            .args(&args)
            .output()
            .map_err(|e| e.to_string())?;
        if !matches!(out.status.code(), Some(0 | 1)) {
            return Err(String::from_utf8_lossy(&out.stderr).into_owned());
        }
        std::fs::read(&report).map_err(|e| e.to_string())
    };
    let (a, b) = (run("a.json")?, run("b.json")?);
    if a != b {
        return Err("reports differ".into());
    }
    Ok(format!("two runs wrote identical {}-byte reports", a.len()))
}

fn self_hosting() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_rvfuzz").to_string();
    let template =
        std::fs::read_to_string(fixture("backends/self.toml")).map_err(|e| e.to_string())?;
    let text = template.replacen("\"rvfuzz\"", &format!("{bin:?}"), 1);
    let cfg = BackendConfig::from_toml(&text, Path::new("self.toml")).map_err(|e| e.to_string())?;
    let exec: Vec<OpId> = OpId::all().filter(|op| interp::supports(*op)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let limits = Limits::default();
    for n in 0..50 {
        let program = executable_seed(&mut rng, &exec);
        let reference = run_reference(&program, &limits);
        let external =
            run_external(&program, &cfg, &limits).map_err(|e| format!("program {n}: {e}"))?;
        if external != reference {
            return Err(format!("program {n}: traces differ"));
        }
    }
    Ok("50 programs: external trace == run_reference".into())
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 7] = [
        ("encode/decode round trip", round_trip),
        ("similarity metric laws", similarity_laws),
        ("block similarity fidelity", block_fidelity),
        ("guided mutation fidelity", mutation_fidelity),
        ("differential harness soundness", differential_soundness),
        ("fuzz report determinism", fuzz_determinism),
        ("external adapter self-hosting", self_hosting),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
