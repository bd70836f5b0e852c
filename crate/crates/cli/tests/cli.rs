use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rvfuzz_core::isa::decode;
use rvfuzz_core::similarity::{instruction_similarity, SimilarityConfig};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(rel: &str) -> PathBuf {
    root().join("fixtures").join(rel)
}

fn rvfuzz(args: &[&str]) -> Output {
    let bin = Path::new(env!("CARGO_BIN_EXE_rvfuzz"));
    let path = format!(
        "{}:{}",
        bin.parent().unwrap().display(),
        std::env::var("PATH").unwrap_or_default()
    );
    Command::new(bin)
        .args(args)
        .env("PATH", path)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn golden(name: &str, args: &[&str]) {
    let out = rvfuzz(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let expected = std::fs::read_to_string(fixture(&format!("golden/{name}"))).unwrap();
    assert_eq!(stdout(&out), expected, "golden {name}");
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn golden_outputs() {
    let two = fixture("seeds/two_blocks.hex");
    let mixed = fixture("seeds/mixed.hex");
    golden("segment_two_blocks.txt", &["segment", p(&two)]);
    golden(
        "segment_mixed.ndjson",
        &["--output", "structured", "segment", p(&mixed), "--disasm"],
    );
    golden("sim_add_sub.txt", &["sim", "0x003100b3", "0x403100b3"]);
    golden(
        "mutate_mixed.txt",
        &[
            "--rng-seed",
            "7",
            "mutate",
            p(&mixed),
            "--rounds",
            "3",
            "--executable-only",
        ],
    );
}

#[test]
fn segment_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.bin");
    std::fs::write(&empty, []).unwrap();
    let out = rvfuzz(&["segment", p(&empty)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("0 blocks"));

    let truncated = dir.path().join("t.bin");
    std::fs::write(&truncated, [0x13, 0, 0, 0, 0x13, 0]).unwrap();
    let out = rvfuzz(&["segment", p(&truncated), "--format", "raw"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trailing bytes"));
}

#[test]
fn sim_matches_library() {
    let out = rvfuzz(&["sim", "003100b3", "403100b3"]);
    let total: f64 = stdout(&out)
        .lines()
        .find_map(|l| l.strip_prefix("total"))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    let lib = instruction_similarity(
        &decode(0x003100b3).unwrap(),
        &decode(0x403100b3).unwrap(),
        &SimilarityConfig::default(),
    );
    assert_eq!(total, lib.value);
    assert!((lib.value - 662.0 / 665.0).abs() < 1e-15);

    let same = rvfuzz(&["sim", "0x00a00093", "0x00a00093"]);
    assert!(stdout(&same).contains("total        1\n"));

    assert_eq!(
        rvfuzz(&["sim", "0x00000000", "0x00000013"]).status.code(),
        Some(2)
    );
    assert_eq!(rvfuzz(&["sim", "zz", "0x00000013"]).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let probe = fixture("probes/sltu-flip.hex");
    assert_eq!(
        rvfuzz(&["fuzz", p(&probe), "--rounds", "5"]).status.code(),
        Some(0)
    );
    assert_eq!(
        rvfuzz(&[
            "fuzz",
            p(&probe),
            "--rounds",
            "5",
            "--backend-b",
            "bug:sltu-flip"
        ])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        rvfuzz(&["difftest", p(&probe), "--backend-b", "bug:sltu-flip"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(rvfuzz(&["difftest", p(&probe)]).status.code(), Some(0));
    assert_eq!(
        rvfuzz(&["difftest", p(&probe), "--backend-b", "bug:nope"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(rvfuzz(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(rvfuzz(&["fuzz"]).status.code(), Some(2));
}

#[test]
fn bad_config_fails_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[mutation]\nthreshold = 3.0\n").unwrap();
    let out_dir = dir.path().join("mutants");
    let out = rvfuzz(&[
        "--config",
        p(&cfg),
        "mutate",
        p(&fixture("seeds/mixed.hex")),
        "--out-dir",
        p(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());

    let good = dir.path().join("good.toml");
    std::fs::write(&good, "[mutation]\nretries = 0\n").unwrap();
    let out = rvfuzz(&[
        "--config",
        p(&good),
        "mutate",
        p(&fixture("seeds/mixed.hex")),
    ]);
    assert!(stdout(&out).contains("blocks changed 0/3"));
}

#[test]
fn fuzz_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, jobs: &str| {
        let report = dir.path().join(name);
        let out = rvfuzz(&[
            "--rng-seed",
            "11",
            "fuzz",
            p(&fixture("seeds/mixed.hex")),
            p(&fixture("probes/sltu-flip.hex")),
            "--backend-b",
            "bug:sltu-flip",
            "--rounds",
            "8",
            "--jobs",
            jobs,
            "--report",
            p(&report),
        ]);
        (stdout(&out), std::fs::read(report).unwrap())
    };
    let (out1, r1) = run("a.json", "1");
    let (out2, r2) = run("b.json", "4");
    assert_eq!(out1, out2);
    assert_eq!(r1, r2);
}

#[test]
fn mutate_records_mutants_in_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let out_dir = dir.path().join("out");
    let out = rvfuzz(&[
        "mutate",
        p(&fixture("seeds/mixed.hex")),
        "--rounds",
        "2",
        "--corpus",
        p(&corpus),
        "--out-dir",
        p(&out_dir),
        "--hex",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read_dir(&out_dir).unwrap().count(), 2);
    let stats = rvfuzz(&["--output", "structured", "corpus", "stats", p(&corpus)]);
    let v: serde_json::Value = serde_json::from_str(stdout(&stats).trim()).unwrap();
    assert_eq!(v["by_origin"]["generated"], 1);
    assert_eq!(v["by_origin"]["mutant"], 2);
}

#[test]
fn corpus_import_and_add() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::copy(
        fixture("probes/sltu-flip.hex"),
        dir.path().join("probe.hex"),
    )
    .unwrap();
    let records = dir.path().join("records.jsonl");
    std::fs::write(
        &records,
        concat!(
            r#"{"origin":"historical-bug","source_processor":"cva6","report_url":"https://example.org/7","resource_class":"executable","seed_path":"probe.hex","needs_manual_testcase":false,"title":"sltu"}"#,
            "\n",
            r#"{"origin":"historical-bug","report_url":"https://example.org/8","resource_class":"description-only","needs_manual_testcase":true,"title":"text only"}"#,
            "\n"
        ),
    )
    .unwrap();
    let out = rvfuzz(&["corpus", "import", p(&corpus), p(&records)]);
    assert_eq!(stdout(&out), "added 1 duplicates 0 pending 1\n");

    let out = rvfuzz(&[
        "corpus",
        "add",
        p(&corpus),
        p(&fixture("elf/two_nops.elf")),
        "--origin",
        "historical-bug",
    ]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "historical seed without provenance"
    );
    let out = rvfuzz(&[
        "corpus",
        "add",
        p(&corpus),
        p(&fixture("elf/two_nops.elf")),
        "--origin",
        "historical-bug",
        "--manual",
    ]);
    assert_eq!(out.status.code(), Some(0));

    let stats = rvfuzz(&["corpus", "stats", p(&corpus)]);
    let text = stdout(&stats);
    assert!(text.contains("seeds 2 pending 1"), "{text}");
    assert!(text.contains("historical-bug=2"));

    let fuzz = rvfuzz(&[
        "fuzz",
        "--corpus",
        p(&corpus),
        "--backend-b",
        "bug:sltu-flip",
        "--rounds",
        "4",
    ]);
    assert_eq!(fuzz.status.code(), Some(1));
}

#[test]
fn external_self_backend() {
    let out = rvfuzz(&[
        "difftest",
        p(&fixture("seeds/mixed.hex")),
        "--backend-b",
        &format!("external:{}", p(&fixture("backends/self.toml"))),
        "--final-state",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
