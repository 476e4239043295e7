use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use mbt::formats;
use mbt_core::harness::RunVerdict;
use mbt_core::testgen::{Instr, Step, TestCase};
use mbt_core::Api;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn mbt_env(args: &[&str], env: &[(&str, &str)]) -> Out {
    let out = Command::new(env!("CARGO_BIN_EXE_mbt"))
        .args(args)
        .env_remove("MBT_SEEDED_DEFECT")
        .envs(env.iter().copied())
        .output()
        .unwrap();
    Out {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn mbt(args: &[&str]) -> Out {
    mbt_env(args, &[])
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn build(dir: &Path, config: &str, depth: u32, extra: &[&str]) -> PathBuf {
    let cfg = data(config);
    let tree = dir.join("tree.json");
    let d = depth.to_string();
    let mut args = vec![
        "explore",
        "--config",
        s(&cfg),
        "--depth",
        &d,
        "--out",
        s(&tree),
    ];
    args.extend_from_slice(extra);
    assert_eq!(mbt(&args).code, 0);
    let cases = dir.join("cases");
    assert_eq!(
        mbt(&[
            "gen",
            "--config",
            s(&cfg),
            "--tree",
            s(&tree),
            "--out",
            s(&cases)
        ])
        .code,
        0
    );
    let programs = dir.join("programs");
    assert_eq!(
        mbt(&["progen", "--cases", s(&cases), "--out", s(&programs)]).code,
        0
    );
    programs
}

#[test]
fn every_data_config_parses_and_matches_its_fixture() {
    use mbt_core::ConfigDoc;
    use mbt_oracle::fixtures as f;
    let expected = [
        ("preempt.json", ConfigDoc::Classic(f::preempt())),
        ("chain.json", ConfigDoc::Classic(f::chain_events(true))),
        (
            "chain-keep-events.json",
            ConfigDoc::Classic(f::chain_events(false)),
        ),
        ("fifo.json", ConfigDoc::Classic(f::fifo())),
        ("spinlock.json", ConfigDoc::Classic(f::spinlock())),
        ("desk-classic.json", ConfigDoc::Classic(f::desk_classic())),
        ("posix-mini.json", ConfigDoc::Posix(f::posix_mini())),
        ("posix-boost.json", ConfigDoc::Posix(f::posix_boost())),
        ("posix-wake.json", ConfigDoc::Posix(f::posix_wake())),
        ("posix-handoff.json", ConfigDoc::Posix(f::posix_handoff())),
    ];
    for (name, doc) in expected {
        let text = fs::read_to_string(data(name)).unwrap();
        let parsed = formats::parse_config(&text, None).unwrap();
        assert_eq!(parsed, doc, "{name}");
        assert_eq!(
            formats::config_to_json(&parsed),
            text,
            "{name} is not canonical"
        );
    }
}

#[test]
fn check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let r = mbt(&["check", "--usecases", s(dir.path())]);
    assert_eq!(r.code, 0);
    assert!(r.stderr.contains("warning"), "{}", r.stderr);

    let r = mbt(&["check", "--usecases", s(&data(""))]);
    assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);

    fs::write(
        dir.path().join("bad.uc"),
        "usecase bad\nstate s0 : T1=RUN, T2=SUS\nedge s0 -> s9 : T1:Nope() = E_OK\n",
    )
    .unwrap();
    let r = mbt(&[
        "check",
        "--usecases",
        s(dir.path()),
        "--config",
        s(&data("preempt.json")),
    ]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("bad.uc"), "{}", r.stderr);

    let r = mbt(&["check", "--usecases", "/nonexistent"]);
    assert_eq!(r.code, 2);
}

#[test]
fn seeded_defect_must_exist_and_apply() {
    let r = mbt_env(
        &["check", "--usecases", s(&data(""))],
        &[("MBT_SEEDED_DEFECT", "nope")],
    );
    assert_eq!(r.code, 2);
    let r = mbt_env(
        &["check", "--usecases", s(&data(""))],
        &[("MBT_SEEDED_DEFECT", "posix-trylock-ercd")],
    );
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("does not apply"), "{}", r.stderr);
}

#[test]
fn depth_zero_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.json");
    let r = mbt(&[
        "explore",
        "--config",
        s(&data("preempt.json")),
        "--depth",
        "0",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 2);
    assert!(!out.exists());
}

#[test]
fn depth_one_without_invocables_gives_one_trivial_case() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data("preempt.json");
    let tree = dir.path().join("t.json");
    let r = mbt(&[
        "explore",
        "--config",
        s(&cfg),
        "--depth",
        "1",
        "--apis",
        "",
        "--out",
        s(&tree),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let cases = dir.path().join("cases");
    assert_eq!(
        mbt(&[
            "gen",
            "--config",
            s(&cfg),
            "--tree",
            s(&tree),
            "--out",
            s(&cases)
        ])
        .code,
        0
    );
    let files: Vec<_> = fs::read_dir(&cases)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".json"))
        .collect();
    assert_eq!(files, ["tc-00001.json"]);
    let case =
        formats::case_from_json(&fs::read_to_string(cases.join("tc-00001.json")).unwrap()).unwrap();
    assert!(case.steps.iter().all(|s| !matches!(s, Step::Invoke { .. })));
}

#[test]
fn budget_exhaustion_exits_two_and_flags_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data("desk-classic.json");
    let tree = dir.path().join("t.json");
    let r = mbt(&[
        "explore",
        "--config",
        s(&cfg),
        "--depth",
        "6",
        "--max-nodes",
        "5",
        "--out",
        s(&tree),
    ]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("truncated"), "{}", r.stderr);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&tree).unwrap()).unwrap();
    assert_eq!(v["complete"], false);
    assert_eq!(v["truncated"]["budget"], "nodes");
    assert!(!dir.path().join("t.json.sha256").exists());

    let cases = dir.path().join("cases");
    let r = mbt(&[
        "gen",
        "--config",
        s(&cfg),
        "--tree",
        s(&tree),
        "--out",
        s(&cases),
    ]);
    assert_eq!(r.code, 0);
    assert!(r.stderr.contains("non-exhaustive"), "{}", r.stderr);
    let case =
        formats::case_from_json(&fs::read_to_string(cases.join("tc-00001.json")).unwrap()).unwrap();
    assert!(!case.exhaustive);
}

#[test]
fn phases_are_cached_by_content() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data("fifo.json");
    let tree = dir.path().join("t.json");
    let args = [
        "explore",
        "--config",
        s(&cfg),
        "--depth",
        "4",
        "--out",
        s(&tree),
    ];
    assert!(!mbt(&args).stdout.contains("up to date"));
    let first = fs::read(&tree).unwrap();
    assert!(mbt(&args).stdout.contains("up to date"));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert!(!mbt(&forced).stdout.contains("up to date"));
    assert_eq!(fs::read(&tree).unwrap(), first);

    fs::write(&tree, "{}").unwrap();
    assert!(!mbt(&args).stdout.contains("up to date"));
    assert_eq!(fs::read(&tree).unwrap(), first);

    let deeper = [
        "explore",
        "--config",
        s(&cfg),
        "--depth",
        "5",
        "--out",
        s(&tree),
    ];
    assert!(!mbt(&deeper).stdout.contains("up to date"));

    let cases = dir.path().join("cases");
    let gen = [
        "gen",
        "--config",
        s(&cfg),
        "--tree",
        s(&tree),
        "--out",
        s(&cases),
    ];
    assert!(!mbt(&gen).stdout.contains("up to date"));
    assert!(mbt(&gen).stdout.contains("up to date"));
    let states = [
        "gen",
        "--config",
        s(&cfg),
        "--tree",
        s(&tree),
        "--out",
        s(&cases),
        "--coverage",
        "states",
    ];
    assert!(!mbt(&states).stdout.contains("up to date"));
}

#[test]
fn regeneration_clears_stale_cases() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data("desk-classic.json");
    let tree = dir.path().join("t.json");
    let cases = dir.path().join("cases");
    assert_eq!(
        mbt(&[
            "explore",
            "--config",
            s(&cfg),
            "--depth",
            "4",
            "--out",
            s(&tree)
        ])
        .code,
        0
    );
    assert_eq!(
        mbt(&[
            "gen",
            "--config",
            s(&cfg),
            "--tree",
            s(&tree),
            "--out",
            s(&cases)
        ])
        .code,
        0
    );
    let many = fs::read_dir(&cases).unwrap().count();
    assert_eq!(
        mbt(&[
            "explore",
            "--config",
            s(&cfg),
            "--depth",
            "1",
            "--out",
            s(&tree)
        ])
        .code,
        0
    );
    assert_eq!(
        mbt(&[
            "gen",
            "--config",
            s(&cfg),
            "--tree",
            s(&tree),
            "--out",
            s(&cases)
        ])
        .code,
        0
    );
    let few = fs::read_dir(&cases).unwrap().count();
    assert!(few < many, "{few} >= {many}");
}

#[test]
fn tree_from_another_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let tree = dir.path().join("t.json");
    assert_eq!(
        mbt(&[
            "explore",
            "--config",
            s(&data("fifo.json")),
            "--depth",
            "2",
            "--out",
            s(&tree)
        ])
        .code,
        0
    );
    let r = mbt(&[
        "gen",
        "--config",
        s(&data("preempt.json")),
        "--tree",
        s(&tree),
        "--out",
        s(&dir.path().join("c")),
    ]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("different configuration"), "{}", r.stderr);
}

#[test]
fn run_exit_codes_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let programs = build(dir.path(), "posix-mini.json", 6, &[]);
    let cfg = data("posix-mini.json");
    let logs = dir.path().join("logs");
    let run = |sut: &str| {
        mbt(&[
            "run",
            "--config",
            s(&cfg),
            "--programs",
            s(&programs),
            "--logs",
            s(&logs),
            "--sut",
            sut,
        ])
    };

    assert_eq!(run("reference").code, 0);
    assert!(!logs.join("runs.partial.jsonl").exists());
    assert_eq!(mbt(&["report", "--logs", s(&logs)]).code, 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(logs.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["failed"], 0);
    assert_eq!(report["clusters"].as_array().unwrap().len(), 0);

    assert_eq!(run("mutant:posix-trylock-ercd").code, 1);
    let r = mbt(&["report", "--logs", s(&logs)]);
    assert_eq!(r.code, 1);
    assert!(r.stdout.contains("mutex_trylock"), "{}", r.stdout);

    assert_eq!(run("mutant:no-such-defect").code, 2);
    assert_eq!(run("mutant:classic-spinlock-no-nesting-check").code, 2);
    assert_eq!(run("hardware").code, 2);
    let r = run("external:exit 0");
    assert_eq!(r.code, 2);
    let logs =
        formats::logs_from_jsonl(&fs::read_to_string(logs.join("runs.jsonl")).unwrap()).unwrap();
    assert!(logs
        .iter()
        .all(|l| l.verdict == RunVerdict::Error && l.attempts == 2));
}

#[test]
fn external_adapter_matches_in_process_runs() {
    let dir = tempfile::tempdir().unwrap();
    let programs = build(dir.path(), "posix-handoff.json", 4, &[]);
    let cfg = data("posix-handoff.json");
    let serve = format!("external:{} serve-sut", env!("CARGO_BIN_EXE_mbt"));
    for (inproc, external) in [
        ("reference".to_string(), serve.clone()),
        (
            "mutant:posix-condsignal-wrong-wake".to_string(),
            format!("{serve} --defect posix-condsignal-wrong-wake"),
        ),
    ] {
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        let ra = mbt(&[
            "run",
            "--config",
            s(&cfg),
            "--programs",
            s(&programs),
            "--logs",
            s(&a),
            "--sut",
            &inproc,
            "--jobs",
            "4",
        ]);
        let rb = mbt(&[
            "run",
            "--config",
            s(&cfg),
            "--programs",
            s(&programs),
            "--logs",
            s(&b),
            "--sut",
            &external,
            "--jobs",
            "4",
        ]);
        assert_eq!(ra.code, rb.code, "{inproc}: {}", rb.stderr);
        let canon = |d: &Path| {
            let logs = formats::logs_from_jsonl(&fs::read_to_string(d.join("runs.jsonl")).unwrap())
                .unwrap();
            formats::logs_to_jsonl(&logs.iter().map(|l| l.canonical()).collect::<Vec<_>>())
        };
        assert_eq!(canon(&a), canon(&b), "{inproc}");
    }
}

fn is_chain_shape(case: &TestCase) -> bool {
    let invokes: Vec<_> = case
        .steps
        .iter()
        .filter_map(|s| match s {
            Step::Invoke {
                invoker, api, args, ..
            } => Some(format!("{invoker}:{}({})", api.as_str(), args.join(","))),
            _ => None,
        })
        .collect();
    invokes
        == [
            "EXTERNAL:ActivateTask(T1)",
            "T1:SetEvent(T1,E1)",
            "T1:ChainTask(T1)",
        ]
}

#[test]
fn preliminary_phase_detects_event_not_cleared() {
    let dir = tempfile::tempdir().unwrap();
    let short = build(
        &dir.path().join("short"),
        "chain.json",
        3,
        &["--apis", "ActivateTask,TerminateTask,SetEvent,ChainTask"],
    );
    let long = build(&dir.path().join("long"), "chain.json", 6, &[]);

    // The distinguishing program among ten longer, non-distinguishing ones.
    let suite = dir.path().join("suite");
    fs::create_dir(&suite).unwrap();
    let cases = dir.path().join("short/cases");
    let chain = fs::read_dir(&cases)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| {
            p.extension().is_some_and(|e| e == "json")
                && is_chain_shape(
                    &formats::case_from_json(&fs::read_to_string(p).unwrap()).unwrap(),
                )
        })
        .unwrap();
    let id = chain.file_stem().unwrap().to_str().unwrap().to_string();
    let mut program =
        formats::program_from_json(&fs::read_to_string(short.join(format!("{id}.json"))).unwrap())
            .unwrap();
    program.id = "distinguishing".to_string();
    fs::write(
        suite.join("distinguishing.json"),
        formats::program_to_json(&program),
    )
    .unwrap();
    let mut fillers = 0;
    let mut paths: Vec<_> = fs::read_dir(&long)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    for p in paths
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
    {
        let other = formats::program_from_json(&fs::read_to_string(p).unwrap()).unwrap();
        let chains = other.tasks.values().flatten().any(|i| {
            matches!(
                i,
                Instr::Perform {
                    api: Api::ChainTask,
                    ..
                }
            )
        });
        if other.steps > program.steps && !chains && fillers < 20 {
            fs::copy(p, suite.join(p.file_name().unwrap())).unwrap();
            fillers += 1;
        }
    }
    assert_eq!(fillers, 20);

    let cfg = data("chain.json");
    let logs = dir.path().join("logs");
    let r = mbt(&[
        "run",
        "--config",
        s(&cfg),
        "--programs",
        s(&suite),
        "--logs",
        s(&logs),
        "--sut",
        "mutant:classic-chaintask-event-not-cleared",
        "--preliminary",
        "10",
    ]);
    assert_eq!(r.code, 1, "{}", r.stdout);
    let logs =
        formats::logs_from_jsonl(&fs::read_to_string(logs.join("runs.jsonl")).unwrap()).unwrap();
    assert_eq!(logs.len(), 10);
    let failing: Vec<_> = logs
        .iter()
        .filter(|l| l.verdict == RunVerdict::Fail)
        .collect();
    assert_eq!(failing.len(), 1);
    assert_eq!(failing[0].program, "distinguishing");
    assert_eq!(failing[0].first_failing_step(), Some(18));
}

#[test]
fn manifest_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.json");
    let tree = dir.path().join("t.json");
    let doc = serde_json::json!({
        "config": data("preempt.json"),
        "tree": tree,
        "cases": dir.path().join("cases"),
        "depth": 3,
        "coverage": "states",
    });
    fs::write(&manifest, doc.to_string()).unwrap();
    assert_eq!(mbt(&["explore", "--manifest", s(&manifest)]).code, 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&tree).unwrap()).unwrap();
    assert_eq!(v["depth_bound"], 3);
    assert_eq!(
        mbt(&["explore", "--manifest", s(&manifest), "--depth", "2"]).code,
        0
    );
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&tree).unwrap()).unwrap();
    assert_eq!(v["depth_bound"], 2);
    assert_eq!(mbt(&["gen", "--manifest", s(&manifest)]).code, 0);
    assert!(dir.path().join("cases/tc-00001.json").exists());

    fs::write(&manifest, r#"{"depth": 0}"#).unwrap();
    assert_eq!(mbt(&["explore", "--manifest", s(&manifest)]).code, 2);
    fs::write(&manifest, r#"{"colour": "red"}"#).unwrap();
    assert_eq!(mbt(&["explore", "--manifest", s(&manifest)]).code, 2);
}

#[test]
fn mutants_command_reports_kills() {
    let r = mbt(&[
        "mutants",
        "--config",
        s(&data("posix-mini.json")),
        "--depth",
        "6",
    ]);
    assert!(
        r.stdout.contains("killed    posix-trylock-ercd"),
        "{}",
        r.stdout
    );
    assert!(
        r.stdout.lines().all(|l| !l.contains("classic-")),
        "{}",
        r.stdout
    );
}
