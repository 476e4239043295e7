//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when
//! any criterion fails. Expected values come either from the documented
//! scenarios or from the naive simulators and enumerators in `mbt-oracle`.

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use mbt::formats;
use mbt::runner::{self, SutSpec};
use mbt_core::defect::{panel, Cause};
use mbt_core::explorer::{explore, replay, ExploreSpec};
use mbt_core::harness::{reference_sut, run_program, RunLog, RunVerdict};
use mbt_core::ids::TaskId;
use mbt_core::model::successors;
use mbt_core::posix::PosixKernel;
use mbt_core::testgen::{
    allocate_to_tasks, generate_test_cases, CoverageGoal, Step, TestCase, TestProgram,
};
use mbt_core::usecase::{parse_usecase, print_usecase};
use mbt_core::{
    AnyKernel, Api, Call, ConfigDoc, Invocable, Invoker, Label, Model, Status, StatusCode,
};
use mbt_oracle::{classic as oc, fixtures, gen, posix as op};

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

fn config(name: &str) -> ConfigDoc {
    formats::parse_config(&fs::read_to_string(data(name)).unwrap(), None).unwrap()
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn mbt(args: &[&str], env: &[(&str, &str)]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_mbt"))
        .args(args)
        .env_remove("MBT_SEEDED_DEFECT")
        .envs(env.iter().copied())
        .output()
        .expect("mbt binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn mbt_ok(args: &[&str]) -> Result<Run, String> {
    let r = mbt(args, &[]);
    ensure!(
        r.code == 0,
        "mbt {} exited {}: {}{}",
        args.join(" "),
        r.code,
        r.stdout,
        r.stderr
    );
    Ok(r)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Explore, gen and progen through the binary; returns the tree path and
/// the case and program directories.
fn pipeline(
    dir: &Path,
    config: &Path,
    depth: u32,
    jobs: usize,
    extra: &[&str],
) -> Result<(PathBuf, PathBuf, PathBuf), String> {
    let tree = dir.join("tree.json");
    let cases = dir.join("cases");
    let programs = dir.join("programs");
    let depth = depth.to_string();
    let jobs = jobs.to_string();
    let mut args = vec![
        "explore",
        "--config",
        s(config),
        "--depth",
        &depth,
        "--jobs",
        &jobs,
        "--out",
        s(&tree),
    ];
    args.extend_from_slice(extra);
    mbt_ok(&args)?;
    mbt_ok(&[
        "gen",
        "--config",
        s(config),
        "--tree",
        s(&tree),
        "--coverage",
        "edges",
        "--out",
        s(&cases),
    ])?;
    mbt_ok(&["progen", "--cases", s(&cases), "--out", s(&programs)])?;
    Ok((tree, cases, programs))
}

fn read_cases(dir: &Path) -> Vec<TestCase> {
    json_files(dir)
        .iter()
        .map(|p| formats::case_from_json(&fs::read_to_string(p).unwrap()).unwrap())
        .collect()
}

fn json_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    files
}

fn invocations(case: &TestCase) -> Vec<(String, Api, Vec<String>)> {
    case.steps
        .iter()
        .filter_map(|s| match s {
            Step::Invoke {
                invoker, api, args, ..
            } => Some((invoker.clone(), *api, args.clone())),
            _ => None,
        })
        .collect()
}

fn run_logs(logs: &Path) -> Vec<RunLog> {
    formats::logs_from_jsonl(&fs::read_to_string(logs.join("runs.jsonl")).unwrap()).unwrap()
}

fn codes(obs: &mbt_core::Observation) -> Vec<&'static str> {
    obs.tasks.iter().map(|t| t.state.code()).collect()
}

fn preemption_trace() -> Check {
    let start = Instant::now();
    let doc = config("preempt.json");
    ensure!(
        doc == ConfigDoc::Classic(fixtures::preempt()),
        "data/preempt.json differs from the fixture"
    );
    let k = AnyKernel::new(&doc).unwrap();
    let (t1, t2) = (TaskId(0), TaskId(1));
    let steps = [
        (Invoker::Task(t1), Call::ActivateTask(t2)),
        (Invoker::Task(t2), Call::TerminateTask),
    ];
    let trace = replay(&k, &steps).map_err(|e| e.to_string())?;
    let got: Vec<Vec<&str>> = std::iter::once(&trace.initial)
        .chain(trace.steps.iter().map(|(_, o)| o))
        .map(codes)
        .collect();
    let want = vec![vec!["RUN", "SUS"], vec!["RDY", "RUN"], vec!["RUN", "SUS"]];
    ensure!(got == want, "observations {got:?}, expected {want:?}");
    ensure!(
        trace
            .steps
            .iter()
            .all(|(st, _)| *st == Status::Classic(StatusCode::Ok)),
        "statuses {:?}",
        trace.steps
    );

    let sim = oc::Sim::new(&fixtures::preempt());
    let mut st = sim.init();
    let mut naive = vec![sim
        .observe(&st)
        .0
        .iter()
        .map(|(c, _)| *c)
        .collect::<Vec<_>>()];
    for (who, call) in &steps {
        let who = match who {
            Invoker::Task(t) => Some(t.index()),
            Invoker::External => None,
        };
        st = sim
            .step(&st, who, oc::Op::from_call(call).unwrap())
            .unwrap()
            .1;
        naive.push(sim.observe(&st).0.iter().map(|(c, _)| *c).collect());
    }
    ensure!(naive == want, "naive simulator gives {naive:?}");

    let dir = tempfile::tempdir().unwrap();
    fs::copy(data("preempt.uc"), dir.path().join("preempt.uc")).unwrap();
    fs::copy(data("preempt.json"), dir.path().join("preempt.json")).unwrap();
    let r = mbt(&["check", "--usecases", s(dir.path())], &[]);
    ensure!(r.code == 0, "check exited {}: {}", r.code, r.stdout);
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(())
}

fn fifo_dispatch() -> Check {
    let doc = config("fifo.json");
    ensure!(
        doc == ConfigDoc::Classic(fixtures::fifo()),
        "data/fifo.json differs from the fixture"
    );
    let k = AnyKernel::new(&doc).unwrap();
    let names = doc.names();
    let (h, ta, tb) = (
        names.task("H").unwrap(),
        names.task("Ta").unwrap(),
        names.task("Tb").unwrap(),
    );
    let trace = replay(
        &k,
        &[
            (Invoker::Task(h), Call::ActivateTask(ta)),
            (Invoker::Task(h), Call::ActivateTask(tb)),
            (Invoker::Task(h), Call::TerminateTask),
        ],
    )
    .map_err(|e| e.to_string())?;
    let last = &trace.steps[2].1;
    ensure!(
        codes(last) == ["SUS", "RUN", "RDY"],
        "after dispatch: {:?}",
        codes(last)
    );
    ensure!(last.cores[0] == Some(ta), "core 0 runs {:?}", last.cores[0]);

    let dir = tempfile::tempdir().unwrap();
    for f in ["fifo.uc", "fifo.json"] {
        fs::copy(data(f), dir.path().join(f)).unwrap();
    }
    let r = mbt(&["check", "--usecases", s(dir.path())], &[]);
    ensure!(r.code == 0, "reference check exited {}", r.code);
    let r = mbt(
        &["check", "--usecases", s(dir.path())],
        &[("MBT_SEEDED_DEFECT", "classic-activate-head-enqueue")],
    );
    ensure!(r.code == 1, "head-enqueue check exited {}", r.code);
    ensure!(
        r.stdout
            .contains("replay: H:ActivateTask(Ta) H:ActivateTask(Tb) H:TerminateTask()"),
        "no replayable trace in {}",
        r.stdout
    );
    Ok(())
}

fn chain_shape(case: &TestCase) -> bool {
    let s = |x: &str| x.to_string();
    invocations(case)
        == [
            (s("EXTERNAL"), Api::ActivateTask, vec![s("T1")]),
            (s("T1"), Api::SetEvent, vec![s("T1"), s("E1")]),
            (s("T1"), Api::ChainTask, vec![s("T1")]),
        ]
}

fn chain_program(dir: &Path, config: &Path) -> Result<(TestCase, PathBuf), String> {
    let (_, cases, _) = pipeline(
        dir,
        config,
        3,
        2,
        &["--apis", "ActivateTask,TerminateTask,SetEvent,ChainTask"],
    )?;
    let case = read_cases(&cases)
        .into_iter()
        .find(chain_shape)
        .ok_or("no Activate/SetEvent/ChainTask case generated")?;
    let single = dir.join("single");
    fs::create_dir_all(&single).unwrap();
    fs::copy(
        dir.join("programs").join(format!("{}.json", case.id)),
        single.join("p.json"),
    )
    .unwrap();
    Ok((case, single))
}

fn first_failure(
    config: &Path,
    programs: &Path,
    sut: &str,
    logs: &Path,
) -> Result<Option<u32>, String> {
    let r = mbt(
        &[
            "run",
            "--config",
            s(config),
            "--programs",
            s(programs),
            "--sut",
            sut,
            "--logs",
            s(logs),
        ],
        &[],
    );
    ensure!(r.code <= 1, "run exited {}: {}", r.code, r.stderr);
    let logs = run_logs(logs);
    ensure!(logs.len() == 1, "{} logs", logs.len());
    ensure!(
        (r.code == 1) == (logs[0].verdict == RunVerdict::Fail),
        "exit {} vs {:?}",
        r.code,
        logs[0].verdict
    );
    Ok(logs[0].first_failing_step())
}

fn chaintask_discrepancy() -> Check {
    let mutant = "mutant:classic-chaintask-event-not-cleared";
    let clears = data("chain.json");
    let keeps = data("chain-keep-events.json");
    ensure!(
        config("chain.json") == ConfigDoc::Classic(fixtures::chain_events(true)),
        "chain.json differs"
    );
    ensure!(
        config("chain-keep-events.json") == ConfigDoc::Classic(fixtures::chain_events(false)),
        "chain-keep-events.json differs"
    );
    let dir = tempfile::tempdir().unwrap();
    let (case, program) = chain_program(&dir.path().join("clears"), &clears)?;
    ensure!(
        case.steps.len() == 18,
        "case has {} steps",
        case.steps.len()
    );
    ensure!(
        matches!(&case.steps[17], Step::CheckEvent { expect: 0, .. }),
        "step 18 is {:?}",
        case.steps[17]
    );
    let logs = dir.path().join("logs");
    let m = first_failure(&clears, &program, mutant, &logs.join("a"))?;
    ensure!(m == Some(18), "mutant first fails at {m:?}");
    let r = first_failure(&clears, &program, "reference", &logs.join("b"))?;
    ensure!(r.is_none(), "reference fails at {r:?}");

    // Model keeps events; the clearing implementation is now the outlier.
    let (case, program) = chain_program(&dir.path().join("keeps"), &keeps)?;
    ensure!(
        matches!(&case.steps[17], Step::CheckEvent { expect: 1, .. }),
        "step 18 is {:?}",
        case.steps[17]
    );
    let r = first_failure(&clears, &program, "reference", &logs.join("c"))?;
    ensure!(r == Some(18), "clearing reference first fails at {r:?}");
    let m = first_failure(&clears, &program, mutant, &logs.join("d"))?;
    ensure!(m.is_none(), "non-clearing mutant fails at {m:?}");
    Ok(())
}

fn spinlock_nesting() -> Check {
    let cfg = data("spinlock.json");
    ensure!(
        config("spinlock.json") == ConfigDoc::Classic(fixtures::spinlock()),
        "spinlock.json differs"
    );
    let dir = tempfile::tempdir().unwrap();
    let (_, cases, programs) = pipeline(dir.path(), &cfg, 6, 4, &[])?;
    let deadlock = Status::Classic(StatusCode::NestingDeadlock);
    let asserting: Vec<String> = read_cases(&cases)
        .into_iter()
        .filter(|c| {
            c.steps.iter().any(|s| {
                matches!(s, Step::Invoke { api: Api::GetSpinlock, expect, .. } if *expect == deadlock)
            })
        })
        .map(|c| c.id)
        .collect();
    ensure!(!asserting.is_empty(), "no case asserts {deadlock}");
    let logs = dir.path().join("logs");
    let r = mbt(
        &[
            "run",
            "--config",
            s(&cfg),
            "--programs",
            s(&programs),
            "--sut",
            "mutant:classic-spinlock-no-nesting-check",
            "--logs",
            s(&logs),
            "--jobs",
            "4",
        ],
        &[],
    );
    ensure!(r.code == 1, "mutant run exited {}", r.code);
    let killers: BTreeSet<String> = run_logs(&logs)
        .into_iter()
        .filter(|l| l.verdict == RunVerdict::Fail)
        .map(|l| l.program)
        .collect();
    ensure!(
        asserting.iter().all(|id| killers.contains(id)),
        "some nesting-deadlock case passed on the mutant"
    );
    Ok(())
}

fn tree_counts(path: &Path) -> (usize, usize) {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    (
        v["nodes"].as_array().unwrap().len(),
        v["edges"].as_array().unwrap().len(),
    )
}

fn exploration_exactness() -> Check {
    let start = Instant::now();
    ensure!(
        config("desk-classic.json") == ConfigDoc::Classic(fixtures::desk_classic()),
        "desk-classic.json differs"
    );
    let dir = tempfile::tempdir().unwrap();
    let tree = dir.path().join("tree.json");
    mbt_ok(&[
        "explore",
        "--config",
        s(&data("desk-classic.json")),
        "--depth",
        "6",
        "--out",
        s(&tree),
    ])?;
    let got = tree_counts(&tree);
    let reach = mbt_oracle::classic_reach(&oc::Sim::new(&fixtures::desk_classic()), None, 6);
    let want = (reach.nodes(), reach.edges);
    ensure!(
        got == want,
        "explorer (nodes, edges) = {got:?}, brute force {want:?}"
    );

    mbt_ok(&[
        "explore",
        "--config",
        s(&data("posix-boost.json")),
        "--depth",
        "6",
        "--out",
        s(&tree),
        "--force",
    ])?;
    let got = tree_counts(&tree);
    let reach = mbt_oracle::posix_reach(&op::Sim::new(&fixtures::posix_boost()), None, None, 6);
    let want = (reach.nodes(), reach.edges);
    ensure!(
        got == want,
        "posix explorer = {got:?}, brute force {want:?}"
    );
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(())
}

const CLASSIC_DESK: [&str; 4] = [
    "desk-classic.json",
    "spinlock.json",
    "fifo.json",
    "chain.json",
];
const POSIX_DESK: [&str; 4] = [
    "posix-boost.json",
    "posix-mini.json",
    "posix-wake.json",
    "posix-handoff.json",
];

fn oracle_consistency() -> Check {
    let start = Instant::now();
    let mut total = 0;
    for name in ["desk-classic.json", "posix-boost.json"] {
        let cfg = data(name);
        let dir = tempfile::tempdir().unwrap();
        let (_, _, programs) = pipeline(dir.path(), &cfg, 6, 8, &[])?;
        let logs = dir.path().join("logs");
        mbt_ok(&[
            "run",
            "--config",
            s(&cfg),
            "--programs",
            s(&programs),
            "--logs",
            s(&logs),
            "--jobs",
            "8",
        ])?;
        let logs = run_logs(&logs);
        ensure!(!logs.is_empty(), "{name}: empty suite");
        ensure!(
            logs.iter().all(|l| l.verdict == RunVerdict::Pass),
            "{name}: a reference run failed"
        );
        total += logs.len();
    }
    for name in CLASSIC_DESK.iter().chain(&POSIX_DESK) {
        let doc = config(name);
        let k = AnyKernel::new(&doc).unwrap();
        for depth in 1..=6 {
            let tree = explore(&k, &ExploreSpec::new(depth)).unwrap();
            for goal in [CoverageGoal::States, CoverageGoal::Edges] {
                let programs: Vec<TestProgram> = generate_test_cases(&k, &tree, goal, name)
                    .iter()
                    .map(|c| allocate_to_tasks(c).unwrap())
                    .collect();
                let logs = runner::run_suite::<std::io::Sink>(
                    &programs,
                    &doc,
                    &SutSpec::Reference,
                    8,
                    None,
                )
                .unwrap();
                ensure!(
                    logs.iter().all(|l| l.verdict == RunVerdict::Pass),
                    "{name} depth {depth} {goal:?}: reference failure"
                );
                total += logs.len();
            }
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(600), "took {elapsed:?}");
    println!("      {total} reference runs in {elapsed:.1?}");
    Ok(())
}

fn mutant_kill() -> Check {
    let specs = panel();
    ensure!(specs.len() >= 10, "panel has {} mutants", specs.len());
    let causes: BTreeSet<Cause> = specs.iter().map(|d| d.cause).collect();
    ensure!(
        [Cause::Ercd, Cause::Priority, Cause::Run]
            .iter()
            .all(|c| causes.contains(c)),
        "causes covered: {causes:?}"
    );
    let apis: BTreeSet<Api> = specs.iter().filter_map(|d| target_api(&d.defect)).collect();
    for api in [
        Api::MutexLock,
        Api::MutexTrylock,
        Api::MutexTimedlock,
        Api::MutexUnlock,
        Api::CondWait,
        Api::CondSignal,
        Api::SetSchedPrio,
        Api::ChainTask,
        Api::GetSpinlock,
    ] {
        ensure!(apis.contains(&api), "no mutant targets {api}");
    }

    let mut survivors: BTreeSet<String> = specs.iter().map(|d| d.id.clone()).collect();
    for name in CLASSIC_DESK.iter().chain(&POSIX_DESK) {
        let doc = config(name);
        let k = AnyKernel::new(&doc).unwrap();
        let tree = explore(&k, &ExploreSpec::new(6)).unwrap();
        let programs: Vec<TestProgram> = generate_test_cases(&k, &tree, CoverageGoal::Edges, name)
            .iter()
            .map(|c| allocate_to_tasks(c).unwrap())
            .collect();
        for spec in specs.iter().filter(|d| d.kernel == doc.kind()) {
            let logs = runner::run_suite::<std::io::Sink>(
                &programs,
                &doc,
                &SutSpec::Mutant(spec.clone()),
                8,
                None,
            )
            .unwrap();
            ensure!(
                logs.iter().all(|l| l.verdict != RunVerdict::Error),
                "{}: infrastructure error",
                spec.id
            );
            if logs.iter().any(|l| l.verdict == RunVerdict::Fail) {
                survivors.remove(&spec.id);
            }
        }
    }
    ensure!(survivors.is_empty(), "surviving mutants: {survivors:?}");

    let cfg = data("posix-mini.json");
    let dir = tempfile::tempdir().unwrap();
    let (_, _, programs) = pipeline(dir.path(), &cfg, 6, 2, &[])?;
    let logs = dir.path().join("logs");
    let r = mbt(
        &[
            "run",
            "--config",
            s(&cfg),
            "--programs",
            s(&programs),
            "--sut",
            "mutant:posix-trylock-ercd",
            "--logs",
            s(&logs),
        ],
        &[],
    );
    ensure!(r.code == 1, "trylock mutant run exited {}", r.code);
    let report = dir.path().join("report.json");
    let r = mbt(&["report", "--logs", s(&logs), "--out", s(&report)], &[]);
    ensure!(r.code == 1, "report exited {}", r.code);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let cluster = report["clusters"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["api"] == "mutex_trylock" && c["cause"] == "ercd")
        .ok_or("no (mutex_trylock, ercd) cluster")?;
    let min = cluster["min_step"].as_u64().unwrap();
    ensure!(min <= 7, "trylock mutant first fails at step {min}");
    println!("      trylock mutant first fails at step {min}");
    Ok(())
}

fn target_api(d: &mbt_core::defect::DefectKind) -> Option<Api> {
    use mbt_core::defect::DefectKind::*;
    match d {
        WrongStatus { api, .. }
        | SkipPriorityBoost { api }
        | WrongWakeTarget { api }
        | HeadEnqueue { api }
        | EventNotCleared { api } => Some(*api),
        NoNestingCheck => Some(Api::GetSpinlock),
    }
}

fn inheritance_fixpoint() -> Check {
    let configs = [
        fixtures::posix_boost(),
        fixtures::posix_wake(),
        fixtures::posix_handoff(),
        fixtures::posix_mini(),
    ];
    let mut r = gen::rng(8);
    let inv = Invocable::default();
    let mut checked = 0;
    for i in 0..10_000 {
        let cfg = &configs[i % configs.len()];
        let k = PosixKernel::new(cfg.clone()).unwrap();
        let sim = op::Sim::new(cfg);
        let mut st = k.init();
        let len = r.random_range(0..=8);
        for step in 0..=len {
            let stored: Vec<u32> = st.tasks.iter().map(|t| t.effective).collect();
            let naive = sim.import(&st);
            let fresh = op::closure_priorities(&naive.threads, &naive.owner);
            ensure!(
                fresh == stored,
                "sequence {i} step {step}: stored {stored:?}, recomputed {fresh:?}"
            );
            checked += 1;
            if step == len {
                break;
            }
            let mut next = successors(&k, &st, &inv);
            if next.is_empty() {
                break;
            }
            st = next.swap_remove(r.random_range(0..next.len())).3;
        }
    }
    println!("      {checked} states checked");
    Ok(())
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

fn canonical_logs(dir: &Path) -> String {
    formats::logs_to_jsonl(
        &run_logs(dir)
            .iter()
            .map(RunLog::canonical)
            .collect::<Vec<_>>(),
    )
}

fn determinism() -> Check {
    for name in ["desk-classic.json", "posix-boost.json"] {
        let cfg = data(name);
        let mut artifacts = Vec::new();
        for jobs in [1usize, 8] {
            let dir = tempfile::tempdir().unwrap();
            let (tree, cases, programs) = pipeline(dir.path(), &cfg, 6, jobs, &[])?;
            let logs = dir.path().join("logs");
            let j = jobs.to_string();
            mbt_ok(&[
                "run",
                "--config",
                s(&cfg),
                "--programs",
                s(&programs),
                "--logs",
                s(&logs),
                "--jobs",
                &j,
            ])?;
            let mutant_logs = dir.path().join("mutant-logs");
            let sut = if name.starts_with("posix") {
                "mutant:posix-lock-skip-boost"
            } else {
                "mutant:classic-activate-limit-ercd"
            };
            let r = mbt(
                &[
                    "run",
                    "--config",
                    s(&cfg),
                    "--programs",
                    s(&programs),
                    "--logs",
                    s(&mutant_logs),
                    "--jobs",
                    &j,
                    "--sut",
                    sut,
                ],
                &[],
            );
            ensure!(r.code == 1, "{name}: mutant run exited {}", r.code);
            artifacts.push((
                fs::read(&tree).unwrap(),
                dir_bytes(&cases),
                dir_bytes(&programs),
                canonical_logs(&logs),
                canonical_logs(&mutant_logs),
            ));
        }
        let (a, b) = (&artifacts[0], &artifacts[1]);
        ensure!(a.0 == b.0, "{name}: trees differ between 1 and 8 jobs");
        ensure!(a.1 == b.1, "{name}: case files differ");
        ensure!(a.2 == b.2, "{name}: program files differ");
        ensure!(a.3 == b.3, "{name}: reference logs differ");
        ensure!(a.4 == b.4, "{name}: mutant logs differ");
    }
    Ok(())
}

fn round_trips() -> Check {
    let mut r = gen::rng(10);
    for i in 0..1000 {
        let doc = if i % 2 == 0 {
            ConfigDoc::Classic(gen::classic_config(&mut r))
        } else {
            ConfigDoc::Posix(gen::posix_config(&mut r))
        };
        doc.validate()
            .map_err(|e| format!("generator produced an invalid config: {e}"))?;
        let text = formats::config_to_json(&doc);
        let back = formats::parse_config(&text, None).map_err(|e| format!("{e}\n{text}"))?;
        ensure!(back == doc, "config {i} changed:\n{text}");
        ensure!(
            formats::config_to_json(&back) == text,
            "config {i} reprints differently"
        );
    }

    let docs = [
        ConfigDoc::Classic(fixtures::desk_classic()),
        ConfigDoc::Classic(fixtures::spinlock()),
        ConfigDoc::Posix(fixtures::posix_boost()),
        ConfigDoc::Posix(fixtures::posix_handoff()),
    ];
    for (d, doc) in docs.iter().enumerate() {
        let k = AnyKernel::new(doc).unwrap();
        let tree = explore(&k, &ExploreSpec::new(4)).unwrap();
        let names = doc.names();
        let pool: Vec<Label> = tree.edges.iter().map(|e| e.label).collect();
        let text = formats::tree_to_json(&tree, doc);
        let back = formats::tree_from_json(&text, doc).map_err(|e| e.to_string())?;
        ensure!(back == tree, "tree of config {d} changed");
        for i in 0..250 {
            let uc = gen::usecase(&mut r, &k, &pool);
            let text = print_usecase(&uc, &names);
            let back =
                parse_usecase(&text, &names, doc.kind()).map_err(|e| format!("{e}\n{text}"))?;
            ensure!(back == uc, "use case {i} changed:\n{text}");
            ensure!(
                print_usecase(&back, &names) == text,
                "use case {i} reprints differently"
            );

            let case = gen::case(&mut r, &k, &tree, i);
            let text = formats::case_to_json(&case);
            let back = formats::case_from_json(&text).map_err(|e| e.to_string())?;
            ensure!(back == case, "case {i} changed");
            ensure!(
                formats::case_to_json(&back) == text,
                "case {i} reprints differently"
            );

            let program = allocate_to_tasks(&case).map_err(|e| e.to_string())?;
            let text = formats::program_to_json(&program);
            let back = formats::program_from_json(&text).map_err(|e| e.to_string())?;
            ensure!(back == program, "program {i} changed");
            ensure!(
                formats::program_to_json(&back) == text,
                "program {i} reprints differently"
            );
            if i % 50 == 0 {
                let mut sut = reference_sut(doc).unwrap();
                ensure!(
                    run_program(&back, doc, &mut sut).verdict == RunVerdict::Pass,
                    "program {i} fails"
                );
            }
        }
    }
    Ok(())
}

fn main() {
    type Criterion = (&'static str, fn() -> Check);
    let criteria: [Criterion; 10] = [
        ("preemption golden trace", preemption_trace),
        ("FIFO dispatch of equal priorities", fifo_dispatch),
        (
            "ChainTask event-clearing discrepancy",
            chaintask_discrepancy,
        ),
        ("spinlock nesting order", spinlock_nesting),
        (
            "exploration counts equal brute force",
            exploration_exactness,
        ),
        ("reference passes every generated case", oracle_consistency),
        ("mutant panel killed", mutant_kill),
        ("priority-inheritance fixpoint", inheritance_fixpoint),
        ("determinism across worker counts", determinism),
        ("serialization round trips", round_trips),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".to_string()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("PASS  {:>2}  {name} ({secs:.2} s)", i + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL  {:>2}  {name} ({secs:.2} s): {e}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
