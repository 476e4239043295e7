//! Case and program generation checked against the models that produced
//! them, and mutant detection checked against brute-force distinguishing
//! depths.

use std::collections::{BTreeSet, VecDeque};

use mbt_core::call::{Call, Invoker};
use mbt_core::defect::{panel, DefectKind};
use mbt_core::explorer::{explore, ExploreSpec, SearchTree};
use mbt_core::harness::{mutant_sut, reference_sut, run_program, RunVerdict};
use mbt_core::ids::TaskId;
use mbt_core::testgen::{
    allocate_to_tasks, case_for_path, coverage_paths, generate_test_cases, scheduled_step,
    token_order, CoverageGoal, Step, TestCase, DRIVER,
};
use mbt_core::{AnyKernel, Api, ConfigDoc, Invocable, Model};
use mbt_oracle::fixtures;

fn classic_docs() -> Vec<ConfigDoc> {
    vec![
        ConfigDoc::Classic(fixtures::chain_events(true)),
        ConfigDoc::Classic(fixtures::fifo()),
        ConfigDoc::Classic(fixtures::spinlock()),
        ConfigDoc::Classic(fixtures::desk_classic()),
    ]
}

fn posix_docs() -> Vec<ConfigDoc> {
    vec![
        ConfigDoc::Posix(fixtures::posix_mini()),
        ConfigDoc::Posix(fixtures::posix_boost()),
        ConfigDoc::Posix(fixtures::posix_wake()),
        ConfigDoc::Posix(fixtures::posix_handoff()),
    ]
}

/// Edge sequence from the root following `labels`.
fn follow(tree: &SearchTree, labels: &[(Invoker, Call)]) -> Vec<usize> {
    let mut node = 0;
    let mut path = Vec::new();
    for (inv, call) in labels {
        let e = (0..tree.edges.len())
            .find(|&e| {
                let edge = &tree.edges[e];
                edge.from == node && edge.label.invoker == *inv && edge.label.call == *call
            })
            .expect("label present in tree");
        path.push(e);
        node = tree.edges[e].to;
    }
    path
}

fn chain_labels() -> Vec<(Invoker, Call)> {
    let t1 = TaskId(0);
    vec![
        (Invoker::External, Call::ActivateTask(t1)),
        (Invoker::Task(t1), Call::SetEvent(t1, 1)),
        (Invoker::Task(t1), Call::ChainTask(t1)),
    ]
}

fn chain_case(flag: bool) -> (ConfigDoc, TestCase) {
    let doc = ConfigDoc::Classic(fixtures::chain_events(flag));
    let k = AnyKernel::new(&doc).unwrap();
    let tree = explore(&k, &ExploreSpec::new(3)).unwrap();
    let path = follow(&tree, &chain_labels());
    let case = case_for_path(&k, &tree, &path, "chain".into(), "chain.json");
    (doc, case)
}

#[test]
fn chain_case_has_eighteen_steps() {
    let (_, case) = chain_case(true);
    assert_eq!(case.steps.len(), 18);
    let kinds: Vec<&str> = case
        .steps
        .iter()
        .map(|s| match s {
            Step::Declare { .. } => "D",
            Step::Invoke { .. } => "I",
            Step::CheckState { .. } => "S",
            Step::CheckEvent { .. } => "E",
        })
        .collect();
    assert_eq!(kinds.concat(), "DDDSSEISSEISSEISSE");
    for (i, s) in case.steps.iter().enumerate() {
        assert_eq!(s.n() as usize, i + 1);
    }
    match &case.steps[14] {
        Step::Invoke { api, invoker, .. } => {
            assert_eq!(*api, Api::ChainTask);
            assert_eq!(invoker, "T1");
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(case.steps[17], Step::CheckEvent { expect: 0, .. }));
    let (_, kept) = chain_case(false);
    assert!(matches!(kept.steps[17], Step::CheckEvent { expect: 1, .. }));
}

#[test]
fn chain_program_orders_steps_one_to_eighteen() {
    let (_, case) = chain_case(true);
    let program = allocate_to_tasks(&case).unwrap();
    assert_eq!(
        program.tasks.keys().map(String::as_str).collect::<Vec<_>>(),
        [DRIVER, "T1"]
    );
    let order = token_order(&program).unwrap();
    assert_eq!(
        order.iter().map(|s| s.step).collect::<Vec<_>>(),
        (1..=18).collect::<Vec<_>>()
    );
    let replayed: Vec<Step> = order.iter().map(scheduled_step).collect();
    assert_eq!(replayed, case.steps);
}

#[test]
fn chain_discrepancy_fails_at_step_eighteen_and_reverses() {
    let mutant = DefectKind::EventNotCleared {
        api: Api::ChainTask,
    };
    let (doc, case) = chain_case(true);
    let program = allocate_to_tasks(&case).unwrap();
    let log = run_program(&program, &doc, &mut mutant_sut(&mutant, &doc).unwrap());
    assert_eq!(log.verdict, RunVerdict::Fail);
    assert_eq!(log.first_failing_step(), Some(18));
    let log = run_program(&program, &doc, &mut reference_sut(&doc).unwrap());
    assert_eq!(log.verdict, RunVerdict::Pass);

    // Model says events survive; an implementation that clears them fails.
    let (kept_doc, kept_case) = chain_case(false);
    let kept = allocate_to_tasks(&kept_case).unwrap();
    let clearing = ConfigDoc::Classic(fixtures::chain_events(true));
    let log = run_program(&kept, &clearing, &mut reference_sut(&clearing).unwrap());
    assert_eq!(log.first_failing_step(), Some(18));
    let log = run_program(
        &kept,
        &clearing,
        &mut mutant_sut(&mutant, &clearing).unwrap(),
    );
    assert_eq!(log.verdict, RunVerdict::Pass);
    let log = run_program(&kept, &kept_doc, &mut reference_sut(&kept_doc).unwrap());
    assert_eq!(log.verdict, RunVerdict::Pass);
}

/// Maps every case back onto tree edges by replaying its invocations.
fn covered_edges(
    tree: &SearchTree,
    cases: &[TestCase],
    doc: &ConfigDoc,
) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let names = doc.names();
    let mut edges = BTreeSet::new();
    let mut nodes = BTreeSet::from([0]);
    for case in cases {
        let mut node = 0;
        for s in &case.steps {
            let Step::Invoke {
                invoker,
                api,
                args,
                expect,
                ..
            } = s
            else {
                continue;
            };
            let inv = Invoker::parse(invoker, &names).unwrap();
            let call = Call::resolve(*api, args, &names).unwrap();
            let e = (0..tree.edges.len())
                .find(|&e| {
                    let x = &tree.edges[e];
                    x.from == node && x.label.invoker == inv && x.label.call == call
                })
                .expect("case step is a tree edge");
            assert_eq!(tree.edges[e].label.status, *expect);
            edges.insert(e);
            node = tree.edges[e].to;
            nodes.insert(node);
        }
    }
    (edges, nodes)
}

#[test]
fn coverage_recount() {
    for doc in classic_docs().into_iter().chain(posix_docs()) {
        let k = AnyKernel::new(&doc).unwrap();
        let tree = explore(&k, &ExploreSpec::new(4)).unwrap();
        let all_edges = generate_test_cases(&k, &tree, CoverageGoal::Edges, "c");
        let (edges, nodes) = covered_edges(&tree, &all_edges, &doc);
        assert_eq!(edges.len(), tree.edges.len());
        assert_eq!(nodes.len(), tree.nodes.len());
        let states = generate_test_cases(&k, &tree, CoverageGoal::States, "c");
        let (_, nodes) = covered_edges(&tree, &states, &doc);
        assert_eq!(nodes.len(), tree.nodes.len());
        assert!(states.len() <= all_edges.len());

        for goal in [CoverageGoal::States, CoverageGoal::Edges] {
            let paths = coverage_paths(&tree, goal);
            for a in &paths {
                for b in &paths {
                    assert!(a == b || !b.starts_with(a), "prefix path kept");
                }
            }
        }
    }
}

#[test]
fn single_node_tree_gives_one_init_case() {
    let doc = ConfigDoc::Classic(fixtures::preempt());
    let k = AnyKernel::new(&doc).unwrap();
    let mut spec = ExploreSpec::new(1);
    spec.invocable = Invocable::only(&[]);
    let tree = explore(&k, &spec).unwrap();
    let cases = generate_test_cases(&k, &tree, CoverageGoal::Edges, "preempt.json");
    assert_eq!(cases.len(), 1);
    assert_eq!(cases[0].invocations(), 0);
    assert!(cases[0]
        .steps
        .iter()
        .all(|s| !matches!(s, Step::Invoke { .. })));
    let program = allocate_to_tasks(&cases[0]).unwrap();
    assert_eq!(
        run_program(&program, &doc, &mut reference_sut(&doc).unwrap()).verdict,
        RunVerdict::Pass
    );
}

#[test]
fn forced_interleaving_replays_case_oracles() {
    for doc in classic_docs().into_iter().chain(posix_docs()) {
        let k = AnyKernel::new(&doc).unwrap();
        let tree = explore(&k, &ExploreSpec::new(6)).unwrap();
        let cases = generate_test_cases(&k, &tree, CoverageGoal::Edges, "c");
        for case in cases.iter().step_by(7) {
            let program = allocate_to_tasks(case).unwrap();
            let order = token_order(&program).unwrap();
            let steps: Vec<Step> = order.iter().map(scheduled_step).collect();
            assert_eq!(steps, case.steps);
        }
    }
}

#[test]
fn reference_sut_passes_every_generated_program() {
    for doc in classic_docs().into_iter().chain(posix_docs()) {
        let k = AnyKernel::new(&doc).unwrap();
        let tree = explore(&k, &ExploreSpec::new(5)).unwrap();
        let mut sut = reference_sut(&doc).unwrap();
        for case in generate_test_cases(&k, &tree, CoverageGoal::Edges, "c") {
            let program = allocate_to_tasks(&case).unwrap();
            let log = run_program(&program, &doc, &mut sut);
            assert_eq!(log.verdict, RunVerdict::Pass, "{log:?}");
        }
    }
}

/// Fewest invocations after which the mutant's status or observation can
/// differ from the reference's, by breadth-first search over state pairs.
fn distinguishing_depth(doc: &ConfigDoc, defect: &DefectKind, bound: u32) -> Option<u32> {
    let r = AnyKernel::new(doc).unwrap();
    let m = AnyKernel::with_defect(doc, defect.clone()).unwrap();
    let (rs, ms) = (r.init(), m.init());
    if r.observe(&rs) != m.observe(&ms) {
        return Some(0);
    }
    let inv = Invocable::default();
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([(rs, ms, 0u32)]);
    while let Some((rs, ms, d)) = queue.pop_front() {
        if d == bound {
            continue;
        }
        for (i, c) in r.candidates(&rs, &inv) {
            let Ok((rst, rn)) = r.step(&rs, i, c) else {
                continue;
            };
            match m.step(&ms, i, c) {
                Ok((mst, mn)) if mst == rst && m.observe(&mn) == r.observe(&rn) => {
                    if seen.insert((r.canonical_key(&rn), m.canonical_key(&mn))) {
                        queue.push_back((rn, mn, d + 1));
                    }
                }
                _ => return Some(d + 1),
            }
        }
    }
    None
}

#[test]
fn mutants_never_fail_before_the_distinguishing_depth() {
    let depth = 6;
    let mut killed = BTreeSet::new();
    for doc in classic_docs().into_iter().chain(posix_docs()) {
        let k = AnyKernel::new(&doc).unwrap();
        let tree = explore(&k, &ExploreSpec::new(depth)).unwrap();
        let programs: Vec<_> = generate_test_cases(&k, &tree, CoverageGoal::Edges, "c")
            .iter()
            .map(|c| (c.clone(), allocate_to_tasks(c).unwrap()))
            .collect();
        for spec in panel().into_iter().filter(|d| d.kernel == doc.kind()) {
            let min = distinguishing_depth(&doc, &spec.defect, depth);
            let mut sut = mutant_sut(&spec.defect, &doc).unwrap();
            let mut first: Option<usize> = None;
            for (case, program) in &programs {
                let log = run_program(program, &doc, &mut sut);
                if let Some(step) = log.first_failing_step() {
                    let invocations = case
                        .steps
                        .iter()
                        .filter(|s| matches!(s, Step::Invoke { .. }) && s.n() <= step)
                        .count();
                    first = Some(first.map_or(invocations, |f| f.min(invocations)));
                }
            }
            match (min, first) {
                (Some(d), Some(f)) => {
                    assert!(f as u32 >= d, "{} on {:?}: {f} < {d}", spec.id, doc.kind());
                    killed.insert(spec.id.clone());
                }
                (None, None) => {}
                other => panic!("{}: brute force and suite disagree: {other:?}", spec.id),
            }
        }
    }
    let all: BTreeSet<String> = panel().into_iter().map(|d| d.id).collect();
    assert_eq!(killed, all);
}
