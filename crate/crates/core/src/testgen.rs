//! Test-case generation from a search tree, and allocation of test cases to
//! per-task programs ordered by step barriers.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::call::{Api, Invoker, EXTERNAL};
use crate::explorer::SearchTree;
use crate::model::{Model, ObjectKind};
use crate::observation::{Observation, TaskState};
use crate::status::Status;

/// Program name that realizes the `EXTERNAL` invoker.
pub const DRIVER: &str = "DRIVER";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoverageGoal {
    States,
    Edges,
}

impl CoverageGoal {
    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "states" => Some(CoverageGoal::States),
            "edges" => Some(CoverageGoal::Edges),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    Declare {
        n: u32,
        object: ObjectKind,
        name: String,
    },
    Invoke {
        n: u32,
        invoker: String,
        api: Api,
        args: Vec<String>,
        expect: Status,
    },
    /// `by` checks that the state of `target` is `expect`.
    CheckState {
        n: u32,
        by: String,
        target: String,
        expect: TaskState,
    },
    /// `by` checks that the event mask of `target` is `expect`.
    CheckEvent {
        n: u32,
        by: String,
        target: String,
        expect: u32,
    },
}

impl Step {
    pub fn n(&self) -> u32 {
        match self {
            Step::Declare { n, .. }
            | Step::Invoke { n, .. }
            | Step::CheckState { n, .. }
            | Step::CheckEvent { n, .. } => *n,
        }
    }

    /// The program that executes this step.
    pub fn owner(&self) -> &str {
        let who = match self {
            Step::Declare { .. } => EXTERNAL,
            Step::Invoke { invoker, .. } => invoker,
            Step::CheckState { by, .. } | Step::CheckEvent { by, .. } => by,
        };
        if who == EXTERNAL {
            DRIVER
        } else {
            who
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestCase {
    pub id: String,
    pub config: String,
    /// False when generated from a truncated tree.
    #[serde(default = "yes")]
    pub exhaustive: bool,
    pub steps: Vec<Step>,
}

fn yes() -> bool {
    true
}

impl TestCase {
    pub fn invocations(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s, Step::Invoke { .. }))
            .count()
    }
}

fn check_steps<M: Model>(model: &M, obs: &Observation, by: &str, n: &mut u32, out: &mut Vec<Step>) {
    let names = model.names();
    for (i, t) in obs.tasks.iter().enumerate() {
        *n += 1;
        out.push(Step::CheckState {
            n: *n,
            by: by.to_string(),
            target: names.tasks[i].clone(),
            expect: t.state,
        });
    }
    for (i, t) in obs.tasks.iter().enumerate() {
        if let Some(mask) = t.events {
            *n += 1;
            out.push(Step::CheckEvent {
                n: *n,
                by: by.to_string(),
                target: names.tasks[i].clone(),
                expect: mask,
            });
        }
    }
}

/// Builds the numbered test case for a root-anchored edge path.
pub fn case_for_path<M: Model>(
    model: &M,
    tree: &SearchTree,
    path: &[usize],
    id: String,
    config: &str,
) -> TestCase {
    let names = model.names();
    let mut steps = Vec::new();
    let mut n = 0;
    for (object, name) in model.declarations() {
        n += 1;
        steps.push(Step::Declare { n, object, name });
    }
    check_steps(
        model,
        &tree.nodes[0].observation,
        EXTERNAL,
        &mut n,
        &mut steps,
    );
    for &e in path {
        let edge = &tree.edges[e];
        let label = &edge.label;
        n += 1;
        let invoker = label.invoker.render(names);
        steps.push(Step::Invoke {
            n,
            invoker: invoker.clone(),
            api: label.call.api(),
            args: label.call.render_args(names),
            expect: label.status,
        });
        let obs = &tree.nodes[edge.to].observation;
        let by = match label.invoker {
            Invoker::Task(t) if obs.state_of(t) == TaskState::Running => invoker,
            _ => String::from(EXTERNAL),
        };
        check_steps(model, obs, &by, &mut n, &mut steps);
    }
    TestCase {
        id,
        config: config.to_string(),
        exhaustive: tree.is_complete(),
        steps,
    }
}

/// Root-anchored paths covering every node (`States`) or every edge
/// (`Edges`) of the tree, none a strict prefix of another, ordered by the
/// index of their final edge.
pub fn coverage_paths(tree: &SearchTree, goal: CoverageGoal) -> Vec<Vec<usize>> {
    let n = tree.nodes.len();
    let mut has_child = alloc::vec![false; n];
    let mut has_cross = alloc::vec![false; n];
    for (i, e) in tree.edges.iter().enumerate() {
        if tree.is_tree_edge(i) {
            has_child[e.from] = true;
        } else {
            has_cross[e.from] = true;
        }
    }
    // (sort key, path end): leaves sort by their parent edge, cross edges by
    // their own index. The root-only case has no edge at all.
    let mut ends: Vec<(Option<usize>, Result<usize, usize>)> = Vec::new();
    for v in 0..n {
        let extended = goal == CoverageGoal::Edges && has_cross[v];
        if !has_child[v] && !extended {
            ends.push((tree.nodes[v].parent, Ok(v)));
        }
    }
    if goal == CoverageGoal::Edges {
        for i in 0..tree.edges.len() {
            if !tree.is_tree_edge(i) {
                ends.push((Some(i), Err(i)));
            }
        }
    }
    ends.sort_by_key(|(k, _)| *k);
    ends.into_iter()
        .map(|(_, end)| match end {
            Ok(node) => tree.path_to(node),
            Err(edge) => {
                let mut p = tree.path_to(tree.edges[edge].from);
                p.push(edge);
                p
            }
        })
        .collect()
}

pub fn case_id(index: usize) -> String {
    format!("tc-{:05}", index + 1)
}

pub fn generate_test_cases<M: Model>(
    model: &M,
    tree: &SearchTree,
    goal: CoverageGoal,
    config: &str,
) -> Vec<TestCase> {
    coverage_paths(tree, goal)
        .iter()
        .enumerate()
        .map(|(i, p)| case_for_path(model, tree, p, case_id(i), config))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Instr {
    Await {
        step: u32,
    },
    Declare {
        object: ObjectKind,
        name: String,
    },
    Perform {
        api: Api,
        args: Vec<String>,
        expect: Status,
    },
    AssertState {
        target: String,
        expect: TaskState,
    },
    AssertEvent {
        target: String,
        expect: u32,
    },
    Publish {
        step: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestProgram {
    pub id: String,
    pub config: String,
    /// Total step count; the final `Publish` carries `steps + 1`.
    pub steps: u32,
    pub tasks: BTreeMap<String, Vec<Instr>>,
}

impl TestProgram {
    pub fn instruction_count(&self) -> usize {
        self.tasks.values().map(Vec::len).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum AllocationError {
    #[error("step {step}: `{task}` invokes while not RUNNING")]
    NotRunning { step: u32, task: String },
    #[error("step {step}: expected step number {expected}")]
    Numbering { step: u32, expected: u32 },
    #[error("a task is named `{DRIVER}`, which is reserved for the driver program")]
    ReservedName,
}

/// Splits a test case into per-task instruction lists. Step `n` becomes
/// `Await(n)`, its operation and `Publish(n + 1)` on the owning task.
pub fn allocate_to_tasks(case: &TestCase) -> Result<TestProgram, AllocationError> {
    let mut tasks: BTreeMap<String, Vec<Instr>> = BTreeMap::new();
    let mut last_state: BTreeMap<&str, TaskState> = BTreeMap::new();
    for (i, step) in case.steps.iter().enumerate() {
        let expected = i as u32 + 1;
        if step.n() != expected {
            return Err(AllocationError::Numbering {
                step: step.n(),
                expected,
            });
        }
        let op = match step {
            Step::Declare { object, name, .. } => {
                if *object == ObjectKind::Task && name == DRIVER {
                    return Err(AllocationError::ReservedName);
                }
                Instr::Declare {
                    object: *object,
                    name: name.clone(),
                }
            }
            Step::Invoke {
                n,
                invoker,
                api,
                args,
                expect,
            } => {
                if invoker != EXTERNAL
                    && last_state.get(invoker.as_str()) != Some(&TaskState::Running)
                {
                    return Err(AllocationError::NotRunning {
                        step: *n,
                        task: invoker.clone(),
                    });
                }
                Instr::Perform {
                    api: *api,
                    args: args.clone(),
                    expect: *expect,
                }
            }
            Step::CheckState { target, expect, .. } => {
                last_state.insert(target.as_str(), *expect);
                Instr::AssertState {
                    target: target.clone(),
                    expect: *expect,
                }
            }
            Step::CheckEvent { target, expect, .. } => Instr::AssertEvent {
                target: target.clone(),
                expect: *expect,
            },
        };
        let list = tasks.entry(step.owner().to_string()).or_default();
        list.push(Instr::Await { step: expected });
        list.push(op);
        list.push(Instr::Publish { step: expected + 1 });
    }
    Ok(TestProgram {
        id: case.id.clone(),
        config: case.config.clone(),
        steps: case.steps.len() as u32,
        tasks,
    })
}

/// An executable unit of a program: the instruction with the step it
/// belongs to and the task that runs it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scheduled<'a> {
    pub step: u32,
    pub task: &'a str,
    pub instr: &'a Instr,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum OrderError {
    #[error("no task can make progress waiting for step {0}")]
    Stuck(u32),
    #[error("task `{task}` publishes step {step} outside its own step")]
    BadPublish { task: String, step: u32 },
}

/// Executes the token protocol abstractly: repeatedly lets the task whose
/// next instruction awaits the current token run until it publishes the
/// next one. Returns the non-token instructions in execution order.
pub fn token_order(program: &TestProgram) -> Result<Vec<Scheduled<'_>>, OrderError> {
    let mut cursors: Vec<(&str, &[Instr], usize)> = program
        .tasks
        .iter()
        .map(|(k, v)| (k.as_str(), v.as_slice(), 0))
        .collect();
    let mut token = 1;
    let mut out = Vec::new();
    loop {
        if cursors.iter().all(|(_, list, c)| *c >= list.len()) {
            return Ok(out);
        }
        let Some(slot) = cursors.iter_mut().find(
            |(_, list, c)| matches!(list.get(*c), Some(Instr::Await { step }) if *step == token),
        ) else {
            return Err(OrderError::Stuck(token));
        };
        let (task, list, cursor) = slot;
        *cursor += 1;
        loop {
            match list.get(*cursor) {
                Some(Instr::Publish { step }) => {
                    *cursor += 1;
                    if *step <= token {
                        return Err(OrderError::BadPublish {
                            task: task.to_string(),
                            step: *step,
                        });
                    }
                    token = *step;
                    break;
                }
                Some(Instr::Await { .. }) | None => return Err(OrderError::Stuck(token)),
                Some(instr) => {
                    out.push(Scheduled {
                        step: token,
                        task,
                        instr,
                    });
                    *cursor += 1;
                }
            }
        }
    }
}

/// Reconstructs the test-case step that a scheduled instruction realizes.
pub fn scheduled_step(s: &Scheduled<'_>) -> Step {
    let by = if s.task == DRIVER { EXTERNAL } else { s.task }.to_string();
    match s.instr {
        Instr::Declare { object, name } => Step::Declare {
            n: s.step,
            object: *object,
            name: name.clone(),
        },
        Instr::Perform { api, args, expect } => Step::Invoke {
            n: s.step,
            invoker: by,
            api: *api,
            args: args.clone(),
            expect: *expect,
        },
        Instr::AssertState { target, expect } => Step::CheckState {
            n: s.step,
            by,
            target: target.clone(),
            expect: *expect,
        },
        Instr::AssertEvent { target, expect } => Step::CheckEvent {
            n: s.step,
            by,
            target: target.clone(),
            expect: *expect,
        },
        Instr::Await { .. } | Instr::Publish { .. } => {
            unreachable!("token instructions are not scheduled")
        }
    }
}
