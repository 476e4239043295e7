//! Seeded generators of valid random instances for round-trip tests.

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

use mbt_core::config::{
    AlarmAction, AlarmConfig, CondvarConfig, EventConfig, KernelConfig, OptionFlags, PosixConfig,
    PosixOptions, PosixTaskConfig, SpinlockConfig, TaskConfig,
};
use mbt_core::explorer::SearchTree;
use mbt_core::ids::TaskId;
use mbt_core::testgen::{case_for_path, case_id, TestCase};
use mbt_core::usecase::{UcEdge, UcNode, UseCaseModel};
use mbt_core::{Label, Model, TaskState};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

const STATES: [TaskState; 4] = [
    TaskState::Suspended,
    TaskState::Ready,
    TaskState::Running,
    TaskState::Waiting,
];

pub fn classic_config(r: &mut StdRng) -> KernelConfig {
    let cores = r.random_range(1..=3);
    let n = r.random_range(0..=5);
    let tasks: Vec<TaskConfig> = (0..n)
        .map(|i| {
            let extended = r.random_bool(0.4);
            TaskConfig {
                name: format!("T{i}"),
                core: r.random_range(0..cores),
                priority: r.random_range(0..6),
                extended,
                max_activations: if extended { 1 } else { r.random_range(1..=3) },
                auto_start: r.random_bool(0.3),
            }
        })
        .collect();
    let events: Vec<EventConfig> = (0..r.random_range(0..=3))
        .map(|i| EventConfig {
            name: format!("E{i}"),
            bit: i as u8 * 3 + r.random_range(0..3),
        })
        .collect();
    // Successors only point forward, so the order is acyclic.
    let nlocks = r.random_range(0..=3);
    let spinlocks = (0..nlocks)
        .map(|i| SpinlockConfig {
            name: format!("S{i}"),
            successors: (i + 1..nlocks)
                .filter(|_| r.random_bool(0.5))
                .map(|j| format!("S{j}"))
                .collect(),
        })
        .collect();
    let extended: Vec<&TaskConfig> = tasks.iter().filter(|t| t.extended).collect();
    let alarms = if tasks.is_empty() {
        vec![]
    } else {
        (0..r.random_range(0..=2))
            .map(|i| {
                let action = match (extended.choose(r), events.choose(r), r.random_bool(0.5)) {
                    (Some(t), Some(e), true) => AlarmAction::SetEvent {
                        task: t.name.clone(),
                        event: e.name.clone(),
                    },
                    _ => AlarmAction::ActivateTask {
                        task: tasks.choose(r).unwrap().name.clone(),
                    },
                };
                AlarmConfig {
                    name: format!("A{i}"),
                    action,
                }
            })
            .collect()
    };
    KernelConfig {
        cores,
        tasks,
        events,
        spinlocks,
        alarms,
        options: OptionFlags {
            chaintask_clears_events: r.random_bool(0.5),
        },
    }
}

pub fn posix_config(r: &mut StdRng) -> PosixConfig {
    let cores = r.random_range(1..=2);
    let tasks = (0..r.random_range(1..=4))
        .map(|i| PosixTaskConfig {
            name: format!("P{i}"),
            core: r.random_range(0..cores),
            priority: r.random_range(0..8),
            auto_start: r.random_bool(0.5),
        })
        .collect();
    let mutexes: Vec<String> = (0..r.random_range(0..=2))
        .map(|i| format!("M{i}"))
        .collect();
    let condvars = if mutexes.is_empty() {
        vec![]
    } else {
        (0..r.random_range(0..=2))
            .map(|i| CondvarConfig {
                name: format!("C{i}"),
                mutex: mutexes.choose(r).unwrap().clone(),
            })
            .collect()
    };
    PosixConfig {
        cores,
        tasks,
        mutexes,
        condvars,
        options: PosixOptions::default(),
    }
}

/// A deterministic use-case model whose edge labels come from `pool`.
pub fn usecase<M: Model>(r: &mut StdRng, model: &M, pool: &[Label]) -> UseCaseModel {
    let n_tasks = model.names().tasks.len();
    let classic = model.kind() == mbt_core::KernelKind::Classic;
    let n_nodes = r.random_range(1..=6);
    let nodes: Vec<UcNode> = (0..n_nodes)
        .map(|i| {
            let expected = (0..n_tasks)
                .filter_map(|t| {
                    if r.random_bool(0.6) {
                        Some((TaskId(t as u8), *STATES.choose(r).unwrap()))
                    } else {
                        None
                    }
                })
                .collect();
            let events = if classic {
                (0..n_tasks)
                    .filter_map(|t| {
                        if r.random_bool(0.2) {
                            Some((TaskId(t as u8), r.random_range(0..8)))
                        } else {
                            None
                        }
                    })
                    .collect()
            } else {
                vec![]
            };
            UcNode {
                id: format!("s{i}"),
                expected,
                events,
            }
        })
        .collect();
    let mut edges: Vec<UcEdge> = Vec::new();
    if !pool.is_empty() {
        for _ in 0..r.random_range(0..=10) {
            let label = pool.choose(r).unwrap();
            let from = r.random_range(0..n_nodes);
            if edges
                .iter()
                .any(|e| e.from == from && e.invoker == label.invoker && e.call == label.call)
            {
                continue;
            }
            edges.push(UcEdge {
                from,
                to: r.random_range(0..n_nodes),
                invoker: label.invoker,
                call: label.call,
                status: r.random_bool(0.7).then_some(label.status),
            });
        }
    }
    UseCaseModel {
        name: format!("uc{}", r.random_range(0..1000)),
        config: r.random_bool(0.5).then(|| "desk.json".to_string()),
        nodes,
        init: r.random_range(0..n_nodes),
        edges,
    }
}

/// A case for a random root-anchored walk through `tree`.
pub fn case<M: Model>(r: &mut StdRng, model: &M, tree: &SearchTree, index: usize) -> TestCase {
    let mut node = 0;
    let mut path = Vec::new();
    for _ in 0..r.random_range(0..=tree.depth_bound) {
        let out: Vec<usize> = (0..tree.edges.len())
            .filter(|&e| tree.edges[e].from == node)
            .collect();
        let Some(&e) = out.choose(r) else { break };
        path.push(e);
        node = tree.edges[e].to;
        if tree.nodes[node].depth >= tree.depth_bound {
            break;
        }
    }
    case_for_path(model, tree, &path, case_id(index), "desk.json")
}
