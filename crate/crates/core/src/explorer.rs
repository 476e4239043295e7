//! Breadth-first reachable-state search.
//!
//! Exploration is level-synchronous: every node of a level is expanded
//! independently (possibly in parallel, see [`LevelMap`]) and the results
//! are merged in frontier order, so the tree is identical for any worker
//! count.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use thiserror::Error;

use crate::call::{Call, Invoker, Label};
use crate::config::KernelKind;
use crate::model::{Invocable, Model, StateKey, StepError};
use crate::observation::Observation;
use crate::status::Status;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    pub key: StateKey,
    pub depth: u32,
    pub observation: Observation,
    /// Index of the spanning-tree edge that first reached this node.
    pub parent: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeEdge {
    pub from: usize,
    pub label: Label,
    pub to: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget {
    pub max_nodes: usize,
    pub max_edges: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_nodes: 2_000_000,
            max_edges: 20_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExploreSpec {
    pub depth: u32,
    pub invocable: Invocable,
    pub budget: Budget,
}

impl ExploreSpec {
    pub fn new(depth: u32) -> Self {
        ExploreSpec {
            depth,
            invocable: Invocable::default(),
            budget: Budget::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum ExploreError {
    #[error("depth bound must be at least 1")]
    ZeroDepth,
}

/// Why a tree is not exhaustive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum Truncation {
    #[error("node budget of {0} exceeded")]
    Nodes(usize),
    #[error("edge budget of {0} exceeded")]
    Edges(usize),
}

/// Reachable states up to a depth bound. Node 0 is the root. Nodes carry
/// their first-visit parent edge; every other transition is kept as a
/// cross edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchTree {
    pub kind: KernelKind,
    pub depth_bound: u32,
    pub nodes: Vec<TreeNode>,
    pub edges: Vec<TreeEdge>,
    pub truncated: Option<Truncation>,
}

impl SearchTree {
    pub fn is_complete(&self) -> bool {
        self.truncated.is_none()
    }

    pub fn is_tree_edge(&self, edge: usize) -> bool {
        self.nodes[self.edges[edge].to].parent == Some(edge)
    }

    /// Spanning-tree edges from the root to `node`.
    pub fn path_to(&self, node: usize) -> Vec<usize> {
        let mut path = Vec::with_capacity(self.nodes[node].depth as usize);
        let mut cur = node;
        while let Some(e) = self.nodes[cur].parent {
            path.push(e);
            cur = self.edges[e].from;
        }
        path.reverse();
        path
    }

    pub fn labels(&self, path: &[usize]) -> Vec<(Invoker, Call)> {
        path.iter()
            .map(|e| {
                let l = &self.edges[*e].label;
                (l.invoker, l.call)
            })
            .collect()
    }
}

/// Applies a function to every item of a frontier level, returning results
/// in input order.
pub trait LevelMap {
    fn map<T: Sync, R: Send>(&self, items: &[T], f: &(dyn Fn(&T) -> R + Sync)) -> Vec<R>;
}

pub struct Sequential;

impl LevelMap for Sequential {
    fn map<T: Sync, R: Send>(&self, items: &[T], f: &(dyn Fn(&T) -> R + Sync)) -> Vec<R> {
        items.iter().map(f).collect()
    }
}

pub fn explore<M: Model + Sync>(model: &M, spec: &ExploreSpec) -> Result<SearchTree, ExploreError> {
    explore_with(model, spec, &Sequential)
}

type Expansion<S> = Vec<(Label, S, StateKey)>;

pub fn explore_with<M: Model + Sync, L: LevelMap>(
    model: &M,
    spec: &ExploreSpec,
    mapper: &L,
) -> Result<SearchTree, ExploreError> {
    if spec.depth == 0 {
        return Err(ExploreError::ZeroDepth);
    }
    let root = model.init();
    let root_key = model.canonical_key(&root);
    let mut tree = SearchTree {
        kind: model.kind(),
        depth_bound: spec.depth,
        nodes: Vec::new(),
        edges: Vec::new(),
        truncated: None,
    };
    let mut seen: BTreeMap<StateKey, usize> = BTreeMap::new();
    seen.insert(root_key.clone(), 0);
    tree.nodes.push(TreeNode {
        key: root_key,
        depth: 0,
        observation: model.observe(&root),
        parent: None,
    });
    let mut frontier: Vec<(usize, M::State)> = alloc::vec![(0, root)];

    let expand = |(_, state): &(usize, M::State)| -> Expansion<M::State> {
        model
            .candidates(state, &spec.invocable)
            .into_iter()
            .filter_map(|(invoker, call)| {
                let (status, next) = model.step(state, invoker, call).ok()?;
                let key = model.canonical_key(&next);
                Some((
                    Label {
                        invoker,
                        call,
                        status,
                    },
                    next,
                    key,
                ))
            })
            .collect()
    };

    for depth in 0..spec.depth {
        if frontier.is_empty() {
            break;
        }
        let expanded = mapper.map(&frontier, &expand);
        let mut next_frontier = Vec::new();
        for ((from, _), children) in frontier.iter().zip(expanded) {
            for (label, state, key) in children {
                if tree.edges.len() >= spec.budget.max_edges {
                    tree.truncated = Some(Truncation::Edges(spec.budget.max_edges));
                    return Ok(tree);
                }
                let edge = tree.edges.len();
                let to = match seen.get(&key) {
                    Some(&existing) => existing,
                    None => {
                        if tree.nodes.len() >= spec.budget.max_nodes {
                            tree.truncated = Some(Truncation::Nodes(spec.budget.max_nodes));
                            return Ok(tree);
                        }
                        let id = tree.nodes.len();
                        seen.insert(key.clone(), id);
                        tree.nodes.push(TreeNode {
                            key,
                            depth: depth + 1,
                            observation: model.observe(&state),
                            parent: Some(edge),
                        });
                        next_frontier.push((id, state));
                        id
                    }
                };
                tree.edges.push(TreeEdge {
                    from: *from,
                    label,
                    to,
                });
            }
        }
        frontier = next_frontier;
    }
    Ok(tree)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub initial: Observation,
    pub steps: Vec<(Status, Observation)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("step {index} cannot be applied: {error}")]
pub struct ReplayError {
    /// Zero-based position in the step list.
    pub index: usize,
    pub error: StepError,
}

pub fn replay<M: Model>(model: &M, steps: &[(Invoker, Call)]) -> Result<Trace, ReplayError> {
    let mut state = model.init();
    let initial = model.observe(&state);
    let mut out = Vec::with_capacity(steps.len());
    for (index, (invoker, call)) in steps.iter().enumerate() {
        let (status, next) = model
            .step(&state, *invoker, *call)
            .map_err(|error| ReplayError { index, error })?;
        out.push((status, model.observe(&next)));
        state = next;
    }
    Ok(Trace {
        initial,
        steps: out,
    })
}
