//! JSON encodings of configurations, search trees, cases, programs, logs
//! and reports.
//!
//! Every writer produces canonical text: fixed field order, two-space
//! indentation and a trailing newline, so equal values give equal bytes.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use mbt_core::explorer::{SearchTree, TreeEdge, TreeNode, Truncation};
use mbt_core::harness::{FlawReport, RunLog};
use mbt_core::ids::TaskId;
use mbt_core::observation::TaskObservation;
use mbt_core::testgen::{TestCase, TestProgram};
use mbt_core::{
    Api, Call, ConfigDoc, ConfigError, Invoker, KernelKind, Label, Names, Observation, StateKey,
    Status, TaskState,
};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Invalid(String),
}

fn invalid<T>(message: impl Into<String>) -> Result<T, FormatError> {
    Err(FormatError::Invalid(message.into()))
}

pub fn to_canonical<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text
}

/// Kernel kind of a configuration document: a document declaring
/// `mutexes` or `condvars` is POSIX, anything else classic.
pub fn detect_kind(value: &Value) -> KernelKind {
    match value {
        Value::Object(map) if map.contains_key("mutexes") || map.contains_key("condvars") => {
            KernelKind::Posix
        }
        _ => KernelKind::Classic,
    }
}

pub fn parse_config(text: &str, kind: Option<KernelKind>) -> Result<ConfigDoc, FormatError> {
    let value: Value = serde_json::from_str(text)?;
    let doc = match kind.unwrap_or_else(|| detect_kind(&value)) {
        KernelKind::Classic => ConfigDoc::Classic(serde_json::from_value(value)?),
        KernelKind::Posix => ConfigDoc::Posix(serde_json::from_value(value)?),
    };
    doc.validate()?;
    Ok(doc)
}

pub fn config_to_json(doc: &ConfigDoc) -> String {
    match doc {
        ConfigDoc::Classic(c) => to_canonical(c),
        ConfigDoc::Posix(c) => to_canonical(c),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskObsJson {
    pub name: String,
    pub state: TaskState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<u32>,
}

/// Observation with task names spelled out. `running` lists the running
/// task of each core, `null` when idle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationJson {
    pub tasks: Vec<TaskObsJson>,
    pub running: Vec<Option<String>>,
}

impl ObservationJson {
    pub fn new(o: &Observation, names: &Names) -> Self {
        ObservationJson {
            tasks: o
                .tasks
                .iter()
                .enumerate()
                .map(|(i, t)| TaskObsJson {
                    name: names.task_name(TaskId::from_index(i)).to_string(),
                    state: t.state,
                    events: t.events,
                })
                .collect(),
            running: o
                .cores
                .iter()
                .map(|c| c.map(|t| names.task_name(t).to_string()))
                .collect(),
        }
    }

    pub fn resolve(&self, names: &Names) -> Result<Observation, FormatError> {
        let mut tasks = Vec::with_capacity(self.tasks.len());
        for (i, t) in self.tasks.iter().enumerate() {
            if names.tasks.get(i) != Some(&t.name) {
                return invalid(format!(
                    "observation lists task `{}` at position {i}",
                    t.name
                ));
            }
            tasks.push(TaskObservation {
                state: t.state,
                events: t.events,
            });
        }
        let mut cores = Vec::with_capacity(self.running.len());
        for r in &self.running {
            cores.push(match r {
                None => None,
                Some(name) => match names.task(name) {
                    Some(t) => Some(t),
                    None => return invalid(format!("unknown running task `{name}`")),
                },
            });
        }
        Ok(Observation { tasks, cores })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelJson {
    pub invoker: String,
    pub api: Api,
    pub args: Vec<String>,
    pub status: Status,
}

impl LabelJson {
    pub fn new(l: &Label, names: &Names) -> Self {
        LabelJson {
            invoker: l.invoker.render(names),
            api: l.call.api(),
            args: l.call.render_args(names),
            status: l.status,
        }
    }

    pub fn resolve(&self, names: &Names) -> Result<Label, FormatError> {
        let Some(invoker) = Invoker::parse(&self.invoker, names) else {
            return invalid(format!("unknown invoker `{}`", self.invoker));
        };
        let call = Call::resolve(self.api, &self.args, names)
            .map_err(|e| FormatError::Invalid(e.to_string()))?;
        Ok(Label {
            invoker,
            call,
            status: self.status,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeJson {
    key: String,
    depth: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent: Option<usize>,
    observation: ObservationJson,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeJson {
    from: usize,
    label: LabelJson,
    to: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "budget", content = "limit", rename_all = "lowercase")]
enum TruncationJson {
    Nodes(usize),
    Edges(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeJson {
    kernel: KernelKind,
    /// Fingerprint of the canonical configuration the tree was built from.
    config_sha256: String,
    depth_bound: u32,
    complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truncated: Option<TruncationJson>,
    tasks: Vec<String>,
    root: usize,
    nodes: Vec<NodeJson>,
    edges: Vec<EdgeJson>,
}

pub fn tree_to_json(tree: &SearchTree, config: &ConfigDoc) -> String {
    let names = config.names();
    let doc = TreeJson {
        kernel: tree.kind,
        config_sha256: crate::cache::sha256_hex(config_to_json(config).as_bytes()),
        depth_bound: tree.depth_bound,
        complete: tree.is_complete(),
        truncated: tree.truncated.map(|t| match t {
            Truncation::Nodes(n) => TruncationJson::Nodes(n),
            Truncation::Edges(n) => TruncationJson::Edges(n),
        }),
        tasks: names.tasks.clone(),
        root: 0,
        nodes: tree
            .nodes
            .iter()
            .map(|n| NodeJson {
                key: n.key.to_hex(),
                depth: n.depth,
                parent: n.parent,
                observation: ObservationJson::new(&n.observation, &names),
            })
            .collect(),
        edges: tree
            .edges
            .iter()
            .map(|e| EdgeJson {
                from: e.from,
                label: LabelJson::new(&e.label, &names),
                to: e.to,
            })
            .collect(),
    };
    to_canonical(&doc)
}

pub fn tree_from_json(text: &str, config: &ConfigDoc) -> Result<SearchTree, FormatError> {
    let doc: TreeJson = serde_json::from_str(text)?;
    let names = config.names();
    if doc.kernel != config.kind() {
        return invalid(format!("tree is for the {} kernel", doc.kernel.as_str()));
    }
    if doc.config_sha256 != crate::cache::sha256_hex(config_to_json(config).as_bytes()) {
        return invalid("tree was built from a different configuration");
    }
    if doc.tasks != names.tasks {
        return invalid("tree task list does not match the configuration");
    }
    if doc.root != 0 || doc.nodes.is_empty() {
        return invalid("tree must have node 0 as its root");
    }
    let n = doc.nodes.len();
    let mut nodes = Vec::with_capacity(n);
    for (i, node) in doc.nodes.iter().enumerate() {
        let Some(key) = StateKey::from_hex(&node.key) else {
            return invalid(format!("node {i}: malformed key"));
        };
        if node.parent.is_some_and(|p| p >= doc.edges.len()) {
            return invalid(format!("node {i}: parent edge out of range"));
        }
        nodes.push(TreeNode {
            key,
            depth: node.depth,
            observation: node.observation.resolve(&names)?,
            parent: node.parent,
        });
    }
    let mut edges = Vec::with_capacity(doc.edges.len());
    for (i, e) in doc.edges.iter().enumerate() {
        if e.from >= n || e.to >= n {
            return invalid(format!("edge {i}: node index out of range"));
        }
        edges.push(TreeEdge {
            from: e.from,
            label: e.label.resolve(&names)?,
            to: e.to,
        });
    }
    let tree = SearchTree {
        kind: doc.kernel,
        depth_bound: doc.depth_bound,
        nodes,
        edges,
        truncated: doc.truncated.map(|t| match t {
            TruncationJson::Nodes(n) => Truncation::Nodes(n),
            TruncationJson::Edges(n) => Truncation::Edges(n),
        }),
    };
    if tree.is_complete() != doc.complete {
        return invalid("`complete` contradicts `truncated`");
    }
    for (i, node) in tree.nodes.iter().enumerate().skip(1) {
        if !node.parent.is_some_and(|p| tree.edges[p].to == i) {
            return invalid(format!("node {i}: parent edge does not lead to it"));
        }
    }
    Ok(tree)
}

pub fn case_to_json(case: &TestCase) -> String {
    to_canonical(case)
}

pub fn case_from_json(text: &str) -> Result<TestCase, FormatError> {
    let case: TestCase = serde_json::from_str(text)?;
    for (i, s) in case.steps.iter().enumerate() {
        if s.n() as usize != i + 1 {
            return invalid(format!("step {} is numbered {}", i + 1, s.n()));
        }
    }
    Ok(case)
}

pub fn program_to_json(program: &TestProgram) -> String {
    to_canonical(program)
}

pub fn program_from_json(text: &str) -> Result<TestProgram, FormatError> {
    Ok(serde_json::from_str(text)?)
}

/// One JSON object per line.
pub fn logs_to_jsonl(logs: &[RunLog]) -> String {
    let mut out = String::new();
    for log in logs {
        out.push_str(&log_line(log));
    }
    out
}

pub fn log_line(log: &RunLog) -> String {
    let mut line = serde_json::to_string(log).expect("serializable");
    line.push('\n');
    line
}

pub fn logs_from_jsonl(text: &str) -> Result<Vec<RunLog>, FormatError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(FormatError::from))
        .collect()
}

pub fn report_to_json(report: &FlawReport) -> String {
    to_canonical(report)
}
