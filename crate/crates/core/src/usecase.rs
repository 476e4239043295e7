//! Use-case models: small reviewed state machines pairing API invocations
//! with expected task states, a line-oriented text format for them, and
//! their compilation into synchronous observers.
//!
//! ```text
//! usecase preempt
//! config preempt.json
//! state s0 : T1=RUN, T2=SUS
//! state s1 : T1=RDY, T2=RUN
//! init s0
//! edge s0 -> s1 : T1:ActivateTask(T2) = E_OK
//! ```

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::call::{Api, Call, Invoker, Label};
use crate::config::{is_identifier, KernelKind, Names};
use crate::ids::TaskId;
use crate::model::{Model, StepError};
use crate::observation::{Observation, TaskState};
use crate::status::Status;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UcNode {
    pub id: String,
    pub expected: Vec<(TaskId, TaskState)>,
    /// Expected event masks, by task.
    pub events: Vec<(TaskId, u32)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UcEdge {
    pub from: usize,
    pub to: usize,
    pub invoker: Invoker,
    pub call: Call,
    pub status: Option<Status>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UseCaseModel {
    pub name: String,
    pub config: Option<String>,
    pub nodes: Vec<UcNode>,
    pub init: usize,
    pub edges: Vec<UcEdge>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct UseCaseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

fn err<T>(line: usize, col: usize, message: impl Into<String>) -> Result<T, UseCaseError> {
    Err(UseCaseError {
        line,
        col,
        message: message.into(),
    })
}

/// 1-based column of `part` within `line`; `part` must be a subslice.
fn col(line: &str, part: &str) -> usize {
    (part.as_ptr() as usize).saturating_sub(line.as_ptr() as usize) + 1
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// The `config` line of a use-case document, if any, without parsing the rest.
pub fn config_reference(text: &str) -> Option<String> {
    text.lines().find_map(|l| {
        let l = strip_comment(l).trim();
        l.strip_prefix("config")
            .filter(|r| r.starts_with(char::is_whitespace))
            .map(|r| r.trim().to_string())
    })
}

struct PendingEdge<'a> {
    line_no: usize,
    line: &'a str,
    from: &'a str,
    to: &'a str,
    invoker: Invoker,
    call: Call,
    status: Option<Status>,
}

pub fn parse_usecase(
    text: &str,
    names: &Names,
    kind: KernelKind,
) -> Result<UseCaseModel, UseCaseError> {
    let mut name: Option<String> = None;
    let mut config = None;
    let mut nodes: Vec<UcNode> = Vec::new();
    let mut init: Option<(usize, &str, &str)> = None;
    let mut pending = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let body = strip_comment(raw);
        let trimmed = body.trim();
        if trimmed.is_empty() {
            continue;
        }
        let (keyword, rest) = match trimmed.find(char::is_whitespace) {
            Some(p) => (&trimmed[..p], trimmed[p..].trim()),
            None => (trimmed, ""),
        };
        let rest_col = if rest.is_empty() {
            col(raw, trimmed) + trimmed.len()
        } else {
            col(raw, rest)
        };
        match keyword {
            "usecase" => {
                if name.is_some() {
                    return err(line_no, col(raw, trimmed), "duplicate `usecase` line");
                }
                if !is_identifier(rest) {
                    return err(line_no, rest_col, "expected a use-case name");
                }
                name = Some(rest.to_string());
            }
            "config" => {
                if rest.is_empty() {
                    return err(line_no, rest_col, "expected a configuration path");
                }
                config = Some(rest.to_string());
            }
            "state" => nodes.push(parse_state(raw, rest, line_no, names, kind, &nodes)?),
            "init" => {
                if init.is_some() {
                    return err(line_no, col(raw, trimmed), "duplicate `init` line");
                }
                init = Some((line_no, raw, rest));
            }
            "edge" => pending.push(parse_edge(raw, rest, line_no, names, kind)?),
            other => {
                return err(
                    line_no,
                    col(raw, trimmed),
                    format!("unknown keyword `{other}`"),
                );
            }
        }
    }

    let Some(name) = name else {
        return err(1, 1, "missing `usecase` line");
    };
    let Some((init_line, init_raw, init_id)) = init else {
        return err(text.lines().count().max(1), 1, "missing `init` line");
    };
    let node_index = |id: &str| nodes.iter().position(|n| n.id == id);
    let Some(init) = node_index(init_id) else {
        return err(
            init_line,
            col(init_raw, init_id),
            format!("undeclared state `{init_id}`"),
        );
    };
    let mut edges: Vec<UcEdge> = Vec::with_capacity(pending.len());
    for p in pending {
        let from = node_index(p.from).ok_or_else(|| UseCaseError {
            line: p.line_no,
            col: col(p.line, p.from),
            message: format!("undeclared state `{}`", p.from),
        })?;
        let to = node_index(p.to).ok_or_else(|| UseCaseError {
            line: p.line_no,
            col: col(p.line, p.to),
            message: format!("undeclared state `{}`", p.to),
        })?;
        if edges
            .iter()
            .any(|e| e.from == from && e.invoker == p.invoker && e.call == p.call)
        {
            return err(
                p.line_no,
                col(p.line, p.from),
                format!("state `{}` already has an edge with this label", p.from),
            );
        }
        edges.push(UcEdge {
            from,
            to,
            invoker: p.invoker,
            call: p.call,
            status: p.status,
        });
    }
    Ok(UseCaseModel {
        name,
        config,
        nodes,
        init,
        edges,
    })
}

fn parse_state(
    raw: &str,
    rest: &str,
    line_no: usize,
    names: &Names,
    kind: KernelKind,
    nodes: &[UcNode],
) -> Result<UcNode, UseCaseError> {
    let (id, label) = match rest.find(':') {
        Some(p) => (rest[..p].trim(), Some(&rest[p + 1..])),
        None => (rest.trim(), None),
    };
    if !is_identifier(id) {
        return err(line_no, col(raw, rest), "expected a state id");
    }
    if nodes.iter().any(|n| n.id == id) {
        return err(line_no, col(raw, id), format!("duplicate state id `{id}`"));
    }
    let mut node = UcNode {
        id: id.to_string(),
        expected: Vec::new(),
        events: Vec::new(),
    };
    let Some(label) = label else {
        return Ok(node);
    };
    if label.trim().is_empty() {
        return Ok(node);
    }
    for entry in label.split(',') {
        let entry = entry.trim();
        let Some((task, value)) = entry.split_once('=') else {
            return err(
                line_no,
                col(raw, entry),
                "expected `Task=STATE` or `Task=<mask>`",
            );
        };
        let (task, value) = (task.trim(), value.trim());
        let Some(tid) = names.task(task) else {
            return err(line_no, col(raw, task), format!("undeclared task `{task}`"));
        };
        if let Some(state) = TaskState::parse(value) {
            if node.expected.iter().any(|(t, _)| *t == tid) {
                return err(
                    line_no,
                    col(raw, task),
                    format!("state of `{task}` given twice"),
                );
            }
            node.expected.push((tid, state));
        } else if let Ok(mask) = value.parse::<u32>() {
            if kind != KernelKind::Classic {
                return err(
                    line_no,
                    col(raw, value),
                    "event masks exist only in the classic kernel",
                );
            }
            if node.events.iter().any(|(t, _)| *t == tid) {
                return err(
                    line_no,
                    col(raw, task),
                    format!("events of `{task}` given twice"),
                );
            }
            node.events.push((tid, mask));
        } else {
            return err(
                line_no,
                col(raw, value),
                format!("expected SUS, RDY, RUN, WAI or a mask, got `{value}`"),
            );
        }
    }
    Ok(node)
}

fn parse_edge<'a>(
    raw: &'a str,
    rest: &'a str,
    line_no: usize,
    names: &Names,
    kind: KernelKind,
) -> Result<PendingEdge<'a>, UseCaseError> {
    let Some((ends, label)) = rest.split_once(':') else {
        return err(
            line_no,
            col(raw, rest),
            "expected `<from> -> <to> : <label>`",
        );
    };
    let Some((from, to)) = ends.split_once("->") else {
        return err(line_no, col(raw, ends), "expected `<from> -> <to>`");
    };
    let (from, to) = (from.trim(), to.trim());
    let label = label.trim();
    let (call_text, status_text) = match label.rfind('=') {
        Some(p) if label[..p].trim_end().ends_with(')') => {
            (label[..p].trim(), Some(label[p + 1..].trim()))
        }
        _ => (label, None),
    };
    let Some((invoker_text, call_body)) = call_text.split_once(':') else {
        return err(
            line_no,
            col(raw, label),
            "expected `<invoker>:<Api>(<args>)`",
        );
    };
    let invoker_text = invoker_text.trim();
    let Some(invoker) = Invoker::parse(invoker_text, names) else {
        return err(
            line_no,
            col(raw, invoker_text),
            format!("undeclared task `{invoker_text}`"),
        );
    };
    let call_body = call_body.trim();
    let (Some(open), true) = (call_body.find('('), call_body.ends_with(')')) else {
        return err(line_no, col(raw, call_body), "expected `<Api>(<args>)`");
    };
    let api_text = call_body[..open].trim();
    let Some(api) = Api::parse(api_text).filter(|a| Api::for_kind(kind).contains(a)) else {
        return err(
            line_no,
            col(raw, api_text),
            format!("unknown {} API `{api_text}`", kind.as_str()),
        );
    };
    let inner = &call_body[open + 1..call_body.len() - 1];
    let args: Vec<String> = if inner.trim().is_empty() {
        Vec::new()
    } else {
        inner.split(',').map(|a| a.trim().to_string()).collect()
    };
    let call = Call::resolve(api, &args, names).map_err(|e| UseCaseError {
        line: line_no,
        col: col(raw, inner),
        message: e.to_string(),
    })?;
    let status = match status_text {
        None => None,
        Some(s) => {
            let parsed = Status::parse(s).filter(|st| {
                matches!(
                    (st, kind),
                    (Status::Classic(_), KernelKind::Classic)
                        | (Status::Posix(_), KernelKind::Posix)
                )
            });
            match parsed {
                Some(st) => Some(st),
                None => return err(line_no, col(raw, s), format!("unknown status `{s}`")),
            }
        }
    };
    Ok(PendingEdge {
        line_no,
        line: raw,
        from,
        to,
        invoker,
        call,
        status,
    })
}

pub fn print_usecase(model: &UseCaseModel, names: &Names) -> String {
    let mut out = String::new();
    out.push_str(&format!("usecase {}\n", model.name));
    if let Some(c) = &model.config {
        out.push_str(&format!("config {c}\n"));
    }
    for n in &model.nodes {
        let parts: Vec<String> = n
            .expected
            .iter()
            .map(|(t, s)| format!("{}={}", names.task_name(*t), s.code()))
            .chain(
                n.events
                    .iter()
                    .map(|(t, m)| format!("{}={m}", names.task_name(*t))),
            )
            .collect();
        if parts.is_empty() {
            out.push_str(&format!("state {}\n", n.id));
        } else {
            out.push_str(&format!("state {} : {}\n", n.id, parts.join(", ")));
        }
    }
    out.push_str(&format!("init {}\n", model.nodes[model.init].id));
    for e in &model.edges {
        out.push_str(&format!(
            "edge {} -> {} : {}:{}",
            model.nodes[e.from].id,
            model.nodes[e.to].id,
            e.invoker.render(names),
            e.call.render(names)
        ));
        if let Some(s) = e.status {
            out.push_str(&format!(" = {s}"));
        }
        out.push('\n');
    }
    out
}

/// A single unmet expectation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expectation {
    Status {
        expected: Status,
        actual: Status,
    },
    State {
        task: TaskId,
        expected: TaskState,
        actual: TaskState,
    },
    Events {
        task: TaskId,
        expected: u32,
        actual: Option<u32>,
    },
}

impl Expectation {
    pub fn render(&self, names: &Names) -> String {
        match self {
            Expectation::Status { expected, actual } => {
                format!("status: expected {expected}, got {actual}")
            }
            Expectation::State {
                task,
                expected,
                actual,
            } => format!(
                "{}: expected {}, got {}",
                names.task_name(*task),
                expected.code(),
                actual.code()
            ),
            Expectation::Events {
                task,
                expected,
                actual,
            } => format!(
                "{} events: expected {}, got {}",
                names.task_name(*task),
                names.render_mask(*expected),
                actual.map_or_else(|| "none".to_string(), |m| names.render_mask(m))
            ),
        }
    }
}

/// Unmet expectations of `node` against `obs`.
pub fn node_mismatches(node: &UcNode, obs: &Observation) -> Vec<Expectation> {
    let mut out = Vec::new();
    for (task, expected) in &node.expected {
        let actual = obs.state_of(*task);
        if actual != *expected {
            out.push(Expectation::State {
                task: *task,
                expected: *expected,
                actual,
            });
        }
    }
    for (task, expected) in &node.events {
        let actual = obs.events_of(*task);
        if actual != Some(*expected) {
            out.push(Expectation::Events {
                task: *task,
                expected: *expected,
                actual,
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ObserverEvent {
    /// The step matched an out-edge and the destination's expectations hold.
    Advanced { edge: usize },
    Violated {
        edge: usize,
        failures: Vec<Expectation>,
    },
    /// The step is not labeled by any out-edge of the cursor: the scenario
    /// is over.
    Finished,
}

/// A use-case model compiled into a checker advanced in lockstep with the
/// kernel.
#[derive(Clone, Debug)]
pub struct Observer {
    model: UseCaseModel,
    out_edges: Vec<Vec<usize>>,
    cursor: usize,
    finished: bool,
}

pub fn compile_observer(model: &UseCaseModel) -> Observer {
    let mut out_edges = vec![Vec::new(); model.nodes.len()];
    for (i, e) in model.edges.iter().enumerate() {
        out_edges[e.from].push(i);
    }
    Observer {
        model: model.clone(),
        out_edges,
        cursor: model.init,
        finished: false,
    }
}

impl Observer {
    pub fn model(&self) -> &UseCaseModel {
        &self.model
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn reset(&mut self) {
        self.cursor = self.model.init;
        self.finished = false;
    }

    /// Expectations of the initial node against the initial observation.
    pub fn check_initial(&self, obs: &Observation) -> Vec<Expectation> {
        node_mismatches(&self.model.nodes[self.model.init], obs)
    }

    pub fn step(
        &mut self,
        invoker: Invoker,
        call: Call,
        status: Status,
        obs: &Observation,
    ) -> ObserverEvent {
        if self.finished {
            return ObserverEvent::Finished;
        }
        let Some(&edge) = self.out_edges[self.cursor]
            .iter()
            .find(|&&e| self.model.edges[e].invoker == invoker && self.model.edges[e].call == call)
        else {
            self.finished = true;
            return ObserverEvent::Finished;
        };
        let e = &self.model.edges[edge];
        let mut failures = Vec::new();
        if let Some(expected) = e.status {
            if expected != status {
                failures.push(Expectation::Status {
                    expected,
                    actual: status,
                });
            }
        }
        failures.extend(node_mismatches(&self.model.nodes[e.to], obs));
        self.cursor = e.to;
        if failures.is_empty() {
            ObserverEvent::Advanced { edge }
        } else {
            ObserverEvent::Violated { edge, failures }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CexStep {
    /// `None` for the initial observation.
    pub label: Option<Label>,
    /// Expected node id.
    pub expected: String,
    pub actual: Observation,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Failure {
    /// The kernel's behavior contradicts an expectation.
    Mismatch(Vec<Expectation>),
    /// The use-case model asks for a step the kernel cannot take, a flaw in
    /// the use-case model rather than in the kernel.
    Inapplicable { edge: usize, error: StepError },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub path: Vec<usize>,
    pub steps: Vec<CexStep>,
    pub failure: Failure,
}

impl Counterexample {
    /// The executed invocations, replayable on the kernel.
    pub fn invocations(&self) -> Vec<(Invoker, Call)> {
        self.steps
            .iter()
            .filter_map(|s| s.label.map(|l| (l.invoker, l.call)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub pass: bool,
    pub paths_checked: usize,
    /// Times each use-case edge was executed.
    pub edge_hits: Vec<usize>,
    pub counterexample: Option<Counterexample>,
}

impl Verdict {
    pub fn render(&self, uc: &UseCaseModel, names: &Names) -> String {
        let mut out = String::new();
        match &self.counterexample {
            None => out.push_str(&format!(
                "{}: pass ({} paths)\n",
                uc.name, self.paths_checked
            )),
            Some(cex) => {
                let heading = match cex.failure {
                    Failure::Mismatch(_) => "expectation violated",
                    Failure::Inapplicable { .. } => "use-case step not applicable",
                };
                out.push_str(&format!("{}: FAIL, {heading}\n", uc.name));
                for s in &cex.steps {
                    let label = s
                        .label
                        .map_or_else(|| "<init>".to_string(), |l| l.render(names));
                    let tasks: Vec<String> = s
                        .actual
                        .tasks
                        .iter()
                        .enumerate()
                        .map(|(i, t)| {
                            format!(
                                "{}={}",
                                names.task_name(TaskId::from_index(i)),
                                t.state.code()
                            )
                        })
                        .collect();
                    out.push_str(&format!(
                        "  {label} -> {} [{}]\n",
                        s.expected,
                        tasks.join(", ")
                    ));
                }
                match &cex.failure {
                    Failure::Mismatch(f) => {
                        for e in f {
                            out.push_str(&format!("  ! {}\n", e.render(names)));
                        }
                    }
                    Failure::Inapplicable { edge, error } => {
                        let e = &uc.edges[*edge];
                        out.push_str(&format!(
                            "  ! {}:{}: {error}\n",
                            e.invoker.render(names),
                            e.call.render(names)
                        ));
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Mismatch(v) => write!(f, "{} expectation(s) violated", v.len()),
            Failure::Inapplicable { error, .. } => write!(f, "{error}"),
        }
    }
}

/// Maximal simple paths from the initial node. A path ends at a node
/// without out-edges or with the edge that first revisits a node.
pub fn simple_paths(model: &UseCaseModel) -> Vec<Vec<usize>> {
    let mut out_edges = vec![Vec::new(); model.nodes.len()];
    for (i, e) in model.edges.iter().enumerate() {
        out_edges[e.from].push(i);
    }
    let mut paths = Vec::new();
    let mut on_path = vec![false; model.nodes.len()];
    let mut path = Vec::new();
    fn walk(
        node: usize,
        model: &UseCaseModel,
        out_edges: &[Vec<usize>],
        on_path: &mut [bool],
        path: &mut Vec<usize>,
        paths: &mut Vec<Vec<usize>>,
    ) {
        if out_edges[node].is_empty() {
            paths.push(path.clone());
            return;
        }
        on_path[node] = true;
        for &e in &out_edges[node] {
            path.push(e);
            let to = model.edges[e].to;
            if on_path[to] {
                paths.push(path.clone());
            } else {
                walk(to, model, out_edges, on_path, path, paths);
            }
            path.pop();
        }
        on_path[node] = false;
    }
    walk(
        model.init,
        model,
        &out_edges,
        &mut on_path,
        &mut path,
        &mut paths,
    );
    paths
}

/// Drives the kernel along every simple path of the use-case model and
/// checks each destination's expectations.
pub fn check_usecase<M: Model>(kernel: &M, uc: &UseCaseModel) -> Verdict {
    let mut observer = compile_observer(uc);
    let paths = simple_paths(uc);
    let mut edge_hits = vec![0; uc.edges.len()];
    let init_node = uc.nodes[uc.init].id.clone();
    for (checked, path) in paths.iter().enumerate() {
        observer.reset();
        let mut state = kernel.init();
        let obs = kernel.observe(&state);
        let mut steps = vec![CexStep {
            label: None,
            expected: init_node.clone(),
            actual: obs.clone(),
        }];
        let init_failures = observer.check_initial(&obs);
        let fail = |steps: Vec<CexStep>, failure: Failure, hits: Vec<usize>| Verdict {
            pass: false,
            paths_checked: checked + 1,
            edge_hits: hits,
            counterexample: Some(Counterexample {
                path: path.clone(),
                steps,
                failure,
            }),
        };
        if !init_failures.is_empty() {
            return fail(steps, Failure::Mismatch(init_failures), edge_hits);
        }
        for &edge in path {
            let e = &uc.edges[edge];
            let (status, next) = match kernel.step(&state, e.invoker, e.call) {
                Ok(r) => r,
                Err(error) => return fail(steps, Failure::Inapplicable { edge, error }, edge_hits),
            };
            let obs = kernel.observe(&next);
            edge_hits[edge] += 1;
            steps.push(CexStep {
                label: Some(Label {
                    invoker: e.invoker,
                    call: e.call,
                    status,
                }),
                expected: uc.nodes[e.to].id.clone(),
                actual: obs.clone(),
            });
            match observer.step(e.invoker, e.call, status, &obs) {
                ObserverEvent::Advanced { .. } => {}
                ObserverEvent::Violated { failures, .. } => {
                    return fail(steps, Failure::Mismatch(failures), edge_hits);
                }
                ObserverEvent::Finished => unreachable!("path edges are observer edges"),
            }
            state = next;
        }
    }
    Verdict {
        pass: true,
        paths_checked: paths.len(),
        edge_hits,
        counterexample: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classic::ClassicKernel;
    use crate::config::{KernelConfig, OptionFlags, TaskConfig};

    fn preempt() -> KernelConfig {
        let task = |name: &str, priority, auto_start| TaskConfig {
            name: name.into(),
            core: 0,
            priority,
            extended: false,
            max_activations: 1,
            auto_start,
        };
        KernelConfig {
            cores: 1,
            tasks: vec![task("T1", 1, true), task("T2", 2, false)],
            events: vec![],
            spinlocks: vec![],
            alarms: vec![],
            options: OptionFlags::default(),
        }
    }

    const PREEMPT: &str = "\
# Preemption scenario
usecase preempt
config preempt.json
state s0 : T1=RUN, T2=SUS
state s1 : T1=RDY, T2=RUN
state s2 : T1=RUN, T2=SUS
init s0
edge s0 -> s1 : T1:ActivateTask(T2) = E_OK
edge s1 -> s2 : T2:TerminateTask() = E_OK
";

    fn parse(text: &str) -> Result<UseCaseModel, UseCaseError> {
        parse_usecase(text, &Names::classic(&preempt()), KernelKind::Classic)
    }

    #[test]
    fn preempt_parses_and_round_trips() {
        let m = parse(PREEMPT).unwrap();
        assert_eq!(m.nodes.len(), 3);
        assert_eq!(m.edges.len(), 2);
        assert_eq!(m.config.as_deref(), Some("preempt.json"));
        let names = Names::classic(&preempt());
        let printed = print_usecase(&m, &names);
        assert_eq!(parse(&printed).unwrap(), m);
        assert_eq!(config_reference(PREEMPT).as_deref(), Some("preempt.json"));
    }

    #[test]
    fn diagnostics_carry_positions() {
        let e = parse("usecase u\nstate s0 : T9=RUN\ninit s0\n").unwrap_err();
        assert_eq!((e.line, e.col), (2, 12));
        let e = parse("usecase u\nstate s0\ninit s0\nedge s0 -> s0 : T9:TerminateTask()\n")
            .unwrap_err();
        assert_eq!((e.line, e.col), (4, 17));
        let e = parse("usecase u\nstate s0\nstate s0\ninit s0\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(parse("usecase u\nstate s0\n")
            .unwrap_err()
            .message
            .contains("init"));
        let e = parse("usecase u\nstate s0\ninit s0\nedge s0 -> s0 : T1:Foo()\n").unwrap_err();
        assert!(e.message.contains("Foo"));
        let e =
            parse("usecase u\nstate s0\ninit s0\nedge s0 -> s0 : T1:mutex_lock(M)\n").unwrap_err();
        assert!(e.message.contains("mutex_lock"));
    }

    #[test]
    fn duplicate_labels_are_rejected() {
        let text = "usecase u\nstate a\nstate b\ninit a\nedge a -> b : T1:TerminateTask()\nedge a -> a : T1:TerminateTask()\n";
        assert!(parse(text).unwrap_err().message.contains("already"));
    }

    #[test]
    fn preempt_checks_against_reference() {
        let m = parse(PREEMPT).unwrap();
        let k = ClassicKernel::new(preempt()).unwrap();
        let v = check_usecase(&k, &m);
        assert!(v.pass, "{v:?}");
        assert_eq!(v.edge_hits, vec![1, 1]);

        let trivial = parse("usecase t\nstate s0\ninit s0\n").unwrap();
        assert!(check_usecase(&k, &trivial).pass);

        let wrong = parse(&PREEMPT.replace("s1 : T1=RDY, T2=RUN", "s1 : T1=RUN, T2=RDY")).unwrap();
        let v = check_usecase(&k, &wrong);
        let cex = v.counterexample.unwrap();
        assert!(matches!(cex.failure, Failure::Mismatch(_)));
        assert_eq!(cex.invocations().len(), 1);

        let bad_step = parse(&PREEMPT.replace("T2:TerminateTask", "T1:TerminateTask")).unwrap();
        let v = check_usecase(&k, &bad_step);
        assert!(matches!(
            v.counterexample.unwrap().failure,
            Failure::Inapplicable { edge: 1, .. }
        ));
    }

    #[test]
    fn observer_finishes_on_unlabeled_step() {
        let m = parse(PREEMPT).unwrap();
        let mut obs = compile_observer(&m);
        let k = ClassicKernel::new(preempt()).unwrap();
        let s = k.init();
        let (st, n) = k
            .step(&s, Invoker::Task(TaskId(0)), Call::TerminateTask)
            .unwrap();
        assert_eq!(
            obs.step(
                Invoker::Task(TaskId(0)),
                Call::TerminateTask,
                st,
                &k.observe(&n)
            ),
            ObserverEvent::Finished
        );
        assert!(obs.is_finished());
    }

    #[test]
    fn cycles_end_paths_at_first_revisit() {
        let text = "usecase c\nstate a\nstate b\ninit a\nedge a -> b : T1:ActivateTask(T2)\nedge b -> a : T2:TerminateTask()\n";
        let m = parse(text).unwrap();
        assert_eq!(simple_paths(&m), vec![vec![0, 1]]);
    }
}
