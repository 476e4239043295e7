//! Static kernel configurations and their validation.
//!
//! Both configuration documents deserialize from the normative JSON layout
//! (the std companion crate owns the JSON codec); this module owns the field
//! layout, defaults and the structural checks.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{TaskId, MAX_OBJECTS};

/// Which scheduler model a configuration targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Classic,
    Posix,
}

impl KernelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Classic => "classic",
            KernelKind::Posix => "posix",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "classic" => Some(KernelKind::Classic),
            "posix" => Some(KernelKind::Posix),
            _ => None,
        }
    }
}

/// A configuration rejected by validation. `field` is a JSON-pointer-like
/// path to the offending entry, e.g. `tasks[1].core`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{field}: duplicate name `{name}`")]
    DuplicateName { field: String, name: String },
    #[error("{field}: reference to undeclared {kind} `{name}`")]
    DanglingReference {
        field: String,
        kind: &'static str,
        name: String,
    },
    #[error("{field}: spinlock order contains a cycle through `{name}`")]
    SpinlockCycle { field: String, name: String },
    #[error("{field}: core {core} out of range (core count {cores})")]
    CoreOutOfRange {
        field: String,
        core: usize,
        cores: usize,
    },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: String, message: &str) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: String::from(message),
    }
}

fn default_true() -> bool {
    true
}

fn default_one() -> u32 {
    1
}

fn is_one(v: &u32) -> bool {
    *v == 1
}

fn is_false(v: &bool) -> bool {
    !*v
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub name: String,
    pub core: usize,
    /// Larger value means higher priority.
    pub priority: u32,
    #[serde(default, skip_serializing_if = "is_false")]
    pub extended: bool,
    #[serde(default = "default_one", skip_serializing_if = "is_one")]
    pub max_activations: u32,
    #[serde(default, skip_serializing_if = "is_false")]
    pub auto_start: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    pub name: String,
    /// Bit index in the 32-bit event mask word.
    pub bit: u8,
}

impl EventConfig {
    pub fn mask(&self) -> u32 {
        1u32 << self.bit
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinlockConfig {
    pub name: String,
    /// Spinlocks that may be acquired while this one is the innermost lock
    /// held on a core.
    #[serde(default)]
    pub successors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum AlarmAction {
    ActivateTask { task: String },
    SetEvent { task: String, event: String },
}

impl AlarmAction {
    pub fn task(&self) -> &str {
        match self {
            AlarmAction::ActivateTask { task } | AlarmAction::SetEvent { task, .. } => task,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlarmConfig {
    pub name: String,
    pub action: AlarmAction,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionFlags {
    /// Whether `ChainTask` on the calling task clears its pending events.
    #[serde(default = "default_true")]
    pub chaintask_clears_events: bool,
}

impl Default for OptionFlags {
    fn default() -> Self {
        Self {
            chaintask_clears_events: true,
        }
    }
}

/// Classic (OSEK-style) kernel configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub cores: usize,
    #[serde(default)]
    pub tasks: Vec<TaskConfig>,
    #[serde(default)]
    pub events: Vec<EventConfig>,
    #[serde(default)]
    pub spinlocks: Vec<SpinlockConfig>,
    #[serde(default)]
    pub alarms: Vec<AlarmConfig>,
    #[serde(default)]
    pub options: OptionFlags,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosixTaskConfig {
    pub name: String,
    pub core: usize,
    pub priority: u32,
    #[serde(default, skip_serializing_if = "is_false")]
    pub auto_start: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CondvarConfig {
    pub name: String,
    pub mutex: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosixOptions {}

/// POSIX-subset kernel configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosixConfig {
    pub cores: usize,
    #[serde(default)]
    pub tasks: Vec<PosixTaskConfig>,
    #[serde(default)]
    pub mutexes: Vec<String>,
    #[serde(default)]
    pub condvars: Vec<CondvarConfig>,
    #[serde(default)]
    pub options: PosixOptions,
}

/// Either configuration document, tagged by kernel kind.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConfigDoc {
    Classic(KernelConfig),
    Posix(PosixConfig),
}

impl ConfigDoc {
    pub fn kind(&self) -> KernelKind {
        match self {
            ConfigDoc::Classic(_) => KernelKind::Classic,
            ConfigDoc::Posix(_) => KernelKind::Posix,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            ConfigDoc::Classic(c) => c.validate(),
            ConfigDoc::Posix(c) => c.validate(),
        }
    }

    pub fn names(&self) -> Names {
        match self {
            ConfigDoc::Classic(c) => Names::classic(c),
            ConfigDoc::Posix(c) => Names::posix(c),
        }
    }
}

fn check_unique<'a>(table: &str, names: impl Iterator<Item = &'a str>) -> Result<(), ConfigError> {
    let mut seen = BTreeSet::new();
    for (i, name) in names.enumerate() {
        if name.is_empty() || !is_identifier(name) {
            return Err(invalid(
                format!("{table}[{i}].name"),
                "names must be non-empty identifiers",
            ));
        }
        if !seen.insert(name) {
            return Err(ConfigError::DuplicateName {
                field: format!("{table}[{i}].name"),
                name: String::from(name),
            });
        }
    }
    if seen.len() > MAX_OBJECTS {
        return Err(invalid(String::from(table), "too many entries"));
    }
    Ok(())
}

/// Identifier charset shared by configurations and the use-case grammar.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn check_cores(cores: usize) -> Result<(), ConfigError> {
    if cores == 0 {
        return Err(invalid(
            String::from("cores"),
            "core count must be positive",
        ));
    }
    if cores > MAX_OBJECTS {
        return Err(invalid(String::from("cores"), "too many cores"));
    }
    Ok(())
}

impl KernelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_cores(self.cores)?;
        check_unique("tasks", self.tasks.iter().map(|t| t.name.as_str()))?;
        check_unique("events", self.events.iter().map(|e| e.name.as_str()))?;
        check_unique("spinlocks", self.spinlocks.iter().map(|s| s.name.as_str()))?;
        check_unique("alarms", self.alarms.iter().map(|a| a.name.as_str()))?;

        for (i, t) in self.tasks.iter().enumerate() {
            if t.core >= self.cores {
                return Err(ConfigError::CoreOutOfRange {
                    field: format!("tasks[{i}].core"),
                    core: t.core,
                    cores: self.cores,
                });
            }
            if t.max_activations == 0 || t.max_activations > u8::MAX as u32 {
                return Err(invalid(
                    format!("tasks[{i}].max_activations"),
                    "must be between 1 and 255",
                ));
            }
            if t.extended && t.max_activations != 1 {
                return Err(invalid(
                    format!("tasks[{i}].max_activations"),
                    "extended tasks must have max_activations = 1",
                ));
            }
        }

        let mut bits = BTreeSet::new();
        for (i, e) in self.events.iter().enumerate() {
            if e.bit >= 32 {
                return Err(invalid(
                    format!("events[{i}].bit"),
                    "bit index must be < 32",
                ));
            }
            if !bits.insert(e.bit) {
                return Err(invalid(
                    format!("events[{i}].bit"),
                    "bit already used by another event",
                ));
            }
        }

        let lock_index: BTreeMap<&str, usize> = self
            .spinlocks
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.as_str(), i))
            .collect();
        for (i, s) in self.spinlocks.iter().enumerate() {
            for (j, succ) in s.successors.iter().enumerate() {
                if !lock_index.contains_key(succ.as_str()) {
                    return Err(ConfigError::DanglingReference {
                        field: format!("spinlocks[{i}].successors[{j}]"),
                        kind: "spinlock",
                        name: succ.clone(),
                    });
                }
            }
        }
        self.check_spinlock_order(&lock_index)?;

        for (i, a) in self.alarms.iter().enumerate() {
            let task = a.action.task();
            let Some(t) = self.tasks.iter().find(|t| t.name == task) else {
                return Err(ConfigError::DanglingReference {
                    field: format!("alarms[{i}].action.task"),
                    kind: "task",
                    name: String::from(task),
                });
            };
            if let AlarmAction::SetEvent { event, .. } = &a.action {
                if !self.events.iter().any(|e| &e.name == event) {
                    return Err(ConfigError::DanglingReference {
                        field: format!("alarms[{i}].action.event"),
                        kind: "event",
                        name: event.clone(),
                    });
                }
                if !t.extended {
                    return Err(invalid(
                        format!("alarms[{i}].action.task"),
                        "SetEvent alarm must target an extended task",
                    ));
                }
            }
        }
        Ok(())
    }

    fn check_spinlock_order(&self, index: &BTreeMap<&str, usize>) -> Result<(), ConfigError> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let n = self.spinlocks.len();
        let mut mark = alloc::vec![0u8; n];
        for start in 0..n {
            if mark[start] != 0 {
                continue;
            }
            let mut stack: Vec<(usize, usize)> = alloc::vec![(start, 0)];
            mark[start] = 1;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                let succs = &self.spinlocks[node].successors;
                if *next < succs.len() {
                    let succ = index[succs[*next].as_str()];
                    *next += 1;
                    match mark[succ] {
                        0 => {
                            mark[succ] = 1;
                            stack.push((succ, 0));
                        }
                        1 => {
                            return Err(ConfigError::SpinlockCycle {
                                field: format!("spinlocks[{succ}].successors"),
                                name: self.spinlocks[succ].name.clone(),
                            });
                        }
                        _ => {}
                    }
                } else {
                    mark[node] = 2;
                    stack.pop();
                }
            }
        }
        Ok(())
    }
}

impl PosixConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_cores(self.cores)?;
        check_unique("tasks", self.tasks.iter().map(|t| t.name.as_str()))?;
        check_unique("mutexes", self.mutexes.iter().map(|m| m.as_str()))?;
        check_unique("condvars", self.condvars.iter().map(|c| c.name.as_str()))?;
        for (i, t) in self.tasks.iter().enumerate() {
            if t.core >= self.cores {
                return Err(ConfigError::CoreOutOfRange {
                    field: format!("tasks[{i}].core"),
                    core: t.core,
                    cores: self.cores,
                });
            }
            if t.priority > i32::MAX as u32 {
                return Err(invalid(
                    format!("tasks[{i}].priority"),
                    "priority too large",
                ));
            }
        }
        for (i, c) in self.condvars.iter().enumerate() {
            if !self.mutexes.contains(&c.mutex) {
                return Err(ConfigError::DanglingReference {
                    field: format!("condvars[{i}].mutex"),
                    kind: "mutex",
                    name: c.mutex.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Name tables for every object kind, indexed by declaration order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Names {
    pub tasks: Vec<String>,
    pub events: Vec<(String, u32)>,
    pub spinlocks: Vec<String>,
    pub alarms: Vec<String>,
    pub mutexes: Vec<String>,
    pub condvars: Vec<String>,
}

fn position(table: &[String], name: &str) -> Option<usize> {
    table.iter().position(|n| n == name)
}

impl Names {
    pub fn classic(c: &KernelConfig) -> Self {
        Names {
            tasks: c.tasks.iter().map(|t| t.name.clone()).collect(),
            events: c
                .events
                .iter()
                .map(|e| (e.name.clone(), e.mask()))
                .collect(),
            spinlocks: c.spinlocks.iter().map(|s| s.name.clone()).collect(),
            alarms: c.alarms.iter().map(|a| a.name.clone()).collect(),
            ..Names::default()
        }
    }

    pub fn posix(c: &PosixConfig) -> Self {
        Names {
            tasks: c.tasks.iter().map(|t| t.name.clone()).collect(),
            mutexes: c.mutexes.clone(),
            condvars: c.condvars.iter().map(|v| v.name.clone()).collect(),
            ..Names::default()
        }
    }

    pub fn task(&self, name: &str) -> Option<TaskId> {
        position(&self.tasks, name).map(TaskId::from_index)
    }

    pub fn task_name(&self, id: TaskId) -> &str {
        self.tasks
            .get(id.index())
            .map(String::as_str)
            .unwrap_or("?")
    }

    pub fn spinlock(&self, name: &str) -> Option<usize> {
        position(&self.spinlocks, name)
    }

    pub fn alarm(&self, name: &str) -> Option<usize> {
        position(&self.alarms, name)
    }

    pub fn mutex(&self, name: &str) -> Option<usize> {
        position(&self.mutexes, name)
    }

    pub fn condvar(&self, name: &str) -> Option<usize> {
        position(&self.condvars, name)
    }

    pub fn event_mask(&self, name: &str) -> Option<u32> {
        self.events.iter().find(|(n, _)| n == name).map(|(_, m)| *m)
    }

    /// Renders a mask as `|`-joined event names in bit order, falling back
    /// to a decimal literal when undeclared bits are present.
    pub fn render_mask(&self, mask: u32) -> String {
        if mask == 0 {
            return String::from("0");
        }
        let mut sorted: Vec<&(String, u32)> = self.events.iter().collect();
        sorted.sort_by_key(|(_, m)| *m);
        let covered: u32 = sorted
            .iter()
            .filter(|(_, m)| mask & m != 0)
            .fold(0, |a, (_, m)| a | m);
        if covered != mask {
            return format!("{mask}");
        }
        let parts: Vec<&str> = sorted
            .iter()
            .filter(|(_, m)| mask & m != 0)
            .map(|(n, _)| n.as_str())
            .collect();
        parts.join("|")
    }

    /// Parses a decimal literal or `|`-joined event names.
    pub fn parse_mask(&self, text: &str) -> Option<u32> {
        let text = text.trim();
        if let Ok(v) = text.parse::<u32>() {
            return Some(v);
        }
        let mut mask = 0;
        for part in text.split('|') {
            mask |= self.event_mask(part.trim())?;
        }
        Some(mask)
    }

    /// The mask of each declared event, in declaration order.
    pub fn single_event_masks(&self) -> impl Iterator<Item = u32> + '_ {
        self.events.iter().map(|(_, m)| *m)
    }
}
