use core::fmt;

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::ids::TaskId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskState {
    #[serde(rename = "SUS")]
    Suspended,
    #[serde(rename = "RDY")]
    Ready,
    #[serde(rename = "RUN")]
    Running,
    #[serde(rename = "WAI")]
    Waiting,
}

impl TaskState {
    pub const ALL: [TaskState; 4] = [
        TaskState::Suspended,
        TaskState::Ready,
        TaskState::Running,
        TaskState::Waiting,
    ];

    pub fn code(self) -> &'static str {
        match self {
            TaskState::Suspended => "SUS",
            TaskState::Ready => "RDY",
            TaskState::Running => "RUN",
            TaskState::Waiting => "WAI",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        TaskState::ALL.into_iter().find(|s| s.code() == text)
    }
}

impl fmt::Display for TaskState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskObservation {
    pub state: TaskState,
    /// Set-event mask. Present only for tasks that can own events.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<u32>,
}

/// The externally checkable part of a kernel state: what a test program
/// can assert through the OS API.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Observation {
    /// Indexed by task declaration order.
    pub tasks: Vec<TaskObservation>,
    /// Running task per core, `None` when idle.
    pub cores: Vec<Option<TaskId>>,
}

impl Observation {
    pub fn state_of(&self, task: TaskId) -> TaskState {
        self.tasks[task.index()].state
    }

    pub fn events_of(&self, task: TaskId) -> Option<u32> {
        self.tasks[task.index()].events
    }
}
