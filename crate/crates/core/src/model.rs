//! The interface every executable scheduler model implements.

use core::fmt;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::call::{Api, Call, Invoker};
use crate::config::{KernelKind, Names};
use crate::ids::TaskId;
use crate::observation::Observation;
use crate::status::Status;

/// Injective byte encoding of a full kernel state.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateKey(pub Vec<u8>);

impl StateKey {
    pub fn to_hex(&self) -> String {
        const DIGITS: &[u8; 16] = b"0123456789abcdef";
        let mut s = String::with_capacity(self.0.len() * 2);
        for b in &self.0 {
            s.push(DIGITS[(b >> 4) as usize] as char);
            s.push(DIGITS[(b & 0xf) as usize] as char);
        }
        s
    }

    pub fn from_hex(text: &str) -> Option<StateKey> {
        if !text.len().is_multiple_of(2) {
            return None;
        }
        let digit = |c: u8| match c {
            b'0'..=b'9' => Some(c - b'0'),
            b'a'..=b'f' => Some(c - b'a' + 10),
            _ => None,
        };
        text.as_bytes()
            .chunks(2)
            .map(|pair| Some((digit(pair[0])? << 4) | digit(pair[1])?))
            .collect::<Option<Vec<u8>>>()
            .map(StateKey)
    }
}

impl fmt::Debug for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StateKey({})", self.to_hex())
    }
}

/// A step the model refuses to take at all, as opposed to one that returns
/// an error status.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("{0} is not running")]
    NotRunning(String),
    #[error("{api} cannot be issued by {invoker}")]
    NotPermitted { api: Api, invoker: String },
    #[error("{0} is not part of this kernel's API")]
    UnsupportedApi(Api),
    #[error("{0}")]
    NotEnabled(String),
}

/// Object kinds that appear in test-case declarations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Event,
    Task,
    Spinlock,
    Alarm,
    Mutex,
    Condvar,
}

/// Which calls the test model may issue, and the argument domains used to
/// enumerate them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Invocable {
    /// APIs every running task may issue; `None` means the kernel's default set.
    pub task_apis: Option<Vec<Api>>,
    /// Per-task replacement for `task_apis`.
    pub per_task: BTreeMap<TaskId, Vec<Api>>,
    /// Environment steps; `None` means the kernel's default set.
    pub external_apis: Option<Vec<Api>>,
    pub alarm_offsets: Vec<u32>,
    /// Arguments for `setschedprio`; `None` means the declared priorities.
    pub priorities: Option<Vec<i32>>,
}

impl Default for Invocable {
    fn default() -> Self {
        Invocable {
            task_apis: None,
            per_task: BTreeMap::new(),
            external_apis: None,
            alarm_offsets: vec![1],
            priorities: None,
        }
    }
}

impl Invocable {
    /// Restrict both task and external steps to `apis`.
    pub fn only(apis: &[Api]) -> Self {
        Invocable {
            task_apis: Some(apis.to_vec()),
            external_apis: Some(apis.to_vec()),
            ..Invocable::default()
        }
    }

    pub fn apis_for_task<'a>(&'a self, task: TaskId, default: &'a [Api]) -> &'a [Api] {
        if let Some(apis) = self.per_task.get(&task) {
            apis
        } else if let Some(apis) = &self.task_apis {
            apis
        } else {
            default
        }
    }

    pub fn external<'a>(&'a self, default: &'a [Api]) -> &'a [Api] {
        self.external_apis.as_deref().unwrap_or(default)
    }
}

/// An executable, deterministic scheduler model.
///
/// States are plain values: every operation maps an input state to a fresh
/// output state, so states can be cloned freely and handed to workers.
pub trait Model {
    type State: Clone + Eq + fmt::Debug + Send + Sync;

    fn kind(&self) -> KernelKind;
    fn names(&self) -> &Names;
    /// Configured objects in test-case declaration order.
    fn declarations(&self) -> Vec<(ObjectKind, String)>;
    fn init(&self) -> Self::State;
    fn step(
        &self,
        state: &Self::State,
        invoker: Invoker,
        call: Call,
    ) -> Result<(Status, Self::State), StepError>;
    fn observe(&self, state: &Self::State) -> Observation;
    fn canonical_key(&self, state: &Self::State) -> StateKey;
    /// Candidate steps from `state`, in deterministic order: running tasks in
    /// declaration order, then external steps. Candidates may include steps
    /// that `step` rejects; callers skip those.
    fn candidates(&self, state: &Self::State, invocable: &Invocable) -> Vec<(Invoker, Call)>;
}

/// The successor list of one state: every accepted candidate with its
/// status and post-state.
pub fn successors<M: Model>(
    model: &M,
    state: &M::State,
    invocable: &Invocable,
) -> Vec<(Invoker, Call, Status, M::State)> {
    model
        .candidates(state, invocable)
        .into_iter()
        .filter_map(|(invoker, call)| {
            model
                .step(state, invoker, call)
                .ok()
                .map(|(status, next)| (invoker, call, status, next))
        })
        .collect()
}
