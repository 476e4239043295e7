//! The API invocation alphabet shared by both kernels.

use core::fmt;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::config::{KernelKind, Names};
use crate::ids::{AlarmId, CondId, LockId, MutexId, TaskId};
use crate::status::Status;

/// Literal used for steps issued by the test environment rather than a task.
pub const EXTERNAL: &str = "EXTERNAL";

/// API names, without arguments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Api {
    ActivateTask,
    TerminateTask,
    ChainTask,
    SetEvent,
    ClearEvent,
    WaitEvent,
    GetEvent,
    GetSpinlock,
    ReleaseSpinlock,
    SetRelAlarm,
    CancelAlarm,
    Tick,
    MutexLock,
    MutexTrylock,
    MutexTimedlock,
    MutexUnlock,
    CondWait,
    CondSignal,
    SetSchedPrio,
    TimeoutFire,
}

impl Api {
    pub const ALL: [Api; 20] = [
        Api::ActivateTask,
        Api::TerminateTask,
        Api::ChainTask,
        Api::SetEvent,
        Api::ClearEvent,
        Api::WaitEvent,
        Api::GetEvent,
        Api::GetSpinlock,
        Api::ReleaseSpinlock,
        Api::SetRelAlarm,
        Api::CancelAlarm,
        Api::Tick,
        Api::MutexLock,
        Api::MutexTrylock,
        Api::MutexTimedlock,
        Api::MutexUnlock,
        Api::CondWait,
        Api::CondSignal,
        Api::SetSchedPrio,
        Api::TimeoutFire,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Api::ActivateTask => "ActivateTask",
            Api::TerminateTask => "TerminateTask",
            Api::ChainTask => "ChainTask",
            Api::SetEvent => "SetEvent",
            Api::ClearEvent => "ClearEvent",
            Api::WaitEvent => "WaitEvent",
            Api::GetEvent => "GetEvent",
            Api::GetSpinlock => "GetSpinlock",
            Api::ReleaseSpinlock => "ReleaseSpinlock",
            Api::SetRelAlarm => "SetRelAlarm",
            Api::CancelAlarm => "CancelAlarm",
            Api::Tick => "Tick",
            Api::MutexLock => "mutex_lock",
            Api::MutexTrylock => "mutex_trylock",
            Api::MutexTimedlock => "mutex_timedlock",
            Api::MutexUnlock => "mutex_unlock",
            Api::CondWait => "cond_wait",
            Api::CondSignal => "cond_signal",
            Api::SetSchedPrio => "setschedprio",
            Api::TimeoutFire => "TimeoutFire",
        }
    }

    pub fn parse(text: &str) -> Option<Api> {
        Api::ALL.into_iter().find(|a| a.as_str() == text)
    }

    /// The APIs a kernel kind understands, in declaration order.
    pub fn for_kind(kind: KernelKind) -> &'static [Api] {
        match kind {
            KernelKind::Classic => &Api::ALL[..12],
            KernelKind::Posix => &[
                Api::ActivateTask,
                Api::MutexLock,
                Api::MutexTrylock,
                Api::MutexTimedlock,
                Api::MutexUnlock,
                Api::CondWait,
                Api::CondSignal,
                Api::SetSchedPrio,
                Api::TimeoutFire,
            ],
        }
    }

    /// Whether this API is issued by the environment rather than a task.
    pub fn is_external_only(self) -> bool {
        matches!(self, Api::Tick | Api::TimeoutFire)
    }
}

impl fmt::Display for Api {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Api {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Api {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct ApiVisitor;
        impl Visitor<'_> for ApiVisitor {
            type Value = Api;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an API name")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Api, E> {
                Api::parse(v).ok_or_else(|| E::custom(format_args!("unknown API `{v}`")))
            }
        }
        d.deserialize_str(ApiVisitor)
    }
}

/// Nondeterministic outcome chosen up front for `mutex_timedlock`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimeoutOutcome {
    WillAcquire,
    WillTimeout,
}

impl TimeoutOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            TimeoutOutcome::WillAcquire => "WillAcquire",
            TimeoutOutcome::WillTimeout => "WillTimeout",
        }
    }
}

/// A fully resolved API invocation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Call {
    ActivateTask(TaskId),
    TerminateTask,
    ChainTask(TaskId),
    SetEvent(TaskId, u32),
    ClearEvent(u32),
    WaitEvent(u32),
    GetEvent(TaskId),
    GetSpinlock(LockId),
    ReleaseSpinlock(LockId),
    SetRelAlarm(AlarmId, u32),
    CancelAlarm(AlarmId),
    Tick,
    MutexLock(MutexId),
    MutexTrylock(MutexId),
    MutexTimedlock(MutexId, TimeoutOutcome),
    MutexUnlock(MutexId),
    CondWait(CondId),
    CondSignal(CondId),
    SetSchedPrio(TaskId, i32),
    TimeoutFire(TaskId),
}

/// Who issues a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Invoker {
    External,
    Task(TaskId),
}

impl Invoker {
    pub fn render(self, names: &Names) -> String {
        match self {
            Invoker::External => String::from(EXTERNAL),
            Invoker::Task(t) => String::from(names.task_name(t)),
        }
    }

    pub fn parse(text: &str, names: &Names) -> Option<Invoker> {
        if text == EXTERNAL {
            Some(Invoker::External)
        } else {
            names.task(text).map(Invoker::Task)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CallError {
    #[error("unknown API `{0}`")]
    UnknownApi(String),
    #[error("{api} expects {expected} argument(s), got {got}")]
    Arity {
        api: Api,
        expected: usize,
        got: usize,
    },
    #[error("{api}: undeclared {kind} `{name}`")]
    UnknownName {
        api: Api,
        kind: &'static str,
        name: String,
    },
    #[error("{api}: malformed argument `{arg}`")]
    BadArgument { api: Api, arg: String },
    #[error("{api} is not part of the {kind} API")]
    WrongKernel { api: Api, kind: &'static str },
}

impl Call {
    pub fn api(&self) -> Api {
        match self {
            Call::ActivateTask(_) => Api::ActivateTask,
            Call::TerminateTask => Api::TerminateTask,
            Call::ChainTask(_) => Api::ChainTask,
            Call::SetEvent(..) => Api::SetEvent,
            Call::ClearEvent(_) => Api::ClearEvent,
            Call::WaitEvent(_) => Api::WaitEvent,
            Call::GetEvent(_) => Api::GetEvent,
            Call::GetSpinlock(_) => Api::GetSpinlock,
            Call::ReleaseSpinlock(_) => Api::ReleaseSpinlock,
            Call::SetRelAlarm(..) => Api::SetRelAlarm,
            Call::CancelAlarm(_) => Api::CancelAlarm,
            Call::Tick => Api::Tick,
            Call::MutexLock(_) => Api::MutexLock,
            Call::MutexTrylock(_) => Api::MutexTrylock,
            Call::MutexTimedlock(..) => Api::MutexTimedlock,
            Call::MutexUnlock(_) => Api::MutexUnlock,
            Call::CondWait(_) => Api::CondWait,
            Call::CondSignal(_) => Api::CondSignal,
            Call::SetSchedPrio(..) => Api::SetSchedPrio,
            Call::TimeoutFire(_) => Api::TimeoutFire,
        }
    }

    /// Textual arguments, using configured names where they exist.
    pub fn render_args(&self, names: &Names) -> Vec<String> {
        let task = |t: &TaskId| String::from(names.task_name(*t));
        let lock = |l: &LockId| names.spinlocks.get(l.index()).cloned().unwrap_or_default();
        let alarm = |a: &AlarmId| names.alarms.get(a.index()).cloned().unwrap_or_default();
        let mutex = |m: &MutexId| names.mutexes.get(m.index()).cloned().unwrap_or_default();
        let cond = |c: &CondId| names.condvars.get(c.index()).cloned().unwrap_or_default();
        match self {
            Call::TerminateTask | Call::Tick => vec![],
            Call::ActivateTask(t)
            | Call::ChainTask(t)
            | Call::GetEvent(t)
            | Call::TimeoutFire(t) => {
                vec![task(t)]
            }
            Call::SetEvent(t, m) => vec![task(t), names.render_mask(*m)],
            Call::ClearEvent(m) | Call::WaitEvent(m) => vec![names.render_mask(*m)],
            Call::GetSpinlock(l) | Call::ReleaseSpinlock(l) => vec![lock(l)],
            Call::SetRelAlarm(a, ticks) => vec![alarm(a), ticks.to_string()],
            Call::CancelAlarm(a) => vec![alarm(a)],
            Call::MutexLock(m) | Call::MutexTrylock(m) | Call::MutexUnlock(m) => vec![mutex(m)],
            Call::MutexTimedlock(m, o) => vec![mutex(m), String::from(o.as_str())],
            Call::CondWait(c) | Call::CondSignal(c) => vec![cond(c)],
            Call::SetSchedPrio(t, p) => vec![task(t), p.to_string()],
        }
    }

    /// Renders as `Api(arg, ...)`.
    pub fn render(&self, names: &Names) -> String {
        format!("{}({})", self.api(), self.render_args(names).join(", "))
    }

    /// Resolves a named invocation against a configuration's name tables.
    pub fn resolve(api: Api, args: &[String], names: &Names) -> Result<Call, CallError> {
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(CallError::Arity {
                    api,
                    expected: n,
                    got: args.len(),
                })
            }
        };
        let unknown = |kind: &'static str, name: &str| CallError::UnknownName {
            api,
            kind,
            name: String::from(name),
        };
        let task = |s: &str| names.task(s).ok_or_else(|| unknown("task", s));
        let mask = |s: &str| {
            names.parse_mask(s).ok_or_else(|| CallError::BadArgument {
                api,
                arg: String::from(s),
            })
        };
        let lock = |s: &str| {
            names
                .spinlock(s)
                .map(LockId::from_index)
                .ok_or_else(|| unknown("spinlock", s))
        };
        let alarm = |s: &str| {
            names
                .alarm(s)
                .map(AlarmId::from_index)
                .ok_or_else(|| unknown("alarm", s))
        };
        let mutex = |s: &str| {
            names
                .mutex(s)
                .map(MutexId::from_index)
                .ok_or_else(|| unknown("mutex", s))
        };
        let cond = |s: &str| {
            names
                .condvar(s)
                .map(CondId::from_index)
                .ok_or_else(|| unknown("condvar", s))
        };
        let bad = |s: &str| CallError::BadArgument {
            api,
            arg: String::from(s),
        };
        Ok(match api {
            Api::ActivateTask => {
                arity(1)?;
                Call::ActivateTask(task(&args[0])?)
            }
            Api::TerminateTask => {
                arity(0)?;
                Call::TerminateTask
            }
            Api::ChainTask => {
                arity(1)?;
                Call::ChainTask(task(&args[0])?)
            }
            Api::SetEvent => {
                arity(2)?;
                Call::SetEvent(task(&args[0])?, mask(&args[1])?)
            }
            Api::ClearEvent => {
                arity(1)?;
                Call::ClearEvent(mask(&args[0])?)
            }
            Api::WaitEvent => {
                arity(1)?;
                Call::WaitEvent(mask(&args[0])?)
            }
            Api::GetEvent => {
                arity(1)?;
                Call::GetEvent(task(&args[0])?)
            }
            Api::GetSpinlock => {
                arity(1)?;
                Call::GetSpinlock(lock(&args[0])?)
            }
            Api::ReleaseSpinlock => {
                arity(1)?;
                Call::ReleaseSpinlock(lock(&args[0])?)
            }
            Api::SetRelAlarm => {
                arity(2)?;
                let ticks = args[1].trim().parse::<u32>().map_err(|_| bad(&args[1]))?;
                Call::SetRelAlarm(alarm(&args[0])?, ticks)
            }
            Api::CancelAlarm => {
                arity(1)?;
                Call::CancelAlarm(alarm(&args[0])?)
            }
            Api::Tick => {
                arity(0)?;
                Call::Tick
            }
            Api::MutexLock => {
                arity(1)?;
                Call::MutexLock(mutex(&args[0])?)
            }
            Api::MutexTrylock => {
                arity(1)?;
                Call::MutexTrylock(mutex(&args[0])?)
            }
            Api::MutexTimedlock => {
                arity(2)?;
                let outcome = match args[1].trim() {
                    "WillAcquire" => TimeoutOutcome::WillAcquire,
                    "WillTimeout" => TimeoutOutcome::WillTimeout,
                    other => return Err(bad(other)),
                };
                Call::MutexTimedlock(mutex(&args[0])?, outcome)
            }
            Api::MutexUnlock => {
                arity(1)?;
                Call::MutexUnlock(mutex(&args[0])?)
            }
            Api::CondWait => {
                arity(1)?;
                Call::CondWait(cond(&args[0])?)
            }
            Api::CondSignal => {
                arity(1)?;
                Call::CondSignal(cond(&args[0])?)
            }
            Api::SetSchedPrio => {
                arity(2)?;
                let prio = args[1].trim().parse::<i32>().map_err(|_| bad(&args[1]))?;
                Call::SetSchedPrio(task(&args[0])?, prio)
            }
            Api::TimeoutFire => {
                arity(1)?;
                Call::TimeoutFire(task(&args[0])?)
            }
        })
    }
}

/// One executed step: who invoked what, and the status it produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label {
    pub invoker: Invoker,
    pub call: Call,
    pub status: Status,
}

impl Label {
    pub fn render(&self, names: &Names) -> String {
        format!(
            "{}:{} = {}",
            self.invoker.render(names),
            self.call.render(names),
            self.status
        )
    }
}
