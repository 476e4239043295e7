//! Seeded single-rule defects for mutant systems under test.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::call::Api;
use crate::config::KernelKind;
use crate::status::{PosixStatus, Status, StatusCode};

/// Root-cause taxonomy used to cluster flaws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cause {
    /// Wrong return code.
    Ercd,
    /// Wrong preemption decision, i.e. wrong priority bookkeeping.
    Priority,
    /// Wrong blocking, unblocking or activation of a task.
    Run,
    /// Wrong event mask.
    Event,
}

impl Cause {
    pub fn as_str(self) -> &'static str {
        match self {
            Cause::Ercd => "ercd",
            Cause::Priority => "priority",
            Cause::Run => "run",
            Cause::Event => "event",
        }
    }
}

/// The semantic rule a mutant perturbs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DefectKind {
    /// `api` returns `returned` wherever the model returns `correct`; the
    /// post-state is untouched.
    WrongStatus {
        api: Api,
        correct: Status,
        returned: Status,
    },
    /// Tasks blocked through `api` do not lend their priority to the
    /// mutex owner (for `setschedprio`: the target's effective priority is
    /// set to its new base priority without inheritance).
    SkipPriorityBoost { api: Api },
    /// When `api` hands a mutex or signal to a waiter it picks the
    /// lowest-priority waiter instead of the highest.
    WrongWakeTarget { api: Api },
    /// Tasks made ready by `api` are queued at the head of their level.
    HeadEnqueue { api: Api },
    /// `GetSpinlock` skips the configured nesting-order check.
    NoNestingCheck,
    /// `api` on the calling task never clears its events.
    EventNotCleared { api: Api },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectSpec {
    pub id: String,
    pub kernel: KernelKind,
    pub defect: DefectKind,
    /// Cause class the mutant is meant to exercise.
    pub cause: Cause,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DefectError {
    #[error("defect `{0}` is not applicable to the {1} kernel")]
    Inapplicable(String, &'static str),
    #[error("unknown defect id `{0}`")]
    Unknown(String),
}

impl DefectKind {
    pub fn applies_to(&self, kind: KernelKind) -> bool {
        let classic = Api::for_kind(KernelKind::Classic);
        let posix = Api::for_kind(KernelKind::Posix);
        match (kind, self) {
            (
                KernelKind::Classic,
                DefectKind::WrongStatus {
                    api,
                    correct,
                    returned,
                },
            ) => {
                classic.contains(api)
                    && matches!(correct, Status::Classic(_))
                    && matches!(returned, Status::Classic(_))
            }
            (
                KernelKind::Posix,
                DefectKind::WrongStatus {
                    api,
                    correct,
                    returned,
                },
            ) => {
                posix.contains(api)
                    && matches!(correct, Status::Posix(_))
                    && matches!(returned, Status::Posix(_))
            }
            (KernelKind::Classic, DefectKind::HeadEnqueue { api }) => {
                matches!(api, Api::ActivateTask | Api::SetEvent)
            }
            (KernelKind::Classic, DefectKind::NoNestingCheck) => true,
            (KernelKind::Classic, DefectKind::EventNotCleared { api }) => *api == Api::ChainTask,
            (KernelKind::Posix, DefectKind::SkipPriorityBoost { api }) => {
                matches!(
                    api,
                    Api::MutexLock | Api::MutexTimedlock | Api::SetSchedPrio
                )
            }
            (KernelKind::Posix, DefectKind::WrongWakeTarget { api }) => {
                matches!(api, Api::MutexUnlock | Api::CondWait | Api::CondSignal)
            }
            (KernelKind::Posix, DefectKind::HeadEnqueue { api }) => {
                matches!(api, Api::ActivateTask | Api::SetSchedPrio)
            }
            _ => false,
        }
    }

    pub fn wrong_status(&self, api: Api, status: Status) -> Status {
        match self {
            DefectKind::WrongStatus {
                api: a,
                correct,
                returned,
            } if *a == api && *correct == status => *returned,
            _ => status,
        }
    }
}

fn spec(id: &str, kernel: KernelKind, defect: DefectKind, cause: Cause) -> DefectSpec {
    DefectSpec {
        id: String::from(id),
        kernel,
        defect,
        cause,
    }
}

/// The standard mutant panel, spanning the ercd / priority / run taxonomy
/// across the scheduling APIs of both kernels.
pub fn panel() -> Vec<DefectSpec> {
    use KernelKind::{Classic, Posix};
    alloc::vec![
        spec(
            "classic-chaintask-event-not-cleared",
            Classic,
            DefectKind::EventNotCleared {
                api: Api::ChainTask
            },
            Cause::Event,
        ),
        spec(
            "classic-spinlock-no-nesting-check",
            Classic,
            DefectKind::NoNestingCheck,
            Cause::Ercd,
        ),
        spec(
            "classic-activate-head-enqueue",
            Classic,
            DefectKind::HeadEnqueue {
                api: Api::ActivateTask
            },
            Cause::Run,
        ),
        spec(
            "classic-activate-limit-ercd",
            Classic,
            DefectKind::WrongStatus {
                api: Api::ActivateTask,
                correct: Status::Classic(StatusCode::Limit),
                returned: Status::Classic(StatusCode::Ok),
            },
            Cause::Ercd,
        ),
        spec(
            "classic-spinlock-interference-ercd",
            Classic,
            DefectKind::WrongStatus {
                api: Api::GetSpinlock,
                correct: Status::Classic(StatusCode::InterferenceDeadlock),
                returned: Status::Classic(StatusCode::SpinBusy),
            },
            Cause::Ercd,
        ),
        spec(
            "posix-trylock-ercd",
            Posix,
            DefectKind::WrongStatus {
                api: Api::MutexTrylock,
                correct: Status::Posix(PosixStatus::Ebusy),
                returned: Status::Posix(PosixStatus::Ok),
            },
            Cause::Ercd,
        ),
        spec(
            "posix-lock-relock-ercd",
            Posix,
            DefectKind::WrongStatus {
                api: Api::MutexLock,
                correct: Status::Posix(PosixStatus::Edeadlk),
                returned: Status::Posix(PosixStatus::Ok),
            },
            Cause::Ercd,
        ),
        spec(
            "posix-unlock-eperm-ercd",
            Posix,
            DefectKind::WrongStatus {
                api: Api::MutexUnlock,
                correct: Status::Posix(PosixStatus::Eperm),
                returned: Status::Posix(PosixStatus::Ok),
            },
            Cause::Ercd,
        ),
        spec(
            "posix-lock-skip-boost",
            Posix,
            DefectKind::SkipPriorityBoost {
                api: Api::MutexLock
            },
            Cause::Priority,
        ),
        spec(
            "posix-timedlock-skip-boost",
            Posix,
            DefectKind::SkipPriorityBoost {
                api: Api::MutexTimedlock
            },
            Cause::Priority,
        ),
        spec(
            "posix-setschedprio-skip-boost",
            Posix,
            DefectKind::SkipPriorityBoost {
                api: Api::SetSchedPrio
            },
            Cause::Priority,
        ),
        spec(
            "posix-unlock-wrong-wake",
            Posix,
            DefectKind::WrongWakeTarget {
                api: Api::MutexUnlock
            },
            Cause::Run,
        ),
        spec(
            "posix-condwait-wrong-wake",
            Posix,
            DefectKind::WrongWakeTarget { api: Api::CondWait },
            Cause::Run,
        ),
        spec(
            "posix-condsignal-wrong-wake",
            Posix,
            DefectKind::WrongWakeTarget {
                api: Api::CondSignal
            },
            Cause::Run,
        ),
    ]
}

pub fn lookup(id: &str) -> Result<DefectSpec, DefectError> {
    panel()
        .into_iter()
        .find(|d| d.id == id)
        .ok_or_else(|| DefectError::Unknown(String::from(id)))
}
