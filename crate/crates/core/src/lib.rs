//! Executable scheduler models and the model-based testing pipeline built
//! on them: state-space exploration, use-case observers, test-case and
//! test-program generation, and a conformance harness.

#![no_std]

extern crate alloc;

pub mod call;
pub mod classic;
pub mod config;
pub mod defect;
pub mod explorer;
pub mod harness;
pub mod ids;
pub mod kernel;
pub mod model;
pub mod observation;
pub mod posix;
pub mod sched;
pub mod status;
pub mod testgen;
pub mod usecase;

use thiserror::Error;

pub use call::{Api, Call, Invoker, Label, TimeoutOutcome};
pub use config::{ConfigDoc, ConfigError, KernelConfig, KernelKind, Names, PosixConfig};
pub use kernel::{AnyKernel, AnyState};
pub use model::{Invocable, Model, StateKey, StepError};
pub use observation::{Observation, TaskState};
pub use status::{PosixStatus, Status, StatusCode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Defect(#[from] defect::DefectError),
}
