//! Runtime selection between the two kernel models.

use alloc::string::String;
use alloc::vec::Vec;

use crate::call::{Call, Invoker};
use crate::classic::{ClassicKernel, ClassicState};
use crate::config::{ConfigDoc, KernelKind, Names};
use crate::defect::DefectKind;
use crate::model::{Invocable, Model, ObjectKind, StateKey, StepError};
use crate::observation::Observation;
use crate::posix::{PosixKernel, PosixState};
use crate::status::Status;
use crate::KernelError;

#[derive(Clone, Debug)]
pub enum AnyKernel {
    Classic(ClassicKernel),
    Posix(PosixKernel),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AnyState {
    Classic(ClassicState),
    Posix(PosixState),
}

impl AnyKernel {
    pub fn new(doc: &ConfigDoc) -> Result<Self, KernelError> {
        Ok(match doc {
            ConfigDoc::Classic(c) => AnyKernel::Classic(ClassicKernel::new(c.clone())?),
            ConfigDoc::Posix(c) => AnyKernel::Posix(PosixKernel::new(c.clone())?),
        })
    }

    pub fn with_defect(doc: &ConfigDoc, defect: DefectKind) -> Result<Self, KernelError> {
        Ok(match doc {
            ConfigDoc::Classic(c) => {
                AnyKernel::Classic(ClassicKernel::with_defect(c.clone(), defect)?)
            }
            ConfigDoc::Posix(c) => AnyKernel::Posix(PosixKernel::with_defect(c.clone(), defect)?),
        })
    }
}

fn mismatch() -> StepError {
    StepError::NotEnabled(String::from("state belongs to the other kernel kind"))
}

impl Model for AnyKernel {
    type State = AnyState;

    fn kind(&self) -> KernelKind {
        match self {
            AnyKernel::Classic(_) => KernelKind::Classic,
            AnyKernel::Posix(_) => KernelKind::Posix,
        }
    }

    fn names(&self) -> &Names {
        match self {
            AnyKernel::Classic(k) => k.names(),
            AnyKernel::Posix(k) => k.names(),
        }
    }

    fn declarations(&self) -> Vec<(ObjectKind, String)> {
        match self {
            AnyKernel::Classic(k) => k.declarations(),
            AnyKernel::Posix(k) => k.declarations(),
        }
    }

    fn init(&self) -> AnyState {
        match self {
            AnyKernel::Classic(k) => AnyState::Classic(k.init()),
            AnyKernel::Posix(k) => AnyState::Posix(k.init()),
        }
    }

    fn step(
        &self,
        state: &AnyState,
        invoker: Invoker,
        call: Call,
    ) -> Result<(Status, AnyState), StepError> {
        match (self, state) {
            (AnyKernel::Classic(k), AnyState::Classic(s)) => k
                .step(s, invoker, call)
                .map(|(st, n)| (st, AnyState::Classic(n))),
            (AnyKernel::Posix(k), AnyState::Posix(s)) => k
                .step(s, invoker, call)
                .map(|(st, n)| (st, AnyState::Posix(n))),
            _ => Err(mismatch()),
        }
    }

    fn observe(&self, state: &AnyState) -> Observation {
        match (self, state) {
            (AnyKernel::Classic(k), AnyState::Classic(s)) => k.observe(s),
            (AnyKernel::Posix(k), AnyState::Posix(s)) => k.observe(s),
            _ => panic!("{}", mismatch()),
        }
    }

    fn canonical_key(&self, state: &AnyState) -> StateKey {
        match (self, state) {
            (AnyKernel::Classic(k), AnyState::Classic(s)) => k.canonical_key(s),
            (AnyKernel::Posix(k), AnyState::Posix(s)) => k.canonical_key(s),
            _ => panic!("{}", mismatch()),
        }
    }

    fn candidates(&self, state: &AnyState, invocable: &Invocable) -> Vec<(Invoker, Call)> {
        match (self, state) {
            (AnyKernel::Classic(k), AnyState::Classic(s)) => k.candidates(s, invocable),
            (AnyKernel::Posix(k), AnyState::Posix(s)) => k.candidates(s, invocable),
            _ => Vec::new(),
        }
    }
}
