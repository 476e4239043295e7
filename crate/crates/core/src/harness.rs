//! Conformance execution: running test programs against systems under
//! test, and clustering the failures into a flaw report.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::call::{Api, Call, Invoker, EXTERNAL};
use crate::config::{ConfigDoc, Names};
use crate::defect::{Cause, DefectKind};
use crate::kernel::{AnyKernel, AnyState};
use crate::model::{Model, ObjectKind};
use crate::observation::{Observation, TaskState};
use crate::status::Status;
use crate::testgen::{token_order, Instr, TestProgram, DRIVER};
use crate::KernelError;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SutError {
    /// The SUT refused the request, e.g. the invoker is not running.
    #[error("rejected: {0}")]
    Rejected(String),
    /// The SUT or its transport failed.
    #[error("infrastructure failure: {0}")]
    Infrastructure(String),
}

/// Black-box interface to an OS implementation.
pub trait SutAdapter {
    fn reset(&mut self, config: &ConfigDoc) -> Result<(), SutError>;
    fn declare(&mut self, _object: ObjectKind, _name: &str) -> Result<(), SutError> {
        Ok(())
    }
    /// Issues `api(args)` from `invoker`, a task name or `EXTERNAL`.
    fn perform(&mut self, invoker: &str, api: Api, args: &[String]) -> Result<Status, SutError>;
    /// Task states and event masks, in configuration task order.
    fn observe(&mut self) -> Result<Observation, SutError>;
    fn await_step(&mut self, _task: &str, _step: u32) -> Result<(), SutError> {
        Ok(())
    }
    fn publish_step(&mut self, _task: &str, _step: u32) -> Result<(), SutError> {
        Ok(())
    }
}

/// A SUT backed by a kernel model, optionally carrying one seeded defect.
#[derive(Clone, Debug)]
pub struct ModelSut {
    defect: Option<DefectKind>,
    kernel: Option<(AnyKernel, AnyState)>,
}

pub fn reference_sut(config: &ConfigDoc) -> Result<ModelSut, KernelError> {
    let kernel = AnyKernel::new(config)?;
    let state = kernel.init();
    Ok(ModelSut {
        defect: None,
        kernel: Some((kernel, state)),
    })
}

pub fn mutant_sut(defect: &DefectKind, config: &ConfigDoc) -> Result<ModelSut, KernelError> {
    let kernel = AnyKernel::with_defect(config, defect.clone())?;
    let state = kernel.init();
    Ok(ModelSut {
        defect: Some(defect.clone()),
        kernel: Some((kernel, state)),
    })
}

impl ModelSut {
    fn loaded(&mut self) -> Result<&mut (AnyKernel, AnyState), SutError> {
        self.kernel
            .as_mut()
            .ok_or_else(|| SutError::Infrastructure("no configuration loaded".to_string()))
    }
}

impl SutAdapter for ModelSut {
    fn reset(&mut self, config: &ConfigDoc) -> Result<(), SutError> {
        let kernel = match &self.defect {
            None => AnyKernel::new(config),
            Some(d) => AnyKernel::with_defect(config, d.clone()),
        }
        .map_err(|e| SutError::Infrastructure(e.to_string()))?;
        let state = kernel.init();
        self.kernel = Some((kernel, state));
        Ok(())
    }

    fn declare(&mut self, object: ObjectKind, name: &str) -> Result<(), SutError> {
        let (kernel, _) = self.loaded()?;
        if kernel
            .declarations()
            .iter()
            .any(|(k, n)| *k == object && n == name)
        {
            Ok(())
        } else {
            Err(SutError::Rejected(format!(
                "undeclared {object:?} `{name}`"
            )))
        }
    }

    fn perform(&mut self, invoker: &str, api: Api, args: &[String]) -> Result<Status, SutError> {
        let (kernel, state) = self.loaded()?;
        let names = kernel.names();
        let who = Invoker::parse(invoker, names)
            .ok_or_else(|| SutError::Rejected(format!("unknown invoker `{invoker}`")))?;
        let call =
            Call::resolve(api, args, names).map_err(|e| SutError::Rejected(e.to_string()))?;
        let (status, next) = kernel
            .step(state, who, call)
            .map_err(|e| SutError::Rejected(e.to_string()))?;
        *state = next;
        Ok(status)
    }

    fn observe(&mut self) -> Result<Observation, SutError> {
        let (kernel, state) = self.loaded()?;
        Ok(kernel.observe(state))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunVerdict {
    Pass,
    Fail,
    Error,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    Status,
    State,
    Event,
    /// The SUT refused the invocation.
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub step: u32,
    pub check: CheckKind,
    /// API of the most recent invocation at or before `step`.
    pub api: Option<Api>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub target: Option<String>,
    pub expected: String,
    pub actual: String,
    pub cause: Cause,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub program: String,
    pub verdict: RunVerdict,
    /// Steps completed without a mismatch.
    pub steps_passed: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mismatch: Option<Mismatch>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(default = "one")]
    pub attempts: u32,
    #[serde(default)]
    pub wall_time_us: u64,
}

fn one() -> u32 {
    1
}

impl RunLog {
    pub fn first_failing_step(&self) -> Option<u32> {
        self.mismatch.as_ref().map(|m| m.step)
    }

    /// The log without run-dependent fields.
    pub fn canonical(&self) -> RunLog {
        RunLog {
            wall_time_us: 0,
            ..self.clone()
        }
    }

    pub fn infrastructure(program: &str, error: String) -> RunLog {
        RunLog {
            program: program.to_string(),
            verdict: RunVerdict::Error,
            steps_passed: 0,
            mismatch: None,
            error: Some(error),
            attempts: 1,
            wall_time_us: 0,
        }
    }
}

/// Root-cause class of a mismatch: wrong code, wrong preemption (a
/// RUNNING/READY swap), wrong event mask, or any other wrong blocking or
/// activation.
pub fn classify(check: CheckKind, expected: Option<TaskState>, actual: Option<TaskState>) -> Cause {
    match check {
        CheckKind::Status => Cause::Ercd,
        CheckKind::Event => Cause::Event,
        CheckKind::Rejected => Cause::Run,
        CheckKind::State => match (expected, actual) {
            (Some(TaskState::Running), Some(TaskState::Ready))
            | (Some(TaskState::Ready), Some(TaskState::Running)) => Cause::Priority,
            _ => Cause::Run,
        },
    }
}

/// Runs a program through its step tokens, stopping at the first mismatch.
pub fn run_program<S: SutAdapter + ?Sized>(
    program: &TestProgram,
    config: &ConfigDoc,
    sut: &mut S,
) -> RunLog {
    let names = config.names();
    let mut log = RunLog {
        program: program.id.clone(),
        verdict: RunVerdict::Pass,
        steps_passed: 0,
        mismatch: None,
        error: None,
        attempts: 1,
        wall_time_us: 0,
    };
    let order = match token_order(program) {
        Ok(o) => o,
        Err(e) => return RunLog::infrastructure(&program.id, format!("malformed program: {e}")),
    };
    if let Err(e) = sut.reset(config) {
        return RunLog::infrastructure(&program.id, e.to_string());
    }
    let mut last_api = None;
    for s in order {
        match execute(s.instr, s.task, s.step, &names, sut, &mut last_api) {
            Ok(None) => log.steps_passed = s.step,
            Ok(Some(m)) => {
                log.verdict = RunVerdict::Fail;
                log.mismatch = Some(m);
                return log;
            }
            Err(e) => return RunLog::infrastructure(&program.id, format!("step {}: {e}", s.step)),
        }
    }
    log
}

fn execute<S: SutAdapter + ?Sized>(
    instr: &Instr,
    task: &str,
    step: u32,
    names: &Names,
    sut: &mut S,
    last_api: &mut Option<Api>,
) -> Result<Option<Mismatch>, SutError> {
    sut.await_step(task, step)?;
    if let Instr::Perform { api, .. } = instr {
        *last_api = Some(*api);
    }
    let api_now = *last_api;
    let mismatch =
        |check, target: Option<&str>, expected: String, actual: String, cause| Mismatch {
            step,
            check,
            api: api_now,
            target: target.map(String::from),
            expected,
            actual,
            cause,
        };
    let result = match instr {
        Instr::Declare { object, name } => match sut.declare(*object, name) {
            Ok(()) => None,
            Err(SutError::Rejected(e)) => Some(mismatch(
                CheckKind::Rejected,
                Some(name),
                "declared".to_string(),
                e,
                Cause::Run,
            )),
            Err(e) => return Err(e),
        },
        Instr::Perform { api, args, expect } => {
            let invoker = if task == DRIVER { EXTERNAL } else { task };
            match sut.perform(invoker, *api, args) {
                Ok(status) if status == *expect => None,
                Ok(status) => Some(mismatch(
                    CheckKind::Status,
                    None,
                    expect.to_string(),
                    status.to_string(),
                    Cause::Ercd,
                )),
                Err(SutError::Rejected(e)) => Some(mismatch(
                    CheckKind::Rejected,
                    Some(invoker),
                    expect.to_string(),
                    e,
                    Cause::Run,
                )),
                Err(e) => return Err(e),
            }
        }
        Instr::AssertState { target, expect } => {
            let obs = sut.observe()?;
            let actual = names
                .task(target)
                .and_then(|t| obs.tasks.get(t.index()))
                .map(|t| t.state);
            if actual == Some(*expect) {
                None
            } else {
                Some(mismatch(
                    CheckKind::State,
                    Some(target),
                    expect.code().to_string(),
                    actual.map_or("?", |s| s.code()).to_string(),
                    classify(CheckKind::State, Some(*expect), actual),
                ))
            }
        }
        Instr::AssertEvent { target, expect } => {
            let obs = sut.observe()?;
            let actual = names
                .task(target)
                .and_then(|t| obs.tasks.get(t.index()))
                .and_then(|t| t.events);
            if actual == Some(*expect) {
                None
            } else {
                Some(mismatch(
                    CheckKind::Event,
                    Some(target),
                    names.render_mask(*expect),
                    actual.map_or_else(|| "none".to_string(), |m| names.render_mask(m)),
                    Cause::Event,
                ))
            }
        }
        Instr::Await { .. } | Instr::Publish { .. } => None,
    };
    if result.is_none() {
        sut.publish_step(task, step + 1)?;
    }
    Ok(result)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    #[default]
    Unclassified,
    OsFlaw,
    SpecDiscrepancy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// `None` when the failure precedes every invocation.
    pub api: Option<Api>,
    pub cause: Cause,
    pub count: usize,
    pub min_step: u32,
    pub max_step: u32,
    pub avg_step: f64,
    pub programs: Vec<String>,
    #[serde(default)]
    pub classification: Classification,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlawReport {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub errors: usize,
    pub clusters: Vec<Cluster>,
}

impl FlawReport {
    pub fn cluster(&self, api: Api) -> impl Iterator<Item = &Cluster> {
        self.clusters.iter().filter(move |c| c.api == Some(api))
    }
}

/// Clusters failing logs by (api, cause) with first-failing-step statistics.
pub fn report(logs: &[RunLog]) -> FlawReport {
    type Members<'a> = Vec<(&'a str, u32)>;
    let mut groups: BTreeMap<(Option<Api>, Cause), Members> = BTreeMap::new();
    let mut out = FlawReport {
        total: logs.len(),
        ..FlawReport::default()
    };
    for log in logs {
        match log.verdict {
            RunVerdict::Pass => out.passed += 1,
            RunVerdict::Error => out.errors += 1,
            RunVerdict::Fail => {
                out.failed += 1;
                if let Some(m) = &log.mismatch {
                    groups
                        .entry((m.api, m.cause))
                        .or_default()
                        .push((&log.program, m.step));
                }
            }
        }
    }
    out.clusters = groups
        .into_iter()
        .map(|((api, cause), members)| {
            let steps = members.iter().map(|(_, s)| *s);
            let sum: u64 = steps.clone().map(u64::from).sum();
            Cluster {
                api,
                cause,
                count: members.len(),
                min_step: steps.clone().min().unwrap_or(0),
                max_step: steps.max().unwrap_or(0),
                avg_step: sum as f64 / members.len() as f64,
                programs: members.iter().map(|(p, _)| p.to_string()).collect(),
                classification: Classification::Unclassified,
            }
        })
        .collect();
    out
}

/// 0 when every program passed, 1 when assertion failures occurred, 2 when
/// any run hit an infrastructure error.
pub fn exit_code(logs: &[RunLog]) -> i32 {
    if logs.iter().any(|l| l.verdict == RunVerdict::Error) {
        2
    } else if logs.iter().any(|l| l.verdict == RunVerdict::Fail) {
        1
    } else {
        0
    }
}
