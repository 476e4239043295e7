//! Classic (OSEK/AUTOSAR-style) scheduler model.
//!
//! Partitioned multi-core, one FIFO ready queue per priority level on every
//! core, full preemption. A preempted task goes back to the head of its
//! level so it resumes before peers activated after it.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::call::{Api, Call, Invoker};
use crate::config::{AlarmAction, KernelConfig, KernelKind, Names};
use crate::defect::{DefectError, DefectKind};
use crate::ids::{AlarmId, CoreId, LockId, TaskId};
use crate::model::{Invocable, Model, ObjectKind, StateKey, StepError};
use crate::observation::{Observation, TaskObservation, TaskState};
use crate::sched::ReadyQueues;
use crate::status::{Status, StatusCode};
use crate::KernelError;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskSlot {
    pub state: TaskState,
    /// Queued activations beyond the current one.
    pub pending: u8,
    pub events: u32,
    pub wait_mask: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CoreSlot {
    pub running: Option<TaskId>,
    pub ready: ReadyQueues,
    /// Spinlocks held by tasks on this core, innermost last.
    pub spinlocks: Vec<LockId>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassicState {
    pub tasks: Vec<TaskSlot>,
    pub cores: Vec<CoreSlot>,
    pub lock_holders: Vec<Option<TaskId>>,
    /// Remaining ticks of each armed alarm.
    pub alarms: Vec<Option<u32>>,
}

#[derive(Clone, Copy, Debug)]
enum Action {
    Activate(TaskId),
    SetEvent(TaskId, u32),
}

#[derive(Clone, Debug)]
struct TaskInfo {
    core: CoreId,
    priority: u32,
    extended: bool,
    max_activations: u8,
    auto_start: bool,
}

const DEFAULT_TASK_APIS: &[Api] = &[
    Api::ActivateTask,
    Api::TerminateTask,
    Api::ChainTask,
    Api::SetEvent,
    Api::ClearEvent,
    Api::WaitEvent,
    Api::GetSpinlock,
    Api::ReleaseSpinlock,
    Api::SetRelAlarm,
    Api::CancelAlarm,
];

#[derive(Clone, Debug)]
pub struct ClassicKernel {
    config: KernelConfig,
    names: Names,
    defect: Option<DefectKind>,
    tasks: Vec<TaskInfo>,
    successors: Vec<Vec<LockId>>,
    actions: Vec<Action>,
    default_external: Vec<Api>,
}

impl ClassicKernel {
    pub fn new(config: KernelConfig) -> Result<Self, KernelError> {
        Self::build(config, None)
    }

    pub fn with_defect(config: KernelConfig, defect: DefectKind) -> Result<Self, KernelError> {
        Self::build(config, Some(defect))
    }

    fn build(config: KernelConfig, defect: Option<DefectKind>) -> Result<Self, KernelError> {
        config.validate()?;
        if let Some(d) = &defect {
            if !d.applies_to(KernelKind::Classic) {
                return Err(DefectError::Inapplicable(alloc::format!("{d:?}"), "classic").into());
            }
        }
        let names = Names::classic(&config);
        let tasks = config
            .tasks
            .iter()
            .map(|t| TaskInfo {
                core: CoreId::from_index(t.core),
                priority: t.priority,
                extended: t.extended,
                max_activations: t.max_activations as u8,
                auto_start: t.auto_start,
            })
            .collect();
        let successors = config
            .spinlocks
            .iter()
            .map(|s| {
                s.successors
                    .iter()
                    .map(|n| LockId::from_index(names.spinlock(n).expect("validated")))
                    .collect()
            })
            .collect();
        let actions = config
            .alarms
            .iter()
            .map(|a| match &a.action {
                AlarmAction::ActivateTask { task } => {
                    Action::Activate(names.task(task).expect("validated"))
                }
                AlarmAction::SetEvent { task, event } => Action::SetEvent(
                    names.task(task).expect("validated"),
                    names.event_mask(event).expect("validated"),
                ),
            })
            .collect();
        let mut default_external = vec![Api::ActivateTask];
        if !config.alarms.is_empty() {
            default_external.push(Api::Tick);
        }
        Ok(ClassicKernel {
            config,
            names,
            defect,
            tasks,
            successors,
            actions,
            default_external,
        })
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    fn info(&self, t: TaskId) -> &TaskInfo {
        &self.tasks[t.index()]
    }

    fn has_defect(&self, d: &DefectKind) -> bool {
        self.defect.as_ref() == Some(d)
    }

    fn head_enqueue(&self, api: Api) -> bool {
        self.has_defect(&DefectKind::HeadEnqueue { api })
    }

    fn make_ready(&self, s: &mut ClassicState, t: TaskId, at_head: bool) {
        let info = self.info(t);
        s.tasks[t.index()].state = TaskState::Ready;
        let queues = &mut s.cores[info.core.index()].ready;
        if at_head {
            queues.push_head(info.priority, t);
        } else {
            queues.push_tail(info.priority, t);
        }
    }

    fn activate(&self, s: &mut ClassicState, t: TaskId, via: Api) -> StatusCode {
        let info = self.info(t);
        let slot = &mut s.tasks[t.index()];
        if slot.state == TaskState::Suspended {
            slot.events = 0;
            slot.wait_mask = 0;
            self.make_ready(s, t, self.head_enqueue(via));
            StatusCode::Ok
        } else if 1 + slot.pending < info.max_activations {
            slot.pending += 1;
            StatusCode::Ok
        } else {
            StatusCode::Limit
        }
    }

    fn terminate(&self, s: &mut ClassicState, t: TaskId) {
        let core = self.info(t).core.index();
        debug_assert_eq!(s.cores[core].running, Some(t));
        s.cores[core].running = None;
        let slot = &mut s.tasks[t.index()];
        slot.events = 0;
        slot.wait_mask = 0;
        if slot.pending > 0 {
            slot.pending -= 1;
            self.make_ready(s, t, false);
        } else {
            slot.state = TaskState::Suspended;
        }
    }

    fn set_event(&self, s: &mut ClassicState, t: TaskId, mask: u32, via: Api) {
        let slot = &mut s.tasks[t.index()];
        slot.events |= mask;
        if slot.state == TaskState::Waiting && slot.events & slot.wait_mask != 0 {
            slot.wait_mask = 0;
            self.make_ready(s, t, self.head_enqueue(via));
        }
    }

    /// Gives the core to the head of its highest non-empty level if that
    /// level outranks the running task.
    pub fn dispatch(&self, s: &mut ClassicState, core: CoreId) {
        let c = core.index();
        let Some(top) = s.cores[c].ready.top_priority() else {
            return;
        };
        match s.cores[c].running {
            None => {}
            Some(r) => {
                let prio = self.info(r).priority;
                if top <= prio {
                    return;
                }
                s.tasks[r.index()].state = TaskState::Ready;
                s.cores[c].ready.push_head(prio, r);
            }
        }
        let next = s.cores[c].ready.pop_top().expect("non-empty");
        s.tasks[next.index()].state = TaskState::Running;
        s.cores[c].running = Some(next);
    }

    fn dispatch_all(&self, s: &mut ClassicState) {
        for c in 0..s.cores.len() {
            self.dispatch(s, CoreId::from_index(c));
        }
    }

    fn holds_spinlock(s: &ClassicState, t: TaskId) -> bool {
        s.lock_holders.contains(&Some(t))
    }

    fn calls_for(&self, api: Api, invocable: &Invocable, out: &mut Vec<Call>) {
        let tasks = (0..self.tasks.len()).map(TaskId::from_index);
        match api {
            Api::ActivateTask => out.extend(tasks.map(Call::ActivateTask)),
            Api::TerminateTask => out.push(Call::TerminateTask),
            Api::ChainTask => out.extend(tasks.map(Call::ChainTask)),
            Api::SetEvent => {
                for t in tasks {
                    out.extend(
                        self.names
                            .single_event_masks()
                            .map(|m| Call::SetEvent(t, m)),
                    );
                }
            }
            Api::ClearEvent => out.extend(self.names.single_event_masks().map(Call::ClearEvent)),
            Api::WaitEvent => out.extend(self.names.single_event_masks().map(Call::WaitEvent)),
            Api::GetEvent => out.extend(tasks.map(Call::GetEvent)),
            Api::GetSpinlock => out.extend(
                (0..self.successors.len()).map(|l| Call::GetSpinlock(LockId::from_index(l))),
            ),
            Api::ReleaseSpinlock => out.extend(
                (0..self.successors.len()).map(|l| Call::ReleaseSpinlock(LockId::from_index(l))),
            ),
            Api::SetRelAlarm => {
                for a in 0..self.actions.len() {
                    out.extend(
                        invocable
                            .alarm_offsets
                            .iter()
                            .map(|o| Call::SetRelAlarm(AlarmId::from_index(a), *o)),
                    );
                }
            }
            Api::CancelAlarm => out
                .extend((0..self.actions.len()).map(|a| Call::CancelAlarm(AlarmId::from_index(a)))),
            Api::Tick => out.push(Call::Tick),
            _ => {}
        }
    }

    fn apply(
        &self,
        state: &ClassicState,
        invoker: Invoker,
        call: Call,
    ) -> Result<(StatusCode, ClassicState), StepError> {
        use StatusCode as E;
        let api = call.api();
        if !Api::for_kind(KernelKind::Classic).contains(&api) {
            return Err(StepError::UnsupportedApi(api));
        }
        let caller = match invoker {
            Invoker::External => {
                if !matches!(api, Api::ActivateTask | Api::Tick) {
                    return Err(StepError::NotPermitted {
                        api,
                        invoker: String::from(crate::call::EXTERNAL),
                    });
                }
                None
            }
            Invoker::Task(t) => {
                if api == Api::Tick {
                    return Err(StepError::NotPermitted {
                        api,
                        invoker: String::from(self.names.task_name(t)),
                    });
                }
                if state.tasks.get(t.index()).map(|s| s.state) != Some(TaskState::Running) {
                    return Err(StepError::NotRunning(String::from(self.names.task_name(t))));
                }
                Some(t)
            }
        };
        let n_tasks = self.tasks.len();
        let task_ok = |t: TaskId| t.index() < n_tasks;
        let mut s = state.clone();
        let unchanged = |code: StatusCode| Ok((code, state.clone()));

        let status = match call {
            Call::ActivateTask(x) => {
                if !task_ok(x) {
                    return unchanged(E::Id);
                }
                self.activate(&mut s, x, Api::ActivateTask)
            }
            Call::TerminateTask => {
                let t = caller.expect("task caller");
                if Self::holds_spinlock(&s, t) {
                    return unchanged(E::State);
                }
                self.terminate(&mut s, t);
                E::Ok
            }
            Call::ChainTask(x) => {
                let t = caller.expect("task caller");
                if !task_ok(x) {
                    return unchanged(E::Id);
                }
                if Self::holds_spinlock(&s, t) {
                    return unchanged(E::State);
                }
                if x == t {
                    let core = self.info(t).core.index();
                    s.cores[core].running = None;
                    let clears = self.config.options.chaintask_clears_events
                        && !self.has_defect(&DefectKind::EventNotCleared {
                            api: Api::ChainTask,
                        });
                    if clears {
                        s.tasks[t.index()].events = 0;
                    }
                    self.make_ready(&mut s, t, false);
                    E::Ok
                } else {
                    let target = &s.tasks[x.index()];
                    if target.state != TaskState::Suspended
                        && 1 + target.pending >= self.info(x).max_activations
                    {
                        return unchanged(E::Limit);
                    }
                    self.terminate(&mut s, t);
                    self.activate(&mut s, x, Api::ChainTask)
                }
            }
            Call::SetEvent(x, mask) => {
                if !task_ok(x) || !self.info(x).extended {
                    return unchanged(E::Id);
                }
                if s.tasks[x.index()].state == TaskState::Suspended {
                    return unchanged(E::State);
                }
                self.set_event(&mut s, x, mask, Api::SetEvent);
                E::Ok
            }
            Call::ClearEvent(mask) => {
                let t = caller.expect("task caller");
                if !self.info(t).extended {
                    return unchanged(E::Id);
                }
                s.tasks[t.index()].events &= !mask;
                E::Ok
            }
            Call::WaitEvent(mask) => {
                let t = caller.expect("task caller");
                if !self.info(t).extended {
                    return unchanged(E::Id);
                }
                if Self::holds_spinlock(&s, t) {
                    return unchanged(E::State);
                }
                let slot = &mut s.tasks[t.index()];
                if slot.events & mask == 0 {
                    slot.state = TaskState::Waiting;
                    slot.wait_mask = mask;
                    s.cores[self.info(t).core.index()].running = None;
                }
                E::Ok
            }
            Call::GetEvent(x) => {
                if !task_ok(x) || !self.info(x).extended {
                    return unchanged(E::Id);
                }
                if s.tasks[x.index()].state == TaskState::Suspended {
                    return unchanged(E::State);
                }
                return unchanged(E::Ok);
            }
            Call::GetSpinlock(l) => {
                let t = caller.expect("task caller");
                if l.index() >= self.successors.len() {
                    return unchanged(E::Id);
                }
                let core = self.info(t).core;
                let holder = s.lock_holders[l.index()];
                if let Some(h) = holder {
                    if self.info(h).core == core {
                        return unchanged(E::InterferenceDeadlock);
                    }
                }
                let stack = &s.cores[core.index()].spinlocks;
                if !self.has_defect(&DefectKind::NoNestingCheck) {
                    if let Some(top) = stack.last() {
                        if !self.successors[top.index()].contains(&l) {
                            return unchanged(E::NestingDeadlock);
                        }
                    }
                }
                if holder.is_some() {
                    return unchanged(E::SpinBusy);
                }
                s.lock_holders[l.index()] = Some(t);
                s.cores[core.index()].spinlocks.push(l);
                E::Ok
            }
            Call::ReleaseSpinlock(l) => {
                let t = caller.expect("task caller");
                if l.index() >= self.successors.len() {
                    return unchanged(E::Id);
                }
                if s.lock_holders[l.index()] != Some(t) {
                    return unchanged(E::NoFunc);
                }
                let core = self.info(t).core.index();
                if s.cores[core].spinlocks.last() != Some(&l) {
                    return unchanged(E::State);
                }
                s.cores[core].spinlocks.pop();
                s.lock_holders[l.index()] = None;
                E::Ok
            }
            Call::SetRelAlarm(a, offset) => {
                if a.index() >= self.actions.len() {
                    return unchanged(E::Id);
                }
                if offset == 0 {
                    return unchanged(E::Value);
                }
                if s.alarms[a.index()].is_some() {
                    return unchanged(E::State);
                }
                s.alarms[a.index()] = Some(offset);
                E::Ok
            }
            Call::CancelAlarm(a) => {
                if a.index() >= self.actions.len() {
                    return unchanged(E::Id);
                }
                if s.alarms[a.index()].is_none() {
                    return unchanged(E::NoFunc);
                }
                s.alarms[a.index()] = None;
                E::Ok
            }
            Call::Tick => {
                let mut expired = Vec::new();
                for (i, slot) in s.alarms.iter_mut().enumerate() {
                    if let Some(left) = slot {
                        *left -= 1;
                        if *left == 0 {
                            *slot = None;
                            expired.push(i);
                        }
                    }
                }
                for i in expired {
                    match self.actions[i] {
                        Action::Activate(x) => {
                            self.activate(&mut s, x, Api::Tick);
                        }
                        Action::SetEvent(x, mask) => {
                            if s.tasks[x.index()].state != TaskState::Suspended {
                                self.set_event(&mut s, x, mask, Api::Tick);
                            }
                        }
                    }
                }
                E::Ok
            }
            _ => return Err(StepError::UnsupportedApi(api)),
        };
        if status != E::Ok {
            return unchanged(status);
        }
        self.dispatch_all(&mut s);
        Ok((status, s))
    }
}

impl Model for ClassicKernel {
    type State = ClassicState;

    fn kind(&self) -> KernelKind {
        KernelKind::Classic
    }

    fn names(&self) -> &Names {
        &self.names
    }

    fn declarations(&self) -> Vec<(ObjectKind, String)> {
        let c = &self.config;
        c.events
            .iter()
            .map(|e| (ObjectKind::Event, e.name.clone()))
            .chain(c.tasks.iter().map(|t| (ObjectKind::Task, t.name.clone())))
            .chain(
                c.spinlocks
                    .iter()
                    .map(|l| (ObjectKind::Spinlock, l.name.clone())),
            )
            .chain(c.alarms.iter().map(|a| (ObjectKind::Alarm, a.name.clone())))
            .collect()
    }

    fn init(&self) -> ClassicState {
        let mut s = ClassicState {
            tasks: vec![
                TaskSlot {
                    state: TaskState::Suspended,
                    pending: 0,
                    events: 0,
                    wait_mask: 0,
                };
                self.tasks.len()
            ],
            cores: vec![CoreSlot::default(); self.config.cores],
            lock_holders: vec![None; self.successors.len()],
            alarms: vec![None; self.actions.len()],
        };
        for (i, info) in self.tasks.iter().enumerate() {
            if info.auto_start {
                self.activate(&mut s, TaskId::from_index(i), Api::ActivateTask);
            }
        }
        self.dispatch_all(&mut s);
        s
    }

    fn step(
        &self,
        state: &ClassicState,
        invoker: Invoker,
        call: Call,
    ) -> Result<(Status, ClassicState), StepError> {
        let (code, next) = self.apply(state, invoker, call)?;
        let status = Status::Classic(code);
        let status = match &self.defect {
            Some(d) => d.wrong_status(call.api(), status),
            None => status,
        };
        Ok((status, next))
    }

    fn observe(&self, s: &ClassicState) -> Observation {
        Observation {
            tasks: s
                .tasks
                .iter()
                .zip(&self.tasks)
                .map(|(slot, info)| TaskObservation {
                    state: slot.state,
                    events: info.extended.then_some(slot.events),
                })
                .collect(),
            cores: s.cores.iter().map(|c| c.running).collect(),
        }
    }

    fn canonical_key(&self, s: &ClassicState) -> StateKey {
        let mut out = Vec::with_capacity(16 + s.tasks.len() * 10);
        for t in &s.tasks {
            out.push(t.state as u8);
            out.push(t.pending);
            out.extend_from_slice(&t.events.to_le_bytes());
            out.extend_from_slice(&t.wait_mask.to_le_bytes());
        }
        for c in &s.cores {
            out.push(c.running.map_or(u8::MAX, |t| t.0));
            c.ready.encode(&mut out);
            out.push(c.spinlocks.len() as u8);
            out.extend(c.spinlocks.iter().map(|l| l.0));
        }
        out.extend(s.lock_holders.iter().map(|h| h.map_or(u8::MAX, |t| t.0)));
        for a in &s.alarms {
            match a {
                None => out.push(0),
                Some(left) => {
                    out.push(1);
                    out.extend_from_slice(&left.to_le_bytes());
                }
            }
        }
        StateKey(out)
    }

    fn candidates(&self, s: &ClassicState, invocable: &Invocable) -> Vec<(Invoker, Call)> {
        let mut out = Vec::new();
        let mut calls = Vec::new();
        for (i, slot) in s.tasks.iter().enumerate() {
            if slot.state != TaskState::Running {
                continue;
            }
            let t = TaskId::from_index(i);
            for api in invocable.apis_for_task(t, DEFAULT_TASK_APIS) {
                if api.is_external_only() {
                    continue;
                }
                calls.clear();
                self.calls_for(*api, invocable, &mut calls);
                out.extend(calls.iter().map(|c| (Invoker::Task(t), *c)));
            }
        }
        for api in invocable.external(&self.default_external) {
            if !matches!(api, Api::ActivateTask | Api::Tick) {
                continue;
            }
            calls.clear();
            self.calls_for(*api, invocable, &mut calls);
            out.extend(calls.iter().map(|c| (Invoker::External, *c)));
        }
        out
    }
}
