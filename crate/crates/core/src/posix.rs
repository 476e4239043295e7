//! POSIX-subset scheduler model: fixed-priority preemptive threads with
//! priority-inheritance mutexes, condition variables and dynamic priority
//! changes on partitioned cores.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::call::{Api, Call, Invoker, TimeoutOutcome, EXTERNAL};
use crate::config::{KernelKind, Names, PosixConfig};
use crate::defect::{DefectError, DefectKind};
use crate::ids::{CondId, CoreId, MutexId, TaskId};
use crate::model::{Invocable, Model, ObjectKind, StateKey, StepError};
use crate::observation::{Observation, TaskObservation, TaskState};
use crate::sched::ReadyQueues;
use crate::status::{PosixStatus, Status};
use crate::KernelError;

/// What a WAITING thread is blocked on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Blocked {
    None,
    /// In the mutex wait set; `timed` when entered through `mutex_timedlock`.
    Mutex {
        mutex: MutexId,
        timed: bool,
    },
    /// A `mutex_timedlock` that will time out. Lends priority but never
    /// receives the mutex.
    Timed(MutexId),
    Cond(CondId),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ThreadSlot {
    pub state: TaskState,
    pub base: u32,
    pub effective: u32,
    pub blocked: Blocked,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MutexSlot {
    pub owner: Option<TaskId>,
    /// FIFO arrival order.
    pub waiters: Vec<TaskId>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PosixCore {
    pub running: Option<TaskId>,
    pub ready: ReadyQueues,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PosixState {
    pub tasks: Vec<ThreadSlot>,
    pub mutexes: Vec<MutexSlot>,
    pub condvars: Vec<Vec<TaskId>>,
    pub cores: Vec<PosixCore>,
}

const DEFAULT_TASK_APIS: &[Api] = &[
    Api::MutexLock,
    Api::MutexTrylock,
    Api::MutexTimedlock,
    Api::MutexUnlock,
    Api::CondWait,
    Api::CondSignal,
    Api::SetSchedPrio,
];

const DEFAULT_EXTERNAL_APIS: &[Api] = &[Api::ActivateTask, Api::TimeoutFire];

#[derive(Clone, Debug)]
pub struct PosixKernel {
    config: PosixConfig,
    names: Names,
    defect: Option<DefectKind>,
    cores_of: Vec<CoreId>,
    cond_mutex: Vec<MutexId>,
    priorities: Vec<i32>,
}

/// Least fixpoint of `effective = max(base, effective of every thread
/// blocked on a mutex this thread owns)`. `lends` filters which blocked
/// threads contribute.
pub fn inheritance_fixpoint(s: &PosixState, lends: impl Fn(&ThreadSlot) -> bool) -> Vec<u32> {
    let mut eff: Vec<u32> = s.tasks.iter().map(|t| t.base).collect();
    loop {
        let mut changed = false;
        for (i, t) in s.tasks.iter().enumerate() {
            let m = match t.blocked {
                Blocked::Mutex { mutex, .. } | Blocked::Timed(mutex) => mutex,
                _ => continue,
            };
            if !lends(t) {
                continue;
            }
            if let Some(owner) = s.mutexes[m.index()].owner {
                if eff[owner.index()] < eff[i] {
                    eff[owner.index()] = eff[i];
                    changed = true;
                }
            }
        }
        if !changed {
            return eff;
        }
    }
}

impl PosixKernel {
    pub fn new(config: PosixConfig) -> Result<Self, KernelError> {
        Self::build(config, None)
    }

    pub fn with_defect(config: PosixConfig, defect: DefectKind) -> Result<Self, KernelError> {
        Self::build(config, Some(defect))
    }

    fn build(config: PosixConfig, defect: Option<DefectKind>) -> Result<Self, KernelError> {
        config.validate()?;
        if let Some(d) = &defect {
            if !d.applies_to(KernelKind::Posix) {
                return Err(DefectError::Inapplicable(alloc::format!("{d:?}"), "posix").into());
            }
        }
        let names = Names::posix(&config);
        let cores_of = config
            .tasks
            .iter()
            .map(|t| CoreId::from_index(t.core))
            .collect();
        let cond_mutex = config
            .condvars
            .iter()
            .map(|c| MutexId::from_index(names.mutex(&c.mutex).expect("validated")))
            .collect();
        let priorities: BTreeSet<i32> = config.tasks.iter().map(|t| t.priority as i32).collect();
        Ok(PosixKernel {
            config,
            names,
            defect,
            cores_of,
            cond_mutex,
            priorities: priorities.into_iter().collect(),
        })
    }

    pub fn config(&self) -> &PosixConfig {
        &self.config
    }

    fn has_defect(&self, d: &DefectKind) -> bool {
        self.defect.as_ref() == Some(d)
    }

    fn core(&self, t: TaskId) -> usize {
        self.cores_of[t.index()].index()
    }

    fn lends(&self, t: &ThreadSlot) -> bool {
        match (&self.defect, t.blocked) {
            (
                Some(DefectKind::SkipPriorityBoost {
                    api: Api::MutexLock,
                }),
                Blocked::Mutex { timed, .. },
            ) => timed,
            (
                Some(DefectKind::SkipPriorityBoost {
                    api: Api::MutexTimedlock,
                }),
                Blocked::Mutex { timed, .. },
            ) => !timed,
            (
                Some(DefectKind::SkipPriorityBoost {
                    api: Api::MutexTimedlock,
                }),
                Blocked::Timed(_),
            ) => false,
            _ => true,
        }
    }

    fn make_ready(&self, s: &mut PosixState, t: TaskId, at_head: bool) {
        let slot = &mut s.tasks[t.index()];
        slot.state = TaskState::Ready;
        slot.blocked = Blocked::None;
        let prio = slot.effective;
        let queues = &mut s.cores[self.core(t)].ready;
        if at_head {
            queues.push_head(prio, t);
        } else {
            queues.push_tail(prio, t);
        }
    }

    fn block(&self, s: &mut PosixState, t: TaskId, on: Blocked) {
        let slot = &mut s.tasks[t.index()];
        slot.state = TaskState::Waiting;
        slot.blocked = on;
        s.cores[self.core(t)].running = None;
    }

    /// Recomputes effective priorities and moves READY threads whose
    /// priority changed to the tail of their new level.
    fn recompute(&self, s: &mut PosixState) {
        let eff = inheritance_fixpoint(s, |t| self.lends(t));
        for (i, e) in eff.into_iter().enumerate() {
            if s.tasks[i].effective == e {
                continue;
            }
            s.tasks[i].effective = e;
            if s.tasks[i].state == TaskState::Ready {
                let t = TaskId::from_index(i);
                let core = self.core(t);
                s.cores[core].ready.remove(t);
                s.cores[core].ready.push_tail(e, t);
            }
        }
    }

    fn pick_waiter(&self, s: &PosixState, waiters: &[TaskId], api: Api) -> Option<usize> {
        let prio = |i: usize| s.tasks[waiters[i].index()].effective;
        let indices = 0..waiters.len();
        if self.has_defect(&DefectKind::WrongWakeTarget { api }) {
            indices.min_by(|a, b| prio(*a).cmp(&prio(*b)).then(a.cmp(b)))
        } else {
            indices.max_by(|a, b| prio(*a).cmp(&prio(*b)).then(b.cmp(a)))
        }
    }

    /// Releases `m` held by its owner, handing it to a waiter if any.
    fn release(&self, s: &mut PosixState, m: MutexId, api: Api) {
        let waiters = s.mutexes[m.index()].waiters.clone();
        match self.pick_waiter(s, &waiters, api) {
            Some(i) => {
                let next = s.mutexes[m.index()].waiters.remove(i);
                s.mutexes[m.index()].owner = Some(next);
                self.make_ready(s, next, false);
            }
            None => s.mutexes[m.index()].owner = None,
        }
    }

    pub fn dispatch(&self, s: &mut PosixState, core: CoreId) {
        let c = core.index();
        let Some(top) = s.cores[c].ready.top_priority() else {
            return;
        };
        if let Some(r) = s.cores[c].running {
            let prio = s.tasks[r.index()].effective;
            if top <= prio {
                return;
            }
            s.tasks[r.index()].state = TaskState::Ready;
            s.cores[c].ready.push_head(prio, r);
        }
        let next = s.cores[c].ready.pop_top().expect("non-empty");
        s.tasks[next.index()].state = TaskState::Running;
        s.cores[c].running = Some(next);
    }

    fn dispatch_all(&self, s: &mut PosixState) {
        for c in 0..s.cores.len() {
            self.dispatch(s, CoreId::from_index(c));
        }
    }

    fn apply(
        &self,
        state: &PosixState,
        invoker: Invoker,
        call: Call,
    ) -> Result<(PosixStatus, PosixState), StepError> {
        use PosixStatus as P;
        let api = call.api();
        if !Api::for_kind(KernelKind::Posix).contains(&api) {
            return Err(StepError::UnsupportedApi(api));
        }
        let external_api = matches!(api, Api::ActivateTask | Api::TimeoutFire);
        let caller = match invoker {
            Invoker::External if external_api => None,
            Invoker::External => {
                return Err(StepError::NotPermitted {
                    api,
                    invoker: String::from(EXTERNAL),
                })
            }
            Invoker::Task(t) if external_api => {
                return Err(StepError::NotPermitted {
                    api,
                    invoker: String::from(self.names.task_name(t)),
                })
            }
            Invoker::Task(t) => {
                if state.tasks.get(t.index()).map(|s| s.state) != Some(TaskState::Running) {
                    return Err(StepError::NotRunning(String::from(self.names.task_name(t))));
                }
                Some(t)
            }
        };
        let unchanged = |code: P| Ok((code, state.clone()));
        let mutex_ok = |m: MutexId| m.index() < state.mutexes.len();
        let mut s = state.clone();

        let status = match call {
            Call::ActivateTask(x) => {
                if x.index() >= s.tasks.len() || s.tasks[x.index()].state != TaskState::Suspended {
                    return unchanged(P::Einval);
                }
                let head = self.has_defect(&DefectKind::HeadEnqueue {
                    api: Api::ActivateTask,
                });
                self.make_ready(&mut s, x, head);
                self.dispatch_all(&mut s);
                return Ok((P::Ok, s));
            }
            Call::TimeoutFire(x) => match s.tasks.get(x.index()).map(|t| t.blocked) {
                Some(Blocked::Timed(_)) => {
                    self.make_ready(&mut s, x, false);
                    P::Etimedout
                }
                _ => {
                    return Err(StepError::NotEnabled(alloc::format!(
                        "{} has no pending timeout",
                        self.names.task_name(x)
                    )))
                }
            },
            Call::MutexLock(m) | Call::MutexTimedlock(m, _) => {
                let t = caller.expect("task caller");
                if !mutex_ok(m) {
                    return unchanged(P::Einval);
                }
                let owner = s.mutexes[m.index()].owner;
                match (owner, call) {
                    (Some(o), _) if o == t => return unchanged(P::Edeadlk),
                    (None, _) => {
                        s.mutexes[m.index()].owner = Some(t);
                        P::Ok
                    }
                    (Some(_), Call::MutexTimedlock(_, TimeoutOutcome::WillTimeout)) => {
                        self.block(&mut s, t, Blocked::Timed(m));
                        P::Etimedout
                    }
                    (Some(_), _) => {
                        let timed = matches!(call, Call::MutexTimedlock(..));
                        self.block(&mut s, t, Blocked::Mutex { mutex: m, timed });
                        s.mutexes[m.index()].waiters.push(t);
                        P::Ok
                    }
                }
            }
            Call::MutexTrylock(m) => {
                let t = caller.expect("task caller");
                if !mutex_ok(m) {
                    return unchanged(P::Einval);
                }
                if s.mutexes[m.index()].owner.is_some() {
                    return unchanged(P::Ebusy);
                }
                s.mutexes[m.index()].owner = Some(t);
                P::Ok
            }
            Call::MutexUnlock(m) => {
                let t = caller.expect("task caller");
                if !mutex_ok(m) {
                    return unchanged(P::Einval);
                }
                if s.mutexes[m.index()].owner != Some(t) {
                    return unchanged(P::Eperm);
                }
                self.release(&mut s, m, Api::MutexUnlock);
                P::Ok
            }
            Call::CondWait(c) => {
                let t = caller.expect("task caller");
                if c.index() >= s.condvars.len() {
                    return unchanged(P::Einval);
                }
                let m = self.cond_mutex[c.index()];
                if s.mutexes[m.index()].owner != Some(t) {
                    return unchanged(P::Eperm);
                }
                self.release(&mut s, m, Api::CondWait);
                self.block(&mut s, t, Blocked::Cond(c));
                s.condvars[c.index()].push(t);
                P::Ok
            }
            Call::CondSignal(c) => {
                if c.index() >= s.condvars.len() {
                    return unchanged(P::Einval);
                }
                let waiters = s.condvars[c.index()].clone();
                let Some(i) = self.pick_waiter(&s, &waiters, Api::CondSignal) else {
                    return unchanged(P::Ok);
                };
                let w = s.condvars[c.index()].remove(i);
                let m = self.cond_mutex[c.index()];
                if s.mutexes[m.index()].owner.is_none() {
                    s.mutexes[m.index()].owner = Some(w);
                    self.make_ready(&mut s, w, false);
                } else {
                    s.tasks[w.index()].blocked = Blocked::Mutex {
                        mutex: m,
                        timed: false,
                    };
                    s.mutexes[m.index()].waiters.push(w);
                }
                P::Ok
            }
            Call::SetSchedPrio(x, p) => {
                if x.index() >= s.tasks.len() || p < 0 {
                    return unchanged(P::Einval);
                }
                let p = p as u32;
                s.tasks[x.index()].base = p;
                self.recompute(&mut s);
                if self.has_defect(&DefectKind::SkipPriorityBoost {
                    api: Api::SetSchedPrio,
                }) {
                    s.tasks[x.index()].effective = p;
                }
                if s.tasks[x.index()].state == TaskState::Ready {
                    let core = self.core(x);
                    let head = self.has_defect(&DefectKind::HeadEnqueue {
                        api: Api::SetSchedPrio,
                    });
                    let eff = s.tasks[x.index()].effective;
                    s.cores[core].ready.remove(x);
                    if head {
                        s.cores[core].ready.push_head(eff, x);
                    } else {
                        s.cores[core].ready.push_tail(eff, x);
                    }
                }
                self.dispatch_all(&mut s);
                return Ok((P::Ok, s));
            }
            _ => return Err(StepError::UnsupportedApi(api)),
        };
        self.recompute(&mut s);
        self.dispatch_all(&mut s);
        Ok((status, s))
    }

    fn calls_for(&self, api: Api, s: &PosixState, invocable: &Invocable, out: &mut Vec<Call>) {
        let mutexes = (0..self.config.mutexes.len()).map(MutexId::from_index);
        let conds = (0..self.config.condvars.len()).map(CondId::from_index);
        match api {
            Api::ActivateTask => out.extend(
                self.config
                    .tasks
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| !t.auto_start)
                    .map(|(i, _)| Call::ActivateTask(TaskId::from_index(i))),
            ),
            Api::TimeoutFire => out.extend(
                s.tasks
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| matches!(t.blocked, Blocked::Timed(_)))
                    .map(|(i, _)| Call::TimeoutFire(TaskId::from_index(i))),
            ),
            Api::MutexLock => out.extend(mutexes.map(Call::MutexLock)),
            Api::MutexTrylock => out.extend(mutexes.map(Call::MutexTrylock)),
            Api::MutexTimedlock => {
                for m in mutexes {
                    out.push(Call::MutexTimedlock(m, TimeoutOutcome::WillAcquire));
                    out.push(Call::MutexTimedlock(m, TimeoutOutcome::WillTimeout));
                }
            }
            Api::MutexUnlock => out.extend(mutexes.map(Call::MutexUnlock)),
            Api::CondWait => out.extend(conds.map(Call::CondWait)),
            Api::CondSignal => out.extend(conds.map(Call::CondSignal)),
            Api::SetSchedPrio => {
                let prios = invocable.priorities.as_deref().unwrap_or(&self.priorities);
                for t in 0..s.tasks.len() {
                    out.extend(
                        prios
                            .iter()
                            .map(|p| Call::SetSchedPrio(TaskId::from_index(t), *p)),
                    );
                }
            }
            _ => {}
        }
    }
}

impl Model for PosixKernel {
    type State = PosixState;

    fn kind(&self) -> KernelKind {
        KernelKind::Posix
    }

    fn names(&self) -> &Names {
        &self.names
    }

    fn declarations(&self) -> Vec<(ObjectKind, String)> {
        let c = &self.config;
        c.tasks
            .iter()
            .map(|t| (ObjectKind::Task, t.name.clone()))
            .chain(c.mutexes.iter().map(|m| (ObjectKind::Mutex, m.clone())))
            .chain(
                c.condvars
                    .iter()
                    .map(|v| (ObjectKind::Condvar, v.name.clone())),
            )
            .collect()
    }

    fn init(&self) -> PosixState {
        let mut s = PosixState {
            tasks: self
                .config
                .tasks
                .iter()
                .map(|t| ThreadSlot {
                    state: TaskState::Suspended,
                    base: t.priority,
                    effective: t.priority,
                    blocked: Blocked::None,
                })
                .collect(),
            mutexes: vec![MutexSlot::default(); self.config.mutexes.len()],
            condvars: vec![Vec::new(); self.config.condvars.len()],
            cores: vec![PosixCore::default(); self.config.cores],
        };
        for (i, t) in self.config.tasks.iter().enumerate() {
            if t.auto_start {
                self.make_ready(&mut s, TaskId::from_index(i), false);
            }
        }
        self.dispatch_all(&mut s);
        s
    }

    fn step(
        &self,
        state: &PosixState,
        invoker: Invoker,
        call: Call,
    ) -> Result<(Status, PosixState), StepError> {
        let (code, next) = self.apply(state, invoker, call)?;
        let status = Status::Posix(code);
        let status = match &self.defect {
            Some(d) => d.wrong_status(call.api(), status),
            None => status,
        };
        Ok((status, next))
    }

    fn observe(&self, s: &PosixState) -> Observation {
        Observation {
            tasks: s
                .tasks
                .iter()
                .map(|t| TaskObservation {
                    state: t.state,
                    events: None,
                })
                .collect(),
            cores: s.cores.iter().map(|c| c.running).collect(),
        }
    }

    fn canonical_key(&self, s: &PosixState) -> StateKey {
        let mut out = Vec::with_capacity(16 + s.tasks.len() * 12);
        for t in &s.tasks {
            out.push(t.state as u8);
            out.extend_from_slice(&t.base.to_le_bytes());
            out.extend_from_slice(&t.effective.to_le_bytes());
            match t.blocked {
                Blocked::None => out.extend_from_slice(&[0, 0]),
                Blocked::Mutex { mutex, timed } => {
                    out.extend_from_slice(&[if timed { 2 } else { 1 }, mutex.0])
                }
                Blocked::Timed(m) => out.extend_from_slice(&[3, m.0]),
                Blocked::Cond(c) => out.extend_from_slice(&[4, c.0]),
            }
        }
        for m in &s.mutexes {
            out.push(m.owner.map_or(u8::MAX, |t| t.0));
            out.push(m.waiters.len() as u8);
            out.extend(m.waiters.iter().map(|t| t.0));
        }
        for c in &s.condvars {
            out.push(c.len() as u8);
            out.extend(c.iter().map(|t| t.0));
        }
        for c in &s.cores {
            out.push(c.running.map_or(u8::MAX, |t| t.0));
            c.ready.encode(&mut out);
        }
        StateKey(out)
    }

    fn candidates(&self, s: &PosixState, invocable: &Invocable) -> Vec<(Invoker, Call)> {
        let mut out = Vec::new();
        let mut calls = Vec::new();
        for (i, slot) in s.tasks.iter().enumerate() {
            if slot.state != TaskState::Running {
                continue;
            }
            let t = TaskId::from_index(i);
            for api in invocable.apis_for_task(t, DEFAULT_TASK_APIS) {
                if matches!(api, Api::ActivateTask | Api::TimeoutFire) {
                    continue;
                }
                calls.clear();
                self.calls_for(*api, s, invocable, &mut calls);
                out.extend(calls.iter().map(|c| (Invoker::Task(t), *c)));
            }
        }
        for api in invocable.external(DEFAULT_EXTERNAL_APIS) {
            if !matches!(api, Api::ActivateTask | Api::TimeoutFire) {
                continue;
            }
            calls.clear();
            self.calls_for(*api, s, invocable, &mut calls);
            out.extend(calls.iter().map(|c| (Invoker::External, *c)));
        }
        out
    }
}
