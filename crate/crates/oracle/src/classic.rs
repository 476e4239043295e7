//! Naive classic-kernel simulator.
//!
//! Ready ordering is kept as per-task rank numbers: a tail insertion takes
//! a fresh maximum, a head insertion a fresh minimum. Dispatch scans all
//! tasks of a core for the best (priority, rank).

use mbt_core::classic::ClassicState;
use mbt_core::config::{AlarmAction, KernelConfig};
use mbt_core::observation::TaskState;
use mbt_core::Call;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum St {
    Sus,
    Rdy,
    Run,
    Wai,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Task {
    pub st: St,
    pub pending: u32,
    pub events: u32,
    pub wait: u32,
    pub rank: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct State {
    pub tasks: Vec<Task>,
    pub holder: Vec<Option<usize>>,
    /// Per core, acquisition order of held spinlocks.
    pub stack: Vec<Vec<usize>>,
    pub alarm: Vec<Option<u32>>,
    hi: i64,
    lo: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Op {
    Activate(usize),
    Terminate,
    Chain(usize),
    SetEvent(usize, u32),
    ClearEvent(u32),
    WaitEvent(u32),
    GetEvent(usize),
    GetLock(usize),
    ReleaseLock(usize),
    SetAlarm(usize, u32),
    CancelAlarm(usize),
    Tick,
}

impl Op {
    pub fn from_call(call: &Call) -> Option<Op> {
        Some(match *call {
            Call::ActivateTask(t) => Op::Activate(t.index()),
            Call::TerminateTask => Op::Terminate,
            Call::ChainTask(t) => Op::Chain(t.index()),
            Call::SetEvent(t, m) => Op::SetEvent(t.index(), m),
            Call::ClearEvent(m) => Op::ClearEvent(m),
            Call::WaitEvent(m) => Op::WaitEvent(m),
            Call::GetEvent(t) => Op::GetEvent(t.index()),
            Call::GetSpinlock(l) => Op::GetLock(l.index()),
            Call::ReleaseSpinlock(l) => Op::ReleaseLock(l.index()),
            Call::SetRelAlarm(a, o) => Op::SetAlarm(a.index(), o),
            Call::CancelAlarm(a) => Op::CancelAlarm(a.index()),
            Call::Tick => Op::Tick,
            _ => return None,
        })
    }
}

/// Invoker: `None` is the environment.
pub type Who = Option<usize>;

pub struct Sim {
    cfg: KernelConfig,
    succ: Vec<Vec<usize>>,
}

fn find(names: impl Iterator<Item = String>, name: &str) -> usize {
    names.into_iter().position(|n| n == name).expect("declared")
}

/// Per-task state code and events, then the running task of each core.
pub type Snapshot = (Vec<(&'static str, Option<u32>)>, Vec<Option<usize>>);

impl Sim {
    pub fn new(cfg: &KernelConfig) -> Sim {
        let succ = cfg
            .spinlocks
            .iter()
            .map(|l| {
                l.successors
                    .iter()
                    .map(|s| find(cfg.spinlocks.iter().map(|x| x.name.clone()), s))
                    .collect()
            })
            .collect();
        Sim {
            cfg: cfg.clone(),
            succ,
        }
    }

    pub fn config(&self) -> &KernelConfig {
        &self.cfg
    }

    fn prio(&self, t: usize) -> u32 {
        self.cfg.tasks[t].priority
    }

    fn core(&self, t: usize) -> usize {
        self.cfg.tasks[t].core
    }

    pub fn init(&self) -> State {
        let n = self.cfg.tasks.len();
        let mut s = State {
            tasks: vec![
                Task {
                    st: St::Sus,
                    pending: 0,
                    events: 0,
                    wait: 0,
                    rank: 0,
                };
                n
            ],
            holder: vec![None; self.cfg.spinlocks.len()],
            stack: vec![Vec::new(); self.cfg.cores],
            alarm: vec![None; self.cfg.alarms.len()],
            hi: 0,
            lo: 0,
        };
        for t in 0..n {
            if self.cfg.tasks[t].auto_start {
                self.activate(&mut s, t);
            }
        }
        self.dispatch(&mut s);
        self.normalize(s)
    }

    fn tail(&self, s: &mut State, t: usize) {
        s.hi += 1;
        s.tasks[t].st = St::Rdy;
        s.tasks[t].rank = s.hi;
    }

    fn head(&self, s: &mut State, t: usize) {
        s.lo -= 1;
        s.tasks[t].st = St::Rdy;
        s.tasks[t].rank = s.lo;
    }

    fn running_on(&self, s: &State, core: usize) -> Option<usize> {
        (0..s.tasks.len()).find(|&t| self.core(t) == core && s.tasks[t].st == St::Run)
    }

    fn dispatch(&self, s: &mut State) {
        for core in 0..self.cfg.cores {
            let best = (0..s.tasks.len())
                .filter(|&t| self.core(t) == core && s.tasks[t].st == St::Rdy)
                .min_by_key(|&t| (std::cmp::Reverse(self.prio(t)), s.tasks[t].rank));
            let Some(best) = best else { continue };
            match self.running_on(s, core) {
                Some(r) if self.prio(best) <= self.prio(r) => {}
                Some(r) => {
                    self.head(s, r);
                    s.tasks[best].st = St::Run;
                }
                None => s.tasks[best].st = St::Run,
            }
        }
    }

    fn activate(&self, s: &mut State, t: usize) -> &'static str {
        let max = self.cfg.tasks[t].max_activations;
        if s.tasks[t].st == St::Sus {
            s.tasks[t].events = 0;
            s.tasks[t].wait = 0;
            self.tail(s, t);
            "E_OK"
        } else if s.tasks[t].pending + 1 < max {
            s.tasks[t].pending += 1;
            "E_OK"
        } else {
            "E_OS_LIMIT"
        }
    }

    fn terminate(&self, s: &mut State, t: usize) {
        s.tasks[t].events = 0;
        s.tasks[t].wait = 0;
        if s.tasks[t].pending > 0 {
            s.tasks[t].pending -= 1;
            self.tail(s, t);
        } else {
            s.tasks[t].st = St::Sus;
        }
    }

    fn set_event(&self, s: &mut State, t: usize, mask: u32) {
        s.tasks[t].events |= mask;
        if s.tasks[t].st == St::Wai && s.tasks[t].events & s.tasks[t].wait != 0 {
            s.tasks[t].wait = 0;
            self.tail(s, t);
        }
    }

    fn holds(&self, s: &State, t: usize) -> bool {
        s.holder.contains(&Some(t))
    }

    /// `None` when the invoker may not issue the operation.
    pub fn step(&self, s: &State, who: Who, op: Op) -> Option<(&'static str, State)> {
        match (who, op) {
            (None, Op::Activate(_) | Op::Tick) => {}
            (None, _) | (Some(_), Op::Tick) => return None,
            (Some(t), _) => {
                if s.tasks.get(t)?.st != St::Run {
                    return None;
                }
            }
        }
        let n = s.tasks.len();
        let mut x = s.clone();
        let ext = |t: usize| t < n && self.cfg.tasks[t].extended;
        let status = match op {
            Op::Activate(t) if t >= n => "E_OS_ID",
            Op::Activate(t) => self.activate(&mut x, t),
            Op::Terminate => {
                let me = who?;
                if self.holds(s, me) {
                    "E_OS_STATE"
                } else {
                    self.terminate(&mut x, me);
                    "E_OK"
                }
            }
            Op::Chain(t) => {
                let me = who?;
                if t >= n {
                    "E_OS_ID"
                } else if self.holds(s, me) {
                    "E_OS_STATE"
                } else if t == me {
                    if self.cfg.options.chaintask_clears_events {
                        x.tasks[me].events = 0;
                    }
                    self.tail(&mut x, me);
                    "E_OK"
                } else if s.tasks[t].st != St::Sus
                    && s.tasks[t].pending + 1 >= self.cfg.tasks[t].max_activations
                {
                    "E_OS_LIMIT"
                } else {
                    self.terminate(&mut x, me);
                    self.activate(&mut x, t)
                }
            }
            Op::SetEvent(t, m) => {
                if !ext(t) {
                    "E_OS_ID"
                } else if s.tasks[t].st == St::Sus {
                    "E_OS_STATE"
                } else {
                    self.set_event(&mut x, t, m);
                    "E_OK"
                }
            }
            Op::ClearEvent(m) => {
                let me = who?;
                if !ext(me) {
                    "E_OS_ID"
                } else {
                    x.tasks[me].events &= !m;
                    "E_OK"
                }
            }
            Op::WaitEvent(m) => {
                let me = who?;
                if !ext(me) {
                    "E_OS_ID"
                } else if self.holds(s, me) {
                    "E_OS_STATE"
                } else {
                    if s.tasks[me].events & m == 0 {
                        x.tasks[me].st = St::Wai;
                        x.tasks[me].wait = m;
                    }
                    "E_OK"
                }
            }
            Op::GetEvent(t) => {
                if !ext(t) {
                    "E_OS_ID"
                } else if s.tasks[t].st == St::Sus {
                    "E_OS_STATE"
                } else {
                    "E_OK"
                }
            }
            Op::GetLock(l) => {
                let me = who?;
                let core = self.core(me);
                if l >= self.succ.len() {
                    "E_OS_ID"
                } else if s.holder[l].is_some_and(|h| self.core(h) == core) {
                    "E_OS_INTERFERENCE_DEADLOCK"
                } else if s.stack[core]
                    .last()
                    .is_some_and(|top| !self.succ[*top].contains(&l))
                {
                    "E_OS_NESTING_DEADLOCK"
                } else if s.holder[l].is_some() {
                    "E_SPIN_BUSY"
                } else {
                    x.holder[l] = Some(me);
                    x.stack[core].push(l);
                    "E_OK"
                }
            }
            Op::ReleaseLock(l) => {
                let me = who?;
                let core = self.core(me);
                if l >= self.succ.len() {
                    "E_OS_ID"
                } else if s.holder[l] != Some(me) {
                    "E_OS_NOFUNC"
                } else if s.stack[core].last() != Some(&l) {
                    "E_OS_STATE"
                } else {
                    x.holder[l] = None;
                    x.stack[core].pop();
                    "E_OK"
                }
            }
            Op::SetAlarm(a, off) => {
                if a >= s.alarm.len() {
                    "E_OS_ID"
                } else if off == 0 {
                    "E_OS_VALUE"
                } else if s.alarm[a].is_some() {
                    "E_OS_STATE"
                } else {
                    x.alarm[a] = Some(off);
                    "E_OK"
                }
            }
            Op::CancelAlarm(a) => {
                if a >= s.alarm.len() {
                    "E_OS_ID"
                } else if s.alarm[a].is_none() {
                    "E_OS_NOFUNC"
                } else {
                    x.alarm[a] = None;
                    "E_OK"
                }
            }
            Op::Tick => {
                let mut fire = Vec::new();
                for a in 0..x.alarm.len() {
                    if let Some(left) = x.alarm[a] {
                        x.alarm[a] = if left == 1 {
                            fire.push(a);
                            None
                        } else {
                            Some(left - 1)
                        };
                    }
                }
                for a in fire {
                    match &self.cfg.alarms[a].action {
                        AlarmAction::ActivateTask { task } => {
                            let t = find(self.cfg.tasks.iter().map(|t| t.name.clone()), task);
                            self.activate(&mut x, t);
                        }
                        AlarmAction::SetEvent { task, event } => {
                            let t = find(self.cfg.tasks.iter().map(|t| t.name.clone()), task);
                            let e = find(self.cfg.events.iter().map(|e| e.name.clone()), event);
                            if x.tasks[t].st != St::Sus {
                                self.set_event(&mut x, t, 1 << self.cfg.events[e].bit);
                            }
                        }
                    }
                }
                "E_OK"
            }
        };
        if status != "E_OK" {
            return Some((status, s.clone()));
        }
        self.dispatch(&mut x);
        Some((status, self.normalize(x)))
    }

    /// Renumbers ranks to positions within each (core, priority) level so
    /// states with equal queue orders compare equal.
    pub fn normalize(&self, mut s: State) -> State {
        let n = s.tasks.len();
        let mut ready: Vec<usize> = (0..n).filter(|&t| s.tasks[t].st == St::Rdy).collect();
        ready.sort_by_key(|&t| {
            (
                self.core(t),
                std::cmp::Reverse(self.prio(t)),
                s.tasks[t].rank,
            )
        });
        for t in 0..n {
            s.tasks[t].rank = 0;
        }
        let mut prev: Option<(usize, u32)> = None;
        let mut pos = 0;
        for t in ready {
            let level = (self.core(t), self.prio(t));
            pos = if prev == Some(level) { pos + 1 } else { 1 };
            prev = Some(level);
            s.tasks[t].rank = pos;
        }
        s.hi = n as i64 + 1;
        s.lo = 0;
        s
    }

    /// (state code, events of extended tasks) per task, and the running
    /// task of each core.
    pub fn observe(&self, s: &State) -> Snapshot {
        let tasks = s
            .tasks
            .iter()
            .zip(&self.cfg.tasks)
            .map(|(t, c)| {
                let code = match t.st {
                    St::Sus => "SUS",
                    St::Rdy => "RDY",
                    St::Run => "RUN",
                    St::Wai => "WAI",
                };
                (code, c.extended.then_some(t.events))
            })
            .collect();
        let cores = (0..self.cfg.cores).map(|c| self.running_on(s, c)).collect();
        (tasks, cores)
    }

    /// Every operation of the default test model, with its invoker.
    pub fn alphabet(&self, allowed: Option<&[&str]>) -> Vec<(Who, Op)> {
        let ok = |name: &str| allowed.is_none_or(|a| a.contains(&name));
        let n = self.cfg.tasks.len();
        let masks: Vec<u32> = self.cfg.events.iter().map(|e| 1 << e.bit).collect();
        let mut task_ops = Vec::new();
        if ok("ActivateTask") {
            task_ops.extend((0..n).map(Op::Activate));
        }
        if ok("TerminateTask") {
            task_ops.push(Op::Terminate);
        }
        if ok("ChainTask") {
            task_ops.extend((0..n).map(Op::Chain));
        }
        if ok("SetEvent") {
            for t in 0..n {
                task_ops.extend(masks.iter().map(|m| Op::SetEvent(t, *m)));
            }
        }
        if ok("ClearEvent") {
            task_ops.extend(masks.iter().map(|m| Op::ClearEvent(*m)));
        }
        if ok("WaitEvent") {
            task_ops.extend(masks.iter().map(|m| Op::WaitEvent(*m)));
        }
        if ok("GetSpinlock") {
            task_ops.extend((0..self.succ.len()).map(Op::GetLock));
        }
        if ok("ReleaseSpinlock") {
            task_ops.extend((0..self.succ.len()).map(Op::ReleaseLock));
        }
        if ok("SetRelAlarm") {
            task_ops.extend((0..self.cfg.alarms.len()).map(|a| Op::SetAlarm(a, 1)));
        }
        if ok("CancelAlarm") {
            task_ops.extend((0..self.cfg.alarms.len()).map(Op::CancelAlarm));
        }
        let mut out: Vec<(Who, Op)> = Vec::new();
        for t in 0..n {
            out.extend(task_ops.iter().map(|op| (Some(t), *op)));
        }
        if ok("ActivateTask") {
            out.extend((0..n).map(|t| (None, Op::Activate(t))));
        }
        if ok("Tick") && !self.cfg.alarms.is_empty() {
            out.push((None, Op::Tick));
        }
        out
    }

    /// Translates a kernel-model state into this simulator's representation.
    pub fn import(&self, k: &ClassicState) -> State {
        let mut s = State {
            tasks: k
                .tasks
                .iter()
                .map(|t| Task {
                    st: match t.state {
                        TaskState::Suspended => St::Sus,
                        TaskState::Ready => St::Rdy,
                        TaskState::Running => St::Run,
                        TaskState::Waiting => St::Wai,
                    },
                    pending: t.pending as u32,
                    events: t.events,
                    wait: t.wait_mask,
                    rank: 0,
                })
                .collect(),
            holder: k
                .lock_holders
                .iter()
                .map(|h| h.map(|t| t.index()))
                .collect(),
            stack: k
                .cores
                .iter()
                .map(|c| c.spinlocks.iter().map(|l| l.index()).collect())
                .collect(),
            alarm: k.alarms.clone(),
            hi: 0,
            lo: 0,
        };
        for c in &k.cores {
            for (_, queue) in c.ready.levels() {
                for (pos, t) in queue.iter().enumerate() {
                    s.tasks[t.index()].rank = pos as i64 + 1;
                }
            }
        }
        self.normalize(s)
    }
}
