//! Naive POSIX-subset simulator.
//!
//! Wait sets are per-thread arrival stamps instead of queues, and the
//! effective priority of a thread is the maximum base priority over every
//! thread that reaches it through "blocked on a mutex owned by" links.

use std::cmp::Reverse;

use mbt_core::call::TimeoutOutcome;
use mbt_core::config::PosixConfig;
use mbt_core::observation::TaskState;
use mbt_core::posix::{Blocked, PosixState};
use mbt_core::Call;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum St {
    Sus,
    Rdy,
    Run,
    Wai,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Wait {
    No,
    Mutex(usize, bool),
    Timed(usize),
    Cond(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Thread {
    pub st: St,
    pub base: u32,
    pub eff: u32,
    pub wait: Wait,
    pub stamp: i64,
    pub rank: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct State {
    pub threads: Vec<Thread>,
    pub owner: Vec<Option<usize>>,
    clock: i64,
    low: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Op {
    Start(usize),
    Fire(usize),
    Lock(usize),
    Try(usize),
    Timed(usize, bool),
    Unlock(usize),
    Wait(usize),
    Signal(usize),
    Prio(usize, i32),
}

impl Op {
    pub fn from_call(call: &Call) -> Option<Op> {
        Some(match *call {
            Call::ActivateTask(t) => Op::Start(t.index()),
            Call::TimeoutFire(t) => Op::Fire(t.index()),
            Call::MutexLock(m) => Op::Lock(m.index()),
            Call::MutexTrylock(m) => Op::Try(m.index()),
            Call::MutexTimedlock(m, o) => Op::Timed(m.index(), o == TimeoutOutcome::WillTimeout),
            Call::MutexUnlock(m) => Op::Unlock(m.index()),
            Call::CondWait(c) => Op::Wait(c.index()),
            Call::CondSignal(c) => Op::Signal(c.index()),
            Call::SetSchedPrio(t, p) => Op::Prio(t.index(), p),
            _ => return None,
        })
    }
}

pub type Who = Option<usize>;

pub struct Sim {
    cfg: PosixConfig,
    cond_mutex: Vec<usize>,
}

/// Effective priorities by closure over the lending relation.
pub fn closure_priorities(threads: &[Thread], owner: &[Option<usize>]) -> Vec<u32> {
    let n = threads.len();
    let lends_to = |u: usize| match threads[u].wait {
        Wait::Mutex(m, _) | Wait::Timed(m) => owner[m],
        _ => None,
    };
    (0..n)
        .map(|t| {
            (0..n)
                .filter(|&u| {
                    let mut cur = u;
                    for _ in 0..=n {
                        if cur == t {
                            return true;
                        }
                        match lends_to(cur) {
                            Some(next) => cur = next,
                            None => return false,
                        }
                    }
                    false
                })
                .map(|u| threads[u].base)
                .max()
                .unwrap_or(threads[t].base)
        })
        .collect()
}

impl Sim {
    pub fn new(cfg: &PosixConfig) -> Sim {
        let cond_mutex = cfg
            .condvars
            .iter()
            .map(|c| {
                cfg.mutexes
                    .iter()
                    .position(|m| *m == c.mutex)
                    .expect("declared")
            })
            .collect();
        Sim {
            cfg: cfg.clone(),
            cond_mutex,
        }
    }

    fn core(&self, t: usize) -> usize {
        self.cfg.tasks[t].core
    }

    pub fn init(&self) -> State {
        let mut s = State {
            threads: self
                .cfg
                .tasks
                .iter()
                .map(|t| Thread {
                    st: St::Sus,
                    base: t.priority,
                    eff: t.priority,
                    wait: Wait::No,
                    stamp: 0,
                    rank: 0,
                })
                .collect(),
            owner: vec![None; self.cfg.mutexes.len()],
            clock: 0,
            low: 0,
        };
        for t in 0..s.threads.len() {
            if self.cfg.tasks[t].auto_start {
                self.ready(&mut s, t);
            }
        }
        self.dispatch(&mut s);
        self.normalize(s)
    }

    fn ready(&self, s: &mut State, t: usize) {
        s.clock += 1;
        let th = &mut s.threads[t];
        th.st = St::Rdy;
        th.wait = Wait::No;
        th.rank = s.clock;
    }

    fn block(&self, s: &mut State, t: usize, w: Wait) {
        s.clock += 1;
        let th = &mut s.threads[t];
        th.st = St::Wai;
        th.wait = w;
        th.stamp = s.clock;
    }

    fn dispatch(&self, s: &mut State) {
        for core in 0..self.cfg.cores {
            let on = |t: &usize| self.core(*t) == core;
            let best = (0..s.threads.len())
                .filter(on)
                .filter(|&t| s.threads[t].st == St::Rdy)
                .min_by_key(|&t| (Reverse(s.threads[t].eff), s.threads[t].rank));
            let Some(best) = best else { continue };
            let running = (0..s.threads.len())
                .filter(on)
                .find(|&t| s.threads[t].st == St::Run);
            match running {
                Some(r) if s.threads[best].eff <= s.threads[r].eff => {}
                Some(r) => {
                    s.low -= 1;
                    s.threads[r].st = St::Rdy;
                    s.threads[r].rank = s.low;
                    s.threads[best].st = St::Run;
                }
                None => s.threads[best].st = St::Run,
            }
        }
    }

    fn refresh(&self, s: &mut State) {
        let eff = closure_priorities(&s.threads, &s.owner);
        for (t, e) in eff.into_iter().enumerate() {
            if s.threads[t].eff != e {
                s.threads[t].eff = e;
                if s.threads[t].st == St::Rdy {
                    s.clock += 1;
                    s.threads[t].rank = s.clock;
                }
            }
        }
    }

    /// Highest effective priority, earliest arrival among `pred`.
    fn choose(&self, s: &State, pred: impl Fn(Wait) -> bool) -> Option<usize> {
        (0..s.threads.len())
            .filter(|&t| s.threads[t].st == St::Wai && pred(s.threads[t].wait))
            .min_by_key(|&t| (Reverse(s.threads[t].eff), s.threads[t].stamp))
    }

    fn release(&self, s: &mut State, m: usize) {
        match self.choose(s, |w| matches!(w, Wait::Mutex(x, _) if x == m)) {
            Some(w) => {
                s.owner[m] = Some(w);
                self.ready(s, w);
            }
            None => s.owner[m] = None,
        }
    }

    pub fn step(&self, s: &State, who: Who, op: Op) -> Option<(&'static str, State)> {
        let external = matches!(op, Op::Start(_) | Op::Fire(_));
        let me = match who {
            None if external => usize::MAX,
            None => return None,
            Some(_) if external => return None,
            Some(t) => {
                if s.threads.get(t)?.st != St::Run {
                    return None;
                }
                t
            }
        };
        let n = s.threads.len();
        let nm = s.owner.len();
        let mut x = s.clone();
        let status = match op {
            Op::Start(t) => {
                if t >= n || s.threads[t].st != St::Sus {
                    return Some(("EINVAL", s.clone()));
                }
                self.ready(&mut x, t);
                self.dispatch(&mut x);
                return Some(("OK", self.normalize(x)));
            }
            Op::Fire(t) => {
                if t >= n || !matches!(s.threads[t].wait, Wait::Timed(_)) {
                    return None;
                }
                self.ready(&mut x, t);
                "ETIMEDOUT"
            }
            Op::Lock(m) | Op::Timed(m, _) => {
                if m >= nm {
                    return Some(("EINVAL", s.clone()));
                }
                match s.owner[m] {
                    Some(o) if o == me => return Some(("EDEADLK", s.clone())),
                    None => {
                        x.owner[m] = Some(me);
                        "OK"
                    }
                    Some(_) => match op {
                        Op::Timed(_, true) => {
                            self.block(&mut x, me, Wait::Timed(m));
                            "ETIMEDOUT"
                        }
                        Op::Timed(_, false) => {
                            self.block(&mut x, me, Wait::Mutex(m, true));
                            "OK"
                        }
                        _ => {
                            self.block(&mut x, me, Wait::Mutex(m, false));
                            "OK"
                        }
                    },
                }
            }
            Op::Try(m) => {
                if m >= nm {
                    return Some(("EINVAL", s.clone()));
                }
                if s.owner[m].is_some() {
                    return Some(("EBUSY", s.clone()));
                }
                x.owner[m] = Some(me);
                "OK"
            }
            Op::Unlock(m) => {
                if m >= nm {
                    return Some(("EINVAL", s.clone()));
                }
                if s.owner[m] != Some(me) {
                    return Some(("EPERM", s.clone()));
                }
                self.release(&mut x, m);
                "OK"
            }
            Op::Wait(c) => {
                if c >= self.cond_mutex.len() {
                    return Some(("EINVAL", s.clone()));
                }
                let m = self.cond_mutex[c];
                if s.owner[m] != Some(me) {
                    return Some(("EPERM", s.clone()));
                }
                self.release(&mut x, m);
                self.block(&mut x, me, Wait::Cond(c));
                "OK"
            }
            Op::Signal(c) => {
                if c >= self.cond_mutex.len() {
                    return Some(("EINVAL", s.clone()));
                }
                let Some(w) = self.choose(s, |w| w == Wait::Cond(c)) else {
                    return Some(("OK", s.clone()));
                };
                let m = self.cond_mutex[c];
                if s.owner[m].is_none() {
                    x.owner[m] = Some(w);
                    self.ready(&mut x, w);
                } else {
                    self.block(&mut x, w, Wait::Mutex(m, false));
                }
                "OK"
            }
            Op::Prio(t, p) => {
                if t >= n || p < 0 {
                    return Some(("EINVAL", s.clone()));
                }
                x.threads[t].base = p as u32;
                self.refresh(&mut x);
                if x.threads[t].st == St::Rdy {
                    x.clock += 1;
                    x.threads[t].rank = x.clock;
                }
                self.dispatch(&mut x);
                return Some(("OK", self.normalize(x)));
            }
        };
        self.refresh(&mut x);
        self.dispatch(&mut x);
        Some((status, self.normalize(x)))
    }

    /// Replaces stamps and ranks by positions within their wait set or
    /// (core, priority) level.
    pub fn normalize(&self, mut s: State) -> State {
        let n = s.threads.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&t| {
            let th = &s.threads[t];
            let group = match (th.st, th.wait) {
                (St::Rdy, _) => (0, self.core(t), u32::MAX - th.eff),
                (St::Wai, Wait::Mutex(m, _)) => (1, m, 0),
                (St::Wai, Wait::Cond(c)) => (2, c, 0),
                _ => (3, t, 0),
            };
            let key = if th.st == St::Rdy { th.rank } else { th.stamp };
            (group, key)
        });
        let mut prev = None;
        let mut pos = 0;
        for t in order {
            let th = &s.threads[t];
            let group = match (th.st, th.wait) {
                (St::Rdy, _) => Some((0, self.core(t), th.eff)),
                (St::Wai, Wait::Mutex(m, _)) => Some((1, m, 0)),
                (St::Wai, Wait::Cond(c)) => Some((2, c, 0)),
                _ => None,
            };
            pos = if group.is_some() && group == prev {
                pos + 1
            } else {
                1
            };
            prev = group;
            let th = &mut s.threads[t];
            th.rank = 0;
            th.stamp = 0;
            match group {
                Some((0, _, _)) => th.rank = pos,
                Some(_) => th.stamp = pos,
                None => {}
            }
        }
        s.clock = n as i64 + 1;
        s.low = 0;
        s
    }

    pub fn observe(&self, s: &State) -> (Vec<&'static str>, Vec<Option<usize>>) {
        let tasks = s
            .threads
            .iter()
            .map(|t| match t.st {
                St::Sus => "SUS",
                St::Rdy => "RDY",
                St::Run => "RUN",
                St::Wai => "WAI",
            })
            .collect();
        let cores = (0..self.cfg.cores)
            .map(|c| {
                (0..s.threads.len()).find(|&t| self.core(t) == c && s.threads[t].st == St::Run)
            })
            .collect();
        (tasks, cores)
    }

    /// Operations of the default test model. `priorities` overrides the
    /// distinct declared priorities used for `pthread_setschedprio`.
    pub fn alphabet(
        &self,
        allowed: Option<&[&str]>,
        priorities: Option<&[i32]>,
        s: &State,
    ) -> Vec<(Who, Op)> {
        let ok = |name: &str| allowed.is_none_or(|a| a.contains(&name));
        let n = self.cfg.tasks.len();
        let nm = self.cfg.mutexes.len();
        let nc = self.cfg.condvars.len();
        let mut declared: Vec<i32> = self.cfg.tasks.iter().map(|t| t.priority as i32).collect();
        declared.sort();
        declared.dedup();
        let prios = priorities.map(|p| p.to_vec()).unwrap_or(declared);
        let mut ops = Vec::new();
        if ok("mutex_lock") {
            ops.extend((0..nm).map(Op::Lock));
        }
        if ok("mutex_trylock") {
            ops.extend((0..nm).map(Op::Try));
        }
        if ok("mutex_timedlock") {
            for m in 0..nm {
                ops.push(Op::Timed(m, false));
                ops.push(Op::Timed(m, true));
            }
        }
        if ok("mutex_unlock") {
            ops.extend((0..nm).map(Op::Unlock));
        }
        if ok("cond_wait") {
            ops.extend((0..nc).map(Op::Wait));
        }
        if ok("cond_signal") {
            ops.extend((0..nc).map(Op::Signal));
        }
        if ok("setschedprio") {
            for t in 0..n {
                ops.extend(prios.iter().map(|p| Op::Prio(t, *p)));
            }
        }
        let mut out: Vec<(Who, Op)> = Vec::new();
        for t in 0..n {
            out.extend(ops.iter().map(|op| (Some(t), *op)));
        }
        if ok("ActivateTask") {
            out.extend(
                (0..n)
                    .filter(|&t| !self.cfg.tasks[t].auto_start)
                    .map(|t| (None, Op::Start(t))),
            );
        }
        if ok("TimeoutFire") {
            out.extend(
                (0..n)
                    .filter(|&t| matches!(s.threads[t].wait, Wait::Timed(_)))
                    .map(|t| (None, Op::Fire(t))),
            );
        }
        out
    }

    pub fn import(&self, k: &PosixState) -> State {
        let mut s = State {
            threads: k
                .tasks
                .iter()
                .map(|t| Thread {
                    st: match t.state {
                        TaskState::Suspended => St::Sus,
                        TaskState::Ready => St::Rdy,
                        TaskState::Running => St::Run,
                        TaskState::Waiting => St::Wai,
                    },
                    base: t.base,
                    eff: t.effective,
                    wait: match t.blocked {
                        Blocked::None => Wait::No,
                        Blocked::Mutex { mutex, timed } => Wait::Mutex(mutex.index(), timed),
                        Blocked::Timed(m) => Wait::Timed(m.index()),
                        Blocked::Cond(c) => Wait::Cond(c.index()),
                    },
                    stamp: 0,
                    rank: 0,
                })
                .collect(),
            owner: k
                .mutexes
                .iter()
                .map(|m| m.owner.map(|t| t.index()))
                .collect(),
            clock: 0,
            low: 0,
        };
        for m in &k.mutexes {
            for (i, t) in m.waiters.iter().enumerate() {
                s.threads[t.index()].stamp = i as i64 + 1;
            }
        }
        for c in &k.condvars {
            for (i, t) in c.iter().enumerate() {
                s.threads[t.index()].stamp = i as i64 + 1;
            }
        }
        for c in &k.cores {
            for (_, q) in c.ready.levels() {
                for (i, t) in q.iter().enumerate() {
                    s.threads[t.index()].rank = i as i64 + 1;
                }
            }
        }
        self.normalize(s)
    }
}
