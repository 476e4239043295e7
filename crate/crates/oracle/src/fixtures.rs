//! Small configurations used across the test suites.

use mbt_core::config::{
    AlarmAction, AlarmConfig, CondvarConfig, EventConfig, KernelConfig, OptionFlags, PosixConfig,
    PosixOptions, PosixTaskConfig, SpinlockConfig, TaskConfig,
};

pub fn task(name: &str, core: usize, priority: u32) -> TaskConfig {
    TaskConfig {
        name: name.into(),
        core,
        priority,
        extended: false,
        max_activations: 1,
        auto_start: false,
    }
}

pub fn classic(cores: usize, tasks: Vec<TaskConfig>) -> KernelConfig {
    KernelConfig {
        cores,
        tasks,
        events: vec![],
        spinlocks: vec![],
        alarms: vec![],
        options: OptionFlags::default(),
    }
}

fn event(name: &str, bit: u8) -> EventConfig {
    EventConfig {
        name: name.into(),
        bit,
    }
}

/// T1 (priority 1, auto-started) and T2 (priority 2) on one core.
pub fn preempt() -> KernelConfig {
    let mut t1 = task("T1", 0, 1);
    t1.auto_start = true;
    classic(1, vec![t1, task("T2", 0, 2)])
}

/// Two priority-2 tasks on core 0; T1 is extended and owns event E1.
pub fn chain_events(clears_events: bool) -> KernelConfig {
    let mut t1 = task("T1", 0, 2);
    t1.extended = true;
    let mut c = classic(1, vec![t1, task("T2", 0, 2)]);
    c.events = vec![event("E1", 0)];
    c.options.chaintask_clears_events = clears_events;
    c
}

/// A high-priority starter H and two equal-priority tasks Ta, Tb.
pub fn fifo() -> KernelConfig {
    let mut h = task("H", 0, 3);
    h.auto_start = true;
    classic(1, vec![h, task("Ta", 0, 2), task("Tb", 0, 2)])
}

/// One task on each of two cores; S1 may be nested around S2 only.
pub fn spinlock() -> KernelConfig {
    let mut t1 = task("T1", 0, 1);
    t1.auto_start = true;
    let mut c = classic(2, vec![t1, task("T2", 1, 1)]);
    c.spinlocks = vec![
        SpinlockConfig {
            name: "S1".into(),
            successors: vec!["S2".into()],
        },
        SpinlockConfig {
            name: "S2".into(),
            successors: vec![],
        },
    ];
    c
}

/// Three tasks on two cores with one event and one alarm.
pub fn desk_classic() -> KernelConfig {
    let mut t1 = task("T1", 0, 1);
    t1.extended = true;
    t1.auto_start = true;
    let mut t2 = task("T2", 0, 2);
    t2.max_activations = 2;
    let mut c = classic(2, vec![t1, t2, task("T3", 1, 1)]);
    c.events = vec![event("E1", 0)];
    c.alarms = vec![AlarmConfig {
        name: "A1".into(),
        action: AlarmAction::SetEvent {
            task: "T1".into(),
            event: "E1".into(),
        },
    }];
    c
}

pub fn thread(name: &str, core: usize, priority: u32, auto_start: bool) -> PosixTaskConfig {
    PosixTaskConfig {
        name: name.into(),
        core,
        priority,
        auto_start,
    }
}

pub fn posix(cores: usize, tasks: Vec<PosixTaskConfig>, mutexes: &[&str]) -> PosixConfig {
    PosixConfig {
        cores,
        tasks,
        mutexes: mutexes.iter().map(|m| (*m).into()).collect(),
        condvars: vec![],
        options: PosixOptions::default(),
    }
}

/// A single auto-started thread and one mutex.
pub fn posix_mini() -> PosixConfig {
    posix(1, vec![thread("P1", 0, 1, true)], &["M1"])
}

/// Low (auto-started), medium and high thread sharing one core.
pub fn posix_boost() -> PosixConfig {
    posix(
        1,
        vec![
            thread("L", 0, 1, true),
            thread("H", 0, 3, false),
            thread("M", 0, 2, false),
        ],
        &["M1"],
    )
}

fn with_condvar(mut c: PosixConfig) -> PosixConfig {
    c.condvars = vec![CondvarConfig {
        name: "C1".into(),
        mutex: "M1".into(),
    }];
    c
}

/// Two condvar waiters of different priority and a low signaller, all
/// auto-started.
pub fn posix_wake() -> PosixConfig {
    with_condvar(posix(
        1,
        vec![
            thread("W1", 0, 2, true),
            thread("W2", 0, 4, true),
            thread("S", 0, 1, true),
        ],
        &["M1"],
    ))
}

/// A low owner S and two later-started contenders of different priority.
pub fn posix_handoff() -> PosixConfig {
    with_condvar(posix(
        1,
        vec![
            thread("S", 0, 1, true),
            thread("W1", 0, 2, false),
            thread("W2", 0, 4, false),
        ],
        &["M1"],
    ))
}
