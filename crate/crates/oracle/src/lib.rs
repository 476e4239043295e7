//! Independent reference implementations used to check the kernel models.
//!
//! Nothing here is tuned for speed. The simulators use a different state
//! representation from the models so that a shared bug is unlikely, and
//! the enumerator walks every step sequence (memoised on minimum depth).

pub mod classic;
pub mod fixtures;
pub mod gen;
pub mod posix;

use std::collections::BTreeMap;

/// Reachable states with their minimum distance from the start, and the
/// number of accepted steps leaving states closer than the bound.
#[derive(Debug, Clone)]
pub struct Reach<S> {
    pub distance: BTreeMap<S, u32>,
    pub edges: usize,
}

impl<S> Reach<S> {
    pub fn nodes(&self) -> usize {
        self.distance.len()
    }
}

pub fn enumerate<S, M>(
    start: S,
    depth: u32,
    moves: impl Fn(&S) -> Vec<M>,
    apply: impl Fn(&S, &M) -> Option<S>,
) -> Reach<S>
where
    S: Clone + Ord,
{
    fn visit<S: Clone + Ord, M>(
        s: S,
        d: u32,
        bound: u32,
        seen: &mut BTreeMap<S, u32>,
        moves: &dyn Fn(&S) -> Vec<M>,
        apply: &dyn Fn(&S, &M) -> Option<S>,
    ) {
        if seen.get(&s).is_some_and(|&best| best <= d) {
            return;
        }
        seen.insert(s.clone(), d);
        if d == bound {
            return;
        }
        for m in moves(&s) {
            if let Some(next) = apply(&s, &m) {
                visit(next, d + 1, bound, seen, moves, apply);
            }
        }
    }
    let mut distance = BTreeMap::new();
    visit(start, 0, depth, &mut distance, &moves, &apply);
    let edges = distance
        .iter()
        .filter(|(_, d)| **d < depth)
        .map(|(s, _)| moves(s).iter().filter(|m| apply(s, m).is_some()).count())
        .sum();
    Reach { distance, edges }
}

pub fn classic_reach(
    sim: &classic::Sim,
    allowed: Option<&[&str]>,
    depth: u32,
) -> Reach<classic::State> {
    let alphabet = sim.alphabet(allowed);
    enumerate(
        sim.init(),
        depth,
        |_| alphabet.clone(),
        |s, (who, op)| sim.step(s, *who, *op).map(|(_, n)| n),
    )
}

pub fn posix_reach(
    sim: &posix::Sim,
    allowed: Option<&[&str]>,
    priorities: Option<&[i32]>,
    depth: u32,
) -> Reach<posix::State> {
    enumerate(
        sim.init(),
        depth,
        |s| sim.alphabet(allowed, priorities, s),
        |s, (who, op)| sim.step(s, *who, *op).map(|(_, n)| n),
    )
}
