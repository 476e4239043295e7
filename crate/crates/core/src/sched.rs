//! Per-core ready queues: one FIFO per priority level.

use alloc::vec::Vec;

use crate::ids::TaskId;

/// Non-empty FIFO queues keyed by priority, highest level first.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReadyQueues {
    levels: Vec<(u32, Vec<TaskId>)>,
}

impl ReadyQueues {
    fn level_mut(&mut self, priority: u32) -> &mut Vec<TaskId> {
        let pos = match self.levels.binary_search_by(|(p, _)| priority.cmp(p)) {
            Ok(pos) => pos,
            Err(pos) => {
                self.levels.insert(pos, (priority, Vec::new()));
                pos
            }
        };
        &mut self.levels[pos].1
    }

    pub fn push_tail(&mut self, priority: u32, task: TaskId) {
        self.level_mut(priority).push(task);
    }

    pub fn push_head(&mut self, priority: u32, task: TaskId) {
        self.level_mut(priority).insert(0, task);
    }

    /// Priority of the highest non-empty level.
    pub fn top_priority(&self) -> Option<u32> {
        self.levels.first().map(|(p, _)| *p)
    }

    pub fn pop_top(&mut self) -> Option<TaskId> {
        let (_, queue) = self.levels.first_mut()?;
        let task = queue.remove(0);
        if queue.is_empty() {
            self.levels.remove(0);
        }
        Some(task)
    }

    /// Removes `task` wherever it is queued. Returns whether it was found.
    pub fn remove(&mut self, task: TaskId) -> bool {
        for i in 0..self.levels.len() {
            if let Some(pos) = self.levels[i].1.iter().position(|t| *t == task) {
                self.levels[i].1.remove(pos);
                if self.levels[i].1.is_empty() {
                    self.levels.remove(i);
                }
                return true;
            }
        }
        false
    }

    pub fn contains(&self, task: TaskId) -> bool {
        self.levels.iter().any(|(_, q)| q.contains(&task))
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Levels from highest to lowest priority.
    pub fn levels(&self) -> impl Iterator<Item = (u32, &[TaskId])> {
        self.levels.iter().map(|(p, q)| (*p, q.as_slice()))
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        out.push(self.levels.len() as u8);
        for (prio, queue) in &self.levels {
            out.extend_from_slice(&prio.to_le_bytes());
            out.push(queue.len() as u8);
            out.extend(queue.iter().map(|t| t.0));
        }
    }
}
