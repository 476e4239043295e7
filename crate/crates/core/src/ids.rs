//! Index newtypes for configured objects.
//!
//! Every configured object is addressed by its declaration index. The
//! configuration layer caps each table at 255 entries so indices fit in a
//! byte, which keeps canonical state keys compact.

use core::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(
            Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u8);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }

            #[inline]
            pub fn from_index(index: usize) -> Self {
                debug_assert!(index <= u8::MAX as usize);
                Self(index as u8)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}#{}", stringify!($name), self.0)
            }
        }
    };
}

id_type!(
    /// A task (Classic) or thread (POSIX).
    TaskId
);
id_type!(CoreId);
id_type!(EventId);
id_type!(LockId);
id_type!(AlarmId);
id_type!(MutexId);
id_type!(CondId);

/// Largest number of entries in any configuration table.
pub const MAX_OBJECTS: usize = u8::MAX as usize;
