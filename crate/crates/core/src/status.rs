//! Return codes of both API families.

use core::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Classic API status codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StatusCode {
    Ok,
    Id,
    Limit,
    State,
    NoFunc,
    Value,
    NestingDeadlock,
    InterferenceDeadlock,
    /// Cross-core spinlock contention. The caller would spin; the model
    /// reports it instead and leaves the state unchanged.
    SpinBusy,
}

impl StatusCode {
    pub const ALL: [StatusCode; 9] = [
        StatusCode::Ok,
        StatusCode::Id,
        StatusCode::Limit,
        StatusCode::State,
        StatusCode::NoFunc,
        StatusCode::Value,
        StatusCode::NestingDeadlock,
        StatusCode::InterferenceDeadlock,
        StatusCode::SpinBusy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StatusCode::Ok => "E_OK",
            StatusCode::Id => "E_OS_ID",
            StatusCode::Limit => "E_OS_LIMIT",
            StatusCode::State => "E_OS_STATE",
            StatusCode::NoFunc => "E_OS_NOFUNC",
            StatusCode::Value => "E_OS_VALUE",
            StatusCode::NestingDeadlock => "E_OS_NESTING_DEADLOCK",
            StatusCode::InterferenceDeadlock => "E_OS_INTERFERENCE_DEADLOCK",
            StatusCode::SpinBusy => "E_SPIN_BUSY",
        }
    }
}

/// POSIX-subset return codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PosixStatus {
    Ok,
    Ebusy,
    Einval,
    Edeadlk,
    Etimedout,
    Eperm,
}

impl PosixStatus {
    pub const ALL: [PosixStatus; 6] = [
        PosixStatus::Ok,
        PosixStatus::Ebusy,
        PosixStatus::Einval,
        PosixStatus::Edeadlk,
        PosixStatus::Etimedout,
        PosixStatus::Eperm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PosixStatus::Ok => "OK",
            PosixStatus::Ebusy => "EBUSY",
            PosixStatus::Einval => "EINVAL",
            PosixStatus::Edeadlk => "EDEADLK",
            PosixStatus::Etimedout => "ETIMEDOUT",
            PosixStatus::Eperm => "EPERM",
        }
    }
}

/// A status from either API family. Serialized as its symbolic name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Status {
    Classic(StatusCode),
    Posix(PosixStatus),
}

impl Status {
    pub const E_OK: Status = Status::Classic(StatusCode::Ok);
    pub const OK: Status = Status::Posix(PosixStatus::Ok);

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Classic(c) => c.as_str(),
            Status::Posix(p) => p.as_str(),
        }
    }

    pub fn parse(text: &str) -> Option<Status> {
        StatusCode::ALL
            .iter()
            .find(|c| c.as_str() == text)
            .map(|c| Status::Classic(*c))
            .or_else(|| {
                PosixStatus::ALL
                    .iter()
                    .find(|p| p.as_str() == text)
                    .map(|p| Status::Posix(*p))
            })
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<StatusCode> for Status {
    fn from(c: StatusCode) -> Self {
        Status::Classic(c)
    }
}

impl From<PosixStatus> for Status {
    fn from(p: PosixStatus) -> Self {
        Status::Posix(p)
    }
}

impl Serialize for Status {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Status {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct StatusVisitor;
        impl Visitor<'_> for StatusVisitor {
            type Value = Status;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a status name such as E_OK or EBUSY")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Status, E> {
                Status::parse(v).ok_or_else(|| E::custom(format_args!("unknown status `{v}`")))
            }
        }
        d.deserialize_str(StatusVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_parse_back() {
        for c in StatusCode::ALL {
            assert_eq!(Status::parse(c.as_str()), Some(Status::Classic(c)));
        }
        for p in PosixStatus::ALL {
            assert_eq!(Status::parse(p.as_str()), Some(Status::Posix(p)));
        }
        assert_eq!(Status::parse("E_NOPE"), None);
    }
}
