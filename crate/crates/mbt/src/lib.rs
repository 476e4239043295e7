//! File formats, parallel exploration, suite execution and the `mbt`
//! command line on top of `mbt-core`.

pub mod cache;
pub mod cli;
pub mod external;
pub mod formats;
pub mod manifest;
pub mod parallel;
pub mod runner;
