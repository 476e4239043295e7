use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use mbt_core::testgen::CoverageGoal;
use mbt_core::KernelKind;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ManifestError {
    #[error("depth bound must be at least 1")]
    ZeroDepth,
    #[error("--jobs must be at least 1")]
    ZeroJobs,
    #[error("{what} is required (pass {flag})")]
    Missing {
        what: &'static str,
        flag: &'static str,
    },
    #[error("{} does not exist", .0.display())]
    NotFound(PathBuf),
}

/// Paths and parameters shared by the pipeline phases. Every command reads
/// the fields it needs; a missing one is reported with the flag that sets
/// it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineManifest {
    pub config: Option<PathBuf>,
    pub kernel: Option<KernelKind>,
    pub usecases: Option<PathBuf>,
    pub tree: Option<PathBuf>,
    pub cases: Option<PathBuf>,
    pub programs: Option<PathBuf>,
    pub logs: Option<PathBuf>,
    pub depth: u32,
    pub coverage: CoverageGoal,
    pub jobs: usize,
    pub sut: String,
}

impl Default for PipelineManifest {
    fn default() -> Self {
        PipelineManifest {
            config: None,
            kernel: None,
            usecases: None,
            tree: None,
            cases: None,
            programs: None,
            logs: None,
            depth: 6,
            coverage: CoverageGoal::Edges,
            jobs: 1,
            sut: "reference".to_string(),
        }
    }
}

fn existing<'a>(
    path: &'a Option<PathBuf>,
    what: &'static str,
    flag: &'static str,
) -> Result<&'a Path, ManifestError> {
    let path = path
        .as_deref()
        .ok_or(ManifestError::Missing { what, flag })?;
    if path.exists() {
        Ok(path)
    } else {
        Err(ManifestError::NotFound(path.to_path_buf()))
    }
}

impl PipelineManifest {
    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.depth == 0 {
            return Err(ManifestError::ZeroDepth);
        }
        if self.jobs == 0 {
            return Err(ManifestError::ZeroJobs);
        }
        Ok(())
    }

    pub fn config_path(&self) -> Result<&Path, ManifestError> {
        existing(&self.config, "a configuration", "--config")
    }

    pub fn usecase_dir(&self) -> Result<&Path, ManifestError> {
        existing(&self.usecases, "a use-case directory", "--usecases")
    }

    pub fn tree_path(&self) -> Result<&Path, ManifestError> {
        existing(&self.tree, "a search tree", "--tree")
    }

    pub fn case_dir(&self) -> Result<&Path, ManifestError> {
        existing(&self.cases, "a test-case directory", "--cases")
    }

    pub fn program_dir(&self) -> Result<&Path, ManifestError> {
        existing(&self.programs, "a test-program directory", "--programs")
    }

    pub fn log_dir(&self) -> Result<&Path, ManifestError> {
        self.logs.as_deref().ok_or(ManifestError::Missing {
            what: "a log directory",
            flag: "--logs",
        })
    }
}
