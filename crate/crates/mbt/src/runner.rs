use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use mbt_core::defect::{self, DefectSpec};
use mbt_core::harness::{
    mutant_sut, reference_sut, run_program, RunLog, RunVerdict, SutAdapter, SutError,
};
use mbt_core::testgen::TestProgram;
use mbt_core::ConfigDoc;

use crate::external::ExternalSut;
use crate::formats;
use crate::parallel;

#[derive(Debug, Error)]
pub enum SutSpecError {
    #[error("unknown SUT selector `{0}`; expected reference, mutant:ID or external:COMMAND")]
    Selector(String),
    #[error(transparent)]
    Defect(#[from] defect::DefectError),
}

/// Which implementation a suite runs against.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SutSpec {
    Reference,
    Mutant(DefectSpec),
    /// Shell command starting a protocol adapter.
    External(String),
}

impl SutSpec {
    pub fn parse(text: &str) -> Result<Self, SutSpecError> {
        if text == "reference" {
            return Ok(SutSpec::Reference);
        }
        match text.split_once(':') {
            Some(("mutant", id)) => Ok(SutSpec::Mutant(defect::lookup(id)?)),
            Some(("external", cmd)) if !cmd.trim().is_empty() => {
                Ok(SutSpec::External(cmd.to_string()))
            }
            _ => Err(SutSpecError::Selector(text.to_string())),
        }
    }

    /// Fails when a mutant does not apply to the configuration's kernel.
    pub fn check(&self, config: &ConfigDoc) -> Result<(), SutSpecError> {
        match self {
            SutSpec::Mutant(spec) if !spec.defect.applies_to(config.kind()) => Err(
                defect::DefectError::Inapplicable(spec.id.clone(), config.kind().as_str()).into(),
            ),
            _ => Ok(()),
        }
    }

    pub fn instantiate(&self, config: &ConfigDoc) -> Result<Box<dyn SutAdapter>, SutError> {
        let infra = |e: &dyn std::fmt::Display| SutError::Infrastructure(e.to_string());
        Ok(match self {
            SutSpec::Reference => Box::new(reference_sut(config).map_err(|e| infra(&e))?),
            SutSpec::Mutant(spec) => {
                Box::new(mutant_sut(&spec.defect, config).map_err(|e| infra(&e))?)
            }
            SutSpec::External(cmd) => Box::new(ExternalSut::spawn(cmd).map_err(|e| infra(&e))?),
        })
    }
}

fn attempt(program: &TestProgram, config: &ConfigDoc, sut: &SutSpec) -> RunLog {
    let run = catch_unwind(AssertUnwindSafe(|| match sut.instantiate(config) {
        Ok(mut s) => run_program(program, config, &mut *s),
        Err(e) => RunLog::infrastructure(&program.id, e.to_string()),
    }));
    run.unwrap_or_else(|_| RunLog::infrastructure(&program.id, "SUT worker panicked".to_string()))
}

/// Runs one program on a fresh SUT, retrying once after an infrastructure
/// error.
pub fn run_one(program: &TestProgram, config: &ConfigDoc, sut: &SutSpec) -> RunLog {
    let start = Instant::now();
    let mut log = attempt(program, config, sut);
    if log.verdict == RunVerdict::Error {
        log = attempt(program, config, sut);
        log.attempts = 2;
    }
    log.wall_time_us = start.elapsed().as_micros() as u64;
    log
}

/// Runs `programs` on `jobs` workers. Each finished log is appended to
/// `sink` as it completes; the returned logs are ordered by program id.
pub fn run_suite<W: Write + Send>(
    programs: &[TestProgram],
    config: &ConfigDoc,
    sut: &SutSpec,
    jobs: usize,
    sink: Option<&Mutex<W>>,
) -> Result<Vec<RunLog>, rayon::ThreadPoolBuildError> {
    let pool = parallel::pool(jobs)?;
    let mut logs: Vec<RunLog> = pool.install(|| {
        programs
            .par_iter()
            .map(|p| {
                let log = run_one(p, config, sut);
                if let Some(sink) = sink {
                    let mut w = sink.lock().unwrap_or_else(|e| e.into_inner());
                    let _ = w
                        .write_all(formats::log_line(&log).as_bytes())
                        .and_then(|()| w.flush());
                }
                log
            })
            .collect()
    });
    logs.sort_by(|a, b| a.program.cmp(&b.program));
    Ok(logs)
}

/// The `n` programs with the fewest steps, ties broken by id, returned in
/// id order.
pub fn preliminary(programs: &[TestProgram], n: usize) -> Vec<TestProgram> {
    let mut by_size: Vec<&TestProgram> = programs.iter().collect();
    by_size.sort_by(|a, b| (a.steps, &a.id).cmp(&(b.steps, &b.id)));
    let mut chosen: Vec<TestProgram> = by_size.into_iter().take(n).cloned().collect();
    chosen.sort_by(|a, b| a.id.cmp(&b.id));
    chosen
}
