//! Content fingerprints that let a pipeline phase skip work whose inputs
//! and outputs are unchanged since its last run.
//!
//! A file output `out.json` keeps its stamp in `out.json.sha256`; a
//! directory output keeps it in `DIR/.mbt-stamp`. A stamp records the
//! fingerprint of the inputs and of the outputs it produced, so editing
//! either side invalidates it.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub const DIR_STAMP: &str = ".mbt-stamp";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Incremental fingerprint over labelled parts.
#[derive(Clone, Default)]
pub struct Fingerprint(Sha256);

impl Fingerprint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Length-prefixes both parts so that distinct part sequences never
    /// collide by concatenation.
    pub fn add(mut self, label: &str, bytes: &[u8]) -> Self {
        for part in [label.as_bytes(), bytes] {
            self.0.update((part.len() as u64).to_le_bytes());
            self.0.update(part);
        }
        self
    }

    pub fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

/// Fingerprint of every regular file in `dir` except the stamp, in name
/// order.
pub fn dir_fingerprint(dir: &Path) -> io::Result<String> {
    let mut fp = Fingerprint::new();
    for path in sorted_files(dir)? {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if name != DIR_STAMP {
            fp = fp.add(name, &fs::read(&path)?);
        }
    }
    Ok(fp.finish())
}

pub fn sorted_files(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            files.push(entry.path());
        }
    }
    files.sort();
    Ok(files)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Output<'a> {
    File(&'a Path),
    Dir(&'a Path),
}

impl Output<'_> {
    fn stamp_path(&self) -> PathBuf {
        match self {
            Output::File(p) => {
                let mut s = p.as_os_str().to_owned();
                s.push(".sha256");
                PathBuf::from(s)
            }
            Output::Dir(p) => p.join(DIR_STAMP),
        }
    }

    fn fingerprint(&self) -> io::Result<String> {
        match self {
            Output::File(p) => Ok(sha256_hex(&fs::read(p)?)),
            Output::Dir(p) => dir_fingerprint(p),
        }
    }
}

fn stamp_text(inputs: &str, outputs: &str) -> String {
    format!("inputs {inputs}\noutputs {outputs}\n")
}

/// Whether `output` was produced from inputs with fingerprint `inputs`
/// and has not been modified since.
pub fn is_fresh(output: &Output<'_>, inputs: &str) -> bool {
    let Ok(stamp) = fs::read_to_string(output.stamp_path()) else {
        return false;
    };
    match output.fingerprint() {
        Ok(current) => stamp == stamp_text(inputs, &current),
        Err(_) => false,
    }
}

pub fn write_stamp(output: &Output<'_>, inputs: &str) -> io::Result<()> {
    let current = output.fingerprint()?;
    fs::write(output.stamp_path(), stamp_text(inputs, &current))
}

pub fn clear_stamp(output: &Output<'_>) -> io::Result<()> {
    match fs::remove_file(output.stamp_path()) {
        Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
        _ => Ok(()),
    }
}
