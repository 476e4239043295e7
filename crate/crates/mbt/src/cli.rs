//! The `mbt` command line. Exit status: 0 when everything passed, 1 when
//! a flaw was found (a use case or test assertion failed, or a mutant
//! survived), 2 on invalid input, exhausted budgets or infrastructure
//! failures.

use std::fs;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use mbt_core::defect::{self, DefectKind};
use mbt_core::explorer::{explore_with, Budget, ExploreSpec, SearchTree};
use mbt_core::harness::{self, RunLog};
use mbt_core::testgen::{
    allocate_to_tasks, generate_test_cases, CoverageGoal, TestCase, TestProgram,
};
use mbt_core::usecase::{check_usecase, config_reference, parse_usecase};
use mbt_core::{AnyKernel, Api, ConfigDoc, Invocable, KernelKind};

use crate::cache::{self, Fingerprint, Output};
use crate::formats;
use crate::manifest::{ManifestError, PipelineManifest};
use crate::parallel::RayonMap;
use crate::runner::{self, SutSpec};

pub const SEEDED_DEFECT_ENV: &str = "MBT_SEEDED_DEFECT";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FLAW: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "mbt",
    version,
    about = "Model-based conformance testing for OS schedulers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check use-case models against the kernel model.
    Check(Flags),
    /// Build the bounded search tree of the kernel model.
    Explore(Flags),
    /// Generate test cases covering the search tree.
    Gen(Flags),
    /// Allocate test cases to per-task test programs.
    Progen(Flags),
    /// Run test programs against a SUT.
    Run(Flags),
    /// Cluster failing runs into a flaw report.
    Report(Flags),
    /// Measure the generated suite against every applicable seeded defect.
    Mutants(Flags),
    /// Serve the model (or a mutant) over the external SUT protocol on stdio.
    #[command(hide = true)]
    ServeSut {
        #[arg(long)]
        defect: Option<String>,
    },
}

/// Options shared by all pipeline commands. Values given on the command
/// line override those of `--manifest`.
#[derive(Args, Debug, Default, Clone)]
pub struct Flags {
    /// JSON pipeline manifest supplying defaults for the other options.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind)]
    pub kernel: Option<KernelKind>,
    #[arg(long)]
    pub usecases: Option<PathBuf>,
    #[arg(long)]
    pub depth: Option<u32>,
    #[arg(long, value_parser = parse_goal)]
    pub coverage: Option<CoverageGoal>,
    /// Output file (explore, report) or directory (gen, progen).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// reference | mutant:ID | external:COMMAND
    #[arg(long)]
    pub sut: Option<String>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Run only the N programs with the fewest steps.
    #[arg(long)]
    pub preliminary: Option<usize>,
    #[arg(long)]
    pub logs: Option<PathBuf>,
    #[arg(long)]
    pub tree: Option<PathBuf>,
    #[arg(long)]
    pub cases: Option<PathBuf>,
    #[arg(long)]
    pub programs: Option<PathBuf>,
    /// Comma-separated APIs the model may invoke (default: all; an empty
    /// list allows none).
    #[arg(long, value_parser = parse_apis)]
    pub apis: Option<ApiList>,
    #[arg(long)]
    pub max_nodes: Option<usize>,
    #[arg(long)]
    pub max_edges: Option<usize>,
    /// Rebuild outputs even when their stamp says they are up to date.
    #[arg(long)]
    pub force: bool,
}

fn parse_kind(s: &str) -> Result<KernelKind, String> {
    KernelKind::parse(s).ok_or_else(|| format!("expected classic or posix, got `{s}`"))
}

fn parse_goal(s: &str) -> Result<CoverageGoal, String> {
    CoverageGoal::parse(s).ok_or_else(|| format!("expected states or edges, got `{s}`"))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ApiList(pub Vec<Api>);

fn parse_apis(s: &str) -> Result<ApiList, String> {
    s.split(',')
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(|a| Api::parse(a).ok_or_else(|| format!("unknown API `{a}`")))
        .collect::<Result<_, _>>()
        .map(ApiList)
}

/// A failed command: the message goes to stderr, the code becomes the
/// exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

type Outcome = Result<i32, Failure>;

impl From<ManifestError> for Failure {
    fn from(e: ManifestError) -> Self {
        Failure {
            code: EXIT_ERROR,
            message: e.to_string(),
        }
    }
}

fn fail<T>(message: impl std::fmt::Display) -> Result<T, Failure> {
    Err(Failure {
        code: EXIT_ERROR,
        message: message.to_string(),
    })
}

trait OrFail<T> {
    fn or_fail(self, context: impl std::fmt::Display) -> Result<T, Failure>;
}

impl<T, E: std::fmt::Display> OrFail<T> for Result<T, E> {
    fn or_fail(self, context: impl std::fmt::Display) -> Result<T, Failure> {
        self.or_else(|e| fail(format!("{context}: {e}")))
    }
}

pub fn main() -> i32 {
    run(Cli::parse())
}

pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::ServeSut { defect } => serve_sut(defect.as_deref()),
        Command::Check(f) => with_manifest(&f, cmd_check),
        Command::Explore(f) => with_manifest(&f, |m| cmd_explore(m, &f)),
        Command::Gen(f) => with_manifest(&f, |m| cmd_gen(m, &f)),
        Command::Progen(f) => with_manifest(&f, |m| cmd_progen(m, &f)),
        Command::Run(f) => with_manifest(&f, |m| cmd_run(m, &f)),
        Command::Report(f) => with_manifest(&f, |m| cmd_report(m, &f)),
        Command::Mutants(f) => with_manifest(&f, |m| cmd_mutants(m, &f)),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn with_manifest(flags: &Flags, command: impl FnOnce(&PipelineManifest) -> Outcome) -> Outcome {
    let manifest = manifest_for(flags)?;
    manifest.validate().or_fail("invalid options")?;
    command(&manifest)
}

pub fn manifest_for(flags: &Flags) -> Result<PipelineManifest, Failure> {
    let mut m = match &flags.manifest {
        None => PipelineManifest::default(),
        Some(path) => {
            let text = fs::read_to_string(path).or_fail(format!("reading {}", path.display()))?;
            serde_json::from_str(&text).or_fail(format!("parsing {}", path.display()))?
        }
    };
    let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
        if v.is_some() {
            slot.clone_from(v);
        }
    };
    set(&mut m.config, &flags.config);
    set(&mut m.usecases, &flags.usecases);
    set(&mut m.tree, &flags.tree);
    set(&mut m.cases, &flags.cases);
    set(&mut m.programs, &flags.programs);
    set(&mut m.logs, &flags.logs);
    if flags.kernel.is_some() {
        m.kernel = flags.kernel;
    }
    if let Some(d) = flags.depth {
        m.depth = d;
    }
    if let Some(c) = flags.coverage {
        m.coverage = c;
    }
    if let Some(j) = flags.jobs {
        m.jobs = j;
    }
    if let Some(s) = &flags.sut {
        m.sut.clone_from(s);
    }
    Ok(m)
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).or_fail(format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).or_fail(format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).or_fail(format!("writing {}", path.display()))
}

fn load_config(path: &Path, kind: Option<KernelKind>) -> Result<(ConfigDoc, String), Failure> {
    let doc = formats::parse_config(&read(path)?, kind).or_fail(path.display())?;
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default()
        .to_string();
    Ok((doc, name))
}

fn kernel_for(doc: &ConfigDoc, defect: Option<&DefectKind>) -> Result<AnyKernel, Failure> {
    match defect {
        None => AnyKernel::new(doc),
        Some(d) => AnyKernel::with_defect(doc, d.clone()),
    }
    .or_fail("building the kernel model")
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let files = cache::sorted_files(dir).or_fail(format!("listing {}", dir.display()))?;
    Ok(files
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect())
}

/// Removes generated `tc-*.json` files so that a smaller suite does not
/// leave stale members behind.
fn clear_generated(dir: &Path) -> Result<(), Failure> {
    if !dir.exists() {
        return fs::create_dir_all(dir).or_fail(format!("creating {}", dir.display()));
    }
    for path in json_files(dir)? {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if name.starts_with("tc-") {
            fs::remove_file(&path).or_fail(format!("removing {}", path.display()))?;
        }
    }
    Ok(())
}

fn up_to_date(flags: &Flags, output: &Output<'_>, inputs: &str) -> bool {
    if !flags.force && cache::is_fresh(output, inputs) {
        let (Output::File(p) | Output::Dir(p)) = output;
        println!("{} is up to date", p.display());
        true
    } else {
        false
    }
}

fn serve_sut(defect: Option<&str>) -> Outcome {
    let defect = match defect {
        None => None,
        Some(id) => Some(defect::lookup(id).or_fail("--defect")?.defect),
    };
    let stdin = io::stdin().lock();
    let stdout = BufWriter::new(io::stdout().lock());
    crate::external::serve(stdin, stdout, defect.as_ref()).or_fail("serving")?;
    Ok(EXIT_PASS)
}

fn seeded_defect(doc: &ConfigDoc) -> Result<Option<DefectKind>, Failure> {
    let Ok(id) = std::env::var(SEEDED_DEFECT_ENV) else {
        return Ok(None);
    };
    if id.is_empty() {
        return Ok(None);
    }
    let spec = defect::lookup(&id).or_fail(SEEDED_DEFECT_ENV)?;
    if !spec.defect.applies_to(doc.kind()) {
        return fail(format!(
            "{SEEDED_DEFECT_ENV}: `{id}` does not apply to the {} kernel",
            doc.kind().as_str()
        ));
    }
    Ok(Some(spec.defect))
}

pub fn cmd_check(m: &PipelineManifest) -> Outcome {
    let dir = m.usecase_dir()?;
    let files: Vec<PathBuf> = cache::sorted_files(dir)
        .or_fail(format!("listing {}", dir.display()))?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "uc"))
        .collect();
    if files.is_empty() {
        eprintln!("warning: no use cases (*.uc) in {}", dir.display());
        return Ok(EXIT_PASS);
    }
    if let Ok(id) = std::env::var(SEEDED_DEFECT_ENV).as_deref() {
        if !id.is_empty() {
            eprintln!("note: checking against seeded defect `{id}`");
        }
    }
    let mut failed = 0;
    for file in &files {
        let text = read(file)?;
        let config_path = match &m.config {
            Some(p) => p.clone(),
            None => match config_reference(&text) {
                Some(r) => file.parent().unwrap_or(Path::new(".")).join(r),
                None => {
                    return fail(format!(
                        "{}: no configuration given or referenced",
                        file.display()
                    ))
                }
            },
        };
        let (doc, _) = load_config(&config_path, m.kernel)?;
        let defect = seeded_defect(&doc)?;
        let kernel = kernel_for(&doc, defect.as_ref())?;
        let names = doc.names();
        let uc = parse_usecase(&text, &names, doc.kind()).or_fail(file.display())?;
        let verdict = check_usecase(&kernel, &uc);
        print!("{}", verdict.render(&uc, &names));
        if let Some(cex) = &verdict.counterexample {
            failed += 1;
            let trace: Vec<String> = cex
                .invocations()
                .iter()
                .map(|(who, call)| format!("{}:{}", who.render(&names), call.render(&names)))
                .collect();
            println!("  replay: {}", trace.join(" "));
        }
    }
    println!("{} use case(s), {failed} failed", files.len());
    Ok(if failed == 0 { EXIT_PASS } else { EXIT_FLAW })
}

fn explore_spec(m: &PipelineManifest, flags: &Flags) -> ExploreSpec {
    let defaults = Budget::default();
    ExploreSpec {
        depth: m.depth,
        invocable: flags
            .apis
            .as_ref()
            .map(|a| Invocable::only(&a.0))
            .unwrap_or_default(),
        budget: Budget {
            max_nodes: flags.max_nodes.unwrap_or(defaults.max_nodes),
            max_edges: flags.max_edges.unwrap_or(defaults.max_edges),
        },
    }
}

/// Explores the configured kernel; a truncated tree is returned together
/// with a warning rather than as an error.
pub fn explore_config(
    doc: &ConfigDoc,
    spec: &ExploreSpec,
    jobs: usize,
) -> Result<SearchTree, Failure> {
    let kernel = kernel_for(doc, None)?;
    let map = RayonMap::new(jobs).or_fail("starting workers")?;
    explore_with(&kernel, spec, &map).or_fail("exploring")
}

pub fn cmd_explore(m: &PipelineManifest, flags: &Flags) -> Outcome {
    let config_path = m.config_path()?;
    let (doc, _) = load_config(config_path, m.kernel)?;
    let out = flags.out.as_deref().or(m.tree.as_deref());
    let Some(out) = out else {
        return fail("an output tree path is required (pass --out or --tree)");
    };
    let spec = explore_spec(m, flags);
    let inputs = Fingerprint::new()
        .add("config", formats::config_to_json(&doc).as_bytes())
        .add("spec", format!("{:?}", spec).as_bytes())
        .finish();
    let output = Output::File(out);
    if up_to_date(flags, &output, &inputs) {
        return Ok(EXIT_PASS);
    }
    let tree = explore_config(&doc, &spec, m.jobs)?;
    write(out, &formats::tree_to_json(&tree, &doc))?;
    println!(
        "{}: {} nodes, {} edges, depth bound {}",
        out.display(),
        tree.nodes.len(),
        tree.edges.len(),
        tree.depth_bound
    );
    match tree.truncated {
        Some(t) => {
            cache::clear_stamp(&output).or_fail("clearing stamp")?;
            eprintln!(
                "error: exploration truncated ({t}); the tree is partial and marked incomplete"
            );
            Ok(EXIT_ERROR)
        }
        None => {
            cache::write_stamp(&output, &inputs).or_fail("writing stamp")?;
            Ok(EXIT_PASS)
        }
    }
}

/// Generates the required coverage suite for an explored tree.
pub fn suite_for(
    doc: &ConfigDoc,
    tree: &SearchTree,
    goal: CoverageGoal,
    config_name: &str,
) -> Result<Vec<TestCase>, Failure> {
    let kernel = kernel_for(doc, None)?;
    Ok(generate_test_cases(&kernel, tree, goal, config_name))
}

pub fn cmd_gen(m: &PipelineManifest, flags: &Flags) -> Outcome {
    let (doc, config_name) = load_config(m.config_path()?, m.kernel)?;
    let tree_path = m.tree_path()?;
    let tree_text = read(tree_path)?;
    let Some(out) = flags.out.as_deref().or(m.cases.as_deref()) else {
        return fail("an output directory is required (pass --out or --cases)");
    };
    let inputs = Fingerprint::new()
        .add("config", formats::config_to_json(&doc).as_bytes())
        .add("config-name", config_name.as_bytes())
        .add("tree", tree_text.as_bytes())
        .add("coverage", format!("{:?}", m.coverage).as_bytes())
        .finish();
    let output = Output::Dir(out);
    if up_to_date(flags, &output, &inputs) {
        return Ok(EXIT_PASS);
    }
    let tree = formats::tree_from_json(&tree_text, &doc).or_fail(tree_path.display())?;
    if !tree.is_complete() {
        eprintln!(
            "warning: the search tree is truncated; generated cases are marked non-exhaustive"
        );
    }
    let cases = suite_for(&doc, &tree, m.coverage, &config_name)?;
    clear_generated(out)?;
    for case in &cases {
        write(
            &out.join(format!("{}.json", case.id)),
            &formats::case_to_json(case),
        )?;
    }
    cache::write_stamp(&output, &inputs).or_fail("writing stamp")?;
    println!("{}: {} test case(s)", out.display(), cases.len());
    Ok(EXIT_PASS)
}

pub fn cmd_progen(m: &PipelineManifest, flags: &Flags) -> Outcome {
    let dir = m.case_dir()?;
    let Some(out) = flags.out.as_deref().or(m.programs.as_deref()) else {
        return fail("an output directory is required (pass --out or --programs)");
    };
    let inputs = Fingerprint::new()
        .add(
            "cases",
            cache::dir_fingerprint(dir)
                .or_fail(dir.display())?
                .as_bytes(),
        )
        .finish();
    let output = Output::Dir(out);
    if up_to_date(flags, &output, &inputs) {
        return Ok(EXIT_PASS);
    }
    let mut programs = Vec::new();
    for path in json_files(dir)? {
        let case = formats::case_from_json(&read(&path)?).or_fail(path.display())?;
        programs.push(allocate_to_tasks(&case).or_fail(path.display())?);
    }
    clear_generated(out)?;
    for p in &programs {
        write(
            &out.join(format!("{}.json", p.id)),
            &formats::program_to_json(p),
        )?;
    }
    cache::write_stamp(&output, &inputs).or_fail("writing stamp")?;
    println!("{}: {} test program(s)", out.display(), programs.len());
    Ok(EXIT_PASS)
}

pub fn load_programs(dir: &Path) -> Result<Vec<TestProgram>, Failure> {
    let mut programs = Vec::new();
    for path in json_files(dir)? {
        programs.push(formats::program_from_json(&read(&path)?).or_fail(path.display())?);
    }
    programs.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(programs)
}

pub const RUNS: &str = "runs.jsonl";
pub const PARTIAL_RUNS: &str = "runs.partial.jsonl";

pub fn cmd_run(m: &PipelineManifest, flags: &Flags) -> Outcome {
    let (doc, _) = load_config(m.config_path()?, m.kernel)?;
    let sut = SutSpec::parse(&m.sut).or_fail("--sut")?;
    sut.check(&doc).or_fail("--sut")?;
    let mut programs = load_programs(m.program_dir()?)?;
    if let Some(n) = flags.preliminary {
        programs = runner::preliminary(&programs, n);
        println!("preliminary run: {} shortest program(s)", programs.len());
    }
    let logs_dir = m.log_dir()?;
    fs::create_dir_all(logs_dir).or_fail(format!("creating {}", logs_dir.display()))?;
    let partial = logs_dir.join(PARTIAL_RUNS);
    let sink = fs::File::create(&partial).or_fail(format!("creating {}", partial.display()))?;
    let sink = Mutex::new(BufWriter::new(sink));
    let logs = runner::run_suite(&programs, &doc, &sut, m.jobs, Some(&sink))
        .or_fail("starting workers")?;
    drop(sink);
    write(&logs_dir.join(RUNS), &formats::logs_to_jsonl(&logs))?;
    fs::remove_file(&partial).or_fail(format!("removing {}", partial.display()))?;
    let r = harness::report(&logs);
    println!(
        "{} run(s): {} passed, {} failed, {} error(s)",
        r.total, r.passed, r.failed, r.errors
    );
    for log in logs
        .iter()
        .filter(|l| l.verdict != harness::RunVerdict::Pass)
    {
        match (&log.mismatch, &log.error) {
            (Some(mm), _) => println!(
                "  {}: step {} {:?} expected {} got {}",
                log.program, mm.step, mm.check, mm.expected, mm.actual
            ),
            (None, Some(e)) => println!("  {}: error: {e}", log.program),
            (None, None) => {}
        }
    }
    Ok(harness::exit_code(&logs))
}

pub fn read_logs(dir: &Path) -> Result<Vec<RunLog>, Failure> {
    let path = dir.join(RUNS);
    formats::logs_from_jsonl(&read(&path)?).or_fail(path.display())
}

pub fn cmd_report(m: &PipelineManifest, flags: &Flags) -> Outcome {
    let dir = m.log_dir()?;
    let logs = read_logs(dir)?;
    let report = harness::report(&logs);
    let out = flags.out.clone().unwrap_or_else(|| dir.join("report.json"));
    write(&out, &formats::report_to_json(&report))?;
    println!(
        "{} run(s): {} passed, {} failed, {} error(s)",
        report.total, report.passed, report.failed, report.errors
    );
    if !report.clusters.is_empty() {
        println!(
            "{:<16} {:<9} {:>5} {:>5} {:>5} {:>7}",
            "api", "cause", "count", "min", "max", "avg"
        );
        for c in &report.clusters {
            let api = c.api.map_or("-", Api::as_str);
            println!(
                "{api:<16} {:<9} {:>5} {:>5} {:>5} {:>7.2}",
                c.cause.as_str(),
                c.count,
                c.min_step,
                c.max_step,
                c.avg_step
            );
        }
    }
    Ok(harness::exit_code(&logs))
}

pub fn cmd_mutants(m: &PipelineManifest, flags: &Flags) -> Outcome {
    let (doc, config_name) = load_config(m.config_path()?, m.kernel)?;
    let tree = explore_config(&doc, &explore_spec(m, flags), m.jobs)?;
    if let Some(t) = tree.truncated {
        return fail(format!("exploration truncated ({t})"));
    }
    let cases = suite_for(&doc, &tree, m.coverage, &config_name)?;
    let programs = cases
        .iter()
        .map(allocate_to_tasks)
        .collect::<Result<Vec<_>, _>>()
        .or_fail("allocating programs")?;
    println!(
        "suite: {} program(s) from {} nodes, {} edges",
        programs.len(),
        tree.nodes.len(),
        tree.edges.len()
    );
    let mut survivors = 0;
    for spec in defect::panel()
        .into_iter()
        .filter(|d| d.kernel == doc.kind())
    {
        let id = spec.id.clone();
        let logs =
            runner::run_suite::<io::Sink>(&programs, &doc, &SutSpec::Mutant(spec), m.jobs, None)
                .or_fail("starting workers")?;
        let first = logs.iter().filter_map(RunLog::first_failing_step).min();
        let killers = logs
            .iter()
            .filter(|l| l.verdict == harness::RunVerdict::Fail)
            .count();
        match first {
            Some(step) => {
                println!("killed    {id:<40} {killers} failing program(s), earliest at step {step}")
            }
            None => {
                survivors += 1;
                println!("SURVIVED  {id}");
            }
        }
    }
    Ok(if survivors == 0 { EXIT_PASS } else { EXIT_FLAW })
}
