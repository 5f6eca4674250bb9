//! `qvl run`: build the field, execute the suites in order, write reports.

use std::fs;
use std::path::{Path, PathBuf};

use qvl_core::QvlError;

use crate::generate::{build, Built};
use crate::report::{to_json, Failure, Manifest, SuiteReport};
use crate::scenario::Scenario;
use crate::suites::run_suite;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tol_scale: Option<f64>,
}

/// Configuration problems, reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.manifest.pass {
            0
        } else {
            1
        }
    }
}

/// The scenario after command-line overrides.
pub fn effective(mut sc: Scenario, opts: &RunOptions) -> Result<Scenario, UsageError> {
    if let Some(s) = opts.seed {
        sc.seed = Some(s);
    }
    if let Some(s) = opts.tol_scale {
        if !(s > 0.0 && s.is_finite()) {
            return Err(UsageError(format!("--tol-scale must be positive, got {s}")));
        }
        sc.tolerances = sc.tolerances.scaled(s);
    }
    sc.validate().map_err(UsageError)?;
    Ok(sc)
}

pub fn run_file(path: &Path, opts: &RunOptions) -> Result<RunOutcome, UsageError> {
    let sc = Scenario::load(path).map_err(UsageError)?;
    run(sc, opts)
}

pub fn run(sc: Scenario, opts: &RunOptions) -> Result<RunOutcome, UsageError> {
    let sc = effective(sc, opts)?;
    let out_dir = opts
        .out
        .clone()
        .or_else(|| sc.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("qvl-out").join(&sc.name));
    let built = if sc.suites.iter().any(|s| s.needs_field()) {
        match build(&sc.generator, sc.domain.as_ref()) {
            Ok(b) => Some(Ok(b)),
            Err(QvlError::Convergence(f)) => Some(Err(format!("field construction failed: {}", f.message))),
            Err(e) => return Err(UsageError(format!("cannot build the field: {e}"))),
        }
    } else {
        None
    };
    fs::create_dir_all(&out_dir).map_err(|e| UsageError(format!("cannot create {}: {e}", out_dir.display())))?;
    let write = |name: &str, text: &str| -> Result<(), UsageError> {
        let p = out_dir.join(name);
        fs::write(&p, text).map_err(|e| UsageError(format!("cannot write {}: {e}", p.display())))
    };
    if let Some(Ok(Built { solve: Some(s), .. })) = &built {
        write("solve_trace.csv", &s.trace_csv())?;
    }
    let hash = sc.hash();
    let mut suites = Vec::new();
    let mut failures = Vec::new();
    for &id in &sc.suites {
        let o = run_suite(id, &sc, built.as_ref());
        let pass = o.assertions.iter().all(|a| a.pass);
        failures.extend(o.assertions.iter().filter(|a| !a.pass).map(|a| Failure { suite: id.name().into(), assertion: a.clone() }));
        let report = SuiteReport {
            scenario: sc.name.clone(),
            scenario_hash: hash.clone(),
            suite: id.name().into(),
            seed: sc.seed,
            grid: o.grid,
            tolerances: sc.tolerances.clone(),
            pass,
            assertions: o.assertions,
            data: o.data,
        };
        write(&format!("{}.json", id.name()), &to_json(&report))?;
        for (name, csv) in &o.tables {
            write(name, csv)?;
        }
        suites.push((id.name().to_string(), pass));
    }
    let manifest = Manifest { scenario: sc.name.clone(), scenario_hash: hash, pass: failures.is_empty(), suites, failures };
    write("manifest.json", &to_json(&manifest))?;
    Ok(RunOutcome { out_dir, manifest })
}
