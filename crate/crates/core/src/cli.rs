//! Command implementations behind the `spansim` binary: validate a scenario,
//! run one, or compare policy variants on the identical trace and faults.
//!
//! Exit-code contract: 0 success, 1 validation failure, 2 runtime failure.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::diagnostics::{line_of, DiagCode, Diagnostic};
use crate::engine::{self, EngineError, RunOutcome};
use crate::report::{write_report_files, ComparisonTable, MetricsReport, VariantRow};
use crate::scenario::{parse_policy_overrides, parse_variant, Scenario, ScenarioError};

/// Inputs for one `run` invocation.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub scenario_path: PathBuf,
    pub out_dir: PathBuf,
    pub seed_override: Option<u64>,
    pub policy_overrides: Vec<String>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Engine(#[from] EngineError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("compare needs at least two variants")]
    TooFewVariants,
}

impl CliError {
    /// 1 for validation failures, 2 for runtime failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Scenario(ScenarioError::Io(_)) => 2,
            CliError::Scenario(_) => 1,
            CliError::TooFewVariants => 1,
            CliError::Engine(_) | CliError::Io(_) => 2,
        }
    }
}

/// Validate a scenario file. `Ok(vec![])` means clean; parse failures come
/// back as a single diagnostic carrying the line. Semantic diagnostics are
/// anchored to the first occurrence of their offending identifier.
pub fn cmd_validate(path: &Path) -> Result<Vec<Diagnostic>, CliError> {
    let raw = std::fs::read_to_string(path).map_err(|e| CliError::Scenario(e.into()))?;
    let scenario = match Scenario::from_json(&raw) {
        Ok(mut s) => {
            s.base_dir = path.parent().map(|p| p.to_path_buf());
            s
        }
        Err(ScenarioError::Parse { line, column, message }) => {
            return Ok(vec![Diagnostic::new(
                DiagCode::Parse,
                format!("{}:{line}:{column}", path.display()),
                message,
            )
            .with_line(line)]);
        }
        Err(e) => return Err(e.into()),
    };
    let mut diags = scenario.validate();
    for diag in &mut diags {
        if diag.line.is_none() {
            if let Some(token) = &diag.token {
                diag.line = line_of(&raw, token);
            }
        }
    }
    Ok(diags)
}

/// Artifacts of a completed run.
pub struct RunArtifacts {
    pub report: MetricsReport,
    pub files: Vec<PathBuf>,
}

/// Run one scenario and write the report files into the manifest's output
/// directory.
pub fn cmd_run(manifest: &RunManifest) -> Result<RunArtifacts, CliError> {
    let scenario = Scenario::load(&manifest.scenario_path)?;
    let overrides = parse_policy_overrides(&manifest.policy_overrides)?;
    let resolved = scenario.resolve(manifest.seed_override, &overrides)?;
    let outcome = engine::run(&resolved)?;
    let files = write_report_files(
        &manifest.out_dir,
        &outcome.report,
        &outcome.state.ledger,
        &outcome.state.placements,
    )?;
    Ok(RunArtifacts { report: outcome.report, files })
}

/// Run every variant on the identical trace and faults, one row per variant.
/// All variants are parsed before the first run starts, so an unknown token
/// aborts the whole comparison. With `out_dir` set, per-variant reports land
/// in numbered subdirectories plus a `comparison.csv`.
pub fn cmd_compare(
    scenario_path: &Path,
    variants: &[String],
    seed_override: Option<u64>,
    out_dir: Option<&Path>,
) -> Result<ComparisonTable, CliError> {
    if variants.len() < 2 {
        return Err(CliError::TooFewVariants);
    }
    let scenario = Scenario::load(scenario_path)?;
    let parsed: Vec<_> = variants
        .iter()
        .map(|v| parse_variant(v).map(|o| (v.clone(), o)))
        .collect::<Result<_, _>>()?;
    let mut table = ComparisonTable::default();
    for (index, (label, overrides)) in parsed.iter().enumerate() {
        let resolved = scenario.resolve(seed_override, overrides)?;
        let RunOutcome { state, report } = engine::run(&resolved)?;
        if let Some(dir) = out_dir {
            let sub = dir.join(format!("variant-{index}-{label}"));
            write_report_files(&sub, &report, &state.ledger, &state.placements)?;
        }
        table.rows.push(VariantRow {
            variant: label.clone(),
            gpu_utilization: report.gpu_utilization,
            gpu_hours: report.total.gpu_hours,
            pending_at_horizon: report.pending_at_horizon,
            preemptions: report.preemption_victims,
        });
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        table.write_csv(&dir.join("comparison.csv"))?;
    }
    Ok(table)
}
