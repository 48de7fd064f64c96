//! Machine-readable run reports.

use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::disptest::TestResult;
use crate::edf::Family;
use crate::fit::FitResult;
use crate::search::{CandidateRecord, SearchConfig, SearchReport};

pub const SCHEMA: &str = "causal-glm/1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Non-finite values have no JSON form; they are reported as absent.
fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub data: Option<String>,
    pub target: String,
    pub family: Family,
    pub n_rows: usize,
    pub alpha: f64,
    pub test: String,
    pub search: Option<String>,
    pub basis: BasisSpec,
    pub bootstrap_reps: usize,
    pub max_subset_size: Option<usize>,
    pub lambda_grid: Vec<f64>,
    pub force: bool,
}

impl ConfigEcho {
    pub fn from_search(
        data: Option<String>,
        target: &str,
        family: Family,
        n_rows: usize,
        cfg: &SearchConfig,
    ) -> Self {
        ConfigEcho {
            data,
            target: target.to_string(),
            family,
            n_rows,
            alpha: cfg.alpha,
            test: cfg.method.clone(),
            search: Some(cfg.strategy.clone()),
            basis: cfg.basis,
            bootstrap_reps: cfg.bootstrap_reps,
            max_subset_size: cfg.max_subset_size,
            lambda_grid: cfg.grid(),
            force: cfg.force,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetRecord {
    pub subset: Vec<String>,
    pub statistic: Option<f64>,
    pub edf: Option<f64>,
    pub p_value: Option<f64>,
    pub bic: Option<f64>,
    pub loglik: Option<f64>,
    pub lambda: Option<f64>,
    pub converged: bool,
    pub separated: bool,
    pub accepted: bool,
    pub candidate: bool,
    pub note: Option<String>,
}

impl SubsetRecord {
    pub fn new(
        names: Vec<String>,
        fit: Option<&FitResult>,
        test: Option<&TestResult>,
        candidate: bool,
        note: Option<String>,
    ) -> Self {
        SubsetRecord {
            subset: names,
            statistic: test.and_then(|t| finite(t.statistic)),
            edf: fit.and_then(|f| finite(f.edf)),
            p_value: test.and_then(|t| finite(t.p_value)),
            bic: fit.and_then(|f| finite(f.bic)),
            loglik: fit.and_then(|f| finite(f.loglik)),
            lambda: fit.and_then(|f| finite(f.lambda)),
            converged: fit.is_some_and(|f| f.converged),
            separated: fit.is_some_and(|f| f.separated),
            accepted: test.is_some_and(|t| t.accepted),
            candidate,
            note,
        }
    }
}

impl From<&CandidateRecord> for SubsetRecord {
    fn from(r: &CandidateRecord) -> Self {
        SubsetRecord::new(
            r.names.clone(),
            r.fit.as_ref(),
            r.test.as_ref(),
            r.is_candidate,
            r.note.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub tool_version: String,
    pub command: String,
    pub config: ConfigEcho,
    pub records: Vec<SubsetRecord>,
    pub candidates: Vec<Vec<String>>,
    pub selected: Option<Vec<String>>,
    pub trace: Vec<String>,
    pub timing: Timing,
    pub seed: u64,
}

impl RunReport {
    pub fn from_search(
        config: ConfigEcho,
        search: &SearchReport,
        seed: u64,
        timing: Timing,
    ) -> Self {
        RunReport {
            schema: SCHEMA.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            command: "discover".to_string(),
            config,
            records: search.records.iter().map(SubsetRecord::from).collect(),
            candidates: search.candidates.clone(),
            selected: search.selected_names().map(<[String]>::to_vec),
            trace: search.trace.clone(),
            timing,
            seed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<RunReport> {
        serde_json::from_str(s)
    }
}

/// Result of testing a single subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub schema: String,
    pub tool_version: String,
    pub command: String,
    pub config: ConfigEcho,
    pub record: SubsetRecord,
    pub method: String,
    pub bootstrap_reps: usize,
    pub timing: Timing,
    pub seed: u64,
}

impl TestReport {
    pub fn new(
        config: ConfigEcho,
        record: SubsetRecord,
        test: &TestResult,
        seed: u64,
        timing: Timing,
    ) -> Self {
        TestReport {
            schema: SCHEMA.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            command: "disptest".to_string(),
            config,
            record,
            method: test.method.clone(),
            bootstrap_reps: test.bootstrap_reps,
            timing,
            seed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<TestReport> {
        serde_json::from_str(s)
    }
}
