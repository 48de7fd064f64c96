//! Search for the causal parent set: fit each visited covariate subset,
//! test it for perfect dispersion, and refine the accepted subsets by BIC.

mod full;
mod stepwise;

pub use full::{subsets_up_to, FullSearch};
pub use stepwise::StepwiseSearch;

use serde::{Deserialize, Serialize};

use crate::basis::{build_design, BasisKind, BasisSpec, Design};
use crate::data::Dataset;
use crate::disptest::{DispersionTest, TestContext, TestResult};
use crate::edf::Family;
use crate::error::{Error, Result};
use crate::fit::{default_lambda_grid, select_lambda, FitResult};
use crate::registry::{self, Registry};
use crate::rng;

pub const FULL: &str = "full";
pub const STEPWISE: &str = "stepwise";

/// Largest covariate count for exhaustive search without a size cap.
pub const MAX_EXHAUSTIVE_P: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub alpha: f64,
    /// Registered dispersion test name.
    pub method: String,
    pub basis: BasisSpec,
    /// Registered search strategy name.
    pub strategy: String,
    pub bootstrap_reps: usize,
    pub seed: u64,
    pub max_subset_size: Option<usize>,
    /// Smoothing grid for penalized bases; linear bases always use `[0]`.
    pub lambda_grid: Vec<f64>,
    /// Allow a test outside its supported families.
    pub force: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            alpha: 0.05,
            method: crate::disptest::CHISQ.to_string(),
            basis: BasisSpec::default(),
            strategy: FULL.to_string(),
            bootstrap_reps: 500,
            seed: 0,
            max_subset_size: None,
            lambda_grid: default_lambda_grid(),
            force: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self, registry: &Registry, family: Family) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        self.basis.validate()?;
        registry.strategy(&self.strategy)?;
        registry
            .test(&self.method)?
            .check(family, self.bootstrap_reps, self.force)
    }

    pub fn grid(&self) -> Vec<f64> {
        match self.basis.kind {
            BasisKind::Linear => vec![0.0],
            BasisKind::AdditiveSpline => self.lambda_grid.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    /// Data-column indices, ascending.
    pub subset: Vec<usize>,
    pub names: Vec<String>,
    pub fit: Option<FitResult>,
    pub test: Option<TestResult>,
    /// Test accepted and fit converged.
    pub is_candidate: bool,
    pub note: Option<String>,
}

impl CandidateRecord {
    /// p-value used for stepwise decisions; zero for failed or
    /// non-converged fits.
    pub fn search_p_value(&self) -> f64 {
        match (&self.fit, &self.test) {
            (Some(f), Some(t)) if f.converged => t.p_value,
            _ => 0.0,
        }
    }

    pub fn bic(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.bic)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub subset: Vec<usize>,
    pub names: Vec<String>,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub strategy: String,
    pub records: Vec<CandidateRecord>,
    /// Accepted subsets, by covariate name.
    pub candidates: Vec<Vec<String>>,
    pub selected: Option<Selection>,
    pub trace: Vec<String>,
}

impl SearchReport {
    pub fn selected_names(&self) -> Option<&[String]> {
        self.selected.as_ref().map(|s| s.names.as_slice())
    }

    /// True when the selection is exactly `names` (order-insensitive).
    pub fn selected_is(&self, names: &[&str]) -> bool {
        self.selected_names().is_some_and(|sel| {
            sel.len() == names.len() && names.iter().all(|n| sel.iter().any(|s| s == n))
        })
    }
}

/// Everything a strategy needs to fit and test one subset.
pub struct Evaluator<'a> {
    pub data: &'a Dataset,
    pub family: Family,
    pub cfg: &'a SearchConfig,
    pub test: &'a dyn DispersionTest,
    /// Candidate covariates as data-column indices, ascending.
    pub covariates: Vec<usize>,
    pub y: &'a [f64],
    grid: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        data: &'a Dataset,
        target: &str,
        family: Family,
        cfg: &'a SearchConfig,
        registry: &'a Registry,
    ) -> Result<Self> {
        cfg.validate(registry, family)?;
        let target_idx = data.index_of(target)?;
        let y = data.column_at(target_idx);
        check_target(family, y)?;
        let covariates = (0..data.n_cols()).filter(|&i| i != target_idx).collect();
        Ok(Evaluator {
            data,
            family,
            cfg,
            test: registry.test(&cfg.method)?,
            covariates,
            y,
            grid: cfg.grid(),
        })
    }

    pub fn names(&self, subset: &[usize]) -> Vec<String> {
        subset
            .iter()
            .map(|&i| self.data.names()[i].clone())
            .collect()
    }

    /// Builds the design and fits at the GCV-selected smoothing weight.
    pub fn fit(&self, subset: &[usize]) -> Result<(Design, FitResult)> {
        let design = build_design(self.data, subset, &self.cfg.basis)?;
        let (_, fit) = select_lambda(self.family, &design, self.y, &self.grid)?;
        Ok((design, fit))
    }

    /// Fits and tests one subset; failures become non-candidate records.
    pub fn evaluate(&self, subset: &[usize]) -> CandidateRecord {
        let mut subset = subset.to_vec();
        subset.sort_unstable();
        let names = self.names(&subset);
        let (design, fit) = match self.fit(&subset) {
            Ok(v) => v,
            Err(e) => {
                return CandidateRecord {
                    subset,
                    names,
                    fit: None,
                    test: None,
                    is_candidate: false,
                    note: Some(e.to_string()),
                }
            }
        };
        let mut note = None;
        if fit.separated {
            note = Some("quasi-separation".to_string());
        } else if !fit.converged {
            note = Some("fit did not converge".to_string());
        }
        let test = if fit.converged {
            let keys: Vec<u64> = subset.iter().map(|&i| i as u64 + 1).collect();
            let ctx = TestContext {
                family: self.family,
                design: &design,
                fit: &fit,
                y: self.y,
                alpha: self.cfg.alpha,
                bootstrap_reps: self.cfg.bootstrap_reps,
                seed: rng::derive(self.cfg.seed, &keys),
                force: self.cfg.force,
            };
            match self.test.run(&ctx) {
                Ok(t) => Some(t),
                Err(e) => {
                    note = Some(e.to_string());
                    None
                }
            }
        } else {
            None
        };
        let is_candidate = fit.converged && test.as_ref().is_some_and(|t| t.accepted);
        CandidateRecord {
            subset,
            names,
            fit: Some(fit),
            test,
            is_candidate,
            note,
        }
    }
}

/// Rejects empty targets, values outside the family's support, and
/// constant binary targets, which no model can test.
pub fn check_target(family: Family, y: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::Data("dataset has no rows".into()));
    }
    family.check_response(y)?;
    if family == Family::Bernoulli && y.iter().all(|&v| v == y[0]) {
        return Err(Error::Config(format!(
            "binary target is constant ({}), nothing to model",
            y[0]
        )));
    }
    Ok(())
}

/// A search procedure, selectable by name through the registry.
pub trait SearchStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn search(&self, ev: &Evaluator<'_>) -> Result<SearchReport>;
}

/// Minimum-BIC candidate; ties go to the smaller subset, then the
/// lexicographically smaller index list.
pub fn bic_refine(records: &[CandidateRecord]) -> Option<&CandidateRecord> {
    records
        .iter()
        .filter(|r| r.is_candidate && r.fit.is_some())
        .min_by(|a, b| {
            let (ba, bb) = (a.bic().unwrap_or(f64::INFINITY), b.bic().unwrap_or(f64::INFINITY));
            ba.total_cmp(&bb)
                .then(a.subset.len().cmp(&b.subset.len()))
                .then(a.subset.cmp(&b.subset))
        })
}

/// Runs the configured strategy with the built-in registry.
pub fn discover(
    data: &Dataset,
    target: &str,
    family: Family,
    cfg: &SearchConfig,
) -> Result<SearchReport> {
    discover_with(registry::global(), data, target, family, cfg)
}

pub fn discover_with(
    registry: &Registry,
    data: &Dataset,
    target: &str,
    family: Family,
    cfg: &SearchConfig,
) -> Result<SearchReport> {
    let ev = Evaluator::new(data, target, family, cfg, registry)?;
    registry.strategy(&cfg.strategy)?.search(&ev)
}

/// Exhaustive search over every covariate subset.
pub fn full_search(
    data: &Dataset,
    target: &str,
    family: Family,
    cfg: &SearchConfig,
) -> Result<SearchReport> {
    let ev = Evaluator::new(data, target, family, cfg, registry::global())?;
    FullSearch.search(&ev)
}

/// Forward dispersion search followed by backward BIC elimination.
pub fn stepwise_search(
    data: &Dataset,
    target: &str,
    family: Family,
    cfg: &SearchConfig,
) -> Result<SearchReport> {
    let ev = Evaluator::new(data, target, family, cfg, registry::global())?;
    StepwiseSearch.search(&ev)
}
