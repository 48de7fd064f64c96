//! Tests of perfect dispersion: is the Pearson risk of a fitted model equal
//! to `a(φ)`? Two-sided, since both over- and under-dispersion reject.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::Design;
use crate::edf::Family;
use crate::error::{Error, Result};
use crate::fit::{fit_glm_with, FitOptions, FitResult};
use crate::rng;
use crate::special::{chisq_cdf, chisq_quantile, chisq_sf};

pub const CHISQ: &str = "chisq";
pub const BOOTSTRAP: &str = "bootstrap";

/// Fewest bootstrap replicates accepted.
pub const MIN_BOOTSTRAP_REPS: usize = 19;

const MAX_REDRAWS: u64 = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Pearson statistic `R⁺`.
    pub statistic: f64,
    pub edf_used: f64,
    pub p_value: f64,
    pub method: String,
    pub bootstrap_reps: usize,
    pub accepted: bool,
    pub alpha: f64,
}

/// Inputs shared by every dispersion test.
#[derive(Debug, Clone, Copy)]
pub struct TestContext<'a> {
    pub family: Family,
    pub design: &'a Design,
    pub fit: &'a FitResult,
    pub y: &'a [f64],
    pub alpha: f64,
    pub bootstrap_reps: usize,
    pub seed: u64,
    /// Run even when the family is outside the test's supported set.
    pub force: bool,
}

/// A dispersion test, selectable by name through the registry.
pub trait DispersionTest: Send + Sync {
    fn name(&self) -> &'static str;

    /// Rejects configurations the test cannot run.
    fn check(&self, family: Family, bootstrap_reps: usize, force: bool) -> Result<()>;

    fn run(&self, ctx: &TestContext<'_>) -> Result<TestResult>;
}

/// `Σ (y - b'(η))² / (b''(η) a(φ))` for an arbitrary predictor.
pub fn pearson_statistic(family: Family, y: &[f64], eta: &[f64]) -> Result<f64> {
    if y.len() != eta.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            found: eta.len(),
        });
    }
    family.check_response(y)?;
    for &t in eta {
        family.check_theta(t)?;
    }
    Ok(pearson_statistic_unchecked(family, y, eta))
}

pub(crate) fn pearson_statistic_unchecked(family: Family, y: &[f64], eta: &[f64]) -> f64 {
    y.iter()
        .zip(eta)
        .map(|(&yi, &t)| family.pearson_sq_unchecked(yi, t))
        .sum()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Acceptance region `(χ²_{df, α/2}, χ²_{df, 1-α/2})`.
pub fn chisq_bounds(df: f64, alpha: f64) -> (f64, f64) {
    (
        chisq_quantile(alpha / 2.0, df),
        chisq_quantile(1.0 - alpha / 2.0, df),
    )
}

/// Two-sided p-value of `statistic` against `χ²_df`.
pub fn chisq_p_value(statistic: f64, df: f64) -> f64 {
    let lower = chisq_cdf(statistic, df);
    let upper = chisq_sf(statistic, df);
    (2.0 * lower.min(upper)).min(1.0)
}

/// Chi-squared approximation `R⁺ ~ χ²_{n - edf}`; Poisson only.
pub fn chisq_test(family: Family, fit: &FitResult, y: &[f64], alpha: f64) -> Result<TestResult> {
    ChiSqTest.check(family, 0, false)?;
    chisq_inner(family, fit, y, alpha)
}

fn chisq_inner(family: Family, fit: &FitResult, y: &[f64], alpha: f64) -> Result<TestResult> {
    check_alpha(alpha)?;
    let statistic = pearson_statistic(family, y, &fit.eta)?;
    let df = y.len() as f64 - fit.edf;
    if df.is_nan() || df < 1.0 {
        return Err(Error::DegenerateDf {
            n: y.len(),
            edf: fit.edf,
        });
    }
    let p_value = chisq_p_value(statistic, df);
    Ok(TestResult {
        statistic,
        edf_used: fit.edf,
        p_value,
        method: CHISQ.to_string(),
        bootstrap_reps: 0,
        accepted: p_value >= alpha,
        alpha,
    })
}

/// Plus-one two-sided bootstrap p-value, capped at 1.
pub fn bootstrap_p_value(observed: f64, replicates: &[f64]) -> f64 {
    let b = replicates.len() as f64;
    let ge = replicates.iter().filter(|&&r| r >= observed).count() as f64;
    let le = replicates.iter().filter(|&&r| r <= observed).count() as f64;
    (2.0 * ((1.0 + ge) / (b + 1.0)).min((1.0 + le) / (b + 1.0))).min(1.0)
}

/// Parametric bootstrap under the fitted null: responses are redrawn from
/// the fitted conditional law, the design and `λ` stay fixed.
pub fn bootstrap_test(
    family: Family,
    fit: &FitResult,
    design: &Design,
    y: &[f64],
    alpha: f64,
    reps: usize,
    seed: u64,
) -> Result<TestResult> {
    BootstrapTest.check(family, reps, false)?;
    check_alpha(alpha)?;
    let statistic = pearson_statistic(family, y, &fit.eta)?;
    let replicates = bootstrap_replicates(family, fit, design, reps, seed)?;
    let p_value = bootstrap_p_value(statistic, &replicates);
    Ok(TestResult {
        statistic,
        edf_used: fit.edf,
        p_value,
        method: BOOTSTRAP.to_string(),
        bootstrap_reps: reps,
        accepted: p_value >= alpha,
        alpha,
    })
}

/// Bootstrap Pearson statistics, replicate `r` drawn from substream
/// `(seed, r, attempt)` so the output is independent of scheduling.
pub fn bootstrap_replicates(
    family: Family,
    fit: &FitResult,
    design: &Design,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !fit.converged {
        return Err(Error::Config("bootstrap requires a converged fit".into()));
    }
    let opts = FitOptions::default();
    let outcomes: Vec<(Option<f64>, bool)> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut y_star = vec![0.0; fit.eta.len()];
            for attempt in 0..MAX_REDRAWS {
                let mut rng = rng::substream(seed, &[r, attempt]);
                for (ys, &t) in y_star.iter_mut().zip(&fit.eta) {
                    let u: f64 = rng.random();
                    *ys = family.quantile(t, u, 1.0 - u);
                }
                let refit =
                    fit_glm_with(family, design, &y_star, fit.lambda, Some(&fit.beta), &opts);
                if let Ok(f) = refit {
                    if f.converged {
                        let stat = pearson_statistic_unchecked(family, &y_star, &f.eta);
                        return (Some(stat), attempt > 0);
                    }
                }
            }
            (None, true)
        })
        .collect();
    let failed = outcomes.iter().filter(|(_, redrawn)| *redrawn).count();
    if failed * 10 > reps || outcomes.iter().any(|(s, _)| s.is_none()) {
        return Err(Error::BootstrapFailures { failed, reps });
    }
    Ok(outcomes.into_iter().filter_map(|(s, _)| s).collect())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ChiSqTest;

impl DispersionTest for ChiSqTest {
    fn name(&self) -> &'static str {
        CHISQ
    }

    fn check(&self, family: Family, _reps: usize, force: bool) -> Result<()> {
        if family != Family::Poisson && !force {
            return Err(Error::UnsupportedFamily {
                method: CHISQ,
                family: family.name(),
            });
        }
        Ok(())
    }

    fn run(&self, ctx: &TestContext<'_>) -> Result<TestResult> {
        self.check(ctx.family, ctx.bootstrap_reps, ctx.force)?;
        chisq_inner(ctx.family, ctx.fit, ctx.y, ctx.alpha)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BootstrapTest;

impl DispersionTest for BootstrapTest {
    fn name(&self) -> &'static str {
        BOOTSTRAP
    }

    fn check(&self, _family: Family, reps: usize, _force: bool) -> Result<()> {
        if reps < MIN_BOOTSTRAP_REPS {
            return Err(Error::Config(format!(
                "bootstrap needs at least {MIN_BOOTSTRAP_REPS} replicates, got {reps}"
            )));
        }
        Ok(())
    }

    fn run(&self, ctx: &TestContext<'_>) -> Result<TestResult> {
        bootstrap_test(
            ctx.family,
            ctx.fit,
            ctx.design,
            ctx.y,
            ctx.alpha,
            ctx.bootstrap_reps,
            ctx.seed,
        )
    }
}
