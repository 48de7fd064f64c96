//! Penalized maximum-likelihood GLM fitting by iteratively reweighted least
//! squares (Newton steps on the canonical link, with step halving).
//!
//! The maximized objective is `ℓ(β) - (λ/2) βᵀΩβ`, where `ℓ` is the
//! log-likelihood kernel and `Ω` the design's penalty matrix.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::basis::Design;
use crate::disptest::pearson_statistic_unchecked;
use crate::edf::{Family, POISSON_THETA_CAP};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Converged once every penalized score component is within
    /// `score_tol * max(1, max |y|)`.
    pub score_tol: f64,
    pub max_halvings: usize,
    /// Bernoulli coefficients beyond this magnitude flag quasi-separation.
    pub separation_cap: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 100,
            score_tol: 1e-10,
            max_halvings: 30,
            separation_cap: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta: Vec<f64>,
    /// Trace of the penalized influence matrix.
    pub edf: f64,
    /// Log-likelihood kernel at `beta`.
    pub loglik: f64,
    /// `-2 loglik + edf ln n`.
    pub bic: f64,
    pub lambda: f64,
    pub converged: bool,
    pub separated: bool,
    pub iterations: usize,
    /// Linear predictor at `beta`, one entry per row.
    #[serde(skip)]
    pub eta: Vec<f64>,
    /// Penalized objective after each accepted step, starting value first.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

impl FitResult {
    pub fn n(&self) -> usize {
        self.eta.len()
    }
}

/// `9` points log-spaced over `[1e-4, 1e4]`.
pub fn default_lambda_grid() -> Vec<f64> {
    (-4..=4).map(|e| 10f64.powi(e)).collect()
}

struct Problem<'a> {
    family: Family,
    x: &'a DMatrix<f64>,
    penalty: &'a DMatrix<f64>,
    y: &'a [f64],
    lambda: f64,
}

impl Problem<'_> {
    fn eta(&self, beta: &DVector<f64>) -> DVector<f64> {
        self.x * beta
    }

    /// Penalized objective, `-inf` when the predictor leaves the safe range.
    fn objective(&self, eta: &DVector<f64>, beta: &DVector<f64>) -> f64 {
        if self.family == Family::Poisson && eta.iter().any(|&t| t > POISSON_THETA_CAP) {
            return f64::NEG_INFINITY;
        }
        let ll = self.family.loglik_unchecked(self.y, eta.as_slice());
        if self.lambda > 0.0 {
            ll - 0.5 * self.lambda * beta.dot(&(self.penalty * beta))
        } else {
            ll
        }
    }

    /// Objective change from `(eta, beta)` to `(eta + d, beta + delta)`,
    /// summed termwise so that it stays accurate when far smaller than the
    /// objective itself. `-inf` when the new predictor is out of range.
    fn gain(&self, eta: &DVector<f64>, d: &DVector<f64>, beta: &DVector<f64>, delta: &DVector<f64>) -> f64 {
        if self.family == Family::Poisson
            && eta.iter().zip(d.iter()).any(|(t, dt)| t + dt > POISSON_THETA_CAP)
        {
            return f64::NEG_INFINITY;
        }
        let mut g: f64 = self
            .y
            .iter()
            .zip(eta.iter().zip(d.iter()))
            .map(|(&y, (&t, &dt))| y * dt - self.family.b_increment(t, dt))
            .sum();
        if self.lambda > 0.0 {
            let two_b_plus_d = beta * 2.0 + delta;
            g -= 0.5 * self.lambda * delta.dot(&(self.penalty * two_b_plus_d));
        }
        if g.is_nan() {
            f64::NEG_INFINITY
        } else {
            g
        }
    }

    /// `XᵀWX` at the given predictor.
    fn information(&self, eta: &DVector<f64>) -> DMatrix<f64> {
        let mut xw = self.x.clone();
        let sw: Vec<f64> = eta.iter().map(|&t| self.family.variance(t).sqrt()).collect();
        for mut col in xw.column_iter_mut() {
            for (v, s) in col.iter_mut().zip(&sw) {
                *v *= s;
            }
        }
        xw.tr_mul(&xw)
    }

    fn hessian(&self, info: &DMatrix<f64>) -> DMatrix<f64> {
        if self.lambda > 0.0 {
            info + self.penalty * self.lambda
        } else {
            info.clone()
        }
    }

    fn gradient(&self, eta: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
        let resid = DVector::from_iterator(
            self.y.len(),
            self.y
                .iter()
                .zip(eta.iter())
                .map(|(&y, &t)| y - self.family.mean(t)),
        );
        let mut g = self.x.tr_mul(&resid);
        if self.lambda > 0.0 {
            g -= self.penalty * beta * self.lambda;
        }
        g
    }
}

/// Cholesky factor of a symmetric positive-definite matrix, retrying with a
/// diagonal jitter of `1e-10 trace / q` (grown tenfold per retry).
fn factor(h: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(h.clone()) {
        return Some(c);
    }
    let q = h.nrows();
    let mut jitter = 1e-10 * h.trace().abs().max(1e-300) / q as f64;
    for _ in 0..6 {
        let mut hj = h.clone();
        for i in 0..q {
            hj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(hj) {
            return Some(c);
        }
        jitter *= 10.0;
    }
    None
}

fn check_inputs(family: Family, design: &Design, y: &[f64], lambda: f64) -> Result<()> {
    if y.len() != design.n_rows() {
        return Err(Error::LengthMismatch {
            expected: design.n_rows(),
            found: y.len(),
        });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    family.check_response(y)
}

pub fn fit_glm(family: Family, design: &Design, y: &[f64], lambda: f64) -> Result<FitResult> {
    fit_glm_with(family, design, y, lambda, None, &FitOptions::default())
}

/// Fits with explicit options and an optional warm start.
pub fn fit_glm_with(
    family: Family,
    design: &Design,
    y: &[f64],
    lambda: f64,
    start: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<FitResult> {
    check_inputs(family, design, y, lambda)?;
    let n = y.len();
    let q = design.n_cols();
    let prob = Problem {
        family,
        x: &design.matrix,
        penalty: &design.penalty,
        y,
        lambda,
    };

    let mut beta = match start {
        Some(s) if s.len() == q => DVector::from_column_slice(s),
        _ => {
            let mut b = DVector::zeros(q);
            if design.spec.intercept && n > 0 {
                let mean = y.iter().sum::<f64>() / n as f64;
                b[0] = family.link(family.clamp_mean(mean, n));
            }
            b
        }
    };
    let mut eta = prob.eta(&beta);
    let mut obj = prob.objective(&eta, &beta);
    if !obj.is_finite() {
        if start.is_some() {
            return fit_glm_with(family, design, y, lambda, None, opts);
        }
        let theta = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return Err(Error::Overflow {
            theta,
            cap: POISSON_THETA_CAP,
        });
    }

    let mut trace = vec![obj];
    let mut converged = false;
    let mut separated = false;
    let mut iterations = 0;
    let score_tol = opts.score_tol * y.iter().fold(1.0f64, |m, v| m.max(v.abs()));

    loop {
        let g = prob.gradient(&eta, &beta);
        if g.amax() <= score_tol {
            converged = true;
            break;
        }
        if iterations == opts.max_iter {
            break;
        }
        iterations += 1;
        let info = prob.information(&eta);
        let h = prob.hessian(&info);
        let Some(chol) = factor(&h) else {
            break;
        };
        let delta = chol.solve(&g);
        let xd = &design.matrix * &delta;

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let gain = prob.gain(&eta, &(&xd * t), &beta, &(&delta * t));
            if gain >= 0.0 {
                accepted = Some((t, gain));
                break;
            }
            t *= 0.5;
        }
        // no ascent left: stationary up to rounding, above the tolerance
        let Some((t, gain)) = accepted else {
            break;
        };
        beta += &delta * t;
        eta = prob.eta(&beta);
        obj += gain;
        trace.push(obj);

        if family == Family::Bernoulli && beta.amax() > opts.separation_cap {
            separated = true;
            break;
        }
    }

    let info = prob.information(&eta);
    let h = prob.hessian(&info);
    let edf = match factor(&h) {
        Some(chol) => chol.solve(&info).trace(),
        None => q as f64,
    };
    let loglik = family.loglik_unchecked(y, eta.as_slice());
    Ok(FitResult {
        beta: beta.as_slice().to_vec(),
        edf,
        loglik,
        bic: -2.0 * loglik + edf * (n as f64).ln(),
        lambda,
        converged: converged && !separated,
        separated,
        iterations,
        eta: eta.as_slice().to_vec(),
        objective_trace: trace,
    })
}

/// Generalized cross-validation score `n D / (n - edf)^2` with `D` the
/// Pearson statistic of the fit.
pub fn gcv_score(family: Family, y: &[f64], fit: &FitResult) -> f64 {
    let n = y.len() as f64;
    let d = pearson_statistic_unchecked(family, y, &fit.eta);
    let r = n - fit.edf;
    if r <= 0.0 {
        f64::INFINITY
    } else {
        n * d / (r * r)
    }
}

/// Picks the smoothing weight minimizing GCV over `grid`; ties go to the
/// larger weight. Designs with a zero penalty are fitted once, at the
/// smallest grid value.
pub fn select_lambda(
    family: Family,
    design: &Design,
    y: &[f64],
    grid: &[f64],
) -> Result<(f64, FitResult)> {
    if grid.is_empty() {
        return Err(Error::Config("empty lambda grid".into()));
    }
    if let Some(bad) = grid.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::Config(format!("invalid lambda {bad}")));
    }
    check_inputs(family, design, y, 0.0)?;
    if design.is_unpenalized() {
        let lambda = grid.iter().copied().fold(f64::INFINITY, f64::min);
        let fit = fit_glm(family, design, y, lambda)?;
        return Ok((lambda, fit));
    }

    let mut order: Vec<f64> = grid.to_vec();
    order.sort_by(|a, b| b.total_cmp(a));
    order.dedup();

    let opts = FitOptions::default();
    let mut warm: Option<Vec<f64>> = None;
    // (score, lambda, fit), visited from the largest lambda down
    let mut best: Option<(f64, f64, FitResult)> = None;
    let mut best_unconverged: Option<(f64, f64, FitResult)> = None;
    for &lambda in &order {
        let fit = match fit_glm_with(family, design, y, lambda, warm.as_deref(), &opts) {
            Ok(f) => f,
            Err(Error::Overflow { .. }) => continue,
            Err(e) => return Err(e),
        };
        let score = gcv_score(family, y, &fit);
        let slot = if fit.converged {
            warm = Some(fit.beta.clone());
            &mut best
        } else {
            &mut best_unconverged
        };
        // strict improvement only, so earlier (larger) lambdas win ties
        if slot.as_ref().is_none_or(|(s, _, _)| score < *s) {
            *slot = Some((score, lambda, fit));
        }
    }
    best.or(best_unconverged)
        .map(|(_, l, f)| (l, f))
        .ok_or(Error::AllFitsFailed)
}

/// Log-likelihood kernel of `beta` on an arbitrary evaluated basis.
pub fn loglik_at(family: Family, matrix: &DMatrix<f64>, y: &[f64], beta: &[f64]) -> Result<f64> {
    if matrix.ncols() != beta.len() {
        return Err(Error::LengthMismatch {
            expected: matrix.ncols(),
            found: beta.len(),
        });
    }
    if matrix.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            expected: matrix.nrows(),
            found: y.len(),
        });
    }
    let eta = matrix * DVector::from_column_slice(beta);
    family.loglik_kernel(y, eta.as_slice())
}

/// Unpenalized score `Xᵀ(y - b'(η))`.
pub fn score(family: Family, matrix: &DMatrix<f64>, y: &[f64], eta: &[f64]) -> Vec<f64> {
    let resid = DVector::from_iterator(
        y.len(),
        y.iter().zip(eta).map(|(&yi, &t)| yi - family.mean(t)),
    );
    matrix.tr_mul(&resid).as_slice().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_design, BasisSpec};
    use crate::data::Dataset;

    fn intercept_design(n: usize) -> Design {
        let d = Dataset::new(vec!["x".into()], vec![vec![0.0; n]]).unwrap();
        build_design(&d, &[], &BasisSpec::linear()).unwrap()
    }

    #[test]
    fn poisson_intercept_is_log_mean() {
        let d = intercept_design(3);
        let f = fit_glm(Family::Poisson, &d, &[1.0, 2.0, 3.0], 0.0).unwrap();
        assert!(f.converged);
        assert!((f.beta[0] - 2f64.ln()).abs() < 1e-12);
        assert!((f.edf - 1.0).abs() < 1e-12);
        assert_eq!(f.bic, -2.0 * f.loglik + f.edf * 3f64.ln());
    }

    #[test]
    fn bernoulli_balanced_intercept() {
        let d = intercept_design(2);
        let f = fit_glm(Family::Bernoulli, &d, &[0.0, 1.0], 0.0).unwrap();
        assert!(f.converged);
        assert!(f.beta[0].abs() < 1e-12);
    }

    #[test]
    fn separation_is_flagged() {
        let x = vec![-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let y = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let data = Dataset::new(vec!["x".into()], vec![x]).unwrap();
        let d = build_design(&data, &[0], &BasisSpec::linear()).unwrap();
        let f = fit_glm(Family::Bernoulli, &d, &y, 0.0).unwrap();
        assert!(f.separated);
        assert!(!f.converged);
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = intercept_design(3);
        assert!(matches!(
            fit_glm(Family::Poisson, &d, &[1.0, 2.0], 0.0),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            fit_glm(Family::Poisson, &d, &[1.0, -2.0, 0.0], 0.0),
            Err(Error::Domain { .. })
        ));
        assert!(fit_glm(Family::Poisson, &d, &[1.0, 2.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn unpenalized_design_ignores_grid() {
        let d = intercept_design(4);
        let (l, f) = select_lambda(Family::Poisson, &d, &[0.0, 1.0, 3.0, 2.0], &[10.0, 0.5, 3.0]).unwrap();
        assert_eq!(l, 0.5);
        let g = fit_glm(Family::Poisson, &d, &[0.0, 1.0, 3.0, 2.0], 10.0).unwrap();
        assert_eq!(f.beta, g.beta);
    }

    #[test]
    fn loglik_at_shape_errors() {
        let m = DMatrix::from_element(3, 2, 1.0);
        assert!(loglik_at(Family::Poisson, &m, &[1.0, 2.0, 3.0], &[0.0]).is_err());
        assert!(loglik_at(Family::Poisson, &m, &[1.0, 2.0], &[0.0, 0.0]).is_err());
        assert_eq!(loglik_at(Family::Poisson, &m, &[1.0, 2.0, 3.0], &[0.0, 0.0]).unwrap(), -3.0);
    }
}
