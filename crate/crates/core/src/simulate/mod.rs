//! Seeded structural causal models: a small declarative SEM format, the
//! three built-in simulation designs, and covariate-shift interventions.

mod expr;
mod scm;

pub use expr::{Expr, Func};
pub use scm::{NodeSpec, ScmSpec, TargetSpec, ROW_BLOCK, SIM_THETA_CAP};

use crate::data::{Dataset, Shift};
use crate::edf::Family;
use crate::error::{Error, Result};

/// Default label-noise constant for the logistic design.
pub const FIG4_DEFAULT_PI: f64 = 0.1;
/// Default noise variance for the logistic design.
pub const FIG4_DEFAULT_NOISE_VAR: f64 = 1.0;
/// Noise variance shared by every node of the seven-covariate design.
pub const FIG3_NOISE_VAR: f64 = 0.04;

fn node(name: &str, parents: &[&str], expr: &str, noise_var: f64, hidden: bool) -> NodeSpec {
    NodeSpec {
        name: name.to_string(),
        parents: parents.iter().map(|s| s.to_string()).collect(),
        expr: expr.to_string(),
        noise_var,
        hidden,
    }
}

fn target(parents: &[&str], family: Family, expr: &str, latent: Option<&str>) -> TargetSpec {
    TargetSpec {
        name: "Y".to_string(),
        parents: parents.iter().map(|s| s.to_string()).collect(),
        family,
        expr: expr.to_string(),
        latent: latent.map(str::to_string),
    }
}

/// Two-covariate Poisson design: `X1 -> Y`, with `X2` a child of `Y`
/// through the hidden `Z`.
pub fn fig1_spec() -> ScmSpec {
    ScmSpec {
        nodes: vec![
            node("X1", &[], "0", 1.0, false),
            node("Z", &["X1"], "X1", 1.0, true),
            node("X2", &["Z"], "Z", 1.0, false),
        ],
        target: target(&["X1"], Family::Poisson, "X1", Some("Z")),
    }
}

/// Seven-covariate Poisson design with parents `{X2, X3}`.
pub fn fig3_spec() -> ScmSpec {
    let v = FIG3_NOISE_VAR;
    let f = "sin(5*X2) + cube(X3)";
    ScmSpec {
        nodes: vec![
            node("X1", &[], "0", v, false),
            node("X2", &["X1"], "X1", v, false),
            node("X3", &["X1", "X2"], "X1 + X2", v, false),
            node("Z", &["X2", "X3"], f, v, true),
            node("X4", &["X2"], "X2", v, false),
            node("X5", &["Z"], "Z", v, false),
            node("X6", &["Z"], "Z", v, false),
            node("X7", &["X6"], "X6", v, false),
        ],
        target: target(&["X2", "X3"], Family::Poisson, f, Some("Z")),
    }
}

/// Five-covariate logistic design with parents `{X2, X3}`; `X5` is a noisy
/// copy of `Y` whose labels flip with weight `pi`.
pub fn fig4_spec(pi: f64, noise_var: f64) -> Result<ScmSpec> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::Config(format!("pi must lie in (0, 1), got {pi}")));
    }
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(Error::Config(format!(
            "noise variance must be finite and nonnegative, got {noise_var}"
        )));
    }
    let v = noise_var;
    let x5 = format!("{} * Y + {} * (1 - Y)", 1.0 - pi, pi);
    Ok(ScmSpec {
        nodes: vec![
            node("X1", &[], "0", v, false),
            node("X2", &["X1"], "X1", v, false),
            node("X3", &[], "0", v, false),
            node("X4", &["X2"], "X2", v, false),
            node("X5", &["Y"], &x5, v, false),
        ],
        target: target(&["X2", "X3"], Family::Bernoulli, "0.8*X2 - 0.9*X3", None),
    })
}

fn tagged(mut data: Dataset, generator: &str) -> Dataset {
    data.meta.generator = Some(generator.to_string());
    data
}

pub fn gen_fig1(n: usize, seed: u64) -> Result<Dataset> {
    Ok(tagged(fig1_spec().generate(n, seed, None)?, "fig1"))
}

pub fn gen_fig3(n: usize, seed: u64) -> Result<Dataset> {
    Ok(tagged(fig3_spec().generate(n, seed, None)?, "fig3"))
}

pub fn gen_fig4(n: usize, seed: u64, pi: f64) -> Result<Dataset> {
    gen_fig4_with(n, seed, pi, FIG4_DEFAULT_NOISE_VAR)
}

pub fn gen_fig4_with(n: usize, seed: u64, pi: f64, noise_var: f64) -> Result<Dataset> {
    Ok(tagged(fig4_spec(pi, noise_var)?.generate(n, seed, None)?, "fig4"))
}

pub fn generate_from_spec(spec: &ScmSpec, n: usize, seed: u64) -> Result<Dataset> {
    Ok(tagged(spec.generate(n, seed, None)?, "spec"))
}

/// Regenerates `data` from its structural model with extra `N(0, sigma2)`
/// noise added to the assignments of `variables`, so that descendants
/// respond to the intervention. Base noise is drawn from `seed`; with
/// `sigma2 = 0` and the original seed the data are reproduced exactly.
pub fn apply_shift(data: &Dataset, sigma2: f64, variables: &[&str], seed: u64) -> Result<Dataset> {
    let scm = data
        .meta
        .scm
        .as_ref()
        .ok_or_else(|| Error::Config("dataset carries no structural model to intervene on".into()))?;
    let shift = Shift {
        sigma2,
        variables: variables.iter().map(|s| s.to_string()).collect(),
        seed,
    };
    let mut out = scm.generate(data.n_rows(), seed, Some(&shift))?;
    out.meta.generator = data.meta.generator.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        let d = gen_fig1(10, 1).unwrap();
        assert_eq!(d.names(), ["X1", "X2", "Y"]);
        let d = gen_fig3(10, 1).unwrap();
        assert_eq!(d.n_cols(), 8);
        assert_eq!(d.names()[7], "Y");
        let d = gen_fig4(10, 1, 0.1).unwrap();
        assert_eq!(d.names(), ["X1", "X2", "X3", "X4", "X5", "Y"]);
        assert!(gen_fig4(10, 1, 1.0).is_err());
        assert!(gen_fig1(0, 1).is_err());
    }

    #[test]
    fn shift_rejects_target_and_unknowns() {
        let d = gen_fig1(10, 1).unwrap();
        assert!(matches!(apply_shift(&d, 1.0, &["Y"], 1), Err(Error::Config(_))));
        assert!(matches!(
            apply_shift(&d, 1.0, &["X9"], 1),
            Err(Error::MissingColumn(_))
        ));
        assert_eq!(apply_shift(&d, 0.0, &["X1"], 1).unwrap().column("X2").unwrap(), d.column("X2").unwrap());
    }
}
