use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::expr::Expr;
use crate::data::{Dataset, Shift};
use crate::edf::Family;
use crate::error::{Error, Result};
use crate::rng;
use crate::special::normal_cdf;

/// Rows per RNG substream.
pub const ROW_BLOCK: usize = 1024;

/// Largest Poisson natural parameter the simulator will sample at
/// (a rate of about 4.9e8).
pub const SIM_THETA_CAP: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    #[serde(default)]
    pub parents: Vec<String>,
    pub expr: String,
    /// Variance of the additive normal noise; zero means none.
    #[serde(default)]
    pub noise_var: f64,
    /// Hidden nodes are generated but left out of the dataset.
    #[serde(default)]
    pub hidden: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    #[serde(default)]
    pub parents: Vec<String>,
    pub family: Family,
    /// Natural parameter `θ` as a function of the parents.
    pub expr: String,
    /// Node whose noise drives the target through
    /// `Y = F⁻¹(Φ(ε / σ))`; without it the target gets its own uniform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmSpec {
    pub nodes: Vec<NodeSpec>,
    pub target: TargetSpec,
}

struct Compiled<'a> {
    spec: &'a ScmSpec,
    /// Node expressions, indexed like `spec.nodes`.
    exprs: Vec<Expr>,
    target_expr: Expr,
    /// Evaluation order; `None` stands for the target.
    order: Vec<Option<usize>>,
    latent: Option<usize>,
}

impl ScmSpec {
    pub fn from_json(src: &str) -> Result<ScmSpec> {
        let spec: ScmSpec =
            serde_json::from_str(src).map_err(|e| Error::Config(format!("bad SEM spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.compile().map(|_| ())
    }

    /// Names of the generated dataset's columns: visible nodes in
    /// declaration order, then the target.
    pub fn column_names(&self) -> Vec<String> {
        self.nodes
            .iter()
            .filter(|n| !n.hidden)
            .map(|n| n.name.clone())
            .chain(std::iter::once(self.target.name.clone()))
            .collect()
    }

    fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    fn compile(&self) -> Result<Compiled<'_>> {
        let mut seen = BTreeSet::new();
        for name in self.nodes.iter().map(|n| &n.name).chain([&self.target.name]) {
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("node `{name}` declared twice")));
            }
        }
        let check = |name: &str, parents: &[String], expr: &str| -> Result<Expr> {
            for p in parents {
                if !seen.contains(p.as_str()) {
                    return Err(Error::Config(format!("`{name}` has unknown parent `{p}`")));
                }
                if p == name {
                    return Err(Error::Cyclic(format!("`{name}` is its own parent")));
                }
            }
            let e = Expr::parse(expr)?;
            if let Some(v) = e.vars().into_iter().find(|v| !parents.contains(v)) {
                return Err(Error::Expr(format!(
                    "assignment of `{name}` uses `{v}`, which is not among its parents"
                )));
            }
            Ok(e)
        };
        let mut exprs = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            if !(n.noise_var.is_finite() && n.noise_var >= 0.0) {
                return Err(Error::Config(format!(
                    "noise variance of `{}` must be finite and nonnegative",
                    n.name
                )));
            }
            exprs.push(check(&n.name, &n.parents, &n.expr)?);
        }
        let t = &self.target;
        let target_expr = check(&t.name, &t.parents, &t.expr)?;
        let latent = match &t.latent {
            None => None,
            Some(z) => {
                let i = self
                    .node_index(z)
                    .ok_or_else(|| Error::Config(format!("latent node `{z}` not declared")))?;
                if self.nodes[i].noise_var <= 0.0 {
                    return Err(Error::Config(format!(
                        "latent node `{z}` needs a positive noise variance"
                    )));
                }
                Some(i)
            }
        };

        // Kahn's algorithm; ties follow declaration order
        let k = self.nodes.len();
        let key = |name: &str| self.node_index(name).unwrap_or(k);
        let parents_of = |i: usize| -> &[String] {
            if i == k {
                &t.parents
            } else {
                &self.nodes[i].parents
            }
        };
        let mut indeg = vec![0usize; k + 1];
        let mut children = vec![Vec::new(); k + 1];
        for (i, d) in indeg.iter_mut().enumerate() {
            let ps: BTreeSet<usize> = parents_of(i).iter().map(|p| key(p)).collect();
            *d = ps.len();
            for p in ps {
                children[p].push(i);
            }
        }
        let mut ready: BTreeSet<usize> = (0..=k).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(k + 1);
        while let Some(i) = ready.pop_first() {
            order.push(if i == k { None } else { Some(i) });
            for &c in &children[i] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() != k + 1 {
            let stuck: Vec<String> = (0..=k)
                .filter(|&i| indeg[i] > 0)
                .map(|i| if i == k { t.name.clone() } else { self.nodes[i].name.clone() })
                .collect();
            return Err(Error::Cyclic(format!("cycle through {}", stuck.join(", "))));
        }
        Ok(Compiled {
            spec: self,
            exprs,
            target_expr,
            order,
            latent,
        })
    }

    /// Draws `n` rows. Each node's noise comes from its own substream keyed
    /// by node name and row block, so declaration order does not matter.
    pub fn generate(&self, n: usize, seed: u64, shift: Option<&Shift>) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::Config("sample size must be at least 1".into()));
        }
        let c = self.compile()?;
        if let Some(s) = shift {
            self.check_shift(s)?;
        }

        let noise: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|node| {
                let mut eps = normal_column(n, seed, &[rng::label(&node.name)], node.noise_var);
                if let Some(s) = shift.filter(|s| s.variables.contains(&node.name)) {
                    let extra = normal_column(
                        n,
                        s.seed,
                        &[rng::label("shift"), rng::label(&node.name)],
                        s.sigma2,
                    );
                    for (e, x) in eps.iter_mut().zip(extra) {
                        *e += x;
                    }
                }
                eps
            })
            .collect();

        let mut values: HashMap<String, Vec<f64>> = HashMap::new();
        for step in &c.order {
            match *step {
                Some(i) => {
                    let mut v = c.exprs[i].eval_columns(n, &values);
                    for (x, e) in v.iter_mut().zip(&noise[i]) {
                        *x += e;
                    }
                    values.insert(self.nodes[i].name.clone(), v);
                }
                None => {
                    let y = self.draw_target(&c, n, seed, &values)?;
                    values.insert(self.target.name.clone(), y);
                }
            }
        }

        let names = self.column_names();
        let columns = names
            .iter()
            .map(|nm| values.remove(nm).expect("generated column"))
            .collect();
        let mut data = Dataset::new(names, columns)?.with_target(&self.target.name)?;
        data.meta.seed = Some(seed);
        data.meta.shift = shift.cloned();
        data.meta.scm = Some(Arc::new(self.clone()));
        Ok(data)
    }

    fn draw_target(
        &self,
        c: &Compiled<'_>,
        n: usize,
        seed: u64,
        values: &HashMap<String, Vec<f64>>,
    ) -> Result<Vec<f64>> {
        let family = self.target.family;
        let theta = c.target_expr.eval_columns(n, values);
        if let Some(&bad) = theta
            .iter()
            .find(|t| !t.is_finite() || (family == Family::Poisson && **t > SIM_THETA_CAP))
        {
            return Err(Error::Overflow {
                theta: bad,
                cap: SIM_THETA_CAP,
            });
        }
        // (lower, upper) tail levels with upper = 1 - lower
        let levels: Vec<(f64, f64)> = match c.latent {
            Some(z) => {
                let node = &c.spec.nodes[z];
                let sd = node.noise_var.sqrt();
                let eps = normal_column(n, seed, &[rng::label(&node.name)], node.noise_var);
                eps.iter()
                    .map(|&e| (normal_cdf(e / sd), normal_cdf(-e / sd)))
                    .collect()
            }
            None => {
                let keys = [rng::label(&self.target.name), rng::label("uniform")];
                let mut u = vec![0.0; n];
                u.par_chunks_mut(ROW_BLOCK)
                    .enumerate()
                    .for_each(|(b, chunk)| {
                        let mut r = rng::substream(seed, &[keys[0], keys[1], b as u64]);
                        for x in chunk {
                            *x = r.random::<f64>();
                        }
                    });
                u.into_iter().map(|u| (u, 1.0 - u)).collect()
            }
        };
        Ok(theta
            .par_iter()
            .zip(levels.par_iter())
            .map(|(&t, &(lo, up))| family.quantile(t, lo, up))
            .collect())
    }

    fn check_shift(&self, shift: &Shift) -> Result<()> {
        if !(shift.sigma2.is_finite() && shift.sigma2 >= 0.0) {
            return Err(Error::Config(format!(
                "shift variance must be finite and nonnegative, got {}",
                shift.sigma2
            )));
        }
        for v in &shift.variables {
            if *v == self.target.name {
                return Err(Error::Config(format!("cannot shift the target `{v}`")));
            }
            if self.node_index(v).is_none() {
                return Err(Error::MissingColumn(v.clone()));
            }
        }
        Ok(())
    }
}

/// `n` draws of `N(0, var)`, one substream per row block.
fn normal_column(n: usize, seed: u64, keys: &[u64], var: f64) -> Vec<f64> {
    let mut out = vec![0.0; n];
    if var == 0.0 {
        return out;
    }
    let sd = var.sqrt();
    out.par_chunks_mut(ROW_BLOCK)
        .enumerate()
        .for_each(|(b, chunk)| {
            let mut k = keys.to_vec();
            k.push(b as u64);
            let mut r = rng::substream(seed, &k);
            for x in chunk {
                let z: f64 = r.sample(StandardNormal);
                *x = sd * z;
            }
        });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(name: &str, parents: &[&str], expr: &str, var: f64) -> NodeSpec {
        NodeSpec {
            name: name.into(),
            parents: parents.iter().map(|s| s.to_string()).collect(),
            expr: expr.into(),
            noise_var: var,
            hidden: false,
        }
    }

    fn chain() -> ScmSpec {
        ScmSpec {
            nodes: vec![node("A", &[], "0", 1.0), node("B", &["A"], "2*A", 0.5)],
            target: TargetSpec {
                name: "Y".into(),
                parents: vec!["B".into()],
                family: Family::Bernoulli,
                expr: "0.5*B".into(),
                latent: None,
            },
        }
    }

    #[test]
    fn detects_cycles_and_bad_references() {
        let mut s = chain();
        s.nodes[0].parents = vec!["B".into()];
        assert!(matches!(s.validate(), Err(Error::Cyclic(_))));

        let mut s = chain();
        s.nodes[1].expr = "A + C".into();
        assert!(s.validate().is_err());

        let mut s = chain();
        s.target.latent = Some("nope".into());
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn json_round_trip() {
        let s = chain();
        let back = ScmSpec::from_json(&s.to_json()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn block_boundaries_do_not_matter_for_prefixes() {
        let a = chain().generate(3000, 4, None).unwrap();
        let b = chain().generate(2100, 4, None).unwrap();
        assert_eq!(&a.column("A").unwrap()[..2100], b.column("A").unwrap());
        assert_eq!(&a.column("Y").unwrap()[..2100], b.column("Y").unwrap());
    }
}
