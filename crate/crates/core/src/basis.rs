//! Design matrices for covariate subsets: plain linear terms or additive
//! penalized cubic B-splines (P-splines), always with an unpenalized
//! intercept in column 0.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

const DEGREE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Linear,
    #[serde(rename = "spline")]
    AdditiveSpline,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::Linear => "linear",
            BasisKind::AdditiveSpline => "spline",
        })
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(BasisKind::Linear),
            "spline" | "additive-spline" => Ok(BasisKind::AdditiveSpline),
            other => Err(Error::Config(format!("unknown basis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    /// Columns per covariate for spline terms.
    pub spline_df: usize,
    /// Order of the difference penalty on spline coefficients.
    pub penalty_order: usize,
    pub intercept: bool,
}

impl Default for BasisSpec {
    fn default() -> Self {
        BasisSpec {
            kind: BasisKind::AdditiveSpline,
            spline_df: 8,
            penalty_order: 2,
            intercept: true,
        }
    }
}

impl BasisSpec {
    pub fn linear() -> Self {
        BasisSpec {
            kind: BasisKind::Linear,
            ..Default::default()
        }
    }

    pub fn spline(df: usize) -> Self {
        BasisSpec {
            spline_df: df,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == BasisKind::AdditiveSpline {
            if self.spline_df < 3 {
                return Err(Error::Config("spline_df must be at least 3".into()));
            }
            if self.penalty_order == 0 || self.penalty_order > self.spline_df {
                return Err(Error::Config(format!(
                    "penalty order {} invalid for spline_df {}",
                    self.penalty_order, self.spline_df
                )));
            }
        }
        Ok(())
    }

    /// Number of design columns for a subset of `k` covariates.
    pub fn n_columns(&self, k: usize) -> usize {
        let per = match self.kind {
            BasisKind::Linear => 1,
            BasisKind::AdditiveSpline => self.spline_df,
        };
        usize::from(self.intercept) + k * per
    }
}

/// Cubic B-spline basis with boundary knots `lo < hi`, strictly increasing
/// interior knots, and three extra knots on each side repeating the spacing
/// of the outermost interval.
#[derive(Debug, Clone, PartialEq)]
pub struct BSpline {
    lo: f64,
    hi: f64,
    knots: Vec<f64>,
}

impl BSpline {
    /// Knots from `breaks`, the boundary and interior knots in increasing
    /// order; the basis has `breaks.len() + 2` functions.
    pub fn from_breaks(breaks: &[f64]) -> Self {
        assert!(breaks.len() >= 2 && breaks.windows(2).all(|w| w[1] > w[0]));
        let m = breaks.len();
        let (left, right) = (breaks[1] - breaks[0], breaks[m - 1] - breaks[m - 2]);
        let mut knots: Vec<f64> = (1..=DEGREE)
            .rev()
            .map(|k| breaks[0] - k as f64 * left)
            .collect();
        knots.extend_from_slice(breaks);
        knots.extend((1..=DEGREE).map(|k| breaks[m - 1] + k as f64 * right));
        BSpline {
            lo: breaks[0],
            hi: breaks[m - 1],
            knots,
        }
    }

    /// `n_basis` functions on equally spaced knots over `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, n_basis: usize) -> Self {
        assert!(n_basis > DEGREE && hi > lo);
        let intervals = n_basis - DEGREE;
        let step = (hi - lo) / intervals as f64;
        let breaks: Vec<f64> = (0..=intervals)
            .map(|j| if j == intervals { hi } else { lo + j as f64 * step })
            .collect();
        BSpline::from_breaks(&breaks)
    }

    /// `n_basis` functions with knots at quantiles of the distinct values of
    /// `x`, which needs at least `n_basis - 2` of them.
    pub fn quantile(x: &[f64], n_basis: usize) -> Self {
        assert!(n_basis > DEGREE);
        let mut u = x.to_vec();
        u.sort_by(f64::total_cmp);
        u.dedup();
        let intervals = n_basis - DEGREE;
        assert!(u.len() > intervals);
        let last = (u.len() - 1) as f64;
        let breaks: Vec<f64> = (0..=intervals)
            .map(|k| {
                let pos = last * k as f64 / intervals as f64;
                let i = pos.floor() as usize;
                let frac = pos - i as f64;
                if frac == 0.0 {
                    u[i]
                } else {
                    u[i] + frac * (u[i + 1] - u[i])
                }
            })
            .collect();
        BSpline::from_breaks(&breaks)
    }

    pub fn n_basis(&self) -> usize {
        self.knots.len() - DEGREE - 1
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Greville abscissae: coefficients `a + b g_j` reproduce `a + b x`.
    pub fn greville(&self) -> Vec<f64> {
        (0..self.n_basis())
            .map(|j| (self.knots[j + 1] + self.knots[j + 2] + self.knots[j + 3]) / 3.0)
            .collect()
    }

    /// Cox-de Boor table at a point inside the range; returns the degree-2
    /// and degree-3 values.
    fn table(&self, x: f64) -> (Vec<f64>, Vec<f64>) {
        let t = &self.knots;
        let nk = t.len();
        let mut cur = vec![0.0; nk - 1];
        // interval index, with the right endpoint folded into the last one
        let first = DEGREE;
        let last = nk - DEGREE - 2;
        let i = t.partition_point(|&k| k <= x).saturating_sub(1).clamp(first, last);
        cur[i] = 1.0;
        let mut deg2 = Vec::new();
        for d in 1..=DEGREE {
            let mut next = vec![0.0; nk - 1 - d];
            for (j, v) in next.iter_mut().enumerate() {
                let left = (x - t[j]) / (t[j + d] - t[j]) * cur[j];
                let right = (t[j + d + 1] - x) / (t[j + d + 1] - t[j + 1]) * cur[j + 1];
                *v = left + right;
            }
            if d == DEGREE - 1 {
                deg2 = next.clone();
            }
            cur = next;
        }
        (deg2, cur)
    }

    /// Basis values at `x`; linear extrapolation outside the range.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        if x >= self.lo && x <= self.hi {
            return self.table(x).1;
        }
        let edge = if x < self.lo { self.lo } else { self.hi };
        let (d2, vals) = self.table(edge);
        let t = &self.knots;
        let dx = x - edge;
        let p = DEGREE as f64;
        vals.iter()
            .enumerate()
            .map(|(j, v)| {
                let slope = p * (d2[j] / (t[j + DEGREE] - t[j])
                    - d2[j + 1] / (t[j + DEGREE + 1] - t[j + 1]));
                v + dx * slope
            })
            .collect()
    }

    /// Divided differences of the given order over the Greville abscissae,
    /// scaled by `order! * h^order` with `h` the mean abscissa spacing. On
    /// equally spaced knots this is the plain difference matrix; on any knots
    /// it annihilates coefficients that are polynomial in `x` of degree below
    /// `order`.
    pub fn penalty_differences(&self, order: usize) -> DMatrix<f64> {
        let g = self.greville();
        let k = g.len();
        let h = (g[k - 1] - g[0]) / (k - 1) as f64;
        let mut d = DMatrix::<f64>::identity(k, k);
        for m in 1..=order {
            let rows = d.nrows();
            let mut next = DMatrix::<f64>::zeros(rows - 1, k);
            for r in 0..rows - 1 {
                let diff = (d.row(r + 1) - d.row(r)) * (m as f64 * h / (g[r + m] - g[r]));
                next.set_row(r, &diff);
            }
            d = next;
        }
        d
    }
}

/// Difference matrix of the given order for `k` coefficients.
pub fn difference_matrix(k: usize, order: usize) -> DMatrix<f64> {
    let mut d = DMatrix::<f64>::identity(k, k);
    for _ in 0..order {
        let rows = d.nrows();
        let mut next = DMatrix::<f64>::zeros(rows - 1, k);
        for r in 0..rows - 1 {
            let diff = d.row(r + 1) - d.row(r);
            next.set_row(r, &diff);
        }
        d = next;
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Linear {
        name: String,
    },
    /// `spline.n_basis() - 1` columns: the first raw basis function is
    /// absorbed by the intercept, the rest are centered by `means`.
    Spline {
        name: String,
        spline: BSpline,
        means: Vec<f64>,
    },
}

impl Term {
    pub fn name(&self) -> &str {
        match self {
            Term::Linear { name } | Term::Spline { name, .. } => name,
        }
    }

    fn width(&self) -> usize {
        match self {
            Term::Linear { .. } => 1,
            Term::Spline { means, .. } => means.len(),
        }
    }

    fn fill(&self, x: &[f64], out: &mut DMatrix<f64>, col0: usize) {
        match self {
            Term::Linear { .. } => {
                for (i, &v) in x.iter().enumerate() {
                    out[(i, col0)] = v;
                }
            }
            Term::Spline { spline, means, .. } => {
                for (i, &v) in x.iter().enumerate() {
                    let b = spline.eval(v);
                    for (k, m) in means.iter().enumerate() {
                        out[(i, col0 + k)] = b[k + 1] - m;
                    }
                }
            }
        }
    }
}

/// Basis expansion of one covariate subset together with its penalty.
#[derive(Debug, Clone)]
pub struct Design {
    pub matrix: DMatrix<f64>,
    pub penalty: DMatrix<f64>,
    /// Column labels; `(Intercept)` first.
    pub columns: Vec<String>,
    /// Source covariate per column (`None` for the intercept).
    pub column_source: Vec<Option<String>>,
    /// Data-column indices of the subset, in the order given.
    pub subset: Vec<usize>,
    pub terms: Vec<Term>,
    pub spec: BasisSpec,
}

impl Design {
    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn subset_names(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.name().to_string()).collect()
    }

    /// True when the penalty matrix is identically zero.
    pub fn is_unpenalized(&self) -> bool {
        self.penalty.iter().all(|&v| v == 0.0)
    }

    fn expand(terms: &[Term], spec: &BasisSpec, data: &Dataset) -> Result<DMatrix<f64>> {
        let n = data.n_rows();
        let q = usize::from(spec.intercept) + terms.iter().map(Term::width).sum::<usize>();
        let mut m = DMatrix::<f64>::zeros(n, q);
        let mut col = 0;
        if spec.intercept {
            m.column_mut(0).fill(1.0);
            col = 1;
        }
        for t in terms {
            let x = data.column(t.name())?;
            t.fill(x, &mut m, col);
            col += t.width();
        }
        Ok(m)
    }

    /// Evaluates the basis at new rows, matching covariates by name.
    pub fn eval(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        Design::expand(&self.terms, &self.spec, data)
    }
}

fn distinct_count(x: &[f64]) -> usize {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// Builds the design for the data columns `subset` (indices into `data`).
pub fn build_design(data: &Dataset, subset: &[usize], spec: &BasisSpec) -> Result<Design> {
    spec.validate()?;
    let mut terms = Vec::with_capacity(subset.len());
    for &idx in subset {
        if idx >= data.n_cols() {
            return Err(Error::Config(format!("column index {idx} out of range")));
        }
        let name = data.names()[idx].clone();
        let x = data.column_at(idx);
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value {bad} in `{name}`")));
        }
        terms.push(match spec.kind {
            BasisKind::Linear => Term::Linear { name },
            BasisKind::AdditiveSpline => {
                let distinct = distinct_count(x);
                if distinct < spec.spline_df {
                    return Err(Error::InsufficientDistinct {
                        column: name,
                        distinct,
                        needed: spec.spline_df,
                    });
                }
                let spline = BSpline::quantile(x, spec.spline_df + 1);
                let mut means = vec![0.0; spec.spline_df];
                for &v in x {
                    for (m, b) in means.iter_mut().zip(spline.eval(v).iter().skip(1)) {
                        *m += b;
                    }
                }
                means.iter_mut().for_each(|m| *m /= x.len() as f64);
                Term::Spline {
                    name,
                    spline,
                    means,
                }
            }
        });
    }

    let matrix = Design::expand(&terms, spec, data)?;
    let q = matrix.ncols();
    let mut penalty = DMatrix::<f64>::zeros(q, q);
    let mut columns = Vec::with_capacity(q);
    let mut column_source = Vec::with_capacity(q);
    let mut col = 0;
    if spec.intercept {
        columns.push("(Intercept)".to_string());
        column_source.push(None);
        col = 1;
    }
    for t in &terms {
        match t {
            Term::Linear { name } => {
                columns.push(name.clone());
                column_source.push(Some(name.clone()));
            }
            Term::Spline { name, spline, means } => {
                let k = means.len();
                let d = spline.penalty_differences(spec.penalty_order);
                let full = d.transpose() * d;
                penalty
                    .view_mut((col, col), (k, k))
                    .copy_from(&full.view((1, 1), (k, k)));
                for j in 0..k {
                    columns.push(format!("s({name}).{}", j + 1));
                    column_source.push(Some(name.clone()));
                }
            }
        }
        col += t.width();
    }

    let design = Design {
        matrix,
        penalty,
        columns,
        column_source,
        subset: subset.to_vec(),
        terms,
        spec: *spec,
    };
    if !full_column_rank(&design.matrix) {
        return Err(Error::RankDeficient {
            subset: design.subset_names(),
        });
    }
    Ok(design)
}

/// Convenience wrapper taking covariate names.
pub fn build_design_named(data: &Dataset, names: &[&str], spec: &BasisSpec) -> Result<Design> {
    let idx = names
        .iter()
        .map(|n| data.index_of(n))
        .collect::<Result<Vec<_>>>()?;
    build_design(data, &idx, spec)
}

/// Smallest admissible eigenvalue ratio of the unit-diagonal Gram matrix.
/// Its eigenvalues carry absolute error of order `q * eps`, so smaller
/// ratios cannot be told apart from exact dependence.
pub const GRAM_RANK_TOL: f64 = 1e-12;

fn full_column_rank(x: &DMatrix<f64>) -> bool {
    if x.nrows() < x.ncols() {
        return false;
    }
    let g = x.tr_mul(x);
    let d: Vec<f64> = g.diagonal().iter().map(|v| v.sqrt()).collect();
    if d.contains(&0.0) {
        return false;
    }
    let scaled = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)] / (d[i] * d[j]));
    let eig = SymmetricEigen::new(scaled).eigenvalues;
    let max = eig.iter().copied().fold(0.0, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    min > GRAM_RANK_TOL * max
}
