//! Dense operators on tower coordinates and their `p → p` operator norms.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::duality::{gradient, norming_vector, select_norming};
use crate::error::{Error, Result};
use crate::rng;
use crate::tower::{sphere_coords, TowerSpec, TowerVector};

/// Search effort for a multistart estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub restarts: usize,
    pub iterations: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            restarts: 64,
            iterations: 5000,
            tol: 1e-8,
            seed: 0,
        }
    }
}

impl Budget {
    pub fn with_seed(self, seed: u64) -> Self {
        Budget { seed, ..self }
    }

    pub fn with_restarts(self, restarts: usize) -> Self {
        Budget { restarts, ..self }
    }

    /// Same effort, independent random stream.
    pub fn substream(self, stream: u64) -> Self {
        Budget {
            seed: rng::derive_seed(self.seed, stream),
            ..self
        }
    }
}

/// How an estimate was produced, enough to rerun it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub method: &'static str,
    pub seed: u64,
    pub restarts: usize,
    pub iterations: usize,
    pub tolerance: f64,
}

impl Provenance {
    pub(crate) fn closed_form(method: &'static str, budget: &Budget) -> Self {
        Provenance {
            method,
            seed: budget.seed,
            restarts: 0,
            iterations: 0,
            tolerance: budget.tol,
        }
    }
}

/// A linear map `X → X` stored as a dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: DMatrix<f64>,
    spec: Arc<TowerSpec>,
}

/// On-disk operator: dense row-major entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorFile {
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
}

impl Operator {
    pub fn new(spec: Arc<TowerSpec>, matrix: DMatrix<f64>) -> Result<Self> {
        let n = spec.dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::InvalidOperator(format!(
                "matrix is {}x{}, space has dimension {n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidOperator("non-finite entry".into()));
        }
        Ok(Operator { matrix, spec })
    }

    pub fn from_rows(spec: Arc<TowerSpec>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::InvalidOperator(format!(
                "row of length {} in a {n}-row matrix",
                r.len()
            )));
        }
        Self::new(spec, DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn from_file(spec: Arc<TowerSpec>, file: &OperatorFile) -> Result<Self> {
        if file.dim != file.rows.len() {
            return Err(Error::InvalidOperator(format!(
                "dim {} but {} rows",
                file.dim,
                file.rows.len()
            )));
        }
        Self::from_rows(spec, &file.rows)
    }

    pub fn to_file(&self) -> OperatorFile {
        OperatorFile {
            dim: self.dim(),
            rows: self.rows(),
        }
    }

    pub fn identity(spec: Arc<TowerSpec>) -> Self {
        let n = spec.dim();
        Operator {
            matrix: DMatrix::identity(n, n),
            spec,
        }
    }

    pub fn zeros(spec: Arc<TowerSpec>) -> Self {
        let n = spec.dim();
        Operator {
            matrix: DMatrix::zeros(n, n),
            spec,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn spec(&self) -> &Arc<TowerSpec> {
        &self.spec
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.matrix.row(i).iter().copied().collect())
            .collect()
    }

    pub fn apply(&self, x: &TowerVector) -> Result<TowerVector> {
        if **x.spec() != *self.spec {
            return Err(Error::SpecMismatch(
                "vector and operator live in different towers".into(),
            ));
        }
        let mut out = vec![0.0; self.dim()];
        matvec(&self.matrix, x.coords(), &mut out);
        TowerVector::new(self.spec.clone(), out)
    }

    pub fn scaled(&self, alpha: f64) -> Operator {
        Operator {
            matrix: &self.matrix * alpha,
            spec: self.spec.clone(),
        }
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        if self.spec != other.spec {
            return Err(Error::SpecMismatch(
                "operands live in different towers".into(),
            ));
        }
        Ok(Operator {
            matrix: &self.matrix + &other.matrix,
            spec: self.spec.clone(),
        })
    }
}

pub fn apply(t: &Operator, x: &TowerVector) -> Result<TowerVector> {
    t.apply(x)
}

pub(crate) fn matvec(a: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let n = a.nrows();
    let data = a.as_slice();
    out.iter_mut().for_each(|v| *v = 0.0);
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = &data[j * n..(j + 1) * n];
        for (o, &c) in out.iter_mut().zip(col) {
            *o += c * xj;
        }
    }
}

pub(crate) fn matvec_t(a: &DMatrix<f64>, y: &[f64], out: &mut [f64]) {
    let n = a.nrows();
    let data = a.as_slice();
    for (j, o) in out.iter_mut().enumerate() {
        let col = &data[j * n..(j + 1) * n];
        *o = col.iter().zip(y).map(|(c, v)| c * v).sum();
    }
}

/// A lower bound on `‖T‖` with the unit vector that attains it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    pub witness: TowerVector,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMethod {
    /// Closed form when the space admits one, else multistart.
    Auto,
    /// Always the multistart nonlinear power method.
    Multistart,
}

/// `‖T‖`, exact for flat ℓ_1, flat ℓ_∞ and Euclidean towers.
pub fn operator_norm(t: &Operator, budget: &Budget) -> NormEstimate {
    operator_norm_with(t, budget, NormMethod::Auto)
}

pub fn operator_norm_with(t: &Operator, budget: &Budget, method: NormMethod) -> NormEstimate {
    if method == NormMethod::Auto {
        if let Some(e) = closed_form_norm(t, budget) {
            return e;
        }
    }
    power_multistart(t, budget)
}

pub(crate) fn has_closed_form_norm(spec: &TowerSpec) -> bool {
    spec.is_euclidean()
        || spec
            .flat_exponent()
            .is_some_and(|p| p.is_one() || p.is_infinite())
}

pub(crate) fn closed_form_norm(t: &Operator, budget: &Budget) -> Option<NormEstimate> {
    let spec = t.spec();
    match spec.flat_exponent() {
        Some(p) if p.is_one() => Some(l1_norm(t, budget)),
        Some(p) if p.is_infinite() => Some(linf_norm(t, budget)),
        _ if spec.is_euclidean() => Some(spectral_norm(t, budget)),
        _ => None,
    }
}

fn ratio_at(t: &Operator, x: &[f64], buf: &mut [f64]) -> f64 {
    let n = t.spec.norm_of(x);
    if n == 0.0 {
        return 0.0;
    }
    matvec(&t.matrix, x, buf);
    t.spec.norm_of(buf) / n
}

fn finish(t: &Operator, x: Vec<f64>, provenance: Provenance) -> NormEstimate {
    let mut buf = vec![0.0; t.dim()];
    let value = ratio_at(t, &x, &mut buf);
    NormEstimate {
        value,
        witness: TowerVector::new(t.spec.clone(), x).expect("witness has ambient length"),
        provenance,
    }
}

fn l1_norm(t: &Operator, budget: &Budget) -> NormEstimate {
    let n = t.dim();
    let (best, _) = (0..n)
        .map(|j| (j, t.matrix.column(j).iter().map(|v| v.abs()).sum::<f64>()))
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, c| if c.1 > acc.1 { c } else { acc },
        );
    let mut x = vec![0.0; n];
    x[best] = 1.0;
    finish(t, x, Provenance::closed_form("max_column_sum", budget))
}

fn linf_norm(t: &Operator, budget: &Budget) -> NormEstimate {
    let n = t.dim();
    let (best, _) = (0..n)
        .map(|i| (i, t.matrix.row(i).iter().map(|v| v.abs()).sum::<f64>()))
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, c| if c.1 > acc.1 { c } else { acc },
        );
    let x = t
        .matrix
        .row(best)
        .iter()
        .map(|&v| if v < 0.0 { -1.0 } else { 1.0 })
        .collect();
    finish(t, x, Provenance::closed_form("max_row_sum", budget))
}

fn spectral_norm(t: &Operator, budget: &Budget) -> NormEstimate {
    let svd = t.matrix.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let (k, _) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc },
            );
    let mut x: Vec<f64> = v_t.row(k).iter().copied().collect();
    let n = t.spec.norm_of(&x);
    x.iter_mut().for_each(|v| *v /= n);
    finish(
        t,
        x,
        Provenance::closed_form("largest_singular_value", budget),
    )
}

/// One run of the nonlinear power method `x ← J*(Tᵀ J(Tx))`, where `J`
/// selects a norming functional and `J*` a norming vector. The ratio
/// `‖Tx‖/‖x‖` is nondecreasing along the iteration.
pub(crate) fn power_run(
    t: &Operator,
    dual: &TowerSpec,
    x0: Vec<f64>,
    max_iter: usize,
) -> (Vec<f64>, f64, usize) {
    let n = t.dim();
    let spec = &t.spec;
    let mut x = x0;
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut value = ratio_at(t, &x, &mut y);
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        matvec(&t.matrix, &x, &mut y);
        let Some(f) = select_norming(spec, &y) else {
            break;
        };
        matvec_t(&t.matrix, &f, &mut z);
        let next = if spec.is_smooth() {
            gradient(dual, &z)
        } else {
            norming_vector(spec, &z)
        };
        let Some(next) = next else {
            break;
        };
        let v = ratio_at(t, &next, &mut y);
        if v.is_nan() || v <= value {
            break;
        }
        let gain = v - value;
        x = next;
        value = v;
        if gain <= 1e-15 * value {
            break;
        }
    }
    (x, value, iterations)
}

fn power_multistart(t: &Operator, budget: &Budget) -> NormEstimate {
    let spec = t.spec.clone();
    let dual = spec.conjugate();
    let n = t.dim();
    // Coordinate starts first, then seeded random sphere points.
    let starts: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            let s = spec.norm_of(&e);
            e[i] = 1.0 / s;
            e
        })
        .chain((0..budget.restarts).map(|k| {
            let mut r = rng::stream_rng(budget.seed, k as u64);
            sphere_coords(&spec, n, &mut r)
        }))
        .collect();
    let runs: Vec<(Vec<f64>, f64, usize)> = starts
        .into_par_iter()
        .map(|x0| power_run(t, &dual, x0, budget.iterations))
        .collect();
    let total_iterations = runs.iter().map(|r| r.2).sum();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.1 > a.1 { b } else { a })
        .expect("at least one start");
    let mut x = best.0;
    let s = spec.norm_of(&x);
    if s > 0.0 {
        x.iter_mut().for_each(|v| *v /= s);
    }
    finish(
        t,
        x,
        Provenance {
            method: "multistart_power",
            seed: budget.seed,
            restarts: budget.restarts,
            iterations: total_iterations,
            tolerance: budget.tol,
        },
    )
}

/// `L ∘ Q_{m,j}` on `X_{m+j}` for `L` acting on `X_m`, where `m` is the depth
/// of `L`'s space and `ambient` is the tower it sits in.
pub fn compose_with_projection(
    l: &Operator,
    ambient: &Arc<TowerSpec>,
    j: usize,
) -> Result<Operator> {
    let m = l.spec.depth();
    let head = ambient.truncate(m)?;
    if head != *l.spec {
        return Err(Error::SpecMismatch(format!(
            "operator space is not level {m} of the ambient tower"
        )));
    }
    let target = Arc::new(ambient.truncate(m + j)?);
    let k = l.dim();
    let big = target.dim();
    let matrix = DMatrix::from_fn(big, big, |r, c| {
        if r < k && c < k {
            l.matrix[(r, c)]
        } else {
            0.0
        }
    });
    Ok(Operator {
        matrix,
        spec: target,
    })
}

/// `L ∘ Q_m` on the whole ambient tower.
pub fn embed(l: &Operator, ambient: &Arc<TowerSpec>) -> Result<Operator> {
    let j = ambient
        .depth()
        .checked_sub(l.spec.depth())
        .ok_or_else(|| Error::SpecMismatch("operator is deeper than the ambient tower".into()))?;
    compose_with_projection(l, ambient, j)
}

/// `P_m T|_{X_m}`: the top-left block of `T` as an operator on `X_m`.
pub fn compress(t: &Operator, m: usize) -> Result<Operator> {
    let spec = Arc::new(t.spec.truncate(m)?);
    let k = spec.dim();
    let matrix = t.matrix.view((0, 0), (k, k)).into_owned();
    Ok(Operator { matrix, spec })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    None,
    /// Divide by the estimated operator norm.
    UnitNorm(Budget),
}

/// Seeded standard-normal entries, optionally rescaled to `‖T‖ = 1`.
pub fn random_operator(spec: Arc<TowerSpec>, seed: u64, normalization: Normalization) -> Operator {
    let n = spec.dim();
    let mut r = rng::stream_rng(seed, 0x0_9e7a);
    let mut entries = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        entries.push(r.sample::<f64, _>(StandardNormal));
    }
    let t = Operator {
        matrix: DMatrix::from_row_slice(n, n, &entries),
        spec,
    };
    match normalization {
        Normalization::None => t,
        Normalization::UnitNorm(budget) => {
            let norm = operator_norm(&t, &budget).value;
            if norm > 0.0 {
                t.scaled(1.0 / norm)
            } else {
                t
            }
        }
    }
}
