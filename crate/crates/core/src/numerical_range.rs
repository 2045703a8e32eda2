//! Numerical radius `ν(T) = sup { |f(Tx)| : ‖x‖ = 1, f ∈ N(x) }` and the
//! level-wise quantities built from it.

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::duality::{
    dot, gradient_into, norm_and_gradient, norming_set, norming_sup_raw, Functional,
};
use crate::error::{Error, Result};
use crate::operators::{compose_with_projection, matvec, matvec_t, Budget, Operator, Provenance};
use crate::optim::{bfgs_maximize, pattern_maximize, PatternOptions, SmoothObjective};
use crate::rng;
use crate::tower::{sphere_coords, TowerSpec, TowerVector};

/// A point of the numerical range: `lambda = f(Tx)` with `f ∈ N(x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatePair {
    pub x: TowerVector,
    pub functional: Functional,
    pub lambda: f64,
}

/// Lower bound on `ν(T)`; `value` is `|lambda|` of the witness.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusEstimate {
    pub value: f64,
    pub witness: StatePair,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadiusMethod {
    /// Closed form for Euclidean towers, otherwise the optimizer.
    Auto,
    /// Always run the multistart optimizer.
    Optimize,
}

pub fn numerical_radius(t: &Operator, budget: &Budget) -> RadiusEstimate {
    numerical_radius_with(t, budget, RadiusMethod::Auto)
}

pub fn numerical_radius_with(
    t: &Operator,
    budget: &Budget,
    method: RadiusMethod,
) -> RadiusEstimate {
    radius_of_matrix(t.spec(), t.matrix(), budget, method, &[])
}

/// `x ↦ s·f_x(Ax)` with `f_x` the gradient of the norm at `x`. Invariant under
/// positive scaling of `x`, so it is maximized over all of `ℝⁿ \ {0}`.
struct StateObjective<'a> {
    spec: &'a TowerSpec,
    a: &'a DMatrix<f64>,
    sign: f64,
    last: RefCell<Option<Parts>>,
}

#[derive(Clone)]
struct Parts {
    x: Vec<f64>,
    norm: f64,
    g: Vec<f64>,
    ax: Vec<f64>,
}

impl<'a> StateObjective<'a> {
    fn new(spec: &'a TowerSpec, a: &'a DMatrix<f64>, sign: f64) -> Self {
        StateObjective {
            spec,
            a,
            sign,
            last: RefCell::new(None),
        }
    }

    /// Norm, gradient and `Ax` at `x`; the line search evaluates the point
    /// that the next gradient call asks for, so the last one is kept.
    fn parts(&self, x: &[f64]) -> Option<Parts> {
        if let Some(p) = self.last.borrow().as_ref().filter(|p| p.x == x) {
            return Some(p.clone());
        }
        let n = x.len();
        let mut g = vec![0.0; n];
        let norm = norm_and_gradient(self.spec, x, &mut g)?;
        let mut ax = vec![0.0; n];
        matvec(self.a, x, &mut ax);
        let p = Parts {
            x: x.to_vec(),
            norm,
            g,
            ax,
        };
        *self.last.borrow_mut() = Some(p.clone());
        Some(p)
    }
}

impl SmoothObjective for StateObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        match self.parts(x) {
            Some(p) => self.sign * dot(&p.g, &p.ax) / p.norm,
            None => f64::NEG_INFINITY,
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let Some(Parts { norm, g, ax, .. }) = self.parts(x) else {
            out.iter_mut().for_each(|v| *v = f64::NAN);
            return;
        };
        let n = x.len();
        let phi = self.sign * dot(&g, &ax) / norm;
        // ∇(gᵀAx) = H·Ax + Aᵀg. Flat ℓ_p has the closed form
        // H = (p−1)/N·(diag(|g_i|/|x̂_i|) − g gᵀ); otherwise the product is a
        // central difference of the analytic gradient along Ax.
        let hv = flat_hessian_product(self.spec, x, norm, &g, &ax).unwrap_or_else(|| {
            let mut hv = vec![0.0; n];
            let vs = l2(&ax);
            if vs > 0.0 {
                let eps = 1e-5 * l2(x) / vs;
                let mut plus = vec![0.0; n];
                let mut minus = vec![0.0; n];
                let xp: Vec<f64> = x.iter().zip(&ax).map(|(a, b)| a + eps * b).collect();
                let xm: Vec<f64> = x.iter().zip(&ax).map(|(a, b)| a - eps * b).collect();
                if gradient_into(self.spec, &xp, &mut plus)
                    && gradient_into(self.spec, &xm, &mut minus)
                {
                    for i in 0..n {
                        hv[i] = (plus[i] - minus[i]) / (2.0 * eps);
                    }
                }
            }
            hv
        });
        let mut atg = vec![0.0; n];
        matvec_t(self.a, &g, &mut atg);
        for i in 0..n {
            out[i] = self.sign * (hv[i] + atg[i]) / norm - phi * g[i] / norm;
        }
    }

    fn rescale(&self, x: &mut [f64]) -> bool {
        let norm = self.spec.norm_of(x);
        if norm > 0.0 && !(0.5..=2.0).contains(&norm) {
            x.iter_mut().for_each(|v| *v /= norm);
            true
        } else {
            false
        }
    }
}

fn flat_hessian_product(
    spec: &TowerSpec,
    x: &[f64],
    norm: f64,
    g: &[f64],
    v: &[f64],
) -> Option<Vec<f64>> {
    let p = spec.flat_exponent()?.value();
    if p < 2.0 && x.contains(&0.0) {
        return None;
    }
    let gv = dot(g, v);
    let scale = (p - 1.0) / norm;
    Some(
        x.iter()
            .zip(g)
            .zip(v)
            .map(|((&xi, &gi), &vi)| {
                let d = if xi == 0.0 {
                    0.0
                } else {
                    gi.abs() * norm / xi.abs()
                };
                scale * (d * vi - gi * gv)
            })
            .collect(),
    )
}

fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn normalize(spec: &TowerSpec, x: &mut [f64]) {
    let n = spec.norm_of(x);
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

/// Candidate moves on the flat ℓ_1 sphere: coordinate nudges plus snapping a
/// coordinate to zero, which reaches lower-dimensional faces exactly.
fn l1_moves(x: &[f64], step: f64, out: &mut Vec<Vec<f64>>) {
    let support = x.iter().filter(|&&v| v != 0.0).count();
    for i in 0..x.len() {
        if x[i] != 0.0 && support > 1 {
            let mut c = x.to_vec();
            c[i] = 0.0;
            out.push(c);
        }
    }
    for i in 0..x.len() {
        for s in [step, -step] {
            let mut c = x.to_vec();
            c[i] += s;
            out.push(c);
        }
    }
    for c in out.iter_mut() {
        let n: f64 = c.iter().map(|v| v.abs()).sum();
        c.iter_mut().for_each(|v| *v /= n);
    }
}

/// Candidate moves on the flat ℓ_∞ sphere: nudges plus snapping a coordinate
/// to `±‖x‖_∞`, which reaches vertices and edges exactly.
fn linf_moves(x: &[f64], step: f64, out: &mut Vec<Vec<f64>>) {
    let peak = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for i in 0..x.len() {
        if x[i].abs() < peak {
            let targets: &[f64] = if x[i] > 0.0 {
                &[1.0]
            } else if x[i] < 0.0 {
                &[-1.0]
            } else {
                &[1.0, -1.0]
            };
            for &t in targets {
                let mut c = x.to_vec();
                c[i] = t * peak;
                out.push(c);
            }
        }
    }
    for i in 0..x.len() {
        for s in [step, -step] {
            let mut c = x.to_vec();
            c[i] += s;
            out.push(c);
        }
    }
    for c in out.iter_mut() {
        let n = c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        c.iter_mut().for_each(|v| *v /= n);
    }
}

/// A converged local ascent: `value = sign·f_x(Ax)` at the unit-scaled `x`.
#[derive(Debug, Clone)]
pub(crate) struct LocalMax {
    pub x: Vec<f64>,
    pub sign: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Local ascent of `x ↦ sup_{f ∈ N(x)} sign·f(Ax)` from `x0`. `precision` is
/// the gradient tolerance for smooth spaces and the final pattern step
/// otherwise.
pub(crate) fn local_ascent(
    spec: &TowerSpec,
    a: &DMatrix<f64>,
    x0: &[f64],
    sign: f64,
    iterations: usize,
    precision: f64,
) -> LocalMax {
    let n = x0.len();
    let r = if spec.is_smooth() {
        let obj = StateObjective::new(spec, a, sign);
        bfgs_maximize(
            &obj,
            x0.to_vec(),
            iterations,
            precision,
            (precision * 1e-4).max(1e-15),
        )
    } else {
        let p = spec.flat_exponent().expect("nonsmooth spaces are flat");
        let mut ax = vec![0.0; n];
        let f = |x: &[f64]| {
            matvec(a, x, &mut ax);
            ax.iter_mut().for_each(|v| *v *= sign);
            norming_sup_raw(spec, x, &ax).unwrap_or(f64::NEG_INFINITY)
        };
        let opts = PatternOptions {
            initial_step: 0.25,
            min_step: precision,
            max_evals: iterations.max(1) * 4 * n,
        };
        if p.is_one() {
            pattern_maximize(f, l1_moves, x0.to_vec(), opts)
        } else {
            pattern_maximize(f, linf_moves, x0.to_vec(), opts)
        }
    };
    let mut x = r.x;
    normalize(spec, &mut x);
    LocalMax {
        x,
        sign,
        value: r.value,
        iterations: r.iterations,
    }
}

/// Local ascents from every warm start (with its sign) and from
/// `budget.restarts` seeded sphere points (both signs each).
pub(crate) fn radius_runs(
    spec: &TowerSpec,
    a: &DMatrix<f64>,
    budget: &Budget,
    warm: &[(Vec<f64>, f64)],
    precision: f64,
) -> Vec<LocalMax> {
    let n = spec.dim();
    let mut starts: Vec<(Vec<f64>, f64)> = warm
        .iter()
        .filter(|(w, _)| w.len() == n && spec.norm_of(w) > 0.0)
        .cloned()
        .collect();
    let random = if starts.is_empty() {
        budget.restarts.max(1)
    } else {
        budget.restarts
    };
    // On flat ℓ_1 the radius is attained at a vertex ±e_j of the ball.
    if budget.restarts > 0 && spec.flat_exponent().is_some_and(|p| p.is_one()) {
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            starts.push((e.clone(), 1.0));
            starts.push((e, -1.0));
        }
    }
    for k in 0..random {
        let mut r = rng::stream_rng(budget.seed, k as u64);
        let x = sphere_coords(spec, n, &mut r);
        starts.push((x.clone(), 1.0));
        starts.push((x, -1.0));
    }
    starts
        .par_iter()
        .map(|(x0, sign)| local_ascent(spec, a, x0, *sign, budget.iterations, precision))
        .collect()
}

/// Highest value, earliest on ties.
pub(crate) fn best_run(runs: &[LocalMax]) -> &LocalMax {
    runs.iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("at least one run")
}

/// Builds the reported state from a unit vector, recomputing the pairing.
fn state_at(spec: &Arc<TowerSpec>, a: &DMatrix<f64>, x: Vec<f64>, sign: f64) -> StatePair {
    let n = x.len();
    let x = TowerVector::new(spec.clone(), x).expect("witness has ambient length");
    let mut ax = vec![0.0; n];
    matvec(a, x.coords(), &mut ax);
    let signed: Vec<f64> = ax.iter().map(|v| v * sign).collect();
    let functional = norming_set(&x)
        .expect("witness is nonzero")
        .maximizer(&signed);
    let lambda = dot(functional.coords(), &ax);
    StatePair {
        x,
        functional,
        lambda,
    }
}

fn euclidean_radius(spec: &Arc<TowerSpec>, a: &DMatrix<f64>, budget: &Budget) -> RadiusEstimate {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let (k, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &l)| {
            if l.abs() > acc.1 {
                (i, l.abs())
            } else {
                acc
            }
        });
    let mut x: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    normalize(spec, &mut x);
    let sign = if eig.eigenvalues[k] < 0.0 { -1.0 } else { 1.0 };
    let witness = state_at(spec, a, x, sign);
    RadiusEstimate {
        value: witness.lambda.abs(),
        witness,
        provenance: Provenance::closed_form("symmetric_part_eigenvalue", budget),
    }
}

/// Shared engine: `ν` of the matrix `a` acting on `spec`, from `budget.restarts`
/// seeded random starts plus any caller-supplied warm starts.
pub(crate) fn radius_of_matrix(
    spec: &Arc<TowerSpec>,
    a: &DMatrix<f64>,
    budget: &Budget,
    method: RadiusMethod,
    warm: &[(Vec<f64>, f64)],
) -> RadiusEstimate {
    if method == RadiusMethod::Auto && spec.is_euclidean() {
        return euclidean_radius(spec, a, budget);
    }
    let runs = radius_runs(spec, a, budget, warm, budget.tol * 1e-2);
    let iterations = runs.iter().map(|c| c.iterations).sum();
    let best = best_run(&runs);
    let witness = state_at(spec, a, best.x.clone(), best.sign);
    RadiusEstimate {
        value: witness.lambda.abs(),
        witness,
        provenance: Provenance {
            method: if spec.is_smooth() {
                "multistart_bfgs"
            } else {
                "multistart_pattern_search"
            },
            seed: budget.seed,
            restarts: budget.restarts,
            iterations,
            tolerance: budget.tol,
        },
    }
}

/// Seeded draws from the numerical range: random unit `x` and a random
/// `f ∈ N(x)`, returning `f(Tx)`.
pub fn sample_numerical_range(t: &Operator, samples: usize, seed: u64) -> Vec<f64> {
    let spec = t.spec();
    let mut r = rng::rng_from(seed);
    let mut tx = vec![0.0; t.dim()];
    (0..samples)
        .map(|_| {
            let x = TowerVector::new(spec.clone(), sphere_coords(spec, spec.dim(), &mut r))
                .expect("sample has ambient length");
            let f = norming_set(&x).expect("sample is nonzero").sample(&mut r);
            matvec(t.matrix(), x.coords(), &mut tx);
            dot(f.coords(), &tx)
        })
        .collect()
}

/// Seeded unit starts supported on the first `active` coordinates, both
/// signs each, complementing the ambient random starts of the multistart.
pub(crate) fn level_starts(
    spec: &TowerSpec,
    active: usize,
    budget: &Budget,
) -> Vec<(Vec<f64>, f64)> {
    if active == spec.dim() {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(2 * budget.restarts);
    for k in 0..budget.restarts {
        let mut r = rng::stream_rng(budget.seed, (1 << 40) | k as u64);
        let x = sphere_coords(spec, active, &mut r);
        out.push((x.clone(), 1.0));
        out.push((x, -1.0));
    }
    out
}

/// `n_1(L) = sup_{j ≤ m} ν_X(P_j L P_j)` for `L` on `X_m`, with states taken
/// from the ambient unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct N1Estimate {
    pub value: f64,
    /// Smallest level whose value is within tolerance of the maximum.
    pub level: usize,
    pub per_level: Vec<f64>,
    pub witness: StatePair,
    pub provenance: Provenance,
}

pub fn n1_of_operator(
    l: &Operator,
    ambient: &Arc<TowerSpec>,
    budget: &Budget,
) -> Result<N1Estimate> {
    let m = l.spec().depth();
    if ambient.depth() < m || ambient.truncate(m)? != **l.spec() {
        return Err(Error::SpecMismatch(format!(
            "operator space is not level {m} of the ambient tower"
        )));
    }
    let n = ambient.dim();
    let mut per_level = Vec::with_capacity(m);
    let mut estimates = Vec::with_capacity(m);
    for j in 1..=m {
        let k = ambient.level_dim(j);
        let block = DMatrix::from_fn(n, n, |r, c| {
            if r < k && c < k {
                l.matrix()[(r, c)]
            } else {
                0.0
            }
        });
        let level_budget = budget.substream(j as u64);
        let e = radius_of_matrix(
            ambient,
            &block,
            &level_budget,
            RadiusMethod::Auto,
            &level_starts(ambient, k, &level_budget),
        );
        per_level.push(e.value);
        estimates.push(e);
    }
    let max = per_level.iter().copied().fold(0.0_f64, f64::max);
    let idx = per_level
        .iter()
        .position(|&v| v >= max - budget.tol)
        .unwrap_or(0);
    let chosen = estimates.swap_remove(idx);
    Ok(N1Estimate {
        value: chosen.value,
        level: idx + 1,
        per_level,
        witness: chosen.witness,
        provenance: Provenance {
            seed: budget.seed,
            ..chosen.provenance
        },
    })
}

/// `w_{m+j} = ν(L ∘ Q_{m,j})` on `X_{m+j}` for `j = 0..=j_max`.
pub fn w_sequence(
    l: &Operator,
    ambient: &Arc<TowerSpec>,
    j_max: usize,
    budget: &Budget,
) -> Result<Vec<RadiusEstimate>> {
    let m = l.spec().depth();
    if m + j_max > ambient.depth() {
        return Err(Error::LevelOutOfRange {
            level: m + j_max,
            depth: ambient.depth(),
        });
    }
    (0..=j_max)
        .map(|j| {
            let op = compose_with_projection(l, ambient, j)?;
            Ok(numerical_radius(&op, &budget.substream(j as u64)))
        })
        .collect()
}

/// `ν(L ∘ Q_m)` on the whole ambient tower.
pub fn w_infinity(
    l: &Operator,
    ambient: &Arc<TowerSpec>,
    budget: &Budget,
) -> Result<RadiusEstimate> {
    let op = crate::operators::embed(l, ambient)?;
    Ok(numerical_radius(&op, &budget.substream(u64::MAX)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{operator_norm, random_operator, Normalization};
    use crate::tower::Exponent;

    fn p(v: f64) -> Exponent {
        Exponent::new(v).unwrap()
    }

    fn quick() -> Budget {
        Budget {
            restarts: 16,
            ..Budget::default()
        }
    }

    fn flat(dim: usize, q: Exponent) -> Arc<TowerSpec> {
        Arc::new(TowerSpec::flat_coordinates(dim, q).unwrap())
    }

    #[test]
    fn identity_has_radius_one() {
        for s in [
            flat(3, Exponent::ONE),
            flat(3, Exponent::INFINITY),
            flat(3, p(1.5)),
            Arc::new(TowerSpec::tower(vec![2, 2, 1], vec![p(2.0), p(2.5)]).unwrap()),
        ] {
            let e = numerical_radius(&Operator::identity(s.clone()), &quick());
            assert!((e.value - 1.0).abs() < 1e-12, "{s}: {}", e.value);
        }
    }

    #[test]
    fn nilpotent_on_l2() {
        let t = Operator::from_rows(flat(2, p(2.0)), &[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!((numerical_radius(&t, &quick()).value - 0.5).abs() < 1e-12);
        let opt = numerical_radius_with(&t, &quick(), RadiusMethod::Optimize);
        assert!((opt.value - 0.5).abs() < 1e-8, "{}", opt.value);
    }

    #[test]
    fn nilpotent_on_l1_and_linf() {
        for q in [Exponent::ONE, Exponent::INFINITY] {
            let t = Operator::from_rows(flat(2, q), &[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
            let e = numerical_radius(&t, &quick());
            assert!((e.value - 1.0).abs() < 1e-9, "p={q}: {}", e.value);
        }
    }

    #[test]
    fn rotation_has_zero_radius_on_l2() {
        let t = Operator::from_rows(flat(2, p(2.0)), &[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        assert!(numerical_radius(&t, &quick()).value < 1e-12);
        let opt = numerical_radius_with(&t, &quick(), RadiusMethod::Optimize);
        assert!(opt.value < 1e-8, "{}", opt.value);
    }

    #[test]
    fn witness_realizes_the_value() {
        let s = Arc::new(TowerSpec::tower(vec![1, 2, 1], vec![p(1.5), p(3.0)]).unwrap());
        let t = random_operator(s, 4, Normalization::None);
        let e = numerical_radius(&t, &quick());
        let tx = t.apply(&e.witness.x).unwrap();
        let pairing = e.witness.functional.pair(&tx).unwrap();
        assert!((pairing - e.witness.lambda).abs() < 1e-12);
        assert!((e.value - pairing.abs()).abs() < 1e-12);
        assert!((e.witness.x.norm() - 1.0).abs() < 1e-12);
        assert!((e.witness.functional.dual_norm() - 1.0).abs() < 1e-9);
        assert!((e.witness.functional.pair(&e.witness.x).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn optimizer_matches_euclidean_closed_form() {
        let s = Arc::new(TowerSpec::tower(vec![2, 1, 2], vec![p(2.0), p(2.0)]).unwrap());
        for seed in 0..10 {
            let t = random_operator(s.clone(), seed, Normalization::None);
            let exact = numerical_radius(&t, &quick()).value;
            let opt = numerical_radius_with(&t, &quick(), RadiusMethod::Optimize).value;
            assert!(
                (exact - opt).abs() < 1e-7 * exact.max(1.0),
                "{exact} vs {opt}"
            );
        }
    }

    #[test]
    fn radius_bounds() {
        for (i, s) in [flat(3, p(1.5)), flat(3, Exponent::ONE), flat(3, p(4.0))]
            .into_iter()
            .enumerate()
        {
            for seed in 0..5 {
                let t = random_operator(s.clone(), seed + 10 * i as u64, Normalization::None);
                let nu = numerical_radius(&t, &quick()).value;
                let norm = operator_norm(&t, &quick()).value;
                assert!(nu <= norm + 1e-9);
                let samples = sample_numerical_range(&t, 200, seed);
                let peak = samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                assert!(peak <= nu + 1e-9, "sample {peak} above radius {nu}");
            }
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let t = random_operator(flat(3, p(3.0)), 1, Normalization::None);
        assert_eq!(
            sample_numerical_range(&t, 20, 5),
            sample_numerical_range(&t, 20, 5)
        );
    }

    #[test]
    fn n1_examples() {
        let ambient = Arc::new(TowerSpec::flat_coordinates(3, p(2.0)).unwrap());
        let head = Arc::new(ambient.truncate(2).unwrap());
        let d = Operator::from_rows(head, &[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let e = n1_of_operator(&d, &ambient, &quick()).unwrap();
        assert!((e.value - 3.0).abs() < 1e-12);
        assert_eq!(e.level, 1);
        assert_eq!(e.per_level.len(), 2);

        let wrong = Arc::new(TowerSpec::flat_coordinates(2, p(3.0)).unwrap());
        assert!(n1_of_operator(&Operator::identity(wrong), &ambient, &quick()).is_err());
    }

    #[test]
    fn w_sequence_examples() {
        let ambient = Arc::new(TowerSpec::flat_coordinates(4, p(1.5)).unwrap());
        let head = Arc::new(ambient.truncate(2).unwrap());
        let w = w_sequence(&Operator::identity(head.clone()), &ambient, 2, &quick()).unwrap();
        assert_eq!(w.len(), 3);
        for e in &w {
            assert!((e.value - 1.0).abs() < 1e-9, "{}", e.value);
        }
        let inf = w_infinity(&Operator::identity(head.clone()), &ambient, &quick()).unwrap();
        assert!((inf.value - 1.0).abs() < 1e-9);
        assert!(w_sequence(&Operator::identity(head), &ambient, 3, &quick()).is_err());
    }
}
