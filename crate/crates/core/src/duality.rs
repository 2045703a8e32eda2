//! Norming functionals, duality-map sets `N(x)`, dual norms and the
//! characterization-condition constants `b_m(x)`.
//!
//! On a smooth tower the norming functional of `x ≠ 0` is the gradient of the
//! norm. It is assembled top-down: leaf `k` receives the chain factor
//! `∂|x|_K / ∂‖y_k‖` times the gradient of its own ℓ_q norm. Restricting that
//! gradient to `X_m` gives `∂|x|_K/∂|P_m x|_m · ∇|·|_m(P_m x)`, so the
//! rescaling constant is `b_m(x) = (∂|x|_K/∂|P_m x|_m)^{-1}`, which in flat
//! ℓ_p collapses to `‖x‖^{p-1} / ‖P_m x‖^{p-1}`.
//!
//! Flat ℓ_1 and ℓ_∞ spaces have set-valued duality maps. They are exposed only
//! as a [`NormingSet`] and through [`norming_sup`], never as a single chosen
//! functional.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;
use crate::tower::{compensated_sum, lp_norm, sphere_coords, TowerSpec, TowerVector};

/// A dual vector acting on a tower by `f(x) = Σ f_i x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    coords: Vec<f64>,
    spec: Arc<TowerSpec>,
}

impl Functional {
    pub fn new(spec: Arc<TowerSpec>, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                actual: coords.len(),
            });
        }
        Ok(Functional { coords, spec })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn spec(&self) -> &Arc<TowerSpec> {
        &self.spec
    }

    pub fn pair(&self, x: &TowerVector) -> Result<f64> {
        if x.coords().len() != self.coords.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coords.len(),
                actual: x.coords().len(),
            });
        }
        Ok(dot(&self.coords, x.coords()))
    }

    pub fn dual_norm(&self) -> f64 {
        self.spec.dual_norm_of(&self.coords)
    }

    /// `f|_{X_m}` extended by zero.
    pub fn restrict(&self, m: usize) -> Result<Functional> {
        self.spec.check_level(m)?;
        let keep = self.spec.level_dim(m);
        let mut coords = self.coords.clone();
        coords[keep..].iter_mut().for_each(|v| *v = 0.0);
        Ok(Functional {
            coords,
            spec: self.spec.clone(),
        })
    }

    pub fn scaled(&self, alpha: f64) -> Functional {
        Functional {
            coords: self.coords.iter().map(|v| v * alpha).collect(),
            spec: self.spec.clone(),
        }
    }
}

impl Serialize for Functional {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords.serialize(s)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    compensated_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Prefix-weight chain `W_k = ∂|x|_K/∂|P_k x|_k` and leaf weights
/// `c_k = ∂|x|_K/∂‖y_k‖`, both 0-based.
fn chain_weights(spec: &TowerSpec, leaf: &[f64], prefix: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = spec.depth();
    let mut w = vec![0.0; k];
    let mut c = vec![0.0; k];
    w[k - 1] = 1.0;
    for b in (1..k).rev() {
        if prefix[b] == 0.0 {
            continue;
        }
        let e = spec.combining_exponents()[b - 1].value() - 1.0;
        c[b] = w[b] * (leaf[b] / prefix[b]).powf(e);
        w[b - 1] = w[b] * (prefix[b - 1] / prefix[b]).powf(e);
    }
    c[0] = w[0];
    (w, c)
}

/// Writes the gradient of the norm at `x` (its norming functional) into `out`.
/// Returns `false` when `x = 0`. Only meaningful on smooth specs.
pub(crate) fn gradient_into(spec: &TowerSpec, x: &[f64], out: &mut [f64]) -> bool {
    norm_and_gradient(spec, x, out).is_some()
}

/// The norm of `x` together with its gradient, or `None` at `x = 0`.
pub(crate) fn norm_and_gradient(spec: &TowerSpec, x: &[f64], out: &mut [f64]) -> Option<f64> {
    if let Some(p) = spec.flat_exponent().filter(|p| p.is_smooth()) {
        // With t_i = |x_i|/peak and u_i = t_i^{p-1}: Σ t_i^p = Σ u_i t_i and
        // g_i = ±u_i / S^{(p-1)/p}, one power per coordinate.
        let peak = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if peak == 0.0 {
            return None;
        }
        let e = p.value() - 1.0;
        for (o, &v) in out.iter_mut().zip(x) {
            *o = (v.abs() / peak).powf(e);
        }
        let s = compensated_sum(out.iter().zip(x).map(|(u, v)| u * v.abs() / peak));
        let root = s.powf(1.0 / p.value());
        let scale = root.powf(e);
        for (o, &v) in out.iter_mut().zip(x) {
            *o = if v == 0.0 {
                0.0
            } else {
                (*o / scale).copysign(v)
            };
        }
        return Some(peak * root);
    }
    if !spec.is_flat() {
        return tower_gradient(spec, x, out);
    }
    let n = spec.norm_of(x);
    if n == 0.0 {
        return None;
    }
    let p = spec.flat_exponent().expect("flat");
    let e = p.value() - 1.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = if v == 0.0 {
            0.0
        } else {
            (v.abs() / n).powf(e).copysign(v)
        };
    }
    Some(n)
}

fn tower_gradient(spec: &TowerSpec, x: &[f64], out: &mut [f64]) -> Option<f64> {
    let (leaf, prefix) = spec.level_norms(x);
    let total = *prefix.last().unwrap();
    if total == 0.0 {
        return None;
    }
    let (_, c) = chain_weights(spec, &leaf, &prefix);
    for b in 0..spec.depth() {
        let range = spec.block_range(b + 1);
        let e = spec.leaf_exponents()[b].value() - 1.0;
        for i in range {
            out[i] = if leaf[b] == 0.0 || x[i] == 0.0 {
                0.0
            } else {
                c[b] * (x[i].abs() / leaf[b]).powf(e).copysign(x[i])
            };
        }
    }
    Some(total)
}

pub(crate) fn gradient(spec: &TowerSpec, x: &[f64]) -> Option<Vec<f64>> {
    let mut out = vec![0.0; x.len()];
    gradient_into(spec, x, &mut out).then_some(out)
}

/// Some member of `N(y)` (unscaled: `f(y) = ‖y‖`, `‖f‖* = 1`).
pub(crate) fn select_norming(spec: &TowerSpec, y: &[f64]) -> Option<Vec<f64>> {
    match spec.flat_exponent() {
        Some(p) if p.is_one() => {
            if y.iter().all(|&v| v == 0.0) {
                return None;
            }
            Some(y.iter().map(|&v| sign(v)).collect())
        }
        Some(p) if p.is_infinite() => {
            let k = argmax_abs(y)?;
            let mut f = vec![0.0; y.len()];
            f[k] = sign(y[k]);
            Some(f)
        }
        _ => gradient(spec, y),
    }
}

/// A unit primal vector `x` with `f(x) = ‖f‖*` (the dual duality map).
pub(crate) fn norming_vector(spec: &TowerSpec, f: &[f64]) -> Option<Vec<f64>> {
    match spec.flat_exponent() {
        Some(p) if p.is_one() => {
            let k = argmax_abs(f)?;
            let mut x = vec![0.0; f.len()];
            x[k] = if f[k] < 0.0 { -1.0 } else { 1.0 };
            Some(x)
        }
        Some(p) if p.is_infinite() => {
            if f.iter().all(|&v| v == 0.0) {
                return None;
            }
            Some(
                f.iter()
                    .map(|&v| if v < 0.0 { -1.0 } else { 1.0 })
                    .collect(),
            )
        }
        _ => gradient(&spec.conjugate(), f),
    }
}

fn argmax_abs(v: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &a) in v.iter().enumerate() {
        if a != 0.0 && best.is_none_or(|(_, b)| a.abs() > b) {
            best = Some((i, a.abs()));
        }
    }
    best.map(|(i, _)| i)
}

/// `sup { f(v) : f ∈ N(x) }` on raw coordinates, for any supported spec.
pub(crate) fn norming_sup_raw(spec: &TowerSpec, x: &[f64], v: &[f64]) -> Option<f64> {
    match spec.flat_exponent() {
        Some(p) if p.is_one() => {
            if x.iter().all(|&a| a == 0.0) {
                return None;
            }
            Some(compensated_sum(x.iter().zip(v).map(|(&a, &b)| {
                if a == 0.0 {
                    b.abs()
                } else {
                    sign(a) * b
                }
            })))
        }
        Some(p) if p.is_infinite() => {
            let peak = x.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
            if peak == 0.0 {
                return None;
            }
            x.iter()
                .zip(v)
                .filter(|(a, _)| a.abs() == peak)
                .map(|(&a, &b)| sign(a) * b)
                .reduce(f64::max)
        }
        _ => {
            let mut g = vec![0.0; x.len()];
            gradient_into(spec, x, &mut g).then(|| dot(&g, v))
        }
    }
}

/// The norming set `N(x)` of a nonzero point.
#[derive(Debug, Clone, PartialEq)]
pub enum NormingSet {
    /// Smooth point: a single functional.
    Smooth(Functional),
    /// ℓ_1 face: `f_i = sgn(x_i)` on the support, `f_i ∈ [-1, 1]` elsewhere.
    L1Face {
        spec: Arc<TowerSpec>,
        signs: Vec<f64>,
    },
    /// ℓ_∞ face: convex hull of `sgn(x_i) e_i` over coordinates with
    /// `|x_i| = ‖x‖_∞`.
    LinfHull {
        spec: Arc<TowerSpec>,
        vertices: Vec<(usize, f64)>,
    },
}

impl NormingSet {
    pub fn sup(&self, v: &[f64]) -> f64 {
        match self {
            NormingSet::Smooth(f) => dot(f.coords(), v),
            NormingSet::L1Face { signs, .. } => compensated_sum(
                signs
                    .iter()
                    .zip(v)
                    .map(|(&s, &b)| if s == 0.0 { b.abs() } else { s * b }),
            ),
            NormingSet::LinfHull { vertices, .. } => vertices
                .iter()
                .map(|&(i, s)| s * v[i])
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// A member of the set attaining [`NormingSet::sup`] at `v`.
    pub fn maximizer(&self, v: &[f64]) -> Functional {
        match self {
            NormingSet::Smooth(f) => f.clone(),
            NormingSet::L1Face { spec, signs } => {
                let coords = signs
                    .iter()
                    .zip(v)
                    .map(|(&s, &b)| if s == 0.0 { sign(b) } else { s })
                    .collect();
                Functional {
                    coords,
                    spec: spec.clone(),
                }
            }
            NormingSet::LinfHull { spec, vertices } => {
                let &(i, s) = vertices
                    .iter()
                    .max_by(|a, b| (a.1 * v[a.0]).total_cmp(&(b.1 * v[b.0])))
                    .expect("norming hull is never empty");
                let mut coords = vec![0.0; spec.dim()];
                coords[i] = s;
                Functional {
                    coords,
                    spec: spec.clone(),
                }
            }
        }
    }

    /// A random member of the set.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Functional {
        match self {
            NormingSet::Smooth(f) => f.clone(),
            NormingSet::L1Face { spec, signs } => {
                let coords = signs
                    .iter()
                    .map(|&s| {
                        if s == 0.0 {
                            rng.random_range(-1.0..=1.0)
                        } else {
                            s
                        }
                    })
                    .collect();
                Functional {
                    coords,
                    spec: spec.clone(),
                }
            }
            NormingSet::LinfHull { spec, vertices } => {
                let weights: Vec<f64> = vertices
                    .iter()
                    .map(|_| -(1.0 - rng.random::<f64>()).ln())
                    .collect();
                let total: f64 = weights.iter().sum();
                let mut coords = vec![0.0; spec.dim()];
                for (&(i, s), w) in vertices.iter().zip(&weights) {
                    coords[i] += s * w / total;
                }
                Functional {
                    coords,
                    spec: spec.clone(),
                }
            }
        }
    }
}

/// `N(x / ‖x‖)` for `x ≠ 0`.
pub fn norming_set(x: &TowerVector) -> Result<NormingSet> {
    if x.is_zero() {
        return Err(Error::ZeroVector);
    }
    let spec = x.spec().clone();
    let c = x.coords();
    Ok(match spec.flat_exponent() {
        Some(p) if p.is_one() => NormingSet::L1Face {
            signs: c.iter().map(|&v| sign(v)).collect(),
            spec,
        },
        Some(p) if p.is_infinite() => {
            let peak = c.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
            NormingSet::LinfHull {
                vertices: c
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| a.abs() == peak)
                    .map(|(i, &a)| (i, sign(a)))
                    .collect(),
                spec,
            }
        }
        _ => NormingSet::Smooth(norming_functional(x)?),
    })
}

/// The unique norming functional of a nonzero point of a smooth tower.
pub fn norming_functional(x: &TowerVector) -> Result<Functional> {
    if !x.spec().is_smooth() {
        return Err(Error::NonSmooth);
    }
    let coords = gradient(x.spec(), x.coords()).ok_or(Error::ZeroVector)?;
    Ok(Functional {
        coords,
        spec: x.spec().clone(),
    })
}

/// `sup_{f ∈ N(x/‖x‖)} f(v)`.
pub fn norming_sup(x: &TowerVector, v: &TowerVector) -> Result<f64> {
    if x.spec() != v.spec() {
        return Err(Error::SpecMismatch(
            "x and v live in different towers".into(),
        ));
    }
    norming_sup_raw(x.spec(), x.coords(), v.coords()).ok_or(Error::ZeroVector)
}

pub fn dual_norm(f: &Functional) -> f64 {
    f.dual_norm()
}

/// The rescaling constant of the characterization condition at level `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct BConstant {
    pub value: f64,
    pub level: usize,
    pub base: TowerVector,
}

pub(crate) fn b_constant_raw(spec: &TowerSpec, x: &[f64], m: usize) -> Result<f64> {
    spec.check_level(m)?;
    if !spec.is_smooth() {
        return Err(Error::NonSmooth);
    }
    if let Some(p) = spec.flat_exponent() {
        let full = lp_norm(x, p);
        if full == 0.0 {
            return Err(Error::ZeroVector);
        }
        let head = lp_norm(&x[..spec.level_dim(m)], p);
        if head == 0.0 {
            return Err(Error::DegenerateSupport { level: m });
        }
        return Ok((full / head).powf(p.value() - 1.0));
    }
    let (leaf, prefix) = spec.level_norms(x);
    if *prefix.last().unwrap() == 0.0 {
        return Err(Error::ZeroVector);
    }
    if prefix[m - 1] == 0.0 {
        return Err(Error::DegenerateSupport { level: m });
    }
    let (w, _) = chain_weights(spec, &leaf, &prefix);
    Ok(1.0 / w[m - 1])
}

/// `b_m(x)` with `b_m(x) · N(x)|_{X_m} = N(P_m x)`.
pub fn b_constant(x: &TowerVector, m: usize) -> Result<BConstant> {
    let value = b_constant_raw(x.spec(), x.coords(), m)?;
    Ok(BConstant {
        value,
        level: m,
        base: x.clone(),
    })
}

/// Norm geometry consumed by the characterization-condition certifier. The
/// tower itself is the honest implementation; test fixtures can supply a
/// deliberately inconsistent one.
pub trait NormModel: Sync {
    fn spec(&self) -> &TowerSpec;
    fn eval_norm(&self, x: &[f64]) -> f64;
    fn eval_dual_norm(&self, f: &[f64]) -> f64;
    fn functional(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn b_value(&self, x: &[f64], m: usize) -> Result<f64>;
}

impl NormModel for TowerSpec {
    fn spec(&self) -> &TowerSpec {
        self
    }

    fn eval_norm(&self, x: &[f64]) -> f64 {
        self.norm_of(x)
    }

    fn eval_dual_norm(&self, f: &[f64]) -> f64 {
        self.dual_norm_of(f)
    }

    fn functional(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.is_smooth() {
            return Err(Error::NonSmooth);
        }
        gradient(self, x).ok_or(Error::ZeroVector)
    }

    fn b_value(&self, x: &[f64], m: usize) -> Result<f64> {
        b_constant_raw(self, x, m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CcMode {
    /// Every unit `x ∈ X` and every level `m`.
    Global,
    /// Unit `x ∈ X_{m+1}` projected one step to `X_m`.
    Local,
}

/// Outcome of a characterization-condition certification run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CcReport {
    pub mode: CcMode,
    pub samples: usize,
    pub checks: usize,
    pub skipped_degenerate: usize,
    pub max_pairing_violation: f64,
    pub max_dual_violation: f64,
    pub max_violation: f64,
    pub min_b: f64,
    pub b_below_one: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl CcReport {
    pub fn passed(&self) -> bool {
        self.max_violation < self.tolerance && self.b_below_one == 0
    }
}

/// Samples unit points and checks that `b_m(x) · N(x)|_{X_m}` norms `P_m x`.
pub fn certify_cc(
    spec: &TowerSpec,
    samples: usize,
    tol: f64,
    seed: u64,
    mode: CcMode,
) -> Result<CcReport> {
    certify_cc_with(spec, samples, tol, seed, mode)
}

pub fn certify_cc_with(
    model: &dyn NormModel,
    samples: usize,
    tol: f64,
    seed: u64,
    mode: CcMode,
) -> Result<CcReport> {
    let spec = model.spec();
    if !spec.is_smooth() {
        return Err(Error::NonSmooth);
    }
    let depth = spec.depth();
    let mut report = CcReport {
        mode,
        samples,
        checks: 0,
        skipped_degenerate: 0,
        max_pairing_violation: 0.0,
        max_dual_violation: 0.0,
        max_violation: 0.0,
        min_b: f64::INFINITY,
        b_below_one: 0,
        tolerance: tol,
        seed,
    };
    let mut rng = rng::stream_rng(seed, 0xCC);
    let check = |x: &[f64], m: usize, report: &mut CcReport| -> Result<()> {
        let b = match model.b_value(x, m) {
            Ok(b) => b,
            Err(Error::DegenerateSupport { .. }) => {
                report.skipped_degenerate += 1;
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let f = model.functional(x)?;
        let keep = spec.level_dim(m);
        let mut g: Vec<f64> = f.iter().map(|v| v * b).collect();
        g[keep..].iter_mut().for_each(|v| *v = 0.0);
        let mut px = x.to_vec();
        px[keep..].iter_mut().for_each(|v| *v = 0.0);
        let pairing = (dot(&g, &px) - model.eval_norm(&px)).abs();
        let dual = (model.eval_dual_norm(&g) - 1.0).abs();
        report.checks += 1;
        report.max_pairing_violation = report.max_pairing_violation.max(pairing);
        report.max_dual_violation = report.max_dual_violation.max(dual);
        report.max_violation = report.max_violation.max(pairing).max(dual);
        if pairing.is_nan() || dual.is_nan() {
            report.max_violation = f64::INFINITY;
        }
        report.min_b = report.min_b.min(b);
        if b < 1.0 - 1e-12 {
            report.b_below_one += 1;
        }
        Ok(())
    };
    for _ in 0..samples {
        match mode {
            CcMode::Global => {
                let x = sphere_coords(spec, spec.dim(), &mut rng);
                for m in 1..=depth {
                    check(&x, m, &mut report)?;
                }
            }
            CcMode::Local => {
                for m in 1..depth {
                    let x = sphere_coords(spec, spec.level_dim(m + 1), &mut rng);
                    check(&x, m, &mut report)?;
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tower::{project, random_sphere_point, Exponent};
    use approx::assert_relative_eq;

    fn p(v: f64) -> Exponent {
        Exponent::new(v).unwrap()
    }

    fn vector(spec: &Arc<TowerSpec>, c: &[f64]) -> TowerVector {
        TowerVector::new(spec.clone(), c.to_vec()).unwrap()
    }

    #[test]
    fn unit_vector_is_self_norming() {
        let s = Arc::new(TowerSpec::flat(vec![3], p(3.0)).unwrap());
        let f = norming_functional(&vector(&s, &[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(f.coords(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn hilbert_self_duality() {
        let s = Arc::new(TowerSpec::flat(vec![2], p(2.0)).unwrap());
        let f = norming_functional(&vector(&s, &[0.6, 0.8])).unwrap();
        assert_relative_eq!(f.coords()[0], 0.6, epsilon = 1e-15);
        assert_relative_eq!(f.coords()[1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn flat_formula() {
        let pv = 1.7;
        let s = Arc::new(TowerSpec::flat(vec![4], p(pv)).unwrap());
        let x = vector(&s, &[0.3, -1.1, 0.0, 2.5]);
        let n = x.norm();
        let f = norming_functional(&x).unwrap();
        for (fi, xi) in f.coords().iter().zip(x.coords()) {
            let expected = xi.abs().powf(pv - 1.0) * xi.signum() / n.powf(pv - 1.0);
            let expected = if *xi == 0.0 { 0.0 } else { expected };
            assert_relative_eq!(*fi, expected, max_relative = 1e-13);
        }
    }

    #[test]
    fn zero_and_nonsmooth_rejected() {
        let s = Arc::new(TowerSpec::flat(vec![2], p(2.0)).unwrap());
        assert_eq!(
            norming_functional(&vector(&s, &[0.0, 0.0])),
            Err(Error::ZeroVector)
        );
        let l1 = Arc::new(TowerSpec::flat(vec![2], Exponent::ONE).unwrap());
        assert_eq!(
            norming_functional(&vector(&l1, &[1.0, 0.0])),
            Err(Error::NonSmooth)
        );
        assert_eq!(
            norming_sup(&vector(&l1, &[0.0, 0.0]), &vector(&l1, &[1.0, 0.0])),
            Err(Error::ZeroVector)
        );
    }

    #[test]
    fn norming_sup_examples() {
        let l1 = Arc::new(TowerSpec::flat(vec![2], Exponent::ONE).unwrap());
        assert_eq!(
            norming_sup(&vector(&l1, &[1.0, 0.0]), &vector(&l1, &[0.0, 1.0])).unwrap(),
            1.0
        );
        let l2 = Arc::new(TowerSpec::flat(vec![2], p(2.0)).unwrap());
        assert_eq!(
            norming_sup(&vector(&l2, &[1.0, 0.0]), &vector(&l2, &[0.0, 1.0])).unwrap(),
            0.0
        );
        let linf = Arc::new(TowerSpec::flat(vec![2], Exponent::INFINITY).unwrap());
        assert_eq!(
            norming_sup(&vector(&linf, &[1.0, 1.0]), &vector(&linf, &[2.0, -3.0])).unwrap(),
            2.0
        );
    }

    #[test]
    fn l1_face_brute_force() {
        // Face {(1, a) : |a| ≤ 1} of the ℓ_∞ ball, sampled on a grid.
        let l1 = Arc::new(TowerSpec::flat(vec![2], Exponent::ONE).unwrap());
        let x = vector(&l1, &[1.0, 0.0]);
        let v = vector(&l1, &[0.0, 1.0]);
        let brute = (0..=200)
            .map(|k| -1.0 + k as f64 / 100.0)
            .map(|a| 1.0 * v.coords()[0] + a * v.coords()[1])
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(norming_sup(&x, &v).unwrap(), brute);
    }

    #[test]
    fn dual_norm_examples() {
        let l2 = Arc::new(TowerSpec::flat(vec![2], p(2.0)).unwrap());
        assert_eq!(
            Functional::new(l2, vec![3.0, 4.0]).unwrap().dual_norm(),
            5.0
        );
        let l1 = Arc::new(TowerSpec::flat(vec![2], Exponent::ONE).unwrap());
        assert_eq!(
            Functional::new(l1, vec![2.0, -5.0]).unwrap().dual_norm(),
            5.0
        );
    }

    #[test]
    fn b_constant_examples() {
        let s = Arc::new(TowerSpec::flat(vec![1, 1], p(2.0)).unwrap());
        let h = 0.5_f64.sqrt();
        let b = b_constant(&vector(&s, &[h, h]), 1).unwrap();
        assert_relative_eq!(b.value, 2f64.sqrt(), max_relative = 1e-14);
        let t = Arc::new(TowerSpec::tower(vec![2, 1], vec![p(2.5)]).unwrap());
        let inside = vector(&t, &[0.6, -0.3, 0.0]);
        assert_eq!(b_constant(&inside, 1).unwrap().value, 1.0);
        assert_eq!(
            b_constant(&vector(&t, &[0.0, 0.0, 1.0]), 1),
            Err(Error::DegenerateSupport { level: 1 })
        );
    }

    #[test]
    fn b_constant_restriction_matches_projected_functional() {
        let t = Arc::new(TowerSpec::tower(vec![2, 2, 1], vec![p(2.0), p(3.0)]).unwrap());
        for seed in 0..40 {
            let x = random_sphere_point(t.clone(), seed);
            let f = norming_functional(&x).unwrap();
            for m in 1..=3 {
                let b = b_constant(&x, m).unwrap();
                assert!(b.value >= 1.0 - 1e-12);
                let restricted = f.restrict(m).unwrap().scaled(b.value);
                let oracle = norming_functional(&project(&x, m).unwrap()).unwrap();
                for (a, o) in restricted.coords().iter().zip(oracle.coords()) {
                    assert!((a - o).abs() < 1e-12, "seed {seed} m {m}: {a} vs {o}");
                }
            }
        }
    }

    #[test]
    fn norming_set_members_norm_the_point() {
        let mut r = rng::rng_from(3);
        for spec in [
            TowerSpec::flat(vec![3], Exponent::ONE).unwrap(),
            TowerSpec::flat(vec![3], Exponent::INFINITY).unwrap(),
        ] {
            let spec = Arc::new(spec);
            for c in [[1.0, 0.0, -2.0], [1.0, -1.0, 0.5], [0.0, 0.0, 3.0]] {
                let x = vector(&spec, &c);
                let set = norming_set(&x).unwrap();
                for _ in 0..20 {
                    let f = set.sample(&mut r);
                    assert!((f.pair(&x).unwrap() - x.norm()).abs() < 1e-12);
                    assert!(f.dual_norm() <= 1.0 + 1e-12);
                }
                let v = [0.3, -2.0, 1.1];
                let best = set.maximizer(&v);
                assert!((dot(best.coords(), &v) - set.sup(&v)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn norming_vector_attains_dual_norm() {
        for spec in [
            TowerSpec::flat(vec![3], Exponent::ONE).unwrap(),
            TowerSpec::flat(vec![3], Exponent::INFINITY).unwrap(),
            TowerSpec::tower(vec![1, 2], vec![p(1.3)]).unwrap(),
        ] {
            let f = [0.5, -2.0, 1.5];
            let x = norming_vector(&spec, &f).unwrap();
            assert!((spec.norm_of(&x) - 1.0).abs() < 1e-12);
            assert!((dot(&f, &x) - spec.dual_norm_of(&f)).abs() < 1e-12);
        }
    }

    #[test]
    fn certify_examples() {
        let flat = TowerSpec::flat_coordinates(4, p(1.5)).unwrap();
        let r = certify_cc(&flat, 500, 1e-9, 1, CcMode::Global).unwrap();
        assert!(r.passed(), "{r:?}");
        let mixed = TowerSpec::tower(vec![2, 2, 1], vec![p(2.0), p(3.0)]).unwrap();
        for mode in [CcMode::Global, CcMode::Local] {
            let r = certify_cc(&mixed, 200, 1e-9, 2, mode).unwrap();
            assert!(r.passed(), "{r:?}");
        }
        let l1 = TowerSpec::flat(vec![1, 1], Exponent::ONE).unwrap();
        assert_eq!(
            certify_cc(&l1, 1, 1e-9, 0, CcMode::Global),
            Err(Error::NonSmooth)
        );
    }

    #[test]
    fn basis_vector_certifies_exactly() {
        let t = TowerSpec::tower(vec![1, 1, 1], vec![p(2.5), p(1.5)]).unwrap();
        let x = [1.0, 0.0, 0.0];
        for m in 1..=3 {
            let b = t.b_value(&x, m).unwrap();
            assert_eq!(b, 1.0);
            let f = t.functional(&x).unwrap();
            assert_eq!(f, vec![1.0, 0.0, 0.0]);
        }
    }
}
