//! Nested mixed-exponent ℓ_p-sum towers.
//!
//! A tower is a sequence of leaf blocks `Y_1, ..., Y_K`. The level-`m` space
//! `X_m` holds the first `m` blocks and carries the norm
//!
//! ```text
//! |x|_1 = ‖y_1‖,     |(x, y_{n+1})|_{n+1} = (|x|_n^{p_n} + ‖y_{n+1}‖^{p_n})^{1/p_n}
//! ```
//!
//! where each leaf norm is a plain ℓ_q norm. A *flat* tower uses one exponent
//! for every leaf and every combining step, so its norm is the ordinary ℓ_p
//! norm over all coordinates; flat towers are the only ones allowed to use
//! `p = 1` or `p = ∞`. The blocks still define the levels, so a flat ℓ_1 tower
//! with leaves `[1, 1, 1]` has three nested levels.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng;

/// An exponent in `[1, ∞]`. Infinity is stored as `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Exponent(f64);

impl Exponent {
    pub const ONE: Exponent = Exponent(1.0);
    pub const TWO: Exponent = Exponent(2.0);
    pub const INFINITY: Exponent = Exponent(f64::INFINITY);

    pub fn new(p: f64) -> Result<Self> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::InvalidSpace(format!(
                "exponent {p} is not in [1, inf]"
            )));
        }
        Ok(Exponent(p))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    pub fn is_one(self) -> bool {
        self.0 == 1.0
    }

    /// True for `1 < p < ∞`, where the ℓ_p norm is differentiable off zero.
    pub fn is_smooth(self) -> bool {
        self.0 > 1.0 && self.0.is_finite()
    }

    /// Hölder conjugate `q = p / (p - 1)`.
    pub fn conjugate(self) -> Exponent {
        if self.is_one() {
            Exponent::INFINITY
        } else if self.is_infinite() {
            Exponent::ONE
        } else {
            Exponent(self.0 / (self.0 - 1.0))
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let p = match Raw::deserialize(d)? {
            Raw::Num(p) => p,
            Raw::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "∞" => f64::INFINITY,
                other => other
                    .parse::<f64>()
                    .map_err(|_| serde::de::Error::custom(format!("bad exponent {t:?}")))?,
            },
        };
        Exponent::new(p).map_err(serde::de::Error::custom)
    }
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// ℓ_q norm of a block, scaled by its largest entry to avoid overflow.
pub(crate) fn lp_norm(y: &[f64], q: Exponent) -> f64 {
    let peak = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak == 0.0 || q.is_infinite() {
        return peak;
    }
    if q.is_one() {
        return compensated_sum(y.iter().map(|v| v.abs()));
    }
    let q = q.value();
    let s = compensated_sum(y.iter().map(|v| (v.abs() / peak).powf(q)));
    peak * s.powf(1.0 / q)
}

/// `(r^p + s^p)^{1/p}` for nonnegative `r`, `s`.
pub(crate) fn combine(r: f64, s: f64, p: Exponent) -> f64 {
    let peak = r.max(s);
    if peak == 0.0 {
        return 0.0;
    }
    if p.is_infinite() {
        return peak;
    }
    if p.is_one() {
        return r + s;
    }
    let p = p.value();
    let lo = r.min(s) / peak;
    peak * (1.0 + lo.powf(p)).powf(1.0 / p)
}

/// The recursive description of a tower of nested spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerSpec {
    leaf_dims: Vec<usize>,
    leaf_exponents: Vec<Exponent>,
    combining: Vec<Exponent>,
    flat: bool,
    offsets: Vec<usize>,
}

/// On-disk space description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    pub leaves: Vec<usize>,
    #[serde(default)]
    pub exponents: Vec<Exponent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flat_p: Option<Exponent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaf_exponents: Option<Vec<Exponent>>,
}

impl TowerSpec {
    /// A flat ℓ_p space whose levels are the given blocks.
    pub fn flat(leaves: Vec<usize>, p: Exponent) -> Result<Self> {
        let k = leaves.len();
        Self::build(leaves, vec![p; k.saturating_sub(1)], vec![p; k], true)
    }

    /// A flat ℓ_p space with one level per coordinate.
    pub fn flat_coordinates(dim: usize, p: Exponent) -> Result<Self> {
        Self::flat(vec![1; dim], p)
    }

    /// A tower whose leaf `Y_1` uses `p_1` and leaf `Y_{n+1}` uses `p_n`, the
    /// exponent of the step that attaches it.
    pub fn tower(leaves: Vec<usize>, exponents: Vec<Exponent>) -> Result<Self> {
        if leaves.len() < 2 {
            return Err(Error::InvalidSpace(
                "a multi-level tower needs at least two leaves; use a flat space".into(),
            ));
        }
        if exponents.len() + 1 != leaves.len() {
            return Err(Error::InvalidSpace(format!(
                "{} leaves need {} combining exponents, got {}",
                leaves.len(),
                leaves.len() - 1,
                exponents.len()
            )));
        }
        let mut leaf_exponents = Vec::with_capacity(leaves.len());
        leaf_exponents.push(exponents[0]);
        leaf_exponents.extend(exponents.iter().copied());
        Self::build(leaves, exponents, leaf_exponents, false)
    }

    /// A tower with explicit leaf norms.
    pub fn tower_with_leaf_exponents(
        leaves: Vec<usize>,
        exponents: Vec<Exponent>,
        leaf_exponents: Vec<Exponent>,
    ) -> Result<Self> {
        if leaves.len() < 2 {
            return Err(Error::InvalidSpace(
                "a multi-level tower needs at least two leaves; use a flat space".into(),
            ));
        }
        Self::build(leaves, exponents, leaf_exponents, false)
    }

    fn build(
        leaf_dims: Vec<usize>,
        combining: Vec<Exponent>,
        leaf_exponents: Vec<Exponent>,
        flat: bool,
    ) -> Result<Self> {
        if leaf_dims.is_empty() {
            return Err(Error::InvalidSpace("no leaves".into()));
        }
        if let Some(i) = leaf_dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidSpace(format!(
                "leaf {} has dimension 0",
                i + 1
            )));
        }
        if combining.len() + 1 != leaf_dims.len() {
            return Err(Error::InvalidSpace(format!(
                "{} leaves need {} combining exponents, got {}",
                leaf_dims.len(),
                leaf_dims.len() - 1,
                combining.len()
            )));
        }
        if leaf_exponents.len() != leaf_dims.len() {
            return Err(Error::InvalidSpace(format!(
                "{} leaves need {} leaf exponents, got {}",
                leaf_dims.len(),
                leaf_dims.len(),
                leaf_exponents.len()
            )));
        }
        if !flat {
            let bad = combining
                .iter()
                .chain(leaf_exponents.iter())
                .find(|p| !p.is_smooth());
            if let Some(p) = bad {
                return Err(Error::InvalidSpace(format!(
                    "exponent {p} is only supported in flat spaces; tower exponents must lie in (1, inf)"
                )));
            }
        }
        let mut offsets = Vec::with_capacity(leaf_dims.len() + 1);
        offsets.push(0);
        for d in &leaf_dims {
            offsets.push(offsets.last().unwrap() + d);
        }
        Ok(TowerSpec {
            leaf_dims,
            leaf_exponents,
            combining,
            flat,
            offsets,
        })
    }

    pub fn from_file(file: &SpaceFile) -> Result<Self> {
        match file.flat_p {
            Some(p) => {
                if !file.exponents.is_empty() || file.leaf_exponents.is_some() {
                    return Err(Error::InvalidSpace(
                        "flat_p excludes exponents and leaf_exponents".into(),
                    ));
                }
                Self::flat(file.leaves.clone(), p)
            }
            None => match &file.leaf_exponents {
                Some(le) => Self::tower_with_leaf_exponents(
                    file.leaves.clone(),
                    file.exponents.clone(),
                    le.clone(),
                ),
                None => {
                    if file.leaves.len() == 1 {
                        return Err(Error::InvalidSpace(
                            "a single-leaf space needs flat_p".into(),
                        ));
                    }
                    Self::tower(file.leaves.clone(), file.exponents.clone())
                }
            },
        }
    }

    pub fn to_file(&self) -> SpaceFile {
        if self.flat {
            SpaceFile {
                leaves: self.leaf_dims.clone(),
                exponents: vec![],
                flat_p: Some(self.leaf_exponents[0]),
                leaf_exponents: None,
            }
        } else {
            SpaceFile {
                leaves: self.leaf_dims.clone(),
                exponents: self.combining.clone(),
                flat_p: None,
                leaf_exponents: Some(self.leaf_exponents.clone()),
            }
        }
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let file: SpaceFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        Self::from_file(&file).map_err(|e| e.to_string())
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Number of levels (leaves).
    pub fn depth(&self) -> usize {
        self.leaf_dims.len()
    }

    pub fn leaf_dims(&self) -> &[usize] {
        &self.leaf_dims
    }

    pub fn combining_exponents(&self) -> &[Exponent] {
        &self.combining
    }

    pub fn leaf_exponents(&self) -> &[Exponent] {
        &self.leaf_exponents
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    pub fn flat_exponent(&self) -> Option<Exponent> {
        self.flat.then(|| self.leaf_exponents[0])
    }

    /// Every nonzero point has a unique norming functional.
    pub fn is_smooth(&self) -> bool {
        self.leaf_exponents
            .iter()
            .chain(self.combining.iter())
            .all(|p| p.is_smooth())
    }

    /// All exponents equal 2, i.e. the norm is Euclidean.
    pub fn is_euclidean(&self) -> bool {
        self.leaf_exponents
            .iter()
            .chain(self.combining.iter())
            .all(|p| p.value() == 2.0)
    }

    /// The single exponent shared by every leaf and step, if there is one.
    pub fn uniform_exponent(&self) -> Option<Exponent> {
        let p = self.leaf_exponents[0];
        self.leaf_exponents
            .iter()
            .chain(self.combining.iter())
            .all(|&q| q == p)
            .then_some(p)
    }

    /// Dimension of `X_m`.
    pub fn level_dim(&self, m: usize) -> usize {
        self.offsets[m.min(self.depth())]
    }

    /// Coordinate range of leaf block `k` (1-based).
    pub fn block_range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k - 1]..self.offsets[k]
    }

    pub fn check_level(&self, m: usize) -> Result<()> {
        if m == 0 || m > self.depth() {
            Err(Error::LevelOutOfRange {
                level: m,
                depth: self.depth(),
            })
        } else {
            Ok(())
        }
    }

    /// The description of `X_m` on its own.
    pub fn truncate(&self, m: usize) -> Result<TowerSpec> {
        self.check_level(m)?;
        Self::build(
            self.leaf_dims[..m].to_vec(),
            self.combining[..m - 1].to_vec(),
            self.leaf_exponents[..m].to_vec(),
            self.flat,
        )
    }

    /// The dual tower: every exponent replaced by its conjugate.
    pub fn conjugate(&self) -> TowerSpec {
        TowerSpec {
            leaf_dims: self.leaf_dims.clone(),
            leaf_exponents: self.leaf_exponents.iter().map(|p| p.conjugate()).collect(),
            combining: self.combining.iter().map(|p| p.conjugate()).collect(),
            flat: self.flat,
            offsets: self.offsets.clone(),
        }
    }

    /// Leaf norms `‖y_k‖` and prefix norms `|P_k x|` for `k = 1..K`.
    pub(crate) fn level_norms(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = self.depth();
        let mut leaf = Vec::with_capacity(k);
        let mut prefix = Vec::with_capacity(k);
        for b in 1..=k {
            let s = lp_norm(&x[self.block_range(b)], self.leaf_exponents[b - 1]);
            let r = if b == 1 {
                s
            } else {
                combine(prefix[b - 2], s, self.combining[b - 2])
            };
            leaf.push(s);
            prefix.push(r);
        }
        (leaf, prefix)
    }

    /// Norm of a raw coordinate slice.
    ///
    /// Panics if `x.len() != self.dim()`; use [`TowerVector`] for checked access.
    pub fn norm_of(&self, x: &[f64]) -> f64 {
        assert_eq!(
            x.len(),
            self.dim(),
            "coordinate length does not match space"
        );
        if self.flat {
            return lp_norm(x, self.leaf_exponents[0]);
        }
        let (_, prefix) = self.level_norms(x);
        *prefix.last().unwrap()
    }

    /// Checked norm of raw coordinates.
    pub fn norm(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(self.norm_of(x))
    }

    /// Norm in the dual tower.
    pub fn dual_norm_of(&self, f: &[f64]) -> f64 {
        self.conjugate().norm_of(f)
    }
}

impl fmt::Display for TowerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.flat {
            write!(
                f,
                "flat l_{} leaves {:?}",
                self.leaf_exponents[0], self.leaf_dims
            )
        } else {
            let ps: Vec<String> = self.combining.iter().map(|p| p.to_string()).collect();
            write!(f, "tower leaves {:?} p=({})", self.leaf_dims, ps.join(","))
        }
    }
}

/// Coordinates tagged with the space they live in.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerVector {
    coords: Vec<f64>,
    spec: Arc<TowerSpec>,
}

impl TowerVector {
    pub fn new(spec: Arc<TowerSpec>, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                actual: coords.len(),
            });
        }
        Ok(TowerVector { coords, spec })
    }

    pub fn zeros(spec: Arc<TowerSpec>) -> Self {
        let coords = vec![0.0; spec.dim()];
        TowerVector { coords, spec }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn spec(&self) -> &Arc<TowerSpec> {
        &self.spec
    }

    pub fn norm(&self) -> f64 {
        self.spec.norm_of(&self.coords)
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|&v| v == 0.0)
    }

    /// Smallest level `k` with `x ∈ X_k`; 0 for the zero vector.
    pub fn support_level(&self) -> usize {
        (1..=self.spec.depth())
            .rev()
            .find(|&k| {
                self.coords[self.spec.block_range(k)]
                    .iter()
                    .any(|&v| v != 0.0)
            })
            .unwrap_or(0)
    }

    pub fn scaled(&self, alpha: f64) -> TowerVector {
        TowerVector {
            coords: self.coords.iter().map(|v| v * alpha).collect(),
            spec: self.spec.clone(),
        }
    }

    pub fn normalized(&self) -> Result<TowerVector> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(self.scaled(1.0 / n))
    }
}

impl Serialize for TowerVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords.serialize(s)
    }
}

/// Free-function form of [`TowerVector::norm`].
pub fn norm(x: &TowerVector) -> f64 {
    x.norm()
}

/// `P_m x`: keeps blocks `1..=m` and zeroes the rest.
pub fn project(x: &TowerVector, m: usize) -> Result<TowerVector> {
    Projection::top(x.spec.clone(), m)?.apply(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProjectionKind {
    /// `P_m : X_{m+1} → X_m`.
    OneStep,
    /// `Q_{m,j} = P_m ∘ P_{m+1} ∘ ⋯ ∘ P_{m+j-1} : X_{m+j} → X_m`.
    Composite { steps: usize },
    /// `Q_m : X → X_m`.
    Top,
}

/// A norm-one coordinate projection between levels of a tower.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    spec: Arc<TowerSpec>,
    level: usize,
    kind: ProjectionKind,
}

impl Projection {
    pub fn one_step(spec: Arc<TowerSpec>, m: usize) -> Result<Self> {
        spec.check_level(m)?;
        spec.check_level(m + 1)?;
        Ok(Projection {
            spec,
            level: m,
            kind: ProjectionKind::OneStep,
        })
    }

    pub fn top(spec: Arc<TowerSpec>, m: usize) -> Result<Self> {
        spec.check_level(m)?;
        Ok(Projection {
            spec,
            level: m,
            kind: ProjectionKind::Top,
        })
    }

    pub fn composite(spec: Arc<TowerSpec>, m: usize, j: usize) -> Result<Self> {
        spec.check_level(m)?;
        if j == 0 {
            return Err(Error::LevelOutOfRange {
                level: m,
                depth: spec.depth(),
            });
        }
        spec.check_level(m + j)?;
        Ok(Projection {
            spec,
            level: m,
            kind: ProjectionKind::Composite { steps: j },
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn kind(&self) -> ProjectionKind {
        self.kind
    }

    pub fn spec(&self) -> &Arc<TowerSpec> {
        &self.spec
    }

    /// The level whose space is the domain of this projection.
    pub fn domain_level(&self) -> usize {
        match self.kind {
            ProjectionKind::OneStep => self.level + 1,
            ProjectionKind::Composite { steps } => self.level + steps,
            ProjectionKind::Top => self.spec.depth(),
        }
    }

    fn one_step_apply(&self, coords: &mut [f64], k: usize) -> Result<()> {
        // P_k : X_{k+1} → X_k zeroes block k+1 and requires nothing beyond it.
        let spec = &self.spec;
        if coords[spec.level_dim(k + 1)..].iter().any(|&v| v != 0.0) {
            return Err(Error::OutsideDomain { level: k + 1 });
        }
        for v in &mut coords[spec.block_range(k + 1)] {
            *v = 0.0;
        }
        Ok(())
    }

    pub fn apply(&self, x: &TowerVector) -> Result<TowerVector> {
        if *x.spec != *self.spec {
            return Err(Error::SpecMismatch(
                "vector and projection live in different towers".into(),
            ));
        }
        let mut coords = x.coords.clone();
        match self.kind {
            ProjectionKind::Top => {
                for v in &mut coords[self.spec.level_dim(self.level)..] {
                    *v = 0.0;
                }
            }
            ProjectionKind::OneStep => self.one_step_apply(&mut coords, self.level)?,
            ProjectionKind::Composite { steps } => {
                for k in (self.level..self.level + steps).rev() {
                    self.one_step_apply(&mut coords, k)?;
                }
            }
        }
        Ok(TowerVector {
            coords,
            spec: self.spec.clone(),
        })
    }

    /// Matrix of the coordinate action in ambient coordinates.
    pub fn matrix(&self) -> nalgebra::DMatrix<f64> {
        let n = self.spec.dim();
        let keep = self.spec.level_dim(self.level);
        nalgebra::DMatrix::from_fn(n, n, |i, j| if i == j && i < keep { 1.0 } else { 0.0 })
    }
}

/// `Q_{m,j} = P_m ∘ P_{m+1} ∘ ⋯ ∘ P_{m+j-1}`.
pub fn compose_projections(spec: Arc<TowerSpec>, m: usize, j: usize) -> Result<Projection> {
    Projection::composite(spec, m, j)
}

/// Gaussian coordinates rescaled to tower norm one.
pub fn random_sphere_point(spec: Arc<TowerSpec>, seed: u64) -> TowerVector {
    let mut rng = rng::rng_from(seed);
    let coords = sphere_coords(&spec, spec.dim(), &mut rng);
    TowerVector { coords, spec }
}

/// Unit vector supported on the first `active` coordinates.
pub(crate) fn sphere_coords<R: Rng>(spec: &TowerSpec, active: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut x = vec![0.0; spec.dim()];
        for v in x.iter_mut().take(active) {
            *v = rng.sample(StandardNormal);
        }
        let n = spec.norm_of(&x);
        if n > 0.0 {
            x.iter_mut().for_each(|v| *v /= n);
            return x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(v: f64) -> Exponent {
        Exponent::new(v).unwrap()
    }

    #[test]
    fn euclidean_identity() {
        let s = TowerSpec::flat(vec![2], Exponent::TWO).unwrap();
        assert_eq!(s.norm_of(&[3.0, 4.0]), 5.0);
    }

    #[test]
    fn three_level_substitution() {
        let s = TowerSpec::tower(vec![1, 1, 1], vec![p(2.0), p(3.0)]).unwrap();
        let expected = (2f64.sqrt().powi(3) + 1.0).powf(1.0 / 3.0);
        assert_relative_eq!(s.norm_of(&[1.0, 1.0, 1.0]), expected, max_relative = 1e-15);
    }

    #[test]
    fn flat_extremes() {
        let l1 = TowerSpec::flat(vec![3], Exponent::ONE).unwrap();
        let linf = TowerSpec::flat(vec![3], Exponent::INFINITY).unwrap();
        assert_eq!(l1.norm_of(&[1.0, -2.0, 3.0]), 6.0);
        assert_eq!(linf.norm_of(&[1.0, -5.0, 3.0]), 5.0);
        assert_eq!(l1.conjugate().norm_of(&[2.0, -5.0, 1.0]), 5.0);
        assert_eq!(linf.conjugate().norm_of(&[2.0, -5.0, 1.0]), 8.0);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(TowerSpec::tower(vec![1, 1], vec![Exponent::ONE]).is_err());
        assert!(TowerSpec::tower(vec![1, 0], vec![p(2.0)]).is_err());
        assert!(TowerSpec::tower(vec![1, 1, 1], vec![p(2.0)]).is_err());
        assert!(TowerSpec::flat(vec![], p(2.0)).is_err());
        assert!(Exponent::new(0.5).is_err());
        assert!(Exponent::new(f64::NAN).is_err());
    }

    #[test]
    fn norm_checks_dimension() {
        let s = TowerSpec::flat(vec![2], p(3.0)).unwrap();
        assert_eq!(
            s.norm(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                actual: 1
            })
        );
        assert!(TowerVector::new(Arc::new(s), vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn space_file_parsing() {
        let s = TowerSpec::from_json(r#"{"leaves":[2,2,1],"exponents":[2,3]}"#).unwrap();
        assert_eq!(s.dim(), 5);
        assert_eq!(s.depth(), 3);
        let f = TowerSpec::from_json(r#"{"leaves":[3],"exponents":[],"flat_p":"inf"}"#).unwrap();
        assert_eq!(f.flat_exponent(), Some(Exponent::INFINITY));
        assert!(TowerSpec::from_json(r#"{"leaves":[3]}"#).is_err());
        assert!(TowerSpec::from_json(r#"{"leaves":[1,1],"exponents":[1]}"#).is_err());
        assert!(TowerSpec::from_json(r#"{"leaves":[1,1],"exponents":[2],"bogus":1}"#).is_err());
        let back = TowerSpec::from_file(&s.to_file()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn truncation_preserves_norm_on_subspace() {
        let s = TowerSpec::tower(vec![2, 1, 2], vec![p(1.5), p(4.0)]).unwrap();
        let t = s.truncate(2).unwrap();
        let x = [0.3, -1.2, 0.7];
        let mut full = x.to_vec();
        full.extend([0.0, 0.0]);
        assert_relative_eq!(t.norm_of(&x), s.norm_of(&full), max_relative = 1e-15);
        assert!(s.truncate(0).is_err());
        assert!(s.truncate(4).is_err());
    }

    #[test]
    fn project_example() {
        let s = Arc::new(TowerSpec::flat(vec![1, 1, 1], p(2.0)).unwrap());
        let x = TowerVector::new(s.clone(), vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(project(&x, 2).unwrap().coords(), &[1.0, 2.0, 0.0]);
        assert!(project(&x, 0).is_err());
        assert!(project(&x, 4).is_err());
    }

    #[test]
    fn composite_example_and_domain() {
        let s = Arc::new(TowerSpec::flat(vec![1, 1, 1], p(2.0)).unwrap());
        let x = TowerVector::new(s.clone(), vec![5.0, -2.0, 7.0]).unwrap();
        let q12 = compose_projections(s.clone(), 1, 2).unwrap();
        assert_eq!(q12.apply(&x).unwrap().coords(), &[5.0, 0.0, 0.0]);
        let q11 = compose_projections(s.clone(), 1, 1).unwrap();
        assert_eq!(q11.apply(&x), Err(Error::OutsideDomain { level: 2 }));
        assert!(compose_projections(s.clone(), 2, 2).is_err());
        assert!(compose_projections(s, 1, 0).is_err());
    }

    #[test]
    fn sphere_points_are_unit_and_seeded() {
        let s = Arc::new(TowerSpec::tower(vec![2, 2, 1], vec![p(2.0), p(3.0)]).unwrap());
        for seed in 0..50 {
            let a = random_sphere_point(s.clone(), seed);
            assert!((a.norm() - 1.0).abs() < 1e-12);
            assert_eq!(a, random_sphere_point(s.clone(), seed));
        }
    }

    #[test]
    fn sphere_points_cover_all_orthants() {
        let s = Arc::new(TowerSpec::flat(vec![3], Exponent::ONE).unwrap());
        let mut seen = [false; 8];
        for seed in 0..1000 {
            let x = random_sphere_point(s.clone(), seed);
            let idx = x
                .coords()
                .iter()
                .enumerate()
                .fold(0, |acc, (i, v)| acc | (usize::from(*v > 0.0) << i));
            seen[idx] = true;
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn support_level() {
        let s = Arc::new(TowerSpec::tower(vec![2, 1, 1], vec![p(2.0), p(2.0)]).unwrap());
        let x = TowerVector::new(s.clone(), vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(x.support_level(), 1);
        assert_eq!(TowerVector::zeros(s).support_level(), 0);
    }

    #[test]
    fn extreme_magnitudes_do_not_overflow() {
        let s = TowerSpec::tower(vec![1, 1], vec![p(3.0)]).unwrap();
        let n = s.norm_of(&[1e200, 1e200]);
        assert_relative_eq!(n, 1e200 * 2f64.powf(1.0 / 3.0), max_relative = 1e-14);
        let tiny = s.norm_of(&[1e-200, 0.0]);
        assert_relative_eq!(tiny, 1e-200, max_relative = 1e-14);
    }
}
