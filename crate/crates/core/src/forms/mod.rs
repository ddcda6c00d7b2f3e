//! Differential forms with regularity bookkeeping.
//!
//! A `ZonedForm` of degree k stores one constructible coefficient per
//! strictly increasing multi-index, a home region, an optional C^1-zone,
//! and optionally its extended derivative once that has been computed and
//! certified. Forms are immutable; attaching a derivative produces a new
//! value.
//!
//! Sign convention, fixed once and used by every module downstream
//! (fiber integration and quadrature included): wedging `dx_i` into an
//! increasing multi-index J contributes the parity sign of the number of
//! indices in J below i, i.e. `dx_i ^ dx^J = (-1)^{#{j in J : j < i}}
//! dx^{J u {i}}`.

mod derivative;
mod json;
mod pullback;

pub use derivative::{
    extended_d, raw_d, with_extended_d, DExtension, DerivativeError, ExtendOpts,
    RegularityVerdict, Verification,
};
pub(crate) use derivative::seam_points;
pub use json::{form_from_json, form_to_json};
pub use pullback::{increasing_indices, pullback, PullbackError};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::expr::{DomainError, EqOpts, EqVerdict, ScalarExpr, SemiCondition, Zone};
use crate::geometry::Region;
use crate::sample::{Sampler, SamplingError};

/// Strictly increasing list of 0-based coordinate indices.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn empty() -> Self {
        MultiIndex(Vec::new())
    }

    /// From strictly increasing indices; `None` otherwise.
    pub fn new(indices: Vec<usize>) -> Option<Self> {
        if indices.windows(2).all(|w| w[0] < w[1]) {
            Some(MultiIndex(indices))
        } else {
            None
        }
    }

    pub fn single(i: usize) -> Self {
        MultiIndex(vec![i])
    }

    pub fn pair(i: usize, j: usize) -> Option<Self> {
        MultiIndex::new(vec![i, j])
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.0.last().copied()
    }

    /// `dx_i ^ dx^J` reordered into increasing position: the new index and
    /// the parity sign, or `None` when `i` already occurs.
    pub fn wedge_insert(&self, i: usize) -> Option<(MultiIndex, i32)> {
        match self.0.binary_search(&i) {
            Ok(_) => None,
            Err(pos) => {
                let mut v = self.0.clone();
                v.insert(pos, i);
                let sign = if pos % 2 == 0 { 1 } else { -1 };
                Some((MultiIndex(v), sign))
            }
        }
    }

    /// Write `dx^J = sign * dx_i ^ dx^{J \ i}`; `None` when `i` is absent.
    pub fn extract(&self, i: usize) -> Option<(MultiIndex, i32)> {
        match self.0.binary_search(&i) {
            Err(_) => None,
            Ok(pos) => {
                let mut v = self.0.clone();
                v.remove(pos);
                let sign = if pos % 2 == 0 { 1 } else { -1 };
                Some((MultiIndex(v), sign))
            }
        }
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| format!("{}", i + 1)).collect();
        write!(f, "{}", parts.join(","))
    }
}

#[derive(Clone, Debug, thiserror::Error, PartialEq)]
pub enum FormError {
    #[error("multi-index {index} does not match form degree {degree}")]
    DegreeMismatch { index: String, degree: usize },
    #[error("multi-index {index} exceeds ambient dimension {dim}")]
    IndexOutOfRange { index: String, dim: usize },
    #[error("a degree-{degree} form needs no coefficients above dimension {dim}")]
    DegreeAboveDimension { degree: usize, dim: usize },
    #[error("coefficient for {index} leaves the constructible class: {source}")]
    Coefficient {
        index: String,
        source: crate::expr::GrammarError,
    },
    #[error("restriction target is not contained in the form's region (sampled)")]
    NotASubset,
    #[error("ambient dimension mismatch: form has {form_dim}, got {other_dim}")]
    DimensionMismatch { form_dim: usize, other_dim: usize },
}

/// Degree-k form with constructible coefficients on a region.
#[derive(Clone, Debug)]
pub struct ZonedForm {
    dim: usize,
    degree: usize,
    regularity: u32,
    coeffs: BTreeMap<MultiIndex, ScalarExpr>,
    region: Region,
    zone: Option<Zone>,
    derivative: Option<Arc<ZonedForm>>,
}

impl ZonedForm {
    pub fn new(
        dim: usize,
        degree: usize,
        regularity: u32,
        region: Region,
        coeffs: Vec<(MultiIndex, ScalarExpr)>,
    ) -> Result<ZonedForm, FormError> {
        if degree > dim && !coeffs.is_empty() {
            return Err(FormError::DegreeAboveDimension { degree, dim });
        }
        let mut table = BTreeMap::new();
        for (idx, c) in coeffs {
            if idx.degree() != degree {
                return Err(FormError::DegreeMismatch {
                    index: idx.to_string(),
                    degree,
                });
            }
            if idx.max_index().is_some_and(|m| m >= dim) {
                return Err(FormError::IndexOutOfRange {
                    index: idx.to_string(),
                    dim,
                });
            }
            c.validate_constructible().map_err(|source| FormError::Coefficient {
                index: idx.to_string(),
                source,
            })?;
            if c.is_zero_symbolic() {
                continue;
            }
            let entry = table.entry(idx).or_insert_with(|| ScalarExpr::int(0));
            *entry = entry.add(&c).normalized();
        }
        table.retain(|_, c| !c.is_zero_literal());
        Ok(ZonedForm {
            dim,
            degree,
            regularity,
            coeffs: table,
            region,
            zone: None,
            derivative: None,
        })
    }

    pub fn zero(dim: usize, degree: usize, regularity: u32, region: Region) -> ZonedForm {
        ZonedForm {
            dim,
            degree,
            regularity,
            coeffs: BTreeMap::new(),
            region,
            zone: None,
            derivative: None,
        }
    }

    /// 0-form from a scalar expression.
    pub fn scalar(dim: usize, regularity: u32, region: Region, value: ScalarExpr) -> ZonedForm {
        ZonedForm::new(dim, 0, regularity, region, vec![(MultiIndex::empty(), value)])
            .expect("scalar form is always well-formed")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn regularity(&self) -> u32 {
        self.regularity
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn zone(&self) -> Option<&Zone> {
        self.zone.as_ref()
    }

    pub fn cached_derivative(&self) -> Option<&ZonedForm> {
        self.derivative.as_deref()
    }

    pub fn coeffs(&self) -> &BTreeMap<MultiIndex, ScalarExpr> {
        &self.coeffs
    }

    pub fn coeff(&self, idx: &MultiIndex) -> ScalarExpr {
        self.coeffs
            .get(idx)
            .cloned()
            .unwrap_or_else(|| ScalarExpr::int(0))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn with_zone(mut self, zone: Zone) -> ZonedForm {
        self.zone = Some(zone);
        self
    }

    /// Attach a certified derivative (create-once: a new form value).
    pub fn with_derivative(mut self, eta: ZonedForm) -> ZonedForm {
        self.derivative = Some(Arc::new(eta));
        self
    }

    pub fn with_regularity(mut self, q: u32) -> ZonedForm {
        self.regularity = q;
        self
    }

    pub fn map_coeffs(
        &self,
        mut f: impl FnMut(&MultiIndex, &ScalarExpr) -> ScalarExpr,
    ) -> ZonedForm {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(idx, c)| (idx.clone(), f(idx, c)))
            .collect();
        ZonedForm::new(self.dim, self.degree, self.regularity, self.region.clone(), coeffs)
            .expect("mapped coefficients keep the shape")
    }

    pub fn add(&self, other: &ZonedForm) -> ZonedForm {
        assert_eq!(self.dim, other.dim);
        assert_eq!(self.degree, other.degree);
        let mut coeffs: Vec<(MultiIndex, ScalarExpr)> = self
            .coeffs
            .iter()
            .map(|(i, c)| (i.clone(), c.clone()))
            .collect();
        coeffs.extend(other.coeffs.iter().map(|(i, c)| (i.clone(), c.clone())));
        ZonedForm::new(
            self.dim,
            self.degree,
            self.regularity.min(other.regularity),
            self.region.clone(),
            coeffs,
        )
        .expect("sum of compatible forms")
    }

    pub fn scale(&self, c: &ScalarExpr) -> ZonedForm {
        self.map_coeffs(|_, a| a.mul(c).normalized())
    }

    pub fn negate(&self) -> ZonedForm {
        self.scale(&ScalarExpr::int(-1))
    }

    pub fn sub(&self, other: &ZonedForm) -> ZonedForm {
        self.add(&other.negate())
    }

    /// Numeric coefficient vector at a point (absent indices are zero).
    pub fn eval_coeff(&self, idx: &MultiIndex, x: &[f64]) -> Result<f64, DomainError> {
        match self.coeffs.get(idx) {
            Some(c) => c.eval(x),
            None => Ok(0.0),
        }
    }

    /// Restriction to a subregion (checked by sampling): same coefficients,
    /// region replaced, zone reference intersected, cached derivative
    /// restricted along.
    pub fn restrict(
        &self,
        target: &Region,
        sampler: &mut Sampler,
    ) -> Result<ZonedForm, FormError> {
        if target.dim() != self.dim {
            return Err(FormError::DimensionMismatch {
                form_dim: self.dim,
                other_dim: target.dim(),
            });
        }
        if !target.subset_sampled(&self.region, sampler, 64) {
            return Err(FormError::NotASubset);
        }
        let mut out = self.clone();
        out.region = target.clone();
        out.zone = self.zone.as_ref().map(|z| Zone {
            dim: z.dim,
            condition: z.condition.clone(),
            reference: target.clone(),
        });
        out.derivative = match &self.derivative {
            Some(d) => Some(Arc::new(d.restrict(target, sampler)?)),
            None => None,
        };
        Ok(out)
    }

    pub fn contains_irrational(&self) -> bool {
        self.coeffs.values().any(|c| c.contains_irrational())
    }
}

/// Componentwise comparison over a region: the weakest component verdict
/// wins (distinct beats numeric beats symbolic).
pub fn equal_forms(
    a: &ZonedForm,
    b: &ZonedForm,
    region: &Region,
    opts: &EqOpts,
) -> Result<EqVerdict, SamplingError> {
    assert_eq!(a.dim(), b.dim(), "form dimension mismatch");
    assert_eq!(a.degree(), b.degree(), "form degree mismatch");
    let mut indices: Vec<MultiIndex> = a.coeffs.keys().cloned().collect();
    for idx in b.coeffs.keys() {
        if !a.coeffs.contains_key(idx) {
            indices.push(idx.clone());
        }
    }
    let mut weakest = EqVerdict::SymbolicEqual;
    for idx in indices {
        let v = crate::expr::equal(&a.coeff(&idx), &b.coeff(&idx), region, opts)?;
        match v {
            EqVerdict::Distinct { .. } => return Ok(v),
            EqVerdict::NumericEqual { .. } => weakest = v,
            EqVerdict::SymbolicEqual => {}
        }
    }
    Ok(weakest)
}

/// Definable map between open regions, given by component expressions.
#[derive(Clone, Debug)]
pub struct SmoothMap {
    source_dim: usize,
    target_dim: usize,
    components: Vec<ScalarExpr>,
    source: Region,
    /// Declared smoothness order; `None` means "as smooth as the grammar".
    pub declared_regularity: Option<u32>,
}

impl SmoothMap {
    pub fn new(
        source_dim: usize,
        target_dim: usize,
        components: Vec<ScalarExpr>,
        source: Region,
    ) -> SmoothMap {
        assert_eq!(components.len(), target_dim, "component count mismatch");
        assert_eq!(source.dim(), source_dim, "source region dimension mismatch");
        SmoothMap {
            source_dim,
            target_dim,
            components,
            source,
            declared_regularity: None,
        }
    }

    pub fn identity(region: Region) -> SmoothMap {
        let n = region.dim();
        SmoothMap::new(n, n, (0..n).map(ScalarExpr::var).collect(), region)
    }

    pub fn constant(region: Region, values: Vec<ScalarExpr>) -> SmoothMap {
        let n = region.dim();
        let m = values.len();
        SmoothMap::new(n, m, values, region)
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn components(&self) -> &[ScalarExpr] {
        &self.components
    }

    pub fn source(&self) -> &Region {
        &self.source
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, DomainError> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }

    /// `self` after `inner` (usual composition order).
    pub fn compose(&self, inner: &SmoothMap) -> Option<SmoothMap> {
        if inner.target_dim != self.source_dim {
            return None;
        }
        let components = self
            .components
            .iter()
            .map(|c| c.substitute(&inner.components).ok())
            .collect::<Option<Vec<_>>>()?;
        Some(SmoothMap {
            source_dim: inner.source_dim,
            target_dim: self.target_dim,
            components,
            source: inner.source.clone(),
            declared_regularity: match (self.declared_regularity, inner.declared_regularity) {
                (Some(p), Some(q)) => Some(p.min(q)),
                _ => None,
            },
        })
    }

    /// Symbolic partial `d(component j) / d(x_{i+1})`, normalized.
    pub fn jacobian_entry(&self, j: usize, i: usize) -> ScalarExpr {
        crate::expr::differentiate(&self.components[j], i).0
    }

    /// Conjunction of the component smoothness conditions.
    pub fn c1_condition(&self) -> SemiCondition {
        SemiCondition::and(
            self.components
                .iter()
                .map(crate::expr::smoothness_condition)
                .collect(),
        )
        .normalized()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wedge_insert_signs() {
        let j = MultiIndex::pair(0, 2).unwrap();
        let (full, sign) = j.wedge_insert(1).unwrap();
        assert_eq!(full.indices(), &[0, 1, 2]);
        assert_eq!(sign, -1);
        assert!(j.wedge_insert(2).is_none());
        let (_, sign0) = j.wedge_insert(3).unwrap();
        assert_eq!(sign0, 1);
    }

    #[test]
    fn extract_is_inverse_to_insert() {
        let j = MultiIndex::new(vec![0, 1, 3]).unwrap();
        let (rest, s) = j.extract(1).unwrap();
        let (back, s2) = rest.wedge_insert(1).unwrap();
        assert_eq!(back, j);
        assert_eq!(s * s2, 1);
    }

    #[test]
    fn zero_coefficients_are_pruned() {
        let region = Region::full_space(2);
        let f = ZonedForm::new(
            2,
            1,
            0,
            region,
            vec![
                (MultiIndex::single(0), ScalarExpr::var(0).sub(&ScalarExpr::var(0))),
                (MultiIndex::single(1), ScalarExpr::int(1)),
            ],
        )
        .unwrap();
        assert_eq!(f.coeffs().len(), 1);
    }

    #[test]
    fn degree_above_dimension_needs_empty_table() {
        let region = Region::full_space(1);
        assert!(ZonedForm::new(
            1,
            2,
            0,
            region.clone(),
            vec![(MultiIndex::pair(0, 1).unwrap(), ScalarExpr::int(1))]
        )
        .is_err());
        assert!(ZonedForm::zero(1, 2, 0, region).is_zero());
    }

    #[test]
    fn restrict_requires_subset() {
        let mut s = Sampler::new(5);
        let f = ZonedForm::scalar(1, 0, Region::interval(0.0, 1.0), ScalarExpr::var(0));
        assert!(f.restrict(&Region::interval(0.25, 0.75), &mut s).is_ok());
        assert_eq!(
            f.restrict(&Region::interval(0.0, 2.0), &mut s).unwrap_err(),
            FormError::NotASubset
        );
    }
}
