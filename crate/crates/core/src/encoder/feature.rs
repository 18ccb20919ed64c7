use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance on `|z| = 1` for emitted features.
pub const UNIT_TOL: f64 = 1e-6;

/// A unit-L2-norm embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature(Vec<f64>);

impl Feature {
    /// Normalizes `v`; zero vectors are rejected.
    pub fn normalized(v: &[f64]) -> Result<Self> {
        Ok(Feature(linalg::normalize(v)?.0))
    }

    /// Wraps a vector that must already be unit norm.
    pub fn from_unit(v: Vec<f64>) -> Result<Self> {
        let n = linalg::norm(&v);
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotNormalized(n));
        }
        Ok(Feature(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &Feature) -> f64 {
        linalg::dot(&self.0, &other.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Ordered sub-clip features `(q^1, ..., q^S)`, in temporal order of the
/// sub-clips they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct DualRep {
    pub parts: Vec<Feature>,
}

impl DualRep {
    pub fn new(parts: Vec<Feature>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::shape("dual representation needs at least one part"));
        }
        let d = parts[0].dim();
        if parts.iter().any(|p| p.dim() != d) {
            return Err(Error::shape("dual representation parts differ in dimension"));
        }
        Ok(Self { parts })
    }

    pub fn segments(&self) -> usize {
        self.parts.len()
    }

    pub fn dim(&self) -> usize {
        self.parts[0].dim()
    }

    /// Reorders parts of a shuffled clip's representation back to canonical
    /// segment order: part `j` of the shuffled clip belongs to segment `order[j]`.
    pub fn unpermute(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.parts.len() {
            return Err(Error::shape(format!("permutation of length {} for {} parts", order.len(), self.parts.len())));
        }
        let mut parts: Vec<Option<Feature>> = vec![None; order.len()];
        for (j, &seg) in order.iter().enumerate() {
            let slot = parts.get_mut(seg).ok_or_else(|| Error::shape(format!("segment index {seg} out of range")))?;
            *slot = Some(self.parts[j].clone());
        }
        let parts = parts
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::shape("permutation is not a bijection"))?;
        Ok(Self { parts })
    }
}
