use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ordered collection of named tensors. Insertion order is the canonical
/// order used by `flatten`, aggregation and checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet<T> {
    entries: IndexMap<String, Tensor<T>>,
}

/// Gradients share the layout of the parameters they belong to.
pub type GradSet<T> = ParamSet<T>;

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        ParamSet {
            entries: IndexMap::new(),
        }
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.entries.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Schema(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::Schema(format!("missing parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    /// Same names, same shapes, same order.
    pub fn congruent(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((ka, a), (kb, b))| ka == kb && a.shape() == b.shape())
    }

    pub fn check_congruent(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.congruent(other) {
            Ok(())
        } else {
            Err(Error::dim(op, "parameter sets differ in names or shapes"))
        }
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_values());
        for t in self.entries.values() {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Rebuilds a set with this set's layout from a flat vector.
    pub fn unflatten(&self, flat: &[T]) -> Result<Self> {
        if flat.len() != self.num_values() {
            return Err(Error::dim(
                "unflatten",
                format!("expected {} values, got {}", self.num_values(), flat.len()),
            ));
        }
        let mut offset = 0;
        let mut entries = IndexMap::with_capacity(self.entries.len());
        for (k, t) in &self.entries {
            let n = t.len();
            entries.insert(
                k.clone(),
                Tensor::new(t.shape().to_vec(), flat[offset..offset + n].to_vec())?,
            );
            offset += n;
        }
        Ok(ParamSet { entries })
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, scale: T) -> Result<()> {
        self.check_congruent(other, "add_scaled")?;
        for ((_, a), (_, b)) in self.entries.iter_mut().zip(&other.entries) {
            a.add_scaled(b, scale)?;
        }
        Ok(())
    }

    /// `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.add_scaled(other, -T::one())?;
        Ok(out)
    }

    pub fn scale(&mut self, s: T) {
        for t in self.entries.values_mut() {
            t.scale(s);
        }
    }

    /// Name of the first tensor holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, t)| !t.is_finite())
            .map(|(k, _)| k.as_str())
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(k, t)| (k.clone(), t.cast()))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout(a: usize, b: usize, c: usize) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::zeros(&[a, b]));
        p.insert("b", Tensor::zeros(&[c]));
        p
    }

    proptest! {
        #[test]
        fn flatten_unflatten_is_identity(
            a in 1usize..5, b in 1usize..5, c in 1usize..6,
            seed in proptest::collection::vec(-1e6f64..1e6, 60)
        ) {
            let template = layout(a, b, c);
            let flat: Vec<f64> = seed.iter().cycle().take(template.num_values()).copied().collect();
            let p = template.unflatten(&flat).unwrap();
            prop_assert_eq!(p.flatten(), flat);
            let again = p.unflatten(&p.flatten()).unwrap();
            prop_assert_eq!(again, p);
        }
    }

    #[test]
    fn unflatten_rejects_wrong_length() {
        assert!(layout(2, 2, 2).unflatten(&[0.0; 5]).is_err());
    }

    #[test]
    fn congruence_checks_names_and_order() {
        let a = layout(2, 3, 4);
        let mut b = ParamSet::new();
        b.insert("b", Tensor::zeros(&[4]));
        b.insert("w", Tensor::zeros(&[2, 3]));
        assert!(a.congruent(&a.zeros_like()));
        assert!(!a.congruent(&b));
    }
}
