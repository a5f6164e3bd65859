//! Named, ordered parameter collections.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// What a parameter set parametrises.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    /// Dataset-specific extractor for dataset `i` (1-based).
    Extractor(usize),
    /// Extractor trained on the union of all datasets.
    ExtractorStar,
    /// Extractor rebuilt at test time from a composition expression.
    Composed,
    TaskHead,
    /// Gradients or other derived values.
    Derived,
}

impl Role {
    pub fn is_extractor(&self) -> bool {
        matches!(self, Role::Extractor(_) | Role::ExtractorStar | Role::Composed)
    }
}

/// The kind of layer parameter an entry holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    ConvKernel,
    ConvBias,
    NormScale,
    NormShift,
    LinearWeight,
    LinearBias,
}

impl ParamKind {
    /// Only convolution parameters take part in aggregation.
    pub fn is_aggregable(self) -> bool {
        matches!(self, ParamKind::ConvKernel | ParamKind::ConvBias)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub tensor: Tensor,
    pub kind: ParamKind,
    pub aggregable: bool,
}

impl ParamEntry {
    pub fn new(tensor: Tensor, kind: ParamKind) -> Self {
        ParamEntry { tensor, kind, aggregable: kind.is_aggregable() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    role: Role,
    entries: IndexMap<String, ParamEntry>,
}

impl ParamSet {
    pub fn new(role: Role) -> Self {
        ParamSet { role, entries: IndexMap::new() }
    }

    pub fn role(&self) -> &Role {
        &self.role
    }

    pub fn set_role(&mut self, role: Role) {
        self.role = role;
    }

    pub fn insert(&mut self, key: impl Into<String>, entry: ParamEntry) {
        self.entries.insert(key.into(), entry);
    }

    pub fn get(&self, key: &str) -> Option<&ParamEntry> {
        self.entries.get(key)
    }

    pub fn get_mut(&mut self, key: &str) -> Option<&mut ParamEntry> {
        self.entries.get_mut(key)
    }

    pub fn tensor(&self, key: &str) -> Result<&Tensor> {
        self.entries
            .get(key)
            .map(|e| &e.tensor)
            .ok_or_else(|| Error::shape(format!("parameter `{key}` missing from {:?} set", self.role)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamEntry)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn aggregable_keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(|(_, e)| e.aggregable).map(|(k, _)| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|e| e.tensor.len()).sum()
    }

    /// A copy holding only the aggregable entries.
    pub fn aggregable_only(&self) -> ParamSet {
        ParamSet {
            role: self.role.clone(),
            entries: self.entries.iter().filter(|(_, e)| e.aggregable).map(|(k, e)| (k.clone(), e.clone())).collect(),
        }
    }

    /// A same-layout set filled with zeros.
    pub fn zeros_like(&self, role: Role) -> ParamSet {
        ParamSet {
            role,
            entries: self
                .entries
                .iter()
                .map(|(k, e)| {
                    let t = Tensor::zeros(e.tensor.shape());
                    (k.clone(), ParamEntry { tensor: t, kind: e.kind, aggregable: e.aggregable })
                })
                .collect(),
        }
    }

    /// Keys, shapes and aggregable flags agree, in order.
    pub fn check_compatible(&self, other: &ParamSet) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::shape(format!(
                "parameter sets differ in size: {} vs {} entries",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for ((ka, ea), (kb, eb)) in self.entries.iter().zip(&other.entries) {
            if ka != kb {
                return Err(Error::shape(format!("parameter key mismatch: `{ka}` vs `{kb}`")));
            }
            if ea.tensor.shape() != eb.tensor.shape() {
                return Err(Error::shape(format!(
                    "parameter `{ka}` shape mismatch: {:?} vs {:?}",
                    ea.tensor.shape(),
                    eb.tensor.shape()
                )));
            }
            if ea.aggregable != eb.aggregable {
                return Err(Error::shape(format!("parameter `{ka}` aggregable flag mismatch")));
            }
        }
        Ok(())
    }

    /// Accumulate `grads` (same layout) into `self`.
    pub fn accumulate(&mut self, grads: &ParamSet) -> Result<()> {
        self.check_compatible(grads)?;
        for (a, b) in self.entries.values_mut().zip(grads.entries.values()) {
            a.tensor.add_assign(&b.tensor)?;
        }
        Ok(())
    }

    /// Plain gradient descent: `p <- p - lr * g` for every entry.
    pub fn sgd_step(&mut self, grads: &ParamSet, lr: f32) -> Result<()> {
        self.check_compatible(grads)?;
        for (p, g) in self.entries.values_mut().zip(grads.entries.values()) {
            for (w, d) in p.tensor.data_mut().iter_mut().zip(g.tensor.data()) {
                *w -= lr * d;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.entries.values().all(|e| e.tensor.is_finite())
    }
}

/// Functional form of [`ParamSet::sgd_step`].
pub fn sgd_step(params: &ParamSet, grads: &ParamSet, lr: f32) -> Result<ParamSet> {
    let mut out = params.clone();
    out.sgd_step(grads, lr)?;
    Ok(out)
}
