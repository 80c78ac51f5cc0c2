use serde::{Deserialize, Serialize};

use crate::diffgraph::{Graph, Scalar, Tensor, Var};
use crate::error::{Error, Result};

/// Named trainable tensors, in registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

/// Shape listing used to validate checkpoints against an architecture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor and returns its slot.
    pub fn add(&mut self, name: impl Into<String>, t: Tensor<T>) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, slot: usize) -> &Tensor<T> {
        &self.tensors[slot]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.slot(name).map(|i| &self.tensors[i])
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// All values concatenated in registration order.
    pub fn flatten(&self) -> Vec<T> {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter().copied())
            .collect()
    }

    /// Rebuilds a store from `specs` and a flat buffer laid out as [`Self::flatten`].
    pub fn unflatten(specs: &[ParamSpec], flat: &[T]) -> Result<Self> {
        let total: usize = specs
            .iter()
            .map(|s| s.shape.iter().product::<usize>())
            .sum();
        if total != flat.len() {
            return Err(Error::Data(format!(
                "expected {total} parameter values, found {}",
                flat.len()
            )));
        }
        let mut store = ParamStore::new();
        let mut at = 0;
        for s in specs {
            let n: usize = s.shape.iter().product();
            store.add(
                s.name.clone(),
                Tensor::new(s.shape.clone(), flat[at..at + n].to_vec()),
            );
            at += n;
        }
        Ok(store)
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        self.names
            .iter()
            .zip(&self.tensors)
            .map(|(n, t)| ParamSpec {
                name: n.clone(),
                shape: t.shape.clone(),
            })
            .collect()
    }

    /// Adds every parameter to `g` as a differentiable leaf.
    pub fn bind(&self, g: &mut Graph<T>) -> Vec<Var> {
        self.tensors.iter().map(|t| g.param(t.clone())).collect()
    }

    /// Replaces the stored values with `other`'s, checking names and shapes.
    pub fn load_from(&mut self, other: ParamStore<T>) -> Result<()> {
        if self.specs() != other.specs() {
            return Err(Error::Data(
                "parameter names or shapes do not match the architecture".into(),
            ));
        }
        self.tensors = other.tensors;
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }
}
