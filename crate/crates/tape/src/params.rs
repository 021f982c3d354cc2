use std::collections::BTreeMap;
use std::sync::Arc;

use crate::{Scalar, Tensor};

/// Named parameter tensors, iterated in name order.
///
/// Names are dotted paths (`enc.down0.w`); the first segment is the
/// parameter group used by [`Graph::with_trainable`](crate::Graph::with_trainable).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    tensors: BTreeMap<String, Arc<Tensor<T>>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    /// Inserts or replaces a parameter.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.tensors.insert(name.into(), Arc::new(value));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name).map(|t| t.as_ref())
    }

    pub(crate) fn get_arc(&self, name: &str) -> Option<Arc<Tensor<T>>> {
        self.tensors.get(name).cloned()
    }

    /// Mutable access; copies the tensor only if a live graph still shares it.
    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name).map(Arc::make_mut)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v.as_ref()))
    }

    /// Total scalar count across all parameters.
    pub fn num_elements(&self) -> usize {
        self.tensors.values().map(|t| t.numel()).sum()
    }

    /// Parameters in group `prefix` (names starting with `prefix.`).
    pub fn group<'a>(
        &'a self,
        prefix: &'a str,
    ) -> impl Iterator<Item = (&'a str, &'a Tensor<T>)> + 'a {
        self.iter().filter(move |(k, _)| {
            k.strip_prefix(prefix)
                .is_some_and(|rest| rest.starts_with('.'))
        })
    }

    /// Element-type conversion of every parameter.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Arc::new(v.cast::<U>())))
                .collect(),
        }
    }
}
