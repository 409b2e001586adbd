use std::collections::HashMap;

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Ordered, uniquely named collection of tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T> {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor<T>>,
    lookup: HashMap<String, usize>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, t: Tensor<T>) -> Result<usize> {
        if self.lookup.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        self.names.push(name.to_string());
        self.tensors.push(t);
        let idx = self.tensors.len() - 1;
        self.lookup.insert(name.to_string(), idx);
        Ok(idx)
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.lookup
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.tensors[self.index(name)?])
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        let i = self.index(name)?;
        Ok(&mut self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = Self::new();
        for (n, t) in self.iter() {
            out.insert(n, Tensor::zeros(&t.dims)).expect("names unique");
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        let mut out = ParamSet::new();
        for (n, t) in self.iter() {
            out.insert(n, t.cast()).expect("names unique");
        }
        out
    }

    pub fn same_shapes(&self, other: &ParamSet<T>) -> bool {
        self.names == other.names
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.dims == b.dims)
    }

    pub fn fill_zero(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::fill_zero);
    }

    pub fn add_assign(&mut self, other: &ParamSet<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, k: T) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    /// Copy of the tensors whose names start with `prefix`, with the prefix stripped.
    pub fn strip_prefix(&self, prefix: &str) -> Self {
        let mut out = Self::new();
        for (n, t) in self.iter() {
            if let Some(rest) = n.strip_prefix(prefix) {
                out.insert(rest, t.clone()).expect("names unique");
            }
        }
        out
    }

    pub fn extend_prefixed(&mut self, prefix: &str, other: &ParamSet<T>) -> Result<()> {
        for (n, t) in other.iter() {
            self.insert(&format!("{prefix}{n}"), t.clone())?;
        }
        Ok(())
    }
}
